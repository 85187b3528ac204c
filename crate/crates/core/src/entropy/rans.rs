//! Byte-renormalized rANS with a 32-bit state and caller-supplied tables.

use crate::error::{invalid, Error, Result};

use super::FrequencyTable;

/// Lower bound of the normalized state interval `[L, 256 L)`.
pub const RANS_L: u32 = 1 << 16;

/// An encoded symbol sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RansStream {
    pub symbol_count: u32,
    pub final_state: u32,
    pub payload: Vec<u8>,
    pub precision: u32,
}

impl RansStream {
    /// Bits needed to decode given the symbol count: final state plus payload.
    pub fn coded_bits(&self) -> u64 {
        (4 + self.payload.len() as u64) * 8
    }

    /// Serialized layout: `u32` symbol count, `u32` final state, payload (all little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.payload.len());
        out.extend_from_slice(&self.symbol_count.to_le_bytes());
        out.extend_from_slice(&self.final_state.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8], precision: u32) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                expected_bits: 64,
                actual_bits: bytes.len() as u64 * 8,
            });
        }
        Ok(Self {
            symbol_count: u32::from_le_bytes(bytes[0..4].try_into().unwrap()),
            final_state: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            payload: bytes[8..].to_vec(),
            precision,
        })
    }
}

fn uniform_precision(tables: &[FrequencyTable]) -> Result<u32> {
    let p = tables.first().map_or(16, |t| t.precision());
    if tables.iter().any(|t| t.precision() != p) {
        return Err(invalid("all tables in a stream must share one precision"));
    }
    Ok(p)
}

/// Encodes `symbols[i]` with `tables[i]`. Symbols are pushed in reverse so
/// the decoder runs forward.
pub fn rans_encode(symbols: &[usize], tables: &[FrequencyTable]) -> Result<RansStream> {
    if symbols.len() != tables.len() {
        return Err(invalid(format!(
            "{} symbols but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    let precision = uniform_precision(tables)?;
    rans_encode_with(symbols, precision, |i| Ok(std::borrow::Cow::Borrowed(&tables[i])))
}

/// Like [`rans_encode`], but builds each table on demand so only one is alive at a time.
pub fn rans_encode_with<'a, F>(symbols: &[usize], precision: u32, mut table_for: F) -> Result<RansStream>
where
    F: FnMut(usize) -> Result<std::borrow::Cow<'a, FrequencyTable>>,
{
    let count = u32::try_from(symbols.len()).map_err(|_| invalid("too many symbols"))?;
    let mut state = RANS_L;
    let mut out = Vec::new();
    for (i, &s) in symbols.iter().enumerate().rev() {
        let table = table_for(i)?;
        if table.precision() != precision {
            return Err(invalid("all tables in a stream must share one precision"));
        }
        if s >= table.len() || table.freq(s) == 0 {
            return Err(invalid(format!("symbol {s} at position {i} has zero frequency")));
        }
        let freq = table.freq(s);
        let start = table.start(s);
        let x_max = ((RANS_L >> precision) << 8) * freq;
        while state >= x_max {
            out.push(state as u8);
            state >>= 8;
        }
        state = ((state / freq) << precision) + (state % freq) + start;
    }
    out.reverse();
    Ok(RansStream {
        symbol_count: count,
        final_state: state,
        payload: out,
        precision,
    })
}

/// Decodes `stream` with the same table sequence used to encode it.
pub fn rans_decode(stream: &RansStream, tables: &[FrequencyTable]) -> Result<Vec<usize>> {
    if stream.symbol_count as usize != tables.len() {
        return Err(invalid(format!(
            "stream holds {} symbols but {} tables were supplied",
            stream.symbol_count,
            tables.len()
        )));
    }
    uniform_precision(tables)?;
    let mut decoder = RansDecoder::new(stream);
    let out = tables.iter().map(|t| decoder.decode(t)).collect::<Result<Vec<_>>>()?;
    decoder.finish()?;
    Ok(out)
}

/// Incremental decoder; the caller supplies each symbol's table in order.
///
/// Lets context-adaptive models build table `i` only after symbol `i - 1`
/// has been decoded.
#[derive(Debug)]
pub struct RansDecoder<'a> {
    state: u32,
    bytes: std::slice::Iter<'a, u8>,
    precision: u32,
    remaining: u32,
}

impl<'a> RansDecoder<'a> {
    pub fn new(stream: &'a RansStream) -> Self {
        Self {
            state: stream.final_state,
            bytes: stream.payload.iter(),
            precision: stream.precision,
            remaining: stream.symbol_count,
        }
    }

    pub fn decode(&mut self, table: &FrequencyTable) -> Result<usize> {
        if self.remaining == 0 {
            return Err(Error::Format {
                what: "rANS stream",
                detail: "no symbols left".into(),
            });
        }
        if table.precision() != self.precision {
            return Err(invalid("table precision differs from stream precision"));
        }
        let precision = self.precision;
        let mask = (1u32 << precision) - 1;
        let mut state = self.state;
        let slot = state & mask;
        let s = table.symbol_for(slot);
        state = table.freq(s) * (state >> precision) + slot - table.start(s);
        while state < RANS_L {
            let b = *self.bytes.next().ok_or_else(|| Error::Format {
                what: "rANS stream",
                detail: "payload exhausted".into(),
            })?;
            state = (state << 8) | b as u32;
        }
        self.state = state;
        self.remaining -= 1;
        Ok(s)
    }

    /// Checks that the stream was consumed exactly.
    pub fn finish(mut self) -> Result<()> {
        if self.remaining != 0 || self.state != RANS_L || self.bytes.next().is_some() {
            return Err(Error::Format {
                what: "rANS stream",
                detail: "did not end in the initial state".into(),
            });
        }
        Ok(())
    }
}
