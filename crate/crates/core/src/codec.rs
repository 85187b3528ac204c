//! Whole-image stream files for a trained model.
//!
//! RD and IQ streams are `EFBS` files (see [`crate::bitstream`]). CM streams
//! use an `EFCM` container:
//!
//! ```text
//! | "EFCM" | version u8 | header 4 bytes | delta f64 | precision u8 |
//! | hyper payload: u32 byte count, packed indices | 4 x (u32 byte count, rANS stream) |
//! ```
//!
//! Integers are little-endian apart from the header and the packed indices,
//! which are MSB-first as in `EFBS`.

use std::io::{Read, Write};
use std::time::Instant;

use crate::bitstream::{
    pack, read_bitstream, unpack, write_bitstream, BitReader, BitWriter, StreamHeader, StreamLayout, F_Y,
};
use crate::decorrelation::{
    cm_decode_timed, encode, iq_decode_indices, rd_decode_indices, CodedLatent, Decoded, Scheme, SchemeConfig,
    TrainedModel,
};
use crate::entropy::RansStream;
use crate::error::{invalid, Error, Result};
use crate::latent::{LatentGrid, NUM_GROUPS};
use crate::quantizer::{IndexStack, QuantizerSet, ResidualVQ};
use crate::scalar::Scalar;

const CM_MAGIC: &[u8; 4] = b"EFCM";
const CM_VERSION: u8 = 1;

/// An encoded image: the file bytes and the in-memory coding result.
#[derive(Debug, Clone)]
pub struct EncodedStream<T> {
    pub bytes: Vec<u8>,
    pub coded: CodedLatent<T>,
}

impl<T: Scalar> EncodedStream<T> {
    /// Image-domain size the header records.
    pub fn image_size(&self) -> (usize, usize) {
        let (_, h, w) = self.coded.shape;
        (h * F_Y, w * F_Y)
    }

    /// Whole file size per image pixel.
    pub fn file_bpp(&self) -> f64 {
        let (h, w) = self.image_size();
        self.bytes.len() as f64 * 8.0 / (h * w) as f64
    }
}

fn quantizers<T>(model: &TrainedModel<T>) -> Result<&QuantizerSet<T>> {
    model
        .quantizers
        .as_ref()
        .ok_or_else(|| Error::Mismatch(format!("{} model has no group quantizers", model.config.scheme)))
}

fn header_for(shape: (usize, usize, usize), m: usize) -> Result<StreamHeader> {
    let (_, h, w) = shape;
    if h % 4 != 0 || w % 4 != 0 {
        return Err(invalid(format!("latent size {h}x{w} must be a multiple of 4")));
    }
    StreamHeader::new(h * F_Y, w * F_Y, m)
}

/// Stream layout of an RD or IQ model.
pub fn model_layout<T: Scalar>(model: &TrainedModel<T>) -> Result<StreamLayout> {
    Ok(StreamLayout::from_quantizers(
        quantizers(model)?,
        model.config.hyper_k.is_some() && model.config.scheme == Scheme::Rd,
    ))
}

/// Encodes `latent` at `m` stages (RD/IQ) or with the model's CM step.
pub fn encode_stream<T: Scalar>(model: &TrainedModel<T>, latent: &LatentGrid<T>, m: usize) -> Result<EncodedStream<T>> {
    let header = header_for(latent.shape(), m)?;
    let op = model.config.operating_point(m);
    match model.config.scheme {
        Scheme::Rd | Scheme::Iq => {
            let qset = quantizers(model)?;
            let op = SchemeConfig {
                hyper: op.hyper && op.scheme == Scheme::Rd,
                ..op
            };
            let mut coded = encode(latent, model.predictor.as_ref(), qset, &op)?;
            let t = Instant::now();
            let layout = model_layout(model)?;
            let packed = pack(header, coded.hyper.as_ref(), &coded.groups, &layout)?;
            let mut bytes = Vec::new();
            write_bitstream(&packed, &mut bytes)?;
            coded.timings.pack_ms += elapsed_ms(t);
            Ok(EncodedStream { bytes, coded })
        }
        Scheme::Cm => {
            let predictor = model
                .predictor
                .as_ref()
                .ok_or_else(|| Error::Mismatch("cm model has no predictor".into()))?;
            let mut coded = crate::decorrelation::cm_encode(latent, predictor, model.hyper.as_ref(), &op)?;
            let t = Instant::now();
            let bytes = write_cm(header, &op, &coded, model.hyper.as_ref())?;
            coded.timings.pack_ms += elapsed_ms(t);
            Ok(EncodedStream { bytes, coded })
        }
    }
}

/// Decodes a stream file produced by [`encode_stream`] with the same model.
pub fn decode_stream<T: Scalar>(model: &TrainedModel<T>, bytes: &[u8]) -> Result<Decoded<T>> {
    if bytes.len() >= 4 && &bytes[..4] == CM_MAGIC {
        return decode_cm(model, bytes);
    }
    let t = Instant::now();
    let packed = read_bitstream(bytes)?;
    if model.config.scheme == Scheme::Cm {
        return Err(Error::Mismatch("scheme: EFBS stream given to a cm model".into()));
    }
    let qset = quantizers(model)?;
    let layout = model_layout(model)?;
    let parsed = unpack(&packed, &layout)?;
    let pack_ms = elapsed_ms(t);
    let shape = stream_shape(&packed.header, qset.dim())?;
    let m = packed.header.m();
    let mut decoded = match model.config.scheme {
        Scheme::Rd => {
            let predictor = model
                .predictor
                .as_ref()
                .ok_or_else(|| Error::Mismatch("rd model has no predictor".into()))?;
            rd_decode_indices(shape, m, parsed.hyper.as_ref(), &parsed.groups, predictor, qset)?
        }
        _ => iq_decode_indices(shape, m, &parsed.groups, qset)?,
    };
    decoded.timings.pack_ms += pack_ms;
    Ok(decoded)
}

fn stream_shape(header: &StreamHeader, channels: usize) -> Result<(usize, usize, usize)> {
    let (height, width) = (header.height as usize, header.width as usize);
    if height % (4 * F_Y) != 0 || width % (4 * F_Y) != 0 {
        return Err(Error::Format {
            what: "stream header",
            detail: format!("image size {height}x{width} is not a multiple of {}", 4 * F_Y),
        });
    }
    Ok((channels, height / F_Y, width / F_Y))
}

fn write_cm<T: Scalar>(
    header: StreamHeader,
    op: &SchemeConfig,
    coded: &CodedLatent<T>,
    hyper_q: Option<&ResidualVQ<T>>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_all(CM_MAGIC)?;
    out.write_all(&[CM_VERSION])?;
    out.write_all(&header.to_bytes())?;
    out.write_all(&op.delta.to_le_bytes())?;
    out.write_all(&[op.precision as u8])?;
    let hyper = match (&coded.hyper, hyper_q) {
        (Some(stack), Some(q)) => {
            let mut w = BitWriter::new();
            for (indices, k) in stack.stages().iter().zip(q.ks()) {
                let bits = k.trailing_zeros();
                for &j in indices {
                    w.write(j, bits);
                }
            }
            w.finish()
        }
        _ => Vec::new(),
    };
    out.write_all(&(hyper.len() as u32).to_le_bytes())?;
    out.write_all(&hyper)?;
    for stream in &coded.streams {
        let b = stream.to_bytes();
        out.write_all(&(b.len() as u32).to_le_bytes())?;
        out.write_all(&b)?;
    }
    Ok(out)
}

fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::Truncated {
            expected_bits: n as u64 * 8,
            actual_bits: input.len() as u64 * 8,
        });
    }
    let (head, rest) = input.split_at(n);
    *input = rest;
    Ok(head)
}

fn take_u32(input: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(input, 4)?.try_into().unwrap()))
}

fn decode_cm<T: Scalar>(model: &TrainedModel<T>, bytes: &[u8]) -> Result<Decoded<T>> {
    let t = Instant::now();
    let mut input = &bytes[4..];
    let version = take(&mut input, 1)?[0];
    if version != CM_VERSION {
        return Err(Error::Format {
            what: "cm stream file",
            detail: format!("unsupported version {version}"),
        });
    }
    let header = StreamHeader::from_bytes(take(&mut input, 4)?.try_into().unwrap())?;
    let delta = f64::from_le_bytes(take(&mut input, 8)?.try_into().unwrap());
    let precision = take(&mut input, 1)?[0] as u32;
    if model.config.scheme != Scheme::Cm {
        return Err(Error::Mismatch(format!(
            "scheme: EFCM stream given to a {} model",
            model.config.scheme
        )));
    }
    let predictor = model
        .predictor
        .as_ref()
        .ok_or_else(|| Error::Mismatch("cm model has no predictor".into()))?;
    let shape = stream_shape(&header, predictor.channels())?;
    let m = header.m();
    let config = SchemeConfig {
        scheme: Scheme::Cm,
        m,
        delta,
        precision,
        hyper: predictor.uses_hyper(),
    };
    config.validate(None)?;

    let hyper_len = take_u32(&mut input)? as usize;
    let hyper_bytes = take(&mut input, hyper_len)?;
    let hyper = match (predictor.uses_hyper(), model.hyper.as_ref()) {
        (true, Some(q)) => {
            if m > q.max_stages() {
                return Err(Error::StageOutOfRange { m, max: q.max_stages() });
            }
            let n = (shape.1 / 4) * (shape.2 / 4);
            let mut r = BitReader::new(hyper_bytes);
            let mut stages = Vec::with_capacity(m);
            for k in &q.ks()[..m] {
                let bits = k.trailing_zeros();
                let stage = (0..n)
                    .map(|_| r.read(bits))
                    .collect::<Option<Vec<u32>>>()
                    .ok_or(Error::Truncated {
                        expected_bits: (n * m) as u64 * bits as u64,
                        actual_bits: hyper_len as u64 * 8,
                    })?;
                stages.push(stage);
            }
            Some(IndexStack::new(stages)?)
        }
        (true, None) => return Err(Error::Mismatch("cm predictor expects a hyper quantizer".into())),
        (false, _) => None,
    };

    let mut streams = Vec::with_capacity(NUM_GROUPS);
    for _ in 0..NUM_GROUPS {
        let len = take_u32(&mut input)? as usize;
        streams.push(RansStream::from_bytes(take(&mut input, len)?, precision)?);
    }
    if !input.is_empty() {
        return Err(Error::Format {
            what: "cm stream file",
            detail: format!("{} trailing bytes", input.len()),
        });
    }
    let coded = CodedLatent {
        scheme: Scheme::Cm,
        m,
        shape,
        hyper,
        groups: Vec::new(),
        streams,
        clamped: 0,
        reconstruction: LatentGrid::zeros(shape.0, shape.1, shape.2)?,
        rate_bits: 0,
        timings: Default::default(),
    };
    let pack_ms = elapsed_ms(t);
    let mut decoded = cm_decode_timed(&coded, predictor, model.hyper.as_ref(), &config)?;
    decoded.timings.pack_ms += pack_ms;
    Ok(decoded)
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Reads a whole stream file.
pub fn read_stream_file<R: Read>(mut input: R) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    Ok(bytes)
}
