//! Fixed-length index packing, the 32-bit stream header, and BPP accounting.
//!
//! Wire layout (all fields MSB-first):
//!
//! ```text
//! | H: 14 bits | W: 14 bits | q: 4 bits | Q_z stages | Q_1 stages | ... | Q_4 stages | pad |
//! ```
//!
//! Within a quantizer the stages follow codebook order and each stage holds
//! its indices row-major, `log2 K` bits apiece. Zero padding to a whole byte
//! happens once, after the last index.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::latent::NUM_GROUPS;
use crate::quantizer::{IndexStack, QuantizerSet};
use crate::scalar::Scalar;

/// Latent downsampling factor relative to the image.
pub const F_Y: usize = 16;
/// Hyperprior downsampling factor relative to the image.
pub const F_Z: usize = 64;

pub const MAX_DIMENSION: u16 = (1 << 14) - 1;
pub const MAX_Q: u8 = 15;

/// Image size and rate selector; `q` is the number of RVQ stages in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub height: u16,
    pub width: u16,
    pub q: u8,
}

impl StreamHeader {
    pub fn new(height: usize, width: usize, q: usize) -> Result<Self> {
        let ok = |d: usize| (1..=MAX_DIMENSION as usize).contains(&d);
        if !ok(height) || !ok(width) {
            return Err(invalid(format!(
                "image size {height}x{width} outside 1..={MAX_DIMENSION}"
            )));
        }
        if q > MAX_Q as usize {
            return Err(invalid(format!("rate selector {q} exceeds {MAX_Q}")));
        }
        Ok(Self {
            height: height as u16,
            width: width as u16,
            q: q as u8,
        })
    }

    /// Stage count encoded by `q`.
    pub fn m(&self) -> usize {
        self.q as usize
    }

    pub fn to_bytes(&self) -> [u8; 4] {
        let word = ((self.height as u32) << 18) | ((self.width as u32) << 4) | self.q as u32;
        word.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 4]) -> Result<Self> {
        let word = u32::from_be_bytes(bytes);
        let height = (word >> 18) as usize;
        let width = ((word >> 4) & 0x3FFF) as usize;
        Self::new(height, width, (word & 0xF) as usize)
    }
}

/// MSB-first bit writer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `width` bits of `value`.
    pub fn write(&mut self, value: u32, width: u32) {
        for b in (0..width).rev() {
            let bit = (value >> b) & 1;
            let offset = (self.bits % 8) as u32;
            if offset == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

/// MSB-first bit reader.
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read(&mut self, width: u32) -> Option<u32> {
        if self.pos + width as u64 > self.bytes.len() as u64 * 8 {
            return None;
        }
        let mut v = 0u32;
        for _ in 0..width {
            let byte = self.bytes[(self.pos / 8) as usize];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            v = (v << 1) | bit as u32;
            self.pos += 1;
        }
        Some(v)
    }
}

fn log2_exact(k: usize) -> Result<u32> {
    if k == 0 || !k.is_power_of_two() {
        return Err(invalid(format!("codebook size {k} is not a power of two")));
    }
    Ok(k.trailing_zeros())
}

/// Codebook sizes needed to parse a stream, plus the downsampling geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub f_y: usize,
    pub f_z: usize,
    /// Per group quantizer, the codeword count of each stage.
    pub group_ks: Vec<Vec<usize>>,
    /// Per stage codeword counts of the hyper quantizer, if the hyperprior is on.
    pub hyper_ks: Option<Vec<usize>>,
}

impl StreamLayout {
    pub fn from_quantizers<T: Scalar>(qset: &QuantizerSet<T>, hyper: bool) -> Self {
        Self {
            f_y: F_Y,
            f_z: F_Z,
            group_ks: qset.groups.iter().map(|q| q.ks()).collect(),
            hyper_ks: if hyper {
                qset.hyper.as_ref().map(|q| q.ks())
            } else {
                None
            },
        }
    }

    pub fn max_stages(&self) -> usize {
        self.group_ks.iter().map(|k| k.len()).min().unwrap_or(0)
    }

    /// Latent size for an image, with partial blocks padded up.
    pub fn latent_size(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.f_y), width.div_ceil(self.f_y))
    }

    /// Positions per group quantizer and per hyper quantizer.
    pub fn positions(&self, height: usize, width: usize) -> (usize, usize) {
        let (h, w) = self.latent_size(height, width);
        let group = h.div_ceil(2) * w.div_ceil(2);
        let hyper = height.div_ceil(self.f_z) * width.div_ceil(self.f_z);
        (group, hyper)
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.max_stages() {
            return Err(Error::StageOutOfRange {
                m,
                max: self.max_stages(),
            });
        }
        if let Some(hk) = &self.hyper_ks {
            if m > hk.len() {
                return Err(Error::StageOutOfRange { m, max: hk.len() });
            }
        }
        Ok(())
    }

    /// Payload size in bits, before the final byte padding.
    pub fn payload_bits(&self, height: usize, width: usize, m: usize) -> Result<u64> {
        self.check_m(m)?;
        let (ng, nz) = self.positions(height, width);
        let mut bits = 0u64;
        if let Some(hk) = &self.hyper_ks {
            for &k in &hk[..m] {
                bits += nz as u64 * log2_exact(k)? as u64;
            }
        }
        for ks in &self.group_ks {
            for &k in &ks[..m] {
                bits += ng as u64 * log2_exact(k)? as u64;
            }
        }
        Ok(bits)
    }

    /// The equivalent BPP configuration, when every quantizer uses one `K` for all stages.
    pub fn bpp_config(&self) -> Option<BppConfig> {
        let uniform = |ks: &Vec<usize>| ks.iter().all(|&k| k == ks[0]).then_some(ks[0]);
        let group_ks = self.group_ks.iter().map(uniform).collect::<Option<Vec<_>>>()?;
        let hyper_k = match &self.hyper_ks {
            Some(ks) => Some(uniform(ks)?),
            None => None,
        };
        Some(BppConfig {
            f_y: self.f_y,
            f_z: self.f_z,
            group_ks,
            hyper_k,
        })
    }
}

/// Header plus packed index payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBitstream {
    pub header: StreamHeader,
    pub payload: Vec<u8>,
}

impl PackedBitstream {
    /// Header and payload as they appear on the wire.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes().to_vec();
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn total_bits(&self) -> u64 {
        32 + self.payload.len() as u64 * 8
    }
}

fn write_stack(w: &mut BitWriter, stack: &IndexStack, ks: &[usize], n: usize, what: &str) -> Result<()> {
    if stack.n() != n {
        return Err(invalid(format!("{what}: {} positions, layout expects {n}", stack.n())));
    }
    for (t, (indices, &k)) in stack.stages().iter().zip(ks).enumerate() {
        let bits = log2_exact(k)?;
        for &j in indices {
            if j as usize >= k {
                return Err(invalid(format!("{what} stage {}: index {j} >= K = {k}", t + 1)));
            }
            w.write(j, bits);
        }
    }
    Ok(())
}

/// Packs index stacks in the order `Q_z, Q_1, ..., Q_4`.
pub fn pack(
    header: StreamHeader,
    hyper: Option<&IndexStack>,
    groups: &[IndexStack],
    layout: &StreamLayout,
) -> Result<PackedBitstream> {
    let m = header.m();
    layout.check_m(m)?;
    if groups.len() != NUM_GROUPS || layout.group_ks.len() != NUM_GROUPS {
        return Err(invalid(format!(
            "expected {NUM_GROUPS} group stacks, got {}",
            groups.len()
        )));
    }
    let (height, width) = (header.height as usize, header.width as usize);
    let (ng, nz) = layout.positions(height, width);
    let mut w = BitWriter::new();
    match (hyper, &layout.hyper_ks) {
        (Some(stack), Some(ks)) => {
            if stack.m() != m {
                return Err(invalid(format!(
                    "hyper stack has {} stages but q selects {m}",
                    stack.m()
                )));
            }
            write_stack(&mut w, stack, ks, nz, "hyper quantizer")?;
        }
        (None, None) => {}
        (Some(_), None) => return Err(invalid("hyper indices supplied but layout has no hyperprior")),
        (None, Some(_)) => return Err(invalid("layout expects hyper indices")),
    }
    for (g, (stack, ks)) in groups.iter().zip(&layout.group_ks).enumerate() {
        if stack.m() != m {
            return Err(invalid(format!(
                "group {} stack has {} stages but q selects {m}",
                g + 1,
                stack.m()
            )));
        }
        write_stack(&mut w, stack, ks, ng, &format!("group {}", g + 1))?;
    }
    let bits = w.bit_len();
    debug_assert_eq!(bits, layout.payload_bits(height, width, m)?);
    if height % layout.f_z == 0 && width % layout.f_z == 0 {
        if let Some(cfg) = layout.bpp_config() {
            let expected = compute_bpp(&cfg, m)? * (height * width) as f64;
            assert!(
                (bits as f64 - expected).abs() < 1e-6 * expected.max(1.0),
                "payload {bits} bits disagrees with BPP accounting {expected}"
            );
        }
    }
    Ok(PackedBitstream {
        header,
        payload: w.finish(),
    })
}

fn read_stack(r: &mut BitReader, ks: &[usize], m: usize, n: usize) -> Result<IndexStack> {
    let mut stages = Vec::with_capacity(m);
    for &k in &ks[..m] {
        let bits = log2_exact(k)?;
        let mut idx = Vec::with_capacity(n);
        for _ in 0..n {
            idx.push(r.read(bits).expect("length checked before parsing"));
        }
        stages.push(idx);
    }
    IndexStack::new(stages)
}

/// Parsed indices: optional hyper stack and the four group stacks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnpackedIndices {
    pub header: StreamHeader,
    pub hyper: Option<IndexStack>,
    pub groups: Vec<IndexStack>,
}

/// Inverse of [`pack`].
pub fn unpack(stream: &PackedBitstream, layout: &StreamLayout) -> Result<UnpackedIndices> {
    let header = stream.header;
    let m = header.m();
    layout.check_m(m)?;
    let (height, width) = (header.height as usize, header.width as usize);
    let expected = layout.payload_bits(height, width, m)?;
    let actual = stream.payload.len() as u64 * 8;
    if actual < expected {
        return Err(Error::Truncated {
            expected_bits: expected,
            actual_bits: actual,
        });
    }
    if actual - expected >= 8 {
        return Err(Error::Format {
            what: "bitstream",
            detail: format!(
                "{} trailing bytes after {expected} payload bits",
                (actual - expected) / 8
            ),
        });
    }
    let (ng, nz) = layout.positions(height, width);
    let mut r = BitReader::new(&stream.payload);
    let hyper = match &layout.hyper_ks {
        Some(ks) => Some(read_stack(&mut r, ks, m, nz)?),
        None => None,
    };
    let groups = layout
        .group_ks
        .iter()
        .map(|ks| read_stack(&mut r, ks, m, ng))
        .collect::<Result<Vec<_>>>()?;
    Ok(UnpackedIndices { header, hyper, groups })
}

const BITSTREAM_MAGIC: &[u8; 4] = b"EFBS";
const BITSTREAM_VERSION: u8 = 1;

/// Writes an `EFBS` file: magic, version, header, payload.
pub fn write_bitstream<W: Write>(stream: &PackedBitstream, mut out: W) -> Result<()> {
    out.write_all(BITSTREAM_MAGIC)?;
    out.write_all(&[BITSTREAM_VERSION])?;
    out.write_all(&stream.to_bytes())?;
    Ok(())
}

pub fn read_bitstream<R: Read>(mut input: R) -> Result<PackedBitstream> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 9 {
        return Err(Error::Truncated {
            expected_bits: 72,
            actual_bits: bytes.len() as u64 * 8,
        });
    }
    if &bytes[..4] != BITSTREAM_MAGIC {
        return Err(Error::Format {
            what: "bitstream file",
            detail: "bad magic".into(),
        });
    }
    if bytes[4] != BITSTREAM_VERSION {
        return Err(Error::Format {
            what: "bitstream file",
            detail: format!("unsupported version {}", bytes[4]),
        });
    }
    let header = StreamHeader::from_bytes(bytes[5..9].try_into().unwrap())?;
    Ok(PackedBitstream {
        header,
        payload: bytes[9..].to_vec(),
    })
}

/// Quantizer sizes and downsampling factors for rate accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BppConfig {
    pub f_y: usize,
    pub f_z: usize,
    pub group_ks: Vec<usize>,
    /// `None` drops the hyperprior term.
    pub hyper_k: Option<usize>,
}

impl BppConfig {
    /// The reference ladder: K = 1024/512/256/128 for the groups and 1024 for the hyperprior.
    pub fn reference() -> Self {
        Self {
            f_y: F_Y,
            f_z: F_Z,
            group_ks: vec![1024, 512, 256, 128],
            hyper_k: Some(1024),
        }
    }
}

/// Bits per image pixel at `m` stages:
/// `(m / f_y^2) * ((f_y^2 / f_z^2) log2 K_z + mean_i log2 K_i)`.
pub fn compute_bpp(cfg: &BppConfig, m: usize) -> Result<f64> {
    if cfg.group_ks.is_empty() {
        return Err(invalid("at least one group quantizer is required"));
    }
    if cfg.f_y == 0 || cfg.f_z == 0 {
        return Err(invalid("downsampling factors must be positive"));
    }
    let fy2 = (cfg.f_y * cfg.f_y) as f64;
    let fz2 = (cfg.f_z * cfg.f_z) as f64;
    let mut group_bits = 0.0;
    for &k in &cfg.group_ks {
        group_bits += log2_exact(k)? as f64;
    }
    group_bits /= cfg.group_ks.len() as f64;
    let hyper_bits = match cfg.hyper_k {
        Some(k) => fy2 / fz2 * log2_exact(k)? as f64,
        None => 0.0,
    };
    Ok(m as f64 / fy2 * (hyper_bits + group_bits))
}
