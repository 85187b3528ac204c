//! Latent tensors, quadtree grouping and the block-mean hyperprior.

use std::io::{Read, Write};

use crate::error::{invalid, shape, Error, Result};
use crate::quantizer::{IndexStack, ResidualVQ};
use crate::scalar::Scalar;

/// Number of quadtree groups.
pub const NUM_GROUPS: usize = 4;

/// Spatial phase `(row mod 2, col mod 2)` of each group, in coding order.
pub const GROUP_PHASES: [(usize, usize); NUM_GROUPS] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Side of the square block averaged into one hyperprior position.
pub const HYPER_BLOCK: usize = 4;

/// A `C x h x w` array of finite reals stored channel-major, then row, then column.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> LatentGrid<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(shape(format!(
                "dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(shape(format!(
                "{channels}x{height}x{width} grid needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite latent value at flat index {pos}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![T::zero(); channels * height * width])
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    /// Builds a grid from position-major vectors (`h*w` rows of `C` values).
    pub fn from_vectors(channels: usize, height: usize, width: usize, vectors: &[T]) -> Result<Self> {
        if vectors.len() != channels * height * width {
            return Err(shape(format!(
                "expected {} vector values, got {}",
                channels * height * width,
                vectors.len()
            )));
        }
        let plane = height * width;
        let mut data = vec![T::zero(); vectors.len()];
        for (p, v) in vectors.chunks_exact(channels).enumerate() {
            for (c, x) in v.iter().enumerate() {
                data[c * plane + p] = *x;
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Number of spatial positions, i.e. the number of channel vectors.
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> T {
        self.data[(c * self.height + i) * self.width + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, c: usize, i: usize, j: usize, v: T) {
        self.data[(c * self.height + i) * self.width + j] = v;
    }

    /// Position-major copy: one `C`-vector per spatial position, row-major.
    pub fn to_vectors(&self) -> Vec<T> {
        let plane = self.positions();
        let mut out = Vec::with_capacity(self.data.len());
        for p in 0..plane {
            for c in 0..self.channels {
                out.push(self.data[c * plane + p]);
            }
        }
        out
    }

    /// Mean squared difference per element, accumulated in `f64`.
    pub fn mse(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(shape(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        let mut acc = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = a.as_f64() - b.as_f64();
            acc += d * d;
        }
        Ok(acc / self.data.len() as f64)
    }

    /// Population variance of all entries.
    pub fn variance(&self) -> f64 {
        let n = self.data.len() as f64;
        let mean = self.data.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        self.data
            .iter()
            .map(|v| {
                let d = v.as_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / n
    }

    pub fn cast<U: Scalar>(&self) -> LatentGrid<U> {
        LatentGrid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Nearest-neighbour upsampling by an integer factor in both dimensions.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("upsampling factor must be positive"));
        }
        Self::from_fn(self.channels, self.height * factor, self.width * factor, |c, i, j| {
            self.get(c, i / factor, j / factor)
        })
    }
}

/// The four quadtree groups of a latent, each at half the spatial resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedLatent<T> {
    pub groups: Vec<LatentGrid<T>>,
    pub origin_shape: (usize, usize, usize),
}

impl<T: Scalar> GroupedLatent<T> {
    pub fn group_shape(&self) -> (usize, usize, usize) {
        let (c, h, w) = self.origin_shape;
        (c, h / 2, w / 2)
    }
}

/// Splits a latent into the four 2x2 phase groups, in [`GROUP_PHASES`] order.
pub fn partition_quadtree<T: Scalar>(latent: &LatentGrid<T>) -> Result<GroupedLatent<T>> {
    let (c, h, w) = latent.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape(format!("quadtree partition needs even h and w, got {h}x{w}")));
    }
    let groups = GROUP_PHASES
        .iter()
        .map(|&(di, dj)| LatentGrid::from_fn(c, h / 2, w / 2, |ch, i, j| latent.get(ch, 2 * i + di, 2 * j + dj)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupedLatent {
        groups,
        origin_shape: (c, h, w),
    })
}

/// Inverse of [`partition_quadtree`].
pub fn merge_groups<T: Scalar>(grouped: &GroupedLatent<T>) -> Result<LatentGrid<T>> {
    let (c, h, w) = grouped.origin_shape;
    if grouped.groups.len() != NUM_GROUPS {
        return Err(shape(format!(
            "expected {NUM_GROUPS} groups, got {}",
            grouped.groups.len()
        )));
    }
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape(format!("origin shape {h}x{w} is not even")));
    }
    for (g, grid) in grouped.groups.iter().enumerate() {
        if grid.shape() != (c, h / 2, w / 2) {
            return Err(shape(format!(
                "group {} has shape {:?}, expected {:?}",
                g + 1,
                grid.shape(),
                (c, h / 2, w / 2)
            )));
        }
    }
    let mut out = LatentGrid::zeros(c, h, w)?;
    for (grid, &(di, dj)) in grouped.groups.iter().zip(GROUP_PHASES.iter()) {
        for ch in 0..c {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    out.set(ch, 2 * i + di, 2 * j + dj, grid.get(ch, i, j));
                }
            }
        }
    }
    Ok(out)
}

/// Coarse side information supplied to every group as context.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperContext<T> {
    pub context: LatentGrid<T>,
    pub quantized: bool,
    /// Hyper quantizer indices, present when `quantized` is set.
    pub indices: Option<IndexStack>,
}

/// Per-channel means over non-overlapping 4x4 blocks.
pub fn block_means<T: Scalar>(latent: &LatentGrid<T>) -> Result<LatentGrid<T>> {
    let (c, h, w) = latent.shape();
    if h % HYPER_BLOCK != 0 || w % HYPER_BLOCK != 0 {
        return Err(shape(format!(
            "hyperprior needs h and w divisible by {HYPER_BLOCK}, got {h}x{w}"
        )));
    }
    let norm = (HYPER_BLOCK * HYPER_BLOCK) as f64;
    LatentGrid::from_fn(c, h / HYPER_BLOCK, w / HYPER_BLOCK, |ch, bi, bj| {
        let mut acc = 0.0;
        for i in 0..HYPER_BLOCK {
            for j in 0..HYPER_BLOCK {
                acc += latent.get(ch, bi * HYPER_BLOCK + i, bj * HYPER_BLOCK + j).as_f64();
            }
        }
        T::of(acc / norm)
    })
}

/// Extracts the hyperprior context: 4x4 block means, optionally vector-quantized
/// with `quantizer` at `m` stages.
pub fn extract_hyper_context<T: Scalar>(
    latent: &LatentGrid<T>,
    quantizer: Option<&ResidualVQ<T>>,
    m: usize,
) -> Result<HyperContext<T>> {
    let means = block_means(latent)?;
    match quantizer {
        None => Ok(HyperContext {
            context: means,
            quantized: false,
            indices: None,
        }),
        Some(rvq) => {
            let (c, h, w) = means.shape();
            let (stack, recon) = rvq.quantize(&means.to_vectors(), m)?;
            let context = LatentGrid::from_vectors(c, h, w, &recon)?;
            Ok(HyperContext {
                context,
                quantized: true,
                indices: Some(stack),
            })
        }
    }
}

/// Rebuilds a quantized hyper context from its index stack.
pub fn hyper_context_from_indices<T: Scalar>(
    rvq: &ResidualVQ<T>,
    indices: &IndexStack,
    shape: (usize, usize, usize),
) -> Result<HyperContext<T>> {
    let (c, h, w) = shape;
    let recon = rvq.dequantize(indices)?;
    let context = LatentGrid::from_vectors(c, h, w, &recon)?;
    Ok(HyperContext {
        context,
        quantized: true,
        indices: Some(indices.clone()),
    })
}

const LATENT_MAGIC: &[u8; 4] = b"EFLT";
const LATENT_VERSION: u8 = 1;

/// Writes a latent in the raw `EFLT` format (little-endian `f32` payload).
pub fn write_latent<T: Scalar, W: Write>(latent: &LatentGrid<T>, mut out: W) -> Result<()> {
    out.write_all(LATENT_MAGIC)?;
    out.write_all(&[LATENT_VERSION])?;
    for d in [latent.channels, latent.height, latent.width] {
        let d = u32::try_from(d).map_err(|_| invalid("dimension exceeds u32"))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in &latent.data {
        out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads an `EFLT` latent file.
pub fn read_latent<T: Scalar, R: Read>(mut input: R) -> Result<LatentGrid<T>> {
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic)?;
    if &magic[..4] != LATENT_MAGIC {
        return Err(Error::Format {
            what: "latent file",
            detail: "bad magic".into(),
        });
    }
    if magic[4] != LATENT_VERSION {
        return Err(Error::Format {
            what: "latent file",
            detail: format!("unsupported version {}", magic[4]),
        });
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [c, h, w] = dims;
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| invalid("latent dimensions overflow"))?;
    let mut bytes = vec![0u8; n * 4];
    input.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    LatentGrid::new(c, h, w, data)
}
