//! Dense float32 tensors and the `EETT` binary file format.

use crate::error::{dim_mismatch, invalid, Error, Result};

/// Dense row-major `f32` tensor of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl FrameTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(invalid(format!("tensor rank {} not in 1..=4", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(invalid(format!(
                "tensor dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tensor values must be finite"));
        }
        Ok(FrameTensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.len() <= 4, "rank must be 1..=4");
        FrameTensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    /// Skips the finiteness scan; for producers that only combine finite
    /// values.
    pub(crate) fn from_raw(dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        FrameTensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        FrameTensor::new(dims, self.data)
    }

    /// Row-major flat index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[self.offset(index)]
    }

    /// Frame `t` of a `[T, ...]` tensor, as a tensor of the remaining dims.
    pub fn frame(&self, t: usize) -> FrameTensor {
        assert!(self.rank() >= 2, "frame() needs rank >= 2");
        let inner: usize = self.dims[1..].iter().product();
        FrameTensor::from_raw(
            self.dims[1..].to_vec(),
            self.data[t * inner..(t + 1) * inner].to_vec(),
        )
    }

    /// Stacks equally shaped tensors along a new leading dimension.
    pub fn stack(frames: &[FrameTensor]) -> Result<FrameTensor> {
        let first = frames
            .first()
            .ok_or_else(|| invalid("cannot stack zero frames"))?;
        if first.rank() >= 4 {
            return Err(invalid("stacked tensor would exceed rank 4"));
        }
        let mut data = Vec::with_capacity(first.len() * frames.len());
        for f in frames {
            if f.dims != first.dims {
                return Err(dim_mismatch("stack", &first.dims, &f.dims));
            }
            data.extend_from_slice(&f.data);
        }
        let mut dims = vec![frames.len()];
        dims.extend_from_slice(&first.dims);
        Ok(FrameTensor::from_raw(dims, data))
    }

    pub fn max_abs_diff(&self, other: &FrameTensor) -> f32 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

pub const EETT_MAGIC: &[u8; 4] = b"EETT";
pub const EETT_VERSION: u8 = 1;

/// Serializes to `EETT`: magic, u8 version, u8 rank, u32 LE dims, f32 LE
/// values.
pub fn encode_eett(t: &FrameTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(EETT_MAGIC);
    out.push(EETT_VERSION);
    out.push(t.rank() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_eett(bytes: &[u8]) -> Result<FrameTensor> {
    let fail = |m: &str| Error::Format(format!("EETT: {m}"));
    if bytes.len() < 6 || &bytes[..4] != EETT_MAGIC {
        return Err(fail("bad magic"));
    }
    if bytes[4] != EETT_VERSION {
        return Err(fail(&format!("unsupported version {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    if !(1..=4).contains(&rank) {
        return Err(fail(&format!("rank {rank} not in 1..=4")));
    }
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(fail("truncated header"));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() != header + 4 * n {
        return Err(fail(&format!(
            "expected {} payload bytes, found {}",
            4 * n,
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FrameTensor::new(dims, data)
}
