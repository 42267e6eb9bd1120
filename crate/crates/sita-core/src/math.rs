//! Deterministic numeric kernels shared by every other module: normalized
//! embeddings, cosine similarity, stable log-sum-exp, and time pooling.
//!
//! All arithmetic is f64 regardless of how features are stored on disk.

use crate::error::{Result, SitaError};
use serde::{Deserialize, Serialize};

/// Vectors with a Euclidean norm below this are rejected rather than clamped.
pub const NORM_EPSILON: f64 = 1e-9;

/// A fixed-dimension real vector, optionally carrying the unit-norm flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    /// Wraps raw values without normalizing.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Embedding {
            values,
            normalized: false,
        }
    }

    /// Normalizes to unit Euclidean norm. Errors on near-zero norm.
    pub fn new_normalized(values: Vec<f64>) -> Result<Self> {
        let mut e = Embedding::from_raw(values);
        e.normalize()?;
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// In-place l2 normalization; rejects degenerate vectors.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !n.is_finite() || n < NORM_EPSILON {
            return Err(SitaError::DegenerateEmbedding);
        }
        for v in &mut self.values {
            *v /= n;
        }
        self.normalized = true;
        Ok(())
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(SitaError::DimensionMismatch(format!(
                "embedding dims {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// Time-major frame matrix: `frames` holds T rows of D values each.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<f64>,
    t: usize,
    d: usize,
}

impl FrameSequence {
    pub fn new(frames: Vec<f64>, t: usize, d: usize) -> Result<Self> {
        if t == 0 || d == 0 {
            return Err(SitaError::EmptyInput("frame sequence".into()));
        }
        if frames.len() != t * d {
            return Err(SitaError::DimensionMismatch(format!(
                "frame buffer length {} != {}x{}",
                frames.len(),
                t,
                d
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(SitaError::Other("non-finite frame value".into()));
        }
        Ok(FrameSequence { frames, t, d })
    }

    pub fn zeros(t: usize, d: usize) -> Self {
        FrameSequence {
            frames: vec![0.0; t * d],
            t,
            d,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.frames[t * self.d..(t + 1) * self.d]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.frames[t * self.d..(t + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.frames
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.frames
    }
}

/// Time-pooling operator applied to frame sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PoolingMode {
    Mean,
    Max,
    MaxMean,
    /// z = alpha * z_max + (1 - alpha) * z_mean.
    Weighted {
        alpha: f64,
    },
}

impl PoolingMode {
    /// The weighted mix with its default alpha = 0.7.
    pub fn weighted_default() -> Self {
        PoolingMode::Weighted { alpha: 0.7 }
    }

    pub fn validate(&self) -> Result<()> {
        if let PoolingMode::Weighted { alpha } = self {
            if !(0.0..=1.0).contains(alpha) {
                return Err(SitaError::InvalidConfig(format!(
                    "pooling alpha {alpha} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Cosine similarity of two embeddings, in [-1, 1].
///
/// Inputs not flagged normalized are normalized on copies; the originals are
/// untouched.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(SitaError::DimensionMismatch(format!(
            "embedding dims {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let nu;
    let u = if u.normalized {
        u
    } else {
        nu = Embedding::new_normalized(u.values.clone())?;
        &nu
    };
    let nv;
    let v = if v.normalized {
        v
    } else {
        nv = Embedding::new_normalized(v.values.clone())?;
        &nv
    };
    u.dot(v)
}

/// Cosine distance 1 - sim, in [0, 2].
pub fn cosine_distance(u: &Embedding, v: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(u, v)?)
}

/// ln sum_k exp(values_k), computed with a max shift so finite inputs never
/// overflow. -inf entries are tolerated; an all -inf input yields -inf.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(SitaError::EmptyInput("log_sum_exp".into()));
    }
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + s.ln())
}

/// Pools frames over time. The result is unnormalized; callers l2-normalize.
pub fn pool(frames: &FrameSequence, mode: PoolingMode) -> Result<Embedding> {
    mode.validate()?;
    let (t, d) = (frames.n_frames(), frames.dim());
    if t == 0 {
        return Err(SitaError::EmptyInput("pool".into()));
    }
    let mean = |fr: &FrameSequence| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for ti in 0..t {
            for (o, v) in out.iter_mut().zip(fr.row(ti)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= t as f64;
        }
        out
    };
    let max = |fr: &FrameSequence| -> Vec<f64> {
        let mut out = fr.row(0).to_vec();
        for ti in 1..t {
            for (o, v) in out.iter_mut().zip(fr.row(ti)) {
                if *v > *o {
                    *o = *v;
                }
            }
        }
        out
    };
    let values = match mode {
        PoolingMode::Mean => mean(frames),
        PoolingMode::Max => max(frames),
        PoolingMode::MaxMean => {
            let (mx, mn) = (max(frames), mean(frames));
            mx.iter().zip(&mn).map(|(a, b)| (a + b) / 2.0).collect()
        }
        PoolingMode::Weighted { alpha } => {
            let (mx, mn) = (max(frames), mean(frames));
            mx.iter()
                .zip(&mn)
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect()
        }
    };
    Ok(Embedding::from_raw(values))
}
