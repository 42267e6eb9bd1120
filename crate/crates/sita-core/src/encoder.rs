//! The trainable frame-wise encoder: a stack of affine + tanh + residual
//! blocks with a CTC head on top and a tone head at the feature layer.
//! Blocks are indexed 1..=M from bottom to top; h^(k) is the hidden state
//! after block k. Includes manual backpropagation through blocks, pooling,
//! and normalization, plus the binary checkpoint format.

use crate::error::{Result, SitaError};
use crate::losses::ToneHead;
use crate::math::{pool, Embedding, FrameSequence, PoolingMode};
use crate::seeding::substream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackConfig {
    /// Block count M.
    pub n_blocks: usize,
    /// Width of every block; inputs must have this dimension.
    pub hidden_dim: usize,
    /// Feature layer l: the block whose pooled output is the representation.
    pub feature_layer: usize,
    /// Bottom blocks that are never updated.
    pub freeze_bottom: usize,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            n_blocks: 8,
            hidden_dim: 16,
            feature_layer: 7,
            freeze_bottom: 4,
            seed: 0,
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.hidden_dim == 0 {
            return Err(SitaError::InvalidConfig("empty stack".into()));
        }
        if self.feature_layer < 1 || self.feature_layer > self.n_blocks {
            return Err(SitaError::InvalidConfig(format!(
                "feature layer {} outside 1..={}",
                self.feature_layer, self.n_blocks
            )));
        }
        if self.freeze_bottom >= self.feature_layer {
            return Err(SitaError::InvalidConfig(format!(
                "freeze_bottom {} leaves no updateable block below feature layer {}",
                self.freeze_bottom, self.feature_layer
            )));
        }
        Ok(())
    }
}

/// One frame-wise residual block: y = x + tanh(W x + b).
#[derive(Debug, Clone)]
pub struct Block {
    /// Row-major hidden_dim x hidden_dim.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Affine {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major out_dim x in_dim.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| {
                self.bias[i]
                    + self.weight[i * self.in_dim..(i + 1) * self.in_dim]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }
}

pub struct EncoderStack {
    pub cfg: StackConfig,
    pub blocks: Vec<Block>,
    /// hidden_dim -> |V| + 1 frame-wise projection.
    pub ctc_head: Affine,
    pub tone_head: ToneHead,
}

/// Forward activations kept for backpropagation: hidden states h^(0)..h^(k)
/// and the tanh branch values of each applied block.
pub struct ForwardCache {
    pub hiddens: Vec<FrameSequence>,
    tanh: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn hidden(&self, layer: usize) -> &FrameSequence {
        &self.hiddens[layer]
    }
}

impl EncoderStack {
    /// Seeded initialization: scaled uniform weights, zero biases.
    pub fn new(cfg: StackConfig, n_classes: usize, n_tones: usize) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden_dim;
        let scale = 0.5 / (d as f64).sqrt();
        let blocks = (0..cfg.n_blocks)
            .map(|k| {
                let mut rng = substream_rng(cfg.seed, "init_block", &[k as u64]);
                Block {
                    weight: (0..d * d).map(|_| rng.random_range(-scale..scale)).collect(),
                    bias: vec![0.0; d],
                }
            })
            .collect();
        let mut rng = substream_rng(cfg.seed, "init_ctc_head", &[]);
        let head_scale = 0.1;
        let ctc_head = Affine {
            out_dim: n_classes,
            in_dim: d,
            weight: (0..n_classes * d)
                .map(|_| rng.random_range(-head_scale..head_scale))
                .collect(),
            bias: vec![0.0; n_classes],
        };
        let mut rng = substream_rng(cfg.seed, "init_tone_head", &[]);
        let mut tone_head = ToneHead::zeros(n_tones, d);
        for w in tone_head.weight.iter_mut() {
            *w = rng.random_range(-head_scale..head_scale);
        }
        Ok(EncoderStack {
            cfg,
            blocks,
            ctc_head,
            tone_head,
        })
    }

    /// All-zero affines: every block is exactly the identity map.
    pub fn identity(cfg: StackConfig, n_classes: usize, n_tones: usize) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden_dim;
        Ok(EncoderStack {
            blocks: (0..cfg.n_blocks)
                .map(|_| Block {
                    weight: vec![0.0; d * d],
                    bias: vec![0.0; d],
                })
                .collect(),
            ctc_head: Affine {
                out_dim: n_classes,
                in_dim: d,
                weight: vec![0.0; n_classes * d],
                bias: vec![0.0; n_classes],
            },
            tone_head: ToneHead::zeros(n_tones, d),
            cfg,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.ctc_head.out_dim
    }

    fn check_input(&self, features: &FrameSequence, upto: usize) -> Result<()> {
        if features.dim() != self.cfg.hidden_dim {
            return Err(SitaError::DimensionMismatch(format!(
                "features dim {} vs stack width {}",
                features.dim(),
                self.cfg.hidden_dim
            )));
        }
        if upto > self.cfg.n_blocks {
            return Err(SitaError::InvalidConfig(format!(
                "layer {upto} beyond stack depth {}",
                self.cfg.n_blocks
            )));
        }
        Ok(())
    }

    /// Hidden states h^(1)..h^(upto).
    pub fn forward(&self, features: &FrameSequence, upto: usize) -> Result<Vec<FrameSequence>> {
        let mut cache = self.forward_cached(features, upto)?;
        Ok(cache.hiddens.split_off(1))
    }

    /// Forward pass retaining everything the backward pass needs.
    pub fn forward_cached(&self, features: &FrameSequence, upto: usize) -> Result<ForwardCache> {
        self.check_input(features, upto)?;
        let d = self.cfg.hidden_dim;
        let frames = features.n_frames();
        let mut hiddens = Vec::with_capacity(upto + 1);
        let mut tanh_values = Vec::with_capacity(upto);
        hiddens.push(features.clone());
        for block in &self.blocks[..upto] {
            let prev = hiddens.last().expect("at least the input");
            let mut next = FrameSequence::zeros(frames, d);
            let mut tanh_block = vec![0.0; frames * d];
            for t in 0..frames {
                let x = prev.row(t);
                let row = next.row_mut(t);
                for i in 0..d {
                    let z = block.bias[i]
                        + block.weight[i * d..(i + 1) * d]
                            .iter()
                            .zip(x)
                            .map(|(w, v)| w * v)
                            .sum::<f64>();
                    let tz = z.tanh();
                    tanh_block[t * d + i] = tz;
                    row[i] = x[i] + tz;
                }
            }
            hiddens.push(next);
            tanh_values.push(tanh_block);
        }
        Ok(ForwardCache {
            hiddens,
            tanh: tanh_values,
        })
    }

    /// Pooled, l2-normalized embedding from layer `layer`.
    pub fn extract_embedding(
        &self,
        features: &FrameSequence,
        layer: usize,
        mode: PoolingMode,
    ) -> Result<Embedding> {
        if layer < 1 {
            return Err(SitaError::InvalidConfig("layer must be >= 1".into()));
        }
        let cache = self.forward_cached(features, layer)?;
        let mut pooled = pool(cache.hidden(layer), mode)?;
        pooled.normalize()?;
        Ok(pooled)
    }

    /// Backpropagates dL/dh^(upto) down to (but not into) block `stop_block`,
    /// accumulating parameter gradients. Returns nothing below stop_block:
    /// those blocks are frozen for the calling stage.
    pub fn backprop_blocks(
        &self,
        cache: &ForwardCache,
        mut grad: Vec<f64>,
        upto: usize,
        stop_block: usize,
        store: &mut BTreeMap<String, Vec<f64>>,
    ) {
        let d = self.cfg.hidden_dim;
        let frames = cache.hiddens[0].n_frames();
        debug_assert_eq!(grad.len(), frames * d);
        for k in (stop_block + 1..=upto).rev() {
            let block = &self.blocks[k - 1];
            let x = &cache.hiddens[k - 1];
            let tanh_block = &cache.tanh[k - 1];
            let mut dz = vec![0.0; frames * d];
            for t in 0..frames {
                for i in 0..d {
                    let tz = tanh_block[t * d + i];
                    dz[t * d + i] = grad[t * d + i] * (1.0 - tz * tz);
                }
            }
            {
                let gw = store
                    .entry(format!("block{k:02}.weight"))
                    .or_insert_with(|| vec![0.0; d * d]);
                for t in 0..frames {
                    let xr = x.row(t);
                    for i in 0..d {
                        let g = dz[t * d + i];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &mut gw[i * d..(i + 1) * d];
                        for (rw, xv) in row.iter_mut().zip(xr) {
                            *rw += g * xv;
                        }
                    }
                }
            }
            {
                let gb = store
                    .entry(format!("block{k:02}.bias"))
                    .or_insert_with(|| vec![0.0; d]);
                for t in 0..frames {
                    for i in 0..d {
                        gb[i] += dz[t * d + i];
                    }
                }
            }
            // dL/dx = grad + W^T dz (residual plus branch).
            let mut lower = grad.clone();
            for t in 0..frames {
                for i in 0..d {
                    let g = dz[t * d + i];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &block.weight[i * d..(i + 1) * d];
                    for (j, w) in row.iter().enumerate() {
                        lower[t * d + j] += w * g;
                    }
                }
            }
            grad = lower;
        }
    }

    /// Parameter groups in canonical (sorted) name order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.cfg.n_blocks)
            .flat_map(|k| [format!("block{k:02}.weight"), format!("block{k:02}.bias")])
            .collect();
        names.push("ctc_head.weight".into());
        names.push("ctc_head.bias".into());
        names.push("tone_head.W".into());
        names.push("tone_head.b".into());
        names.sort();
        names
    }

    pub fn param(&self, name: &str) -> Option<&[f64]> {
        if let Some(rest) = name.strip_prefix("block") {
            let (idx, field) = rest.split_once('.')?;
            let k: usize = idx.parse().ok()?;
            let block = self.blocks.get(k - 1)?;
            return match field {
                "weight" => Some(&block.weight),
                "bias" => Some(&block.bias),
                _ => None,
            };
        }
        match name {
            "ctc_head.weight" => Some(&self.ctc_head.weight),
            "ctc_head.bias" => Some(&self.ctc_head.bias),
            "tone_head.W" => Some(&self.tone_head.weight),
            "tone_head.b" => Some(&self.tone_head.bias),
            _ => None,
        }
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        if let Some(rest) = name.strip_prefix("block") {
            let (idx, field) = rest.split_once('.')?;
            let k: usize = idx.parse().ok()?;
            let block = self.blocks.get_mut(k - 1)?;
            return match field {
                "weight" => Some(&mut block.weight),
                "bias" => Some(&mut block.bias),
                _ => None,
            };
        }
        match name {
            "ctc_head.weight" => Some(&mut self.ctc_head.weight),
            "ctc_head.bias" => Some(&mut self.ctc_head.bias),
            "tone_head.W" => Some(&mut self.tone_head.weight),
            "tone_head.b" => Some(&mut self.tone_head.bias),
            _ => None,
        }
    }

    /// Order-independent fingerprint of one parameter group's exact bits.
    pub fn param_fingerprint(&self, name: &str) -> u64 {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        if let Some(values) = self.param(name) {
            for v in values {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01B3);
                }
            }
        }
        h
    }

    /// Fingerprint over a set of groups, keyed by sorted name order.
    pub fn fingerprint_groups(&self, names: &[String]) -> u64 {
        let mut sorted = names.to_vec();
        sorted.sort();
        let mut h: u64 = 0;
        for name in &sorted {
            h = h
                .rotate_left(7)
                .wrapping_add(self.param_fingerprint(name));
        }
        h
    }

    /// Frame-wise CTC logits from the top hidden states.
    pub fn ctc_logits(&self, top_hidden: &FrameSequence) -> Vec<Vec<f64>> {
        (0..top_hidden.n_frames())
            .map(|t| self.ctc_head.apply(top_hidden.row(t)))
            .collect()
    }
}

/// Routes a pooled gradient back to the frames that produced the pool.
pub fn pool_backward(
    hidden: &FrameSequence,
    mode: PoolingMode,
    d_pooled: &[f64],
) -> Result<Vec<f64>> {
    mode.validate()?;
    let (frames, d) = (hidden.n_frames(), hidden.dim());
    if d_pooled.len() != d {
        return Err(SitaError::DimensionMismatch(format!(
            "pooled grad dim {} vs {d}",
            d_pooled.len()
        )));
    }
    let mut out = vec![0.0; frames * d];
    let route_mean = |out: &mut Vec<f64>, weight: f64| {
        for t in 0..frames {
            for i in 0..d {
                out[t * d + i] += weight * d_pooled[i] / frames as f64;
            }
        }
    };
    let route_max = |out: &mut Vec<f64>, weight: f64| {
        for i in 0..d {
            // First argmax frame takes the subgradient.
            let mut best_t = 0;
            let mut best = hidden.row(0)[i];
            for t in 1..frames {
                let v = hidden.row(t)[i];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            out[best_t * d + i] += weight * d_pooled[i];
        }
    };
    match mode {
        PoolingMode::Mean => route_mean(&mut out, 1.0),
        PoolingMode::Max => route_max(&mut out, 1.0),
        PoolingMode::MaxMean => {
            route_max(&mut out, 0.5);
            route_mean(&mut out, 0.5);
        }
        PoolingMode::Weighted { alpha } => {
            route_max(&mut out, alpha);
            route_mean(&mut out, 1.0 - alpha);
        }
    }
    Ok(out)
}

/// Backward of z = raw / ||raw||: given dL/dz, returns dL/draw.
pub fn normalize_backward(raw: &[f64], d_normalized: &[f64]) -> Result<Vec<f64>> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < crate::math::NORM_EPSILON {
        return Err(SitaError::DegenerateEmbedding);
    }
    let z: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    let dot: f64 = z.iter().zip(d_normalized).map(|(a, b)| a * b).sum();
    Ok(z.iter()
        .zip(d_normalized)
        .map(|(zi, gi)| (gi - zi * dot) / norm)
        .collect())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SITC";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the stack as a SITC checkpoint: magic, version, config fields,
/// then parameter groups as (name length, name, element count, f64 LE).
pub fn save_checkpoint(stack: &EncoderStack, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(stack.cfg.n_blocks as u32).to_le_bytes());
    buf.extend_from_slice(&(stack.cfg.hidden_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(stack.cfg.feature_layer as u32).to_le_bytes());
    buf.extend_from_slice(&(stack.cfg.freeze_bottom as u32).to_le_bytes());
    buf.extend_from_slice(&stack.cfg.seed.to_le_bytes());
    buf.extend_from_slice(&(stack.n_classes() as u32).to_le_bytes());
    buf.extend_from_slice(&(stack.tone_head.n_tones as u32).to_le_bytes());
    let names = stack.param_names();
    buf.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for name in &names {
        let values = stack.param(name).expect("named group exists");
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| SitaError::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| SitaError::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderStack> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|_| SitaError::MissingArtifact(path.display().to_string()))?;
    let malformed = |reason: String| SitaError::MalformedFile {
        path: path.display().to_string(),
        reason,
    };
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(malformed(format!("truncated at byte {at}")));
        }
        let s = &bytes[at..at + n];
        at += n;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(malformed("missing SITC magic".into()));
    }
    let read_u32 =
        |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let version = read_u32(take(4)?);
    if version != CHECKPOINT_VERSION as usize {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let n_blocks = read_u32(take(4)?);
    let hidden_dim = read_u32(take(4)?);
    let feature_layer = read_u32(take(4)?);
    let freeze_bottom = read_u32(take(4)?);
    let seed = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    let n_classes = read_u32(take(4)?);
    let n_tones = read_u32(take(4)?);
    let cfg = StackConfig {
        n_blocks,
        hidden_dim,
        feature_layer,
        freeze_bottom,
        seed,
    };
    let mut stack = EncoderStack::identity(cfg, n_classes, n_tones)?;
    let group_count = read_u32(take(4)?);
    for _ in 0..group_count {
        let name_len = read_u32(take(4)?);
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| malformed("non-utf8 group name".into()))?;
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let mut values = Vec::with_capacity(count);
        let raw = take(count * 8)?;
        for chunk in raw.chunks_exact(8) {
            values.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
        }
        let slot = stack
            .param_mut(&name)
            .ok_or_else(|| malformed(format!("unknown parameter group {name}")))?;
        if slot.len() != values.len() {
            return Err(malformed(format!(
                "group {name}: {} values, expected {}",
                values.len(),
                slot.len()
            )));
        }
        *slot = values;
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_features(frames: usize, d: usize) -> FrameSequence {
        let mut fr = FrameSequence::zeros(frames, d);
        for t in 0..frames {
            for i in 0..d {
                fr.row_mut(t)[i] = (t * d + i) as f64 * 0.1 - 1.0;
            }
        }
        fr
    }

    #[test]
    fn identity_stack_passes_input_through() {
        let cfg = StackConfig {
            n_blocks: 4,
            hidden_dim: 3,
            feature_layer: 3,
            freeze_bottom: 1,
            seed: 0,
        };
        let stack = EncoderStack::identity(cfg, 5, 4).unwrap();
        let fr = ramp_features(5, 3);
        let hiddens = stack.forward(&fr, 4).unwrap();
        for h in &hiddens {
            assert_eq!(h.data(), fr.data());
        }
    }

    #[test]
    fn forward_prefix_consistency() {
        let cfg = StackConfig {
            n_blocks: 5,
            hidden_dim: 4,
            feature_layer: 3,
            freeze_bottom: 1,
            seed: 7,
        };
        let stack = EncoderStack::new(cfg, 6, 7).unwrap();
        let fr = ramp_features(6, 4);
        let full = stack.forward(&fr, 5).unwrap();
        let partial = stack.forward(&fr, 3).unwrap();
        for (a, b) in partial.iter().zip(&full) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn forward_is_deterministic_across_constructions() {
        let cfg = StackConfig {
            n_blocks: 3,
            hidden_dim: 4,
            feature_layer: 2,
            freeze_bottom: 1,
            seed: 99,
        };
        let a = EncoderStack::new(cfg.clone(), 5, 4).unwrap();
        let b = EncoderStack::new(cfg, 5, 4).unwrap();
        let fr = ramp_features(4, 4);
        assert_eq!(
            a.forward(&fr, 3).unwrap()[2].data(),
            b.forward(&fr, 3).unwrap()[2].data()
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let stack = EncoderStack::new(StackConfig::default(), 5, 4).unwrap();
        let fr = ramp_features(4, 7);
        assert!(stack.forward(&fr, 2).is_err());
    }

    #[test]
    fn extract_embedding_is_unit_norm_and_matches_manual_composition() {
        let stack = EncoderStack::new(StackConfig::default(), 5, 4).unwrap();
        let fr = ramp_features(9, 16);
        for mode in [
            PoolingMode::Mean,
            PoolingMode::Max,
            PoolingMode::MaxMean,
            PoolingMode::weighted_default(),
        ] {
            let z = stack.extract_embedding(&fr, 6, mode).unwrap();
            assert!((z.norm() - 1.0).abs() < 1e-6);
            let hiddens = stack.forward(&fr, 6).unwrap();
            let mut manual = pool(&hiddens[5], mode).unwrap();
            manual.normalize().unwrap();
            for (a, b) in z.values.iter().zip(&manual.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_hidden_states_embed_to_unit_direction() {
        let cfg = StackConfig {
            n_blocks: 2,
            hidden_dim: 3,
            feature_layer: 2,
            freeze_bottom: 1,
            seed: 0,
        };
        let stack = EncoderStack::identity(cfg, 4, 4).unwrap();
        let mut fr = FrameSequence::zeros(5, 3);
        for t in 0..5 {
            fr.row_mut(t).copy_from_slice(&[3.0, 0.0, 4.0]);
        }
        for mode in [PoolingMode::Mean, PoolingMode::Max, PoolingMode::MaxMean] {
            let z = stack.extract_embedding(&fr, 2, mode).unwrap();
            assert!((z.values[0] - 0.6).abs() < 1e-12);
            assert!((z.values[2] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.sitc");
        let stack = EncoderStack::new(StackConfig::default(), 9, 4).unwrap();
        save_checkpoint(&stack, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for name in stack.param_names() {
            assert_eq!(stack.param(&name).unwrap(), loaded.param(&name).unwrap());
        }
        assert_eq!(stack.cfg.n_blocks, loaded.cfg.n_blocks);
        assert_eq!(stack.cfg.feature_layer, loaded.cfg.feature_layer);

        // Byte-stable on rewrite.
        let bytes_a = std::fs::read(&path).unwrap();
        save_checkpoint(&stack, &path).unwrap();
        assert_eq!(bytes_a, std::fs::read(&path).unwrap());

        assert!(matches!(
            load_checkpoint(&dir.path().join("missing.sitc")),
            Err(SitaError::MissingArtifact(_))
        ));
    }
}
