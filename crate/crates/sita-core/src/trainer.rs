//! Two-stage training. Stage 1 updates blocks (B_frozen+1)..=l plus the tone
//! head under the contrastive objectives; Stage 2 freezes everything up to
//! and including layer l and fine-tunes the upper blocks plus the CTC head
//! under CTC with optional distillation. The optimizer is Adam with decoupled
//! weight decay, linear warmup into a constant rate, and global-norm clipping.
//!
//! All batch reductions run in a fixed order so identical seeds give
//! bit-identical parameters.

use crate::corpus::{MiningConfig, PairMiner, PairSetIdx, Split, Token};
use crate::ctc::{ctc_gradient, ctc_log_likelihood, Vocabulary};
use crate::distill::{kd_loss, stage2_loss, KdConfig};
use crate::encoder::{normalize_backward, pool_backward, EncoderStack, ForwardCache};
use crate::error::{Result, SitaError};
use crate::losses::{stage1_loss_detailed, AnchorBundle, LossReport, Stage1Config, Stage1Variant};
use crate::math::{pool, Embedding, PoolingMode};
use crate::seeding::{substream_rng, substream_seed};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 5e-4,
            weight_decay: 0.01,
            grad_clip: 1.0,
            warmup_steps: 200,
            total_steps: 2000,
            batch_size: 4,
            accumulation_steps: 4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_clip <= 0.0 {
            return Err(SitaError::InvalidConfig("grad_clip must be > 0".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(SitaError::InvalidConfig(
                "warmup must not exceed total steps".into(),
            ));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 {
            return Err(SitaError::InvalidConfig("empty batch".into()));
        }
        Ok(())
    }
}

/// Adam moments per trainable group, plus the clipping contract.
struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    steps: usize,
}

impl AdamState {
    fn new() -> Self {
        AdamState {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            steps: 0,
        }
    }

    /// Clips gradients to the global-norm budget, then applies one AdamW
    /// update to the named groups. Returns the post-clip gradient norm.
    fn apply(
        &mut self,
        stack: &mut EncoderStack,
        grads: &mut BTreeMap<String, Vec<f64>>,
        trainable: &[String],
        cfg: &OptimizerConfig,
    ) -> f64 {
        let mut sq_norm = 0.0;
        for name in trainable {
            if let Some(g) = grads.get(name) {
                sq_norm += g.iter().map(|v| v * v).sum::<f64>();
            }
        }
        let norm = sq_norm.sqrt();
        let scale = if norm > cfg.grad_clip {
            cfg.grad_clip / norm
        } else {
            1.0
        };
        self.steps += 1;
        let t = self.steps as f64;
        let lr = if cfg.warmup_steps > 0 && self.steps <= cfg.warmup_steps {
            cfg.learning_rate * self.steps as f64 / cfg.warmup_steps as f64
        } else {
            cfg.learning_rate
        };
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for name in trainable {
            let Some(g) = grads.get_mut(name) else {
                continue;
            };
            let params = stack.param_mut(name).expect("trainable group exists");
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                let gi = g[i] * scale;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps)
                    + cfg.weight_decay * params[i]);
            }
        }
        norm.min(cfg.grad_clip)
    }
}

/// One row of the Stage-1 loss trace.
#[derive(Debug, Clone)]
pub struct Stage1TraceRow {
    pub step: usize,
    pub total: f64,
    pub speaker: f64,
    pub tone_contrastive: f64,
    pub tone_ce: f64,
    pub grad_norm: f64,
}

/// One row of the Stage-2 loss trace.
#[derive(Debug, Clone)]
pub struct Stage2TraceRow {
    pub step: usize,
    pub total: f64,
    pub ctc: f64,
    pub kd: f64,
    pub grad_norm: f64,
}

pub fn stage1_trainable_groups(stack: &EncoderStack) -> Vec<String> {
    let mut names: Vec<String> = (stack.cfg.freeze_bottom + 1..=stack.cfg.feature_layer)
        .flat_map(|k| [format!("block{k:02}.weight"), format!("block{k:02}.bias")])
        .collect();
    names.push("tone_head.W".into());
    names.push("tone_head.b".into());
    names
}

pub fn stage2_trainable_groups(stack: &EncoderStack) -> Vec<String> {
    let mut names: Vec<String> = (stack.cfg.feature_layer + 1..=stack.cfg.n_blocks)
        .flat_map(|k| [format!("block{k:02}.weight"), format!("block{k:02}.bias")])
        .collect();
    names.push("ctc_head.weight".into());
    names.push("ctc_head.bias".into());
    names
}

struct EmbeddedToken {
    cache: ForwardCache,
    raw_pooled: Vec<f64>,
    embedding: Embedding,
}

fn embed_token(
    stack: &EncoderStack,
    token: &Token,
    layer: usize,
    mode: PoolingMode,
) -> Result<EmbeddedToken> {
    let cache = stack.forward_cached(&token.features, layer)?;
    let raw = pool(cache.hidden(layer), mode)?;
    let mut z = raw.clone();
    z.normalize()?;
    Ok(EmbeddedToken {
        cache,
        raw_pooled: raw.values,
        embedding: z,
    })
}

/// Anchors in seeded order, cycling over the usable training tokens.
struct AnchorSchedule {
    order: Vec<usize>,
    cursor: usize,
}

impl AnchorSchedule {
    fn new(usable: Vec<usize>, seed: u64) -> Self {
        let mut order = usable;
        let mut rng = substream_rng(seed, "anchor_order", &[]);
        order.shuffle(&mut rng);
        AnchorSchedule { order, cursor: 0 }
    }

    fn next(&mut self) -> usize {
        let idx = self.order[self.cursor];
        self.cursor = (self.cursor + 1) % self.order.len();
        idx
    }
}

/// Stage-1 training. Only blocks (B_frozen+1)..=l and the tone head change.
pub fn train_stage1(
    tokens: &[Token],
    stack: &mut EncoderStack,
    cfg: &Stage1Config,
    variant: &Stage1Variant,
    mining: &MiningConfig,
    opt: &OptimizerConfig,
    pooling: PoolingMode,
    seed: u64,
) -> Result<Vec<Stage1TraceRow>> {
    cfg.validate()?;
    opt.validate()?;
    let train_idx: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i].split == Split::Train)
        .collect();
    let train_tokens: Vec<Token> = train_idx.iter().map(|&i| tokens[i].clone()).collect();
    let miner = PairMiner::new(&train_tokens);
    let usable: Vec<usize> = (0..train_tokens.len())
        .filter(|&i| {
            miner.has_cross_gender_positive(i)
                || miner
                    .mine_idx(&train_tokens[i].id, mining, 0)
                    .map(|p| !p.tone_positives.is_empty())
                    .unwrap_or(false)
        })
        .collect();
    if usable.is_empty() {
        return Err(SitaError::Other("no usable anchors in train split".into()));
    }
    let mut schedule = AnchorSchedule::new(usable, seed);
    let layer = stack.cfg.feature_layer;
    let trainable = stage1_trainable_groups(stack);
    let mut adam = AdamState::new();
    let mut trace = Vec::with_capacity(opt.total_steps);

    for step in 0..opt.total_steps {
        // Mine every anchor for this optimizer step up front; parameters are
        // constant within the step, so unique tokens embed once.
        let mut micro_batches: Vec<Vec<PairSetIdx>> = Vec::with_capacity(opt.accumulation_steps);
        let mut unique: BTreeMap<usize, EmbeddedToken> = BTreeMap::new();
        for acc in 0..opt.accumulation_steps {
            let mut batch = Vec::with_capacity(opt.batch_size);
            for slot in 0..opt.batch_size {
                let anchor_idx = schedule.next();
                let mine_seed = substream_seed(
                    seed,
                    "mining",
                    &[step as u64, acc as u64, slot as u64],
                );
                let pairs =
                    miner.mine_idx(&train_tokens[anchor_idx].id, mining, mine_seed)?;
                for idx in pairs_members(&pairs) {
                    unique.entry(idx).or_insert(embed_token(
                        stack,
                        &train_tokens[idx],
                        layer,
                        pooling,
                    )?);
                }
                batch.push(pairs);
            }
            micro_batches.push(batch);
        }
        // Re-embed lazily only when the entry was a placeholder; BTreeMap
        // entry above embeds eagerly, so everything is ready here.
        let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut dz_by_token: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let micro_weight = 1.0 / opt.accumulation_steps as f64;
        let mut totals = (0.0, 0.0, 0.0, 0.0); // total, speaker, tone, ce

        for batch in &micro_batches {
            let bundles: Vec<AnchorBundle> = batch
                .iter()
                .map(|p| {
                    let z = |i: usize| unique[&i].embedding.clone();
                    AnchorBundle {
                        anchor: z(p.anchor),
                        positive: Some(z(p.positive)),
                        negatives: p.negatives.iter().map(|&i| z(i)).collect(),
                        tone_positives: p.tone_positives.iter().map(|&i| z(i)).collect(),
                        hard_negatives: p.hard_negatives.iter().map(|&i| z(i)).collect(),
                        soft_negatives: p.soft_negatives.iter().map(|&i| z(i)).collect(),
                        tone: train_tokens[p.anchor].tone,
                    }
                })
                .collect();
            let (report, breakdown) =
                stage1_loss_detailed(&bundles, &stack.tone_head, cfg, variant)?;
            totals.0 += micro_weight * report.value;
            totals.1 += micro_weight * breakdown.speaker;
            totals.2 += micro_weight * breakdown.tone_contrastive;
            totals.3 += micro_weight * breakdown.tone_ce;

            route_stage1_grads(&report, batch, micro_weight, &mut dz_by_token, &mut grads);
        }

        // Backprop each unique token once, in index order.
        for (&token_idx, dz) in &dz_by_token {
            let embedded = &unique[&token_idx];
            let d_raw = normalize_backward(&embedded.raw_pooled, dz)?;
            let d_frames = pool_backward(embedded.cache.hidden(layer), pooling, &d_raw)?;
            stack.backprop_blocks(
                &embedded.cache,
                d_frames,
                layer,
                stack.cfg.freeze_bottom,
                &mut grads,
            );
        }

        let grad_norm = adam.apply(stack, &mut grads, &trainable, opt);
        trace.push(Stage1TraceRow {
            step,
            total: totals.0,
            speaker: totals.1,
            tone_contrastive: totals.2,
            tone_ce: totals.3,
            grad_norm,
        });
    }
    Ok(trace)
}

fn pairs_members(p: &PairSetIdx) -> Vec<usize> {
    let mut members = vec![p.anchor, p.positive];
    members.extend_from_slice(&p.negatives);
    members.extend_from_slice(&p.tone_positives);
    members.extend_from_slice(&p.hard_negatives);
    members.extend_from_slice(&p.soft_negatives);
    members
}

/// Maps the batch loss report's per-anchor gradient groups back onto token
/// indices, accumulating embedding gradients and tone-head gradients.
fn route_stage1_grads(
    report: &LossReport,
    batch: &[PairSetIdx],
    weight: f64,
    dz_by_token: &mut BTreeMap<usize, Vec<f64>>,
    grads: &mut BTreeMap<String, Vec<f64>>,
) {
    let mut add_dz = |token_idx: usize, g: &[f64]| {
        if g.iter().all(|&v| v == 0.0) {
            return;
        }
        let entry = dz_by_token
            .entry(token_idx)
            .or_insert_with(|| vec![0.0; g.len()]);
        for (e, v) in entry.iter_mut().zip(g) {
            *e += weight * v;
        }
    };
    for (i, pairs) in batch.iter().enumerate() {
        if let Some(g) = report.grad(&format!("anchor[{i}]")) {
            add_dz(pairs.anchor, g);
        }
        if let Some(g) = report.grad(&format!("positive[{i}]")) {
            add_dz(pairs.positive, g);
        }
        for (k, &idx) in pairs.negatives.iter().enumerate() {
            if let Some(g) = report.grad(&format!("negatives[{i}][{k}]")) {
                add_dz(idx, g);
            }
        }
        for (k, &idx) in pairs.tone_positives.iter().enumerate() {
            if let Some(g) = report.grad(&format!("positives[{i}][{k}]")) {
                add_dz(idx, g);
            }
        }
        for (k, &idx) in pairs.hard_negatives.iter().enumerate() {
            if let Some(g) = report.grad(&format!("hard[{i}][{k}]")) {
                add_dz(idx, g);
            }
        }
        for (k, &idx) in pairs.soft_negatives.iter().enumerate() {
            if let Some(g) = report.grad(&format!("soft[{i}][{k}]")) {
                add_dz(idx, g);
            }
        }
    }
    for name in ["tone_head.W", "tone_head.b"] {
        if let Some(g) = report.grad(name) {
            let entry = grads
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (e, v) in entry.iter_mut().zip(g) {
                *e += weight * v;
            }
        }
    }
}

/// Per-token teacher logits, keyed by token id.
pub type TeacherCache = BTreeMap<String, Vec<Vec<f64>>>;

/// Runs a frozen stack over tokens and records its frame-wise CTC logits.
pub fn compute_teacher_cache(stack: &EncoderStack, tokens: &[Token]) -> Result<TeacherCache> {
    let mut cache = TeacherCache::new();
    for token in tokens {
        let hiddens = stack.forward(&token.features, stack.cfg.n_blocks)?;
        let logits = stack.ctc_logits(&hiddens[stack.cfg.n_blocks - 1]);
        cache.insert(token.id.clone(), logits);
    }
    Ok(cache)
}

fn log_softmax_rows(logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter().map(|v| v - lse).collect()
        })
        .collect()
}

/// Stage-2 fine-tuning. Only blocks (l+1)..=M and the CTC head change, so
/// layer-l embeddings are bit-identical before and after.
pub fn train_stage2(
    tokens: &[Token],
    stack: &mut EncoderStack,
    vocab: &Vocabulary,
    teacher: Option<&TeacherCache>,
    kd: &KdConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<Vec<Stage2TraceRow>> {
    kd.validate()?;
    opt.validate()?;
    if kd.kd_enabled() && teacher.is_none() {
        return Err(SitaError::MissingArtifact(
            "teacher cache required when KD is enabled (delta < 1)".into(),
        ));
    }
    let train_idx: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i].split == Split::Train)
        .collect();
    if train_idx.is_empty() {
        return Err(SitaError::Other("empty train split".into()));
    }
    let mut schedule = AnchorSchedule::new(train_idx, substream_seed(seed, "stage2", &[]));
    let layer = stack.cfg.feature_layer;
    let top = stack.cfg.n_blocks;
    let trainable = stage2_trainable_groups(stack);
    let mut adam = AdamState::new();
    let mut trace = Vec::with_capacity(opt.total_steps);
    let n_classes = stack.n_classes();

    for step in 0..opt.total_steps {
        let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut total = 0.0;
        let mut ctc_total = 0.0;
        let mut kd_total = 0.0;
        let sample_weight = 1.0 / (opt.batch_size * opt.accumulation_steps) as f64;
        for _ in 0..opt.batch_size * opt.accumulation_steps {
            let token = &tokens[schedule.next()];
            let cache = stack.forward_cached(&token.features, top)?;
            let frames = token.features.n_frames();
            let logits = stack.ctc_logits(cache.hidden(top));
            let posteriors = log_softmax_rows(&logits);
            let target = vocab.encode_word(&token.word)?;
            let neg_ll = -ctc_log_likelihood(&posteriors, &target)?;
            if !neg_ll.is_finite() {
                return Err(SitaError::InfeasibleTarget {
                    expanded: 2 * target.len() + 1,
                    frames,
                });
            }
            let ctc_grad = ctc_gradient(&posteriors, &target)?;
            let ctc_report = LossReport {
                value: neg_ll,
                grads: [(
                    "logits".to_string(),
                    ctc_grad.into_iter().flatten().collect::<Vec<f64>>(),
                )]
                .into(),
            };
            let kd_report = if kd.kd_enabled() {
                let teacher_logits = teacher
                    .expect("validated above")
                    .get(&token.id)
                    .ok_or_else(|| {
                        SitaError::MissingArtifact(format!("teacher logits for {}", token.id))
                    })?;
                Some(kd_loss(teacher_logits, &logits, kd)?)
            } else {
                None
            };
            let combined = stage2_loss(&ctc_report, kd_report.as_ref(), kd)?;
            total += sample_weight * combined.value;
            ctc_total += sample_weight * ctc_report.value;
            kd_total += sample_weight * kd_report.map(|r| r.value).unwrap_or(0.0);

            // d combined / d logits -> CTC head params and hidden states.
            let dl = combined.grad("logits").expect("logits gradient");
            let d = stack.cfg.hidden_dim;
            let mut d_hidden = vec![0.0; frames * d];
            {
                let top_hidden = cache.hidden(top);
                let gw = grads
                    .entry("ctc_head.weight".to_string())
                    .or_insert_with(|| vec![0.0; n_classes * d]);
                for t in 0..frames {
                    let h = top_hidden.row(t);
                    for c in 0..n_classes {
                        let g = sample_weight * dl[t * n_classes + c];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &mut gw[c * d..(c + 1) * d];
                        for (rw, hv) in row.iter_mut().zip(h) {
                            *rw += g * hv;
                        }
                        let w_row = &stack.ctc_head.weight[c * d..(c + 1) * d];
                        for (j, w) in w_row.iter().enumerate() {
                            d_hidden[t * d + j] += g * w;
                        }
                    }
                }
                let gb = grads
                    .entry("ctc_head.bias".to_string())
                    .or_insert_with(|| vec![0.0; n_classes]);
                for t in 0..frames {
                    for c in 0..n_classes {
                        gb[c] += sample_weight * dl[t * n_classes + c];
                    }
                }
            }
            stack.backprop_blocks(&cache, d_hidden, top, layer, &mut grads);
        }
        let grad_norm = adam.apply(stack, &mut grads, &trainable, opt);
        trace.push(Stage2TraceRow {
            step,
            total,
            ctc: ctc_total,
            kd: kd_total,
            grad_norm,
        });
    }
    Ok(trace)
}
