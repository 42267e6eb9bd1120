//! Stage-1 objectives: speaker-invariant InfoNCE, tone-aware InfoNCE, the
//! tone classifier cross-entropy, the margin-based tone variant, and their
//! weighted combination. Every loss returns its value together with analytic
//! gradients for all participating embeddings and classifier parameters.
//!
//! Similarities inside the losses are plain dot products; inputs are expected
//! to be l2-normalized per the embedding contract, and gradients are taken
//! with respect to the raw input coordinates.

use crate::error::{Result, SitaError};
use crate::math::{log_sum_exp, Embedding};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Scalar loss value plus gradient arrays keyed by parameter-group name.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub value: f64,
    pub grads: BTreeMap<String, Vec<f64>>,
}

impl LossReport {
    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(|v| v.as_slice())
    }

    /// Adds `other` scaled by `weight` into this report's gradient map.
    pub fn accumulate(&mut self, other: &LossReport, weight: f64) {
        self.value += weight * other.value;
        for (name, grad) in &other.grads {
            let entry = self
                .grads
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            for (e, g) in entry.iter_mut().zip(grad) {
                *e += weight * g;
            }
        }
    }

    pub fn assert_finite(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(SitaError::Other(format!(
                "non-finite loss value {}",
                self.value
            )));
        }
        for (name, grad) in &self.grads {
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(SitaError::Other(format!("non-finite gradient in {name}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Config {
    /// Speaker-loss temperature.
    pub tau_g: f64,
    /// Tone-loss temperature.
    pub tau_t: f64,
    /// Contrastive negatives per anchor.
    pub n_negatives: usize,
    /// Weight of the speaker loss against the tone loss.
    pub alpha: f64,
    /// Tone-classifier weight inside the tone loss.
    pub lambda_cls: f64,
    /// When false, negatives are treated as stop-gradient constants.
    #[serde(default = "default_true")]
    pub grad_negatives: bool,
}

fn default_true() -> bool {
    true
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            tau_g: 0.07,
            tau_t: 0.07,
            n_negatives: 20,
            alpha: 0.5,
            lambda_cls: 1.0,
            grad_negatives: true,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.tau_g <= 0.0 || self.tau_t <= 0.0 {
            return Err(SitaError::InvalidConfig(
                "temperatures must be strictly positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SitaError::InvalidConfig("alpha outside [0, 1]".into()));
        }
        if self.lambda_cls < 0.0 {
            return Err(SitaError::InvalidConfig("lambda_cls negative".into()));
        }
        Ok(())
    }
}

/// Hinge margins and term weights for the margin-based tone variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub m_hard: f64,
    pub m_soft: f64,
    pub lambda_attr: f64,
    pub lambda_hard: f64,
    pub lambda_soft: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            m_hard: -0.1,
            m_soft: 0.1,
            lambda_attr: 1.0,
            lambda_hard: 0.5,
            lambda_soft: 1.0,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_hard >= self.m_soft {
            return Err(SitaError::InvalidConfig(
                "m_hard must be below m_soft".into(),
            ));
        }
        Ok(())
    }
}

/// Linear tone classifier: logits = W z + b.
#[derive(Debug, Clone)]
pub struct ToneHead {
    pub n_tones: usize,
    pub dim: usize,
    /// Row-major n_tones x dim.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToneHead {
    pub fn zeros(n_tones: usize, dim: usize) -> Self {
        ToneHead {
            n_tones,
            dim,
            weight: vec![0.0; n_tones * dim],
            bias: vec![0.0; n_tones],
        }
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n_tones)
            .map(|i| {
                self.bias[i]
                    + self.weight[i * self.dim..(i + 1) * self.dim]
                        .iter()
                        .zip(z)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect()
    }
}

fn check_dims(anchor: &Embedding, others: &[&Embedding]) -> Result<usize> {
    let d = anchor.dim();
    for e in others {
        if e.dim() != d {
            return Err(SitaError::DimensionMismatch(format!(
                "embedding dims {} vs {d}",
                e.dim()
            )));
        }
    }
    Ok(d)
}

/// Log-sum-exp over scores summed in descending order, so the value is exact
/// under any permutation of the inputs.
fn lse_order_free(scores: &[f64]) -> Result<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    log_sum_exp(&sorted)
}

fn axpy(acc: &mut [f64], scale: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += scale * v;
    }
}

/// Speaker-invariant InfoNCE: the negative log-likelihood of selecting the
/// cross-speaker positive among one positive and N negatives at temperature
/// tau_g. Gradient groups: `anchor`, `positive`, `negatives[k]`.
pub fn speaker_infonce(
    anchor: &Embedding,
    positive: &Embedding,
    negatives: &[Embedding],
    cfg: &Stage1Config,
) -> Result<LossReport> {
    cfg.validate()?;
    if negatives.is_empty() {
        return Err(SitaError::EmptyInput("speaker_infonce negatives".into()));
    }
    let refs: Vec<&Embedding> = std::iter::once(positive).chain(negatives.iter()).collect();
    let d = check_dims(anchor, &refs)?;

    let s_pos = anchor.dot(positive)? / cfg.tau_g;
    let s_neg: Vec<f64> = negatives
        .iter()
        .map(|n| anchor.dot(n).map(|s| s / cfg.tau_g))
        .collect::<Result<_>>()?;
    let mut all = Vec::with_capacity(1 + s_neg.len());
    all.push(s_pos);
    all.extend_from_slice(&s_neg);
    let z = lse_order_free(&all)?;
    let value = z - s_pos;

    let mut grads = BTreeMap::new();
    let sigma_pos = (s_pos - z).exp();
    let mut g_anchor = vec![0.0; d];
    axpy(&mut g_anchor, (sigma_pos - 1.0) / cfg.tau_g, &positive.values);

    let mut g_pos = vec![0.0; d];
    axpy(&mut g_pos, (sigma_pos - 1.0) / cfg.tau_g, &anchor.values);
    grads.insert("positive".to_string(), g_pos);

    for (k, neg) in negatives.iter().enumerate() {
        let sigma = (s_neg[k] - z).exp();
        axpy(&mut g_anchor, sigma / cfg.tau_g, &neg.values);
        let mut g = vec![0.0; d];
        if cfg.grad_negatives {
            axpy(&mut g, sigma / cfg.tau_g, &anchor.values);
        }
        grads.insert(format!("negatives[{k}]"), g);
    }
    grads.insert("anchor".to_string(), g_anchor);

    Ok(LossReport { value, grads })
}

/// Tone-aware InfoNCE over the positive set P against P, H, and S jointly:
/// -(1/|P|) sum_{j in P} log(exp(s_ij) / Z_i) with Z_i over P u H u S.
/// Gradient groups: `anchor`, `positives[k]`, `hard[k]`, `soft[k]`.
pub fn tone_infonce(
    anchor: &Embedding,
    tone_positives: &[Embedding],
    hard_negatives: &[Embedding],
    soft_negatives: &[Embedding],
    cfg: &Stage1Config,
) -> Result<LossReport> {
    cfg.validate()?;
    if tone_positives.is_empty() {
        return Err(SitaError::NoTonePositives("tone_infonce".into()));
    }
    let refs: Vec<&Embedding> = tone_positives
        .iter()
        .chain(hard_negatives.iter())
        .chain(soft_negatives.iter())
        .collect();
    let d = check_dims(anchor, &refs)?;

    let scores: Vec<f64> = refs
        .iter()
        .map(|e| anchor.dot(e).map(|s| s / cfg.tau_t))
        .collect::<Result<_>>()?;
    let z = lse_order_free(&scores)?;
    let n_pos = tone_positives.len();
    let mean_pos_score = scores[..n_pos].iter().sum::<f64>() / n_pos as f64;
    let value = z - mean_pos_score;

    let mut grads = BTreeMap::new();
    let mut g_anchor = vec![0.0; d];
    for (j, member) in refs.iter().enumerate() {
        let q = (scores[j] - z).exp();
        let coef = if j < n_pos { q - 1.0 / n_pos as f64 } else { q };
        axpy(&mut g_anchor, coef / cfg.tau_t, &member.values);
        let mut g = vec![0.0; d];
        axpy(&mut g, coef / cfg.tau_t, &anchor.values);
        let name = if j < n_pos {
            format!("positives[{j}]")
        } else if j < n_pos + hard_negatives.len() {
            format!("hard[{}]", j - n_pos)
        } else {
            format!("soft[{}]", j - n_pos - hard_negatives.len())
        };
        grads.insert(name, g);
    }
    grads.insert("anchor".to_string(), g_anchor);

    Ok(LossReport { value, grads })
}

/// Cross-entropy of the linear tone classifier at the true tone (1-based).
/// Gradient groups: `anchor` (the embedding), `tone_head.W`, `tone_head.b`.
pub fn tone_classifier_ce(z: &Embedding, head: &ToneHead, tone: u32) -> Result<LossReport> {
    if z.dim() != head.dim {
        return Err(SitaError::DimensionMismatch(format!(
            "embedding dim {} vs head dim {}",
            z.dim(),
            head.dim
        )));
    }
    if tone < 1 || tone as usize > head.n_tones {
        return Err(SitaError::InvalidConfig(format!(
            "tone {tone} outside 1..={}",
            head.n_tones
        )));
    }
    let target = (tone - 1) as usize;
    let logits = head.logits(&z.values);
    let lse = log_sum_exp(&logits)?;
    let value = lse - logits[target];

    // dL/du = softmax(u) - onehot(target)
    let mut g_u: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    g_u[target] -= 1.0;

    let mut g_w = vec![0.0; head.n_tones * head.dim];
    for i in 0..head.n_tones {
        axpy(&mut g_w[i * head.dim..(i + 1) * head.dim], g_u[i], &z.values);
    }
    let mut g_z = vec![0.0; head.dim];
    for i in 0..head.n_tones {
        axpy(
            &mut g_z,
            g_u[i],
            &head.weight[i * head.dim..(i + 1) * head.dim],
        );
    }

    let mut grads = BTreeMap::new();
    grads.insert("anchor".to_string(), g_z);
    grads.insert("tone_head.W".to_string(), g_w);
    grads.insert("tone_head.b".to_string(), g_u);
    Ok(LossReport { value, grads })
}

/// Margin-based tone repulsion: an attractive term on P plus hinge penalties
/// [s - m]_+ on H and S. Empty sets contribute zero with their term skipped;
/// the subgradient at the hinge kink is zero.
pub fn margin_tone_loss(
    anchor: &Embedding,
    tone_positives: &[Embedding],
    hard_negatives: &[Embedding],
    soft_negatives: &[Embedding],
    mcfg: &MarginConfig,
) -> Result<LossReport> {
    mcfg.validate()?;
    let refs: Vec<&Embedding> = tone_positives
        .iter()
        .chain(hard_negatives.iter())
        .chain(soft_negatives.iter())
        .collect();
    let d = check_dims(anchor, &refs)?;

    let mut value = 0.0;
    let mut grads = BTreeMap::new();
    let mut g_anchor = vec![0.0; d];

    let term = |members: &[Embedding],
                    weight: f64,
                    margin: Option<f64>,
                    name: &str,
                    g_anchor: &mut Vec<f64>,
                    grads: &mut BTreeMap<String, Vec<f64>>|
     -> Result<f64> {
        let mut subtotal = 0.0;
        let scale = weight / members.len() as f64;
        for (k, m) in members.iter().enumerate() {
            let s = anchor.dot(m)?;
            let (contrib, active) = match margin {
                // Attractive term: -s, always active.
                None => (-s, true),
                Some(mg) => ((s - mg).max(0.0), s > mg),
            };
            subtotal += scale * contrib;
            let coef = if active {
                if margin.is_none() {
                    -scale
                } else {
                    scale
                }
            } else {
                0.0
            };
            let mut g = vec![0.0; d];
            axpy(&mut g, coef, &anchor.values);
            grads.insert(format!("{name}[{k}]"), g);
            axpy(g_anchor, coef, &m.values);
        }
        Ok(subtotal)
    };

    if !tone_positives.is_empty() {
        value += term(
            tone_positives,
            mcfg.lambda_attr,
            None,
            "positives",
            &mut g_anchor,
            &mut grads,
        )?;
    }
    if !hard_negatives.is_empty() {
        value += term(
            hard_negatives,
            mcfg.lambda_hard,
            Some(mcfg.m_hard),
            "hard",
            &mut g_anchor,
            &mut grads,
        )?;
    }
    if !soft_negatives.is_empty() {
        value += term(
            soft_negatives,
            mcfg.lambda_soft,
            Some(mcfg.m_soft),
            "soft",
            &mut g_anchor,
            &mut grads,
        )?;
    }
    grads.insert("anchor".to_string(), g_anchor);
    Ok(LossReport { value, grads })
}

/// Which tone objective Stage 1 optimizes alongside the classifier.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Stage1Variant {
    Infonce,
    Margin(MarginConfig),
}

impl Default for Stage1Variant {
    fn default() -> Self {
        Stage1Variant::Infonce
    }
}

/// One anchor's embeddings and labels inside a Stage-1 batch.
#[derive(Debug, Clone)]
pub struct AnchorBundle {
    pub anchor: Embedding,
    /// Cross-gender positive; absent anchors contribute only to the tone loss.
    pub positive: Option<Embedding>,
    pub negatives: Vec<Embedding>,
    pub tone_positives: Vec<Embedding>,
    pub hard_negatives: Vec<Embedding>,
    pub soft_negatives: Vec<Embedding>,
    /// 1-based tone label.
    pub tone: u32,
}

/// Mean component losses across the batch, for traces and diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stage1Breakdown {
    pub speaker: f64,
    pub tone_contrastive: f64,
    pub tone_ce: f64,
}

/// Batch Stage-1 objective: alpha * mean(l1) + (1 - alpha) * mean(l2 + lambda
/// * l3), with each mean over the anchors usable for that component. Gradient
/// groups are the per-anchor names indexed by batch position, e.g.
/// `anchor[3]`, `negatives[3][7]`, plus `tone_head.W` / `tone_head.b`.
pub fn stage1_loss(
    batch: &[AnchorBundle],
    head: &ToneHead,
    cfg: &Stage1Config,
    variant: &Stage1Variant,
) -> Result<LossReport> {
    stage1_loss_detailed(batch, head, cfg, variant).map(|(report, _)| report)
}

/// [`stage1_loss`] plus the unweighted component means.
pub fn stage1_loss_detailed(
    batch: &[AnchorBundle],
    head: &ToneHead,
    cfg: &Stage1Config,
    variant: &Stage1Variant,
) -> Result<(LossReport, Stage1Breakdown)> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(SitaError::EmptyInput("stage1_loss batch".into()));
    }
    let speaker_usable: Vec<usize> = (0..batch.len())
        .filter(|&i| batch[i].positive.is_some() && !batch[i].negatives.is_empty())
        .collect();
    let tone_usable: Vec<usize> = (0..batch.len())
        .filter(|&i| !batch[i].tone_positives.is_empty())
        .collect();
    for (i, b) in batch.iter().enumerate() {
        if !speaker_usable.contains(&i) && !tone_usable.contains(&i) {
            return Err(SitaError::Other(format!(
                "batch anchor {i} ({} negatives, no tone positives) usable for no loss",
                b.negatives.len()
            )));
        }
    }

    let mut out = LossReport::default();
    let rename = |report: &LossReport, i: usize| -> LossReport {
        let grads = report
            .grads
            .iter()
            .map(|(name, g)| {
                let new_name = if let Some(rest) = name.strip_prefix("tone_head.") {
                    format!("tone_head.{rest}")
                } else if let Some(bracket) = name.find('[') {
                    // negatives[k] -> negatives[i][k]
                    format!("{}[{i}]{}", &name[..bracket], &name[bracket..])
                } else {
                    format!("{name}[{i}]")
                };
                (new_name, g.clone())
            })
            .collect();
        LossReport {
            value: report.value,
            grads,
        }
    };

    let mut breakdown = Stage1Breakdown::default();
    if !speaker_usable.is_empty() {
        let w = cfg.alpha / speaker_usable.len() as f64;
        for &i in &speaker_usable {
            let b = &batch[i];
            let report = speaker_infonce(
                &b.anchor,
                b.positive.as_ref().expect("speaker-usable anchor"),
                &b.negatives,
                cfg,
            )?;
            breakdown.speaker += report.value / speaker_usable.len() as f64;
            out.accumulate(&rename(&report, i), w);
        }
    }
    if !tone_usable.is_empty() {
        let w = (1.0 - cfg.alpha) / tone_usable.len() as f64;
        for &i in &tone_usable {
            let b = &batch[i];
            let tone_report = match variant {
                Stage1Variant::Infonce => tone_infonce(
                    &b.anchor,
                    &b.tone_positives,
                    &b.hard_negatives,
                    &b.soft_negatives,
                    cfg,
                )?,
                Stage1Variant::Margin(mcfg) => margin_tone_loss(
                    &b.anchor,
                    &b.tone_positives,
                    &b.hard_negatives,
                    &b.soft_negatives,
                    mcfg,
                )?,
            };
            breakdown.tone_contrastive += tone_report.value / tone_usable.len() as f64;
            out.accumulate(&rename(&tone_report, i), w);
            let ce = tone_classifier_ce(&b.anchor, head, b.tone)?;
            breakdown.tone_ce += ce.value / tone_usable.len() as f64;
            out.accumulate(&rename(&ce, i), w * cfg.lambda_cls);
        }
    }
    out.assert_finite()?;
    Ok((out, breakdown))
}
