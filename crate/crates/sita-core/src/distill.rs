//! Teacher-student frame-wise knowledge distillation and the Stage-2
//! objective combination. The teacher is frozen: gradients flow into the
//! student logits only, under the shared `logits` group name so CTC and KD
//! contributions merge directly.

use crate::error::{Result, SitaError};
use crate::losses::LossReport;
use crate::math::log_sum_exp;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdConfig {
    /// Softening temperature for both teacher and student posteriors.
    pub tau_kd: f64,
    /// Weight of the CTC term; 1 - delta goes to KD. Use 1.0 to disable KD.
    pub delta: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            tau_kd: 3.0,
            delta: 0.7,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_kd <= 0.0 {
            return Err(SitaError::InvalidConfig(
                "KD temperature must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(SitaError::InvalidConfig("delta outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn kd_enabled(&self) -> bool {
        self.delta < 1.0
    }
}

/// Row-wise log-softmax of logits / tau_kd.
pub fn soften(logits: &[Vec<f64>], tau_kd: f64) -> Result<Vec<Vec<f64>>> {
    if tau_kd <= 0.0 {
        return Err(SitaError::InvalidConfig(
            "KD temperature must be positive".into(),
        ));
    }
    logits
        .iter()
        .map(|row| {
            if row.is_empty() {
                return Err(SitaError::EmptyInput("soften row".into()));
            }
            let scaled: Vec<f64> = row.iter().map(|u| u / tau_kd).collect();
            let lse = log_sum_exp(&scaled)?;
            Ok(scaled.iter().map(|s| s - lse).collect())
        })
        .collect()
}

/// Mean over frames of KL(teacher || student), both softened at tau_kd.
/// Gradient group: `logits` (the student's); the teacher has none.
pub fn kd_loss(
    teacher_logits: &[Vec<f64>],
    student_logits: &[Vec<f64>],
    cfg: &KdConfig,
) -> Result<LossReport> {
    cfg.validate()?;
    if teacher_logits.len() != student_logits.len()
        || teacher_logits
            .iter()
            .zip(student_logits)
            .any(|(t, s)| t.len() != s.len())
    {
        return Err(SitaError::DimensionMismatch(format!(
            "teacher {}x? vs student {}x? logits",
            teacher_logits.len(),
            student_logits.len()
        )));
    }
    let frames = teacher_logits.len();
    if frames == 0 {
        return Err(SitaError::EmptyInput("kd_loss".into()));
    }
    let teacher_log = soften(teacher_logits, cfg.tau_kd)?;
    let student_log = soften(student_logits, cfg.tau_kd)?;

    let mut value = 0.0;
    let width = teacher_logits[0].len();
    let mut grad = vec![0.0; frames * width];
    for t in 0..frames {
        for k in 0..width {
            let p_teacher = teacher_log[t][k].exp();
            let p_student = student_log[t][k].exp();
            value += p_teacher * (teacher_log[t][k] - student_log[t][k]);
            // d/du_student of mean-frame KL.
            grad[t * width + k] = (p_student - p_teacher) / (cfg.tau_kd * frames as f64);
        }
    }
    value /= frames as f64;

    let mut grads = BTreeMap::new();
    grads.insert("logits".to_string(), grad);
    Ok(LossReport { value, grads })
}

/// delta * L_CTC + (1 - delta) * L_KD, gradients combined with the same
/// weights. Pass `None` for the KD component when delta = 1.
pub fn stage2_loss(ctc: &LossReport, kd: Option<&LossReport>, cfg: &KdConfig) -> Result<LossReport> {
    cfg.validate()?;
    if cfg.kd_enabled() && kd.is_none() {
        return Err(SitaError::MissingArtifact(
            "KD component required when delta < 1".into(),
        ));
    }
    let mut out = LossReport::default();
    out.accumulate(ctc, cfg.delta);
    if let Some(kd_report) = kd {
        out.accumulate(kd_report, 1.0 - cfg.delta);
    }
    Ok(out)
}
