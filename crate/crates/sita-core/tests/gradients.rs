//! Finite-difference spot checks for every analytic gradient. The acceptance
//! suite runs the same oracles at volume; these keep module development
//! honest.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sita_core::ctc::{ctc_gradient, ctc_log_likelihood};
use sita_core::distill::{kd_loss, KdConfig};
use sita_core::losses::{
    margin_tone_loss, speaker_infonce, tone_classifier_ce, tone_infonce, MarginConfig,
    Stage1Config, ToneHead,
};
use sita_core::math::Embedding;

fn raw(values: &[f64]) -> Embedding {
    Embedding::from_raw(values.to_vec())
}

#[test]
fn speaker_infonce_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let cfg = Stage1Config::default();
    for _ in 0..30 {
        let dim = rng.random_range(2..5usize);
        let anchor = random_unit_embedding(&mut rng, dim);
        let positive = random_unit_embedding(&mut rng, dim);
        let negatives: Vec<Embedding> = (0..rng.random_range(1..5usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        let report = speaker_infonce(&anchor, &positive, &negatives, &cfg).unwrap();

        let value_at = |a: &[f64], p: &[f64], ns: &[Vec<f64>]| {
            let ns: Vec<Embedding> = ns.iter().map(|n| raw(n)).collect();
            speaker_infonce(&raw(a), &raw(p), &ns, &cfg).unwrap().value
        };
        let neg_values: Vec<Vec<f64>> = negatives.iter().map(|n| n.values.clone()).collect();

        let fd_anchor = finite_diff(
            |x| value_at(x, &positive.values, &neg_values),
            &anchor.values,
            FD_STEP,
        );
        assert_grad_close(report.grad("anchor").unwrap(), &fd_anchor, "anchor");

        let fd_pos = finite_diff(
            |x| value_at(&anchor.values, x, &neg_values),
            &positive.values,
            FD_STEP,
        );
        assert_grad_close(report.grad("positive").unwrap(), &fd_pos, "positive");

        for k in 0..negatives.len() {
            let fd_neg = finite_diff(
                |x| {
                    let mut ns = neg_values.clone();
                    ns[k] = x.to_vec();
                    value_at(&anchor.values, &positive.values, &ns)
                },
                &neg_values[k],
                FD_STEP,
            );
            assert_grad_close(
                report.grad(&format!("negatives[{k}]")).unwrap(),
                &fd_neg,
                "negative",
            );
        }
    }
}

#[test]
fn tone_infonce_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let cfg = Stage1Config::default();
    for _ in 0..30 {
        let dim = rng.random_range(2..5usize);
        let anchor = random_unit_embedding(&mut rng, dim);
        let p: Vec<Embedding> = (0..rng.random_range(1..4usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        let h: Vec<Embedding> = (0..rng.random_range(0..3usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        let s: Vec<Embedding> = (0..rng.random_range(0..3usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        let report = tone_infonce(&anchor, &p, &h, &s, &cfg).unwrap();

        let fd_anchor = finite_diff(
            |x| tone_infonce(&raw(x), &p, &h, &s, &cfg).unwrap().value,
            &anchor.values,
            FD_STEP,
        );
        assert_grad_close(report.grad("anchor").unwrap(), &fd_anchor, "anchor");

        for (set_name, set) in [("positives", &p), ("hard", &h), ("soft", &s)] {
            for k in 0..set.len() {
                let fd = finite_diff(
                    |x| {
                        let mut pp = p.clone();
                        let mut hh = h.clone();
                        let mut ss = s.clone();
                        match set_name {
                            "positives" => pp[k] = raw(x),
                            "hard" => hh[k] = raw(x),
                            _ => ss[k] = raw(x),
                        }
                        tone_infonce(&anchor, &pp, &hh, &ss, &cfg).unwrap().value
                    },
                    &set[k].values,
                    FD_STEP,
                );
                assert_grad_close(
                    report.grad(&format!("{set_name}[{k}]")).unwrap(),
                    &fd,
                    set_name,
                );
            }
        }
    }
}

#[test]
fn tone_ce_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..30 {
        let dim = rng.random_range(2..5usize);
        let n_tones = rng.random_range(2..6usize);
        let z = random_unit_embedding(&mut rng, dim);
        let mut head = ToneHead::zeros(n_tones, dim);
        for w in head.weight.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        for b in head.bias.iter_mut() {
            *b = rng.random_range(-1.0..1.0);
        }
        let tone = rng.random_range(1..=n_tones as u32);
        let report = tone_classifier_ce(&z, &head, tone).unwrap();

        let fd_w = finite_diff(
            |w| {
                let mut h2 = head.clone();
                h2.weight = w.to_vec();
                tone_classifier_ce(&z, &h2, tone).unwrap().value
            },
            &head.weight,
            FD_STEP,
        );
        assert_grad_close(report.grad("tone_head.W").unwrap(), &fd_w, "W");

        let fd_b = finite_diff(
            |b| {
                let mut h2 = head.clone();
                h2.bias = b.to_vec();
                tone_classifier_ce(&z, &h2, tone).unwrap().value
            },
            &head.bias,
            FD_STEP,
        );
        assert_grad_close(report.grad("tone_head.b").unwrap(), &fd_b, "b");

        let fd_z = finite_diff(
            |x| tone_classifier_ce(&raw(x), &head, tone).unwrap().value,
            &z.values,
            FD_STEP,
        );
        assert_grad_close(report.grad("anchor").unwrap(), &fd_z, "z");
    }
}

#[test]
fn margin_gradients_match_fd_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mcfg = MarginConfig::default();
    let mut checked = 0;
    while checked < 30 {
        let dim = rng.random_range(2..5usize);
        let anchor = random_unit_embedding(&mut rng, dim);
        let p: Vec<Embedding> = (0..rng.random_range(1..3usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        let h: Vec<Embedding> = (0..rng.random_range(1..3usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        let s: Vec<Embedding> = (0..rng.random_range(1..3usize))
            .map(|_| random_unit_embedding(&mut rng, dim))
            .collect();
        // The hinge is nondifferentiable at the margin; skip draws near it.
        let near_kink = h
            .iter()
            .map(|e| (anchor.dot(e).unwrap() - mcfg.m_hard).abs())
            .chain(s.iter().map(|e| (anchor.dot(e).unwrap() - mcfg.m_soft).abs()))
            .any(|gap| gap < 1e-3);
        if near_kink {
            continue;
        }
        checked += 1;
        let report = margin_tone_loss(&anchor, &p, &h, &s, &mcfg).unwrap();
        let fd_anchor = finite_diff(
            |x| margin_tone_loss(&raw(x), &p, &h, &s, &mcfg).unwrap().value,
            &anchor.values,
            FD_STEP,
        );
        assert_grad_close(report.grad("anchor").unwrap(), &fd_anchor, "anchor");

        for k in 0..p.len() {
            let fd = finite_diff(
                |x| {
                    let mut p2 = p.clone();
                    p2[k] = raw(x);
                    margin_tone_loss(&anchor, &p2, &h, &s, &mcfg).unwrap().value
                },
                &p[k].values,
                FD_STEP,
            );
            assert_grad_close(report.grad(&format!("positives[{k}]")).unwrap(), &fd, "P");
        }
        for k in 0..h.len() {
            let fd = finite_diff(
                |x| {
                    let mut h2 = h.clone();
                    h2[k] = raw(x);
                    margin_tone_loss(&anchor, &p, &h2, &s, &mcfg).unwrap().value
                },
                &h[k].values,
                FD_STEP,
            );
            assert_grad_close(report.grad(&format!("hard[{k}]")).unwrap(), &fd, "H");
        }
    }
}

#[test]
fn kd_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..30 {
        let frames = rng.random_range(1..4usize);
        let width = rng.random_range(2..5usize);
        let teacher = random_logits(&mut rng, frames, width);
        let student = random_logits(&mut rng, frames, width);
        let cfg = KdConfig {
            tau_kd: rng.random_range(0.5..4.0),
            delta: 0.7,
        };
        let report = kd_loss(&teacher, &student, &cfg).unwrap();
        let flat: Vec<f64> = student.iter().flatten().copied().collect();
        let fd = finite_diff(
            |x| {
                let reshaped: Vec<Vec<f64>> =
                    x.chunks(width).map(|c| c.to_vec()).collect();
                kd_loss(&teacher, &reshaped, &cfg).unwrap().value
            },
            &flat,
            FD_STEP,
        );
        assert_grad_close(report.grad("logits").unwrap(), &fd, "student logits");
    }
}

#[test]
fn ctc_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut checked = 0;
    while checked < 30 {
        let frames = rng.random_range(1..=5usize);
        let vocab = rng.random_range(1..=3usize);
        let width = vocab + 1;
        let target_len = rng.random_range(0..=frames.min(3));
        let target: Vec<usize> = (0..target_len)
            .map(|_| rng.random_range(1..=vocab))
            .collect();
        // Repeated symbols need separating blanks; skip infeasible draws.
        let needed = 2 * target.len() + 1;
        if needed > 2 * frames + 1
            || ctc_log_likelihood(&log_softmax_rows(&random_logits(&mut rng, 1, width)), &[])
                .is_err()
        {
            continue;
        }
        let logits = random_logits(&mut rng, frames, width);
        let posteriors = log_softmax_rows(&logits);
        if ctc_log_likelihood(&posteriors, &target).unwrap() == f64::NEG_INFINITY {
            continue;
        }
        checked += 1;
        let grad = ctc_gradient(&posteriors, &target).unwrap();
        let flat: Vec<f64> = logits.iter().flatten().copied().collect();
        let fd = finite_diff(
            |x| {
                let reshaped: Vec<Vec<f64>> = x.chunks(width).map(|c| c.to_vec()).collect();
                -ctc_log_likelihood(&log_softmax_rows(&reshaped), &target).unwrap()
            },
            &flat,
            FD_STEP,
        );
        let flat_grad: Vec<f64> = grad.iter().flatten().copied().collect();
        assert_grad_close(&flat_grad, &fd, "ctc logits");
    }
}
