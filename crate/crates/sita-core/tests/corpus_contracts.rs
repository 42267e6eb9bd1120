//! Generation, perturbation, mining, and split contracts on small corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sita_core::corpus::{
    generate, load_corpus, mine_pairs, perturb, speaker_transplant, split, CorpusSpec, Gender,
    MiningConfig, PairMiner, Perturbation, SpeakerSpec, Split, SplitPolicy, PITCH_CHANNEL,
};
use sita_core::SitaError;

fn speakers_2() -> Vec<SpeakerSpec> {
    vec![
        SpeakerSpec {
            speaker_id: "F0".into(),
            gender: Gender::F,
            base_pitch: 1.4,
            spectral_tilt: 0.2,
        },
        SpeakerSpec {
            speaker_id: "M0".into(),
            gender: Gender::M,
            base_pitch: -1.4,
            spectral_tilt: -0.15,
        },
    ]
}

fn toy_spec(noise: f64) -> CorpusSpec {
    CorpusSpec {
        n_base_words: 2,
        n_tones: 2,
        speakers: speakers_2(),
        frames_per_token: (6, 10),
        feature_dim: 6,
        seed: 9,
        noise_sigma: noise,
    }
}

#[test]
fn cardinality_and_distinct_ids() {
    let tokens = generate(&toy_spec(0.4)).unwrap();
    assert_eq!(tokens.len(), 8);
    let mut ids: Vec<&str> = tokens.iter().map(|t| t.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 8);
}

#[test]
fn generation_is_deterministic() {
    let a = generate(&toy_spec(0.4)).unwrap();
    let b = generate(&toy_spec(0.4)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.features.data(), y.features.data());
    }
}

#[test]
fn pitch_channel_differs_by_exactly_the_base_pitch_delta() {
    let tokens = generate(&toy_spec(0.0)).unwrap();
    let f = tokens.iter().find(|t| t.id.ends_with("_F0")).unwrap();
    let m = tokens
        .iter()
        .find(|t| t.word == f.word && t.id.ends_with("_M0"))
        .unwrap();
    assert_eq!(f.features.n_frames(), m.features.n_frames());
    let delta = 1.4 - (-1.4);
    for t in 0..f.features.n_frames() {
        let diff = f.features.row(t)[PITCH_CHANNEL] - m.features.row(t)[PITCH_CHANNEL];
        // Values are quantized through f32, so allow f32-level slack.
        assert!((diff - delta).abs() < 1e-5, "frame {t}: {diff}");
    }
}

#[test]
fn tone_channel_separation_with_zero_noise() {
    let tokens = generate(&toy_spec(0.0)).unwrap();
    let a = &tokens[0];
    let b = tokens
        .iter()
        .find(|t| t.base_word == a.base_word && t.tone != a.tone && t.speaker_id == a.speaker_id)
        .unwrap();
    let t = a.features.n_frames().min(b.features.n_frames());
    let l2: f64 = (0..t)
        .map(|ti| {
            let d = a.features.row(ti)[PITCH_CHANNEL] - b.features.row(ti)[PITCH_CHANNEL];
            d * d
        })
        .sum();
    assert!(l2 > 1e-6);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = toy_spec(0.4);
    spec.n_base_words = 1;
    assert!(generate(&spec).is_err());

    let mut spec = toy_spec(0.4);
    spec.speakers.retain(|s| s.gender == Gender::F);
    assert!(generate(&spec).is_err());

    let mut spec = toy_spec(0.4);
    spec.frames_per_token = (5, 3);
    assert!(generate(&spec).is_err());
}

#[test]
fn identity_perturbations_leave_features_unchanged() {
    let tokens = generate(&toy_spec(0.4)).unwrap();
    let tok = &tokens[0];
    let gain0 = perturb(tok, &Perturbation::Gain { db: 0.0 }, true, 1).unwrap();
    assert_eq!(gain0.features.data(), tok.features.data());
    let noise0 = perturb(tok, &Perturbation::AdditiveNoise { sigma: 0.0 }, true, 1).unwrap();
    assert_eq!(noise0.features.data(), tok.features.data());
}

#[test]
fn time_stretch_resamples_frame_count() {
    let mut spec = toy_spec(0.4);
    spec.frames_per_token = (100, 100);
    let tokens = generate(&spec).unwrap();
    let tok = &tokens[0];
    let stretched = perturb(tok, &Perturbation::TimeStretch { ratio: 1.25 }, true, 1).unwrap();
    assert_eq!(stretched.features.n_frames(), 80);
    assert_eq!(stretched.word, tok.word);
    assert_eq!(stretched.tone, tok.tone);
    assert_eq!(stretched.speaker_id, tok.speaker_id);
    assert!(perturb(tok, &Perturbation::TimeStretch { ratio: 1.3 }, true, 1).is_err());
}

#[test]
fn pitch_shift_is_tone_unsafe() {
    let tokens = generate(&toy_spec(0.4)).unwrap();
    let p = Perturbation::PitchShift { semitones: 1.0 };
    assert!(matches!(
        perturb(&tokens[0], &p, true, 1),
        Err(SitaError::ToneUnsafePerturbation)
    ));
    let shifted = perturb(&tokens[0], &p, false, 1).unwrap();
    assert_eq!(shifted.word, tokens[0].word);
}

#[test]
fn label_preservation_for_all_tone_safe_perturbations() {
    let tokens = generate(&toy_spec(0.4)).unwrap();
    let tok = &tokens[3];
    for p in [
        Perturbation::AdditiveNoise { sigma: 0.2 },
        Perturbation::TimeStretch { ratio: 0.8 },
        Perturbation::Gain { db: -3.0 },
    ] {
        let out = perturb(tok, &p, true, 5).unwrap();
        assert_eq!(out.id, tok.id);
        assert_eq!(out.word, tok.word);
        assert_eq!(out.base_word, tok.base_word);
        assert_eq!(out.tone, tok.tone);
        assert_eq!(out.speaker_id, tok.speaker_id);
        assert_eq!(out.gender, tok.gender);
        assert_eq!(out.split, tok.split);
    }
}

#[test]
fn speaker_transplant_moves_offsets_and_relabels() {
    let spec = toy_spec(0.0);
    let tokens = generate(&spec).unwrap();
    let f_tok = tokens.iter().find(|t| t.speaker_id == "F0").unwrap();
    let m_tok = tokens
        .iter()
        .find(|t| t.word == f_tok.word && t.speaker_id == "M0")
        .unwrap();
    let out = speaker_transplant(f_tok, &spec.speakers[0], &spec.speakers[1]).unwrap();
    assert_eq!(out.gender, Gender::M);
    assert_eq!(out.speaker_id, "M0");
    assert_eq!(out.word, f_tok.word);
    assert_ne!(out.id, f_tok.id);
    // With zero noise the transplanted features match the real M0 token.
    for t in 0..out.features.n_frames() {
        for (a, b) in out.features.row(t).iter().zip(m_tok.features.row(t)) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    let mut test_tok = f_tok.clone();
    test_tok.split = Split::Test;
    assert!(speaker_transplant(&test_tok, &spec.speakers[0], &spec.speakers[1]).is_err());
}

#[test]
fn mining_unique_positive_and_hard_tone_coverage() {
    let mut spec = toy_spec(0.3);
    spec.n_tones = 3;
    let tokens = generate(&spec).unwrap();
    let anchor = tokens
        .iter()
        .find(|t| t.gender == Gender::F && t.tone == 1)
        .unwrap();
    let cfg = MiningConfig::default();
    let pairs = mine_pairs(&tokens, &anchor.id, &cfg, 11).unwrap();

    // Exactly one opposite-gender token of the word exists.
    let expected_pos = tokens
        .iter()
        .find(|t| t.word == anchor.word && t.gender == Gender::M)
        .unwrap();
    assert_eq!(pairs.cross_gender_positive, expected_pos.id);

    // Hard negatives cover exactly the other two tones of the base word.
    let mut tones: Vec<u32> = pairs
        .hard_negatives
        .iter()
        .map(|id| tokens.iter().find(|t| &t.id == id).unwrap().tone)
        .collect();
    tones.sort();
    tones.dedup();
    assert_eq!(tones, vec![2, 3]);
}

#[test]
fn mining_small_pool_returns_exactly_the_pool() {
    let tokens = generate(&toy_spec(0.3)).unwrap();
    let anchor = &tokens[0];
    let cfg = MiningConfig {
        n_negatives: 4,
        ..MiningConfig::default()
    };
    let pairs = mine_pairs(&tokens, &anchor.id, &cfg, 21).unwrap();
    // The different-base-word pool holds exactly 4 tokens (other base word,
    // 2 tones x 2 speakers); sampling without replacement returns them all.
    let mut got = pairs.contrastive_negatives.clone();
    got.sort();
    let mut expected: Vec<String> = tokens
        .iter()
        .filter(|t| t.base_word != anchor.base_word)
        .map(|t| t.id.clone())
        .collect();
    expected.sort();
    assert_eq!(got, expected);
}

#[test]
fn mining_oversized_n_samples_with_replacement() {
    let tokens = generate(&toy_spec(0.3)).unwrap();
    let cfg = MiningConfig {
        n_negatives: 9,
        ..MiningConfig::default()
    };
    let pairs = mine_pairs(&tokens, &tokens[0].id, &cfg, 3).unwrap();
    assert_eq!(pairs.contrastive_negatives.len(), 9);
}

#[test]
fn mining_is_deterministic_and_validates_invariants_in_bulk() {
    let spec = CorpusSpec {
        n_base_words: 6,
        n_tones: 4,
        speakers: speakers_2(),
        frames_per_token: (5, 8),
        feature_dim: 5,
        seed: 77,
        noise_sigma: 0.5,
    };
    let tokens = generate(&spec).unwrap();
    let miner = PairMiner::new(&tokens);
    let cfg = MiningConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..10_000u64 {
        let anchor = &tokens[rng.random_range(0..tokens.len())];
        let pairs = miner.mine(&anchor.id, &cfg, trial).unwrap();
        let pairs2 = miner.mine(&anchor.id, &cfg, trial).unwrap();
        assert_eq!(pairs, pairs2);

        let find = |id: &String| tokens.iter().find(|t| &t.id == id).unwrap();
        let pos = find(&pairs.cross_gender_positive);
        assert_eq!(pos.word, anchor.word);
        assert_ne!(pos.gender, anchor.gender);
        for id in &pairs.contrastive_negatives {
            assert_ne!(find(id).word, anchor.word);
        }
        for id in &pairs.tone_positives {
            let t = find(id);
            assert_eq!(t.word, anchor.word);
            assert_eq!(t.tone, anchor.tone);
            assert_ne!(t.id, anchor.id);
        }
        for id in &pairs.hard_negatives {
            let t = find(id);
            assert_eq!(t.base_word, anchor.base_word);
            assert_ne!(t.tone, anchor.tone);
        }
        for id in &pairs.soft_negatives {
            assert_ne!(find(id).base_word, anchor.base_word);
        }
    }
}

#[test]
fn coverage_split_represents_every_base_word() {
    let spec = CorpusSpec {
        n_base_words: 5,
        n_tones: 3,
        speakers: vec![
            SpeakerSpec {
                speaker_id: "F0".into(),
                gender: Gender::F,
                base_pitch: 1.2,
                spectral_tilt: 0.1,
            },
            SpeakerSpec {
                speaker_id: "F1".into(),
                gender: Gender::F,
                base_pitch: 1.6,
                spectral_tilt: -0.1,
            },
            SpeakerSpec {
                speaker_id: "M0".into(),
                gender: Gender::M,
                base_pitch: -1.2,
                spectral_tilt: 0.15,
            },
            SpeakerSpec {
                speaker_id: "M1".into(),
                gender: Gender::M,
                base_pitch: -1.7,
                spectral_tilt: -0.2,
            },
        ],
        frames_per_token: (5, 8),
        feature_dim: 5,
        seed: 5,
        noise_sigma: 0.4,
    };
    let mut tokens = generate(&spec).unwrap();
    split(&mut tokens, &SplitPolicy::Coverage, 42).unwrap();
    for base_index in 0..5 {
        let base = sita_core::corpus::base_word(base_index);
        assert!(tokens
            .iter()
            .any(|t| t.base_word == base && t.split == Split::Test));
        assert!(tokens
            .iter()
            .any(|t| t.base_word == base && t.split == Split::Train));
    }
    // Each word contributes one test token per gender here.
    for tok in &tokens {
        let same_word_test_f = tokens
            .iter()
            .filter(|t| t.word == tok.word && t.split == Split::Test && t.gender == Gender::F)
            .count();
        assert_eq!(same_word_test_f, 1);
    }
}

#[test]
fn held_out_speaker_split_is_exact() {
    let mut tokens = generate(&toy_spec(0.4)).unwrap();
    split(
        &mut tokens,
        &SplitPolicy::HeldOutSpeaker {
            speaker_id: "M0".into(),
        },
        0,
    )
    .unwrap();
    for tok in &tokens {
        assert_eq!(tok.split == Split::Test, tok.speaker_id == "M0");
    }
    assert!(split(
        &mut tokens,
        &SplitPolicy::HeldOutSpeaker {
            speaker_id: "M3".into()
        },
        0
    )
    .is_err());
}

#[test]
fn coverage_split_golden_assignment() {
    let mut tokens = generate(&toy_spec(0.4)).unwrap();
    split(&mut tokens, &SplitPolicy::Coverage, 42).unwrap();
    let assignment: Vec<String> = tokens
        .iter()
        .map(|t| format!("{}:{}", t.id, t.split))
        .collect();
    // Frozen from one reference run; guards against silent drift in the
    // seeded assignment.
    let golden: Vec<&str> = GOLDEN_SPLIT.trim().lines().collect();
    assert_eq!(assignment, golden);
}

// Regenerate by printing `assignment` above after an intentional change.
const GOLDEN_SPLIT: &str = "
pa1_F0:test
pa1_M0:train
pa2_F0:test
pa2_M0:train
pe1_F0:train
pe1_M0:test
pe2_F0:test
pe2_M0:train
";

#[test]
fn manifest_round_trip_and_byte_stability() {
    let dir = tempfile::tempdir().unwrap();
    let mut tokens = generate(&toy_spec(0.4)).unwrap();
    split(&mut tokens, &SplitPolicy::Coverage, 42).unwrap();
    sita_core::corpus::write_corpus(dir.path(), &tokens).unwrap();
    let manifest_a = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
    let loaded = load_corpus(dir.path()).unwrap();
    assert_eq!(loaded.len(), tokens.len());
    for (a, b) in loaded.iter().zip(&tokens) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.word, b.word);
        assert_eq!(a.split, b.split);
        assert_eq!(a.features.data(), b.features.data());
    }
    sita_core::corpus::write_corpus(dir.path(), &tokens).unwrap();
    let manifest_b = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(manifest_a, manifest_b);

    // Field order and content of the first record is part of the format.
    let first_line = String::from_utf8(manifest_a)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let f0 = &tokens[0];
    assert!(first_line.starts_with(&format!(
        "{{\"id\":\"{}\",\"word\":\"{}\",\"base_word\":\"{}\",\"tone\":{},\"speaker_id\":\"{}\",\"gender\":\"{}\",\"split\":\"{}\"",
        f0.id, f0.word, f0.base_word, f0.tone, f0.speaker_id, f0.gender, f0.split
    )));
}
