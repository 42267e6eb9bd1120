//! Synthetic tonal-word corpus: generation, perturbation, train/test
//! splitting, anchor/positive/negative mining, and the manifest + feature
//! file formats.
//!
//! Each token's feature matrix is built from three ingredients: a per-base-word
//! segment template on D-2 channels, a per-tone pitch contour on channel 0,
//! and a per-speaker offset (base pitch on the pitch channel, spectral tilt as
//! a ramp over the segment channels), plus seeded per-token noise. Channel 1
//! carries a normalized time ramp so frame-wise models can resolve temporal
//! structure. Values are quantized through f32 so in-memory generation and
//! the on-disk feature files agree exactly.

use crate::error::{Result, SitaError};
use crate::math::FrameSequence;
use crate::seeding::substream_rng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Pitch-channel units added per semitone of pitch shift.
pub const SEMITONE_DELTA: f64 = 0.25;

/// Noise on the pitch channel is this fraction of the segment-channel sigma;
/// pitch tracks are much cleaner than spectral envelopes.
pub const PITCH_NOISE_FACTOR: f64 = 0.3;

/// Per-channel amplitude of the speaker signature on segment channels.
pub const SPEAKER_SIGNATURE_AMP: f64 = 0.1;

/// Amplitude of speaker-keyed bipolar transients (a one-frame burst followed
/// by its negation, like a speaker's characteristic plosive release). Zero
/// mean by construction, so they perturb per-channel maxima without moving
/// mean-pooled geometry; the channels they land on are a fixed habit of the
/// speaker, which the invariance objective learns to see past.
pub const TRANSIENT_AMP: f64 = 1.7;

/// Number of segment channels carrying transients per speaker.
pub const TRANSIENT_CHANNELS: usize = 3;

/// The segment channels on which a speaker's transients land.
pub fn transient_channels(speaker_id: &str, n_segments: usize) -> Vec<usize> {
    let mut rng = substream_rng(
        crate::seeding::stable_hash(speaker_id),
        "transient_channels",
        &[],
    );
    let mut all: Vec<usize> = (0..n_segments).collect();
    let mut picked = Vec::new();
    for _ in 0..TRANSIENT_CHANNELS.min(n_segments) {
        picked.push(all.swap_remove(rng.random_range(0..all.len())));
    }
    picked.sort();
    picked
}

/// A speaker's idiosyncratic spectral signature: a constant offset vector
/// over the segment channels, derived from the speaker id alone so that
/// voice transplants can move it between speakers. Together with spectral
/// tilt this makes untrained embeddings cluster by speaker.
pub fn speaker_signature(speaker_id: &str, n_segments: usize) -> Vec<f64> {
    let mut rng = substream_rng(
        crate::seeding::stable_hash(speaker_id),
        "speaker_signature",
        &[],
    );
    (0..n_segments)
        .map(|_| SPEAKER_SIGNATURE_AMP * sample_normal(&mut rng))
        .collect()
}

/// Index of the pitch-contour channel.
pub const PITCH_CHANNEL: usize = 0;
/// Index of the time-ramp channel.
pub const RAMP_CHANNEL: usize = 1;
/// First segment-template channel; segments span the remaining D-2 channels.
pub const SEGMENT_CHANNEL0: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl Gender {
    pub fn opposite(self) -> Gender {
        match self {
            Gender::F => Gender::M,
            Gender::M => Gender::F,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::F => write!(f, "F"),
            Gender::M => write!(f, "M"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One word utterance with its labels and frame features.
#[derive(Debug, Clone)]
pub struct Token {
    pub id: String,
    pub word: String,
    pub base_word: String,
    pub tone: u32,
    pub speaker_id: String,
    pub gender: Gender,
    pub split: Split,
    pub features: FrameSequence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerSpec {
    pub speaker_id: String,
    pub gender: Gender,
    pub base_pitch: f64,
    pub spectral_tilt: f64,
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_base_words: usize,
    #[serde(default = "default_n_tones")]
    pub n_tones: u32,
    pub speakers: Vec<SpeakerSpec>,
    /// Inclusive [min, max] range of frames per token.
    pub frames_per_token: (usize, usize),
    pub feature_dim: usize,
    pub seed: u64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
}

fn default_n_tones() -> u32 {
    7
}

fn default_noise_sigma() -> f64 {
    0.6
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_base_words < 2 {
            return Err(SitaError::InvalidConfig("need at least 2 base words".into()));
        }
        if self.n_tones < 1 || (self.n_tones != 7 && self.n_tones > 9) {
            return Err(SitaError::InvalidConfig(format!(
                "unsupported tone inventory size {}",
                self.n_tones
            )));
        }
        let has_f = self.speakers.iter().any(|s| s.gender == Gender::F);
        let has_m = self.speakers.iter().any(|s| s.gender == Gender::M);
        if !has_f || !has_m {
            return Err(SitaError::InvalidConfig(
                "need at least one speaker of each gender".into(),
            ));
        }
        for (i, s) in self.speakers.iter().enumerate() {
            if self.speakers[..i].iter().any(|o| o.speaker_id == s.speaker_id) {
                return Err(SitaError::InvalidConfig(format!(
                    "duplicate speaker id {}",
                    s.speaker_id
                )));
            }
        }
        let (lo, hi) = self.frames_per_token;
        if lo < 1 || hi < lo {
            return Err(SitaError::InvalidConfig(format!(
                "bad frames_per_token range ({lo}, {hi})"
            )));
        }
        if self.feature_dim < 3 {
            return Err(SitaError::InvalidConfig(
                "feature_dim must be >= 3 (pitch + ramp + segments)".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(SitaError::InvalidConfig("negative noise sigma".into()));
        }
        Ok(())
    }
}

/// Romanized tone markers: the seven-tone inventory uses final consonants,
/// anything else uses digits. Base words always end in a vowel, so word ->
/// (base_word, tone) decomposition is unambiguous.
pub fn tone_marker(n_tones: u32, tone: u32) -> String {
    if n_tones == 7 {
        ["b", "", "s", "j", "v", "g", "m"][(tone - 1) as usize].to_string()
    } else {
        tone.to_string()
    }
}

pub fn word_for(base_word: &str, n_tones: u32, tone: u32) -> String {
    format!("{base_word}{}", tone_marker(n_tones, tone))
}

const CONSONANTS: [char; 10] = ['p', 't', 'k', 'n', 'l', 'h', 'd', 'r', 'w', 'y'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

/// Deterministic base-word inventory: CV syllables, then CVCV.
pub fn base_word(index: usize) -> String {
    let cv = CONSONANTS.len() * VOWELS.len();
    if index < cv {
        format!(
            "{}{}",
            CONSONANTS[index / VOWELS.len()],
            VOWELS[index % VOWELS.len()]
        )
    } else {
        let i = index - cv;
        let first = i / cv;
        let second = i % cv;
        format!(
            "{}{}{}{}",
            CONSONANTS[first / VOWELS.len() % CONSONANTS.len()],
            VOWELS[first % VOWELS.len()],
            CONSONANTS[second / VOWELS.len()],
            VOWELS[second % VOWELS.len()]
        )
    }
}

/// Gap between adjacent tone levels on the pitch channel. Speaker base
/// pitches must stay inside half a gap for tones to remain separable from
/// mean pitch across speakers.
pub const TONE_LEVEL_GAP: f64 = 0.45;

/// Pitch contour of a tone at normalized time u in [0, 1]: evenly spaced
/// mean levels plus a zero-mean shape (level / rising / dipping / falling,
/// with creak texture on the upper tones of the seven-tone inventory).
pub fn tone_contour(n_tones: u32, tone: u32, u: f64) -> f64 {
    let n = n_tones.max(2) as f64;
    let k = (tone - 1) as f64;
    let span = TONE_LEVEL_GAP * (n - 1.0);
    let level = span / 2.0 - TONE_LEVEL_GAP * k;
    let shape = match (tone - 1) % 4 {
        0 => 0.0,
        1 => 1.4 * (u - 0.5),
        2 => -0.85 * ((std::f64::consts::PI * u).sin() - std::f64::consts::FRAC_2_PI),
        _ => -1.4 * (u - 0.5),
    };
    let creak = if n_tones == 7 && tone >= 6 {
        0.25 * (12.0 * std::f64::consts::PI * u).sin()
    } else {
        0.0
    };
    level + shape + creak
}

/// Per-channel amplitude of phone prototype vectors.
const PHONE_PROTO_AMP: f64 = 1.0;
/// Amplitude of the per-word idiosyncratic curve on top of its phones.
const WORD_DEV_AMP: f64 = 0.35;
/// Fraction of the token tail reserved for the tone-bearing coda.
const CODA_FRACTION: f64 = 0.18;

/// The segmental content of a base word: a sequence of phone prototype
/// vectors laid out over time (consonant and vowel phases in letter order,
/// then a short coda), plus a small per-word random curve. Words sharing
/// letters share prototypes, so untrained embeddings start out collapsed,
/// while every frame's phone is linearly decodable for the CTC stage.
struct Template {
    /// One prototype vector per letter of the base word.
    phones: Vec<Vec<f64>>,
    /// Per channel: (a1, phase1, a2, phase2) of the word's own curve.
    dev: Vec<(f64, f64, f64, f64)>,
}

/// Prototype vector of one letter, shared corpus-wide.
fn phone_prototype(seed: u64, letter: char, n_segments: usize) -> Vec<f64> {
    let mut rng = substream_rng(
        seed,
        "phone_proto",
        &[crate::seeding::stable_hash(&letter.to_string())],
    );
    (0..n_segments)
        .map(|_| rng.random_range(-PHONE_PROTO_AMP..PHONE_PROTO_AMP))
        .collect()
}

impl Template {
    fn seeded(seed: u64, base_index: usize, base: &str, n_segments: usize) -> Self {
        let phones = base
            .chars()
            .map(|letter| phone_prototype(seed, letter, n_segments))
            .collect();
        let dev = (0..n_segments)
            .map(|c| {
                let mut word = substream_rng(seed, "template", &[base_index as u64, c as u64]);
                let a1 = word.random_range(-WORD_DEV_AMP..WORD_DEV_AMP);
                let p1 = word.random_range(0.0..std::f64::consts::TAU);
                let a2 = word.random_range(-WORD_DEV_AMP..WORD_DEV_AMP);
                let p2 = word.random_range(0.0..std::f64::consts::TAU);
                (a1, p1, a2, p2)
            })
            .collect();
        Template { phones, dev }
    }

    /// Index of the phone sounding at normalized time u; the trailing coda
    /// keeps the last phone's quality.
    fn phone_at(&self, u: f64) -> usize {
        let body = 1.0 - CODA_FRACTION;
        if u >= body {
            return self.phones.len() - 1;
        }
        let pos = (u / body * self.phones.len() as f64).floor() as usize;
        pos.min(self.phones.len() - 1)
    }

    fn value(&self, channel: usize, u: f64) -> f64 {
        let (a1, p1, a2, p2) = self.dev[channel];
        self.phones[self.phone_at(u)][channel]
            + a1 * (std::f64::consts::PI * u + p1).cos()
            + a2 * (2.0 * std::f64::consts::PI * u + p2).cos()
    }
}

/// Spectral tilt weight of a segment channel: a ramp over channel index.
fn tilt_ramp(channel: usize, n_segments: usize) -> f64 {
    if n_segments <= 1 {
        0.0
    } else {
        2.0 * channel as f64 / (n_segments - 1) as f64 - 1.0
    }
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Generates one token per (base word, tone, speaker) combination.
/// Fully deterministic given the spec's seed; feature values are quantized
/// through f32 so in-memory and on-disk corpora agree bit for bit.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<Token>> {
    spec.validate()?;
    let n_segments = spec.feature_dim - SEGMENT_CHANNEL0;
    let mut tokens = Vec::new();
    for base_index in 0..spec.n_base_words {
        let base = base_word(base_index);
        let template = Template::seeded(spec.seed, base_index, &base, n_segments);
        for tone in 1..=spec.n_tones {
            // Frame count depends only on (base word, tone) so that same-word
            // tokens across speakers align frame for frame.
            let mut len_rng =
                substream_rng(spec.seed, "frames", &[base_index as u64, tone as u64]);
            let (lo, hi) = spec.frames_per_token;
            let t = len_rng.random_range(lo..=hi);
            for (speaker_index, speaker) in spec.speakers.iter().enumerate() {
                let mut noise_rng = substream_rng(
                    spec.seed,
                    "noise",
                    &[base_index as u64, tone as u64, speaker_index as u64],
                );
                let signature = speaker_signature(&speaker.speaker_id, n_segments);
                let mut fr = FrameSequence::zeros(t, spec.feature_dim);
                for ti in 0..t {
                    let u = if t > 1 { ti as f64 / (t - 1) as f64 } else { 0.0 };
                    let row = fr.row_mut(ti);
                    row[PITCH_CHANNEL] = quantize(
                        tone_contour(spec.n_tones, tone, u)
                            + speaker.base_pitch
                            + PITCH_NOISE_FACTOR
                                * spec.noise_sigma
                                * sample_normal(&mut noise_rng),
                    );
                    row[RAMP_CHANNEL] = quantize(u);
                    for c in 0..n_segments {
                        row[SEGMENT_CHANNEL0 + c] = quantize(
                            template.value(c, u)
                                + speaker.spectral_tilt * tilt_ramp(c, n_segments)
                                + signature[c]
                                + spec.noise_sigma * sample_normal(&mut noise_rng),
                        );
                    }
                }
                // Speaker-habit transients; burst times vary per token.
                for &seg in &transient_channels(&speaker.speaker_id, n_segments) {
                    let c = SEGMENT_CHANNEL0 + seg;
                    let t0 = noise_rng.random_range(0..t.saturating_sub(1).max(1));
                    let sign = if noise_rng.random_range(0.0..1.0) < 0.5 {
                        1.0
                    } else {
                        -1.0
                    };
                    if t0 + 1 < t {
                        let v0 = fr.row(t0)[c];
                        fr.row_mut(t0)[c] = quantize(v0 + sign * TRANSIENT_AMP);
                        let v1 = fr.row(t0 + 1)[c];
                        fr.row_mut(t0 + 1)[c] = quantize(v1 - sign * TRANSIENT_AMP);
                    }
                }
                let word = word_for(&base, spec.n_tones, tone);
                tokens.push(Token {
                    id: format!("{word}_{}", speaker.speaker_id),
                    word,
                    base_word: base.clone(),
                    tone,
                    speaker_id: speaker.speaker_id.clone(),
                    gender: speaker.gender,
                    split: Split::Train,
                    features: fr,
                });
            }
        }
    }
    Ok(tokens)
}

/// Box-Muller normal sample; two uniforms per call keeps the stream layout
/// independent of the rand crate's distribution internals.
fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Lexical-preserving acoustic perturbations. Pitch shifting is tone-unsafe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    AdditiveNoise { sigma: f64 },
    TimeStretch { ratio: f64 },
    Gain { db: f64 },
    PitchShift { semitones: f64 },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Perturbation::AdditiveNoise { sigma } if *sigma < 0.0 => {
                Err(SitaError::InvalidConfig("negative noise sigma".into()))
            }
            Perturbation::TimeStretch { ratio } if !(0.8..=1.25).contains(ratio) => Err(
                SitaError::InvalidConfig(format!("time stretch ratio {ratio} outside [0.8, 1.25]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Applies a perturbation, returning a new token with identical labels.
/// Under `tone_safe`, pitch shifting is rejected outright.
pub fn perturb(token: &Token, p: &Perturbation, tone_safe: bool, seed: u64) -> Result<Token> {
    p.validate()?;
    if tone_safe && matches!(p, Perturbation::PitchShift { .. }) {
        return Err(SitaError::ToneUnsafePerturbation);
    }
    let d = token.features.dim();
    let t = token.features.n_frames();
    let features = match *p {
        Perturbation::AdditiveNoise { sigma } => {
            let mut rng = substream_rng(seed, "perturb_noise", &[]);
            let mut fr = token.features.clone();
            for ti in 0..t {
                let row = fr.row_mut(ti);
                for (c, v) in row.iter_mut().enumerate() {
                    if c != RAMP_CHANNEL {
                        *v += sigma * sample_normal(&mut rng);
                    }
                }
            }
            fr
        }
        Perturbation::TimeStretch { ratio } => {
            let new_t = ((t as f64 / ratio).round() as usize).max(1);
            let mut fr = FrameSequence::zeros(new_t, d);
            for ti in 0..new_t {
                let pos = if new_t > 1 {
                    ti as f64 * (t - 1) as f64 / (new_t - 1) as f64
                } else {
                    0.0
                };
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let frac = pos - lo as f64;
                let (a, b) = (token.features.row(lo), token.features.row(hi.min(t - 1)));
                let row = fr.row_mut(ti);
                for c in 0..d {
                    row[c] = (1.0 - frac) * a[c] + frac * b[c];
                }
            }
            fr
        }
        Perturbation::Gain { db } => {
            let factor = 10f64.powf(db / 20.0);
            let mut fr = token.features.clone();
            for ti in 0..t {
                let row = fr.row_mut(ti);
                for c in SEGMENT_CHANNEL0..d {
                    row[c] *= factor;
                }
            }
            fr
        }
        Perturbation::PitchShift { semitones } => {
            let mut fr = token.features.clone();
            for ti in 0..t {
                fr.row_mut(ti)[PITCH_CHANNEL] += semitones * SEMITONE_DELTA;
            }
            fr
        }
    };
    Ok(Token {
        features,
        ..token.clone()
    })
}

/// Swaps a training token's speaker offsets for another training speaker's,
/// yielding a cross-speaker view of the same word (the voice-conversion
/// stand-in). Restricted to the training split.
pub fn speaker_transplant(token: &Token, from: &SpeakerSpec, to: &SpeakerSpec) -> Result<Token> {
    if token.split != Split::Train {
        return Err(SitaError::InvalidConfig(
            "speaker transplant is restricted to the training split".into(),
        ));
    }
    if token.speaker_id != from.speaker_id {
        return Err(SitaError::InvalidConfig(format!(
            "token {} was not spoken by {}",
            token.id, from.speaker_id
        )));
    }
    let d = token.features.dim();
    let n_segments = d - SEGMENT_CHANNEL0;
    let from_sig = speaker_signature(&from.speaker_id, n_segments);
    let to_sig = speaker_signature(&to.speaker_id, n_segments);
    let mut fr = token.features.clone();
    for ti in 0..fr.n_frames() {
        let row = fr.row_mut(ti);
        row[PITCH_CHANNEL] += to.base_pitch - from.base_pitch;
        for c in 0..n_segments {
            row[SEGMENT_CHANNEL0 + c] += (to.spectral_tilt - from.spectral_tilt)
                * tilt_ramp(c, n_segments)
                + to_sig[c]
                - from_sig[c];
        }
    }
    Ok(Token {
        id: format!("{}_vc_{}", token.id, to.speaker_id),
        speaker_id: to.speaker_id.clone(),
        gender: to.gender,
        features: fr,
        ..token.clone()
    })
}

/// Per-anchor pair sets consumed by the Stage-1 losses.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub anchor: String,
    pub cross_gender_positive: String,
    pub contrastive_negatives: Vec<String>,
    pub tone_positives: Vec<String>,
    pub hard_negatives: Vec<String>,
    pub soft_negatives: Vec<String>,
}

/// Pool sizes for mining. Caps bound the per-anchor work; pools smaller than
/// a cap are taken whole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Contrastive negatives per anchor (N).
    pub n_negatives: usize,
    pub p_cap: usize,
    pub h_cap: usize,
    pub s_cap: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            n_negatives: 20,
            p_cap: 2,
            h_cap: 24,
            s_cap: 10,
        }
    }
}

/// Index-based pair sets used internally by the trainer.
#[derive(Debug, Clone)]
pub struct PairSetIdx {
    pub anchor: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
    pub tone_positives: Vec<usize>,
    pub hard_negatives: Vec<usize>,
    pub soft_negatives: Vec<usize>,
}

/// Precomputed label indices over a corpus for repeated mining.
pub struct PairMiner<'a> {
    tokens: &'a [Token],
    by_id: BTreeMap<&'a str, usize>,
    by_word: BTreeMap<&'a str, Vec<usize>>,
    by_base: BTreeMap<&'a str, Vec<usize>>,
}

impl<'a> PairMiner<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        let mut by_id = BTreeMap::new();
        let mut by_word: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut by_base: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            by_id.insert(tok.id.as_str(), i);
            by_word.entry(tok.word.as_str()).or_default().push(i);
            by_base.entry(tok.base_word.as_str()).or_default().push(i);
        }
        PairMiner {
            tokens,
            by_id,
            by_word,
            by_base,
        }
    }

    pub fn tokens(&self) -> &'a [Token] {
        self.tokens
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// True when the token has an opposite-gender token of the same word.
    pub fn has_cross_gender_positive(&self, idx: usize) -> bool {
        let anchor = &self.tokens[idx];
        self.by_word[anchor.word.as_str()]
            .iter()
            .any(|&i| self.tokens[i].gender != anchor.gender)
    }

    pub fn mine_idx(&self, anchor_id: &str, cfg: &MiningConfig, rng_seed: u64) -> Result<PairSetIdx> {
        if cfg.n_negatives < 1 {
            return Err(SitaError::InvalidConfig("need at least one negative".into()));
        }
        let anchor_idx = self
            .index_of(anchor_id)
            .ok_or_else(|| SitaError::UnknownToken(anchor_id.to_string()))?;
        let anchor = &self.tokens[anchor_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

        let positives: Vec<usize> = self.by_word[anchor.word.as_str()]
            .iter()
            .copied()
            .filter(|&i| self.tokens[i].gender != anchor.gender)
            .collect();
        if positives.is_empty() {
            return Err(SitaError::NoCrossGenderPositive(anchor.id.clone()));
        }
        let positive = positives[rng.random_range(0..positives.len())];

        // Contrastive negatives: different base word, sampled without
        // replacement when the pool allows, with replacement otherwise.
        let neg_pool: Vec<usize> = (0..self.tokens.len())
            .filter(|&i| self.tokens[i].base_word != anchor.base_word)
            .collect();
        if neg_pool.is_empty() {
            return Err(SitaError::InvalidConfig(
                "no different-word tokens available as negatives".into(),
            ));
        }
        let negatives = if neg_pool.len() >= cfg.n_negatives {
            sample_without_replacement(&neg_pool, cfg.n_negatives, &mut rng)
        } else {
            (0..cfg.n_negatives)
                .map(|_| neg_pool[rng.random_range(0..neg_pool.len())])
                .collect()
        };

        let p_pool: Vec<usize> = self.by_word[anchor.word.as_str()]
            .iter()
            .copied()
            .filter(|&i| i != anchor_idx)
            .collect();
        let tone_positives = take_capped(&p_pool, cfg.p_cap, &mut rng);

        let h_pool: Vec<usize> = self.by_base[anchor.base_word.as_str()]
            .iter()
            .copied()
            .filter(|&i| self.tokens[i].tone != anchor.tone)
            .collect();
        let hard_negatives = take_capped(&h_pool, cfg.h_cap, &mut rng);

        let soft_negatives = take_capped(&neg_pool, cfg.s_cap, &mut rng);

        Ok(PairSetIdx {
            anchor: anchor_idx,
            positive,
            negatives,
            tone_positives,
            hard_negatives,
            soft_negatives,
        })
    }

    pub fn mine(&self, anchor_id: &str, cfg: &MiningConfig, rng_seed: u64) -> Result<PairSet> {
        let idx = self.mine_idx(anchor_id, cfg, rng_seed)?;
        let ids = |v: &[usize]| -> Vec<String> {
            v.iter().map(|&i| self.tokens[i].id.clone()).collect()
        };
        Ok(PairSet {
            anchor: self.tokens[idx.anchor].id.clone(),
            cross_gender_positive: self.tokens[idx.positive].id.clone(),
            contrastive_negatives: ids(&idx.negatives),
            tone_positives: ids(&idx.tone_positives),
            hard_negatives: ids(&idx.hard_negatives),
            soft_negatives: ids(&idx.soft_negatives),
        })
    }
}

fn sample_without_replacement(pool: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut items = pool.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n.min(items.len()) {
        let i = rng.random_range(0..items.len());
        out.push(items.swap_remove(i));
    }
    out
}

fn take_capped(pool: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if pool.len() <= cap {
        pool.to_vec()
    } else {
        sample_without_replacement(pool, cap, rng)
    }
}

/// Mines one anchor's pair sets from a plain token list.
pub fn mine_pairs(
    corpus: &[Token],
    anchor_id: &str,
    cfg: &MiningConfig,
    rng_seed: u64,
) -> Result<PairSet> {
    PairMiner::new(corpus).mine(anchor_id, cfg, rng_seed)
}

/// Train/test assignment policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Every base word is represented in the test split; words with enough
    /// tokens contribute one test token per gender so cross-gender retrieval
    /// has matching pairs.
    Coverage,
    /// All tokens of one named speaker form the test split.
    HeldOutSpeaker { speaker_id: String },
}

pub fn split(corpus: &mut [Token], policy: &SplitPolicy, seed: u64) -> Result<()> {
    for tok in corpus.iter_mut() {
        tok.split = Split::Train;
    }
    match policy {
        SplitPolicy::HeldOutSpeaker { speaker_id } => {
            if !corpus.iter().any(|t| &t.speaker_id == speaker_id) {
                return Err(SitaError::InvalidConfig(format!(
                    "held-out speaker {speaker_id} not in corpus"
                )));
            }
            for tok in corpus.iter_mut() {
                if &tok.speaker_id == speaker_id {
                    tok.split = Split::Test;
                }
            }
        }
        SplitPolicy::Coverage => {
            let mut rng = substream_rng(seed, "split", &[]);
            let mut by_word: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, tok) in corpus.iter().enumerate() {
                by_word.entry(tok.word.clone()).or_default().push(i);
            }
            for group in by_word.values() {
                let f: Vec<usize> = group
                    .iter()
                    .copied()
                    .filter(|&i| corpus[i].gender == Gender::F)
                    .collect();
                let m: Vec<usize> = group
                    .iter()
                    .copied()
                    .filter(|&i| corpus[i].gender == Gender::M)
                    .collect();
                if f.len() >= 2 && m.len() >= 2 {
                    corpus[f[rng.random_range(0..f.len())]].split = Split::Test;
                    corpus[m[rng.random_range(0..m.len())]].split = Split::Test;
                } else if group.len() >= 2 {
                    corpus[group[rng.random_range(0..group.len())]].split = Split::Test;
                }
            }
            // Guarantee every base word reaches the test split.
            let mut by_base: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, tok) in corpus.iter().enumerate() {
                by_base.entry(tok.base_word.clone()).or_default().push(i);
            }
            for group in by_base.values() {
                if group.iter().all(|&i| corpus[i].split == Split::Train) {
                    corpus[group[rng.random_range(0..group.len())]].split = Split::Test;
                }
            }
        }
    }
    Ok(())
}

/// One line of the corpus manifest; field order is the wire order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    word: String,
    base_word: String,
    tone: u32,
    speaker_id: String,
    gender: Gender,
    split: Split,
    feature_path: String,
    n_frames: u32,
}

/// Writes `manifest.jsonl` plus one SITF feature file per token under
/// `dir/features/`.
pub fn write_corpus(dir: &Path, tokens: &[Token]) -> Result<()> {
    let features_dir = dir.join("features");
    std::fs::create_dir_all(&features_dir)
        .map_err(|e| SitaError::io(features_dir.display().to_string(), e))?;
    let mut manifest = String::new();
    for tok in tokens {
        let feature_path = format!("features/{}.sitf", tok.id);
        crate::io::write_sitf(&dir.join(&feature_path), &tok.features)?;
        let record = ManifestRecord {
            id: tok.id.clone(),
            word: tok.word.clone(),
            base_word: tok.base_word.clone(),
            tone: tok.tone,
            speaker_id: tok.speaker_id.clone(),
            gender: tok.gender,
            split: tok.split,
            feature_path,
            n_frames: tok.features.n_frames() as u32,
        };
        manifest.push_str(&serde_json::to_string(&record).expect("manifest record serializes"));
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest).map_err(|e| SitaError::io(path.display().to_string(), e))
}

/// Loads a corpus previously written by [`write_corpus`].
pub fn load_corpus(dir: &Path) -> Result<Vec<Token>> {
    let path = dir.join("manifest.jsonl");
    let text = std::fs::read_to_string(&path)
        .map_err(|_| SitaError::MissingArtifact(path.display().to_string()))?;
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(line).map_err(|e| SitaError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        let features = crate::io::read_sitf(&dir.join(&record.feature_path))?;
        if features.n_frames() != record.n_frames as usize {
            return Err(SitaError::MalformedFile {
                path: record.feature_path.clone(),
                reason: format!(
                    "manifest says {} frames, file has {}",
                    record.n_frames,
                    features.n_frames()
                ),
            });
        }
        tokens.push(Token {
            id: record.id,
            word: record.word,
            base_word: record.base_word,
            tone: record.tone,
            speaker_id: record.speaker_id,
            gender: record.gender,
            split: record.split,
            features,
        });
    }
    Ok(tokens)
}
