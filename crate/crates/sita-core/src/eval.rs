//! Evaluation battery: cross-gender retrieval, tone geometry, WER/CER,
//! similarity-scoring experiments, layer-wise probing, tone classification
//! accuracy, and the 2-D principal-component export.
//!
//! Retrieval pools with max, tone and similarity analyses with mean; both
//! choices are fixed globally rather than tuned per experiment.

use crate::corpus::{perturb, Gender, Perturbation, Split, Token};
use crate::encoder::EncoderStack;
use crate::error::{Result, SitaError};
use crate::losses::ToneHead;
use crate::math::{cosine_distance, cosine_similarity, pool, Embedding, PoolingMode};
use crate::seeding::substream_rng;
use rand::seq::SliceRandom;

/// Pooling used for retrieval evaluations.
pub const RETRIEVAL_POOLING: PoolingMode = PoolingMode::Max;
/// Pooling used for tone geometry, tone classification, and similarity runs.
pub const ANALYSIS_POOLING: PoolingMode = PoolingMode::Mean;

/// Semitone shifts of the pitch-robustness experiment.
pub const PITCH_SHIFTS: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];

#[derive(Debug, Clone)]
pub struct LabeledEmbedding {
    pub id: String,
    pub word: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    FemaleToMale,
    MaleToFemale,
}

impl Direction {
    pub fn label(&self) -> &'static str {
        match self {
            Direction::FemaleToMale => "F->M",
            Direction::MaleToFemale => "M->F",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub direction: Option<Direction>,
    pub top1: f64,
    pub top5: f64,
    /// 1-based rank of the first same-word gallery item per query, when any.
    pub ranks: Vec<Option<usize>>,
}

impl RetrievalResult {
    pub fn hit_fraction(&self, k: usize) -> f64 {
        if self.ranks.is_empty() {
            return 0.0;
        }
        let hits = self
            .ranks
            .iter()
            .filter(|r| r.map(|rank| rank <= k).unwrap_or(false))
            .count();
        hits as f64 / self.ranks.len() as f64
    }
}

/// Ranks the gallery by cosine similarity per query (stable under ties) and
/// scores a hit when any of the k best shares the query's word.
pub fn retrieval_topk(
    queries: &[LabeledEmbedding],
    gallery: &[LabeledEmbedding],
    k: usize,
) -> Result<RetrievalResult> {
    if gallery.is_empty() {
        return Err(SitaError::EmptyInput("retrieval gallery".into()));
    }
    if k < 1 {
        return Err(SitaError::InvalidConfig("k must be >= 1".into()));
    }
    let mut ranks = Vec::with_capacity(queries.len());
    for query in queries {
        let mut scored: Vec<(usize, f64)> = gallery
            .iter()
            .enumerate()
            .map(|(i, item)| Ok((i, cosine_similarity(&query.embedding, &item.embedding)?)))
            .collect::<Result<_>>()?;
        // Stable sort keeps input order among equal similarities.
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let rank = scored
            .iter()
            .position(|(i, _)| gallery[*i].word == query.word)
            .map(|p| p + 1);
        ranks.push(rank);
    }
    let result = RetrievalResult {
        direction: None,
        top1: 0.0,
        top5: 0.0,
        ranks,
    };
    Ok(RetrievalResult {
        top1: result.hit_fraction(1),
        top5: result.hit_fraction(5.max(k.min(5))),
        ..result
    })
}

#[derive(Debug, Clone)]
pub struct CrossGenderRetrieval {
    pub f_to_m: RetrievalResult,
    pub m_to_f: RetrievalResult,
    pub avg_top1: f64,
    pub avg_top5: f64,
}

fn labeled_embeddings(
    tokens: &[&Token],
    stack: &EncoderStack,
    layer: usize,
    mode: PoolingMode,
) -> Result<Vec<LabeledEmbedding>> {
    tokens
        .iter()
        .map(|t| {
            Ok(LabeledEmbedding {
                id: t.id.clone(),
                word: t.word.clone(),
                embedding: stack.extract_embedding(&t.features, layer, mode)?,
            })
        })
        .collect()
}

/// Both retrieval directions over one split, max-pooled at `layer`, plus the
/// unweighted average of the two directions.
pub fn cross_gender_retrieval(
    tokens: &[Token],
    stack: &EncoderStack,
    layer: usize,
    split: Split,
) -> Result<CrossGenderRetrieval> {
    let f: Vec<&Token> = tokens
        .iter()
        .filter(|t| t.split == split && t.gender == Gender::F)
        .collect();
    let m: Vec<&Token> = tokens
        .iter()
        .filter(|t| t.split == split && t.gender == Gender::M)
        .collect();
    let f_emb = labeled_embeddings(&f, stack, layer, RETRIEVAL_POOLING)?;
    let m_emb = labeled_embeddings(&m, stack, layer, RETRIEVAL_POOLING)?;
    let mut f_to_m = retrieval_topk(&f_emb, &m_emb, 5)?;
    f_to_m.direction = Some(Direction::FemaleToMale);
    let mut m_to_f = retrieval_topk(&m_emb, &f_emb, 5)?;
    m_to_f.direction = Some(Direction::MaleToFemale);
    let avg_top1 = (f_to_m.top1 + m_to_f.top1) / 2.0;
    let avg_top5 = (f_to_m.top5 + m_to_f.top5) / 2.0;
    Ok(CrossGenderRetrieval {
        f_to_m,
        m_to_f,
        avg_top1,
        avg_top5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn stat_of(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Stat {
        mean,
        std: var.max(0.0).sqrt(),
        count: values.len(),
    })
}

#[derive(Debug, Clone)]
pub struct PerToneGeometry {
    pub tone: u32,
    pub pos_sim: Option<Stat>,
    pub hard_neg_dist: Option<Stat>,
    pub soft_neg_dist: Option<Stat>,
}

#[derive(Debug, Clone)]
pub struct ToneGeometry {
    /// Mean cosine similarity over same-word (same tone) pairs.
    pub pos_sim: Option<Stat>,
    /// Mean cosine distance over same-base-word, different-tone pairs.
    pub hard_neg_dist: Option<Stat>,
    /// Mean cosine distance over different-base-word pairs.
    pub soft_neg_dist: Option<Stat>,
    pub per_tone: Vec<PerToneGeometry>,
}

#[derive(Debug, Clone)]
pub struct GeometryItem {
    pub word: String,
    pub base_word: String,
    pub tone: u32,
    pub embedding: Embedding,
}

/// Builds geometry items from a split with the analysis pooling.
pub fn geometry_items(
    tokens: &[Token],
    stack: &EncoderStack,
    layer: usize,
    split: Split,
) -> Result<Vec<GeometryItem>> {
    tokens
        .iter()
        .filter(|t| t.split == split)
        .map(|t| {
            Ok(GeometryItem {
                word: t.word.clone(),
                base_word: t.base_word.clone(),
                tone: t.tone,
                embedding: stack.extract_embedding(&t.features, layer, ANALYSIS_POOLING)?,
            })
        })
        .collect()
}

/// Pairwise statistics over all unordered pairs; per-tone tables condition on
/// the anchor's tone (each pair contributes to both anchors' buckets).
pub fn tone_geometry(items: &[GeometryItem]) -> Result<ToneGeometry> {
    let mut pos = Vec::new();
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    let max_tone = items.iter().map(|i| i.tone).max().unwrap_or(0);
    let mut per_tone_pos = vec![Vec::new(); max_tone as usize + 1];
    let mut per_tone_hard = vec![Vec::new(); max_tone as usize + 1];
    let mut per_tone_soft = vec![Vec::new(); max_tone as usize + 1];

    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (a, b) = (&items[i], &items[j]);
            if a.word == b.word {
                let sim = cosine_similarity(&a.embedding, &b.embedding)?;
                pos.push(sim);
                per_tone_pos[a.tone as usize].push(sim);
                per_tone_pos[b.tone as usize].push(sim);
            } else if a.base_word == b.base_word {
                let dist = cosine_distance(&a.embedding, &b.embedding)?;
                hard.push(dist);
                per_tone_hard[a.tone as usize].push(dist);
                per_tone_hard[b.tone as usize].push(dist);
            } else {
                let dist = cosine_distance(&a.embedding, &b.embedding)?;
                soft.push(dist);
                per_tone_soft[a.tone as usize].push(dist);
                per_tone_soft[b.tone as usize].push(dist);
            }
        }
    }
    let per_tone = (1..=max_tone)
        .map(|tone| PerToneGeometry {
            tone,
            pos_sim: stat_of(&per_tone_pos[tone as usize]),
            hard_neg_dist: stat_of(&per_tone_hard[tone as usize]),
            soft_neg_dist: stat_of(&per_tone_soft[tone as usize]),
        })
        .collect();
    Ok(ToneGeometry {
        pos_sim: stat_of(&pos),
        hard_neg_dist: stat_of(&hard),
        soft_neg_dist: stat_of(&soft),
        per_tone,
    })
}

/// Word- and character-level error rates with their raw edit counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsrScore {
    pub wer: f64,
    pub cer: f64,
    pub word_sub: usize,
    pub word_del: usize,
    pub word_ins: usize,
    pub word_ref_len: usize,
    pub char_sub: usize,
    pub char_del: usize,
    pub char_ins: usize,
    pub char_ref_len: usize,
}

/// Minimal-edit substitution/deletion/insertion counts, unit costs.
/// Deletions are reference tokens dropped from the hypothesis. Ties prefer
/// substitution, then deletion, then insertion.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, usize, usize) {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dp[i][j] = (dp[i - 1][j - 1] + cost)
                .min(dp[i - 1][j] + 1)
                .min(dp[i][j - 1] + 1);
        }
    }
    // Traceback with a fixed preference order.
    let (mut i, mut j) = (n, m);
    let (mut subs, mut dels, mut ins) = (0, 0, 0);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[i][j] == dp[i - 1][j - 1] + cost {
                subs += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            dels += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    (subs, dels, ins)
}

/// WER over word tokens and CER over the characters of the space-joined word
/// string, aggregated across utterances.
pub fn edit_rates(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<AsrScore> {
    if hypotheses.len() != references.len() {
        return Err(SitaError::DimensionMismatch(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let total_ref_words: usize = references.iter().map(|r| r.len()).sum();
    if total_ref_words == 0 {
        return Err(SitaError::EmptyInput("empty reference set".into()));
    }
    let mut score = AsrScore {
        wer: 0.0,
        cer: 0.0,
        word_sub: 0,
        word_del: 0,
        word_ins: 0,
        word_ref_len: 0,
        char_sub: 0,
        char_del: 0,
        char_ins: 0,
        char_ref_len: 0,
    };
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let (s, d, i) = edit_counts(reference, hyp);
        score.word_sub += s;
        score.word_del += d;
        score.word_ins += i;
        score.word_ref_len += reference.len();

        let ref_chars: Vec<char> = reference.join(" ").chars().collect();
        let hyp_chars: Vec<char> = hyp.join(" ").chars().collect();
        let (s, d, i) = edit_counts(&ref_chars, &hyp_chars);
        score.char_sub += s;
        score.char_del += d;
        score.char_ins += i;
        score.char_ref_len += ref_chars.len();
    }
    score.wer =
        (score.word_sub + score.word_del + score.word_ins) as f64 / score.word_ref_len as f64;
    score.cer =
        (score.char_sub + score.char_del + score.char_ins) as f64 / score.char_ref_len as f64;
    Ok(score)
}

#[derive(Debug, Clone)]
pub struct SimilarityScores {
    /// Same word and tone across speakers (higher is better).
    pub e1: Option<f64>,
    /// Mean similarity between tokens and their pitch-shifted versions.
    pub e2: Option<f64>,
    /// Randomly mismatched base words (lower is better).
    pub e3: Option<f64>,
    /// Same base word, different tone (lower is better).
    pub e4: Option<f64>,
    /// Per-shift means behind e2, in [`PITCH_SHIFTS`] order.
    pub e2_curve: Vec<(f64, f64)>,
}

/// The four similarity-scoring experiments on a split, mean-pooled.
pub fn similarity_experiments(
    tokens: &[Token],
    stack: &EncoderStack,
    layer: usize,
    split: Split,
    seed: u64,
) -> Result<SimilarityScores> {
    let picked: Vec<&Token> = tokens.iter().filter(|t| t.split == split).collect();
    let embeddings: Vec<Embedding> = picked
        .iter()
        .map(|t| stack.extract_embedding(&t.features, layer, ANALYSIS_POOLING))
        .collect::<Result<_>>()?;

    let mut e1_sims = Vec::new();
    let mut e4_sims = Vec::new();
    for i in 0..picked.len() {
        for j in i + 1..picked.len() {
            let (a, b) = (picked[i], picked[j]);
            if a.word == b.word && a.speaker_id != b.speaker_id {
                e1_sims.push(cosine_similarity(&embeddings[i], &embeddings[j])?);
            } else if a.base_word == b.base_word && a.tone != b.tone {
                e4_sims.push(cosine_similarity(&embeddings[i], &embeddings[j])?);
            }
        }
    }

    // E2: pitch-shift robustness, per-shift means.
    let mut e2_curve = Vec::new();
    let mut e2_all = Vec::new();
    for &shift in &PITCH_SHIFTS {
        let mut sims = Vec::new();
        for (i, token) in picked.iter().enumerate() {
            let shifted = perturb(
                token,
                &Perturbation::PitchShift { semitones: shift },
                false,
                seed,
            )?;
            let z = stack.extract_embedding(&shifted.features, layer, ANALYSIS_POOLING)?;
            sims.push(cosine_similarity(&embeddings[i], &z)?);
        }
        let mean = stat_of(&sims).map(|s| s.mean);
        if let Some(mean) = mean {
            e2_curve.push((shift, mean));
            e2_all.extend(sims);
        }
    }

    // E3: wrong-word pairs via a seeded permutation, capped at 2000 pairs.
    let mut order: Vec<usize> = (0..picked.len()).collect();
    let mut rng = substream_rng(seed, "sim_e3", &[]);
    order.shuffle(&mut rng);
    let mut e3_sims = Vec::new();
    for (i, &j) in order.iter().enumerate() {
        if e3_sims.len() >= 2000 {
            break;
        }
        if picked[i].base_word != picked[j].base_word {
            e3_sims.push(cosine_similarity(&embeddings[i], &embeddings[j])?);
        }
    }

    Ok(SimilarityScores {
        e1: stat_of(&e1_sims).map(|s| s.mean),
        e2: stat_of(&e2_all).map(|s| s.mean),
        e3: stat_of(&e3_sims).map(|s| s.mean),
        e4: stat_of(&e4_sims).map(|s| s.mean),
        e2_curve,
    })
}

#[derive(Debug, Clone)]
pub struct LayerProbeRow {
    pub layer: usize,
    pub avg_top1: f64,
    pub hard_neg_dist: Option<f64>,
}

/// Retrieval and hard-negative distance from every block's pooled output.
pub fn layer_probe(tokens: &[Token], stack: &EncoderStack, split: Split) -> Result<Vec<LayerProbeRow>> {
    let picked: Vec<&Token> = tokens.iter().filter(|t| t.split == split).collect();
    if picked.is_empty() {
        return Err(SitaError::EmptyInput("layer probe split".into()));
    }
    let depth = stack.cfg.n_blocks;
    // One full forward per token; pool every layer from it.
    let mut per_layer_max: Vec<Vec<Embedding>> = vec![Vec::new(); depth];
    let mut per_layer_mean: Vec<Vec<Embedding>> = vec![Vec::new(); depth];
    for token in &picked {
        let hiddens = stack.forward(&token.features, depth)?;
        for (k, hidden) in hiddens.iter().enumerate() {
            let mut mx = pool(hidden, RETRIEVAL_POOLING)?;
            mx.normalize()?;
            per_layer_max[k].push(mx);
            let mut mn = pool(hidden, ANALYSIS_POOLING)?;
            mn.normalize()?;
            per_layer_mean[k].push(mn);
        }
    }
    let mut rows = Vec::with_capacity(depth);
    for k in 0..depth {
        let f_idx: Vec<usize> = (0..picked.len())
            .filter(|&i| picked[i].gender == Gender::F)
            .collect();
        let m_idx: Vec<usize> = (0..picked.len())
            .filter(|&i| picked[i].gender == Gender::M)
            .collect();
        let mk = |idxs: &[usize], pool: &[Embedding]| -> Vec<LabeledEmbedding> {
            idxs.iter()
                .map(|&i| LabeledEmbedding {
                    id: picked[i].id.clone(),
                    word: picked[i].word.clone(),
                    embedding: pool[i].clone(),
                })
                .collect()
        };
        let f_emb = mk(&f_idx, &per_layer_max[k]);
        let m_emb = mk(&m_idx, &per_layer_max[k]);
        let avg_top1 = if f_emb.is_empty() || m_emb.is_empty() {
            0.0
        } else {
            (retrieval_topk(&f_emb, &m_emb, 1)?.top1 + retrieval_topk(&m_emb, &f_emb, 1)?.top1)
                / 2.0
        };
        let items: Vec<GeometryItem> = (0..picked.len())
            .map(|i| GeometryItem {
                word: picked[i].word.clone(),
                base_word: picked[i].base_word.clone(),
                tone: picked[i].tone,
                embedding: per_layer_mean[k][i].clone(),
            })
            .collect();
        let geometry = tone_geometry(&items)?;
        rows.push(LayerProbeRow {
            layer: k + 1,
            avg_top1,
            hard_neg_dist: geometry.hard_neg_dist.map(|s| s.mean),
        });
    }
    Ok(rows)
}

/// Top-1/Top-3 accuracy of the tone head on mean-pooled embeddings.
/// Ties break toward the lower tone index.
pub fn tone_cls_accuracy(
    tokens: &[Token],
    stack: &EncoderStack,
    head: &ToneHead,
    layer: usize,
    split: Split,
) -> Result<(f64, f64)> {
    let picked: Vec<&Token> = tokens.iter().filter(|t| t.split == split).collect();
    if picked.is_empty() {
        return Err(SitaError::EmptyInput("tone accuracy split".into()));
    }
    let mut top1_hits = 0usize;
    let mut top3_hits = 0usize;
    for token in &picked {
        let z = stack.extract_embedding(&token.features, layer, ANALYSIS_POOLING)?;
        let logits = head.logits(&z.values);
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&a, &b| {
            logits[b]
                .partial_cmp(&logits[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let target = (token.tone - 1) as usize;
        if order[0] == target {
            top1_hits += 1;
        }
        if order.iter().take(3).any(|&i| i == target) {
            top3_hits += 1;
        }
    }
    Ok((
        top1_hits as f64 / picked.len() as f64,
        top3_hits as f64 / picked.len() as f64,
    ))
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// One (x, y) row per input embedding, variance-ordered axes.
    pub coords: Vec<[f64; 2]>,
    /// Variance captured by each axis.
    pub explained: [f64; 2],
    /// Set when the centered data had rank < 2 and the y axis was zeroed.
    pub degenerate: bool,
}

/// Top-2 principal components by power iteration on the centered covariance.
/// Component signs are fixed by making each component's largest-magnitude
/// entry positive.
pub fn project_2d(embeddings: &[Embedding]) -> Result<Projection> {
    if embeddings.len() < 3 {
        return Err(SitaError::EmptyInput(
            "projection needs at least 3 embeddings".into(),
        ));
    }
    let d = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != d) {
        return Err(SitaError::DimensionMismatch("projection inputs".into()));
    }
    let n = embeddings.len();
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(&e.values) {
            *m += v / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.values.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += row[i] * row[j] / n as f64;
            }
        }
    }

    let mat_vec = |m: &[f64], v: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };
    let power_iterate = |m: &[f64]| -> (Vec<f64>, f64) {
        // Deterministic start with unequal entries to avoid symmetry traps.
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 / (i + 1) as f64).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut value = 0.0;
        for _ in 0..1000 {
            let next = mat_vec(m, &v);
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-14 {
                return (v, 0.0);
            }
            let next: Vec<f64> = next.iter().map(|x| x / norm).collect();
            let delta: f64 = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            value = norm;
            if delta < 1e-13 {
                break;
            }
        }
        (v, value)
    };
    let fix_sign = |v: &mut [f64]| {
        let mut best = 0usize;
        for i in 1..v.len() {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    };

    let (mut v1, lambda1) = power_iterate(&cov);
    fix_sign(&mut v1);
    // Deflate and repeat for the second axis.
    let mut deflated = cov.clone();
    for i in 0..d {
        for j in 0..d {
            deflated[i * d + j] -= lambda1 * v1[i] * v1[j];
        }
    }
    let (mut v2, lambda2) = power_iterate(&deflated);
    let degenerate = lambda2 < 1e-12 || lambda1 < 1e-12;
    if degenerate {
        v2 = vec![0.0; d];
    } else {
        fix_sign(&mut v2);
    }

    let coords = centered
        .iter()
        .map(|row| {
            let x: f64 = row.iter().zip(&v1).map(|(a, b)| a * b).sum();
            let y: f64 = row.iter().zip(&v2).map(|(a, b)| a * b).sum();
            [x, y]
        })
        .collect();
    Ok(Projection {
        coords,
        explained: [lambda1, lambda2.max(0.0)],
        degenerate,
    })
}
