//! CTC sequence likelihood via log-domain forward-backward, its gradient with
//! respect to the logits, the collapse map, and prefix beam search with an
//! optional lexicon constraint.
//!
//! Symbol index 0 is always the blank; lexical symbols occupy 1..=|V|.

use crate::error::{Result, SitaError};
use crate::math::log_sum_exp;

pub const BLANK: usize = 0;

const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// Ordered lexical symbols; the blank is implicit at index 0, so symbol k of
/// the vocabulary has CTC index k + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    symbols: Vec<String>,
}

impl Vocabulary {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(SitaError::InvalidConfig(format!(
                    "duplicate vocabulary symbol {s:?}"
                )));
            }
        }
        Ok(Vocabulary { symbols })
    }

    /// Builds a character vocabulary from a word list, sorted for determinism.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut chars: Vec<String> = words
            .iter()
            .flat_map(|w| w.as_ref().chars())
            .map(|c| c.to_string())
            .collect();
        chars.sort();
        chars.dedup();
        Vocabulary { symbols: chars }
    }

    /// Number of lexical symbols (excluding blank).
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Total class count including the blank: |V| + 1.
    pub fn n_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    /// CTC index (1-based over lexical symbols) of a symbol.
    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i + 1)
    }

    pub fn symbol(&self, ctc_index: usize) -> Option<&str> {
        if ctc_index == BLANK {
            return None;
        }
        self.symbols.get(ctc_index - 1).map(|s| s.as_str())
    }

    /// Encodes a word as per-character CTC indices. Errors on unknown chars.
    pub fn encode_word(&self, word: &str) -> Result<Vec<usize>> {
        word.chars()
            .map(|c| {
                self.index_of(&c.to_string()).ok_or_else(|| {
                    SitaError::InvalidConfig(format!("symbol {c:?} not in vocabulary"))
                })
            })
            .collect()
    }

    /// Decodes a label sequence back to a string.
    pub fn decode(&self, labels: &[usize]) -> String {
        labels
            .iter()
            .filter_map(|&l| self.symbol(l))
            .collect::<Vec<_>>()
            .join("")
    }
}

/// Removes repeated consecutive symbols, then removes blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// A decoded label sequence with its log-probability. Labels never contain
/// the blank.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub score: f64,
}

impl Hypothesis {
    pub fn empty() -> Self {
        Hypothesis {
            labels: Vec::new(),
            score: LOG_ZERO,
        }
    }
}

/// Blank-interleaved expansion of a target: blank, y1, blank, y2, ..., blank.
fn expand_target(target: &[usize]) -> Vec<usize> {
    let mut expanded = Vec::with_capacity(2 * target.len() + 1);
    expanded.push(BLANK);
    for &y in target {
        expanded.push(y);
        expanded.push(BLANK);
    }
    expanded
}

fn check_rows(log_posteriors: &[Vec<f64>]) -> Result<()> {
    if log_posteriors.is_empty() {
        return Err(SitaError::EmptyInput("log posteriors".into()));
    }
    let width = log_posteriors[0].len();
    for (t, row) in log_posteriors.iter().enumerate() {
        if row.len() != width {
            return Err(SitaError::DimensionMismatch(format!(
                "posterior row {t} has width {} != {width}",
                row.len()
            )));
        }
        let lse = log_sum_exp(row)?;
        if lse.abs() > 1e-6 {
            return Err(SitaError::MalformedPosteriorRow { row: t, lse });
        }
    }
    Ok(())
}

/// Log-domain forward/backward trellis over the blank-interleaved target.
#[derive(Debug, Clone)]
pub struct CtcLattice {
    /// (2|y|+1) x T forward log mass.
    pub log_alpha: Vec<Vec<f64>>,
    /// (2|y|+1) x T backward log mass.
    pub log_beta: Vec<Vec<f64>>,
    pub expanded_target: Vec<usize>,
    pub log_likelihood: f64,
}

impl CtcLattice {
    /// Builds the full forward-backward trellis. Rows must be proper
    /// log-distributions; an infeasible target yields log-likelihood -inf
    /// with an all -inf trellis.
    pub fn build(log_posteriors: &[Vec<f64>], target: &[usize]) -> Result<Self> {
        check_rows(log_posteriors)?;
        let frames = log_posteriors.len();
        let n_classes = log_posteriors[0].len();
        for &y in target {
            if y == BLANK || y >= n_classes {
                return Err(SitaError::InvalidConfig(format!(
                    "target symbol {y} invalid for {n_classes} classes"
                )));
            }
        }
        let expanded = expand_target(target);
        let s_len = expanded.len();
        let mut log_alpha = vec![vec![LOG_ZERO; frames]; s_len];
        let mut log_beta = vec![vec![LOG_ZERO; frames]; s_len];

        // Forward. States 0 and 1 are reachable at t = 0.
        log_alpha[0][0] = log_posteriors[0][BLANK];
        if s_len > 1 {
            log_alpha[1][0] = log_posteriors[0][expanded[1]];
        }
        for t in 1..frames {
            for s in 0..s_len {
                let mut terms = vec![log_alpha[s][t - 1]];
                if s >= 1 {
                    terms.push(log_alpha[s - 1][t - 1]);
                }
                // Skip transition allowed between distinct non-blank symbols.
                if s >= 2 && expanded[s] != BLANK && expanded[s] != expanded[s - 2] {
                    terms.push(log_alpha[s - 2][t - 1]);
                }
                let m = log_sum_exp(&terms)?;
                log_alpha[s][t] = if m == LOG_ZERO {
                    LOG_ZERO
                } else {
                    m + log_posteriors[t][expanded[s]]
                };
            }
        }
        let mut tail = vec![log_alpha[s_len - 1][frames - 1]];
        if s_len > 1 {
            tail.push(log_alpha[s_len - 2][frames - 1]);
        }
        let log_likelihood = log_sum_exp(&tail)?;

        // Backward. beta[s][t] includes the emission at (s, t) so that
        // alpha[s][t] + beta[s][t] - log_post[t][sym(s)] is the path mass
        // through state s at time t.
        log_beta[s_len - 1][frames - 1] = log_posteriors[frames - 1][expanded[s_len - 1]];
        if s_len > 1 {
            log_beta[s_len - 2][frames - 1] = log_posteriors[frames - 1][expanded[s_len - 2]];
        }
        for t in (0..frames - 1).rev() {
            for s in 0..s_len {
                let mut terms = vec![log_beta[s][t + 1]];
                if s + 1 < s_len {
                    terms.push(log_beta[s + 1][t + 1]);
                }
                if s + 2 < s_len && expanded[s + 2] != BLANK && expanded[s + 2] != expanded[s] {
                    terms.push(log_beta[s + 2][t + 1]);
                }
                let m = log_sum_exp(&terms)?;
                log_beta[s][t] = if m == LOG_ZERO {
                    LOG_ZERO
                } else {
                    m + log_posteriors[t][expanded[s]]
                };
            }
        }

        Ok(CtcLattice {
            log_alpha,
            log_beta,
            expanded_target: expanded,
            log_likelihood,
        })
    }
}

/// log p(target | x) over all alignments that collapse to the target.
/// Infeasible targets (expanded length > 2T + 1 reachable states) return -inf.
pub fn ctc_log_likelihood(log_posteriors: &[Vec<f64>], target: &[usize]) -> Result<f64> {
    Ok(CtcLattice::build(log_posteriors, target)?.log_likelihood)
}

/// Gradient of -log p(target | x) with respect to the logits that produced
/// the posteriors via row-wise softmax: grad[t][k] = p_t(k) - gamma_t(k).
pub fn ctc_gradient(log_posteriors: &[Vec<f64>], target: &[usize]) -> Result<Vec<Vec<f64>>> {
    let lattice = CtcLattice::build(log_posteriors, target)?;
    let frames = log_posteriors.len();
    let n_classes = log_posteriors[0].len();
    if lattice.log_likelihood == LOG_ZERO {
        return Err(SitaError::InfeasibleTarget {
            expanded: lattice.expanded_target.len(),
            frames,
        });
    }
    let mut grad = vec![vec![0.0; n_classes]; frames];
    for t in 0..frames {
        // gamma_t(k): posterior of emitting class k at frame t given target.
        let mut occ = vec![Vec::new(); n_classes];
        for (s, &sym) in lattice.expanded_target.iter().enumerate() {
            let a = lattice.log_alpha[s][t];
            let b = lattice.log_beta[s][t];
            if a == LOG_ZERO || b == LOG_ZERO {
                continue;
            }
            occ[sym].push(a + b - log_posteriors[t][sym]);
        }
        for k in 0..n_classes {
            let gamma = if occ[k].is_empty() {
                0.0
            } else {
                (log_sum_exp(&occ[k])? - lattice.log_likelihood).exp()
            };
            grad[t][k] = log_posteriors[t][k].exp() - gamma;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
struct Prefix {
    labels: Vec<usize>,
    /// Log mass of alignments ending in blank.
    p_blank: f64,
    /// Log mass of alignments ending in the prefix's last symbol.
    p_non_blank: f64,
}

impl Prefix {
    fn total(&self) -> f64 {
        log_sum_exp(&[self.p_blank, self.p_non_blank]).unwrap_or(LOG_ZERO)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Prefix beam search, merging prefixes that collapse equally.
///
/// With a lexicon, only prefixes of lexicon entries survive and the result is
/// the best-scoring complete entry; without one, the best prefix wins. Ties
/// break toward the lexicographically smaller label sequence. With no
/// feasible lexicon entry the empty hypothesis (score -inf) is returned.
pub fn beam_search_decode(
    log_posteriors: &[Vec<f64>],
    beam_width: usize,
    lexicon: Option<&[Vec<usize>]>,
) -> Result<Hypothesis> {
    check_rows(log_posteriors)?;
    if beam_width == 0 {
        return Err(SitaError::InvalidConfig("beam width must be >= 1".into()));
    }
    let n_classes = log_posteriors[0].len();
    let is_lexicon_prefix = |labels: &[usize]| -> bool {
        match lexicon {
            None => true,
            Some(entries) => entries.iter().any(|e| e.starts_with(labels)),
        }
    };

    let mut beam = vec![Prefix {
        labels: Vec::new(),
        p_blank: 0.0,
        p_non_blank: LOG_ZERO,
    }];

    for row in log_posteriors {
        let mut next: Vec<Prefix> = Vec::new();
        let find = |labels: &[usize], next: &mut Vec<Prefix>| -> usize {
            if let Some(i) = next.iter().position(|p| p.labels == labels) {
                i
            } else {
                next.push(Prefix {
                    labels: labels.to_vec(),
                    p_blank: LOG_ZERO,
                    p_non_blank: LOG_ZERO,
                });
                next.len() - 1
            }
        };
        for prefix in &beam {
            let total = prefix.total();
            // Emit blank: prefix unchanged.
            {
                let i = find(&prefix.labels, &mut next);
                next[i].p_blank = log_add(next[i].p_blank, total + row[BLANK]);
            }
            for symbol in 1..n_classes {
                let p_sym = row[symbol];
                if prefix.labels.last() == Some(&symbol) {
                    // Repeat of the last symbol extends the same alignment run
                    // (prefix unchanged) ...
                    let i = find(&prefix.labels, &mut next);
                    next[i].p_non_blank =
                        log_add(next[i].p_non_blank, prefix.p_non_blank + p_sym);
                    // ... while emitting it after a blank starts a new label.
                    let mut ext = prefix.labels.clone();
                    ext.push(symbol);
                    if is_lexicon_prefix(&ext) {
                        let i = find(&ext, &mut next);
                        next[i].p_non_blank =
                            log_add(next[i].p_non_blank, prefix.p_blank + p_sym);
                    }
                } else {
                    let mut ext = prefix.labels.clone();
                    ext.push(symbol);
                    if is_lexicon_prefix(&ext) {
                        let i = find(&ext, &mut next);
                        next[i].p_non_blank = log_add(next[i].p_non_blank, total + p_sym);
                    }
                }
            }
        }
        // Deterministic pruning: score descending, then lexicographic labels.
        next.sort_by(|a, b| {
            b.total()
                .partial_cmp(&a.total())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.labels.cmp(&b.labels))
        });
        next.truncate(beam_width);
        beam = next;
    }

    let mut best = Hypothesis::empty();
    let mut found = false;
    for prefix in &beam {
        let complete = match lexicon {
            None => true,
            Some(entries) => entries.iter().any(|e| e == &prefix.labels),
        };
        if !complete {
            continue;
        }
        let score = prefix.total();
        let better = !found
            || score > best.score
            || (score == best.score && prefix.labels < best.labels);
        if better {
            best = Hypothesis {
                labels: prefix.labels.clone(),
                score,
            };
            found = true;
        }
    }
    Ok(best)
}

/// Reads a lexicon file: one label sequence per line, encoded per vocabulary.
pub fn read_lexicon(path: &std::path::Path, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SitaError::io(path.display().to_string(), e))?;
    let mut entries = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        entries.push(vocab.encode_word(line)?);
    }
    Ok(entries)
}

pub fn write_lexicon<S: AsRef<str>>(path: &std::path::Path, words: &[S]) -> Result<()> {
    let mut text = String::new();
    for w in words {
        text.push_str(w.as_ref());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| SitaError::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_rows(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect()
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse(&[1, 1, BLANK, 2]), vec![1, 2]);
        assert_eq!(collapse(&[1, BLANK, 1]), vec![1, 1]);
        assert_eq!(collapse(&[BLANK, BLANK]), Vec::<usize>::new());
    }

    #[test]
    fn single_frame_single_label() {
        let post = log_rows(&[&[0.5, 0.5]]);
        let ll = ctc_log_likelihood(&post, &[1]).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_uniform_three_classes() {
        // Alignments for target (a): aa, a-, -a, each 1/9.
        let third = 1.0 / 3.0;
        let post = log_rows(&[&[third, third, third], &[third, third, third]]);
        let ll = ctc_log_likelihood(&post, &[1]).unwrap();
        assert!((ll - (1.0f64 / 3.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn repeated_label_unique_alignment() {
        // Target (a, a) over 3 frames forces the alignment a - a.
        let post = log_rows(&[&[0.2, 0.5, 0.3], &[0.6, 0.1, 0.3], &[0.25, 0.7, 0.05]]);
        let ll = ctc_log_likelihood(&post, &[1, 1]).unwrap();
        let expected = (0.5f64 * 0.6 * 0.7).ln();
        assert!((ll - expected).abs() < 1e-9);
    }

    #[test]
    fn infeasible_target_is_log_zero() {
        let post = log_rows(&[&[0.5, 0.5]]);
        assert_eq!(
            ctc_log_likelihood(&post, &[1, 1]).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn empty_target_is_all_blank_mass() {
        let post = log_rows(&[&[0.25, 0.75], &[0.5, 0.5]]);
        let ll = ctc_log_likelihood(&post, &[]).unwrap();
        assert!((ll - (0.25f64 * 0.5).ln()).abs() < 1e-12);
    }

    #[test]
    fn malformed_rows_rejected() {
        let post = vec![vec![0.0, 0.0]];
        assert!(matches!(
            ctc_log_likelihood(&post, &[1]),
            Err(SitaError::MalformedPosteriorRow { .. })
        ));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let post = log_rows(&[&[0.2, 0.5, 0.3], &[0.6, 0.1, 0.3], &[0.25, 0.7, 0.05]]);
        let grad = ctc_gradient(&post, &[1, 2]).unwrap();
        for row in grad {
            let s: f64 = row.iter().sum();
            assert!(s.abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_zero_at_deterministic_optimum() {
        // Posteriors concentrated (up to epsilon) on the path a - b.
        let eps = 1e-12;
        let big = 1.0 - 2.0 * eps;
        let post = log_rows(&[&[eps, big, eps], &[big, eps, eps], &[eps, eps, big]]);
        let grad = ctc_gradient(&post, &[1, 2]).unwrap();
        assert!(grad[0][1].abs() < 1e-6);
        assert!(grad[1][0].abs() < 1e-6);
        assert!(grad[2][2].abs() < 1e-6);
    }

    #[test]
    fn gradient_rejects_infeasible() {
        let post = log_rows(&[&[0.5, 0.5]]);
        assert!(matches!(
            ctc_gradient(&post, &[1, 1]),
            Err(SitaError::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn forward_backward_consistency() {
        let post = log_rows(&[
            &[0.2, 0.5, 0.3],
            &[0.6, 0.1, 0.3],
            &[0.25, 0.7, 0.05],
            &[0.4, 0.4, 0.2],
        ]);
        let lattice = CtcLattice::build(&post, &[1, 2]).unwrap();
        for t in 0..post.len() {
            let mut terms = Vec::new();
            for (s, &sym) in lattice.expanded_target.iter().enumerate() {
                let a = lattice.log_alpha[s][t];
                let b = lattice.log_beta[s][t];
                if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                    continue;
                }
                terms.push(a + b - post[t][sym]);
            }
            let total = log_sum_exp(&terms).unwrap();
            assert!(
                (total - lattice.log_likelihood).abs() < 1e-8,
                "t={t}: {total} vs {}",
                lattice.log_likelihood
            );
        }
    }

    #[test]
    fn beam_equals_greedy_on_peaked_posteriors() {
        let eps = 1e-9;
        let big = 1.0 - 2.0 * eps;
        let post = log_rows(&[&[eps, big, eps], &[eps, big, eps], &[eps, eps, big]]);
        for width in [1, 2, 8] {
            let hyp = beam_search_decode(&post, width, None).unwrap();
            assert_eq!(hyp.labels, vec![1, 2]);
        }
    }

    #[test]
    fn lexicon_restricts_output() {
        // Vocabulary: 1 = a, 2 = b, 3 = c. Posteriors favor "ab".
        let post = log_rows(&[
            &[0.05, 0.85, 0.05, 0.05],
            &[0.05, 0.05, 0.85, 0.05],
            &[0.85, 0.05, 0.05, 0.05],
        ]);
        let lexicon = vec![vec![1, 2], vec![1, 3]];
        let hyp = beam_search_decode(&post, 8, Some(&lexicon)).unwrap();
        assert_eq!(hyp.labels, vec![1, 2]);

        // A lexicon with no feasible entry yields the empty hypothesis.
        let impossible = vec![vec![3, 3, 3, 3]];
        let hyp = beam_search_decode(&post, 8, Some(&impossible)).unwrap();
        assert_eq!(hyp.labels, Vec::<usize>::new());
        assert_eq!(hyp.score, f64::NEG_INFINITY);
    }

    #[test]
    fn vocabulary_round_trip() {
        let vocab = Vocabulary::from_words(&["liab", "lias"]);
        // Sorted unique characters: a, b, i, l, s.
        assert_eq!(vocab.len(), 5);
        let encoded = vocab.encode_word("liab").unwrap();
        assert_eq!(vocab.decode(&encoded), "liab");
        assert!(vocab.encode_word("xyz").is_err());
        assert_eq!(vocab.symbol(BLANK), None);
    }
}
