//! Orchestration behind the CLI verbs: generate -> train stage 1 -> train
//! stage 2 -> evaluate -> report, all rooted in one output directory.
//! Every command is deterministic given its inputs; re-execution rewrites
//! byte-identical artifacts.

use crate::config::RunConfig;
use crate::corpus::{generate, load_corpus, split, write_corpus, Split, Token};
use crate::ctc::{beam_search_decode, Vocabulary};
use crate::distill::KdConfig;
use crate::encoder::{load_checkpoint, save_checkpoint, EncoderStack};
use crate::error::{Result, SitaError};
use crate::eval::{
    cross_gender_retrieval, edit_rates, geometry_items, layer_probe, project_2d,
    similarity_experiments, tone_cls_accuracy, tone_geometry, AsrScore, ANALYSIS_POOLING,
};
use crate::seeding::substream_seed;
use crate::trainer::{compute_teacher_cache, train_stage1, train_stage2, TeacherCache};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Prints unless SITA_LOG is set to `quiet` or `0`.
pub fn log_info(message: &str) {
    match std::env::var("SITA_LOG") {
        Ok(v) if v == "quiet" || v == "0" => {}
        _ => println!("{message}"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| SitaError::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| SitaError::io(path.display().to_string(), e))
}

pub fn corpus_dir(out: &Path) -> PathBuf {
    out.join("corpus")
}

pub fn stage_checkpoint(out: &Path, stage: u8) -> PathBuf {
    out.join(format!("stage{stage}.sitc"))
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Token counts by split, gender, and tone, as printed by `gen`.
#[derive(Debug, Clone, Default)]
pub struct GenSummary {
    pub total: usize,
    pub counts: BTreeMap<(String, String, u32), usize>,
}

/// Generates the corpus, assigns splits, and persists the manifest, feature
/// files, lexicon, and run id.
pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<GenSummary> {
    let spec = cfg.resolved_corpus();
    let mut tokens = generate(&spec)?;
    split(
        &mut tokens,
        &cfg.split,
        substream_seed(cfg.seed, "split", &[]),
    )?;
    let dir = corpus_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| SitaError::io(dir.display().to_string(), e))?;
    write_corpus(&dir, &tokens)?;

    let mut words: Vec<String> = tokens.iter().map(|t| t.word.clone()).collect();
    words.sort();
    words.dedup();
    crate::ctc::write_lexicon(&out.join("lexicon.txt"), &words)?;
    write_text(
        &out.join("run.json"),
        &format!("{{\"run_id\":\"{}\",\"seed\":{}}}\n", cfg.run_id(), cfg.seed),
    )?;

    let mut summary = GenSummary {
        total: tokens.len(),
        counts: BTreeMap::new(),
    };
    for t in &tokens {
        *summary
            .counts
            .entry((t.split.to_string(), t.gender.to_string(), t.tone))
            .or_insert(0) += 1;
    }
    log_info(&format!("generated {} tokens into {}", summary.total, dir.display()));
    for ((split, gender, tone), count) in &summary.counts {
        log_info(&format!(
            "  split={split} gender={gender} tone={tone} count={count}"
        ));
    }
    Ok(summary)
}

fn load_run_corpus(out: &Path) -> Result<Vec<Token>> {
    let dir = corpus_dir(out);
    let manifest = dir.join("manifest.jsonl");
    if !manifest.exists() {
        return Err(SitaError::MissingArtifact(manifest.display().to_string()));
    }
    load_corpus(&dir)
}

fn vocabulary_for(tokens: &[Token]) -> Vocabulary {
    let words: Vec<&str> = tokens.iter().map(|t| t.word.as_str()).collect();
    Vocabulary::from_words(&words)
}

fn stage1_trace_csv(rows: &[crate::trainer::Stage1TraceRow]) -> String {
    let mut text = String::from("step,total,speaker,tone_contrastive,tone_ce,grad_norm\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            r.step,
            fmt6(r.total),
            fmt6(r.speaker),
            fmt6(r.tone_contrastive),
            fmt6(r.tone_ce),
            fmt6(r.grad_norm)
        );
    }
    text
}

fn stage2_trace_csv(rows: &[crate::trainer::Stage2TraceRow]) -> String {
    let mut text = String::from("step,total,ctc,kd,grad_norm\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            r.step,
            fmt6(r.total),
            fmt6(r.ctc),
            fmt6(r.kd),
            fmt6(r.grad_norm)
        );
    }
    text
}

/// Trains one stage. Stage 2 requires the stage-1 checkpoint; with KD enabled
/// it first trains a CTC-only teacher copy and caches its logits.
pub fn cmd_train(cfg: &RunConfig, out: &Path, stage: u8) -> Result<()> {
    let tokens = load_run_corpus(out)?;
    match stage {
        1 => {
            let vocab = vocabulary_for(&tokens);
            let mut stack = EncoderStack::new(
                cfg.resolved_stack(),
                vocab.n_classes(),
                cfg.corpus.n_tones as usize,
            )?;
            let trace = train_stage1(
                &tokens,
                &mut stack,
                &cfg.stage1,
                &cfg.stage1_variant(),
                &cfg.resolved_mining(),
                &cfg.optimizer,
                cfg.train_pooling,
                substream_seed(cfg.seed, "train1", &[]),
            )?;
            save_checkpoint(&stack, &stage_checkpoint(out, 1))?;
            write_text(&out.join("stage1_trace.csv"), &stage1_trace_csv(&trace))?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                log_info(&format!(
                    "stage 1: loss {} -> {} over {} steps",
                    fmt6(first.total),
                    fmt6(last.total),
                    trace.len()
                ));
            }
        }
        2 => {
            let stage1_path = stage_checkpoint(out, 1);
            if !stage1_path.exists() {
                return Err(SitaError::MissingArtifact(stage1_path.display().to_string()));
            }
            let base = load_checkpoint(&stage1_path)?;
            let vocab = vocabulary_for(&tokens);
            let opt = cfg.stage2_opt();
            let teacher_cache = if cfg.kd.kd_enabled() {
                Some(build_teacher(cfg, out, &tokens, &base, &vocab)?)
            } else {
                None
            };
            let mut student = load_checkpoint(&stage1_path)?;
            let trace = train_stage2(
                &tokens,
                &mut student,
                &vocab,
                teacher_cache.as_ref(),
                &cfg.kd,
                &opt,
                substream_seed(cfg.seed, "train2", &[]),
            )?;
            save_checkpoint(&student, &stage_checkpoint(out, 2))?;
            write_text(&out.join("stage2_trace.csv"), &stage2_trace_csv(&trace))?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                log_info(&format!(
                    "stage 2: loss {} -> {} over {} steps",
                    fmt6(first.total),
                    fmt6(last.total),
                    trace.len()
                ));
            }
        }
        other => {
            return Err(SitaError::InvalidConfig(format!(
                "stage must be 1 or 2, got {other}"
            )));
        }
    }
    Ok(())
}

/// CTC-only training of a copy of the stage-1 stack; its logits over the
/// train split become the distillation targets.
fn build_teacher(
    cfg: &RunConfig,
    out: &Path,
    tokens: &[Token],
    base: &EncoderStack,
    vocab: &Vocabulary,
) -> Result<TeacherCache> {
    let mut teacher = clone_stack(base);
    let opt = cfg.stage2_opt();
    let pure_ctc = KdConfig {
        tau_kd: cfg.kd.tau_kd,
        delta: 1.0,
    };
    train_stage2(
        tokens,
        &mut teacher,
        vocab,
        None,
        &pure_ctc,
        &opt,
        substream_seed(cfg.seed, "teacher", &[]),
    )?;
    save_checkpoint(&teacher, &out.join("teacher.sitc"))?;
    let train_tokens: Vec<Token> = tokens
        .iter()
        .filter(|t| t.split == Split::Train)
        .cloned()
        .collect();
    let cache = compute_teacher_cache(&teacher, &train_tokens)?;
    let cache_dir = out.join("teacher");
    std::fs::create_dir_all(&cache_dir)
        .map_err(|e| SitaError::io(cache_dir.display().to_string(), e))?;
    for (id, logits) in &cache {
        let frames = logits.len();
        let width = logits[0].len();
        let flat: Vec<f64> = logits.iter().flatten().copied().collect();
        let fr = crate::math::FrameSequence::new(flat, frames, width)?;
        crate::io::write_sitf(&cache_dir.join(format!("{id}.sitf")), &fr)?;
    }
    log_info(&format!(
        "teacher trained; cached logits for {} train tokens",
        cache.len()
    ));
    Ok(cache)
}

fn clone_stack(stack: &EncoderStack) -> EncoderStack {
    let mut copy = EncoderStack::identity(
        stack.cfg.clone(),
        stack.n_classes(),
        stack.tone_head.n_tones,
    )
    .expect("validated config");
    for name in stack.param_names() {
        *copy.param_mut(&name).expect("same groups") = stack.param(&name).expect("group").to_vec();
    }
    copy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Retrieval,
    Tone,
    Asr,
    Sim,
    Probe,
    Tonecls,
}

impl EvalKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "retrieval" => EvalKind::Retrieval,
            "tone" => EvalKind::Tone,
            "asr" => EvalKind::Asr,
            "sim" => EvalKind::Sim,
            "probe" => EvalKind::Probe,
            "tonecls" => EvalKind::Tonecls,
            other => {
                return Err(SitaError::InvalidConfig(format!(
                    "unknown eval kind {other:?} (expected retrieval|tone|asr|sim|probe|tonecls)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalKind::Retrieval => "retrieval",
            EvalKind::Tone => "tone",
            EvalKind::Asr => "asr",
            EvalKind::Sim => "sim",
            EvalKind::Probe => "probe",
            EvalKind::Tonecls => "tonecls",
        }
    }

    pub fn all() -> [EvalKind; 6] {
        [
            EvalKind::Retrieval,
            EvalKind::Tone,
            EvalKind::Asr,
            EvalKind::Sim,
            EvalKind::Probe,
            EvalKind::Tonecls,
        ]
    }
}

/// The newest trained checkpoint: stage 2 when present, else stage 1.
pub fn load_best_checkpoint(out: &Path) -> Result<EncoderStack> {
    let stage2 = stage_checkpoint(out, 2);
    if stage2.exists() {
        return load_checkpoint(&stage2);
    }
    let stage1 = stage_checkpoint(out, 1);
    if stage1.exists() {
        return load_checkpoint(&stage1);
    }
    Err(SitaError::MissingArtifact(stage1.display().to_string()))
}

/// Decodes the test split with lexicon-constrained beam search.
pub fn decode_test_split(
    tokens: &[Token],
    stack: &EncoderStack,
    vocab: &Vocabulary,
    lexicon: &[Vec<usize>],
    beam_width: usize,
) -> Result<(Vec<Vec<String>>, Vec<Vec<String>>)> {
    let mut hypotheses = Vec::new();
    let mut references = Vec::new();
    for token in tokens.iter().filter(|t| t.split == Split::Test) {
        let hiddens = stack.forward(&token.features, stack.cfg.n_blocks)?;
        let logits = stack.ctc_logits(&hiddens[stack.cfg.n_blocks - 1]);
        let posteriors: Vec<Vec<f64>> = logits
            .iter()
            .map(|row| {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                row.iter().map(|v| v - lse).collect()
            })
            .collect();
        let hyp = beam_search_decode(&posteriors, beam_width, Some(lexicon))?;
        let text = vocab.decode(&hyp.labels);
        hypotheses.push(if text.is_empty() { vec![] } else { vec![text] });
        references.push(vec![token.word.clone()]);
    }
    Ok((hypotheses, references))
}

pub fn asr_score_csv(score: &AsrScore) -> String {
    let mut text = String::from(
        "cer,wer,word_sub,word_del,word_ins,word_ref_len,char_sub,char_del,char_ins,char_ref_len\n",
    );
    let _ = writeln!(
        text,
        "{},{},{},{},{},{},{},{},{},{}",
        fmt6(score.cer),
        fmt6(score.wer),
        score.word_sub,
        score.word_del,
        score.word_ins,
        score.word_ref_len,
        score.char_sub,
        score.char_del,
        score.char_ins,
        score.char_ref_len
    );
    text
}

/// Runs one evaluation kind against the newest checkpoint and writes its CSV.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, kind: EvalKind) -> Result<PathBuf> {
    let tokens = load_run_corpus(out)?;
    let stack = load_best_checkpoint(out)?;
    let layer = stack.cfg.feature_layer;
    let path = out.join(format!("eval_{}.csv", kind.name()));
    let text = match kind {
        EvalKind::Retrieval => {
            let r = cross_gender_retrieval(&tokens, &stack, layer, Split::Test)?;
            let mut text = String::from("direction,top1,top5\n");
            let _ = writeln!(text, "F->M,{},{}", fmt6(r.f_to_m.top1), fmt6(r.f_to_m.top5));
            let _ = writeln!(text, "M->F,{},{}", fmt6(r.m_to_f.top1), fmt6(r.m_to_f.top5));
            let _ = writeln!(text, "avg,{},{}", fmt6(r.avg_top1), fmt6(r.avg_top5));
            text
        }
        EvalKind::Tone => {
            let items = geometry_items(&tokens, &stack, layer, Split::Test)?;
            let geometry = tone_geometry(&items)?;
            let mut text = String::from("scope,stat,mean,std,count\n");
            let mut push = |scope: &str, stat: &str, s: &Option<crate::eval::Stat>| {
                if let Some(s) = s {
                    let _ = writeln!(
                        text,
                        "{scope},{stat},{},{},{}",
                        fmt6(s.mean),
                        fmt6(s.std),
                        s.count
                    );
                }
            };
            push("all", "pos_sim", &geometry.pos_sim);
            push("all", "hard_neg_dist", &geometry.hard_neg_dist);
            push("all", "soft_neg_dist", &geometry.soft_neg_dist);
            for row in &geometry.per_tone {
                let scope = format!("tone{}", row.tone);
                push(&scope, "pos_sim", &row.pos_sim);
                push(&scope, "hard_neg_dist", &row.hard_neg_dist);
                push(&scope, "soft_neg_dist", &row.soft_neg_dist);
            }
            text
        }
        EvalKind::Asr => {
            let vocab = vocabulary_for(&tokens);
            let lexicon = crate::ctc::read_lexicon(&out.join("lexicon.txt"), &vocab)?;
            let (hyps, refs) =
                decode_test_split(&tokens, &stack, &vocab, &lexicon, cfg.beam_width)?;
            let score = edit_rates(&hyps, &refs)?;
            asr_score_csv(&score)
        }
        EvalKind::Sim => {
            let scores = similarity_experiments(
                &tokens,
                &stack,
                layer,
                Split::Test,
                substream_seed(cfg.seed, "sim", &[]),
            )?;
            let mut text = String::from("metric,value\n");
            let mut push = |name: &str, v: &Option<f64>| {
                if let Some(v) = v {
                    let _ = writeln!(text, "{name},{}", fmt6(*v));
                }
            };
            push("e1", &scores.e1);
            push("e2", &scores.e2);
            push("e3", &scores.e3);
            push("e4", &scores.e4);
            for (shift, sim) in &scores.e2_curve {
                let _ = writeln!(text, "e2@{shift},{}", fmt6(*sim));
            }
            text
        }
        EvalKind::Probe => {
            let rows = layer_probe(&tokens, &stack, Split::Test)?;
            let mut text = String::from("layer,avg_top1,hard_neg_dist\n");
            for row in rows {
                let _ = writeln!(
                    text,
                    "{},{},{}",
                    row.layer,
                    fmt6(row.avg_top1),
                    row.hard_neg_dist.map(fmt6).unwrap_or_default()
                );
            }
            text
        }
        EvalKind::Tonecls => {
            let (top1, top3) =
                tone_cls_accuracy(&tokens, &stack, &stack.tone_head, layer, Split::Test)?;
            format!("top1,top3\n{},{}\n", fmt6(top1), fmt6(top3))
        }
    };
    write_text(&path, &text)?;
    log_info(&format!("wrote {}", path.display()));
    Ok(path)
}

fn read_run_id(out: &Path) -> Result<String> {
    let path = out.join("run.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|_| SitaError::MissingArtifact(path.display().to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        SitaError::MalformedFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    })?;
    Ok(value["run_id"].as_str().unwrap_or("run-unknown").to_string())
}

/// Merges every eval CSV present into one summary keyed by run id, and
/// exports 2-D projection coordinates of the test-split embeddings.
pub fn cmd_report(out: &Path) -> Result<()> {
    let run_id = read_run_id(out)?;
    let mut present = Vec::new();
    for kind in EvalKind::all() {
        let path = out.join(format!("eval_{}.csv", kind.name()));
        if path.exists() {
            present.push((kind, path));
        }
    }
    if present.is_empty() {
        return Err(SitaError::MissingArtifact(format!(
            "no eval_*.csv under {}",
            out.display()
        )));
    }
    let mut summary = String::from("run_id,kind,metric,value\n");
    for (kind, path) in &present {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SitaError::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            // First column is the row key unless the header starts with a
            // value column (asr, tonecls single-row layouts).
            let keyed = matches!(
                kind,
                EvalKind::Retrieval | EvalKind::Tone | EvalKind::Sim | EvalKind::Probe
            );
            if keyed {
                let key = fields[0];
                for (name, value) in header[1..].iter().zip(&fields[1..]) {
                    if value.is_empty() {
                        continue;
                    }
                    let _ = writeln!(
                        summary,
                        "{run_id},{},{key}.{name},{value}",
                        kind.name()
                    );
                }
            } else {
                for (name, value) in header.iter().zip(&fields) {
                    let _ = writeln!(summary, "{run_id},{},{name},{value}", kind.name());
                }
            }
        }
    }
    write_text(&out.join("summary.csv"), &summary)?;

    // Fig-4-style export: mean-pooled test embeddings projected to 2-D.
    let tokens = load_run_corpus(out)?;
    let stack = load_best_checkpoint(out)?;
    let layer = stack.cfg.feature_layer;
    let test: Vec<&Token> = tokens.iter().filter(|t| t.split == Split::Test).collect();
    let embeddings: Vec<crate::math::Embedding> = test
        .iter()
        .map(|t| stack.extract_embedding(&t.features, layer, ANALYSIS_POOLING))
        .collect::<Result<_>>()?;
    let projection = project_2d(&embeddings)?;
    let mut text = String::from("id,word,base_word,tone,x,y\n");
    for (token, coords) in test.iter().zip(&projection.coords) {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            token.id,
            token.word,
            token.base_word,
            token.tone,
            fmt6(coords[0]),
            fmt6(coords[1])
        );
    }
    write_text(&out.join("projection_2d.csv"), &text)?;
    log_info(&format!(
        "wrote {} and {}",
        out.join("summary.csv").display(),
        out.join("projection_2d.csv").display()
    ));
    Ok(())
}
