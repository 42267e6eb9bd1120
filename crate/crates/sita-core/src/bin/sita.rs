//! Command-line front end: gen, train, eval, report.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or missing-prerequisite
//! failure.

use sita_core::config::RunConfig;
use sita_core::pipeline::{cmd_eval, cmd_gen, cmd_report, cmd_train, EvalKind};
use sita_core::SitaError;
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
sita - speaker-invariant, tone-aware representation learning pipeline

USAGE:
    sita gen    --config PATH [--out DIR] [--seed U64]
    sita train  --config PATH --stage {1|2} [--out DIR] [--seed U64]
    sita eval   --config PATH --kind {retrieval|tone|asr|sim|probe|tonecls}
                [--out DIR] [--seed U64]
    sita report [--out DIR]

FLAGS:
    --config PATH   run configuration (JSON); every field has a default
    --stage N       training stage, 1 or 2
    --kind KIND     evaluation to run
    --out DIR       output directory (overrides the config's out_dir)
    --seed U64      global seed (overrides the config's seed)

Set SITA_LOG=quiet to silence progress output.";

struct Args {
    command: String,
    config: Option<PathBuf>,
    stage: Option<u8>,
    kind: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

fn parse_args(mut argv: std::env::Args) -> Result<Args, String> {
    argv.next(); // program name
    let command = argv.next().ok_or_else(|| USAGE.to_string())?;
    let mut args = Args {
        command,
        config: None,
        stage: None,
        kind: None,
        out: None,
        seed: None,
    };
    while let Some(flag) = argv.next() {
        let mut value = || {
            argv.next()
                .ok_or_else(|| format!("flag {flag} expects a value"))
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value()?)),
            "--stage" => {
                let v = value()?;
                args.stage = Some(v.parse().map_err(|_| format!("bad stage {v:?}"))?);
            }
            "--kind" => args.kind = Some(value()?),
            "--out" => args.out = Some(PathBuf::from(value()?)),
            "--seed" => {
                let v = value()?;
                args.seed = Some(v.parse().map_err(|_| format!("bad seed {v:?}"))?);
            }
            "--help" | "-h" => return Err(USAGE.to_string()),
            other => return Err(format!("unknown flag {other}\n\n{USAGE}")),
        }
    }
    Ok(args)
}

fn load_config(args: &Args) -> Result<RunConfig, SitaError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            return Err(SitaError::InvalidConfig(
                "--config is required for this command".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn exit_code_for(err: &SitaError) -> u8 {
    match err {
        SitaError::InvalidConfig(_) | SitaError::MissingArtifact(_) => 2,
        _ => 1,
    }
}

fn run() -> Result<(), (u8, String)> {
    let args = parse_args(std::env::args()).map_err(|usage| (2, usage))?;
    let fail = |e: SitaError| (exit_code_for(&e), e.to_string());
    match args.command.as_str() {
        "gen" => {
            let cfg = load_config(&args).map_err(fail)?;
            let out = PathBuf::from(&cfg.out_dir);
            cmd_gen(&cfg, &out).map_err(fail)?;
        }
        "train" => {
            let cfg = load_config(&args).map_err(fail)?;
            let stage = args
                .stage
                .ok_or_else(|| (2u8, "--stage {1|2} is required".to_string()))?;
            if stage != 1 && stage != 2 {
                return Err((2, format!("stage must be 1 or 2, got {stage}")));
            }
            let out = PathBuf::from(&cfg.out_dir);
            cmd_train(&cfg, &out, stage).map_err(fail)?;
        }
        "eval" => {
            let cfg = load_config(&args).map_err(fail)?;
            let kind_name = args
                .kind
                .ok_or_else(|| (2u8, "--kind is required".to_string()))?;
            let kind = EvalKind::parse(&kind_name).map_err(fail)?;
            let out = PathBuf::from(&cfg.out_dir);
            cmd_eval(&cfg, &out, kind).map_err(fail)?;
        }
        "report" => {
            // Report needs only the run directory; --out or config supplies it.
            let out = match (&args.out, &args.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => PathBuf::from(load_config(&args).map_err(fail)?.out_dir),
                (None, None) => return Err((2, "--out DIR is required".to_string())),
            };
            cmd_report(&out).map_err(fail)?;
        }
        other => return Err((2, format!("unknown command {other:?}\n\n{USAGE}"))),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("{message}");
            ExitCode::from(code)
        }
    }
}
