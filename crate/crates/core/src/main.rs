//! `trace-rl`: train, transfer, embed, analyze.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use trace_rl::config::ExperimentConfig;
use trace_rl::runner::{cmd_analyze, cmd_embed, cmd_train, cmd_transfer, AnalyzeTask, RunManifest};
use trace_rl::Error;

const USAGE: &str = "\
trace-rl <command> [flags]

Commands:
  train      --config PATH [--out DIR] [--seeds \"1,2,3\"] [--quiet]
  transfer   --config PATH --source-checkpoint PATH [--out DIR] [--seeds ...] [--quiet]
  embed      --config PATH [--out DIR] [--seeds ...] [--quiet]
  analyze    --task clusters    --table PATH --n-steps N [--out DIR]
  analyze    --task monotonicity --table PATH [--out DIR]
  analyze    --task analogy     --table PATH --n-steps N --plus I,J --minus K --expected DX,DY [--out DIR]
  analyze    --task curves      --curves A.csv,B.csv --threshold X --window W
                                [--confidence 0.95] [--resamples 1000] [--band-seed 0] [--out DIR]

The --config argument accepts either an experiment config or a previously
written manifest.json (exact rerun). TRACE_RL_THREADS caps seed parallelism.
";

enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn classify(err: Error) -> CliError {
    match &err {
        Error::Config(_) | Error::Json(_) => CliError::Config(err.to_string()),
        _ => CliError::Runtime(err.to_string()),
    }
}

#[derive(Default)]
struct Flags {
    values: Vec<(String, String)>,
    quiet: bool,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Flags, CliError> {
        let mut flags = Flags::default();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            if !arg.starts_with("--") {
                return Err(CliError::Usage(format!("unexpected argument `{arg}`")));
            }
            if arg == "--quiet" {
                flags.quiet = true;
                i += 1;
                continue;
            }
            let key = arg.trim_start_matches("--").to_string();
            let value = args
                .get(i + 1)
                .ok_or_else(|| CliError::Usage(format!("flag {arg} needs a value")))?;
            flags.values.push((key, value.clone()));
            i += 2;
        }
        Ok(flags)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{key}")))
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (k, _) in &self.values {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown flag --{k}")));
            }
        }
        Ok(())
    }
}

fn parse_seed_list(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Usage(format!("bad seed `{s}`: {e}")))
        })
        .collect()
}

fn parse_index_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Usage(format!("bad index `{s}`: {e}")))
        })
        .collect()
}

/// Load a config file, accepting either a bare [`ExperimentConfig`] or a
/// [`RunManifest`] written by a previous run.
fn load_config(path: &Path) -> Result<(ExperimentConfig, Option<PathBuf>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let looks_like_manifest = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .map(|v| v.get("command").is_some())
        .unwrap_or(false);
    if looks_like_manifest {
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok((manifest.config, manifest.source_checkpoint))
    } else {
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok((config, None))
    }
}

fn load_config_with_overrides(flags: &Flags) -> Result<(ExperimentConfig, Option<PathBuf>), CliError> {
    let path = PathBuf::from(flags.require("config")?);
    let (mut config, manifest_source) = load_config(&path)?;
    if let Some(out) = flags.get("out") {
        config.output_dir = PathBuf::from(out);
    }
    if let Some(seeds) = flags.get("seeds") {
        config.seeds = parse_seed_list(seeds)?;
    }
    config.validate().map_err(classify)?;
    Ok((config, manifest_source))
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let command = args
        .first()
        .ok_or_else(|| CliError::Usage(USAGE.to_string()))?
        .clone();
    let flags = Flags::parse(&args[1..])?;
    match command.as_str() {
        "train" => {
            flags.reject_unknown(&["config", "out", "seeds"])?;
            let (config, _) = load_config_with_overrides(&flags)?;
            cmd_train(&config, flags.quiet).map_err(classify)
        }
        "transfer" => {
            flags.reject_unknown(&["config", "out", "seeds", "source-checkpoint"])?;
            let (config, manifest_source) = load_config_with_overrides(&flags)?;
            let source = flags
                .get("source-checkpoint")
                .map(PathBuf::from)
                .or(manifest_source)
                .ok_or_else(|| {
                    CliError::Usage("transfer needs --source-checkpoint (or a manifest that records one)".into())
                })?;
            cmd_transfer(&config, &source, flags.quiet).map_err(classify)
        }
        "embed" => {
            flags.reject_unknown(&["config", "out", "seeds"])?;
            let (config, _) = load_config_with_overrides(&flags)?;
            cmd_embed(&config, flags.quiet).map_err(classify)
        }
        "analyze" => {
            flags.reject_unknown(&[
                "task",
                "table",
                "n-steps",
                "plus",
                "minus",
                "expected",
                "curves",
                "threshold",
                "window",
                "confidence",
                "resamples",
                "band-seed",
                "out",
            ])?;
            let out_dir = PathBuf::from(flags.get("out").unwrap_or("."));
            let task = match flags.require("task")? {
                "clusters" => AnalyzeTask::Clusters {
                    table: PathBuf::from(flags.require("table")?),
                    n_steps: flags
                        .require("n-steps")?
                        .parse()
                        .map_err(|e| CliError::Usage(format!("bad --n-steps: {e}")))?,
                },
                "monotonicity" => AnalyzeTask::Monotonicity {
                    table: PathBuf::from(flags.require("table")?),
                },
                "analogy" => {
                    let expected = flags.require("expected")?;
                    let parts: Vec<&str> = expected.split(',').collect();
                    if parts.len() != 2 {
                        return Err(CliError::Usage("--expected wants DX,DY".into()));
                    }
                    let dx = parts[0].trim().parse().map_err(|e| {
                        CliError::Usage(format!("bad --expected dx: {e}"))
                    })?;
                    let dy = parts[1].trim().parse().map_err(|e| {
                        CliError::Usage(format!("bad --expected dy: {e}"))
                    })?;
                    AnalyzeTask::Analogy {
                        table: PathBuf::from(flags.require("table")?),
                        n_steps: flags
                            .require("n-steps")?
                            .parse()
                            .map_err(|e| CliError::Usage(format!("bad --n-steps: {e}")))?,
                        plus: parse_index_list(flags.require("plus")?)?,
                        minus: flags
                            .get("minus")
                            .map(parse_index_list)
                            .transpose()?
                            .unwrap_or_default(),
                        expected: (dx, dy),
                    }
                }
                "curves" => AnalyzeTask::Curves {
                    curves: flags
                        .require("curves")?
                        .split(',')
                        .map(|s| PathBuf::from(s.trim()))
                        .collect(),
                    threshold: flags
                        .require("threshold")?
                        .parse()
                        .map_err(|e| CliError::Usage(format!("bad --threshold: {e}")))?,
                    window: flags
                        .require("window")?
                        .parse()
                        .map_err(|e| CliError::Usage(format!("bad --window: {e}")))?,
                    confidence: flags
                        .get("confidence")
                        .map(|v| v.parse())
                        .transpose()
                        .map_err(|e| CliError::Usage(format!("bad --confidence: {e}")))?
                        .unwrap_or(0.95),
                    resamples: flags
                        .get("resamples")
                        .map(|v| v.parse())
                        .transpose()
                        .map_err(|e| CliError::Usage(format!("bad --resamples: {e}")))?
                        .unwrap_or(1000),
                    seed: flags
                        .get("band-seed")
                        .map(|v| v.parse())
                        .transpose()
                        .map_err(|e| CliError::Usage(format!("bad --band-seed: {e}")))?
                        .unwrap_or(0),
                },
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown analyze task `{other}` (clusters | monotonicity | analogy | curves)"
                    )))
                }
            };
            cmd_analyze(&task, &out_dir, flags.quiet).map_err(classify)
        }
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!(
            "unknown command `{other}`\n\n{USAGE}"
        ))),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
