//! The `slu` command line: synth | prepare | train | eval | predict | gradcheck.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audio::read_wav;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::SluModel;
use crate::nn::suite::{run_gradient_suite, SUITE_TOLERANCE};
use crate::pipeline::{load_split, prepare, AugmentMode, PrepareOptions};
use crate::synth::{generate_dataset, Preset, SynthSpec};
use crate::train::{encode_examples, evaluate, predict, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Wav(_) | Error::Manifest(_) | Error::Archive(_) | Error::Shape { .. } | Error::Invalid(_) => {
            EXIT_VALIDATION
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slu", version, about = "Ensemble end-to-end spoken intent classification")]
struct Cli {
    /// Experiment config (JSON); defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Only print errors and final results.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus.
    Synth(SynthArgs),
    /// Extract features into sharded archives with train/test lists.
    Prepare(PrepareArgs),
    /// Train a classifier on prepared features.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test list.
    Eval(EvalArgs),
    /// Classify one wave file.
    Predict(PredictArgs),
    /// Check every layer's backward pass against finite differences.
    Gradcheck,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Easy,
    Hard,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's synth section.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Clip length override in seconds.
    #[arg(long)]
    clip_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AugmentArg {
    None,
    Noise,
    Reverb,
    Both,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    augment: AugmentArg,
    #[arg(long)]
    shards: Option<usize>,
    #[arg(long)]
    train_shards: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out_ckpt: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn no_clobber(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "exists; pass --force to overwrite"),
        ));
    }
    Ok(())
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth(a) => {
            let mut spec = match a.preset {
                Some(PresetArg::Easy) => SynthSpec::preset(Preset::Easy),
                Some(PresetArg::Hard) => SynthSpec::preset(Preset::Hard),
                None => cfg.synth.clone(),
            };
            if let Some(s) = a.clip_seconds {
                spec.clip_seconds = s;
            }
            if a.n < 2 {
                return Err(Error::Config(format!("--n must be >= 2, got {}", a.n)));
            }
            no_clobber(&a.out.join("wav.scp"), cli.force)?;
            let s = generate_dataset(a.n, &spec, &a.out, cfg.seed)?;
            writeln!(out, "{} positive / {} negative", s.positives, s.negatives).map_err(io_out)?;
            if !cli.quiet {
                writeln!(out, "wrote {}", s.dir.display()).map_err(io_out)?;
            }
            Ok(EXIT_OK)
        }
        Command::Prepare(a) => {
            let mut plan = cfg.shards.clone();
            if let Some(n) = a.shards {
                plan.shards_per_class = n;
                if a.train_shards.is_none() {
                    plan.train_shards = n.saturating_sub(plan.test_shards);
                }
            }
            if let Some(n) = a.train_shards {
                plan.train_shards = n;
                plan.test_shards = plan.shards_per_class.saturating_sub(n);
            }
            if cli.seed.is_some() {
                plan.seed = cfg.seed;
            }
            let augment = match a.augment {
                AugmentArg::None => AugmentMode::None,
                AugmentArg::Noise => AugmentMode::Noise,
                AugmentArg::Reverb => AugmentMode::Reverb,
                AugmentArg::Both => AugmentMode::Both,
            };
            let opts = PrepareOptions {
                plan,
                fbank: cfg.fbank.clone(),
                augment,
                augment_config: cfg.augment.clone(),
                force: cli.force,
            };
            let s = prepare(&a.data, &a.out, &opts)?;
            writeln!(
                out,
                "{} archives, {} train / {} test utterances",
                s.archives, s.train_utts, s.test_utts
            )
            .map_err(io_out)?;
            Ok(EXIT_OK)
        }
        Command::Train(a) => {
            no_clobber(&a.out_ckpt, cli.force)?;
            let model = SluModel::new(cfg.slu(), cfg.seed)?;
            let train = load_split(&a.features, true, cfg.mean_normalize)?;
            let data = encode_examples(&model, &train)?;
            let mut trainer = Trainer::new(model, cfg.train())?;
            let quiet = cli.quiet;
            let mut lines = Vec::new();
            trainer.fit_with(&data, None, |s| {
                if !quiet {
                    lines.push(format!(
                        "epoch {:>3}  loss {:.6}  train_f1 {:.4}",
                        s.epoch + 1,
                        s.mean_loss,
                        s.train_f1
                    ));
                }
            })?;
            for l in lines {
                writeln!(out, "{l}").map_err(io_out)?;
            }
            trainer.save(&a.out_ckpt)?;
            writeln!(out, "saved {} after {} steps", a.out_ckpt.display(), trainer.step()).map_err(io_out)?;
            Ok(EXIT_OK)
        }
        Command::Eval(a) => {
            let trainer = Trainer::load(&a.ckpt)?;
            let model = trainer.model();
            let test = load_split(&a.features, false, model.config().mean_normalize)?;
            let counts = evaluate(model, &encode_examples(model, &test)?)?;
            let report = counts.report();
            let name = format!("{} head", model.config().head);
            write!(out, "{}", MetricsReport::table(&[(&name, &report)])).map_err(io_out)?;
            if let Some(p) = &a.report {
                no_clobber(p, cli.force)?;
                std::fs::write(p, report.to_json()).map_err(|e| Error::io(p, e))?;
            }
            Ok(EXIT_OK)
        }
        Command::Predict(a) => {
            let trainer = Trainer::load(&a.ckpt)?;
            let w = read_wav(&a.wav)?;
            let utt = a.wav.file_stem().and_then(|s| s.to_str()).unwrap_or("utt");
            let p = predict(trainer.model(), utt, &w)?;
            let scores: Vec<String> = p.scores.iter().map(|s| format!("{s:.6}")).collect();
            let mut line = format!("label={} scores=[{}]", p.label, scores.join(","));
            if let Some(t) = p.event_time_s {
                line.push_str(&format!(" event_time={t:.2}s"));
            }
            writeln!(out, "{line}").map_err(io_out)?;
            Ok(EXIT_OK)
        }
        Command::Gradcheck => {
            let checks = run_gradient_suite(cfg.seed, 20)?;
            let mut ok = true;
            for c in &checks {
                let pass = c.max_rel_err < SUITE_TOLERANCE;
                ok &= pass;
                writeln!(
                    out,
                    "{:<26} trials {:>2}  max rel err {:.3e}  {}",
                    c.layer.name(),
                    c.trials,
                    c.max_rel_err,
                    if pass { "ok" } else { "FAIL" }
                )
                .map_err(io_out)?;
            }
            Ok(if ok { EXIT_OK } else { EXIT_NUMERIC })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let code = run(std::iter::once("slu").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn help_everywhere() {
        for sub in ["synth", "prepare", "train", "eval", "predict", "gradcheck"] {
            let (code, out, _) = run_capture(&[sub, "--help"]);
            assert_eq!(code, 0, "{sub}");
            assert!(out.contains("Usage"), "{sub}");
        }
    }

    #[test]
    fn bad_usage_is_config_error() {
        assert_eq!(run_capture(&["synth"]).0, EXIT_CONFIG);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_CONFIG);
    }

    #[test]
    fn synth_needs_two_clips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        let (code, _, err) = run_capture(&["synth", "--n", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains(">= 2"));
    }

    #[test]
    fn missing_config_file_is_io() {
        let (code, _, _) = run_capture(&["--config", "/nonexistent/cfg.json", "gradcheck"]);
        assert_eq!(code, EXIT_IO);
    }
}
