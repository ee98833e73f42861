//! Experiment drivers behind the `mixdiff` binary.
//!
//! Each command reads a validated [`ExperimentConfig`], writes CSV artifacts
//! into an output directory, and finishes with `effective_config.toml` (the
//! config after overrides) and `manifest.toml`. Re-running the same command on
//! `effective_config.toml` reproduces every CSV byte for byte.
//!
//! Artifacts:
//!
//! | command     | files |
//! |-------------|-------|
//! | `check`     | `check_report.csv`: `check,tolerance,measured,passed,error` |
//! | `train`     | `loss_history.csv`: `step,diffusion,prior,style,total`; `network.bin`; `train_summary.csv`: `model_error,zero_baseline,ratio` |
//! | `sample`    | `samples.csv`: `condition,index,x0..`; `moments.csv`: `condition,mean_error_max,covariance_error,covariance_max_abs_error,mean_log_likelihood` |
//! | `mix`       | `mix_samples.csv`: `mix,index,x0..`; `mix_probe.csv`: `mix,descriptor,<label>..,se_<label>..` |
//! | `curve`     | `curve.csv`: `gamma,<label>..`; `curve_stderr.csv`: same columns |
//! | `confusion` | `confusion.csv`: `intended,<bucket>..`; `centroids.csv`: `bucket,low,high,centroid,evaluation_mean` |

pub mod checks;
pub mod config;
pub mod seeds;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::probe::{
    format_float, intensity_confusion, moment_check, probability_curve, ConfusionSettings, Probe,
};
use crate::sampler::{sample_batch, sample_mixed_batch};
use crate::score_models::{AnalyticScoreModel, MlpScoreNetwork, ScoreModel};
use crate::training::{score_matching_error, train, FeatureExtractor};

pub use checks::{run_checks, CheckOptions, CheckReport, CheckResult};
pub use config::{load_config, ExperimentConfig, ModelKind, Overrides, RawConfig};
pub use seeds::derive_seed;

/// Environment variable consulted for the output directory when `--out` is
/// not given.
pub const OUTPUT_DIR_ENV: &str = "MIXDIFF_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "mixdiff-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Train,
    Sample,
    Mix,
    Curve,
    Confusion,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Mix => "mix",
            Command::Curve => "curve",
            Command::Confusion => "confusion",
        }
    }
}

/// Process exit code for an error: 2 configuration or argument, 3 I/O,
/// 4 numerical failure, 5 checkpoint. Failed checks exit with 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Argument(_) | Error::Validation { .. } => 2,
        Error::Io(_) | Error::Csv(_) => 3,
        Error::Domain { .. }
        | Error::Shape { .. }
        | Error::Singularity { .. }
        | Error::Divergence { .. }
        | Error::Training { .. } => 4,
        Error::Checkpoint(_) => 5,
    }
}

/// `--out` (or the environment variable) wins, then the config's
/// `output_dir`, then [`DEFAULT_OUTPUT_DIR`].
pub fn output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match &config.output_dir {
        Some(p) => config.resolve_path(p),
        None => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: Command,
    pub out_dir: PathBuf,
    /// Artifact file names written, in order.
    pub outputs: Vec<String>,
    /// Checks that failed (only for `check`).
    pub failed_checks: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config: &'a str,
    config_sha256: String,
    crate_version: &'a str,
    outputs: Vec<String>,
    outputs_sha256: BTreeMap<String, String>,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(
        self,
        command: Command,
        config: &ExperimentConfig,
        failed: Vec<String>,
    ) -> Result<RunSummary> {
        let effective = config.effective_toml();
        fs::write(self.dir.join("effective_config.toml"), &effective)?;
        let mut hashes = BTreeMap::new();
        for name in &self.written {
            let bytes = fs::read(self.dir.join(name))?;
            hashes.insert(name.clone(), hex::encode(Sha256::digest(&bytes)));
        }
        let manifest = Manifest {
            command: command.as_str(),
            seed: config.seed,
            config: "effective_config.toml",
            config_sha256: config.content_hash(),
            crate_version: env!("CARGO_PKG_VERSION"),
            outputs: self.written.clone(),
            outputs_sha256: hashes,
        };
        let text = toml::to_string(&manifest).expect("manifest is always serialisable");
        fs::write(self.dir.join("manifest.toml"), text)?;
        Ok(RunSummary {
            command,
            out_dir: self.dir,
            outputs: self.written,
            failed_checks: failed,
        })
    }
}

/// Score model named by the config: the exact oracle or a trained network.
pub fn build_model(config: &ExperimentConfig) -> Result<Box<dyn ScoreModel>> {
    match config.model.kind {
        ModelKind::Analytic => Ok(Box::new(AnalyticScoreModel::new(
            config.schedule,
            config.conditions.clone(),
        )?)),
        ModelKind::Network => {
            let path =
                config.model.checkpoint.as_ref().ok_or_else(|| {
                    Error::Config("model.checkpoint: required for network".into())
                })?;
            let net = MlpScoreNetwork::load(config.resolve_path(path))?;
            let first = &config.conditions[0];
            if net.dim() != first.dim() || net.embed_dim() != first.condition().dim() {
                return Err(Error::Checkpoint(format!(
                    "network expects data dim {} and embedding dim {}, layout has {} and {}",
                    net.dim(),
                    net.embed_dim(),
                    first.dim(),
                    first.condition().dim()
                )));
            }
            Ok(Box::new(net))
        }
    }
}

/// Run `command` and write its artifacts into `out_dir`.
pub fn run(command: Command, config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let mut art = Artifacts::new(out_dir)?;
    let mut failed = Vec::new();
    match command {
        Command::Check => {
            let report = run_checks(config, CheckOptions::default());
            failed = report.failures().map(|r| r.name.clone()).collect();
            art.csv("check_report.csv", |b| report.write_csv(b))?;
        }
        Command::Train => run_train(config, &mut art)?,
        Command::Sample => run_sample(config, &mut art)?,
        Command::Mix => run_mix(config, &mut art)?,
        Command::Curve => run_curve(config, &mut art)?,
        Command::Confusion => run_confusion(config, &mut art)?,
    }
    art.finish(command, config, failed)
}

fn run_train(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let first = &config.conditions[0];
    let (dim, embed_dim) = (first.dim(), first.condition().dim());
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, seeds::NETWORK_INIT));
    let network = MlpScoreNetwork::random(dim, embed_dim, &config.model.hidden, &mut init_rng)?;
    let extractor = FeatureExtractor::seeded(
        dim,
        &config.extractor.widths,
        config.extractor.kernel,
        derive_seed(config.seed, seeds::EXTRACTOR),
    )?;
    let mut tc = config.train.clone();
    tc.seed = derive_seed(config.seed, seeds::TRAIN);
    let outcome = train(
        network,
        &config.conditions,
        &config.schedule,
        &tc,
        &extractor,
    )?;

    art.csv("loss_history.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["step", "diffusion", "prior", "style", "total"])?;
        for r in &outcome.history {
            w.write_record([
                r.step.to_string(),
                format_float(r.parts.diffusion),
                format_float(r.parts.prior),
                format_float(r.parts.style),
                format_float(r.total),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut bytes = Vec::new();
    outcome.network.write_to(&mut bytes)?;
    art.write("network.bin", &bytes)?;

    let oracle = AnalyticScoreModel::new(config.schedule, config.conditions.clone())?;
    let err = score_matching_error(
        &outcome.network,
        &oracle,
        2000,
        config.train.time_floor,
        derive_seed(config.seed, seeds::PROBE),
    )?;
    art.csv("train_summary.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["model_error", "zero_baseline", "ratio"])?;
        w.write_record([
            format_float(err.model),
            format_float(err.zero_baseline),
            format_float(err.ratio()),
        ])?;
        w.flush()?;
        Ok(())
    })
}

fn coordinate_header(first: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|k| format!("x{k}")));
    h
}

fn run_sample(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let model = build_model(config)?;
    let dim = config.conditions[0].dim();
    let mut all = Vec::with_capacity(config.conditions.len());
    for c in &config.conditions {
        let seed = derive_seed(config.seed, &format!("{}/{}", seeds::SAMPLE, c.label()));
        let cfg = config.sampler.with_seed(seed);
        let samples = sample_batch(
            model.as_ref(),
            &config.schedule,
            &c.condition().vector,
            &cfg,
            config.samples,
        )?;
        all.push((c, samples));
    }
    art.csv("samples.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(coordinate_header(&["condition", "index"], dim))?;
        for (c, samples) in &all {
            for (i, x) in samples.iter().enumerate() {
                let mut rec = vec![c.label().to_string(), i.to_string()];
                rec.extend(x.iter().map(|v| format_float(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let mut reports = Vec::with_capacity(all.len());
    for (c, samples) in &all {
        reports.push((c.label(), moment_check(samples, c)?));
    }
    art.csv("moments.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "condition",
            "mean_error_max",
            "covariance_error",
            "covariance_max_abs_error",
            "mean_log_likelihood",
        ])?;
        for (label, r) in &reports {
            let mean_max = r.mean_error.iter().fold(0.0f64, |m, v| m.max(*v));
            w.write_record([
                label.to_string(),
                format_float(mean_max),
                format_float(r.covariance_error),
                format_float(r.covariance_max_abs_error),
                format_float(r.mean_log_likelihood),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn run_mix(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    if config.mixes.is_empty() {
        return Err(Error::Config("mix: no [[mix]] entries defined".into()));
    }
    let model = build_model(config)?;
    let probe = Probe::new(config.conditions.clone())?;
    let labels = probe.labels();
    let dim = config.conditions[0].dim();
    let mut runs = Vec::with_capacity(config.mixes.len());
    for m in &config.mixes {
        let seed = derive_seed(config.seed, &format!("{}/{}", seeds::MIX, m.name));
        let cfg = config.sampler.with_seed(seed);
        let samples = sample_mixed_batch(
            model.as_ref(),
            &config.schedule,
            &m.spec,
            &cfg,
            config.samples,
        )?;
        let result = probe.evaluate(&samples, m.spec.descriptor())?;
        runs.push((m, samples, result));
    }
    art.csv("mix_samples.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(coordinate_header(&["mix", "index"], dim))?;
        for (m, samples, _) in &runs {
            for (i, x) in samples.iter().enumerate() {
                let mut rec = vec![m.name.clone(), i.to_string()];
                rec.extend(x.iter().map(|v| format_float(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    art.csv("mix_probe.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["mix".to_string(), "descriptor".to_string()];
        header.extend(labels.iter().cloned());
        header.extend(labels.iter().map(|l| format!("se_{l}")));
        w.write_record(&header)?;
        for (m, _, r) in &runs {
            let mut rec = vec![m.name.clone(), r.descriptor.clone()];
            rec.extend(r.probabilities.iter().map(|v| format_float(*v)));
            rec.extend(r.std_errors.iter().map(|v| format_float(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn run_curve(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let model = build_model(config)?;
    let probe = Probe::new(config.conditions.clone())?;
    let cfg = config
        .sampler
        .with_seed(derive_seed(config.seed, seeds::CURVE));
    let bounds = config.bounds;
    let c = &config.curve;
    let curve = probability_curve(
        model.as_ref(),
        &config.schedule,
        &probe,
        &c.base,
        &c.mixin,
        &c.gammas,
        c.batch,
        bounds,
        &cfg,
    )?;
    art.csv("curve.csv", |b| curve.write_csv(b))?;
    art.csv("curve_stderr.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["gamma".to_string()];
        header.extend(curve.labels.iter().cloned());
        w.write_record(&header)?;
        for row in &curve.rows {
            let mut rec = vec![format_float(row.gamma)];
            rec.extend(row.result.std_errors.iter().map(|v| format_float(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn run_confusion(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let model = build_model(config)?;
    let probe = Probe::new(config.conditions.clone())?;
    let c = &config.confusion;
    let settings = ConfusionSettings {
        buckets: c.buckets.clone(),
        batches_per_bucket: c.batches_per_bucket,
        batch_size: c.batch_size,
        bounds: config.bounds,
        calibration_seed: derive_seed(config.seed, seeds::CONFUSION_CALIBRATION),
        evaluation_seed: derive_seed(config.seed, seeds::CONFUSION_EVALUATION),
    };
    let report = intensity_confusion(
        model.as_ref(),
        &config.schedule,
        &probe,
        &c.neutral,
        &c.target,
        &settings,
        &config.sampler,
    )?;
    art.csv("confusion.csv", |b| report.matrix.write_csv(b))?;
    art.csv("centroids.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["bucket", "low", "high", "centroid", "evaluation_mean"])?;
        for ((bucket, centroid), mean) in c
            .buckets
            .iter()
            .zip(&report.centroids)
            .zip(&report.bucket_means)
        {
            w.write_record([
                bucket.name.clone(),
                format_float(bucket.low),
                format_float(bucket.high),
                format_float(*centroid),
                format_float(*mean),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 3);
        assert_eq!(exit_code(&Error::Divergence { step: 1, t: 0.5 }), 4);
        assert_eq!(exit_code(&Error::Checkpoint("x".into())), 5);
    }

    #[test]
    fn output_dir_precedence() {
        let mut cfg = ExperimentConfig::from_toml_str("output_dir = \"runs\"").unwrap();
        assert_eq!(
            output_dir(Some(Path::new("cli")), &cfg),
            PathBuf::from("cli")
        );
        assert_eq!(output_dir(None, &cfg), PathBuf::from("runs"));
        cfg.base_dir = Some(PathBuf::from("/cfg"));
        assert_eq!(output_dir(None, &cfg), PathBuf::from("/cfg/runs"));
        let plain = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(output_dir(None, &plain), PathBuf::from(DEFAULT_OUTPUT_DIR));
    }

    #[test]
    fn curve_shape_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str("[curve]\nbatch = 20\n").unwrap();
        let summary = run(Command::Curve, &cfg, dir.path()).unwrap();
        assert_eq!(summary.outputs, vec!["curve.csv", "curve_stderr.csv"]);
        let text = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "gamma,Neutral,Happy,Sad,Surprise");
        assert!(lines.iter().all(|l| l.split(',').count() == 5));
        let manifest: toml::Table =
            toml::from_str(&fs::read_to_string(dir.path().join("manifest.toml")).unwrap()).unwrap();
        assert_eq!(
            manifest["config_sha256"].as_str().unwrap(),
            cfg.content_hash()
        );
        assert_eq!(manifest["command"].as_str().unwrap(), "curve");
    }

    #[test]
    fn mix_requires_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        let err = run(Command::Mix, &cfg, dir.path()).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }
}
