//! Experiment configuration: a TOML tree parsed into raw sections, then
//! validated into an [`ExperimentConfig`]. Every nested invariant is checked
//! at load time and reported with the offending field path.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::probe::IntensityBucket;
use crate::sampler::{MixComponent, MixSpec, PhaseBounds, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::score_models::{
    default_layout, embed_average, one_hot, ConditionEmbedding, ConditionedDistribution,
    GaussianComponent,
};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub schedule: RawSchedule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<RawCondition>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default)]
    pub sampler: RawSampler,
    #[serde(default)]
    pub phases: RawPhases,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mix: Vec<RawMix>,
    #[serde(default)]
    pub curve: RawCurve,
    #[serde(default)]
    pub confusion: RawConfusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSchedule {
    pub beta0: f64,
    pub beta1: f64,
}

impl Default for RawSchedule {
    fn default() -> Self {
        let s = NoiseSchedule::default();
        Self {
            beta0: s.beta0(),
            beta1: s.beta1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCondition {
    pub label: String,
    /// Explicit embedding; defaults to one-hot by position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    /// Reference embeddings averaged into the condition embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<Vec<f64>>>,
    pub components: Vec<GaussianComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Analytic,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Analytic,
            checkpoint: None,
            hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    pub widths: Vec<usize>,
    pub kernel: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 8],
            kernel: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSampler {
    pub steps: usize,
    pub time_floor: f64,
    pub zero_final_noise: bool,
    /// Samples per condition (`sample`) or per mix (`mix`).
    pub samples: usize,
}

impl Default for RawSampler {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            steps: s.steps,
            time_floor: s.time_floor,
            zero_final_noise: s.zero_final_noise,
            samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawPhases {
    pub k_max: f64,
    pub k_min: f64,
    /// Keep the combined score for `t ≤ k_min` instead of the mixed-in
    /// condition alone.
    pub combined_in_mixin: bool,
    /// Allow mixed-in weight above 0.8.
    pub relax_cap: bool,
}

impl Default for RawPhases {
    fn default() -> Self {
        let b = PhaseBounds::default();
        Self {
            k_max: b.k_max,
            k_min: b.k_min,
            combined_in_mixin: false,
            relax_cap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMixComponent {
    pub label: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMix {
    pub name: String,
    /// Label of the base condition; defaults to the first component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    pub components: Vec<RawMixComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawCurve {
    pub base: String,
    pub mixin: String,
    pub gammas: Vec<f64>,
    pub batch: usize,
}

impl Default for RawCurve {
    fn default() -> Self {
        Self {
            base: "Happy".into(),
            mixin: "Surprise".into(),
            gammas: (1..=8).map(|i| i as f64 / 10.0).collect(),
            batch: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfusion {
    pub neutral: String,
    pub target: String,
    pub batches_per_bucket: usize,
    pub batch_size: usize,
    pub buckets: Vec<IntensityBucket>,
}

impl Default for RawConfusion {
    fn default() -> Self {
        Self {
            neutral: "Neutral".into(),
            target: "Surprise".into(),
            batches_per_bucket: 20,
            batch_size: 500,
            buckets: IntensityBucket::standard(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub gamma: Option<f64>,
    pub k_max: Option<f64>,
    pub k_min: Option<f64>,
}

impl RawConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(steps) = o.steps {
            self.sampler.steps = steps;
        }
        if let Some(k) = o.k_max {
            self.phases.k_max = k;
        }
        if let Some(k) = o.k_min {
            self.phases.k_min = k;
        }
        if let Some(g) = o.gamma {
            self.curve.gammas = vec![g];
            for mix in &mut self.mix {
                if mix.components.len() == 2 {
                    let base = mix
                        .base
                        .as_ref()
                        .and_then(|b| mix.components.iter().position(|c| &c.label == b))
                        .unwrap_or(0);
                    mix.components[base].weight = 1.0 - g;
                    mix.components[1 - base].weight = g;
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMix {
    pub name: String,
    pub spec: MixSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub base: ConditionEmbedding,
    pub mixin: ConditionEmbedding,
    pub gammas: Vec<f64>,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionConfig {
    pub neutral: ConditionEmbedding,
    pub target: ConditionEmbedding,
    pub batches_per_bucket: usize,
    pub batch_size: usize,
    pub buckets: Vec<IntensityBucket>,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub schedule: NoiseSchedule,
    pub conditions: Vec<ConditionedDistribution>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub extractor: ExtractorConfig,
    pub sampler: SamplerConfig,
    pub samples: usize,
    pub bounds: PhaseBounds,
    pub combined_in_mixin: bool,
    pub relax_cap: bool,
    pub mixes: Vec<NamedMix>,
    pub curve: CurveConfig,
    pub confusion: ConfusionConfig,
    /// Directory relative paths in the file are resolved against.
    pub base_dir: Option<PathBuf>,
    raw: RawConfig,
}

fn semantic(field: impl AsRef<str>, err: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {err}", field.as_ref()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        Self::from_raw(raw)
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    /// Canonical TOML of the effective configuration.
    pub fn effective_toml(&self) -> String {
        self.raw.to_toml()
    }

    /// Hex SHA-256 of [`Self::effective_toml`].
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.effective_toml().as_bytes()))
    }

    pub fn condition(&self, label: &str) -> Option<&ConditionedDistribution> {
        self.conditions.iter().find(|c| c.label() == label)
    }

    fn embedding(&self, field: &str, label: &str) -> Result<ConditionEmbedding> {
        lookup(&self.conditions, field, label)
    }

    pub fn with_overrides(&self, o: &Overrides) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.apply(o);
        let mut cfg = Self::from_raw(raw)?;
        cfg.base_dir = self.base_dir.clone();
        Ok(cfg)
    }

    /// Resolve a path from the file against [`Self::base_dir`].
    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let schedule = NoiseSchedule::new(raw.schedule.beta0, raw.schedule.beta1)
            .map_err(|e| semantic("schedule", e))?;

        let conditions = if raw.conditions.is_empty() {
            default_layout()
        } else {
            build_conditions(&raw.conditions)?
        };

        if raw.model.hidden.contains(&0) {
            return Err(semantic("model.hidden", "layer widths must be positive"));
        }
        if raw.model.kind == ModelKind::Network && raw.model.checkpoint.is_none() {
            return Err(semantic(
                "model.checkpoint",
                "required when model.kind = \"network\"",
            ));
        }
        raw.train.validate().map_err(|e| semantic("train", e))?;
        if raw.extractor.widths.is_empty() || raw.extractor.widths.contains(&0) {
            return Err(semantic(
                "extractor.widths",
                "need at least one positive width",
            ));
        }
        if raw.extractor.kernel.is_multiple_of(2) {
            return Err(semantic("extractor.kernel", "kernel width must be odd"));
        }

        let sampler = SamplerConfig {
            steps: raw.sampler.steps,
            seed: 0,
            time_floor: raw.sampler.time_floor,
            zero_final_noise: raw.sampler.zero_final_noise,
        };
        sampler.validate().map_err(|e| semantic("sampler", e))?;
        if raw.sampler.samples == 0 {
            return Err(semantic("sampler.samples", "must be >= 1"));
        }

        let bounds = PhaseBounds {
            k_max: raw.phases.k_max,
            k_min: raw.phases.k_min,
        };
        if !(0.0 <= bounds.k_min && bounds.k_min <= bounds.k_max && bounds.k_max <= 1.0) {
            return Err(semantic(
                "phases",
                format!(
                    "MixSpec: need 0 <= k_min ({}) <= k_max ({}) <= 1",
                    bounds.k_min, bounds.k_max
                ),
            ));
        }

        let mut mixes = Vec::with_capacity(raw.mix.len());
        let mut names = HashSet::new();
        for (i, m) in raw.mix.iter().enumerate() {
            let field = format!("mix[{i}] ('{}')", m.name);
            if !names.insert(m.name.as_str()) {
                return Err(semantic(&field, "duplicate mix name"));
            }
            let components = m
                .components
                .iter()
                .map(|c| {
                    Ok(MixComponent {
                        embedding: lookup(&conditions, &format!("{field}.components"), &c.label)?,
                        weight: c.weight,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let base = match &m.base {
                Some(b) => m
                    .components
                    .iter()
                    .position(|c| &c.label == b)
                    .ok_or_else(|| {
                        semantic(format!("{field}.base"), format!("'{b}' is not a component"))
                    })?,
                None => 0,
            };
            let spec = MixSpec::new(
                components,
                base,
                m.k_max.unwrap_or(bounds.k_max),
                m.k_min.unwrap_or(bounds.k_min),
                !raw.phases.relax_cap,
            )
            .map_err(|e| semantic(&field, e))?
            .with_combined_in_mixin(raw.phases.combined_in_mixin);
            mixes.push(NamedMix {
                name: m.name.clone(),
                spec,
            });
        }

        if raw.curve.gammas.is_empty() || raw.curve.batch == 0 {
            return Err(semantic(
                "curve",
                "need a nonempty gamma grid and batch >= 1",
            ));
        }
        for g in &raw.curve.gammas {
            if !(0.0..=crate::sampler::MAX_MIXIN_WEIGHT).contains(g) {
                return Err(semantic(
                    "curve.gammas",
                    format!("MixSpec: weight {g} outside [0, 0.8]"),
                ));
            }
        }
        let curve = CurveConfig {
            base: lookup(&conditions, "curve.base", &raw.curve.base)?,
            mixin: lookup(&conditions, "curve.mixin", &raw.curve.mixin)?,
            gammas: raw.curve.gammas.clone(),
            batch: raw.curve.batch,
        };

        let c = &raw.confusion;
        if c.buckets.is_empty() || c.batches_per_bucket == 0 || c.batch_size == 0 {
            return Err(semantic(
                "confusion",
                "need buckets, batches_per_bucket >= 1 and batch_size >= 1",
            ));
        }
        for (i, b) in c.buckets.iter().enumerate() {
            if !(0.0 <= b.low && b.low <= b.high && b.high <= crate::sampler::MAX_MIXIN_WEIGHT) {
                return Err(semantic(
                    format!("confusion.buckets[{i}] ('{}')", b.name),
                    format!("range [{}, {}] must lie within [0, 0.8]", b.low, b.high),
                ));
            }
        }
        let confusion = ConfusionConfig {
            neutral: lookup(&conditions, "confusion.neutral", &c.neutral)?,
            target: lookup(&conditions, "confusion.target", &c.target)?,
            batches_per_bucket: c.batches_per_bucket,
            batch_size: c.batch_size,
            buckets: c.buckets.clone(),
        };

        Ok(Self {
            seed: raw.seed,
            output_dir: raw.output_dir.clone(),
            schedule,
            conditions,
            model: raw.model.clone(),
            train: raw.train.clone(),
            extractor: raw.extractor.clone(),
            sampler,
            samples: raw.sampler.samples,
            bounds,
            combined_in_mixin: raw.phases.combined_in_mixin,
            relax_cap: raw.phases.relax_cap,
            mixes,
            curve,
            confusion,
            base_dir: None,
            raw,
        })
    }

    /// Resolve an embedding by label, naming `field` in the error.
    pub fn resolve(&self, field: &str, label: &str) -> Result<ConditionEmbedding> {
        self.embedding(field, label)
    }
}

fn lookup(
    conditions: &[ConditionedDistribution],
    field: &str,
    label: &str,
) -> Result<ConditionEmbedding> {
    conditions
        .iter()
        .find(|c| c.label() == label)
        .map(|c| c.condition().clone())
        .ok_or_else(|| semantic(field, format!("unknown condition '{label}'")))
}

fn build_conditions(raw: &[RawCondition]) -> Result<Vec<ConditionedDistribution>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    let mut embed_dim = None;
    let mut data_dim = None;
    for (i, c) in raw.iter().enumerate() {
        let field = format!("conditions[{i}] ('{}')", c.label);
        if !seen.insert(c.label.as_str()) {
            return Err(semantic(&field, "label defined more than once"));
        }
        let vector = match (&c.embedding, &c.references) {
            (Some(_), Some(_)) => {
                return Err(semantic(
                    &field,
                    "give either embedding or references, not both",
                ))
            }
            (Some(v), None) => v.clone(),
            (None, Some(refs)) => {
                embed_average(refs).map_err(|e| semantic(format!("{field}.references"), e))?
            }
            (None, None) => one_hot(i, raw.len()),
        };
        let embedding =
            ConditionEmbedding::new(c.label.clone(), vector).map_err(|e| semantic(&field, e))?;
        if *embed_dim.get_or_insert(embedding.dim()) != embedding.dim() {
            return Err(semantic(
                &field,
                "embedding dimension differs from earlier conditions",
            ));
        }
        let dist = ConditionedDistribution::new(embedding, c.components.clone())
            .map_err(|e| semantic(format!("{field}.components"), e))?;
        if *data_dim.get_or_insert(dist.dim()) != dist.dim() {
            return Err(semantic(
                &field,
                "data dimension differs from earlier conditions",
            ));
        }
        out.push(dist);
    }
    Ok(out)
}

/// Read and validate a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAYOUT: &str = r#"
[[conditions]]
label = "Neutral"
components = [{ weight = 1.0, mean = [0.0, 0.0], variance = 0.5 }]

[[conditions]]
label = "Happy"
components = [{ weight = 1.0, mean = [2.0, 0.0], variance = 0.25 }]

[[conditions]]
label = "Sad"
components = [{ weight = 1.0, mean = [-2.0, 0.0], variance = 0.25 }]

[[conditions]]
label = "Surprise"
components = [{ weight = 1.0, mean = [0.0, 2.0], variance = 0.25 }]
"#;

    #[test]
    fn minimal_layout_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(LAYOUT).unwrap();
        assert_eq!(cfg.schedule, NoiseSchedule::default());
        assert_eq!(cfg.sampler.steps, 10);
        assert_eq!(
            cfg.bounds,
            PhaseBounds {
                k_max: 0.6,
                k_min: 0.2
            }
        );
        assert_eq!(cfg.train.style_weight, 1e-4);
        assert_eq!(cfg.conditions, default_layout());
        assert_eq!(cfg.curve.gammas.len(), 8);
    }

    #[test]
    fn empty_config_uses_default_layout() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.conditions.len(), 4);
    }

    #[test]
    fn weights_not_summing_to_one_name_mixspec() {
        let text = format!(
            "{LAYOUT}\n[[mix]]\nname = \"excitement\"\ncomponents = [{{ label = \"Happy\", weight = 0.6 }}, {{ label = \"Surprise\", weight = 0.3 }}]\n"
        );
        let err = ExperimentConfig::from_toml_str(&text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("MixSpec") && err.contains("mix[0]"), "{err}");
    }

    #[test]
    fn inverted_phase_bounds_rejected() {
        let err = ExperimentConfig::from_toml_str("[phases]\nk_max = 0.2\nk_min = 0.6\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("phases"), "{err}");
    }

    #[test]
    fn inverted_schedule_rejected() {
        let err = ExperimentConfig::from_toml_str("[schedule]\nbeta0 = 5.0\nbeta1 = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("schedule") && err.contains("beta1"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ExperimentConfig::from_toml_str("seed = 1\n[schedule\nbeta0 = 1\n")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("parse error") && err.contains("line 2"),
            "{err}"
        );
        let err = ExperimentConfig::from_toml_str("[sampler]\nstepz = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("stepz"), "{err}");
    }

    #[test]
    fn duplicate_and_unknown_labels_rejected() {
        let dup = format!("{LAYOUT}\n[[conditions]]\nlabel = \"Sad\"\ncomponents = [{{ weight = 1.0, mean = [0.0, 0.0], variance = 1.0 }}]\n");
        assert!(ExperimentConfig::from_toml_str(&dup)
            .unwrap_err()
            .to_string()
            .contains("more than once"));
        let unknown = format!("{LAYOUT}\n[curve]\nbase = \"Calm\"\n");
        assert!(ExperimentConfig::from_toml_str(&unknown)
            .unwrap_err()
            .to_string()
            .contains("Calm"));
    }

    #[test]
    fn nested_invariants_checked() {
        for bad in [
            "[train]\nbatch_size = 0\n",
            "[train]\nlearning_rate = -1.0\n",
            "[sampler]\nsteps = 0\n",
            "[curve]\ngammas = [0.9]\n",
            "[confusion]\nbatches_per_bucket = 0\n",
            "[confusion]\nbuckets = [{ name = \"x\", low = 0.5, high = 0.9 }]\n",
            "[model]\nkind = \"network\"\n",
            "[model]\nhidden = [0]\n",
            "[extractor]\nkernel = 2\n",
            "[[conditions]]\nlabel = \"A\"\ncomponents = [{ weight = 1.0, mean = [0.0], variance = -1.0 }]\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn references_are_averaged() {
        let text = r#"
[[conditions]]
label = "A"
references = [[1.0, 0.0], [0.0, 1.0]]
components = [{ weight = 1.0, mean = [0.0], variance = 1.0 }]
[curve]
base = "A"
mixin = "A"
[confusion]
neutral = "A"
target = "A"
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.conditions[0].condition().vector, vec![0.5, 0.5]);
    }

    #[test]
    fn overrides_and_hash() {
        let text = format!(
            "{LAYOUT}\n[[mix]]\nname = \"excitement\"\nbase = \"Happy\"\ncomponents = [{{ label = \"Happy\", weight = 0.7 }}, {{ label = \"Surprise\", weight = 0.3 }}]\n"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let o = Overrides {
            seed: Some(9),
            steps: Some(20),
            gamma: Some(0.6),
            k_max: Some(0.7),
            k_min: Some(0.1),
        };
        let over = cfg.with_overrides(&o).unwrap();
        assert_eq!(over.seed, 9);
        assert_eq!(over.sampler.steps, 20);
        assert_eq!(over.curve.gammas, vec![0.6]);
        assert_eq!(over.mixes[0].spec.components()[1].weight, 0.6);
        assert_eq!(over.mixes[0].spec.k_max(), 0.7);
        assert_ne!(over.content_hash(), cfg.content_hash());
        // effective config round-trips to the same hash
        let again = ExperimentConfig::from_toml_str(&over.effective_toml()).unwrap();
        assert_eq!(again.content_hash(), over.content_hash());
        assert_eq!(again, over);
    }
}
