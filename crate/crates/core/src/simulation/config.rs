use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initialization::DEFAULT_BINS;
use crate::selection::{Strategy, Universe};
use crate::uncertainty::{Method, DEFAULT_TOP_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Random,
    #[serde(rename = "diverse")]
    RadiomicsDiverse,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::RadiomicsDiverse => "diverse",
        }
    }
}

/// Noise model of the reference oracle predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// Half-width of the box kernel that softens the truth mask.
    pub blur_radius: usize,
    /// Noise amplitude for a fully familiar item.
    pub sigma_min: f64,
    /// Extra noise amplitude for a fully unfamiliar item.
    pub sigma_max: f64,
    /// Probability above which a voxel is predicted foreground.
    pub threshold: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            blur_radius: 1,
            sigma_min: 0.05,
            sigma_max: 0.5,
            threshold: 0.5,
        }
    }
}

/// Parameters of the synthetic phantom pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    /// Lesion semi-axis range, in voxels.
    pub lesion_radius_min: f64,
    pub lesion_radius_max: f64,
    /// Additive lesion enhancement range.
    pub contrast_min: f64,
    pub contrast_max: f64,
    /// Nominal tissue intensity inside the brain.
    pub brain_intensity: f64,
    /// Per-item multiplicative intensity spread (uniform in `1 ± jitter`).
    pub intensity_jitter: f64,
    /// Standard deviation of voxel noise in tissue.
    pub tissue_noise: f64,
    /// Number of lesion subtypes; 0 draws every item independently.
    pub subtypes: usize,
    /// Subtype `r` (0-based) has prevalence proportional to `(r + 1)^-skew`.
    pub subtype_skew: f64,
    /// Within-subtype spread as a share of each parameter's range.
    pub subtype_spread: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            lesion_radius_min: 2.5,
            lesion_radius_max: 6.0,
            contrast_min: 20.0,
            contrast_max: 80.0,
            brain_intensity: 100.0,
            intensity_jitter: 0.2,
            tissue_noise: 5.0,
            subtypes: 24,
            subtype_skew: 1.0,
            subtype_spread: 0.15,
        }
    }
}

/// Everything a simulated active-learning run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Optional name used in comparison reports.
    pub label: Option<String>,
    pub pool_size: usize,
    /// Phantom grid extent.
    pub grid: [usize; 3],
    pub test_fraction: f64,
    /// Share of the annotated items held out for validation each round.
    pub validation_fraction: f64,
    pub initial_n: usize,
    pub batch_m: usize,
    pub shortlist_k: usize,
    /// Ensemble size for bootstrap and dropout scoring.
    pub n_predictions: usize,
    pub uncertainty: Method,
    pub top_fraction: f64,
    /// Restrict the bootstrap score to its top voxels; off by default.
    pub bootstrap_top_fraction: Option<f64>,
    pub strategy: Strategy,
    pub init_mode: InitMode,
    pub iterations: usize,
    pub seed: u64,
    /// Mean test Dice a comparison counts as "reached".
    pub dice_target: f64,
    pub universe: Universe,
    /// Score only a seeded random subset of this many unannotated items.
    pub score_subsample: Option<usize>,
    /// Call the predictor twice per request and reject differing outputs.
    pub strict: bool,
    pub entropy_bins: usize,
    pub oracle: OracleParams,
    pub phantom: PhantomParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            label: None,
            pool_size: 200,
            grid: [32, 32, 32],
            test_fraction: 0.20,
            validation_fraction: 0.20,
            initial_n: 40,
            batch_m: 50,
            shortlist_k: 100,
            n_predictions: 5,
            uncertainty: Method::DropoutTopFraction,
            top_fraction: DEFAULT_TOP_FRACTION,
            bootstrap_top_fraction: None,
            strategy: Strategy::TopK,
            init_mode: InitMode::Random,
            iterations: 2,
            seed: 0,
            dice_target: 0.89,
            universe: Universe::Shrinking,
            score_subsample: None,
            strict: false,
            entropy_bins: DEFAULT_BINS,
            oracle: OracleParams::default(),
            phantom: PhantomParams::default(),
        }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimulationConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn test_count(&self) -> usize {
        (self.pool_size as f64 * self.test_fraction).round() as usize
    }

    pub fn training_pool(&self) -> usize {
        self.pool_size.saturating_sub(self.test_count())
    }

    /// Display name used in reports.
    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            format!(
                "{}-{}-{}",
                self.strategy.name(),
                self.uncertainty.name(),
                self.init_mode.name()
            )
        })
    }

    /// Check every field, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        need(self.pool_size >= 2, format!("pool_size: must be at least 2, got {}", self.pool_size));
        need(
            self.grid.iter().all(|&d| d > 0),
            format!("grid: dimensions must be positive, got {:?}", self.grid),
        );
        for (name, v) in [
            ("test_fraction", self.test_fraction),
            ("validation_fraction", self.validation_fraction),
        ] {
            need(v > 0.0 && v < 1.0, format!("{name}: must lie in (0, 1), got {v}"));
        }
        need(self.test_count() >= 1, "test_fraction: leaves an empty test set".into());
        need(self.initial_n >= 1, "initial_n: must be positive".into());
        need(self.batch_m >= 1, "batch_m: must be positive".into());
        need(
            self.batch_m <= self.shortlist_k,
            format!("shortlist_k: must be at least batch_m = {}, got {}", self.batch_m, self.shortlist_k),
        );
        let needed = self.initial_n + self.iterations * self.batch_m;
        need(
            needed <= self.training_pool(),
            format!(
                "iterations: initial_n + iterations * batch_m = {needed} exceeds the training pool of {}",
                self.training_pool()
            ),
        );
        match self.uncertainty {
            Method::Margins => need(
                self.n_predictions == 1,
                format!("n_predictions: margins uses exactly one prediction, got {}", self.n_predictions),
            ),
            _ => need(
                self.n_predictions >= 2,
                format!("n_predictions: ensembles need at least 2 predictions, got {}", self.n_predictions),
            ),
        }
        need(
            self.top_fraction > 0.0 && self.top_fraction <= 1.0,
            format!("top_fraction: must lie in (0, 1], got {}", self.top_fraction),
        );
        if let Some(f) = self.bootstrap_top_fraction {
            need(f > 0.0 && f <= 1.0, format!("bootstrap_top_fraction: must lie in (0, 1], got {f}"));
        }
        if let Some(s) = self.score_subsample {
            need(
                s >= self.shortlist_k.min(self.batch_m).max(1),
                format!("score_subsample: must be at least batch_m = {}, got {s}", self.batch_m),
            );
        }
        need(
            self.dice_target > 0.0 && self.dice_target <= 1.0,
            format!("dice_target: must lie in (0, 1], got {}", self.dice_target),
        );
        need(self.entropy_bins >= 1, "entropy_bins: must be positive".into());
        let o = &self.oracle;
        need(o.sigma_min >= 0.0 && o.sigma_min.is_finite(), format!("oracle.sigma_min: must be >= 0, got {}", o.sigma_min));
        need(o.sigma_max >= 0.0 && o.sigma_max.is_finite(), format!("oracle.sigma_max: must be >= 0, got {}", o.sigma_max));
        need(
            o.threshold > 0.0 && o.threshold < 1.0,
            format!("oracle.threshold: must lie in (0, 1), got {}", o.threshold),
        );
        let p = &self.phantom;
        need(
            p.lesion_radius_min >= 1.0,
            format!("phantom.lesion_radius_min: must be at least 1 voxel, got {}", p.lesion_radius_min),
        );
        need(
            p.lesion_radius_max >= p.lesion_radius_min,
            "phantom.lesion_radius_max: must be >= lesion_radius_min".into(),
        );
        let smallest = *self.grid.iter().min().unwrap_or(&0) as f64;
        need(
            2.0 * p.lesion_radius_max + 2.0 <= smallest,
            format!(
                "phantom.lesion_radius_max: lesion of radius {} does not fit a {:?} grid",
                p.lesion_radius_max, self.grid
            ),
        );
        need(p.contrast_max >= p.contrast_min, "phantom.contrast_max: must be >= contrast_min".into());
        need(p.brain_intensity > 0.0, "phantom.brain_intensity: must be positive".into());
        need(
            (0.0..1.0).contains(&p.intensity_jitter),
            "phantom.intensity_jitter: must lie in [0, 1)".into(),
        );
        need(p.tissue_noise >= 0.0, "phantom.tissue_noise: must be >= 0".into());
        need(
            p.subtype_skew >= 0.0 && p.subtype_skew.is_finite(),
            format!("phantom.subtype_skew: must be >= 0, got {}", p.subtype_skew),
        );
        need(
            (0.0..=1.0).contains(&p.subtype_spread),
            format!("phantom.subtype_spread: must lie in [0, 1], got {}", p.subtype_spread),
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}
