//! Scenario configuration: a flat TOML file with typed keys, plus the
//! embedded presets.
//!
//! Matrices are given as row arrays, sparse killing rates as label/rate
//! pairs, and ray rates as `{ start, coeffs }` pieces with ascending-power
//! coefficients. Exactly one way of specifying the killing rate and the
//! rebirth measure must be present.

use crate::error::{Error, Result};
use crate::process::{GeneratorMatrix, RateFunction};
use crate::resurrection::{BinSpec, RebirthMeasure};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_seed() -> u64 {
    42
}
fn default_n_kills() -> usize {
    100_000
}
fn default_n_regen() -> usize {
    10_000
}
fn default_bin_width() -> f64 {
    0.05
}

/// Sparse per-label killing rates; unlisted states get rate zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaOn {
    /// State labels carrying a positive rate.
    pub labels: Vec<i64>,
    /// Rates aligned with `labels`.
    pub rates: Vec<f64>,
}

/// One polynomial piece of a ray killing rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceConfig {
    /// Left endpoint of the piece.
    pub start: f64,
    /// Coefficients in ascending powers of x.
    pub coeffs: Vec<f64>,
}

/// Raw scenario file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scenario name used to label output files.
    pub name: Option<String>,
    /// `"ctmc"` or `"ray"`.
    pub model: String,
    /// Master seed for every random stream in the run.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Killed trajectories for the empirical exit law.
    #[serde(default = "default_n_kills")]
    pub n_kills: usize,
    /// Regeneration cycles for the resurrected invariant estimate.
    #[serde(default = "default_n_regen")]
    pub n_regen_cycles: usize,
    /// Worker threads (`EXITLAW_THREADS` or all cores when absent).
    pub threads: Option<usize>,

    /// Explicit generator rows (chain model).
    pub q: Option<Vec<Vec<f64>>>,
    /// State labels for explicit generators; defaults to `0..n`.
    pub labels: Option<Vec<i64>>,
    /// Built-in chain family: `"ssrw"` (needs `truncation`).
    pub chain: Option<String>,
    /// Lattice truncation radius for built-in chains.
    pub truncation: Option<usize>,
    /// Dense per-state killing rates aligned with the states.
    pub kappa: Option<Vec<f64>>,
    /// Constant killing rate on every state.
    pub kappa_uniform: Option<f64>,
    /// Sparse killing rates by label.
    pub kappa_on: Option<KappaOn>,
    /// Dense rebirth weights aligned with the states.
    pub mu: Option<Vec<f64>>,
    /// Point rebirth at this state label.
    pub mu_point: Option<i64>,

    /// Ray start position.
    pub x0: Option<f64>,
    /// Ray killing rate pieces.
    pub kappa_pieces: Option<Vec<PieceConfig>>,
    /// Ray occupation bin width.
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    /// Ray occupation range; derived from the hazard tail when absent.
    pub x_max: Option<f64>,

    /// Output directory for report files.
    pub out_dir: Option<String>,
}

impl ScenarioConfig {
    /// Parse a TOML scenario file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    /// Parse TOML scenario text.
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// A fully resolved model ready to run.
#[derive(Debug, Clone)]
pub enum Model {
    /// Finite chain with a per-state killing table and a rebirth measure.
    Chain {
        /// The unkilled generator.
        generator: GeneratorMatrix,
        /// Per-state killing rates.
        kappa: RateFunction,
        /// Rebirth / start measure over matrix indices.
        mu: Vec<f64>,
    },
    /// Unit-velocity ray with a piecewise-polynomial killing rate.
    Ray {
        /// Killing rate on `[0, inf)`.
        kappa: RateFunction,
        /// Start / rebirth position.
        x0: f64,
        /// Occupation bins.
        bins: BinSpec,
    },
}

/// Pass/fail thresholds applied when a scenario's report is assembled.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    /// Max total variation between exact and empirical exit laws.
    pub tv_exact_empirical: f64,
    /// Max total variation between the reweighted invariant estimate and the
    /// empirical exit law.
    pub tv_reweighted_empirical: f64,
    /// Minimum p-value for the statistical tests.
    pub p_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tv_exact_empirical: 0.01,
            tv_reweighted_empirical: 0.02,
            p_min: 0.001,
        }
    }
}

/// A validated, resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Label used in report files.
    pub name: String,
    /// Resolved dynamics, killing rate, and rebirth measure.
    pub model: Model,
    /// Master seed.
    pub seed: u64,
    /// Killed trajectories to draw.
    pub n_kills: usize,
    /// Regeneration cycles to simulate.
    pub n_regen_cycles: usize,
    /// Worker override.
    pub threads: Option<usize>,
    /// Report thresholds.
    pub thresholds: Thresholds,
}

impl Scenario {
    /// Rebirth measure for the resurrected run.
    pub fn rebirth_measure(&self) -> Result<RebirthMeasure> {
        match &self.model {
            Model::Chain { mu, .. } => RebirthMeasure::discrete(mu.clone()),
            Model::Ray { x0, .. } => RebirthMeasure::point(*x0),
        }
    }
}

/// Resolve a raw config into a runnable scenario.
pub fn resolve(config: &ScenarioConfig) -> Result<Scenario> {
    if config.n_kills < 1 || config.n_regen_cycles < 1 {
        return Err(Error::Config(
            "n_kills and n_regen_cycles must be at least 1".into(),
        ));
    }
    let name = config
        .name
        .clone()
        .unwrap_or_else(|| "scenario".to_string());
    let model = match config.model.as_str() {
        "ctmc" => resolve_chain(config)?,
        "ray" => resolve_ray(config)?,
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (expected 'ctmc' or 'ray')"
            )))
        }
    };
    let mut thresholds = Thresholds::default();
    if matches!(&model, Model::Chain { .. }) && name == "finite_kill_set" {
        // wider exact-vs-empirical margin for the heavy-tailed preset
        thresholds.tv_exact_empirical = 0.015;
    }
    Ok(Scenario {
        name,
        model,
        seed: config.seed,
        n_kills: config.n_kills,
        n_regen_cycles: config.n_regen_cycles,
        threads: config.threads,
        thresholds,
    })
}

fn resolve_chain(config: &ScenarioConfig) -> Result<Model> {
    let generator = match (&config.q, &config.chain) {
        (Some(rows), None) => match &config.labels {
            Some(labels) => GeneratorMatrix::from_rows_labeled(rows, labels.clone())?,
            None => GeneratorMatrix::from_rows(rows)?,
        },
        (None, Some(chain)) => match chain.as_str() {
            "ssrw" => {
                let n = config.truncation.ok_or_else(|| {
                    Error::Config("chain = \"ssrw\" needs a truncation radius".into())
                })?;
                GeneratorMatrix::ssrw_truncated(n)
            }
            other => return Err(Error::Config(format!("unknown chain family '{other}'"))),
        },
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either q or chain, not both".into()))
        }
        (None, None) => {
            return Err(Error::Config("ctmc model needs q rows or a chain family".into()))
        }
    };
    let n = generator.n();

    let kappa = match (&config.kappa, config.kappa_uniform, &config.kappa_on) {
        (Some(values), None, None) => {
            if values.len() != n {
                return Err(Error::Config(format!(
                    "kappa has {} entries for {n} states",
                    values.len()
                )));
            }
            RateFunction::table(values.clone())?
        }
        (None, Some(rate), None) => RateFunction::uniform_table(rate, n)?,
        (None, None, Some(sparse)) => {
            if sparse.labels.len() != sparse.rates.len() {
                return Err(Error::Config(
                    "kappa_on.labels and kappa_on.rates differ in length".into(),
                ));
            }
            let mut values = vec![0.0; n];
            for (&label, &rate) in sparse.labels.iter().zip(&sparse.rates) {
                let i = generator.index_of(label).ok_or_else(|| {
                    Error::Config(format!("kappa_on label {label} is outside the truncation"))
                })?;
                values[i] = rate;
            }
            RateFunction::table(values)?
        }
        _ => {
            return Err(Error::Config(
                "give exactly one of kappa, kappa_uniform, kappa_on".into(),
            ))
        }
    };

    let mu = match (&config.mu, config.mu_point) {
        (Some(weights), None) => {
            if weights.len() != n {
                return Err(Error::Config(format!(
                    "mu has {} entries for {n} states",
                    weights.len()
                )));
            }
            weights.clone()
        }
        (None, Some(label)) => {
            let i = generator.index_of(label).ok_or_else(|| {
                Error::Config(format!("mu_point label {label} is outside the truncation"))
            })?;
            let mut weights = vec![0.0; n];
            weights[i] = 1.0;
            weights
        }
        _ => return Err(Error::Config("give exactly one of mu, mu_point".into())),
    };
    RebirthMeasure::discrete(mu.clone())?;

    Ok(Model::Chain {
        generator,
        kappa,
        mu,
    })
}

fn resolve_ray(config: &ScenarioConfig) -> Result<Model> {
    let pieces = config
        .kappa_pieces
        .as_ref()
        .ok_or_else(|| Error::Config("ray model needs kappa_pieces".into()))?;
    let breaks: Vec<f64> = pieces.iter().map(|p| p.start).collect();
    let coeffs: Vec<Vec<f64>> = pieces.iter().map(|p| p.coeffs.clone()).collect();
    let kappa = RateFunction::piecewise(breaks, coeffs)?;
    let x0 = config.x0.unwrap_or(0.0);
    if !(x0 >= 0.0) {
        return Err(Error::Config(format!("ray start {x0} must be nonnegative")));
    }
    let bins = match config.x_max {
        Some(x_max) => BinSpec::new(config.bin_width, x_max)?,
        None => BinSpec::auto(&kappa, x0, config.bin_width)?,
    };
    Ok(Model::Ray { kappa, x0, bins })
}

/// Names of the embedded presets, in presentation order.
pub const PRESET_NAMES: [&str; 8] = [
    "two_state",
    "ssrw_uniform",
    "finite_kill_set",
    "qsd_two_state",
    "qsd_five_state",
    "mixture_three_state",
    "ray_const",
    "ray_linear",
];

/// Embedded preset configurations.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let text = match name {
        "two_state" => {
            r#"
            name = "two_state"
            model = "ctmc"
            q = [[-1.0, 1.0], [1.0, -1.0]]
            kappa = [1.0, 1.0]
            mu_point = 0
            n_kills = 100000
            n_regen_cycles = 10000
            "#
        }
        "ssrw_uniform" => {
            r#"
            name = "ssrw_uniform"
            model = "ctmc"
            chain = "ssrw"
            truncation = 200
            kappa_uniform = 1.0
            mu_point = 0
            n_kills = 100000
            n_regen_cycles = 10000
            "#
        }
        "finite_kill_set" => {
            r#"
            name = "finite_kill_set"
            model = "ctmc"
            chain = "ssrw"
            truncation = 200
            kappa_on = { labels = [1, 2, 3, 4, 5], rates = [1.0, 1.0, 1.0, 1.0, 1.0] }
            mu_point = 0
            n_kills = 100000
            n_regen_cycles = 10000
            "#
        }
        "qsd_two_state" => {
            r#"
            name = "qsd_two_state"
            model = "ctmc"
            q = [[-1.0, 1.0], [1.0, -1.0]]
            kappa = [2.0, 0.0]
            mu_point = 0
            n_kills = 10000
            n_regen_cycles = 10000
            "#
        }
        "qsd_five_state" => {
            r#"
            name = "qsd_five_state"
            model = "ctmc"
            q = [
                [-1.7, 0.9, 0.3, 0.5, 0.0],
                [0.4, -1.5, 0.7, 0.0, 0.4],
                [0.2, 0.6, -2.0, 0.9, 0.3],
                [0.8, 0.0, 0.5, -1.9, 0.6],
                [0.3, 0.7, 0.0, 1.0, -2.0],
            ]
            kappa = [0.5, 1.2, 0.3, 2.0, 0.8]
            mu_point = 0
            n_kills = 10000
            n_regen_cycles = 10000
            "#
        }
        "mixture_three_state" => {
            r#"
            name = "mixture_three_state"
            model = "ctmc"
            q = [[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]]
            kappa = [1.0, 2.0, 3.0]
            mu_point = 0
            n_kills = 10000
            n_regen_cycles = 10000
            "#
        }
        "ray_const" => {
            r#"
            name = "ray_const"
            model = "ray"
            x0 = 0.0
            kappa_pieces = [{ start = 0.0, coeffs = [1.0] }]
            n_kills = 100000
            n_regen_cycles = 10000
            "#
        }
        "ray_linear" => {
            r#"
            name = "ray_linear"
            model = "ray"
            x0 = 0.0
            kappa_pieces = [{ start = 0.0, coeffs = [0.0, 1.0] }]
            n_kills = 100000
            n_regen_cycles = 10000
            "#
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (have: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    ScenarioConfig::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in PRESET_NAMES {
            let config = preset(name).unwrap();
            let scenario = resolve(&config).unwrap();
            assert_eq!(scenario.name, name);
        }
    }

    #[test]
    fn finite_kill_preset_widens_threshold() {
        let s = resolve(&preset("finite_kill_set").unwrap()).unwrap();
        assert_eq!(s.thresholds.tv_exact_empirical, 0.015);
        let s2 = resolve(&preset("two_state").unwrap()).unwrap();
        assert_eq!(s2.thresholds.tv_exact_empirical, 0.01);
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            name = "custom"
            model = "ctmc"
            seed = 7
            q = [[-2.0, 2.0], [1.0, -1.0]]
            kappa = [0.5, 0.5]
            mu = [0.25, 0.75]
            n_kills = 1000
            n_regen_cycles = 500
        "#;
        let config = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(config.seed, 7);
        let scenario = resolve(&config).unwrap();
        match &scenario.model {
            Model::Chain { generator, mu, .. } => {
                assert_eq!(generator.n(), 2);
                assert_eq!(mu, &[0.25, 0.75]);
            }
            Model::Ray { .. } => panic!("expected chain"),
        }
    }

    #[test]
    fn rejects_conflicting_kappa_keys() {
        let text = r#"
            model = "ctmc"
            q = [[-1.0, 1.0], [1.0, -1.0]]
            kappa = [1.0, 1.0]
            kappa_uniform = 1.0
            mu_point = 0
        "#;
        let config = ScenarioConfig::from_toml(text).unwrap();
        assert!(resolve(&config).is_err());
    }

    #[test]
    fn rejects_labels_outside_truncation() {
        let text = r#"
            model = "ctmc"
            chain = "ssrw"
            truncation = 3
            kappa_on = { labels = [10], rates = [1.0] }
            mu_point = 0
        "#;
        assert!(resolve(&ScenarioConfig::from_toml(text).unwrap()).is_err());
        let text2 = r#"
            model = "ctmc"
            chain = "ssrw"
            truncation = 3
            kappa_uniform = 1.0
            mu_point = 9
        "#;
        assert!(resolve(&ScenarioConfig::from_toml(text2).unwrap()).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_counts() {
        assert!(ScenarioConfig::from_toml("model = \"ctmc\"\nbogus = 1").is_err());
        let text = r#"
            model = "ctmc"
            q = [[-1.0, 1.0], [1.0, -1.0]]
            kappa_uniform = 1.0
            mu_point = 0
            n_kills = 0
        "#;
        assert!(resolve(&ScenarioConfig::from_toml(text).unwrap()).is_err());
    }

    #[test]
    fn ray_config_auto_range() {
        let config = preset("ray_linear").unwrap();
        let scenario = resolve(&config).unwrap();
        match &scenario.model {
            Model::Ray { bins, .. } => {
                let edges = bins.edges();
                // hazard x^2/2 = 16.2 crosses near 5.7
                let last_finite = edges[edges.len() - 2];
                assert!(last_finite > 5.5 && last_finite < 6.5, "x_max {last_finite}");
            }
            Model::Chain { .. } => panic!("expected ray"),
        }
    }
}
