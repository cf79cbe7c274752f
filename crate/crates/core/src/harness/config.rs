//! Experiment configuration: JSON in, with a default for every field so a
//! preset runs out of the box, and strict enough parsing that a typo fails
//! loudly instead of silently running the default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::{CeilingRule, TruncationPolicy};
use crate::reproduction::{BroodLaw, ReproLaw};
use crate::stable_walk::StepLaw;

/// Which reproduction law an experiment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawConfig {
    pub family: LawFamily,
    pub alpha: f64,
    pub pareto_floor: f64,
    pub left_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawFamily {
    Brood,
    Dyadic,
}

impl Default for LawConfig {
    fn default() -> Self {
        LawConfig {
            family: LawFamily::Brood,
            alpha: 1.5,
            pareto_floor: 1.0,
            left_depth: 2.0,
        }
    }
}

impl LawConfig {
    pub fn build(&self) -> Result<ReproLaw> {
        match self.family {
            LawFamily::Brood => {
                let step = StepLaw::new(self.alpha, self.pareto_floor, self.left_depth)?;
                Ok(ReproLaw::Brood(BroodLaw::new(step)?))
            }
            LawFamily::Dyadic => Ok(ReproLaw::dyadic()),
        }
    }

    /// Tail index used for targets; the dyadic family has none, so its
    /// experiments are report-only wherever the index matters.
    pub fn alpha_or_nominal(&self) -> f64 {
        self.alpha
    }
}

/// Generation schedule for scaling experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// Powers of two `2^j` for `j` in `[j_min, j_max]`.
    Dyadic { j_min: u32, j_max: u32 },
    /// Explicit strictly increasing generation counts.
    Explicit { points: Vec<u32> },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Dyadic {
            j_min: 5,
            j_max: 11,
        }
    }
}

impl Schedule {
    pub fn points(&self) -> Result<Vec<u32>> {
        let pts = match self {
            Schedule::Dyadic { j_min, j_max } => {
                if j_min > j_max {
                    return Err(Error::Config(format!(
                        "dyadic schedule needs j_min <= j_max, got {j_min} > {j_max}"
                    )));
                }
                if *j_max >= 31 {
                    return Err(Error::Config(format!("dyadic schedule exponent {j_max} too large")));
                }
                (*j_min..=*j_max).map(|j| 1u32 << j).collect()
            }
            Schedule::Explicit { points } => points.clone(),
        };
        if pts.is_empty() {
            return Err(Error::Config("schedule has no points".into()));
        }
        for w in pts.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "schedule must be strictly increasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(pts)
    }

    pub fn max_point(&self) -> Result<u32> {
        Ok(*self.points()?.last().expect("nonempty"))
    }
}

/// Population-control configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    pub ceiling: CeilingConfig,
    pub max_population: usize,
    pub brood_fanout: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CeilingConfig {
    None,
    Constant { value: f64 },
    Log { scale: f64 },
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            ceiling: CeilingConfig::Log { scale: 20.0 },
            max_population: 2_048,
            brood_fanout: None,
        }
    }
}

impl TruncationConfig {
    pub fn build(&self) -> Result<TruncationPolicy> {
        let ceiling = match self.ceiling {
            CeilingConfig::None => CeilingRule::None,
            CeilingConfig::Constant { value } => CeilingRule::Constant(value),
            CeilingConfig::Log { scale } => CeilingRule::LogGrowth { scale },
        };
        let mut policy = TruncationPolicy::new(ceiling, self.max_population);
        policy.brood_fanout = self.brood_fanout;
        policy.validate()?;
        Ok(policy)
    }
}

/// Barrier experiment knobs. The two constants have no canonical values;
/// the scaling checks are insensitive to them, which is exactly what the
/// verdicts test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierConfig {
    pub terminal_slack: f64,
    pub brother_scale: f64,
    /// Cost guard: forward mode refuses beyond this n.
    pub forward_limit: u32,
    pub forward_replicas: u64,
    pub forward_max_population: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            terminal_slack: 5.0,
            brother_scale: 10.0,
            forward_limit: 256,
            forward_replicas: 400,
            forward_max_population: 2_000,
        }
    }
}

/// Verdict thresholds, visible and adjustable: the underlying statements
/// are inequalities with unknown constants, so acceptance is exponent-based
/// and the tolerances must be explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    /// Walk barrier scaling slopes (both kinds).
    pub ballot_slope: f64,
    /// Barrier-event and minimum-tail slopes in lambda.
    pub lambda_slope: f64,
    /// Median minimal-position slope against log n.
    pub median_min_slope: f64,
    /// Median martingale decay slope against log n (deliberately loose: the
    /// centering is heuristic).
    pub martingale_slope: f64,
    /// Hill estimate distance from the tail index.
    pub hill_alpha: f64,
    /// One-sample KS distance for the step sampler.
    pub ks_distance: f64,
    /// Weighted-tail slope distance from the tail index.
    pub tail_slope: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            ballot_slope: 0.07,
            lambda_slope: 0.2,
            median_min_slope: 0.15,
            martingale_slope: 0.1,
            hill_alpha: 0.1,
            ks_distance: 0.005,
            tail_slope: 0.1,
        }
    }
}

/// Full experiment configuration. Serializes round-trip stable; every field
/// has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub preset: String,
    pub law: LawConfig,
    pub schedule: Schedule,
    pub lambda_grid: Vec<f64>,
    pub beta: f64,
    /// Replicas for per-point Monte Carlo walks.
    pub walk_reps: u64,
    /// Surviving runs wanted by conditioning presets.
    pub survivors: u64,
    /// Generic replica count for brood-level estimators.
    pub replicas: u64,
    pub master_seed: u64,
    pub truncation: TruncationConfig,
    pub barrier: BarrierConfig,
    pub tolerances: ToleranceConfig,
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
    /// Pre-flight particle-step budget; experiments refuse to start beyond
    /// it.
    pub budget: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: "check-conditions".to_string(),
            law: LawConfig::default(),
            schedule: Schedule::default(),
            lambda_grid: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            beta: 1.0,
            walk_reps: 100_000,
            survivors: 400,
            replicas: 1_000_000,
            master_seed: 42,
            truncation: TruncationConfig::default(),
            barrier: BarrierConfig::default(),
            tolerances: ToleranceConfig::default(),
            workers: 1,
            out_dir: None,
            budget: 2e10,
        }
    }
}

impl ExperimentConfig {
    /// Preset-specific defaults (schedule, grids, replica counts); the
    /// generic defaults above are tuned for `check-conditions`.
    pub fn default_for_preset(preset: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            preset: preset.to_string(),
            ..ExperimentConfig::default()
        };
        match preset {
            "check-conditions" => {}
            "mto-oracle" => {
                cfg.replicas = 30_000;
                cfg.walk_reps = 100_000;
                cfg.truncation = TruncationConfig {
                    ceiling: CeilingConfig::None,
                    max_population: 200_000,
                    brood_fanout: Some(64),
                };
            }
            "lemma21" => {
                cfg.schedule = Schedule::Dyadic {
                    j_min: 6,
                    j_max: 14,
                };
                cfg.walk_reps = 100_000;
            }
            "lemma32" => {
                cfg.schedule = Schedule::Explicit {
                    points: vec![64, 128],
                };
                cfg.lambda_grid = vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
                cfg.walk_reps = 400_000;
            }
            "lemma41" => {
                cfg.schedule = Schedule::Explicit { points: vec![256] };
                cfg.lambda_grid = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
                cfg.survivors = 10_000;
                // minimum statistics live in the lowest particles; a tight
                // keep-lowest cap buys a 4x cost cut at negligible bias
                cfg.truncation.max_population = 512;
            }
            "median-mn" | "wn-decay" => {
                cfg.schedule = Schedule::Dyadic {
                    j_min: 5,
                    j_max: 11,
                };
                cfg.survivors = 400;
            }
            "wn-max" => {
                cfg.schedule = Schedule::Explicit {
                    points: vec![64, 256],
                };
                cfg.lambda_grid = vec![0.5, 1.0, 2.0, 4.0];
                cfg.survivors = 400;
            }
            "lower-envelope" | "integral-test" => {
                cfg.schedule = Schedule::Dyadic {
                    j_min: 4,
                    j_max: 11,
                };
                cfg.survivors = 400;
            }
            other => {
                return Err(Error::Config(format!("unknown preset '{other}'")));
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
