//! Experiment presets, deterministic replica orchestration, estimator
//! utilities, and CSV/JSON persistence.
//!
//! Preset catalog (run with `run_experiment`):
//!
//! | preset             | what it checks                                              |
//! |--------------------|-------------------------------------------------------------|
//! | `check-conditions` | boundary identities, tail decay, moment conditions          |
//! | `mto-oracle`       | walk/tree consistency, exact toy-law enumeration            |
//! | `lemma21`          | ballot-type barrier scaling exponents of the walk           |
//! | `lemma32`          | barrier-event decay in lambda (proxy slope, forward order)  |
//! | `lemma41`          | lower tail of the minimum below its typical centering       |
//! | `median-mn`        | median minimal-position growth against log n                |
//! | `wn-decay`         | median additive-martingale decay against log n              |
//! | `wn-max`           | tail of the running scaled restricted martingale            |
//! | `lower-envelope`   | qualitative report on the scaled minimum's lower range      |
//! | `integral-test`    | qualitative dip counts for two test functions               |

pub mod config;
pub mod orchestrate;
pub mod presets;
pub mod record;
pub mod verdict;

pub use config::{
    BarrierConfig, CeilingConfig, ExperimentConfig, LawConfig, LawFamily, Schedule,
    ToleranceConfig, TruncationConfig,
};
pub use orchestrate::{orchestrate, Orchestrated, PartialManifest};
pub use presets::{estimate_cost, run_experiment, simulate_runs, spine_barrier_estimate};
pub use record::{
    load_record, persist, read_points_csv, read_runs_csv, RawRuns, ResultRecord, RunOutput,
    SlopeRecord, VerdictLine,
};
pub use verdict::{compute_verdict, verdict_for_dir};

// estimator utilities re-exported where the harness interface documents
// them
pub use crate::stats::{fit_line, fit_loglog_slope, wilson_interval};
