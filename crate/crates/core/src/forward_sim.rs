//! Generation-by-generation simulation of the branching random walk.
//!
//! The reproduction laws have infinite mean offspring (a brood at a high
//! displacement `y` has about `e^y` children), so unbounded forward
//! simulation is impossible; every run carries a [`TruncationPolicy`]:
//!
//! * a **ceiling** `C(n)`: children born above `C(n)` are discarded at
//!   birth and counted, never materialized;
//! * a **population cap**: when a generation would exceed `max_population`,
//!   the lowest-position particles are kept. Low particles dominate every
//!   statistic of interest here (the minimum trivially, and the `e^{-V}`
//!   weighted sums overwhelmingly), so the cap's bias is small and always
//!   one-sided.
//!
//! Broods are held as (displacement, multiplicity) entries until after the
//! ceiling and cap decisions, so a brood of `e^{40}` co-located children
//! costs one entry, and the materialized arrays never exceed the cap.
//!
//! Randomness is keyed per particle (see [`crate::rng`]): a particle's
//! brood depends only on its path from the root, which makes runs with
//! different truncation policies pathwise comparable — a higher ceiling
//! grows every generation's particle set, so truncation can only raise the
//! minimum and lower the weighted sums, sample path by sample path.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reproduction::ReproLaw;
use crate::rng::{child_key, key_rng, root_key};

/// Ceiling rule `n -> C(n)`, nondecreasing in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CeilingRule {
    /// No ceiling (only usable with laws of bounded brood size, or behind a
    /// population cap that is accepted to bind).
    None,
    /// Constant ceiling.
    Constant(f64),
    /// `C(n) = scale * (1 + ln(1 + n))`: relevant particles live within a
    /// logarithmic band, so a logarithmic ceiling keeps the discarded mass
    /// negligible while bounding brood sizes.
    LogGrowth { scale: f64 },
}

impl CeilingRule {
    pub fn at(&self, n: u32) -> f64 {
        match *self {
            CeilingRule::None => f64::INFINITY,
            CeilingRule::Constant(c) => c,
            CeilingRule::LogGrowth { scale } => scale * (1.0 + (1.0 + n as f64).ln()),
        }
    }
}

/// Population-control policy. Over the cap, the lowest-position particles
/// are kept (ties resolved by birth order, so runs are deterministic).
///
/// `brood_fanout` bounds how many children of one co-located brood are
/// materialized: a brood of `N > f` identical children becomes `f`
/// particles of mass `N/f` each. Since co-located subtrees are i.i.d.,
/// every mass-linear statistic stays unbiased under this subsampling; it is
/// the instrument of choice when an unbiased weighted estimate matters more
/// than the exact particle count (the minimum-position statistics instead
/// want `None` here, because a subsampled tree's minimum is stochastically
/// larger).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub ceiling: CeilingRule,
    pub max_population: usize,
    #[serde(default)]
    pub brood_fanout: Option<usize>,
}

impl TruncationPolicy {
    pub fn new(ceiling: CeilingRule, max_population: usize) -> Self {
        TruncationPolicy {
            ceiling,
            max_population,
            brood_fanout: None,
        }
    }

    pub fn with_fanout(mut self, fanout: usize) -> Self {
        self.brood_fanout = Some(fanout);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_population == 0 {
            return Err(Error::Domain("max_population must be >= 1".into()));
        }
        if self.brood_fanout == Some(0) {
            return Err(Error::Domain("brood_fanout must be >= 1 when set".into()));
        }
        if let CeilingRule::Constant(c) = self.ceiling {
            if !c.is_finite() {
                return Err(Error::Domain("constant ceiling must be finite".into()));
            }
        }
        if let CeilingRule::LogGrowth { scale } = self.ceiling {
            if !(scale > 0.0) {
                return Err(Error::Domain("ceiling scale must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn default_policy() -> Self {
        TruncationPolicy::new(CeilingRule::LogGrowth { scale: 20.0 }, 100_000)
    }

    /// Unbiased-weights policy for expectation estimates: no ceiling, a
    /// brood fanout bound, and a large safety cap.
    pub fn unbiased_fanout(fanout: usize, max_population: usize) -> Self {
        TruncationPolicy {
            ceiling: CeilingRule::None,
            max_population,
            brood_fanout: Some(fanout),
        }
    }
}

/// The living population at one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub gen_index: u32,
    pub positions: Vec<f64>,
    /// Index of the parent in the previous generation.
    pub parent_index: Vec<u32>,
    /// Running minimum along each particle's ancestral path.
    pub path_min: Vec<f64>,
    /// Weighted mass `w * e^{-V}` of each particle, where `w` is the
    /// subsampling multiplicity (1 unless a brood fanout bound applies).
    pub mass: Vec<f64>,
    /// Per-particle randomness keys (see crate::rng).
    pub keys: Vec<u64>,
}

impl Generation {
    pub fn root(replica_key: u64) -> Self {
        Generation {
            gen_index: 0,
            positions: vec![0.0],
            parent_index: vec![0],
            path_min: vec![0.0],
            mass: vec![1.0],
            keys: vec![replica_key],
        }
    }

    pub fn population(&self) -> usize {
        self.positions.len()
    }

    pub fn min_position(&self) -> f64 {
        self.positions
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-generation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub n: u32,
    /// Minimal position; infinite when the generation is empty.
    pub min_position: f64,
    /// Additive martingale `sum e^{-V)`.
    pub additive_martingale: f64,
    /// `sum e^{-V} 1{path min >= -beta}` for the configured beta.
    pub restricted_martingale: f64,
    /// Derivative martingale `sum V e^{-V}`.
    pub derivative_martingale: f64,
    pub population: u64,
    /// Children discarded above the ceiling so far this generation.
    pub truncated_count: f64,
}

impl GenStats {
    fn from_generation(generation: &Generation, beta: f64, truncated_count: f64) -> Self {
        let mut w = 0.0;
        let mut w_beta = 0.0;
        let mut d = 0.0;
        for i in 0..generation.population() {
            let v = generation.positions[i];
            let e = generation.mass[i];
            w += e;
            if generation.path_min[i] >= -beta {
                w_beta += e;
            }
            d += v * e;
        }
        GenStats {
            n: generation.gen_index,
            min_position: generation.min_position(),
            additive_martingale: w,
            restricted_martingale: w_beta,
            derivative_martingale: d,
            population: generation.population() as u64,
            truncated_count,
        }
    }

    fn extinct(n: u32) -> Self {
        GenStats {
            n,
            min_position: f64::INFINITY,
            additive_martingale: 0.0,
            restricted_martingale: 0.0,
            derivative_martingale: 0.0,
            population: 0,
            truncated_count: 0.0,
        }
    }
}

/// CSV header for generation statistics streams.
pub const GEN_STATS_HEADER: [&str; 9] = [
    "n",
    "M_n",
    "W_n",
    "W_n_beta",
    "D_n",
    "population",
    "truncated_count",
    "replica",
    "seed",
];

/// Append one run's statistics rows to a CSV writer using the stable column
/// schema.
pub fn write_gen_stats_csv<W: Write>(
    writer: &mut csv::Writer<W>,
    stats: &[GenStats],
    replica: u64,
    seed: u64,
) -> Result<()> {
    for s in stats {
        writer.write_record([
            s.n.to_string(),
            format!("{}", s.min_position),
            format!("{}", s.additive_martingale),
            format!("{}", s.restricted_martingale),
            format!("{}", s.derivative_martingale),
            s.population.to_string(),
            format!("{}", s.truncated_count),
            replica.to_string(),
            seed.to_string(),
        ])?;
    }
    Ok(())
}

struct CandidateEntry {
    position: f64,
    parent: u32,
    path_min: f64,
    /// Mass of one materialized child of this entry.
    child_mass: f64,
    /// How many children to materialize (after any fanout bound).
    materialize: usize,
    key_base: u64, // child keys are derived from (key_base, entry ordinal, copy)
    entry_ordinal: u64,
}

/// Advance one generation under the policy. Children above the next
/// ceiling are discarded and counted; if the materialized population would
/// exceed the cap, the lowest-position particles are kept.
pub fn step_generation(
    generation: &Generation,
    law: &ReproLaw,
    policy: &TruncationPolicy,
) -> Result<(Generation, f64)> {
    policy.validate()?;
    if generation.population() == 0 {
        return Err(Error::Domain("cannot step an empty generation".into()));
    }
    let next_index = generation.gen_index + 1;
    let ceiling = policy.ceiling.at(next_index);
    if ceiling <= generation.min_position() {
        return Err(Error::Domain(format!(
            "ceiling {ceiling} at generation {next_index} does not exceed the current \
             minimal position {}",
            generation.min_position()
        )));
    }

    let mut truncated = 0.0;
    let mut candidates: Vec<CandidateEntry> = Vec::new();
    let mut total: usize = 0;
    for idx in 0..generation.population() {
        let key = generation.keys[idx];
        let mut rng = key_rng(key);
        let brood = law.sample_brood_compact(&mut rng);
        for (ordinal, entry) in brood.entries().iter().enumerate() {
            let position = generation.positions[idx] + entry.displacement;
            if position > ceiling {
                truncated += entry.count;
                continue;
            }
            // entry.weight() = count * e^{-displacement} is bounded, so the
            // per-child mass below never overflows even for huge broods
            let (materialize, child_mass) = match policy.brood_fanout {
                Some(f) if !(entry.count <= f as f64) => {
                    let mass = generation.mass[idx] * entry.weight() / f as f64;
                    (f, mass)
                }
                _ => {
                    // no subsampling: one unit of multiplicity per child;
                    // materializing beyond the cap is pointless because the
                    // cap keeps at most that many of these identical
                    // children anyway
                    let copies = entry
                        .count
                        .min(policy.max_population as f64) as usize;
                    let mass = generation.mass[idx] * (-entry.displacement).exp();
                    (copies, mass)
                }
            };
            if materialize == 0 {
                continue;
            }
            total += materialize;
            candidates.push(CandidateEntry {
                position,
                parent: idx as u32,
                path_min: generation.path_min[idx].min(position),
                child_mass,
                materialize,
                key_base: key,
                entry_ordinal: ordinal as u64,
            });
        }
    }

    let cap = policy.max_population;
    if total > cap {
        // keep the lowest positions; ties broken by candidate order
        candidates.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut kept = 0usize;
        let mut cut = Vec::new();
        for mut c in candidates {
            if kept >= cap {
                break;
            }
            let room = cap - kept;
            if c.materialize > room {
                c.materialize = room;
            }
            kept += c.materialize;
            cut.push(c);
        }
        candidates = cut;
        // restore deterministic parent order for materialization
        candidates.sort_by(|a, b| (a.parent, a.entry_ordinal).cmp(&(b.parent, b.entry_ordinal)));
    }

    let mut positions = Vec::new();
    let mut parent_index = Vec::new();
    let mut path_min = Vec::new();
    let mut mass = Vec::new();
    let mut keys = Vec::new();
    for c in &candidates {
        // key depends on (parent key, entry ordinal, copy ordinal) so it is
        // invariant under policy changes
        let entry_key = child_key(c.key_base, c.entry_ordinal);
        for copy in 0..c.materialize {
            positions.push(c.position);
            parent_index.push(c.parent);
            path_min.push(c.path_min);
            mass.push(c.child_mass);
            keys.push(child_key(entry_key, copy as u64));
        }
    }
    debug_assert!(positions.len() <= cap);

    Ok((
        Generation {
            gen_index: next_index,
            positions,
            parent_index,
            path_min,
            mass,
            keys,
        },
        truncated,
    ))
}

/// One forward run: per-generation statistics and the final generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRun {
    pub stats: Vec<GenStats>,
    /// The last nonempty generation reached (owned for functional
    /// evaluation at the target depth).
    pub final_generation: Option<Generation>,
    pub replica: u64,
    pub seed: u64,
}

impl ForwardRun {
    /// Did the run survive to generation `n`?
    pub fn survived_to(&self, n: u32) -> bool {
        self.final_generation
            .as_ref()
            .map(|g| g.gen_index == n && g.population() > 0)
            .unwrap_or(false)
    }

    /// The final generation if it is exactly generation `n`.
    pub fn generation_at(&self, n: u32) -> Option<&Generation> {
        self.final_generation
            .as_ref()
            .filter(|g| g.gen_index == n && g.population() > 0)
    }

    /// Stats row for generation `n`, when the run reached it.
    pub fn stats_at(&self, n: u32) -> Option<&GenStats> {
        self.stats.iter().find(|s| s.n == n)
    }
}

/// Run the particle system forward from a single root at the origin until
/// `n_max` or extinction. Deterministic given `(master_seed, replica)`.
pub fn run_forward(
    law: &ReproLaw,
    n_max: u32,
    policy: &TruncationPolicy,
    beta: f64,
    master_seed: u64,
    replica: u64,
) -> Result<ForwardRun> {
    if n_max == 0 {
        return Err(Error::Config("run_forward needs n_max >= 1".into()));
    }
    policy.validate()?;
    let mut generation = Generation::root(root_key(master_seed, replica));
    let mut stats = vec![GenStats::from_generation(&generation, beta, 0.0)];
    for _ in 0..n_max {
        let (next, truncated) = step_generation(&generation, law, policy)?;
        if next.population() == 0 {
            stats.push(GenStats::extinct(next.gen_index));
            return Ok(ForwardRun {
                stats,
                final_generation: None,
                replica,
                seed: master_seed,
            });
        }
        stats.push(GenStats::from_generation(&next, beta, truncated));
        generation = next;
    }
    Ok(ForwardRun {
        stats,
        final_generation: Some(generation),
        replica,
        seed: master_seed,
    })
}

/// Runs surviving to the target generation, obtained by whole-run
/// resampling: attempt indices are scanned in order, and the first `want`
/// surviving attempts (by index) are returned, so the result does not
/// depend on how attempts are scheduled.
#[derive(Debug, Clone)]
pub struct SurvivalRuns {
    pub runs: Vec<ForwardRun>,
    pub attempts: u64,
    pub survival_rate: f64,
}

pub fn survival_runs(
    law: &ReproLaw,
    n_max: u32,
    policy: &TruncationPolicy,
    beta: f64,
    master_seed: u64,
    want: usize,
) -> Result<SurvivalRuns> {
    survival_runs_with_workers(law, n_max, policy, beta, master_seed, want, 1)
}

/// Parallel variant: attempts are evaluated in index blocks so the selected
/// runs are identical for every worker count.
pub fn survival_runs_with_workers(
    law: &ReproLaw,
    n_max: u32,
    policy: &TruncationPolicy,
    beta: f64,
    master_seed: u64,
    want: usize,
    workers: usize,
) -> Result<SurvivalRuns> {
    use rayon::prelude::*;
    if want == 0 {
        return Err(Error::Config("survival_runs needs want >= 1".into()));
    }
    if workers == 0 {
        return Err(Error::Config("survival_runs needs workers >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut runs: Vec<ForwardRun> = Vec::with_capacity(want);
    let mut attempts = 0u64;
    let mut successes = 0u64;
    let block = (want.max(32) * 2) as u64;
    while runs.len() < want {
        let lo = attempts;
        let hi = attempts + block;
        let batch: Vec<ForwardRun> = pool.install(|| {
            (lo..hi)
                .into_par_iter()
                .map(|rep| run_forward(law, n_max, policy, beta, master_seed, rep))
                .collect::<Result<Vec<_>>>()
        })?;
        attempts = hi;
        for run in batch {
            if run.survived_to(n_max) {
                successes += 1;
                if runs.len() < want {
                    runs.push(run);
                }
            }
        }
        let rate = successes as f64 / attempts as f64;
        if attempts >= 10_000 && rate < 1e-3 {
            return Err(Error::SurvivalTooRare {
                attempts,
                successes,
                rate,
            });
        }
    }
    let survival_rate = successes as f64 / attempts as f64;
    Ok(SurvivalRuns {
        runs,
        attempts,
        survival_rate,
    })
}
