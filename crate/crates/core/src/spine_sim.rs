//! The particle system under the size-biased (tilted) measure.
//!
//! Reweighting path space by the additive martingale singles out a spine: a
//! distinguished line of descent whose increments are distributed exactly
//! like the associated walk, while every particle off the spine starts an
//! ordinary untilted subtree. This module simulates that description
//! directly:
//!
//! * [`tilted_brood`] draws one brood from the size-biased reproduction law
//!   together with the spine child (chosen within the brood proportionally
//!   to `e^{-position}`). For the single-location family this has a closed
//!   form: the spine child's displacement follows the *step* density, and
//!   the brood size given the displacement is the size-biased rounding of
//!   `lambda`.
//! * [`sample_spine`] iterates that step, retaining the brother broods.
//! * [`BarrierSpec`] and [`event_membership`] evaluate the two barrier
//!   events used in the rare-event analysis: a floor-then-window condition
//!   on the path, and a smallness condition on the exponentially weighted
//!   brother sums.
//! * [`estimate_barrier_event`] estimates the probability that some
//!   generation-`k` particle (over the admissible range of `k`) satisfies
//!   both events, either by pruned forward simulation of the full tree
//!   (documented as slightly biased by the population cap) or by the
//!   many-to-one first-moment proxy on the walk, which carries the
//!   `e^{-lambda}` factor explicitly through the terminal window.
//! * [`size_biased_estimate`] estimates expectations of spine functionals
//!   under the tilted measure; by the change of measure they equal
//!   `E[W_n * phi]` under the original law, which cross-validates the
//!   forward simulator.

use rand::distr::OpenClosed01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::{step_generation, Generation, TruncationPolicy};
use crate::reproduction::{Brood, BroodEntry, ReproLaw};
use crate::rng::{child_key, replica_stream};
use crate::stats::{wilson_interval, EstimateRecord, RunningMoments};

/// One spine step: the full tilted brood (displacements relative to the
/// parent), and which entry contains the spine child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineStep {
    pub brood: Brood,
    pub chosen_entry: usize,
}

/// A spine path under the tilted measure with its brother broods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineRealization {
    /// Spine positions, starting at 0 (length `n + 1`).
    pub positions: Vec<f64>,
    /// The brood of each spine particle (length `n`).
    pub steps: Vec<SpineStep>,
}

impl SpineRealization {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Spine increments (distributed as the associated walk's steps).
    pub fn increments(&self) -> Vec<f64> {
        self.positions.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn terminal(&self) -> f64 {
        *self.positions.last().expect("positions never empty")
    }

    pub fn minimum(&self) -> f64 {
        self.positions
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Brothers of the spine particle at generation `i + 1`: the step-`i`
    /// brood minus one copy of the chosen entry, as absolute positions.
    pub fn brothers(&self, i: usize) -> Vec<BroodEntry> {
        let step = &self.steps[i];
        let parent = self.positions[i];
        let mut out = Vec::new();
        for (idx, e) in step.brood.entries.iter().enumerate() {
            let count = if idx == step.chosen_entry {
                e.count - 1.0
            } else {
                e.count
            };
            if count > 0.0 {
                out.push(BroodEntry {
                    displacement: parent + e.displacement,
                    count,
                });
            }
        }
        out
    }
}

/// Draw one brood from the size-biased reproduction law and select the
/// spine child. Returns the brood (displacements relative to the parent)
/// and the index of the entry containing the spine child.
pub fn tilted_brood<R: Rng + ?Sized>(law: &ReproLaw, rng: &mut R) -> (Brood, usize) {
    match law {
        ReproLaw::Brood(b) => {
            // closed form: spine displacement follows the step density, and
            // the brood size given the displacement is the size-biased
            // rounding of lambda
            let y = b.base.sample(rng);
            let lambda = b.expected_children_at(y);
            let count = if y <= 0.0 {
                1.0
            } else if lambda >= 2f64.powi(52) {
                lambda // rounding below f64 resolution
            } else {
                let m = lambda.floor();
                let frac = lambda - m;
                // size-biased rounding: P(m + 1) = (m + 1) frac / lambda
                let u: f64 = rng.sample(OpenClosed01);
                if u <= (m + 1.0) * frac / lambda {
                    m + 1.0
                } else {
                    m
                }
            };
            (
                Brood {
                    entries: vec![BroodEntry {
                        displacement: y,
                        count,
                    }],
                },
                0,
            )
        }
        ReproLaw::Dyadic(d) => {
            // enumerate the four sign outcomes tilted by e^{-x1} + e^{-x2}
            let u = d.displacement;
            let theta = d.down_prob;
            let w = |x: f64| (-x).exp();
            let outcomes = [(-u, -u), (-u, u), (u, -u), (u, u)];
            let probs = [
                theta * theta,
                theta * (1.0 - theta),
                (1.0 - theta) * theta,
                (1.0 - theta) * (1.0 - theta),
            ];
            let weights: Vec<f64> = outcomes
                .iter()
                .zip(probs.iter())
                .map(|(&(a, b), &p)| p * (w(a) + w(b)))
                .collect();
            // total tilted mass is the unit martingale mean
            let draw: f64 = rng.sample(OpenClosed01);
            let mut acc = 0.0;
            let mut pick = outcomes.len() - 1;
            for (i, &wt) in weights.iter().enumerate() {
                acc += wt;
                if draw <= acc {
                    pick = i;
                    break;
                }
            }
            let (x1, x2) = outcomes[pick];
            // spine child proportional to e^{-x} within the brood
            let spine_draw: f64 = rng.sample(OpenClosed01);
            let first = w(x1) / (w(x1) + w(x2));
            let spine_first = spine_draw <= first;
            if x1 == x2 {
                (
                    Brood {
                        entries: vec![BroodEntry {
                            displacement: x1,
                            count: 2.0,
                        }],
                    },
                    0,
                )
            } else {
                let chosen = if spine_first { x1 } else { x2 };
                let other = if spine_first { x2 } else { x1 };
                (
                    Brood {
                        entries: vec![
                            BroodEntry {
                                displacement: chosen,
                                count: 1.0,
                            },
                            BroodEntry {
                                displacement: other,
                                count: 1.0,
                            },
                        ],
                    },
                    0,
                )
            }
        }
    }
}

/// Simulate `n` spine steps under the tilted measure. Deterministic given
/// the seed (the realization owns stream 0 of the seed).
pub fn sample_spine(law: &ReproLaw, n: u32, seed: u64) -> Result<SpineRealization> {
    let mut rng = replica_stream(seed, 0);
    sample_spine_with(law, n, &mut rng)
}

/// As [`sample_spine`] with a caller-owned stream.
pub fn sample_spine_with<R: Rng + ?Sized>(
    law: &ReproLaw,
    n: u32,
    rng: &mut R,
) -> Result<SpineRealization> {
    if n == 0 {
        return Err(Error::Config("sample_spine needs n >= 1".into()));
    }
    let mut positions = Vec::with_capacity(n as usize + 1);
    let mut steps = Vec::with_capacity(n as usize);
    positions.push(0.0);
    let mut v = 0.0;
    for _ in 0..n {
        let (brood, chosen) = tilted_brood(law, rng);
        v += brood.entries[chosen].displacement;
        positions.push(v);
        steps.push(SpineStep {
            brood,
            chosen_entry: chosen,
        });
    }
    Ok(SpineRealization { positions, steps })
}

/// Barrier geometry for the rare-event analysis: a floor at 0 on the first
/// quarter of the levels, a floor at the target height `s = (1/alpha) ln n
/// - lambda` afterwards, a terminal window `[s, s + terminal_slack]`, and
/// per-level bounds `brother_scale * e^{-exponent}` on the weighted brother
/// sums, with exponent `i^{gamma/2}` early and `(k - i)^{gamma/2}` late,
/// `gamma = 1/(alpha (alpha + 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub n: u32,
    pub lambda: f64,
    /// Width of the terminal window above the target height.
    pub terminal_slack: f64,
    /// Scale constant in the brother bound.
    pub brother_scale: f64,
    pub alpha: f64,
}

impl BarrierSpec {
    /// Admissible construction: `0 <= lambda <= ln(n) / (2 alpha)`.
    pub fn new(
        alpha: f64,
        n: u32,
        lambda: f64,
        terminal_slack: f64,
        brother_scale: f64,
    ) -> Result<Self> {
        let spec = Self::with_extended_lambda(alpha, n, lambda, terminal_slack, brother_scale)?;
        let lambda_max = (n as f64).ln() / (2.0 * alpha);
        if lambda > lambda_max + 1e-12 {
            return Err(Error::Domain(format!(
                "lambda {lambda} exceeds the admissible bound {lambda_max} for n = {n}"
            )));
        }
        Ok(spec)
    }

    /// Construction without the admissibility cap on `lambda`, for proxy
    /// estimates scanned over a wide grid.
    pub fn with_extended_lambda(
        alpha: f64,
        n: u32,
        lambda: f64,
        terminal_slack: f64,
        brother_scale: f64,
    ) -> Result<Self> {
        if !(1.0 < alpha && alpha < 2.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in (1,2), got {alpha}"
            )));
        }
        if n < 2 {
            return Err(Error::Domain(format!("barrier spec needs n >= 2, got {n}")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(terminal_slack >= 0.0) {
            return Err(Error::Domain(format!(
                "terminal_slack must be >= 0, got {terminal_slack}"
            )));
        }
        if !(brother_scale > 0.0) {
            return Err(Error::Domain(format!(
                "brother_scale must be > 0, got {brother_scale}"
            )));
        }
        Ok(BarrierSpec {
            n,
            lambda,
            terminal_slack,
            brother_scale,
            alpha,
        })
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (self.alpha * (self.alpha + 1.0))
    }

    /// Target height `s = (1/alpha) ln n - lambda`.
    pub fn target_height(&self) -> f64 {
        (self.n as f64).ln() / self.alpha - self.lambda
    }

    /// `floor(alpha n / 4)`: the level where the floor switches from 0 to
    /// the target height.
    pub fn quarter(&self) -> u32 {
        (self.alpha * self.n as f64 / 4.0).floor() as u32
    }

    /// Largest admissible terminal generation `floor(alpha n)`.
    pub fn k_hi(&self) -> u32 {
        (self.alpha * self.n as f64).floor() as u32
    }

    /// Terminal generations range over `(n, k_hi]`.
    pub fn k_range(&self) -> std::ops::RangeInclusive<u32> {
        self.n + 1..=self.k_hi()
    }

    /// Path floor at level `i` (for candidate terminals `k >= i`).
    pub fn level_floor(&self, i: u32) -> f64 {
        if i > self.quarter() {
            self.target_height()
        } else {
            0.0
        }
    }

    /// Exponent of the brother bound at level `i` for terminal `k`.
    pub fn brother_exponent(&self, i: u32, k: u32) -> f64 {
        let half_gamma = self.gamma() / 2.0;
        if i <= self.quarter() {
            (i as f64).powf(half_gamma)
        } else {
            ((k - i) as f64).powf(half_gamma)
        }
    }

    /// Weighted brother term `count * (1 + (pos - floor)_+) e^{-(pos -
    /// floor)}`, honoring the huge-brood convention (non-finite count means
    /// the brood size is exactly `exp(pos - parent)`).
    fn brother_term(&self, entry: &BroodEntry, parent: f64, floor: f64) -> f64 {
        let excess = entry.displacement - floor;
        let shape = 1.0 + excess.max(0.0);
        if entry.count.is_finite() {
            entry.count * shape * (-excess).exp()
        } else {
            shape * (floor - parent).exp()
        }
    }

    /// Weighted brother sum at spine step `i` of a realization.
    pub fn brother_sum(&self, realization: &SpineRealization, i: usize) -> f64 {
        let floor = self.level_floor(i as u32);
        let parent = realization.positions[i];
        realization
            .brothers(i)
            .iter()
            .map(|e| self.brother_term(e, parent, floor))
            .sum()
    }

    /// Largest terminal `k` compatible with a brother sum `kappa` incurred
    /// at level `i > quarter`; `None` when no terminal is compatible.
    fn latest_terminal_for(&self, kappa: f64, i: u32) -> Option<u32> {
        if kappa <= 0.0 {
            return Some(self.k_hi());
        }
        let log_ratio = (self.brother_scale / kappa).ln();
        if log_ratio < 0.0 {
            return None;
        }
        let reach = log_ratio.powf(2.0 / self.gamma());
        let k = i as f64 + reach.floor();
        if k < i as f64 + 1.0 {
            None
        } else {
            Some((k.min(self.k_hi() as f64)) as u32)
        }
    }
}

/// Evaluate both barrier indicators for the spine path as the candidate
/// particle terminating at generation `k`.
pub fn event_membership(
    realization: &SpineRealization,
    spec: &BarrierSpec,
    k: u32,
) -> Result<(bool, bool)> {
    if !spec.k_range().contains(&k) {
        return Err(Error::Domain(format!(
            "terminal generation {k} outside the admissible range ({}, {}]",
            spec.n,
            spec.k_hi()
        )));
    }
    if realization.len() < k as usize {
        return Err(Error::Domain(format!(
            "realization of length {} cannot reach generation {k}",
            realization.len()
        )));
    }
    let s = spec.target_height();
    let mut in_a = realization.positions[k as usize] <= s + spec.terminal_slack;
    if in_a {
        for i in 0..=k {
            if realization.positions[i as usize] < spec.level_floor(i) {
                in_a = false;
                break;
            }
        }
    }
    let mut in_b = true;
    for i in 0..k {
        let kappa = spec.brother_sum(realization, i as usize);
        let bound = spec.brother_scale * (-spec.brother_exponent(i, k)).exp();
        if kappa > bound {
            in_b = false;
            break;
        }
    }
    Ok((in_a, in_b))
}

/// Estimation mode for the barrier event probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    /// Direct indicator over pruned full trees. Slightly biased by the
    /// population cap (the report flags this); cost-guarded in `n`.
    Forward,
    /// Many-to-one first-moment proxy on the walk: an upper-bound-flavored
    /// estimate of the expected number of candidate particles.
    FirstMoment,
}

/// Options for the forward estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierForwardOpts {
    /// Refuse forward estimation beyond this n (cost guard).
    pub max_n: u32,
    /// Population cap on barrier-respecting particles (lowest kept).
    pub max_population: usize,
}

impl Default for BarrierForwardOpts {
    fn default() -> Self {
        BarrierForwardOpts {
            max_n: 256,
            max_population: 20_000,
        }
    }
}

/// Estimate of the barrier event probability (forward mode) or of the
/// first-moment proxy (walk mode); `biased` flags the capped forward mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierEstimate {
    pub record: EstimateRecord,
    pub mode: BarrierMode,
    /// True for the forward mode: the population cap and pruning make it a
    /// (slightly) biased estimate of the exact event probability.
    pub biased: bool,
}

pub fn estimate_barrier_event(
    law: &ReproLaw,
    spec: &BarrierSpec,
    mode: BarrierMode,
    reps: u64,
    master_seed: u64,
    opts: &BarrierForwardOpts,
) -> Result<BarrierEstimate> {
    if reps == 0 {
        return Err(Error::Config("barrier estimate needs reps >= 1".into()));
    }
    match mode {
        BarrierMode::Forward => {
            if spec.n > opts.max_n {
                return Err(Error::Config(format!(
                    "forward barrier estimation refused: n = {} exceeds the cost-guard \
                     limit {} (use the first-moment proxy instead)",
                    spec.n, opts.max_n
                )));
            }
            let mut hits = 0u64;
            for rep in 0..reps {
                if barrier_event_indicator(law, spec, master_seed, rep, opts)? {
                    hits += 1;
                }
            }
            let (lo, hi) = wilson_interval(hits, reps, 0.95)?;
            Ok(BarrierEstimate {
                record: EstimateRecord {
                    kind: "barrier_forward".to_string(),
                    params: format!(
                        "lambda={} slack={} scale={}",
                        spec.lambda, spec.terminal_slack, spec.brother_scale
                    ),
                    n: spec.n as u64,
                    reps,
                    estimate: hits as f64 / reps as f64,
                    ci_low: lo,
                    ci_high: hi,
                    seed: master_seed,
                },
                mode,
                biased: true,
            })
        }
        BarrierMode::FirstMoment => {
            let mut acc = RunningMoments::default();
            let mut rng = replica_stream(master_seed, 0);
            let s = spec.target_height();
            let k_hi = spec.k_hi();
            for _ in 0..reps {
                let mut position = 0.0;
                let mut value = 0.0;
                for i in 1..=k_hi {
                    position += law.walk_step(&mut rng);
                    if position < spec.level_floor(i) {
                        break;
                    }
                    if i > spec.n && position <= s + spec.terminal_slack {
                        value += position.exp();
                    }
                }
                acc.push(value);
            }
            let (lo, hi) = acc.ci(0.95)?;
            Ok(BarrierEstimate {
                record: EstimateRecord {
                    kind: "barrier_first_moment".to_string(),
                    params: format!(
                        "lambda={} slack={} scale={}",
                        spec.lambda, spec.terminal_slack, spec.brother_scale
                    ),
                    n: spec.n as u64,
                    reps,
                    estimate: acc.mean(),
                    ci_low: lo,
                    ci_high: hi,
                    seed: master_seed,
                },
                mode,
                biased: false,
            })
        }
    }
}

/// A barrier-respecting particle in the pruned forward pass.
struct BarrierParticle {
    position: f64,
    /// Largest terminal generation its brother history permits.
    latest_terminal: u32,
    key: u64,
}

/// Grow one tree with exact barrier pruning and detect whether any
/// generation-`k` particle over the admissible range satisfies both events.
/// One replica of the forward mode; exposed so orchestration layers can
/// parallelize over replicas deterministically.
///
/// Pruning is exact for the event: a particle violating the floor, or whose
/// brother sum rules out every remaining terminal generation, can never be
/// an ancestor of a candidate, so its whole subtree is dropped. The
/// population cap (lowest positions kept) is the only bias source.
pub fn barrier_event_indicator(
    law: &ReproLaw,
    spec: &BarrierSpec,
    master_seed: u64,
    replica: u64,
    opts: &BarrierForwardOpts,
) -> Result<bool> {
    let k_hi = spec.k_hi();
    let s = spec.target_height();
    if spec.level_floor(0) > 0.0 {
        return Ok(false); // root at 0 below the floor: nothing to grow
    }
    let mut particles = vec![BarrierParticle {
        position: 0.0,
        latest_terminal: k_hi,
        key: crate::rng::root_key(master_seed, replica),
    }];
    // a particle can descend at most this much per level, so anything
    // higher than the window top plus the remaining descent can never
    // produce a candidate; pruning on it is exact
    let max_descent_per_level = match law {
        ReproLaw::Brood(b) => b.base.left_depth,
        ReproLaw::Dyadic(d) => d.displacement,
    };
    for next_level in 1..=k_hi {
        if particles.is_empty() {
            return Ok(false);
        }
        let parent_level = next_level - 1;
        let parent_floor = spec.level_floor(parent_level);
        let child_floor = spec.level_floor(next_level);
        let reach_ceiling =
            s + spec.terminal_slack + (k_hi - next_level) as f64 * max_descent_per_level;
        let early = parent_level <= spec.quarter();
        let early_bound = spec.brother_scale * (-spec.brother_exponent(parent_level, k_hi)).exp();
        let mut next: Vec<BarrierParticle> = Vec::new();
        for p in &particles {
            let mut rng = crate::rng::key_rng(p.key);
            let brood = law.sample_brood_compact(&mut rng);
            if brood.entries().is_empty() {
                continue;
            }
            // total brother weight once; each child subtracts its own copy
            let total: f64 = brood
                .entries()
                .iter()
                .map(|e| {
                    spec.brother_term(
                        &BroodEntry {
                            displacement: p.position + e.displacement,
                            count: e.count,
                        },
                        p.position,
                        parent_floor,
                    )
                })
                .sum();
            for (ordinal, e) in brood.entries().iter().enumerate() {
                let child_pos = p.position + e.displacement;
                if child_pos < child_floor || child_pos > reach_ceiling {
                    continue;
                }
                let own = spec.brother_term(
                    &BroodEntry {
                        displacement: child_pos,
                        count: 1.0,
                    },
                    p.position,
                    parent_floor,
                );
                let kappa = (total - own).max(0.0);
                let latest = if early {
                    if kappa > early_bound {
                        continue;
                    }
                    p.latest_terminal
                } else {
                    match spec.latest_terminal_for(kappa, parent_level) {
                        Some(k) => p.latest_terminal.min(k),
                        None => continue,
                    }
                };
                if latest < next_level {
                    continue;
                }
                let entry_key = child_key(p.key, ordinal as u64);
                let copies = if e.count.is_finite() {
                    e.count.min(opts.max_population as f64) as usize
                } else {
                    opts.max_population
                };
                for copy in 0..copies {
                    next.push(BarrierParticle {
                        position: child_pos,
                        latest_terminal: latest,
                        key: child_key(entry_key, copy as u64),
                    });
                }
            }
        }
        if next.len() > opts.max_population {
            next.sort_by(|a, b| a.position.total_cmp(&b.position));
            next.truncate(opts.max_population);
        }
        // candidate check at admissible terminal generations
        if next_level > spec.n {
            for p in &next {
                if p.position <= s + spec.terminal_slack && p.latest_terminal >= next_level {
                    return Ok(true);
                }
            }
        }
        particles = next;
    }
    Ok(false)
}

/// Closed catalog of spine functionals for the change-of-measure
/// estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum SpineFunctional {
    /// Constant 1: the tilted expectation equals the unit martingale mean
    /// exactly.
    One,
    /// `1{min spine position >= -a}`: equals the mean of the restricted
    /// martingale under the original law.
    SpineMinAbove { a: f64 },
    /// `e^{-(terminal)_+}`: bounded functional of the terminal position;
    /// its tilted mean equals the same functional of the walk endpoint.
    BoundedTerminalWeight,
    /// `1 / W_n` over the full size-biased tree (requires growing brother
    /// subtrees): its tilted mean equals the survival probability to `n`.
    InverseMartingale,
}

impl SpineFunctional {
    pub fn label(&self) -> String {
        match *self {
            SpineFunctional::One => "one".to_string(),
            SpineFunctional::SpineMinAbove { a } => format!("spine_min_above[a={a}]"),
            SpineFunctional::BoundedTerminalWeight => "bounded_terminal_weight".to_string(),
            SpineFunctional::InverseMartingale => "inverse_martingale".to_string(),
        }
    }

    pub fn needs_brother_growth(&self) -> bool {
        matches!(self, SpineFunctional::InverseMartingale)
    }
}

/// Options for growing the brother subtrees of a spine realization as
/// ordinary (untilted) trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpineGrowthOpts {
    pub policy: TruncationPolicy,
    /// Brothers materialized per spine step at most this many, a further
    /// documented bias source for huge broods.
    pub max_brothers_per_step: usize,
}

impl Default for SpineGrowthOpts {
    fn default() -> Self {
        SpineGrowthOpts {
            policy: TruncationPolicy::default_policy(),
            max_brothers_per_step: 4_096,
        }
    }
}

/// The additive martingale of the size-biased tree at generation `n`: the
/// spine terminal plus every brother subtree's contribution.
pub fn size_biased_tree_martingale(
    law: &ReproLaw,
    realization: &SpineRealization,
    opts: &SpineGrowthOpts,
    master_seed: u64,
    replica: u64,
) -> Result<f64> {
    let n = realization.len() as u32;
    let mut total = (-realization.terminal()).exp();
    for i in 0..realization.len() {
        let depth = n - (i as u32 + 1);
        let brothers = realization.brothers(i);
        let mut materialized: Vec<f64> = Vec::new();
        for b in &brothers {
            let copies = if b.count.is_finite() {
                b.count.min(opts.max_brothers_per_step as f64) as usize
            } else {
                opts.max_brothers_per_step
            };
            for _ in 0..copies {
                if materialized.len() < opts.max_brothers_per_step {
                    materialized.push(b.displacement);
                }
            }
        }
        for (b_ord, b_pos) in materialized.into_iter().enumerate() {
            if depth == 0 {
                total += (-b_pos).exp();
                continue;
            }
            // untilted subtree below the brother, shifted to its position
            let key = crate::rng::mix64(
                crate::rng::root_key(master_seed, replica)
                    ^ crate::rng::child_key((i as u64) << 32, b_ord as u64),
            );
            let mut generation = Generation::root(key);
            let mut alive = true;
            for _ in 0..depth {
                let (nextgen, _) = step_generation(&generation, law, &opts.policy)?;
                if nextgen.population() == 0 {
                    alive = false;
                    break;
                }
                generation = nextgen;
            }
            if alive {
                for &rel in &generation.positions {
                    total += (-(b_pos + rel)).exp();
                }
            }
        }
    }
    Ok(total)
}

/// Estimate the tilted expectation of a catalog functional over `reps`
/// independent spine realizations.
pub fn size_biased_estimate(
    law: &ReproLaw,
    n: u32,
    functional: SpineFunctional,
    reps: u64,
    master_seed: u64,
    growth: Option<&SpineGrowthOpts>,
) -> Result<EstimateRecord> {
    if reps == 0 {
        return Err(Error::Config("size-biased estimate needs reps >= 1".into()));
    }
    if functional.needs_brother_growth() && growth.is_none() {
        return Err(Error::Config(format!(
            "functional {} requires brother-subtree growth options",
            functional.label()
        )));
    }
    let mut acc = RunningMoments::default();
    for rep in 0..reps {
        let mut rng = replica_stream(master_seed, rep);
        let realization = sample_spine_with(law, n, &mut rng)?;
        let value = match functional {
            SpineFunctional::One => 1.0,
            SpineFunctional::SpineMinAbove { a } => {
                if realization.minimum() >= -a {
                    1.0
                } else {
                    0.0
                }
            }
            SpineFunctional::BoundedTerminalWeight => (-realization.terminal().max(0.0)).exp(),
            SpineFunctional::InverseMartingale => {
                let opts = growth.expect("checked above");
                let w = size_biased_tree_martingale(law, &realization, opts, master_seed, rep)?;
                1.0 / w
            }
        };
        acc.push(value);
    }
    let (lo, hi) = acc.ci(0.95)?;
    Ok(EstimateRecord {
        kind: format!("size_biased:{}", functional.label()),
        params: format!("family={}", law.family_name()),
        n: n as u64,
        reps,
        estimate: acc.mean(),
        ci_low: lo,
        ci_high: hi,
        seed: master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_sim::CeilingRule;
    use crate::reproduction::BroodLaw;
    use crate::stable_walk::StepLaw;
    use crate::stats::{intervals_overlap, ks_two_sample};

    fn default_spec(n: u32, lambda: f64) -> BarrierSpec {
        BarrierSpec::new(1.5, n, lambda, 5.0, 10.0).unwrap()
    }

    #[test]
    fn spec_validates_inputs() {
        assert!(BarrierSpec::new(1.5, 64, 0.0, 5.0, 10.0).is_ok());
        // lambda beyond ln(n)/(2 alpha) is rejected by the strict form
        let lmax = 64f64.ln() / 3.0;
        assert!(BarrierSpec::new(1.5, 64, lmax + 0.1, 5.0, 10.0).is_err());
        assert!(BarrierSpec::with_extended_lambda(1.5, 64, lmax + 2.0, 5.0, 10.0).is_ok());
        assert!(BarrierSpec::new(2.5, 64, 0.0, 5.0, 10.0).is_err());
        assert!(BarrierSpec::new(1.5, 1, 0.0, 5.0, 10.0).is_err());
        assert!(BarrierSpec::new(1.5, 64, -0.1, 5.0, 10.0).is_err());
        assert!(BarrierSpec::new(1.5, 64, 0.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn barrier_geometry_matches_the_definitions() {
        let spec = default_spec(64, 1.0);
        assert_eq!(spec.quarter(), 24);
        assert_eq!(spec.k_hi(), 96);
        assert!((spec.gamma() - 1.0 / (1.5 * 2.5)).abs() < 1e-15);
        let s = 64f64.ln() / 1.5 - 1.0;
        assert!((spec.target_height() - s).abs() < 1e-12);
        assert_eq!(spec.level_floor(0), 0.0);
        assert_eq!(spec.level_floor(24), 0.0);
        assert!((spec.level_floor(25) - s).abs() < 1e-12);
        // early exponent i^{gamma/2}, late exponent (k-i)^{gamma/2}
        let g2 = spec.gamma() / 2.0;
        assert!((spec.brother_exponent(9, 80) - 9f64.powf(g2)).abs() < 1e-12);
        assert!((spec.brother_exponent(70, 80) - 10f64.powf(g2)).abs() < 1e-12);
        assert_eq!(spec.brother_exponent(0, 80), 0.0);
    }

    fn injected_realization(
        positions: Vec<f64>,
        brothers: Vec<Vec<BroodEntry>>,
    ) -> SpineRealization {
        // build steps whose broods are the spine child plus the given
        // brothers (brother entries are absolute positions here, converted
        // back to displacements)
        let mut steps = Vec::new();
        for i in 0..positions.len() - 1 {
            let parent = positions[i];
            let mut entries = vec![BroodEntry {
                displacement: positions[i + 1] - parent,
                count: 1.0,
            }];
            for b in &brothers[i] {
                entries.push(BroodEntry {
                    displacement: b.displacement - parent,
                    count: b.count,
                });
            }
            steps.push(SpineStep {
                brood: Brood { entries },
                chosen_entry: 0,
            });
        }
        SpineRealization { positions, steps }
    }

    #[test]
    fn membership_terminal_window_and_floor_interact_as_defined() {
        let n = 8;
        let spec = default_spec(n, 0.0);
        let k = 10u32;
        let s = spec.target_height();
        // a path pinned inside the terminal window passes the floor at
        // every level, so membership holds
        let len = k as usize;
        let high = injected_realization(
            std::iter::once(0.0)
                .chain((0..len).map(|_| s + 1.0))
                .collect(),
            vec![vec![]; len],
        );
        let (in_a, in_b) = event_membership(&high, &spec, k).unwrap();
        assert!(in_a, "path inside the window and above the floor");
        assert!(in_b, "empty brothers always satisfy the brother bound");
        // the constant-zero path satisfies the terminal window (0 <= s +
        // slack) but sits below the late floor s > 0, so membership fails
        let zero = injected_realization(vec![0.0; len + 1], vec![vec![]; len]);
        assert!(0.0 <= s + spec.terminal_slack);
        let (in_a, in_b) = event_membership(&zero, &spec, k).unwrap();
        assert!(!in_a);
        assert!(in_b);
    }

    #[test]
    fn membership_brother_bound_at_level_zero_compares_to_the_scale() {
        // single brother exactly at the level floor with exponent 0: the
        // weighted term is exactly 1, so the bound holds iff 1 <= scale
        let n = 8;
        let k = 10u32;
        let len = k as usize;
        let s = BarrierSpec::new(1.5, n, 0.0, 5.0, 10.0)
            .unwrap()
            .target_height();
        let positions: Vec<f64> = std::iter::once(0.0)
            .chain((0..len).map(|_| s + 1.0))
            .collect();
        let mut brothers = vec![vec![]; len];
        brothers[0] = vec![BroodEntry {
            displacement: 0.0, // the level-0 floor
            count: 1.0,
        }];
        let realization = injected_realization(positions, brothers);
        let generous = BarrierSpec::new(1.5, n, 0.0, 5.0, 2.0).unwrap();
        let (_, in_b) = event_membership(&realization, &generous, k).unwrap();
        assert!(in_b, "term 1 within scale 2");
        let stingy = BarrierSpec::new(1.5, n, 0.0, 5.0, 0.5).unwrap();
        let (_, in_b) = event_membership(&realization, &stingy, k).unwrap();
        assert!(!in_b, "term 1 exceeds scale 0.5");
    }

    #[test]
    fn membership_rejects_out_of_range_terminals() {
        let spec = default_spec(8, 0.0);
        let realization = injected_realization(vec![0.0; 13], vec![vec![]; 12]);
        assert!(event_membership(&realization, &spec, 8).is_err());
        assert!(event_membership(&realization, &spec, 13).is_err());
        assert!(event_membership(&realization, &spec, 12).is_ok());
        let short = injected_realization(vec![0.0; 10], vec![vec![]; 9]);
        assert!(event_membership(&short, &spec, 10).is_err());
    }

    #[test]
    fn spine_brood_is_never_empty() {
        let law = ReproLaw::default_brood();
        let mut rng = replica_stream(91, 0);
        for _ in 0..50_000 {
            let (brood, chosen) = tilted_brood(&law, &mut rng);
            assert!(!brood.is_empty());
            assert!(chosen < brood.entries.len());
            assert!(brood.entries[chosen].count >= 1.0);
        }
    }

    #[test]
    fn spine_increments_match_step_law_distribution() {
        // two-sample KS between spine increments and direct step samples
        let law = ReproLaw::default_brood();
        let step = StepLaw::default_law();
        let mut spine_samples = Vec::with_capacity(100_000);
        let mut rng = replica_stream(92, 0);
        for _ in 0..100 {
            let r = sample_spine_with(&law, 1_000, &mut rng).unwrap();
            spine_samples.extend(r.increments());
        }
        let mut rng = replica_stream(92, 1);
        let direct: Vec<f64> = (0..100_000).map(|_| step.sample(&mut rng)).collect();
        let (d, p) = ks_two_sample(&spine_samples, &direct).unwrap();
        assert!(p > 0.01, "KS distance {d}, p = {p}");
    }

    #[test]
    fn tilted_dyadic_doubles_the_down_pair_mass() {
        // tilted P(both children at -u) = theta^2 * 2 e^u
        let law = ReproLaw::dyadic();
        let (u, theta) = match law {
            ReproLaw::Dyadic(d) => (d.displacement, d.down_prob),
            _ => unreachable!(),
        };
        let expected = theta * theta * 2.0 * u.exp();
        assert!((expected - 0.03349364905389035).abs() < 1e-12);
        let mut rng = replica_stream(93, 0);
        let reps = 300_000u64;
        let mut hits = 0u64;
        for _ in 0..reps {
            let (brood, _) = tilted_brood(&law, &mut rng);
            if brood.entries.len() == 1
                && brood.entries[0].count == 2.0
                && brood.entries[0].displacement < 0.0
            {
                hits += 1;
            }
        }
        let (lo, hi) = wilson_interval(hits, reps, 0.999).unwrap();
        assert!(
            lo <= expected && expected <= hi,
            "[{lo}, {hi}] vs {expected}"
        );
    }

    #[test]
    fn tilted_brood_size_matches_size_biased_rounding_by_bin() {
        // tilted E[N | Y in bin] = (m^2 (1-f) + (m+1)^2 f) / lambda at the
        // bin center, up to binning error
        let brood_law = BroodLaw::default_law();
        let law = ReproLaw::Brood(brood_law);
        let mut rng = replica_stream(94, 0);
        let edges = [1.0, 1.2, 1.4, 1.6, 1.8];
        let mut accs = vec![RunningMoments::default(); edges.len() - 1];
        for _ in 0..2_000_000 {
            let (brood, _) = tilted_brood(&law, &mut rng);
            let e = brood.entries[0];
            for b in 0..edges.len() - 1 {
                if edges[b] <= e.displacement && e.displacement < edges[b + 1] {
                    accs[b].push(e.count);
                }
            }
        }
        for b in 0..edges.len() - 1 {
            let y = 0.5 * (edges[b] + edges[b + 1]);
            let lambda = y.exp();
            let m = lambda.floor();
            let f = lambda - m;
            let expected = (m * m * (1.0 - f) + (m + 1.0) * (m + 1.0) * f) / lambda;
            assert!(
                (accs[b].mean() - expected).abs() < 5.0 * accs[b].stderr() + 0.03,
                "bin {b}: {} vs {expected}",
                accs[b].mean()
            );
        }
    }

    #[test]
    fn spine_sampling_is_deterministic() {
        let law = ReproLaw::default_brood();
        let a = sample_spine(&law, 64, 95).unwrap();
        let b = sample_spine(&law, 64, 95).unwrap();
        assert_eq!(a, b);
        let c = sample_spine(&law, 64, 96).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spine_minimum_scales_like_the_walk_minimum() {
        // median(-min) / n^{1/alpha} is stable across n and agrees with the
        // direct walk, since the spine marginal is the walk's law
        let law = ReproLaw::default_brood();
        let step = StepLaw::default_law();
        let mut ratios = Vec::new();
        for (seed, n) in [(97u64, 256usize), (98, 1024)] {
            let mut spine_mins = Vec::new();
            let mut rng = replica_stream(seed, 0);
            for _ in 0..400 {
                let r = sample_spine_with(&law, n as u32, &mut rng).unwrap();
                spine_mins.push(-r.minimum());
            }
            let mut walk_mins = Vec::new();
            let mut rng = replica_stream(seed, 1);
            for _ in 0..400 {
                walk_mins.push(-step.walk(n, &mut rng).minimum());
            }
            let med = |xs: &mut Vec<f64>| {
                xs.sort_by(|a, b| a.total_cmp(b));
                xs[xs.len() / 2]
            };
            let spine_med = med(&mut spine_mins);
            let walk_med = med(&mut walk_mins);
            let scale = (n as f64).powf(1.0 / 1.5);
            assert!(
                (spine_med / walk_med - 1.0).abs() < 0.3,
                "n = {n}: spine median {spine_med} vs walk median {walk_med}"
            );
            ratios.push(spine_med / scale);
        }
        assert!(
            (ratios[0] / ratios[1] - 1.0).abs() < 0.3,
            "scaled medians not stable: {ratios:?}"
        );
    }

    #[test]
    fn size_biased_unit_functional_is_exactly_one() {
        let law = ReproLaw::default_brood();
        let rec = size_biased_estimate(&law, 8, SpineFunctional::One, 2_000, 99, None).unwrap();
        assert_eq!(rec.estimate, 1.0);
        assert_eq!(rec.ci_low, 1.0);
        assert_eq!(rec.ci_high, 1.0);
    }

    #[test]
    fn size_biased_min_matches_forward_restricted_martingale() {
        // tilted P(spine min >= -a) equals E[sum e^{-V} 1{path min >= -a}]
        let law = ReproLaw::default_brood();
        let a = 1.0;
        let n = 8;
        let spine = size_biased_estimate(
            &law,
            n,
            SpineFunctional::SpineMinAbove { a },
            30_000,
            100,
            None,
        )
        .unwrap();
        let policy = TruncationPolicy::unbiased_fanout(64, 200_000);
        let mut acc = RunningMoments::default();
        for rep in 0..6_000 {
            let run = crate::forward_sim::run_forward(&law, n, &policy, a, 100, rep).unwrap();
            acc.push(
                run.stats_at(n)
                    .map(|s| s.restricted_martingale)
                    .unwrap_or(0.0),
            );
        }
        let (lo, hi) = acc.ci(0.95).unwrap();
        assert!(
            intervals_overlap((spine.ci_low, spine.ci_high), (lo, hi)),
            "spine [{}, {}] vs forward [{lo}, {hi}]",
            spine.ci_low,
            spine.ci_high
        );
    }

    #[test]
    fn size_biased_bounded_terminal_matches_walk_expectation() {
        // the spine marginal is the walk, so the tilted mean of
        // e^{-(terminal)_+} equals the walk-side expectation directly
        let law = ReproLaw::default_brood();
        let step = StepLaw::default_law();
        let n = 8;
        let spine = size_biased_estimate(
            &law,
            n,
            SpineFunctional::BoundedTerminalWeight,
            30_000,
            101,
            None,
        )
        .unwrap();
        let mut acc = RunningMoments::default();
        let mut rng = replica_stream(101, 12_345);
        for _ in 0..30_000 {
            let path = step.walk(n as usize, &mut rng);
            acc.push((-path.terminal().max(0.0)).exp());
        }
        let (lo, hi) = acc.ci(0.95).unwrap();
        assert!(
            intervals_overlap((spine.ci_low, spine.ci_high), (lo, hi)),
            "spine [{}, {}] vs walk [{lo}, {hi}]",
            spine.ci_low,
            spine.ci_high
        );
    }

    #[test]
    fn inverse_martingale_requires_growth_options() {
        let law = ReproLaw::dyadic();
        assert!(
            size_biased_estimate(&law, 4, SpineFunctional::InverseMartingale, 10, 0, None)
                .is_err()
        );
    }

    #[test]
    fn dyadic_inverse_martingale_recovers_certain_survival() {
        // the dyadic system never dies, so the tilted mean of 1/W_n is the
        // survival probability 1
        let law = ReproLaw::dyadic();
        let opts = SpineGrowthOpts {
            policy: TruncationPolicy::new(CeilingRule::None, 100_000),
            max_brothers_per_step: 4_096,
        };
        let rec = size_biased_estimate(
            &law,
            6,
            SpineFunctional::InverseMartingale,
            4_000,
            102,
            Some(&opts),
        )
        .unwrap();
        assert!(
            rec.ci_low <= 1.0 && 1.0 <= rec.ci_high,
            "[{}, {}] misses 1",
            rec.ci_low,
            rec.ci_high
        );
    }

    #[test]
    fn brood_inverse_martingale_tracks_survival_probability() {
        let law = ReproLaw::default_brood();
        let policy = TruncationPolicy::new(CeilingRule::Constant(10.0), 4_000);
        let opts = SpineGrowthOpts {
            policy,
            max_brothers_per_step: 1_024,
        };
        let n = 5;
        let rec = size_biased_estimate(
            &law,
            n,
            SpineFunctional::InverseMartingale,
            800,
            103,
            Some(&opts),
        )
        .unwrap();
        let sr = crate::forward_sim::survival_runs(&law, n, &policy, 1.0, 103, 400).unwrap();
        let se = (sr.survival_rate * (1.0 - sr.survival_rate) / sr.attempts as f64).sqrt();
        let overlap = intervals_overlap(
            (rec.ci_low, rec.ci_high),
            (sr.survival_rate - 3.0 * se, sr.survival_rate + 3.0 * se),
        );
        assert!(
            overlap,
            "tilted inverse-martingale [{}, {}] vs survival {} +- {se}",
            rec.ci_low, rec.ci_high, sr.survival_rate
        );
    }

    #[test]
    fn forward_barrier_estimates_decrease_in_lambda() {
        let law = ReproLaw::default_brood();
        let opts = BarrierForwardOpts {
            max_n: 64,
            max_population: 2_000,
        };
        let n = 16;
        let lmax = (n as f64).ln() / 3.0;
        let mut estimates = Vec::new();
        for lambda in [0.0, 0.5 * lmax, lmax] {
            let spec = BarrierSpec::new(1.5, n, lambda, 5.0, 10.0).unwrap();
            let est = estimate_barrier_event(&law, &spec, BarrierMode::Forward, 600, 104, &opts)
                .unwrap();
            assert!(est.biased);
            estimates.push(est.record.estimate);
        }
        assert!(
            estimates[0] >= estimates[1] && estimates[1] >= estimates[2],
            "coupled forward estimates not ordered: {estimates:?}"
        );
        assert!(estimates[0] > 0.0, "event never hit at lambda = 0");
    }

    #[test]
    fn forward_barrier_monotone_in_slack_and_scale() {
        // widening the terminal window or the brother scale grows the event
        let law = ReproLaw::default_brood();
        let opts = BarrierForwardOpts {
            max_n: 64,
            max_population: 2_000,
        };
        let n = 16;
        let est = |k: f64, c: f64| {
            let spec = BarrierSpec::new(1.5, n, 0.5, k, c).unwrap();
            estimate_barrier_event(&law, &spec, BarrierMode::Forward, 500, 105, &opts)
                .unwrap()
                .record
                .estimate
        };
        assert!(est(2.0, 10.0) <= est(6.0, 10.0));
        assert!(est(5.0, 2.0) <= est(5.0, 20.0));
    }

    #[test]
    fn forward_mode_refuses_beyond_the_cost_guard() {
        let law = ReproLaw::default_brood();
        let spec = BarrierSpec::new(1.5, 512, 0.0, 5.0, 10.0).unwrap();
        let err = estimate_barrier_event(
            &law,
            &spec,
            BarrierMode::Forward,
            10,
            0,
            &BarrierForwardOpts::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("cost-guard"));
    }

    #[test]
    fn first_moment_proxy_decays_exponentially_in_lambda() {
        let law = ReproLaw::default_brood();
        let n = 64;
        let mut points = Vec::new();
        for lambda in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let spec = BarrierSpec::with_extended_lambda(1.5, n, lambda, 5.0, 10.0).unwrap();
            let est = estimate_barrier_event(
                &law,
                &spec,
                BarrierMode::FirstMoment,
                150_000,
                106,
                &BarrierForwardOpts::default(),
            )
            .unwrap();
            assert!(!est.biased);
            assert!(est.record.estimate > 0.0, "no mass at lambda {lambda}");
            points.push((lambda, est.record.estimate));
        }
        // log-estimate linear in lambda with slope -1 (coupled seeds)
        let logged: Vec<(f64, f64)> = points.iter().map(|&(l, v)| (l, v.ln())).collect();
        let fit = crate::stats::fit_line(&logged).unwrap();
        assert!(
            (fit.slope + 1.0).abs() <= 0.2,
            "proxy slope {} not within 0.2 of -1; points {points:?}",
            fit.slope
        );
    }

    #[test]
    fn dyadic_forward_barrier_matches_exact_recursion() {
        // exact oracle: dynamic programming over (level, lattice position,
        // latest compatible terminal), independent of the simulator
        let law = ReproLaw::dyadic();
        let spec = BarrierSpec::new(1.5, 8, 0.3, 5.0, 10.0).unwrap();
        let exact = dyadic_barrier_probability(&spec);
        let est = estimate_barrier_event(
            &law,
            &spec,
            BarrierMode::Forward,
            20_000,
            107,
            &BarrierForwardOpts {
                max_n: 16,
                max_population: 1_000_000, // dyadic trees stay small
            },
        )
        .unwrap();
        assert!(
            est.record.ci_low <= exact && exact <= est.record.ci_high,
            "forward [{}, {}] misses exact {exact}",
            est.record.ci_low,
            est.record.ci_high
        );
    }

    /// Exact probability of the barrier event for the dyadic law by
    /// recursion over (level, position, latest compatible terminal).
    fn dyadic_barrier_probability(spec: &BarrierSpec) -> f64 {
        use std::collections::HashMap;
        let toy = crate::reproduction::DyadicToyLaw::new();

        struct Ctx<'a> {
            spec: &'a BarrierSpec,
            u: f64,
            theta: f64,
            k_hi: u32,
            s: f64,
            memo: HashMap<(u32, i32, u32), f64>,
        }

        // probability that no candidate appears at or below a particle in
        // candidate state (level, lattice position m, latest terminal)
        fn no_hit(ctx: &mut Ctx, level: u32, m: i32, latest: u32) -> f64 {
            if level > ctx.spec.n && m as f64 * ctx.u <= ctx.s + ctx.spec.terminal_slack {
                return 0.0; // this node is a candidate: a hit for sure
            }
            if level >= ctx.k_hi {
                return 1.0;
            }
            if let Some(&v) = ctx.memo.get(&(level, m, latest)) {
                return v;
            }
            let child_floor = ctx.spec.level_floor(level + 1);
            let early = level <= ctx.spec.quarter();
            let early_bound =
                ctx.spec.brother_scale * (-ctx.spec.brother_exponent(level, ctx.k_hi)).exp();
            let parent_floor = ctx.spec.level_floor(level);
            let mut total = 0.0;
            for (d1, p1) in [(-1i32, ctx.theta), (1, 1.0 - ctx.theta)] {
                for (d2, p2) in [(-1i32, ctx.theta), (1, 1.0 - ctx.theta)] {
                    let prob = p1 * p2;
                    let mut factor = 1.0;
                    for (dc, ds) in [(d1, d2), (d2, d1)] {
                        let child_m = m + dc;
                        let child_pos = child_m as f64 * ctx.u;
                        if child_pos < child_floor {
                            continue; // pruned: never a candidate ancestor
                        }
                        let sib_pos = (m + ds) as f64 * ctx.u;
                        let excess = sib_pos - parent_floor;
                        let kappa = (1.0 + excess.max(0.0)) * (-excess).exp();
                        let child_latest = if early {
                            if kappa > early_bound {
                                continue;
                            }
                            latest
                        } else {
                            match ctx.spec.latest_terminal_for(kappa, level) {
                                Some(k) => latest.min(k),
                                None => continue,
                            }
                        };
                        if child_latest < level + 1 {
                            continue;
                        }
                        factor *= no_hit(ctx, level + 1, child_m, child_latest);
                    }
                    total += prob * factor;
                }
            }
            ctx.memo.insert((level, m, latest), total);
            total
        }

        let mut ctx = Ctx {
            spec,
            u: toy.displacement,
            theta: toy.down_prob,
            k_hi: spec.k_hi(),
            s: spec.target_height(),
            memo: HashMap::new(),
        };
        let k_hi = ctx.k_hi;
        1.0 - no_hit(&mut ctx, 0, 0, k_hi)
    }
}
