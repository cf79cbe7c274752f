//! Reproduction point-process laws in the boundary normalization.
//!
//! A law here describes the displacements of one particle's children
//! relative to the parent. Two families are provided:
//!
//! * [`BroodLaw`] — the main family. A brood is either empty or consists of
//!   `N` children all at a single displacement `Y`: sample `Y` from the
//!   location density `h(y) = p(y) e^y / lambda(y)` (with total mass `Z`,
//!   empty brood with probability `1 - Z`), then round the expected brood
//!   size `lambda(y) = max(1, e^y)` randomly so `E[N | Y = y] = lambda(y)`
//!   exactly. Here `p` is the step density of the associated walk. The
//!   weighted intensity `E[sum 1_{Y in dy} e^{-Y}]` then equals `p(y) dy`
//!   exactly, which yields the boundary identities (unit mean weight, zero
//!   weighted drift), the exact Pareto right tail, a vanishing left tail,
//!   and bounded total weight `X = N e^{-Y} <= 1 + e^{left_depth}`.
//!
//! * [`DyadicToyLaw`] — an exact-arithmetic oracle: always two i.i.d.
//!   children displaced by `±u` with `cosh u = 2` and down-probability
//!   `theta = e^{-u}/4`, calibrated so both boundary identities hold in
//!   closed form. Its displacement support is finite, so it deliberately
//!   lacks the heavy right tail; it exists to cross-check the simulators
//!   against enumerable exact values.
//!
//! The module also houses the many-to-one consistency oracle: expectations
//! of sums over generation-`n` particles equal single-walk expectations
//! weighted by `e^{S_n}`, checked by Monte Carlo on both sides for a closed
//! catalog of functionals.

use rand::distr::OpenClosed01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::{run_forward, TruncationPolicy};
use crate::numeric::adaptive_simpson;
use crate::rng::replica_stream;
use crate::stable_walk::{fit_tail_index, StepLaw, TailFit};
use crate::stats::{
    fit_loglog_slope, intervals_overlap, EstimateRecord, RunningMoments,
};

/// One brood: distinct displacements with multiplicities.
///
/// Multiplicities are kept as `f64`: sizes beyond 2^53 occur with small but
/// nonzero probability under the heavy-tailed law, and every statistic that
/// consumes a multiplicity weights it by `e^{-displacement}`, for which the
/// relative rounding at that magnitude is immaterial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Brood {
    pub entries: Vec<BroodEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroodEntry {
    pub displacement: f64,
    /// Number of children at this displacement. A non-finite count encodes
    /// a brood size of exactly `exp(displacement)`, which overflows f64 for
    /// displacements beyond ~709; at that magnitude the randomized rounding
    /// is below f64 resolution anyway, so the weighted statistics below use
    /// the exact limit.
    pub count: f64,
}

impl BroodEntry {
    /// `count * e^{-displacement}`.
    #[inline]
    pub fn weight(&self) -> f64 {
        if self.count.is_finite() {
            self.count * (-self.displacement).exp()
        } else {
            1.0
        }
    }
}

impl Brood {
    pub fn empty() -> Self {
        Brood { entries: Vec::new() }
    }

    pub fn total_count(&self) -> f64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(|e| e.count <= 0.0)
    }

    /// `sum e^{-displacement}` over all children.
    pub fn weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight()).sum()
    }

    /// `sum displacement * e^{-displacement}` over all children.
    pub fn weighted_displacement(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.displacement * e.weight())
            .sum()
    }

    /// `sum displacement_+ * e^{-displacement}` over all children.
    pub fn weighted_positive_displacement(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.displacement.max(0.0) * e.weight())
            .sum()
    }
}

/// Stack-allocated brood: both families emit at most two distinct
/// displacements, and the per-brood heap allocation of [`Brood`] dominates
/// tree-simulation cost, so the hot paths use this inline form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBrood {
    entries: [BroodEntry; 2],
    len: u8,
}

impl CompactBrood {
    pub const EMPTY: CompactBrood = CompactBrood {
        entries: [BroodEntry {
            displacement: 0.0,
            count: 0.0,
        }; 2],
        len: 0,
    };

    pub fn one(entry: BroodEntry) -> Self {
        CompactBrood {
            entries: [entry, entry],
            len: 1,
        }
    }

    pub fn two(a: BroodEntry, b: BroodEntry) -> Self {
        CompactBrood {
            entries: [a, b],
            len: 2,
        }
    }

    #[inline]
    pub fn entries(&self) -> &[BroodEntry] {
        &self.entries[..self.len as usize]
    }

    pub fn to_brood(self) -> Brood {
        Brood {
            entries: self.entries().to_vec(),
        }
    }
}

/// Main reproduction family built over a step law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroodLaw {
    pub base: StepLaw,
    /// Total mass `Z` of the location density; the brood is empty with
    /// probability `1 - Z`.
    pub birth_mass: f64,
    /// Mass of the negative-displacement part of the location density.
    neg_mass: f64,
}

impl BroodLaw {
    /// Construct the law, computing `Z` by adaptive quadrature of the
    /// location density to relative tolerance 1e-8.
    pub fn new(base: StepLaw) -> Result<Self> {
        // h(y) = p(y) e^y on y < 0 (lambda = 1 there); h = p on y >= floor.
        let d = base.left_depth;
        let uniform_height = (1.0 - base.right_mass) / d;
        let neg_mass = adaptive_simpson(&|y: f64| uniform_height * y.exp(), -d, 0.0, 1e-8)?;
        // the positive part of h equals the full Pareto component of p
        let birth_mass = neg_mass + base.right_mass;
        if !(0.0 < birth_mass && birth_mass <= 1.0) {
            return Err(Error::Numeric(format!(
                "location density mass {birth_mass} outside (0, 1]"
            )));
        }
        Ok(BroodLaw {
            base,
            birth_mass,
            neg_mass,
        })
    }

    pub fn default_law() -> Self {
        BroodLaw::new(StepLaw::default_law()).expect("default law is valid")
    }

    /// Expected brood size at displacement `y`: `max(1, e^y)`.
    #[inline]
    pub fn expected_children_at(&self, y: f64) -> f64 {
        y.exp().max(1.0)
    }

    /// Location density `h(y) = p(y) e^y / lambda(y)`.
    pub fn location_density(&self, y: f64) -> f64 {
        self.base.density(y) * y.exp() / self.expected_children_at(y)
    }

    /// Randomized rounding of `lambda`: `floor(lambda) + Bernoulli(frac)`,
    /// so the conditional mean is exactly `lambda`.
    #[inline]
    fn rounded_count<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> f64 {
        if lambda >= 2f64.powi(52) {
            // fractional part is below f64 resolution
            return lambda;
        }
        let base = lambda.floor();
        let frac = lambda - base;
        let u: f64 = rng.sample(OpenClosed01);
        if u <= frac {
            base + 1.0
        } else {
            base
        }
    }

    /// Draw one brood of displacements.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Brood {
        self.sample_compact(rng).to_brood()
    }

    /// Allocation-free form of [`BroodLaw::sample`].
    #[inline]
    pub fn sample_compact<R: Rng + ?Sized>(&self, rng: &mut R) -> CompactBrood {
        let u: f64 = rng.sample(OpenClosed01);
        if u > self.birth_mass {
            return CompactBrood::EMPTY;
        }
        let y = if u <= self.neg_mass {
            // truncated exponential on [-d, 0]: density proportional to e^y
            let d = self.base.left_depth;
            let v = u / self.neg_mass;
            let low = (-d).exp();
            (low + v * (1.0 - low)).ln()
        } else {
            // Pareto branch, identical to the step law's right component
            let v = (u - self.neg_mass) / self.base.right_mass;
            self.base.pareto_floor * v.powf(-1.0 / self.base.alpha)
        };
        let lambda = self.expected_children_at(y);
        let count = if y <= 0.0 {
            1.0 // lambda is exactly 1, no rounding draw needed
        } else {
            self.rounded_count(lambda, rng)
        };
        CompactBrood::one(BroodEntry {
            displacement: y,
            count,
        })
    }
}

/// Finite-support exact-arithmetic oracle law: two i.i.d. children at
/// displacement `±u`, `cosh u = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicToyLaw {
    /// Displacement magnitude `u = arccosh 2 = ln(2 + sqrt 3)`.
    pub displacement: f64,
    /// Probability of a `-u` displacement: `(2 - sqrt 3)/4 = e^{-u}/4`.
    pub down_prob: f64,
}

impl DyadicToyLaw {
    pub fn new() -> Self {
        let sqrt3 = 3f64.sqrt();
        DyadicToyLaw {
            displacement: (2.0 + sqrt3).ln(),
            down_prob: (2.0 - sqrt3) / 4.0,
        }
    }

    /// Draw one child displacement.
    #[inline]
    fn sample_child<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(OpenClosed01);
        if u <= self.down_prob {
            -self.displacement
        } else {
            self.displacement
        }
    }

    /// Draw one brood: exactly two i.i.d. children.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Brood {
        self.sample_compact(rng).to_brood()
    }

    /// Allocation-free form of [`DyadicToyLaw::sample`].
    #[inline]
    pub fn sample_compact<R: Rng + ?Sized>(&self, rng: &mut R) -> CompactBrood {
        let a = self.sample_child(rng);
        let b = self.sample_child(rng);
        if a == b {
            CompactBrood::one(BroodEntry {
                displacement: a,
                count: 2.0,
            })
        } else {
            CompactBrood::two(
                BroodEntry {
                    displacement: a,
                    count: 1.0,
                },
                BroodEntry {
                    displacement: b,
                    count: 1.0,
                },
            )
        }
    }

    /// Step of the implied one-dimensional walk: fair `±u`.
    #[inline]
    pub fn implied_walk_step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(OpenClosed01);
        if u <= 0.5 {
            -self.displacement
        } else {
            self.displacement
        }
    }
}

impl Default for DyadicToyLaw {
    fn default() -> Self {
        DyadicToyLaw::new()
    }
}

/// A reproduction law of either family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ReproLaw {
    Brood(BroodLaw),
    Dyadic(DyadicToyLaw),
}

impl ReproLaw {
    pub fn default_brood() -> Self {
        ReproLaw::Brood(BroodLaw::default_law())
    }

    pub fn dyadic() -> Self {
        ReproLaw::Dyadic(DyadicToyLaw::new())
    }

    /// Draw one brood of displacements relative to the parent.
    pub fn sample_brood<R: Rng + ?Sized>(&self, rng: &mut R) -> Brood {
        self.sample_brood_compact(rng).to_brood()
    }

    /// Allocation-free form of [`ReproLaw::sample_brood`].
    #[inline]
    pub fn sample_brood_compact<R: Rng + ?Sized>(&self, rng: &mut R) -> CompactBrood {
        match self {
            ReproLaw::Brood(law) => law.sample_compact(rng),
            ReproLaw::Dyadic(law) => law.sample_compact(rng),
        }
    }

    /// Draw one step of the associated walk.
    #[inline]
    pub fn walk_step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ReproLaw::Brood(law) => law.base.sample(rng),
            ReproLaw::Dyadic(law) => law.implied_walk_step(rng),
        }
    }

    /// Tail index of the walk step law, when the family has one.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ReproLaw::Brood(law) => Some(law.base.alpha),
            ReproLaw::Dyadic(_) => None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ReproLaw::Brood(_) => "brood",
            ReproLaw::Dyadic(_) => "dyadic",
        }
    }
}

/// Child positions of a parent at `parent_position` (convenience wrapper
/// materializing multiplicities; intended for small broods and tests).
pub fn sample_brood_positions<R: Rng + ?Sized>(
    law: &ReproLaw,
    parent_position: f64,
    rng: &mut R,
) -> Vec<f64> {
    let brood = law.sample_brood(rng);
    let mut out = Vec::new();
    for e in &brood.entries {
        let n = e.count.min(1e7) as usize;
        for _ in 0..n {
            out.push(parent_position + e.displacement);
        }
    }
    out
}

/// One row of a condition report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub reps: u64,
    pub seed: u64,
    pub note: String,
}

/// Monte Carlo report on the boundary and tail conditions of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub family: String,
    pub rows: Vec<ConditionRow>,
    /// Fitted slope of `log E[sum 1_{Y >= y} e^{-Y}]` against `log y`, with
    /// its standard error, when the tail is not identically zero.
    pub tail_slope: Option<(f64, f64)>,
    pub reps: u64,
    pub seed: u64,
}

/// Estimate the defining conditions of a reproduction law by Monte Carlo:
/// the boundary identities, the weighted right-tail decay over `y_grid`,
/// the left-tail bound, and the two log-moment conditions.
pub fn check_conditions(
    law: &ReproLaw,
    reps: u64,
    y_grid: &[f64],
    master_seed: u64,
) -> Result<ConditionReport> {
    if reps < 10_000 {
        return Err(Error::Config(format!(
            "condition checks need reps >= 10^4, got {reps}"
        )));
    }
    let mut rng = replica_stream(master_seed, 0);
    let mut weight = RunningMoments::default();
    let mut drift = RunningMoments::default();
    let mut x_moment = RunningMoments::default();
    let mut x_tilde_moment = RunningMoments::default();
    let mut right_tail: Vec<RunningMoments> = vec![RunningMoments::default(); y_grid.len()];
    let mut left_tail: Vec<RunningMoments> = vec![RunningMoments::default(); y_grid.len()];
    let alpha = law.alpha().unwrap_or(1.5);

    for _ in 0..reps {
        let brood = law.sample_brood(&mut rng);
        let w = brood.weight();
        weight.push(w);
        drift.push(brood.weighted_displacement());
        let x_tilde = brood.weighted_positive_displacement();
        x_moment.push(if w > 0.0 {
            w * w.ln().max(0.0).powf(alpha)
        } else {
            0.0
        });
        x_tilde_moment.push(if x_tilde > 0.0 {
            x_tilde * x_tilde.ln().max(0.0).powf(alpha - 1.0)
        } else {
            0.0
        });
        for (i, &y) in y_grid.iter().enumerate() {
            let mut above = 0.0;
            let mut below = 0.0;
            for e in &brood.entries {
                if e.displacement >= y {
                    above += e.weight();
                }
                if e.displacement <= -y {
                    below += e.weight();
                }
            }
            right_tail[i].push(above);
            left_tail[i].push(below);
        }
    }

    let mut rows = Vec::new();
    let mut push = |label: &str, m: &RunningMoments, target: Option<f64>, note: String| {
        rows.push(ConditionRow {
            label: label.to_string(),
            estimate: m.mean(),
            stderr: m.stderr(),
            target,
            reps,
            seed: master_seed,
            note,
        });
    };
    push("mean_weight", &weight, Some(1.0), String::new());
    push(
        "mean_weighted_displacement",
        &drift,
        Some(0.0),
        String::new(),
    );
    push(
        "x_log_moment",
        &x_moment,
        None,
        "E[X (log+ X)^alpha], finite under the moment condition".to_string(),
    );
    push(
        "x_tilde_log_moment",
        &x_tilde_moment,
        None,
        "E[X~ (log+ X~)^(alpha-1)], finite under the moment condition".to_string(),
    );
    for (i, &y) in y_grid.iter().enumerate() {
        let target = match law {
            ReproLaw::Brood(b) if y >= b.base.pareto_floor => {
                Some(b.base.tail_constant * y.powf(-b.base.alpha))
            }
            _ => None,
        };
        rows.push(ConditionRow {
            label: format!("right_tail_weight[y={y}]"),
            estimate: right_tail[i].mean(),
            stderr: right_tail[i].stderr(),
            target,
            reps,
            seed: master_seed,
            note: String::new(),
        });
        let left_note = match law {
            ReproLaw::Brood(b) if y > b.base.left_depth => {
                "exact zero beyond the left support depth".to_string()
            }
            ReproLaw::Dyadic(d) if y > d.displacement => {
                "exact zero beyond the displacement magnitude".to_string()
            }
            _ => String::new(),
        };
        rows.push(ConditionRow {
            label: format!("left_tail_weight[y={y}]"),
            estimate: left_tail[i].mean(),
            stderr: left_tail[i].stderr(),
            target: None,
            reps,
            seed: master_seed,
            note: left_note,
        });
    }

    // Tail slope fit over the grid points with positive estimates.
    let tail_points: Vec<(f64, f64)> = y_grid
        .iter()
        .zip(right_tail.iter())
        .filter(|&(_, m)| m.mean() > 0.0)
        .map(|(&y, m)| (y, m.mean()))
        .collect();
    let tail_slope = match law {
        ReproLaw::Dyadic(d) => {
            rows.push(ConditionRow {
                label: "right_tail_support".to_string(),
                estimate: 0.0,
                stderr: 0.0,
                target: None,
                reps,
                seed: master_seed,
                note: format!(
                    "finite support: weighted tail is exactly zero beyond u = {:.6}; \
                     violates the heavy-tail condition by design (oracle law)",
                    d.displacement
                ),
            });
            None
        }
        ReproLaw::Brood(_) => {
            if tail_points.len() >= 3 {
                let fit = fit_loglog_slope(&tail_points)?;
                Some((fit.slope, fit.slope_stderr))
            } else {
                None
            }
        }
    };

    Ok(ConditionReport {
        family: law.family_name().to_string(),
        rows,
        tail_slope,
        reps,
        seed: master_seed,
    })
}

/// Brood-implied Hill estimate of the right tail index: brood locations
/// conditioned positive are exactly Pareto for the main family.
pub fn brood_tail_hill(
    law: &ReproLaw,
    samples: u64,
    k_order: usize,
    master_seed: u64,
) -> Result<TailFit> {
    let mut rng = replica_stream(master_seed, 1);
    let mut positives = Vec::new();
    let mut drawn = 0u64;
    while positives.len() < samples as usize && drawn < samples.saturating_mul(64) {
        let brood = law.sample_brood(&mut rng);
        drawn += 1;
        for e in &brood.entries {
            if e.displacement > 0.0 {
                positives.push(e.displacement);
            }
        }
    }
    fit_tail_index(&positives, k_order)
}

/// Closed catalog of path functionals for the many-to-one identity. Every
/// entry is integrable against `e^{S_n}`: weighted entries carry the
/// `e^{-s_n}` factor, and the unweighted count is restricted to a bounded
/// lower set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum PathFunctional {
    /// `e^{-s_n}`: the additive martingale; both sides have mean 1.
    UnitWeight,
    /// `e^{-s_n} 1{min_i s_i >= -a}`: the restricted martingale.
    WeightedMinAbove { a: f64 },
    /// `e^{-s_n} 1{s_n <= b}`: weighted mass of low leaves.
    WeightedLeafBelow { b: f64 },
    /// `1{s_n <= b}`: expected number of leaves at or below `b`.
    LeafCountBelow { b: f64 },
}

impl PathFunctional {
    pub fn label(&self) -> String {
        match *self {
            PathFunctional::UnitWeight => "unit_weight".to_string(),
            PathFunctional::WeightedMinAbove { a } => format!("weighted_min_above[a={a}]"),
            PathFunctional::WeightedLeafBelow { b } => format!("weighted_leaf_below[b={b}]"),
            PathFunctional::LeafCountBelow { b } => format!("leaf_count_below[b={b}]"),
        }
    }

    /// Tree-side summand for one generation-`n` particle: `g(V-path)`.
    #[inline]
    pub fn tree_weight(&self, terminal: f64, path_min: f64) -> f64 {
        match *self {
            PathFunctional::UnitWeight => (-terminal).exp(),
            PathFunctional::WeightedMinAbove { a } => {
                if path_min >= -a {
                    (-terminal).exp()
                } else {
                    0.0
                }
            }
            PathFunctional::WeightedLeafBelow { b } => {
                if terminal <= b {
                    (-terminal).exp()
                } else {
                    0.0
                }
            }
            PathFunctional::LeafCountBelow { b } => {
                if terminal <= b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Tree-side summand for a particle carrying weighted mass
    /// `mass = w e^{-terminal}` (subsampling multiplicity `w`); expressed
    /// through the mass so huge multiplicities never overflow.
    #[inline]
    pub fn weighted_tree_value(&self, mass: f64, terminal: f64, path_min: f64) -> f64 {
        match *self {
            PathFunctional::UnitWeight => mass,
            PathFunctional::WeightedMinAbove { a } => {
                if path_min >= -a {
                    mass
                } else {
                    0.0
                }
            }
            PathFunctional::WeightedLeafBelow { b } => {
                if terminal <= b {
                    mass
                } else {
                    0.0
                }
            }
            PathFunctional::LeafCountBelow { b } => {
                if terminal <= b {
                    mass * terminal.exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Walk-side integrand `e^{s_n} g(S-path)`, simplified so the weighted
    /// entries never multiply large exponentials.
    #[inline]
    pub fn walk_integrand(&self, terminal: f64, path_min: f64) -> f64 {
        match *self {
            PathFunctional::UnitWeight => 1.0,
            PathFunctional::WeightedMinAbove { a } => {
                if path_min >= -a {
                    1.0
                } else {
                    0.0
                }
            }
            PathFunctional::WeightedLeafBelow { b } => {
                if terminal <= b {
                    1.0
                } else {
                    0.0
                }
            }
            PathFunctional::LeafCountBelow { b } => {
                if terminal <= b {
                    terminal.exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Result of one many-to-one consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtoCheck {
    pub functional: String,
    pub n: u32,
    pub tree_side: EstimateRecord,
    pub walk_side: EstimateRecord,
    pub consistent: bool,
}

/// Hard limit on the tree-side generation count.
pub const MTO_TREE_DEPTH_LIMIT: u32 = 10;

/// Monte Carlo check of the many-to-one identity: the tree side estimates
/// `E[sum over generation-n particles of g]` by forward simulation, the walk
/// side estimates `E[e^{S_n} g(S_1..S_n)]`, and the two 95% intervals must
/// overlap.
pub fn many_to_one_check(
    law: &ReproLaw,
    functional: PathFunctional,
    n: u32,
    tree_reps: u64,
    walk_reps: u64,
    policy: &TruncationPolicy,
    master_seed: u64,
) -> Result<MtoCheck> {
    if n == 0 || n > MTO_TREE_DEPTH_LIMIT {
        return Err(Error::Config(format!(
            "tree-side evaluation supports 1 <= n <= {MTO_TREE_DEPTH_LIMIT}, got {n}"
        )));
    }
    if tree_reps == 0 || walk_reps == 0 {
        return Err(Error::Config("many-to-one check needs reps >= 1".into()));
    }

    // Tree side: forward simulation, one replica per tree.
    let mut tree_acc = RunningMoments::default();
    for rep in 0..tree_reps {
        let run = run_forward(law, n, policy, 0.0, master_seed, rep)?;
        let value = match run.generation_at(n) {
            Some(generation) => (0..generation.population())
                .map(|i| {
                    functional.weighted_tree_value(
                        generation.mass[i],
                        generation.positions[i],
                        generation.path_min[i],
                    )
                })
                .sum(),
            None => 0.0, // extinct before n: empty sum
        };
        tree_acc.push(value);
    }
    let (t_lo, t_hi) = tree_acc.ci(0.95)?;
    let tree_side = EstimateRecord {
        kind: format!("tree:{}", functional.label()),
        params: format!("family={}", law.family_name()),
        n: n as u64,
        reps: tree_reps,
        estimate: tree_acc.mean(),
        ci_low: t_lo,
        ci_high: t_hi,
        seed: master_seed,
    };

    // Walk side: stream the associated walk.
    let mut walk_acc = RunningMoments::default();
    let mut rng = replica_stream(master_seed, u64::MAX);
    for _ in 0..walk_reps {
        let mut s = 0.0;
        let mut path_min = 0.0f64;
        for _ in 0..n {
            s += law.walk_step(&mut rng);
            path_min = path_min.min(s);
        }
        walk_acc.push(functional.walk_integrand(s, path_min));
    }
    let (w_lo, w_hi) = walk_acc.ci(0.95)?;
    let walk_side = EstimateRecord {
        kind: format!("walk:{}", functional.label()),
        params: format!("family={}", law.family_name()),
        n: n as u64,
        reps: walk_reps,
        estimate: walk_acc.mean(),
        ci_low: w_lo,
        ci_high: w_hi,
        seed: master_seed,
    };

    let consistent = intervals_overlap((t_lo, t_hi), (w_lo, w_hi));
    Ok(MtoCheck {
        functional: functional.label(),
        n,
        tree_side,
        walk_side,
        consistent,
    })
}

/// Exact tree-side expectation `E[sum over generation-n particles of g]`
/// for the dyadic toy law, by enumeration over all sign paths (linearity
/// reduces the tree sum to `2^n` times a single-lineage expectation).
pub fn dyadic_exact_expectation(functional: PathFunctional, n: u32) -> Result<f64> {
    if n == 0 || n > 20 {
        return Err(Error::Config(format!(
            "exact dyadic enumeration supports 1 <= n <= 20, got {n}"
        )));
    }
    let law = DyadicToyLaw::new();
    let mut total = 0.0;
    let paths = 1u64 << n;
    for bits in 0..paths {
        let mut position = 0.0;
        let mut path_min = 0.0f64;
        let mut prob = 1.0;
        for i in 0..n {
            let down = (bits >> i) & 1 == 1;
            if down {
                position -= law.displacement;
                prob *= law.down_prob;
            } else {
                position += law.displacement;
                prob *= 1.0 - law.down_prob;
            }
            path_min = path_min.min(position);
        }
        total += prob * functional.tree_weight(position, path_min);
    }
    Ok(total * 2f64.powi(n as i32))
}
