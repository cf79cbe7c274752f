//! The associated one-dimensional random walk.
//!
//! The step law is a fixed two-component family chosen so that every tail
//! condition the rest of the crate relies on holds in closed form: a Pareto
//! right tail with index `alpha` starting at `pareto_floor`, and a uniform
//! left component on `[-left_depth, 0]`. The mixture weight is calibrated so
//! the step has mean exactly zero, which places the walk in the domain of
//! attraction of a spectrally positive stable law. The right tail satisfies
//! `P(S_1 >= y) = tail_constant * y^{-alpha}` exactly for `y >=
//! pareto_floor`, and the left tail vanishes beyond `left_depth`.
//!
//! Sampling is by inverse CDF with a single uniform per step: the same
//! uniform selects the component and positions the sample inside it, so a
//! fixed seed always consumes a fixed stream offset.

use rand::distr::OpenClosed01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{wilson_interval, EstimateRecord};

/// Mean-zero step law: Pareto right tail, uniform left part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    /// Tail index, in (1, 2).
    pub alpha: f64,
    /// Lower cutoff of the Pareto component (position units, > 0).
    pub pareto_floor: f64,
    /// Depth of the uniform left component (position units, > 0).
    pub left_depth: f64,
    /// Probability mass of the Pareto component (derived).
    pub right_mass: f64,
    /// Right-tail constant: `P(S_1 >= y) = tail_constant * y^{-alpha}` for
    /// `y >= pareto_floor` (derived).
    pub tail_constant: f64,
}

impl StepLaw {
    /// Build a step law from `(alpha, pareto_floor, left_depth)`.
    ///
    /// The Pareto mass is `right_mass = (d/2) / (d/2 + x_m * alpha /
    /// (alpha - 1))` with `x_m = pareto_floor`, `d = left_depth`, the unique
    /// weight for which the density integrates to mean zero.
    pub fn new(alpha: f64, pareto_floor: f64, left_depth: f64) -> Result<Self> {
        if !(1.0 < alpha && alpha < 2.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in (1,2), got {alpha}"
            )));
        }
        if !(pareto_floor > 0.0) || !pareto_floor.is_finite() {
            return Err(Error::Domain(format!(
                "pareto_floor must be positive, got {pareto_floor}"
            )));
        }
        if !(left_depth > 0.0) || !left_depth.is_finite() {
            return Err(Error::Domain(format!(
                "left_depth must be positive, got {left_depth}"
            )));
        }
        let right_mean = pareto_floor * alpha / (alpha - 1.0);
        let right_mass = (left_depth / 2.0) / (left_depth / 2.0 + right_mean);
        let tail_constant = right_mass * pareto_floor.powf(alpha);
        Ok(StepLaw {
            alpha,
            pareto_floor,
            left_depth,
            right_mass,
            tail_constant,
        })
    }

    /// The default law used by presets: alpha 3/2, floor 1, depth 2.
    pub fn default_law() -> Self {
        StepLaw::new(1.5, 1.0, 2.0).expect("default parameters are valid")
    }

    /// Step density.
    pub fn density(&self, s: f64) -> f64 {
        if s >= self.pareto_floor {
            self.right_mass * self.alpha * self.pareto_floor.powf(self.alpha)
                / s.powf(self.alpha + 1.0)
        } else if (-self.left_depth..=0.0).contains(&s) {
            (1.0 - self.right_mass) / self.left_depth
        } else {
            0.0
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, s: f64) -> f64 {
        if s < -self.left_depth {
            0.0
        } else if s <= 0.0 {
            (1.0 - self.right_mass) * (s + self.left_depth) / self.left_depth
        } else if s < self.pareto_floor {
            1.0 - self.right_mass
        } else {
            1.0 - self.tail_constant * s.powf(-self.alpha)
        }
    }

    /// Exact right tail `P(S_1 >= y)` for `y >= pareto_floor`.
    pub fn right_tail(&self, y: f64) -> f64 {
        if y <= self.pareto_floor {
            // below the floor the tail is no longer a pure power
            1.0 - self.cdf(y)
        } else {
            self.tail_constant * y.powf(-self.alpha)
        }
    }

    /// Draw one step. Consumes exactly one uniform from the stream.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(OpenClosed01);
        self.sample_from_uniform(u)
    }

    /// Inverse-CDF map from a single uniform in (0, 1].
    #[inline]
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        if u <= self.right_mass {
            // Pareto branch: floor * U^{-1/alpha} with U in (0, 1].
            let v = u / self.right_mass;
            self.pareto_floor * v.powf(-1.0 / self.alpha)
        } else {
            // Uniform branch: -depth * U with U in (0, 1].
            let v = (u - self.right_mass) / (1.0 - self.right_mass);
            -self.left_depth * v
        }
    }

    /// Simulate a walk path of `n` steps with running minima.
    pub fn walk<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> WalkPath {
        let mut increments = Vec::with_capacity(n);
        for _ in 0..n {
            increments.push(self.sample(rng));
        }
        WalkPath::from_increments(&increments)
    }
}

/// A walk path with partial sums and running minima maintained
/// incrementally.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub increments: Vec<f64>,
    /// Positions `S_0 = 0, ..., S_n` (length `n + 1`).
    pub positions: Vec<f64>,
    /// Running minima `min_{0<=j<=i} S_j` (length `n + 1`).
    pub running_min: Vec<f64>,
}

impl WalkPath {
    pub fn from_increments(increments: &[f64]) -> Self {
        let mut positions = Vec::with_capacity(increments.len() + 1);
        let mut running_min = Vec::with_capacity(increments.len() + 1);
        positions.push(0.0);
        running_min.push(0.0);
        let mut s = 0.0;
        let mut m = 0.0f64;
        for &dx in increments {
            s += dx;
            m = m.min(s);
            positions.push(s);
            running_min.push(m);
        }
        WalkPath {
            increments: increments.to_vec(),
            positions,
            running_min,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn terminal(&self) -> f64 {
        *self.positions.last().expect("positions never empty")
    }

    pub fn minimum(&self) -> f64 {
        *self.running_min.last().expect("running_min never empty")
    }
}

/// Barrier-crossing events for the walk, with the classical ballot-type
/// polynomial decay in `n`. Non-integer index bounds round down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BallotEvent {
    /// `min_{0<=i<=n} S_i >= -a`: the walk stays above a fixed barrier.
    /// Decays like `n^{-1/alpha}`.
    StaysAbove { a: f64 },
    /// `max_{0<=i<=n} S_i <= a`: the reflected walk stays above `-a`.
    /// Decays like `n^{-(1-1/alpha)}`.
    MaxBelow { a: f64 },
    /// `S_n <= b` and `min S_i >= -a`: low endpoint with a floor.
    /// Decays like `n^{-1-1/alpha}`.
    EndBelowStaysAbove { a: f64, b: f64 },
    /// Floor `-a` on the first `floor(lambda n)` steps, floor `b` on
    /// `[lambda n, n]`, endpoint in `[b + u, b + v]`.
    BandedEndWindow {
        a: f64,
        b: f64,
        u: f64,
        v: f64,
        lambda: f64,
    },
    /// Floor `-a` throughout, strictly above `b` on `[lambda n, n)`, and
    /// `S_n <= b`: a late first descent below `b`.
    LateDescentBelow { a: f64, b: f64, lambda: f64 },
}

impl BallotEvent {
    pub fn validate(&self) -> Result<()> {
        let check_a = |a: f64| {
            if a >= 0.0 && a.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("ballot event needs a >= 0, got {a}")))
            }
        };
        let check_b = |a: f64, b: f64| {
            if b >= -a && b.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("ballot event needs b >= -a, got b = {b}, a = {a}")))
            }
        };
        let check_lambda = |l: f64| {
            if 0.0 < l && l < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "ballot event needs 0 < lambda < 1, got {l}"
                )))
            }
        };
        match *self {
            BallotEvent::StaysAbove { a } | BallotEvent::MaxBelow { a } => check_a(a),
            BallotEvent::EndBelowStaysAbove { a, b } => {
                check_a(a)?;
                check_b(a, b)
            }
            BallotEvent::BandedEndWindow { a, b, u, v, lambda } => {
                check_a(a)?;
                check_b(a, b)?;
                check_lambda(lambda)?;
                if 0.0 <= u && u <= v {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "ballot event needs 0 <= u <= v, got u = {u}, v = {v}"
                    )))
                }
            }
            BallotEvent::LateDescentBelow { a, b, lambda } => {
                check_a(a)?;
                check_b(a, b)?;
                check_lambda(lambda)
            }
        }
    }

    fn label(&self) -> &'static str {
        match self {
            BallotEvent::StaysAbove { .. } => "stays_above",
            BallotEvent::MaxBelow { .. } => "max_below",
            BallotEvent::EndBelowStaysAbove { .. } => "end_below_stays_above",
            BallotEvent::BandedEndWindow { .. } => "banded_end_window",
            BallotEvent::LateDescentBelow { .. } => "late_descent_below",
        }
    }

    fn params_string(&self) -> String {
        match *self {
            BallotEvent::StaysAbove { a } | BallotEvent::MaxBelow { a } => format!("a={a}"),
            BallotEvent::EndBelowStaysAbove { a, b } => format!("a={a} b={b}"),
            BallotEvent::BandedEndWindow { a, b, u, v, lambda } => {
                format!("a={a} b={b} u={u} v={v} lambda={lambda}")
            }
            BallotEvent::LateDescentBelow { a, b, lambda } => {
                format!("a={a} b={b} lambda={lambda}")
            }
        }
    }

    /// Evaluate the event indicator on one streamed walk of length `n`.
    pub fn indicator<R: Rng + ?Sized>(&self, law: &StepLaw, n: usize, rng: &mut R) -> bool {
        match *self {
            BallotEvent::StaysAbove { a } => {
                // early exit never reuses draws: the next replica simply
                // continues the stream
                let mut s = 0.0;
                for _ in 0..n {
                    s += law.sample(rng);
                    if s < -a {
                        return false;
                    }
                }
                true
            }
            BallotEvent::MaxBelow { a } => {
                let mut s = 0.0;
                for _ in 0..n {
                    s += law.sample(rng);
                    if s > a {
                        return false;
                    }
                }
                true
            }
            BallotEvent::EndBelowStaysAbove { a, b } => {
                let mut s = 0.0;
                for _ in 0..n {
                    s += law.sample(rng);
                    if s < -a {
                        return false;
                    }
                }
                s <= b
            }
            BallotEvent::BandedEndWindow { a, b, u, v, lambda } => {
                let split = ((lambda * n as f64).floor() as usize).min(n);
                // S_0 = 0 enters the second window when the split is 0
                if split == 0 && 0.0 < b {
                    return false;
                }
                let mut s = 0.0;
                for i in 1..=n {
                    s += law.sample(rng);
                    if i <= split && s < -a {
                        return false;
                    }
                    if i >= split && s < b {
                        return false;
                    }
                }
                (b + u..=b + v).contains(&s)
            }
            BallotEvent::LateDescentBelow { a, b, lambda } => {
                let split = ((lambda * n as f64).floor() as usize).min(n);
                let mut s = 0.0;
                // the walk may not dip below b before n, starting the
                // strict window at floor(lambda n); S_0 = 0 counts when
                // split == 0
                if split == 0 && 0.0 <= b {
                    return false;
                }
                for i in 1..=n {
                    s += law.sample(rng);
                    if s < -a {
                        return false;
                    }
                    if i >= split && i < n && s <= b {
                        return false;
                    }
                }
                s <= b
            }
        }
    }
}

/// Monte Carlo estimate of a ballot event probability with a Wilson score
/// interval at the given confidence.
pub fn ballot_probability<R: Rng + ?Sized>(
    law: &StepLaw,
    event: BallotEvent,
    n: usize,
    reps: u64,
    confidence: f64,
    rng: &mut R,
    seed_label: u64,
) -> Result<EstimateRecord> {
    if reps == 0 {
        return Err(Error::Config("ballot estimate needs reps >= 1".into()));
    }
    event.validate()?;
    let mut hits = 0u64;
    for _ in 0..reps {
        if event.indicator(law, n, rng) {
            hits += 1;
        }
    }
    let (lo, hi) = wilson_interval(hits, reps, confidence)?;
    Ok(EstimateRecord {
        kind: event.label().to_string(),
        params: event.params_string(),
        n: n as u64,
        reps,
        estimate: hits as f64 / reps as f64,
        ci_low: lo,
        ci_high: hi,
        seed: seed_label,
    })
}

/// Hill estimate of a power-law tail index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub order: usize,
}

/// Hill estimator over the `k_order` largest positive order statistics.
pub fn fit_tail_index(samples: &[f64], k_order: usize) -> Result<TailFit> {
    if k_order == 0 {
        return Err(Error::Config("hill estimator needs k_order >= 1".into()));
    }
    let mut positive: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
    if positive.len() < k_order + 1 {
        return Err(Error::InsufficientData(format!(
            "hill estimator with k_order {k_order} needs at least {} positive samples, got {}",
            k_order + 1,
            positive.len()
        )));
    }
    positive.sort_by(|a, b| b.total_cmp(a));
    let pivot = positive[k_order];
    let log_sum: f64 = positive[..k_order]
        .iter()
        .map(|&x| (x / pivot).ln())
        .sum();
    if log_sum <= 0.0 {
        return Err(Error::Numeric(
            "hill estimator saw zero log-spacings (degenerate sample)".into(),
        ));
    }
    let alpha_hat = k_order as f64 / log_sum;
    Ok(TailFit {
        alpha_hat,
        stderr: alpha_hat / (k_order as f64).sqrt(),
        order: k_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;
    use crate::rng::replica_stream;
    use crate::stats::ks_distance_to_cdf;
    use proptest::prelude::*;

    #[test]
    fn default_law_matches_closed_form_calibration() {
        let law = StepLaw::new(1.5, 1.0, 2.0).unwrap();
        assert!((law.right_mass - 0.25).abs() < 1e-15);
        assert!((law.tail_constant - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wider_left_part_balances_at_half() {
        // d/2 = 3 equals x_m * alpha / (alpha - 1) = 3
        let law = StepLaw::new(1.5, 1.0, 6.0).unwrap();
        assert!((law.right_mass - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_boundary_is_rejected() {
        let err = StepLaw::new(2.0, 1.0, 2.0).unwrap_err();
        assert!(err.to_string().contains("alpha must lie in (1,2)"));
        assert!(StepLaw::new(1.0, 1.0, 2.0).is_err());
        assert!(StepLaw::new(1.5, 0.0, 2.0).is_err());
        assert!(StepLaw::new(1.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn density_integrates_to_one_with_mean_zero() {
        let law = StepLaw::new(1.5, 1.0, 2.0).unwrap();
        // left part exactly
        let left_mass =
            adaptive_simpson(&|s| law.density(s), -law.left_depth, 0.0, 1e-12).unwrap();
        assert!((left_mass - 0.75).abs() < 1e-10);
        // right part via quadrature out to a far cutoff plus the exact tail
        let right_mass =
            adaptive_simpson(&|s| law.density(s), law.pareto_floor, 1e6, 1e-10).unwrap()
                + law.right_tail(1e6);
        assert!((left_mass + right_mass - 1.0).abs() < 1e-8);
        // mean zero by quadrature: the tail beyond the cutoff contributes
        // alpha/(alpha-1) * c * y^{1-alpha}
        let left_mean = adaptive_simpson(&|s| s * law.density(s), -2.0, 0.0, 1e-12).unwrap();
        let right_mean =
            adaptive_simpson(&|s| s * law.density(s), 1.0, 1e8, 1e-10).unwrap()
                + law.alpha / (law.alpha - 1.0) * law.tail_constant * 1e8f64.powf(1.0 - law.alpha);
        assert!(
            (left_mean + right_mean).abs() < 1e-10,
            "mean = {}",
            left_mean + right_mean
        );
    }

    #[test]
    fn samples_respect_support_and_mean() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(11, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let s = law.sample(&mut rng);
            assert!(
                !(0.0 < s && s < law.pareto_floor) && s >= -law.left_depth,
                "sample {s} outside support"
            );
            sum += s;
            sumsq += s * s;
        }
        let mean = sum / n as f64;
        let sd = (sumsq / n as f64 - mean * mean).sqrt();
        // heavy tail: the sample mean converges slowly, so the band is the
        // one stated for the estimator, 4 sd / 10^3
        assert!(mean.abs() < 4.0 * sd / 1e3, "mean {mean}, sd {sd}");
    }

    #[test]
    fn empirical_tail_matches_exact_power() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(12, 0);
        let n = 1_000_000usize;
        let mut hits = 0u64;
        for _ in 0..n {
            if law.sample(&mut rng) >= 10.0 {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let exact = 0.25 * 10f64.powf(-1.5); // ~ 0.0079
        assert!((p_hat - exact).abs() < 4.0 * (exact / n as f64).sqrt() + 1e-5);
    }

    #[test]
    fn empirical_cdf_matches_closed_form() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(13, 0);
        let samples: Vec<f64> = (0..1_000_000).map(|_| law.sample(&mut rng)).collect();
        let d = ks_distance_to_cdf(&samples, |x| law.cdf(x)).unwrap();
        assert!(d < 0.005, "KS distance {d}");
    }

    #[test]
    fn empty_walk_is_trivial() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(1, 0);
        let path = law.walk(0, &mut rng);
        assert_eq!(path.positions, vec![0.0]);
        assert_eq!(path.minimum(), 0.0);
    }

    #[test]
    fn walks_are_deterministic_per_seed() {
        let law = StepLaw::default_law();
        let a = law.walk(64, &mut replica_stream(5, 3));
        let b = law.walk(64, &mut replica_stream(5, 3));
        assert_eq!(a, b);
        let c = law.walk(64, &mut replica_stream(5, 4));
        assert_ne!(a, c);
    }

    #[test]
    fn forced_increments_give_expected_minima() {
        let law = StepLaw::default_law();
        let path = WalkPath::from_increments(&[law.pareto_floor, -law.left_depth]);
        let expected = 0f64
            .min(law.pareto_floor)
            .min(law.pareto_floor - law.left_depth);
        assert_eq!(path.minimum(), expected);
        assert_eq!(path.positions.len(), 3);
        // running minimum is nonincreasing
        for w in path.running_min.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_step_stays_above_zero_has_pareto_mass() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(21, 0);
        let rec = ballot_probability(
            &law,
            BallotEvent::StaysAbove { a: 0.0 },
            1,
            200_000,
            0.95,
            &mut rng,
            21,
        )
        .unwrap();
        assert!(
            rec.ci_low <= 0.25 && 0.25 <= rec.ci_high,
            "interval [{}, {}] misses 0.25",
            rec.ci_low,
            rec.ci_high
        );
    }

    #[test]
    fn unreachable_barrier_gives_probability_one() {
        let law = StepLaw::default_law();
        let n = 32;
        let mut rng = replica_stream(22, 0);
        let rec = ballot_probability(
            &law,
            BallotEvent::StaysAbove {
                a: n as f64 * law.left_depth,
            },
            n,
            2_000,
            0.95,
            &mut rng,
            22,
        )
        .unwrap();
        assert_eq!(rec.estimate, 1.0);
    }

    #[test]
    fn point_window_at_zero_is_null() {
        // no atom at 0: S_1 <= 0 and S_1 >= 0 never happens
        let law = StepLaw::default_law();
        let mut rng = replica_stream(23, 0);
        let rec = ballot_probability(
            &law,
            BallotEvent::EndBelowStaysAbove { a: 0.0, b: 0.0 },
            1,
            100_000,
            0.95,
            &mut rng,
            23,
        )
        .unwrap();
        assert_eq!(rec.estimate, 0.0);
    }

    #[test]
    fn event_monotone_in_barriers_by_coupling() {
        // shared stream: indicator is pointwise monotone in a and in b
        let law = StepLaw::default_law();
        let n = 64;
        for rep in 0..200u64 {
            let f = |a: f64, b: f64| {
                let mut rng = replica_stream(24, rep);
                BallotEvent::EndBelowStaysAbove { a, b }.indicator(&law, n, &mut rng)
            };
            assert!(f(1.0, 1.0) <= f(2.0, 1.0));
            assert!(f(1.0, 1.0) <= f(1.0, 3.0));
        }
    }

    #[test]
    fn kind_params_mismatch_is_a_config_error() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(25, 0);
        let bad = BallotEvent::BandedEndWindow {
            a: 1.0,
            b: 0.0,
            u: 2.0,
            v: 1.0,
            lambda: 0.5,
        };
        assert!(matches!(
            ballot_probability(&law, bad, 8, 10, 0.95, &mut rng, 0),
            Err(Error::Config(_))
        ));
        let bad_lambda = BallotEvent::LateDescentBelow {
            a: 1.0,
            b: 0.0,
            lambda: 1.5,
        };
        assert!(bad_lambda.validate().is_err());
    }

    #[test]
    fn hill_recovers_exact_pareto_index() {
        // oracle: direct Pareto sampler, independent of StepLaw
        let mut rng = replica_stream(31, 0);
        let samples: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let u: f64 = rng.sample(OpenClosed01);
                u.powf(-1.0 / 1.5)
            })
            .collect();
        let fit = fit_tail_index(&samples, 10_000).unwrap();
        assert!(
            (1.45..=1.55).contains(&fit.alpha_hat),
            "alpha_hat {}",
            fit.alpha_hat
        );
    }

    #[test]
    fn hill_on_step_law_positive_part() {
        let law = StepLaw::default_law();
        let mut rng = replica_stream(32, 0);
        let samples: Vec<f64> = (0..400_000).map(|_| law.sample(&mut rng)).collect();
        let fit = fit_tail_index(&samples, 5_000).unwrap();
        assert!(
            (1.4..=1.6).contains(&fit.alpha_hat),
            "alpha_hat {}",
            fit.alpha_hat
        );
    }

    #[test]
    fn hill_rejects_degenerate_samples() {
        let equal = vec![2.0; 100];
        assert!(matches!(
            fit_tail_index(&equal, 10),
            Err(Error::Numeric(_))
        ));
        let few = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            fit_tail_index(&few, 10),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inverse_cdf_inverts_the_survival_function(u in 1e-9f64..1.0) {
            // the sampler maps u to the point with tail mass exactly u, so
            // F(S) = 1 - u on the continuous support
            let law = StepLaw::default_law();
            let s = law.sample_from_uniform(u);
            prop_assert!((law.cdf(s) - (1.0 - u)).abs() < 1e-9);
        }

        #[test]
        fn running_minimum_is_pathwise_consistent(seed in 0u64..1000, n in 1usize..128) {
            let law = StepLaw::default_law();
            let path = law.walk(n, &mut replica_stream(seed, 9));
            let brute: f64 = path.positions.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(path.minimum(), brute.min(0.0));
            for (i, w) in path.running_min.windows(2).enumerate() {
                prop_assert!(w[1] <= w[0] + 1e-15, "running min rose at {}", i);
            }
        }
    }
}
