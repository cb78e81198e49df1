//! Chaotic sequence generation.
//!
//! Two discrete maps drive the whole system:
//!
//! - Logistic, `x <- 3.7 x (1 - x)` on the open interval (0, 1), used for
//!   the long cover segment;
//! - Cubic (Chebyshev), `x <- 4 x^3 - 3 x` on the open interval (-1, 1),
//!   used for the short information segment. It is conjugate to angle
//!   tripling: for `x = cos(t)` the next state is `cos(3t)`.
//!
//! Segments are standardized to zero mean / unit variance with *fixed*
//! per-map constants so that per-sample signal power is well defined for
//! Eb/N0 accounting and the two maps are not trivially separable by their
//! raw amplitude statistics. The Cubic constants follow from the arcsine
//! invariant density (mean 0, variance 1/2); the Logistic constants were
//! fixed once from the long-run moments oracle ([`invariant_moments`]).

use crate::error::{param_err, Error, Result};
use crate::real::Real;
use crate::rng::rng_from;
use rand::Rng;

/// Logistic map growth rate.
pub const LOGISTIC_R: f64 = 3.7;

/// Long-run mean of the Logistic map at r = 3.7 (frozen from the moments
/// oracle over 4e8 iterates; three independent seeds agree to 2e-6).
pub const LOGISTIC_MEAN: f64 = 0.667834;

/// Long-run standard deviation of the Logistic map at r = 3.7 (same oracle).
pub const LOGISTIC_STD: f64 = 0.203312;

/// Exact standard deviation of the Cubic map under its arcsine invariant
/// density 1/(pi sqrt(1 - x^2)): variance = 1/2.
pub const CUBIC_STD: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Default number of discarded iterations before a segment starts.
pub const DEFAULT_BURN_IN: usize = 100;

/// Which chaotic map generated a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    Logistic,
    Cubic,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Logistic => "logistic",
            MapKind::Cubic => "cubic",
        }
    }

    /// Valid open interval of states, as (lo, hi).
    pub fn interval(self) -> (f64, f64) {
        match self {
            MapKind::Logistic => (0.0, 1.0),
            MapKind::Cubic => (-1.0, 1.0),
        }
    }

    fn contains<F: Real>(self, x: F) -> bool {
        let (lo, hi) = self.interval();
        x > F::of(lo) && x < F::of(hi)
    }
}

/// One map iteration without a domain check.
#[inline]
pub(crate) fn step_unchecked<F: Real>(kind: MapKind, x: F) -> F {
    match kind {
        MapKind::Logistic => F::of(LOGISTIC_R) * x * (F::one() - x),
        MapKind::Cubic => F::of(4.0) * x * x * x - F::of(3.0) * x,
    }
}

/// Advances a map by one step.
///
/// Errors with [`Error::Domain`] if `state` lies outside the map's valid
/// open interval.
pub fn map_step<F: Real>(kind: MapKind, state: F) -> Result<F> {
    if !kind.contains(state) {
        return Err(Error::Domain {
            map: kind.name(),
            value: state.to_f64(),
        });
    }
    Ok(step_unchecked(kind, state))
}

/// The cubic recursion with the `+3x` sign, `x <- 4 x^3 + 3 x`.
///
/// Kept only to demonstrate that this form diverges for every non-zero
/// state in (-1, 1); it is never used by the modem.
pub fn cubic_step_divergent<F: Real>(state: F) -> F {
    F::of(4.0) * state * state * state + F::of(3.0) * state
}

/// A run of consecutive iterates from one chaotic map.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<F> {
    pub kind: MapKind,
    pub samples: Vec<F>,
    pub standardized: bool,
}

impl<F: Real> Segment<F> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Fixed affine normalization constants for one map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizationConstants<F> {
    pub mean: F,
    pub std: F,
}

impl<F: Real> StandardizationConstants<F> {
    /// The frozen constants used by the transmitter and both detectors.
    pub fn for_map(kind: MapKind) -> Self {
        match kind {
            MapKind::Logistic => StandardizationConstants {
                mean: F::of(LOGISTIC_MEAN),
                std: F::of(LOGISTIC_STD),
            },
            MapKind::Cubic => StandardizationConstants {
                mean: F::zero(),
                std: F::of(CUBIC_STD),
            },
        }
    }

    #[inline]
    pub fn apply(&self, v: F) -> F {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, v: F) -> F {
        v * self.std + self.mean
    }
}

/// Iterates a map `length` times from `x0`, returning the iterates
/// (the initial state itself is not part of the output).
pub fn iterate<F: Real>(kind: MapKind, x0: F, length: usize) -> Result<Vec<F>> {
    if !kind.contains(x0) {
        return Err(Error::Domain {
            map: kind.name(),
            value: x0.to_f64(),
        });
    }
    let mut out = Vec::with_capacity(length);
    let mut x = x0;
    for _ in 0..length {
        x = advance(kind, x);
        out.push(x);
    }
    Ok(out)
}

/// One step plus the boundary escape: a Cubic orbit passing within ~1e-9
/// of +-0.5 can round exactly onto the repelling fixed points +-1, where
/// it would freeze; nudge such hits back inside.
#[inline]
fn advance<F: Real>(kind: MapKind, x: F) -> F {
    let y = step_unchecked(kind, x);
    if kind == MapKind::Cubic {
        let edge = F::one() - F::epsilon() * F::of(16.0);
        if y >= F::one() {
            return edge;
        }
        if y <= -F::one() {
            return -edge;
        }
    }
    y
}

/// Draws an initial state uniformly from the map's interval, rejecting
/// starts whose first three iterates revisit an earlier point (fixed
/// points, short cycles, and pre-periodic collapses like 0.5 -> -1).
fn draw_initial<F: Real>(kind: MapKind, rng: &mut impl Rng) -> F {
    let (lo, hi) = kind.interval();
    'outer: loop {
        let u: f64 = rng.gen();
        let x0 = F::of(lo + u * (hi - lo));
        if !kind.contains(x0) {
            continue;
        }
        let mut orbit = [x0, F::zero(), F::zero(), F::zero()];
        for i in 1..4 {
            orbit[i] = advance(kind, orbit[i - 1]);
        }
        for i in 1..4 {
            for j in 0..i {
                if (orbit[i] - orbit[j]).abs() < F::of(1e-6) {
                    continue 'outer;
                }
            }
        }
        return x0;
    }
}

/// Generates a fresh chaotic segment.
///
/// The initial state is drawn uniformly from the valid interval (away
/// from fixed points) using `seed`; `burn_in` iterations are discarded
/// before `length` consecutive iterates are recorded. Pure function of
/// its arguments.
pub fn generate_segment<F: Real>(
    kind: MapKind,
    length: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Segment<F>> {
    if length == 0 {
        return Err(param_err!("segment length must be >= 1"));
    }
    let mut rng = rng_from(seed);
    let mut x = draw_initial::<F>(kind, &mut rng);
    for _ in 0..burn_in {
        x = advance(kind, x);
    }
    let mut samples = Vec::with_capacity(length);
    for _ in 0..length {
        x = advance(kind, x);
        samples.push(x);
    }
    Ok(Segment {
        kind,
        samples,
        standardized: false,
    })
}

/// Applies the affine standardization `(v - mean) / std` to every sample.
pub fn standardize_segment<F: Real>(
    seg: &Segment<F>,
    consts: &StandardizationConstants<F>,
) -> Result<Segment<F>> {
    if seg.standardized {
        return Err(Error::State("segment is already standardized".into()));
    }
    Ok(Segment {
        kind: seg.kind,
        samples: seg.samples.iter().map(|&v| consts.apply(v)).collect(),
        standardized: true,
    })
}

/// Inverts [`standardize_segment`].
pub fn destandardize_segment<F: Real>(
    seg: &Segment<F>,
    consts: &StandardizationConstants<F>,
) -> Result<Segment<F>> {
    if !seg.standardized {
        return Err(Error::State("segment is not standardized".into()));
    }
    Ok(Segment {
        kind: seg.kind,
        samples: seg.samples.iter().map(|&v| consts.invert(v)).collect(),
        standardized: false,
    })
}

/// Long-run sample mean and standard deviation over `n` iterates after
/// 1000 burn-in steps. This is the oracle that fixed [`LOGISTIC_MEAN`]
/// and [`LOGISTIC_STD`].
pub fn invariant_moments(kind: MapKind, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from(seed);
    let mut x: f64 = draw_initial(kind, &mut rng);
    for _ in 0..1000 {
        x = advance(kind, x);
    }
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        x = advance(kind, x);
        sum += x;
        sum2 += x * x;
    }
    let mean = sum / n as f64;
    let var = (sum2 / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_one_step() {
        let y: f64 = map_step(MapKind::Logistic, 0.5).unwrap();
        assert!((y - 0.925).abs() < 1e-12);
    }

    #[test]
    fn cubic_is_angle_tripling_one_step() {
        let theta = std::f64::consts::PI / 9.0;
        let y: f64 = map_step(MapKind::Cubic, theta.cos()).unwrap();
        assert!((y - 0.5).abs() < 1e-12, "got {y}");
    }

    #[test]
    fn cubic_fixed_point_at_zero() {
        let y: f64 = map_step(MapKind::Cubic, 0.0).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn out_of_interval_states_are_domain_errors() {
        for (kind, bad) in [
            (MapKind::Logistic, 1.5),
            (MapKind::Logistic, 0.0),
            (MapKind::Logistic, -0.1),
            (MapKind::Cubic, 1.0),
            (MapKind::Cubic, -2.0),
        ] {
            match map_step::<f64>(kind, bad) {
                Err(Error::Domain { map, value }) => {
                    assert_eq!(map, kind.name());
                    assert_eq!(value, bad);
                }
                other => panic!("expected domain error for {kind:?} {bad}, got {other:?}"),
            }
        }
    }

    #[test]
    fn divergent_cubic_form_diverges() {
        let mut x: f64 = 0.3;
        for _ in 0..40 {
            x = cubic_step_divergent(x);
        }
        assert!(x.abs() > 1e6, "printed recursion should blow up, got {x}");
    }

    #[test]
    fn iterate_matches_hand_arithmetic() {
        let xs: Vec<f64> = iterate(MapKind::Logistic, 0.5, 3).unwrap();
        let x3 = 3.7 * 0.2566875 * (1.0 - 0.2566875);
        assert!((xs[0] - 0.925).abs() < 1e-15);
        assert!((xs[1] - 0.2566875).abs() < 1e-12);
        assert!((xs[2] - x3).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let a: Segment<f64> = generate_segment(MapKind::Cubic, 64, 99, 100).unwrap();
        let b: Segment<f64> = generate_segment(MapKind::Cubic, 64, 99, 100).unwrap();
        assert_eq!(a, b);
        let c: Segment<f64> = generate_segment(MapKind::Cubic, 64, 100, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn orbits_stay_in_the_valid_interval() {
        for (kind, seed) in [(MapKind::Logistic, 7u64), (MapKind::Cubic, 8u64)] {
            let seg: Segment<f64> = generate_segment(kind, 1_000_000, seed, 0).unwrap();
            let (lo, hi) = kind.interval();
            assert!(
                seg.samples.iter().all(|&x| x > lo && x < hi),
                "{kind:?} left ({lo}, {hi})"
            );
        }
    }

    #[test]
    fn cubic_conjugacy_over_twenty_steps() {
        // x0 = cos(theta) implies the n-th iterate is cos(3^n theta).
        let mut rng = rng_from(4242);
        for _ in 0..10 {
            let theta: f64 = rng.gen::<f64>() * std::f64::consts::PI;
            let xs: Vec<f64> = iterate(MapKind::Cubic, theta.cos(), 20).unwrap();
            let mut t = theta;
            for (n, &x) in xs.iter().enumerate() {
                t *= 3.0;
                let expect = t.cos();
                assert!(
                    (x - expect).abs() < 1e-5,
                    "n={} x={} cos(3^n t)={}",
                    n + 1,
                    x,
                    expect
                );
            }
        }
    }

    #[test]
    fn logistic_sensitivity_to_initial_conditions() {
        let a: Vec<f64> = iterate(MapKind::Logistic, 0.45, 60).unwrap();
        let b: Vec<f64> = iterate(MapKind::Logistic, 0.45 + 1e-10, 60).unwrap();
        let diverged = a
            .iter()
            .zip(&b)
            .any(|(x, y)| (x - y).abs() > 0.1);
        assert!(diverged, "orbits 1e-10 apart should separate beyond 0.1 within 60 steps");
    }

    #[test]
    fn standardization_affine_and_invertible() {
        let consts = StandardizationConstants::<f64>::for_map(MapKind::Cubic);
        assert!((consts.apply(0.5) - 0.5 * std::f64::consts::SQRT_2).abs() < 1e-12);

        let seg: Segment<f64> = generate_segment(MapKind::Logistic, 256, 3, 100).unwrap();
        let lc = StandardizationConstants::for_map(MapKind::Logistic);
        let std_seg = standardize_segment(&seg, &lc).unwrap();
        assert!(std_seg.standardized);
        let back = destandardize_segment(&std_seg, &lc).unwrap();
        for (a, b) in seg.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn double_standardization_is_a_state_error() {
        let seg: Segment<f64> = generate_segment(MapKind::Cubic, 8, 1, 0).unwrap();
        let consts = StandardizationConstants::for_map(MapKind::Cubic);
        let once = standardize_segment(&seg, &consts).unwrap();
        assert!(matches!(
            standardize_segment(&once, &consts),
            Err(Error::State(_))
        ));
        assert!(matches!(
            destandardize_segment(&seg, &consts),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn standardized_logistic_moments_converge() {
        let seg: Segment<f64> = generate_segment(MapKind::Logistic, 1_000_000, 11, 100).unwrap();
        let consts = StandardizationConstants::for_map(MapKind::Logistic);
        let std_seg = standardize_segment(&seg, &consts).unwrap();
        let n = std_seg.len() as f64;
        let mean: f64 = std_seg.samples.iter().sum::<f64>() / n;
        let var: f64 = std_seg.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn cubic_moments_match_arcsine_density() {
        let (mean, std) = invariant_moments(MapKind::Cubic, 10_000_000, 5);
        assert!(mean.abs() < 0.001, "mean {mean}");
        assert!((std - CUBIC_STD).abs() < 0.002, "std {std}");
    }

    #[test]
    fn logistic_moments_match_frozen_constants() {
        let (m1, s1) = invariant_moments(MapKind::Logistic, 10_000_000, 6);
        let (m2, _) = invariant_moments(MapKind::Logistic, 10_000_000, 7);
        assert!(s1 > 0.0);
        assert!((m1 - LOGISTIC_MEAN).abs() < 0.002, "mean {m1}");
        assert!((s1 - LOGISTIC_STD).abs() < 0.002, "std {s1}");
        assert!((m1 - m2).abs() < 0.005, "seeds disagree: {m1} vs {m2}");
    }
}
