//! Impulse-time sequences and hybrid time.
//!
//! Jump counts are taken over half-open intervals `(a, b]`: an impulse at the
//! left end does not count, one at the right end does. The hybrid elapsed
//! time of `(t0, t]` is `(t - t0)` plus that count.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compfun::ComparisonFunction;
use crate::error::{Error, Result};
use crate::quad::{linspace, sort_dedup};

/// Finite, strictly increasing impulse times in `(0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSequence {
    times: Vec<f64>,
    horizon: f64,
}

impl ImpulseSequence {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Validation(format!("horizon must be positive and finite, got {horizon}")));
        }
        if let Some(&t) = times.iter().find(|&&t| !(t > 0.0) || t > horizon) {
            return Err(Error::Validation(format!("impulse time {t} lies outside (0, {horizon}]")));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!("impulse times must be strictly increasing ({} then {})", w[0], w[1])));
        }
        Ok(Self { times, horizon })
    }

    pub fn empty(horizon: f64) -> Self {
        Self { times: vec![], horizon }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Impulse times in `(a, b]`.
    pub fn in_window(&self, a: f64, b: f64) -> &[f64] {
        let lo = self.times.partition_point(|&t| t <= a);
        let hi = self.times.partition_point(|&t| t <= b);
        &self.times[lo..hi.max(lo)]
    }

    /// Number of impulses in `(a, b]`, without range checks.
    pub fn count(&self, a: f64, b: f64) -> usize {
        self.in_window(a, b).len()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()).is_ok()
    }

    /// Number of impulses in `(a, b]`.
    pub fn count_impulses(&self, a: f64, b: f64) -> Result<usize> {
        if !(a <= b) {
            return Err(Error::Domain(format!("interval ({a}, {b}] is reversed")));
        }
        if b > self.horizon {
            return Err(Error::Domain(format!("interval end {b} exceeds horizon {}", self.horizon)));
        }
        Ok(self.count(a, b))
    }

    /// `(t - t0) + #(γ ∩ (t0, t])`.
    pub fn hybrid_elapsed(&self, t0: f64, t: f64) -> Result<f64> {
        if !(t >= t0) {
            return Err(Error::Domain(format!("t = {t} precedes t0 = {t0}")));
        }
        Ok((t - t0) + self.count_impulses(t0, t)? as f64)
    }

    /// The same sequence with the impulse at `t` removed (if present).
    pub fn without(&self, t: f64) -> Self {
        Self { times: self.times.iter().copied().filter(|&s| s != t).collect(), horizon: self.horizon }
    }

    /// The same impulse times on a different horizon; later times are dropped.
    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self { times: self.times.iter().copied().filter(|&s| s <= horizon).collect(), horizon }
    }
}

/// Free-function form of [`ImpulseSequence::count_impulses`].
pub fn count_impulses(gamma: &ImpulseSequence, a: f64, b: f64) -> Result<usize> {
    gamma.count_impulses(a, b)
}

/// Free-function form of [`ImpulseSequence::hybrid_elapsed`].
pub fn hybrid_elapsed(gamma: &ImpulseSequence, t0: f64, t: f64) -> Result<f64> {
    gamma.hybrid_elapsed(t0, t)
}

/// A point of hybrid time: continuous time since `t0` plus the jumps taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridClock {
    pub t0: f64,
    pub t: f64,
    pub jumps: usize,
}

impl HybridClock {
    pub fn new(gamma: &ImpulseSequence, t0: f64, t: f64) -> Result<Self> {
        if !(t >= t0) {
            return Err(Error::Domain(format!("t = {t} precedes t0 = {t0}")));
        }
        Ok(Self { t0, t, jumps: gamma.count_impulses(t0, t)? })
    }

    pub fn elapsed(&self) -> f64 {
        (self.t - self.t0) + self.jumps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UibViolation {
    /// Index of the offending sequence in the family.
    pub sequence: usize,
    pub t0: f64,
    pub t: f64,
    pub count: usize,
    pub phi: f64,
}

impl UibViolation {
    fn excess(&self) -> f64 {
        self.count as f64 - self.phi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UibReport {
    pub pass: bool,
    /// Largest `count - φ(t - t0)` found.
    pub worst: Option<UibViolation>,
    /// First family member with any violation.
    pub first_failing: Option<usize>,
    pub pairs_checked: usize,
    pub note: &'static str,
}

impl fmt::Display for UibReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.worst {
            None => write!(f, "UIB holds on {} checked pairs ({})", self.pairs_checked, self.note),
            Some(v) => {
                write!(f, "UIB fails: sequence {} has {} jumps in ({}, {}] but phi = {}", v.sequence, v.count, v.t0, v.t, v.phi)
            }
        }
    }
}

pub const UIB_GRID: usize = 512;
const FINITE_HORIZON_NOTE: &str = "checked on the finite horizon only";

/// Check `#(γ ∩ (t0, t]) <= φ(t - t0)` over every sequence in `family`.
///
/// For each pair of impulses `τ_i <= τ_j` the window `(τ_i - ε, τ_j]` is the
/// tightest one holding `j - i + 1` jumps, so with continuous `φ` the condition
/// fails exactly when `φ(τ_j - τ_i) < j - i + 1`. A uniform grid of windows is
/// also scanned.
pub fn check_uib(family: &[ImpulseSequence], phi: &ComparisonFunction) -> UibReport {
    check_uib_with_grid(family, phi, UIB_GRID)
}

pub fn check_uib_with_grid(family: &[ImpulseSequence], phi: &ComparisonFunction, grid: usize) -> UibReport {
    let mut worst: Option<UibViolation> = None;
    let mut first_failing = None;
    let mut pairs = 0usize;
    let mut record = |v: UibViolation, worst: &mut Option<UibViolation>| {
        if first_failing.is_none() {
            first_failing = Some(v.sequence);
        }
        if worst.as_ref().is_none_or(|w| v.excess() > w.excess()) {
            *worst = Some(v);
        }
    };
    for (k, gamma) in family.iter().enumerate() {
        let ts = gamma.times();
        for i in 0..ts.len() {
            for j in i..ts.len() {
                pairs += 1;
                let count = j - i + 1;
                let p = phi.value(ts[j] - ts[i]);
                if (count as f64) > p {
                    let t0 = ts[i] - f64::EPSILON * ts[i].max(1.0) * 4.0;
                    record(UibViolation { sequence: k, t0: t0.max(0.0), t: ts[j], count, phi: p }, &mut worst);
                }
            }
        }
        let mut pts = linspace(0.0, gamma.horizon(), grid.max(2));
        pts.extend_from_slice(ts);
        sort_dedup(&mut pts);
        for (a, &t0) in pts.iter().enumerate() {
            for &t in &pts[a..] {
                pairs += 1;
                let count = gamma.count(t0, t);
                let p = phi.value(t - t0);
                if (count as f64) > p {
                    record(UibViolation { sequence: k, t0, t, count, phi: p }, &mut worst);
                }
            }
        }
    }
    let pass = worst.is_none();
    UibReport { pass, worst, first_failing, pairs_checked: pairs, note: FINITE_HORIZON_NOTE }
}

/// Random enlargement of dwell-time gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub seed: u64,
    /// Each gap is `delta * (1 + spread * U)` with `U` uniform on `[0, 1)`.
    pub spread: f64,
}

impl Jitter {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, spread: 0.5 }
    }
}

/// Impulse times with consecutive gaps (and first time) at least `delta`, up to `horizon`.
pub fn gen_dwell(delta: f64, horizon: f64, jitter: Option<Jitter>) -> Result<ImpulseSequence> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("dwell time must be positive, got {delta}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let slack = 1e-12 * horizon;
    let mut times = vec![];
    match jitter {
        None => {
            let mut k = 1u64;
            loop {
                let t = k as f64 * delta;
                if t > horizon + slack {
                    break;
                }
                times.push(t.min(horizon));
                k += 1;
            }
        }
        Some(j) => {
            let mut rng = ChaCha8Rng::seed_from_u64(j.seed);
            let mut t = 0.0;
            loop {
                t += delta * (1.0 + j.spread.max(0.0) * rng.gen::<f64>());
                if t > horizon {
                    break;
                }
                times.push(t);
            }
        }
    }
    ImpulseSequence::new(times, horizon)
}

/// The hybrid-time partition `s_0 = t0 < s_1 < …` where each step is the first
/// time the hybrid elapsed time since the previous point reaches `t_tilde`.
///
/// On `[τ'_m, τ'_{m+1})` (the `m`-th inter-impulse stretch after `s`) the
/// elapsed time is `t - s + m`, so the infimum is `max(τ'_m, s + t_tilde - m)`
/// on the first stretch where this is attained.
pub fn partition_hybrid(gamma: &ImpulseSequence, t0: f64, t_tilde: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(t_tilde > 0.0) {
        return Err(Error::Domain(format!("partition step must be positive, got {t_tilde}")));
    }
    let mut out = vec![t0];
    let mut s = t0;
    loop {
        let after = gamma.in_window(s, f64::INFINITY);
        let mut next = None;
        for m in 0..=after.len() {
            let start = if m == 0 { s } else { after[m - 1] };
            let cand = start.max(s + t_tilde - m as f64);
            let end = after.get(m).copied().unwrap_or(f64::INFINITY);
            if cand < end {
                next = Some(cand);
                break;
            }
        }
        let next = next.expect("last stretch is unbounded");
        if next > horizon {
            break;
        }
        out.push(next);
        s = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g123() -> ImpulseSequence {
        ImpulseSequence::new(vec![1.0, 2.0, 3.0], 10.0).unwrap()
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_impulses(&g123(), 0.5, 2.5).unwrap(), 2);
        assert_eq!(count_impulses(&g123(), 1.0, 1.0).unwrap(), 0);
        let half: Vec<f64> = (1..=19).map(|k| 0.5 * k as f64).collect();
        let g = ImpulseSequence::new(half, 10.0).unwrap();
        assert_eq!(count_impulses(&g, 0.0, 9.9).unwrap(), 19);
        assert!(matches!(count_impulses(&g, 0.0, 10.5), Err(Error::Domain(_))));
        assert_eq!(count_impulses(&g123(), 0.0, 3.0).unwrap(), 3);
        assert_eq!(count_impulses(&g123(), 1.0, 3.0).unwrap(), 2);
    }

    #[test]
    fn elapsed_examples() {
        assert_eq!(hybrid_elapsed(&g123(), 0.0, 2.5).unwrap(), 4.5);
        assert_eq!(hybrid_elapsed(&ImpulseSequence::empty(10.0), 1.0, 4.0).unwrap(), 3.0);
        let g = ImpulseSequence::new(vec![0.1, 0.2, 0.3], 1.0).unwrap();
        assert!((hybrid_elapsed(&g, 0.0, 0.25).unwrap() - 2.25).abs() < 1e-15);
        assert!(hybrid_elapsed(&g, 0.5, 0.25).is_err());
        let c = HybridClock::new(&g123(), 0.0, 2.5).unwrap();
        assert_eq!(c.jumps, 2);
        assert_eq!(c.elapsed(), 4.5);
    }

    #[test]
    fn rejects_bad_sequences() {
        assert!(ImpulseSequence::new(vec![0.0, 1.0], 2.0).is_err());
        assert!(ImpulseSequence::new(vec![1.0, 1.0], 2.0).is_err());
        assert!(ImpulseSequence::new(vec![1.0, 3.0], 2.0).is_err());
    }

    #[test]
    fn uib_examples() {
        let fam: Vec<_> = (0..5u64)
            .map(|s| gen_dwell(0.5, 10.0, Some(Jitter::seeded(s))).unwrap())
            .chain(std::iter::once(gen_dwell(0.5, 10.0, None).unwrap()))
            .collect();
        let phi = ComparisonFunction::affine_power(0.0, 1.0, 2.0, 1.0);
        assert!(check_uib(&fam, &phi).pass);

        let r = check_uib(&[ImpulseSequence::empty(5.0)], &ComparisonFunction::constant(0.0));
        assert!(r.pass);

        // k impulses at i/k in (0, 1]; φ(s) = s + 1
        let packed: Vec<_> =
            (1..=50).map(|k| ImpulseSequence::new((1..=k).map(|i| i as f64 / k as f64).collect(), 1.0).unwrap()).collect();
        let r = check_uib(&packed, &ComparisonFunction::affine_power(0.0, 1.0, 1.0, 1.0));
        assert!(!r.pass);
        // two jumps half a second apart already exceed φ(0.5) = 1.5
        assert_eq!(r.first_failing, Some(1));
        let w = r.worst.unwrap();
        assert_eq!(w.sequence, 49);
        assert!(w.count as f64 > w.phi);
        assert_eq!(packed[w.sequence].count(w.t0, w.t), w.count);
        // three jumps within a unit window: the k = 3 member fails too
        let r3 = check_uib(&packed[2..3], &ComparisonFunction::affine_power(0.0, 1.0, 1.0, 1.0));
        assert!(!r3.pass);
    }

    #[test]
    fn dwell_examples() {
        assert_eq!(gen_dwell(1.0, 3.0, None).unwrap().times(), &[1.0, 2.0, 3.0]);
        let g = gen_dwell(0.5, 2.0, None).unwrap();
        assert!(g.times().windows(2).all(|w| w[1] - w[0] >= 0.5 - 1e-12));
        let a = gen_dwell(0.3, 10.0, Some(Jitter::seeded(7))).unwrap();
        let b = gen_dwell(0.3, 10.0, Some(Jitter::seeded(7))).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_dwell(0.3, 10.0, Some(Jitter::seeded(8))).unwrap());
        assert!(gen_dwell(0.0, 1.0, None).is_err());
    }

    #[test]
    fn partition_examples() {
        let e = ImpulseSequence::empty(10.0);
        assert_eq!(partition_hybrid(&e, 0.0, 2.0, 10.0).unwrap(), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let g = ImpulseSequence::new((1..=10).map(f64::from).collect(), 10.0).unwrap();
        assert_eq!(partition_hybrid(&g, 0.0, 2.0, 10.0).unwrap()[1], 1.0);
        let g = ImpulseSequence::new(vec![0.5], 10.0).unwrap();
        assert_eq!(partition_hybrid(&g, 0.0, 1.0, 10.0).unwrap()[1], 0.5);
    }

    fn sequence() -> impl Strategy<Value = ImpulseSequence> {
        prop::collection::vec(0.01f64..1.0, 0..30).prop_map(|gaps| {
            let mut t = 0.0;
            let times: Vec<f64> = gaps
                .iter()
                .map(|g| {
                    t += g;
                    t
                })
                .collect();
            ImpulseSequence::new(times, t.max(1.0) + 1.0).unwrap()
        })
    }

    proptest! {
        #[test]
        fn count_is_additive(g in sequence(), x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            let h = g.horizon();
            let mut p = [x * h, y * h, z * h];
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let [a, b, c] = p;
            prop_assert_eq!(g.count(a, b) + g.count(b, c), g.count(a, c));
        }

        #[test]
        fn partition_steps_are_bounded(g in sequence(), t_tilde in 0.1f64..3.0) {
            let s = partition_hybrid(&g, 0.0, t_tilde, g.horizon()).unwrap();
            for w in s.windows(2) {
                let e = g.hybrid_elapsed(w[0], w[1]).unwrap();
                prop_assert!(e >= t_tilde - 1e-12);
                prop_assert!(e <= t_tilde.ceil() + 1.0 + 1e-12);
            }
            let total: f64 = s.windows(2).map(|w| g.hybrid_elapsed(w[0], w[1]).unwrap()).sum();
            let direct = g.hybrid_elapsed(s[0], *s.last().unwrap()).unwrap();
            prop_assert!((total - direct).abs() < 1e-9);
        }

        #[test]
        fn dwell_sequences_are_uib(delta in 0.2f64..2.0, seed in 0u64..1000) {
            let g = gen_dwell(delta, 10.0, Some(Jitter::seeded(seed))).unwrap();
            prop_assert!(g.times().windows(2).all(|w| w[1] - w[0] >= delta * (1.0 - 1e-12)));
            let phi = ComparisonFunction::affine_power(0.0, 1.0, 1.0 / delta, 1.0);
            prop_assert!(check_uib_with_grid(&[g], &phi, 64).pass);
        }
    }
}
