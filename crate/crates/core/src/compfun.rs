//! Comparison functions: class K, K∞ and KL.
//!
//! A [`ComparisonFunction`] is a scalar map on `[0, ∞)` built from a small set
//! of closed forms and combinators (min, max, sum, composition, numerical
//! inverse, tabulation). Class membership is not proved symbolically; it is
//! checked by dense sampling on `[0, domain_hint]` with [`validate_class`].
//!
//! [`KLFunction`] represents `β(r, t) = outer(amplitude(r) · decay(t))`, which
//! covers the usual product forms `r·e^{-ct}`, `r/(1+t)` and their images
//! under a K∞ map (e.g. `α⁻¹ ∘ β`).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{linspace, logspace, sort_dedup};

pub const DEFAULT_DOMAIN_HINT: f64 = 1e6;
pub const DEFAULT_GRID: usize = 1024;
pub const DEFAULT_INVERT_TOL: f64 = 1e-10;

/// Declared class of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    /// Continuous, strictly increasing, zero at zero.
    K,
    /// Class K and unbounded.
    KInf,
    /// Decay profile in the time argument of a KL function: nonincreasing to zero.
    KlSection,
    /// Continuous and nondecreasing, not necessarily zero at zero (envelopes N, O, P, L^f).
    Nondecreasing,
}

impl ClassKind {
    fn is_k(self) -> bool {
        matches!(self, ClassKind::K | ClassKind::KInf)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Form {
    /// `a·r^p + b·r + c`
    AffinePower {
        a: f64,
        p: f64,
        b: f64,
        c: f64,
    },
    /// `a·e^{-rate·r}`
    ExpDecay {
        a: f64,
        rate: f64,
    },
    /// `a·(1 + rate·r)^{-power}`
    RationalDecay {
        a: f64,
        rate: f64,
        power: f64,
    },
    /// `a·r + b·ln(1 + r)`
    Log1p {
        a: f64,
        b: f64,
    },
    Min(Box<ComparisonFunction>, Box<ComparisonFunction>),
    Max(Box<ComparisonFunction>, Box<ComparisonFunction>),
    Sum(Box<ComparisonFunction>, Box<ComparisonFunction>),
    /// `outer(inner(r))`
    Compose {
        outer: Box<ComparisonFunction>,
        inner: Box<ComparisonFunction>,
    },
    /// Numerical inverse of a strictly increasing function.
    Inverse(Box<ComparisonFunction>),
    /// Piecewise-linear interpolation, linear extrapolation past the last knot.
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    /// Arbitrary closure; not representable in config files.
    Custom {
        name: String,
        f: ScalarFn,
    },
}

/// A scalar monotone function with a declared class tag.
#[derive(Clone)]
pub struct ComparisonFunction {
    kind: ClassKind,
    form: Form,
    domain_hint: f64,
}

impl fmt::Debug for ComparisonFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[{}]", self.kind, self)
    }
}

impl fmt::Display for ComparisonFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            Form::AffinePower { a, p, b, c } => write!(f, "{a}·r^{p} + {b}·r + {c}"),
            Form::ExpDecay { a, rate } => write!(f, "{a}·exp(-{rate}·r)"),
            Form::RationalDecay { a, rate, power } => write!(f, "{a}·(1+{rate}·r)^-{power}"),
            Form::Log1p { a, b } => write!(f, "{a}·r + {b}·ln(1+r)"),
            Form::Min(x, y) => write!(f, "min{{{x}, {y}}}"),
            Form::Max(x, y) => write!(f, "max{{{x}, {y}}}"),
            Form::Sum(x, y) => write!(f, "({x}) + ({y})"),
            Form::Compose { outer, inner } => write!(f, "({outer})∘({inner})"),
            Form::Inverse(x) => write!(f, "inv({x})"),
            Form::Tabulated { xs, .. } => write!(f, "table[{} knots]", xs.len()),
            Form::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl ComparisonFunction {
    fn new(kind: ClassKind, form: Form) -> Self {
        Self { kind, form, domain_hint: DEFAULT_DOMAIN_HINT }
    }

    pub fn identity() -> Self {
        Self::linear(1.0)
    }

    /// `a·r`
    pub fn linear(a: f64) -> Self {
        Self::affine_power(0.0, 1.0, a, 0.0)
    }

    /// `a·r^p`
    pub fn power(a: f64, p: f64) -> Self {
        Self::affine_power(a, p, 0.0, 0.0)
    }

    /// `a·r^p + b·r + c`; tagged K∞ when it is zero at zero and grows, otherwise nondecreasing.
    pub fn affine_power(a: f64, p: f64, b: f64, c: f64) -> Self {
        let grows = (a > 0.0 && p > 0.0) || b > 0.0;
        let kind = if c == 0.0 && grows && a >= 0.0 && b >= 0.0 { ClassKind::KInf } else { ClassKind::Nondecreasing };
        Self::new(kind, Form::AffinePower { a, p, b, c })
    }

    /// The constant function `c` (a nondecreasing envelope).
    pub fn constant(c: f64) -> Self {
        Self::new(ClassKind::Nondecreasing, Form::AffinePower { a: 0.0, p: 1.0, b: 0.0, c })
    }

    /// `a·e^{-rate·t}` as a decay profile.
    pub fn exp_decay(a: f64, rate: f64) -> Self {
        Self::new(ClassKind::KlSection, Form::ExpDecay { a, rate })
    }

    /// `a·(1 + rate·t)^{-power}` as a decay profile.
    pub fn rational_decay(a: f64, rate: f64, power: f64) -> Self {
        Self::new(ClassKind::KlSection, Form::RationalDecay { a, rate, power })
    }

    /// `a·r + b·ln(1 + r)`
    pub fn log1p(a: f64, b: f64) -> Self {
        Self::new(ClassKind::KInf, Form::Log1p { a, b })
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>, kind: ClassKind) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Validation("tabulated function needs at least two (x, y) pairs of equal length".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("tabulated abscissae must be finite and strictly increasing".into()));
        }
        let dh = *xs.last().unwrap();
        Ok(Self::new(kind, Form::Tabulated { xs, ys }).with_domain_hint(dh))
    }

    pub fn custom<F>(name: &str, kind: ClassKind, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(kind, Form::Custom { name: name.to_string(), f: Arc::new(f) })
    }

    pub fn min(f: Self, g: Self) -> Self {
        use ClassKind::*;
        let kind = match (f.kind, g.kind) {
            (KInf, KInf) => KInf,
            (a, b) if a.is_k() && b.is_k() => K,
            _ => Nondecreasing,
        };
        let dh = f.domain_hint.min(g.domain_hint);
        Self::new(kind, Form::Min(Box::new(f), Box::new(g))).with_domain_hint(dh)
    }

    pub fn max(f: Self, g: Self) -> Self {
        use ClassKind::*;
        let kind = match (f.kind, g.kind) {
            (KInf, b) if b.is_k() => KInf,
            (a, KInf) if a.is_k() => KInf,
            (a, b) if a.is_k() && b.is_k() => K,
            _ => Nondecreasing,
        };
        let dh = f.domain_hint.min(g.domain_hint);
        Self::new(kind, Form::Max(Box::new(f), Box::new(g))).with_domain_hint(dh)
    }

    pub fn sum(f: Self, g: Self) -> Self {
        use ClassKind::*;
        let kind = match (f.kind, g.kind) {
            (KInf, b) if b.is_k() => KInf,
            (a, KInf) if a.is_k() => KInf,
            (a, b) if a.is_k() && b.is_k() => K,
            _ => Nondecreasing,
        };
        let dh = f.domain_hint.min(g.domain_hint);
        Self::new(kind, Form::Sum(Box::new(f), Box::new(g))).with_domain_hint(dh)
    }

    /// Numerical inverse of a strictly increasing function.
    pub fn inverse(f: Self) -> Self {
        let kind = if f.kind.is_k() { f.kind } else { ClassKind::Nondecreasing };
        let dh = f.value(f.domain_hint);
        let dh = if dh.is_finite() && dh > 0.0 { dh } else { DEFAULT_DOMAIN_HINT };
        Self::new(kind, Form::Inverse(Box::new(f))).with_domain_hint(dh)
    }

    pub fn with_domain_hint(mut self, domain_hint: f64) -> Self {
        self.domain_hint = domain_hint;
        self
    }

    pub fn with_kind(mut self, kind: ClassKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn domain_hint(&self) -> f64 {
        self.domain_hint
    }

    /// Evaluate without argument checks. Callers guarantee `r >= 0`.
    pub fn value(&self, r: f64) -> f64 {
        match &self.form {
            Form::AffinePower { a, p, b, c } => {
                let pw = if *a == 0.0 { 0.0 } else { a * r.powf(*p) };
                pw + b * r + c
            }
            Form::ExpDecay { a, rate } => a * (-rate * r).exp(),
            Form::RationalDecay { a, rate, power } => a * (1.0 + rate * r).powf(-power),
            Form::Log1p { a, b } => a * r + b * r.ln_1p(),
            Form::Min(f, g) => f.value(r).min(g.value(r)),
            Form::Max(f, g) => f.value(r).max(g.value(r)),
            Form::Sum(f, g) => f.value(r) + g.value(r),
            Form::Compose { outer, inner } => outer.value(inner.value(r)),
            Form::Inverse(f) => invert_unbounded(f, r),
            Form::Tabulated { xs, ys } => interp_linear(xs, ys, r),
            Form::Custom { f, .. } => f(r),
        }
    }

    /// `f(r)` for `r >= 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("comparison function evaluated at {r}")));
        }
        Ok(self.value(r))
    }

    /// Composition `self ∘ inner`.
    ///
    /// The result's validated domain is shrunk to the largest `r <= inner.domain_hint`
    /// whose image stays inside `self`'s domain.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        use ClassKind::*;
        if self.kind == KlSection || inner.kind == KlSection {
            return Err(Error::Domain("decay profiles cannot be composed as comparison functions".into()));
        }
        let mut dh = inner.domain_hint;
        let image = inner.value(dh);
        if !(image <= self.domain_hint) {
            dh = bisect_last_below(inner, self.domain_hint, dh);
        }
        if !(dh > 0.0) || !dh.is_finite() {
            return Err(Error::Domain(format!("inner function leaves the outer domain [0, {}] immediately", self.domain_hint)));
        }
        let kind = match (self.kind, inner.kind) {
            (KInf, KInf) => KInf,
            (a, b) if a.is_k() && b.is_k() => K,
            _ => Nondecreasing,
        };
        Ok(Self::new(kind, Form::Compose { outer: Box::new(self.clone()), inner: Box::new(inner.clone()) }).with_domain_hint(dh))
    }
}

/// Largest `r` in `[0, hi]` with `f(r) <= bound` for increasing `f`.
fn bisect_last_below(f: &ComparisonFunction, bound: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f.value(mid) <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    lo
}

fn interp_linear(xs: &[f64], ys: &[f64], r: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|&x| x <= r) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let (x0, x1, y0, y1) = (xs[i], xs[i + 1], ys[i], ys[i + 1]);
    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
}

/// Inverse of an increasing function on `[0, ∞)` with bracket doubling; `∞` if unreachable.
fn invert_unbounded(f: &ComparisonFunction, y: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while f.value(hi) < y {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    let tol = 1e-14 * y;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let fm = f.value(mid);
        if (fm - y).abs() <= tol {
            return mid;
        }
        if fm < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `f(r)` for `r >= 0`.
pub fn eval_k(f: &ComparisonFunction, r: f64) -> Result<f64> {
    f.eval(r)
}

/// Find `r` with `|f(r) - y| <= tol` by bracketing bisection on `[0, domain_hint]`.
pub fn invert_k(f: &ComparisonFunction, y: f64, tol: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("inversion target {y} is negative")));
    }
    let f0 = f.value(0.0);
    if (f0 - y).abs() <= tol {
        return Ok(0.0);
    }
    let dh = f.domain_hint;
    let fmax = f.value(dh);
    if y > fmax + tol {
        return Err(Error::Range { target: y, max: fmax });
    }
    // bracket doubling from below
    let mut lo = 0.0;
    let mut flo = f0;
    let mut hi = dh.min(1.0);
    let mut fhi = f.value(hi);
    while fhi < y {
        if fhi < flo {
            return Err(Error::Validation(format!("function decreases on [{lo}, {hi}]")));
        }
        lo = hi;
        flo = fhi;
        hi = (2.0 * hi).min(dh);
        fhi = f.value(hi);
    }
    if (fhi - y).abs() <= tol {
        return Ok(hi);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f.value(mid);
        if !(flo <= fm && fm <= fhi) {
            return Err(Error::Validation(format!("function is not monotone on bracket [{lo}, {hi}] (f({mid}) = {fm})")));
        }
        if (fm - y).abs() <= tol {
            return Ok(mid);
        }
        if fm < y {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if hi - lo <= f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            return Ok(if (flo - y).abs() < (fhi - y).abs() { lo } else { hi });
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Composition `f ∘ g`.
pub fn compose_k(f: &ComparisonFunction, g: &ComparisonFunction) -> Result<ComparisonFunction> {
    f.compose(g)
}

/// `β(r, t) = outer(amplitude(r) · decay(t))`.
#[derive(Clone, Debug)]
pub struct KLFunction {
    amplitude: ComparisonFunction,
    decay: ComparisonFunction,
    outer: Option<ComparisonFunction>,
}

impl KLFunction {
    pub fn new(amplitude: ComparisonFunction, decay: ComparisonFunction) -> Self {
        Self { amplitude, decay, outer: None }
    }

    /// `r·e^{-rate·t}`, scaled by `gain`.
    pub fn exponential(gain: f64, rate: f64) -> Self {
        Self::new(ComparisonFunction::linear(gain), ComparisonFunction::exp_decay(1.0, rate))
    }

    /// Post-compose with a K∞ map: `outer ∘ β`.
    pub fn with_outer(mut self, outer: ComparisonFunction) -> Self {
        self.outer = Some(match self.outer.take() {
            Some(prev) => ComparisonFunction::new(
                outer.kind,
                Form::Compose { outer: Box::new(outer.clone()), inner: Box::new(prev.clone()) },
            )
            .with_domain_hint(prev.domain_hint),
            None => outer,
        });
        self
    }

    pub fn amplitude(&self) -> &ComparisonFunction {
        &self.amplitude
    }

    pub fn decay(&self) -> &ComparisonFunction {
        &self.decay
    }

    pub fn outer(&self) -> Option<&ComparisonFunction> {
        self.outer.as_ref()
    }

    pub fn value(&self, r: f64, t: f64) -> f64 {
        let inner = self.amplitude.value(r) * self.decay.value(t);
        match &self.outer {
            Some(o) => o.value(inner),
            None => inner,
        }
    }

    pub fn eval(&self, r: f64, t: f64) -> Result<f64> {
        if !(r >= 0.0) || !(t >= 0.0) {
            return Err(Error::Domain(format!("KL function evaluated at ({r}, {t})")));
        }
        Ok(self.value(r, t))
    }

    /// The section `r ↦ β(r, t)` as a comparison function.
    pub fn at_time(&self, t: f64) -> ComparisonFunction {
        let scaled = ComparisonFunction::linear(self.decay.value(t));
        let base = ComparisonFunction::new(
            self.amplitude.kind,
            Form::Compose { outer: Box::new(scaled), inner: Box::new(self.amplitude.clone()) },
        )
        .with_domain_hint(self.amplitude.domain_hint);
        match &self.outer {
            Some(o) => ComparisonFunction::new(o.kind, Form::Compose { outer: Box::new(o.clone()), inner: Box::new(base) })
                .with_domain_hint(self.amplitude.domain_hint),
            None => base,
        }
    }
}

/// `β(r, t)` for `r, t >= 0`.
pub fn eval_kl(beta: &KLFunction, r: f64, t: f64) -> Result<f64> {
    beta.eval(r, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NotZeroAtZero,
    NotIncreasing,
    NotNonincreasing,
    NotDecaying,
    Negative,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending argument (`r`, or `t` for decay checks).
    pub at: f64,
    /// Second coordinate for KL checks (`t` for amplitude checks, `r` for decay checks).
    pub other: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub domain_hint: f64,
    pub violations: Vec<Violation>,
    /// Total violations found; `violations` keeps the first few.
    pub violation_count: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    fn push(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < 32 {
            self.violations.push(v);
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "no violations on {} grid points over [0, {}]", self.grid_size, self.domain_hint)
        } else {
            write!(f, "{} violations; first: {:?}", self.violation_count, self.violations[0])
        }
    }
}

/// Half uniform, half geometric grid on `[0, dh]`, starting at 0.
pub fn validation_grid(dh: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let mut g = linspace(0.0, dh, n / 2 + 1);
    if n >= 4 {
        g.extend(logspace(dh * 1e-6, dh, n - n / 2 - 1));
    }
    sort_dedup(&mut g);
    g
}

/// Anything whose class can be checked by sampling.
pub trait ClassCheck {
    fn validate(&self, grid_size: usize) -> ValidationReport;
}

impl ClassCheck for ComparisonFunction {
    fn validate(&self, grid_size: usize) -> ValidationReport {
        let grid = validation_grid(self.domain_hint, grid_size);
        let mut rep =
            ValidationReport { grid_size: grid.len(), domain_hint: self.domain_hint, violations: vec![], violation_count: 0 };
        let vals: Vec<f64> = grid.iter().map(|&r| self.value(r)).collect();
        match self.kind {
            ClassKind::K | ClassKind::KInf => {
                if vals[0].abs() > 1e-12 {
                    rep.push(Violation { kind: ViolationKind::NotZeroAtZero, at: 0.0, other: None, value: vals[0] });
                }
                for i in 1..grid.len() {
                    if !(vals[i] > vals[i - 1]) {
                        rep.push(Violation { kind: ViolationKind::NotIncreasing, at: grid[i], other: None, value: vals[i] });
                    }
                }
            }
            ClassKind::Nondecreasing => {
                for i in 1..grid.len() {
                    if vals[i] < vals[i - 1] {
                        rep.push(Violation { kind: ViolationKind::NotIncreasing, at: grid[i], other: None, value: vals[i] });
                    }
                }
            }
            ClassKind::KlSection => {
                for i in 1..grid.len() {
                    if vals[i] > vals[i - 1] {
                        rep.push(Violation { kind: ViolationKind::NotNonincreasing, at: grid[i], other: None, value: vals[i] });
                    }
                }
                let last = *vals.last().unwrap();
                if !(last < KL_DECAY_TOL * vals[0]) {
                    rep.push(Violation { kind: ViolationKind::NotDecaying, at: self.domain_hint, other: None, value: last });
                }
            }
        }
        for (&r, &v) in grid.iter().zip(&vals) {
            if !v.is_finite() {
                rep.push(Violation { kind: ViolationKind::NonFinite, at: r, other: None, value: v });
            } else if v < 0.0 {
                rep.push(Violation { kind: ViolationKind::Negative, at: r, other: None, value: v });
            }
        }
        rep
    }
}

/// Relative level the decay must reach by the end of its validated horizon.
pub const KL_DECAY_TOL: f64 = 1e-3;

impl ClassCheck for KLFunction {
    fn validate(&self, grid_size: usize) -> ValidationReport {
        let r_grid = validation_grid(self.amplitude.domain_hint, grid_size);
        let t_grid = validation_grid(self.decay.domain_hint, grid_size);
        let mut rep = ValidationReport {
            grid_size: r_grid.len(),
            domain_hint: self.amplitude.domain_hint,
            violations: vec![],
            violation_count: 0,
        };
        let d0 = self.decay.value(0.0);
        // sections in r at times where the decay has not underflowed
        let t_sections: Vec<f64> =
            t_grid.iter().copied().filter(|&t| self.decay.value(t) > 1e-12 * d0).step_by((grid_size / 16).max(1)).collect();
        for &t in &t_sections {
            let v0 = self.value(0.0, t);
            if v0.abs() > 1e-12 {
                rep.push(Violation { kind: ViolationKind::NotZeroAtZero, at: 0.0, other: Some(t), value: v0 });
            }
            let mut prev = v0;
            for &r in &r_grid[1..] {
                let v = self.value(r, t);
                if !v.is_finite() {
                    rep.push(Violation { kind: ViolationKind::NonFinite, at: r, other: Some(t), value: v });
                } else if !(v > prev) {
                    rep.push(Violation { kind: ViolationKind::NotIncreasing, at: r, other: Some(t), value: v });
                }
                prev = v;
            }
        }
        for &r in r_grid.iter().skip(1).step_by((grid_size / 16).max(1)) {
            let b0 = self.value(r, 0.0);
            let mut prev = b0;
            for &t in &t_grid[1..] {
                let v = self.value(r, t);
                if v > prev {
                    rep.push(Violation { kind: ViolationKind::NotNonincreasing, at: t, other: Some(r), value: v });
                }
                prev = v;
            }
            if !(prev < KL_DECAY_TOL * b0) {
                rep.push(Violation { kind: ViolationKind::NotDecaying, at: self.decay.domain_hint, other: Some(r), value: prev });
            }
        }
        rep
    }
}

/// Sample-based class validation. Violations are reported, never raised.
pub fn validate_class<C: ClassCheck + ?Sized>(f: &C, grid_size: usize) -> ValidationReport {
    f.validate(grid_size.max(2))
}

// ---------------------------------------------------------------------------
// Descriptors

/// Textual form of a comparison function, e.g.
/// `{form = "affine-power", params = [2.0, 1.0]}` or
/// `{form = "min-of-two", args = [{...}, {...}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDescriptor {
    pub form: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<FunctionDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ys: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ClassKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_hint: Option<f64>,
}

pub const SUPPORTED_FORMS: &[&str] = &[
    "identity",
    "constant",
    "affine-power",
    "exp-decay",
    "rational-decay",
    "log1p",
    "min-of-two",
    "max-of-two",
    "sum-of-two",
    "composition",
    "inverse",
    "tabulated",
];

impl FunctionDescriptor {
    pub fn new(form: &str, params: &[f64]) -> Self {
        Self { form: form.into(), params: params.to_vec(), args: vec![], xs: vec![], ys: vec![], kind: None, domain_hint: None }
    }
}

fn param(d: &FunctionDescriptor, i: usize, default: Option<f64>) -> Result<f64> {
    d.params
        .get(i)
        .copied()
        .or(default)
        .ok_or_else(|| Error::Config(format!("form '{}' needs at least {} parameters, got {}", d.form, i + 1, d.params.len())))
}

fn two_args(d: &FunctionDescriptor) -> Result<(ComparisonFunction, ComparisonFunction)> {
    if d.args.len() != 2 {
        return Err(Error::Config(format!("form '{}' takes exactly two args", d.form)));
    }
    Ok((ComparisonFunction::from_descriptor(&d.args[0])?, ComparisonFunction::from_descriptor(&d.args[1])?))
}

impl ComparisonFunction {
    pub fn from_descriptor(d: &FunctionDescriptor) -> Result<Self> {
        let f = match d.form.as_str() {
            "identity" => Self::identity(),
            "constant" => Self::constant(param(d, 0, None)?),
            "affine-power" => {
                Self::affine_power(param(d, 0, None)?, param(d, 1, Some(1.0))?, param(d, 2, Some(0.0))?, param(d, 3, Some(0.0))?)
            }
            "exp-decay" => Self::exp_decay(param(d, 0, None)?, param(d, 1, None)?),
            "rational-decay" => Self::rational_decay(param(d, 0, None)?, param(d, 1, None)?, param(d, 2, Some(1.0))?),
            "log1p" => Self::log1p(param(d, 0, None)?, param(d, 1, None)?),
            "min-of-two" | "min" => {
                let (a, b) = two_args(d)?;
                Self::min(a, b)
            }
            "max-of-two" | "max" => {
                let (a, b) = two_args(d)?;
                Self::max(a, b)
            }
            "sum-of-two" | "sum" => {
                let (a, b) = two_args(d)?;
                Self::sum(a, b)
            }
            "composition" | "compose" => {
                let (a, b) = two_args(d)?;
                a.compose(&b)?
            }
            "inverse" => {
                if d.args.len() != 1 {
                    return Err(Error::Config("form 'inverse' takes exactly one arg".into()));
                }
                Self::inverse(Self::from_descriptor(&d.args[0])?)
            }
            "tabulated" => Self::tabulated(d.xs.clone(), d.ys.clone(), d.kind.unwrap_or(ClassKind::KInf))?,
            other => {
                return Err(Error::Config(format!(
                    "unknown function form '{other}'; supported forms: {}",
                    SUPPORTED_FORMS.join(", ")
                )))
            }
        };
        let f = match d.kind {
            Some(k) => f.with_kind(k),
            None => f,
        };
        Ok(match d.domain_hint {
            Some(dh) => f.with_domain_hint(dh),
            None => f,
        })
    }

    /// Descriptor for this function; closures have none.
    pub fn to_descriptor(&self) -> Result<FunctionDescriptor> {
        let mut d = match &self.form {
            Form::AffinePower { a, p, b, c } => FunctionDescriptor::new("affine-power", &[*a, *p, *b, *c]),
            Form::ExpDecay { a, rate } => FunctionDescriptor::new("exp-decay", &[*a, *rate]),
            Form::RationalDecay { a, rate, power } => FunctionDescriptor::new("rational-decay", &[*a, *rate, *power]),
            Form::Log1p { a, b } => FunctionDescriptor::new("log1p", &[*a, *b]),
            Form::Min(x, y) | Form::Max(x, y) | Form::Sum(x, y) => {
                let name = match &self.form {
                    Form::Min(..) => "min-of-two",
                    Form::Max(..) => "max-of-two",
                    _ => "sum-of-two",
                };
                let mut d = FunctionDescriptor::new(name, &[]);
                d.args = vec![x.to_descriptor()?, y.to_descriptor()?];
                d
            }
            Form::Compose { outer, inner } => {
                let mut d = FunctionDescriptor::new("composition", &[]);
                d.args = vec![outer.to_descriptor()?, inner.to_descriptor()?];
                d
            }
            Form::Inverse(x) => {
                let mut d = FunctionDescriptor::new("inverse", &[]);
                d.args = vec![x.to_descriptor()?];
                d
            }
            Form::Tabulated { xs, ys } => {
                let mut d = FunctionDescriptor::new("tabulated", &[]);
                d.xs = xs.clone();
                d.ys = ys.clone();
                d
            }
            Form::Custom { name, .. } => {
                return Err(Error::Config(format!("custom function '{name}' has no textual descriptor")))
            }
        };
        d.kind = Some(self.kind);
        d.domain_hint = Some(self.domain_hint);
        Ok(d)
    }
}

/// Textual form of a KL function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlDescriptor {
    pub amplitude: FunctionDescriptor,
    pub decay: FunctionDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<FunctionDescriptor>,
}

impl KLFunction {
    pub fn from_descriptor(d: &KlDescriptor) -> Result<Self> {
        let mut beta =
            Self::new(ComparisonFunction::from_descriptor(&d.amplitude)?, ComparisonFunction::from_descriptor(&d.decay)?);
        if let Some(o) = &d.outer {
            beta = beta.with_outer(ComparisonFunction::from_descriptor(o)?);
        }
        Ok(beta)
    }

    pub fn to_descriptor(&self) -> Result<KlDescriptor> {
        Ok(KlDescriptor {
            amplitude: self.amplitude.to_descriptor()?,
            decay: self.decay.to_descriptor()?,
            outer: self.outer.as_ref().map(|o| o.to_descriptor()).transpose()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq() -> ComparisonFunction {
        ComparisonFunction::power(1.0, 2.0)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_k(&ComparisonFunction::identity(), 0.0).unwrap(), 0.0);
        assert_eq!(eval_k(&sq(), 3.0).unwrap(), 9.0);
        let m = ComparisonFunction::min(ComparisonFunction::power(1.0, 0.5), ComparisonFunction::linear(0.5));
        assert_eq!(eval_k(&m, 4.0).unwrap(), 2.0);
        assert!(matches!(eval_k(&sq(), -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn invert_examples() {
        let r = invert_k(&sq(), 9.0, 1e-10).unwrap();
        assert!((r * r - 9.0).abs() <= 1e-10);
        assert_eq!(invert_k(&sq(), 0.0, 1e-10).unwrap(), 0.0);
        let f = ComparisonFunction::log1p(1.0, 1.0);
        let y = 2.0 + 3f64.ln();
        let r = invert_k(&f, y, 1e-10).unwrap();
        // forward-evaluation oracle: the residual is what bisection certifies
        assert!((r + r.ln_1p() - y).abs() <= 1e-10);
        assert!((r - 2.0).abs() < 1e-9);
    }

    #[test]
    fn invert_range_and_monotonicity_errors() {
        let f = sq().with_domain_hint(10.0);
        assert!(matches!(invert_k(&f, 101.0, 1e-10), Err(Error::Range { .. })));
        let wave = ComparisonFunction::custom("bump", ClassKind::K, |r: f64| {
            r * (4.0 - r).max(0.0) + if r > 2.0 { 10.0 * (r - 2.0) } else { 0.0 }
        })
        .with_domain_hint(8.0);
        // f(1)=3, f(2)=4, f(3)=13: bisection on [2,4] stays monotone; check the non-monotone case instead
        let saw = ComparisonFunction::custom(
            "saw",
            ClassKind::K,
            |r: f64| if r < 3.0 { r } else { 6.0 - r + 10.0 * (r - 3.0).powi(2) },
        )
        .with_domain_hint(8.0);
        assert!(invert_k(&wave, 5.0, 1e-10).is_ok());
        assert!(invert_k(&saw, 2.95, 1e-12).is_ok());
        let dip = ComparisonFunction::custom("dip", ClassKind::K, |r: f64| if (2.5..3.5).contains(&r) { 0.5 } else { r })
            .with_domain_hint(4.0);
        assert!(matches!(invert_k(&dip, 3.5, 1e-12), Err(Error::Validation(_))));
    }

    #[test]
    fn compose_examples() {
        let g = ComparisonFunction::power(3.0, 1.5);
        let id_g = ComparisonFunction::identity().compose(&g).unwrap();
        for r in [0.0, 0.3, 2.0, 17.0] {
            assert_eq!(id_g.value(r), g.value(r));
        }
        let h = ComparisonFunction::linear(2.0).compose(&sq()).unwrap();
        assert_eq!(h.value(2.0), 8.0);
        let h = ComparisonFunction::power(1.0, 0.5).compose(&ComparisonFunction::power(1.0, 4.0)).unwrap();
        assert!((h.value(3.0) - 9.0).abs() < 1e-12);
        assert_eq!(h.kind(), ClassKind::KInf);
        // the validated domain shrinks to where the inner image stays inside the outer domain
        assert!((h.domain_hint() - 1e6f64.powf(0.25)).abs() < 1e-6);
        assert!(matches!(ComparisonFunction::exp_decay(1.0, 1.0).compose(&sq()), Err(Error::Domain(_))));
    }

    #[test]
    fn kl_examples() {
        let b = KLFunction::exponential(1.0, 1.0);
        assert_eq!(eval_kl(&b, 1.0, 0.0).unwrap(), 1.0);
        assert!((eval_kl(&b, 2.0, 2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        let b = KLFunction::exponential(1.0, 0.693);
        assert!((eval_kl(&b, 1.0, 1.0).unwrap() - (-0.693f64).exp()).abs() < 1e-15);
        assert!((eval_kl(&b, 1.0, 1.0).unwrap() - 0.50005).abs() < 1e-4);
        assert_eq!(eval_kl(&b, 0.0, 3.0).unwrap(), 0.0);
        assert!(eval_kl(&b, 1.0, -1.0).is_err());
    }

    #[test]
    fn validate_examples() {
        let id = ComparisonFunction::identity().with_domain_hint(10.0);
        assert!(validate_class(&id, 256).passed());
        let sin = ComparisonFunction::custom("sin", ClassKind::K, f64::sin).with_domain_hint(10.0);
        let rep = validate_class(&sin, 256);
        assert!(!rep.passed());
        let first = &rep.violations[0];
        assert_eq!(first.kind, ViolationKind::NotIncreasing);
        assert!((first.at - std::f64::consts::FRAC_PI_2).abs() < 0.1, "first violation at {}", first.at);
        let b = KLFunction::exponential(1.0, 1.0);
        assert!(validate_class(&b, 256).passed(), "{}", validate_class(&b, 256));
    }

    #[test]
    fn validate_flags_bad_decay_and_offsets() {
        let not_zero = ComparisonFunction::affine_power(1.0, 1.0, 0.0, 1.0).with_kind(ClassKind::K);
        let rep = validate_class(&not_zero, 64);
        assert_eq!(rep.violations[0].kind, ViolationKind::NotZeroAtZero);
        let slow = KLFunction::new(ComparisonFunction::identity(), ComparisonFunction::rational_decay(1.0, 1.0, 1.0))
            .with_outer(ComparisonFunction::identity());
        // 1/(1+t) reaches 1e-6 < 1e-3 by t = 1e6
        assert!(validate_class(&slow, 128).passed());
        let stuck =
            KLFunction::new(ComparisonFunction::identity(), ComparisonFunction::constant(1.0).with_kind(ClassKind::KlSection));
        assert!(validate_class(&stuck, 128).violations.iter().any(|v| v.kind == ViolationKind::NotDecaying));
    }

    #[test]
    fn descriptors_roundtrip_and_unknown_form() {
        let f = ComparisonFunction::max(
            ComparisonFunction::power(1.0, 2.0),
            ComparisonFunction::inverse(ComparisonFunction::log1p(1.0, 2.0)),
        );
        let d = f.to_descriptor().unwrap();
        let text = toml::to_string(&d).unwrap();
        let back: FunctionDescriptor = toml::from_str(&text).unwrap();
        assert_eq!(back, d);
        let g = ComparisonFunction::from_descriptor(&back).unwrap();
        for r in [0.0, 0.5, 3.0, 40.0] {
            assert_eq!(g.value(r), f.value(r));
        }
        let err = ComparisonFunction::from_descriptor(&FunctionDescriptor::new("spline", &[])).unwrap_err();
        assert!(err.to_string().contains("affine-power"));
    }

    #[test]
    fn at_time_and_outer() {
        let b = KLFunction::exponential(2.0, 1.0).with_outer(ComparisonFunction::power(1.0, 0.5));
        let s = b.at_time(1.0);
        assert!((s.value(4.0) - (8.0 * (-1f64).exp()).sqrt()).abs() < 1e-12);
        assert_eq!(b.value(4.0, 1.0), s.value(4.0));
    }

    fn k_family() -> impl Strategy<Value = ComparisonFunction> {
        prop_oneof![
            (0.1f64..5.0, 0.3f64..3.0).prop_map(|(a, p)| ComparisonFunction::power(a, p)),
            (0.0f64..3.0, 0.1f64..3.0).prop_map(|(a, b)| ComparisonFunction::log1p(a, b)),
            (0.1f64..3.0, 0.3f64..2.0)
                .prop_map(|(a, p)| ComparisonFunction::min(ComparisonFunction::power(a, p), ComparisonFunction::identity())),
            (0.1f64..3.0, 0.3f64..2.0)
                .prop_map(|(a, p)| ComparisonFunction::max(ComparisonFunction::power(a, p), ComparisonFunction::linear(0.5))),
        ]
    }

    proptest! {
        #[test]
        fn increasing_on_grid(f in k_family()) {
            let f = f.with_domain_hint(100.0);
            prop_assert!(validate_class(&f, 256).passed());
        }

        #[test]
        fn invert_after_eval(f in k_family(), r in 0.0f64..50.0) {
            let f = f.with_domain_hint(100.0);
            let tol = 1e-10;
            let back = invert_k(&f, f.value(r), tol).unwrap();
            prop_assert!((f.value(back) - f.value(r)).abs() <= 2.0 * tol);
        }

        #[test]
        fn weak_subadditivity(f in k_family(), a in 0.0f64..100.0, b in 0.0f64..100.0) {
            prop_assert!(f.value(a + b) <= f.value(2.0 * a) + f.value(2.0 * b) + 1e-12 * f.value(a + b));
        }
    }
}
