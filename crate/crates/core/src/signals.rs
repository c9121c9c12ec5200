//! Piecewise-smooth input signals and the two hybrid input norms.
//!
//! A signal is a list of segments `[start, end)`, each holding one scalar
//! wave per component, plus explicit values at impulse instants. Flow
//! evaluation ignores the point values; jump evaluation uses them when set.
//!
//! All norms are taken over half-open windows `(a, b]` and count the
//! instantaneous values at impulse times in the window.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compfun::{ClassKind, ComparisonFunction};
use crate::error::{Error, Result};
use crate::hybrid_time::ImpulseSequence;
use crate::quad::{adaptive_simpson, golden_max, linspace, norm, sort_dedup};

pub const ENERGY_TOL: f64 = 1e-10;
const SUP_GRID: usize = 129;
const ROOT_GRID: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    Hold,
    Linear,
}

/// One scalar component on one segment.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Wave {
    Constant {
        value: f64,
    },
    /// `Σ c_k t^k` in absolute time.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `offset + amplitude · sin(omega·t + phase)`
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Table {
        ts: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        interpolation: Interpolation,
    },
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wave::Constant { value } => write!(f, "Constant({value})"),
            Wave::Polynomial { coeffs } => write!(f, "Polynomial({coeffs:?})"),
            Wave::Sinusoid { amplitude, omega, phase, offset } => {
                write!(f, "Sinusoid({offset} + {amplitude}·sin({omega}t + {phase}))")
            }
            Wave::Table { ts, interpolation, .. } => write!(f, "Table({} knots, {interpolation:?})", ts.len()),
            Wave::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Wave {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Wave::Constant { value } => *value,
            Wave::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            Wave::Sinusoid { amplitude, omega, phase, offset } => offset + amplitude * (omega * t + phase).sin(),
            Wave::Table { ts, values, interpolation } => {
                let i = ts.partition_point(|&s| s <= t);
                if i == 0 {
                    values[0]
                } else if i >= ts.len() {
                    values[ts.len() - 1]
                } else {
                    match interpolation {
                        Interpolation::Hold => values[i - 1],
                        Interpolation::Linear => {
                            let (t0, t1) = (ts[i - 1], ts[i]);
                            values[i - 1] + (values[i] - values[i - 1]) * (t - t0) / (t1 - t0)
                        }
                    }
                }
            }
            Wave::Custom(f) => f(t),
        }
    }

    fn knots(&self) -> &[f64] {
        match self {
            Wave::Table { ts, .. } => ts,
            _ => &[],
        }
    }

    fn validate(&self) -> Result<()> {
        if let Wave::Table { ts, values, .. } = self {
            if ts.is_empty() || ts.len() != values.len() {
                return Err(Error::Validation("table wave needs matching, non-empty ts and values".into()));
            }
            if ts.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Validation("table wave times must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: f64,
    /// Open right end; the last segment also covers the horizon itself.
    pub end: f64,
    pub components: Vec<Wave>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointValue {
    pub t: f64,
    pub value: Vec<f64>,
}

/// Input `u: [0, horizon] → R^m`.
#[derive(Debug, Clone)]
pub struct InputSignal {
    dim: usize,
    horizon: f64,
    segments: Vec<Segment>,
    point_values: Vec<PointValue>,
    scale: f64,
    clip: Option<f64>,
}

impl InputSignal {
    pub fn new(dim: usize, horizon: f64, segments: Vec<Segment>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("input dimension must be at least 1".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::Validation(format!("signal horizon must be positive, got {horizon}")));
        }
        if segments.is_empty() {
            return Err(Error::Validation("signal needs at least one segment".into()));
        }
        if segments[0].start != 0.0 {
            return Err(Error::Validation("first segment must start at 0".into()));
        }
        for (k, s) in segments.iter().enumerate() {
            if s.components.len() != dim {
                return Err(Error::Validation(format!("segment {k} has {} components, expected {dim}", s.components.len())));
            }
            if !(s.end > s.start) {
                return Err(Error::Validation(format!("segment {k} is empty or reversed")));
            }
            s.components.iter().try_for_each(Wave::validate)?;
        }
        if let Some(w) = segments.windows(2).find(|w| w[0].end != w[1].start) {
            return Err(Error::Validation(format!("segments leave a gap or overlap at {}", w[0].end)));
        }
        if segments.last().unwrap().end < horizon {
            return Err(Error::Validation(format!("segments stop before the horizon {horizon}")));
        }
        Ok(Self { dim, horizon, segments, point_values: vec![], scale: 1.0, clip: None })
    }

    pub fn zero(dim: usize, horizon: f64) -> Self {
        Self::constant(&vec![0.0; dim], horizon)
    }

    pub fn constant(value: &[f64], horizon: f64) -> Self {
        let comps = value.iter().map(|&v| Wave::Constant { value: v }).collect();
        Self::new(value.len(), horizon, vec![Segment { start: 0.0, end: horizon, components: comps }])
            .expect("constant signal is well formed")
    }

    /// Single-segment scalar signal.
    pub fn scalar(wave: Wave, horizon: f64) -> Result<Self> {
        Self::new(1, horizon, vec![Segment { start: 0.0, end: horizon, components: vec![wave] }])
    }

    pub fn from_fn<F>(dim: usize, horizon: f64, f: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        let comps = (0..dim)
            .map(|i| {
                let f = f.clone();
                Wave::Custom(Arc::new(move |t| f(t)[i]))
            })
            .collect();
        Self::new(dim, horizon, vec![Segment { start: 0.0, end: horizon, components: comps }])
            .expect("closure signal is well formed")
    }

    /// Set the value used by the jump map at impulse time `t`.
    pub fn with_point_value(mut self, t: f64, value: Vec<f64>) -> Result<Self> {
        if value.len() != self.dim {
            return Err(Error::Validation(format!("point value at {t} has dimension {}, expected {}", value.len(), self.dim)));
        }
        match self.point_values.binary_search_by(|p| p.t.partial_cmp(&t).unwrap()) {
            Ok(i) => self.point_values[i].value = value,
            Err(i) => self.point_values.insert(i, PointValue { t, value }),
        }
        Ok(self)
    }

    /// The signal multiplied by `k` (point values included).
    pub fn scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.scale *= k;
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn point_values(&self) -> &[PointValue] {
        &self.point_values
    }

    pub fn clip_level(&self) -> Option<f64> {
        self.clip
    }

    /// Times where the flow value may be discontinuous or non-smooth, inside `(0, horizon)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.segments.iter().skip(1).map(|s| s.start).collect();
        for s in &self.segments {
            for w in &s.components {
                v.extend(w.knots().iter().copied().filter(|&k| k > s.start && k < s.end));
            }
        }
        v.retain(|&t| t > 0.0 && t < self.horizon);
        sort_dedup(&mut v);
        v
    }

    fn segment_at(&self, t: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.start <= t);
        &self.segments[i.saturating_sub(1)]
    }

    fn finish(&self, out: &mut [f64]) {
        if self.scale != 1.0 {
            out.iter_mut().for_each(|v| *v *= self.scale);
        }
        if let Some(b) = self.clip {
            let n = norm(out);
            if n > b {
                let k = b / n;
                out.iter_mut().for_each(|v| *v *= k);
            }
        }
    }

    /// Value seen by the flow at `t` (point values ignored).
    pub fn eval_flow_into(&self, t: f64, out: &mut [f64]) {
        let seg = self.segment_at(t);
        for (o, w) in out.iter_mut().zip(&seg.components) {
            *o = w.value(t);
        }
        self.finish(out);
    }

    pub fn eval_flow(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_flow_into(t, &mut out);
        out
    }

    /// Value seen by the jump map at impulse time `t`.
    pub fn eval_at_impulse(&self, t: f64) -> Vec<f64> {
        match self.point_values.binary_search_by(|p| p.t.partial_cmp(&t).unwrap()) {
            Ok(i) => {
                let mut out = self.point_values[i].value.clone();
                self.finish(&mut out);
                out
            }
            Err(_) => self.eval_flow(t),
        }
    }

    pub fn flow_magnitude(&self, t: f64) -> f64 {
        norm(&self.eval_flow(t))
    }

    pub fn impulse_magnitude(&self, t: f64) -> f64 {
        norm(&self.eval_at_impulse(t))
    }

    /// Smooth pieces of `[a, b]`: split at segment boundaries and table knots.
    pub fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![a, b];
        cuts.extend(self.breakpoints().into_iter().filter(|&t| t > a && t < b));
        sort_dedup(&mut cuts);
        cuts.windows(2).map(|w| (w[0], w[1])).filter(|(x, y)| y > x).collect()
    }

    /// Essential supremum of `|u|` over `(a, b)`.
    pub fn ess_sup(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let mut best: f64 = 0.0;
        for (p, q) in self.pieces(a, b) {
            let f = |t: f64| self.piece_magnitude(p, q, t);
            let grid = linspace(p, q, SUP_GRID);
            let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
            let (k, &m) = vals.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap();
            best = best.max(m);
            let lo = grid[k.saturating_sub(1)];
            let hi = grid[(k + 1).min(grid.len() - 1)];
            let (_, refined) = golden_max(&f, lo, hi, 1e-12 * (q - p).max(1e-300));
            best = best.max(refined);
        }
        best
    }

    /// Flow value at `t` using the formula active on the smooth piece `[p, q]`.
    ///
    /// At the piece ends this gives the one-sided limits from inside the piece,
    /// which is what an integrator stepping across `[p, q]` must see.
    pub fn eval_on_piece(&self, p: f64, q: f64, t: f64, out: &mut [f64]) {
        let mid = 0.5 * (p + q);
        let seg = self.segment_at(mid);
        for (o, w) in out.iter_mut().zip(&seg.components) {
            *o = match w {
                // a held table is constant on the piece
                Wave::Table { interpolation: Interpolation::Hold, .. } => w.value(mid),
                _ => w.value(t),
            };
        }
        self.finish(out);
    }

    fn piece_magnitude(&self, p: f64, q: f64, t: f64) -> f64 {
        let mut out = vec![0.0; self.dim];
        self.eval_on_piece(p, q, t, &mut out);
        norm(&out)
    }

    /// Replace `u` by its truncation `u_b` with `|u_b| = min(|u|, b)`.
    pub fn truncate(&self, b: f64) -> Result<Self> {
        if !(b >= 0.0) {
            return Err(Error::Domain(format!("truncation level must be nonnegative, got {b}")));
        }
        let mut s = self.clone();
        s.clip = Some(self.clip.map_or(b, |c| c.min(b)));
        Ok(s)
    }
}

/// `‖u_(a,b]‖_{∞,γ}`: essential sup on the window, maxed with the impulse values inside it.
pub fn sup_norm(u: &InputSignal, a: f64, b: f64, gamma: &ImpulseSequence) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    gamma.in_window(a, b).iter().map(|&t| u.impulse_magnitude(t)).fold(u.ess_sup(a, b), f64::max)
}

/// Sup norm over the open window `(a, b)`: the input seen up to a left limit at `b`.
pub fn sup_norm_open(u: &InputSignal, a: f64, b: f64, gamma: &ImpulseSequence) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    gamma.in_window(a, b).iter().filter(|&&t| t < b).map(|&t| u.impulse_magnitude(t)).fold(u.ess_sup(a, b), f64::max)
}

fn check_gain(f: &ComparisonFunction, name: &str) -> Result<()> {
    match f.kind() {
        ClassKind::K | ClassKind::KInf => Ok(()),
        k => Err(Error::Validation(format!("{name} must be class K, got {k:?}"))),
    }
}

/// `∫_a^b ρ1(|u|)` by adaptive Simpson on each smooth piece.
pub fn flow_energy(u: &InputSignal, a: f64, b: f64, rho1: &ComparisonFunction) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let pieces = u.pieces(a, b);
    let tol = ENERGY_TOL / pieces.len() as f64;
    pieces.iter().map(|&(p, q)| adaptive_simpson(&|t: f64| rho1.value(u.piece_magnitude(p, q, t)), p, q, tol)).sum()
}

/// `‖u_(a,b]‖_{ρ1,ρ2,γ} = ∫_a^b ρ1(|u|) + Σ_{τ ∈ γ ∩ (a,b]} ρ2(|u(τ)|)`.
pub fn energy_norm(
    u: &InputSignal,
    a: f64,
    b: f64,
    gamma: &ImpulseSequence,
    rho1: &ComparisonFunction,
    rho2: &ComparisonFunction,
) -> Result<f64> {
    check_gain(rho1, "rho1")?;
    check_gain(rho2, "rho2")?;
    if !(b > a) {
        return Ok(0.0);
    }
    let jumps: f64 = gamma.in_window(a, b).iter().map(|&t| rho2.value(u.impulse_magnitude(t))).sum();
    Ok(flow_energy(u, a, b, rho1) + jumps)
}

/// Free-function form of [`InputSignal::truncate`].
pub fn truncate(u: &InputSignal, b: f64) -> Result<InputSignal> {
    u.truncate(b)
}

/// Exceedance set `{t ∈ [0, horizon] : |u(t)| > b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exceedance {
    pub measure: f64,
    pub impulse_count: usize,
}

/// Lebesgue measure of `{|u| > b}` on the horizon and the number of impulse times in it.
pub fn exceedance(u: &InputSignal, b: f64, gamma: &ImpulseSequence) -> Result<Exceedance> {
    if !(b >= 0.0) {
        return Err(Error::Domain(format!("exceedance level must be nonnegative, got {b}")));
    }
    let mut measure = 0.0;
    for (p, q) in u.pieces(0.0, u.horizon) {
        let h = |t: f64| u.piece_magnitude(p, q, t) - b;
        let grid = linspace(p, q, ROOT_GRID);
        let mut cuts = vec![p];
        for w in grid.windows(2) {
            let (ha, hb) = (h(w[0]), h(w[1]));
            if (ha > 0.0) != (hb > 0.0) {
                cuts.push(bisect_root(&h, w[0], w[1], ha > 0.0));
            }
        }
        cuts.push(q);
        for w in cuts.windows(2) {
            if w[1] > w[0] && h(0.5 * (w[0] + w[1])) > 0.0 {
                measure += w[1] - w[0];
            }
        }
    }
    let impulse_count = gamma.in_window(0.0, u.horizon).iter().filter(|&&t| u.impulse_magnitude(t) > b).count();
    Ok(Exceedance { measure, impulse_count })
}

fn bisect_root<F: Fn(f64) -> f64>(h: &F, mut lo: f64, mut hi: f64, lo_positive: bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (h(mid) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Textual form of an input signal; the horizon comes from the surrounding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub point_values: Vec<PointValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDescriptor {
    pub start: f64,
    /// Defaults to the run horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    pub components: Vec<Wave>,
}

impl SignalDescriptor {
    pub fn zero(dim: usize) -> Self {
        Self { constant: Some(vec![0.0; dim]), segments: vec![], point_values: vec![], scale: None }
    }

    pub fn build(&self, horizon: f64) -> Result<InputSignal> {
        let mut u = match (&self.constant, self.segments.is_empty()) {
            (Some(c), true) => {
                if c.is_empty() {
                    return Err(Error::Config("constant input needs at least one component".into()));
                }
                InputSignal::constant(c, horizon)
            }
            (None, false) => {
                let segs: Vec<Segment> = self
                    .segments
                    .iter()
                    .map(|s| Segment { start: s.start, end: s.end.unwrap_or(horizon), components: s.components.clone() })
                    .collect();
                let dim = segs[0].components.len();
                InputSignal::new(dim, horizon, segs).map_err(|e| Error::Config(e.to_string()))?
            }
            _ => return Err(Error::Config("input needs exactly one of `constant` or `segments`".into())),
        };
        for p in &self.point_values {
            u = u.with_point_value(p.t, p.value.clone()).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(k) = self.scale {
            u = u.scaled(k);
        }
        Ok(u)
    }
}

impl InputSignal {
    /// Descriptor for this signal; closure-based or truncated signals have none.
    pub fn to_descriptor(&self) -> Result<SignalDescriptor> {
        if self.clip.is_some() {
            return Err(Error::Config("truncated signals have no textual descriptor".into()));
        }
        if self.segments.iter().flat_map(|s| &s.components).any(|w| matches!(w, Wave::Custom(_))) {
            return Err(Error::Config("closure-based signals have no textual descriptor".into()));
        }
        Ok(SignalDescriptor {
            constant: None,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentDescriptor { start: s.start, end: Some(s.end), components: s.components.clone() })
                .collect(),
            point_values: self.point_values.clone(),
            scale: (self.scale != 1.0).then_some(self.scale),
        })
    }
}
