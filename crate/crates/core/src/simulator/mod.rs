//! Trajectory engine for impulsive systems
//!
//! ```text
//! x'(t) = f(t, x(t), u(t))          t ∉ γ
//! x(τ)  = x(τ⁻) + g(τ, x(τ⁻), u(τ))   τ ∈ γ
//! ```
//!
//! Solutions start by flowing: an impulse at `t0` itself is ignored. Impulse
//! times and input discontinuities are hard breakpoints for the stepper, so
//! every left limit is the accepted solution at that time and the post-jump
//! value is one evaluation of `g`.
//!
//! The stepper is deterministic. When the flow map is not Lipschitz in the
//! state, solutions need not be unique; the trajectory returned is the one
//! this stepper constructs.

pub mod assumptions;
pub mod integrator;
pub mod library;

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hybrid_time::ImpulseSequence;
use crate::quad::{gauss_legendre5_vec, norm, sort_dedup};
use crate::signals::InputSignal;

pub use assumptions::{
    validate_assumptions, AssumptionData, AssumptionEnvelopes, AssumptionReport, ChannelEnvelope, Check, SampleSpec,
};
pub use integrator::{IntegratorOptions, Method};
pub use library::SystemDescriptor;

use integrator::{integrate_piece, PieceEnd, Step};

/// Flow and jump maps. `jump` returns the increment added to the left limit.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn flow(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn jump(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);
}

type MapFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

struct FnDynamics {
    n: usize,
    m: usize,
    flow: Box<MapFn>,
    jump: Box<MapFn>,
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn flow(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.flow)(t, x, u, dx)
    }
    fn jump(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.jump)(t, x, u, dx)
    }
}

/// An impulsive system together with its declared assumption data.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    dynamics: Arc<dyn Dynamics>,
    pub assumptions: AssumptionData,
    descriptor: Option<SystemDescriptor>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SystemModel({}, n = {}, m = {})", self.name, self.state_dim(), self.input_dim())
    }
}

impl SystemModel {
    pub fn new(name: &str, dynamics: Arc<dyn Dynamics>) -> Self {
        Self { name: name.into(), dynamics, assumptions: AssumptionData::default(), descriptor: None }
    }

    /// Build from closures writing `f(t, x, u)` and `g(t, x, u)` into the output slice.
    pub fn from_fns<F, G>(name: &str, n: usize, m: usize, flow: F, jump: G) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(name, Arc::new(FnDynamics { n, m, flow: Box::new(flow), jump: Box::new(jump) }))
    }

    pub fn with_assumptions(mut self, a: AssumptionData) -> Self {
        self.assumptions = a;
        self
    }

    pub(crate) fn with_descriptor(mut self, d: SystemDescriptor) -> Self {
        self.descriptor = Some(d);
        self
    }

    pub fn descriptor(&self) -> Option<&SystemDescriptor> {
        self.descriptor.as_ref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn flow_into(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        self.dynamics.flow(t, x, u, dx)
    }

    pub fn jump_into(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        self.dynamics.jump(t, x, u, dx)
    }

    pub fn flow(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.state_dim()];
        self.flow_into(t, x, u, &mut dx);
        dx
    }

    pub fn jump(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.state_dim()];
        self.jump_into(t, x, u, &mut dx);
        dx
    }

    /// Largest `|f(t,0,0)|` and `|g(t,0,0)|` over the sample times.
    pub fn equilibrium_defect(&self, times: &[f64]) -> f64 {
        let z = vec![0.0; self.state_dim()];
        let zu = vec![0.0; self.input_dim()];
        times.iter().map(|&t| norm(&self.flow(t, &z, &zu)).max(norm(&self.jump(t, &z, &zu)))).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub input: Vec<f64>,
}

/// A right-continuous solution on `[t0, end]`, or `[t0, end)` after a finite escape.
#[derive(Debug, Clone)]
pub struct Trajectory {
    t0: f64,
    x0: Vec<f64>,
    steps: Vec<Step>,
    jumps: Vec<JumpRecord>,
    end: f64,
    escape: Option<f64>,
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Last time covered: the horizon, or the escape time.
    pub fn end(&self) -> f64 {
        self.end
    }

    /// Finite-escape time `T_x` when the state norm crossed the blow-up threshold.
    pub fn escape(&self) -> Option<f64> {
        self.escape
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// End points of all accepted steps.
    pub fn step_times(&self) -> Vec<f64> {
        std::iter::once(self.t0).chain(self.steps.iter().map(|s| s.t1)).collect()
    }

    fn check_domain(&self, t: f64, left: bool) -> Result<()> {
        let ok_lo = if left { t > self.t0 } else { t >= self.t0 };
        let ok_hi = match self.escape {
            Some(tx) => t < tx,
            None => t <= self.end,
        };
        if ok_lo && ok_hi {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "t = {t} outside the trajectory domain [{}, {}{}",
                self.t0,
                self.end,
                if self.escape.is_some() { ")" } else { "]" }
            )))
        }
    }

    fn jump_at(&self, t: f64) -> Option<&JumpRecord> {
        self.jumps.binary_search_by(|j| j.t.partial_cmp(&t).unwrap()).ok().map(|i| &self.jumps[i])
    }

    fn interp(&self, t: f64) -> Vec<f64> {
        let i = self.steps.partition_point(|s| s.t1 < t);
        match self.steps.get(i) {
            Some(s) => s.eval(t),
            None => self.steps.last().map_or(self.x0.clone(), |s| s.end_value()),
        }
    }

    /// Right-continuous value `x(t)`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.check_domain(t, false)?;
        if t == self.t0 {
            return Ok(self.x0.clone());
        }
        if let Some(j) = self.jump_at(t) {
            return Ok(j.right.clone());
        }
        Ok(self.interp(t))
    }

    /// Left limit `x(t⁻)`.
    pub fn eval_left(&self, t: f64) -> Result<Vec<f64>> {
        self.check_domain(t, true)?;
        if let Some(j) = self.jump_at(t) {
            return Ok(j.left.clone());
        }
        Ok(self.interp(t))
    }
}

/// Integrate from `(t0, x0)` to `horizon`, applying jumps at `γ ∩ (t0, horizon]`.
pub fn simulate(
    sys: &SystemModel,
    gamma: &ImpulseSequence,
    t0: f64,
    x0: &[f64],
    u: &InputSignal,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(Error::Validation(format!("initial state has dimension {}, system has {n}", x0.len())));
    }
    if u.dim() != sys.input_dim() {
        return Err(Error::Validation(format!("input has dimension {}, system expects {}", u.dim(), sys.input_dim())));
    }
    if !(t0 >= 0.0) || !(horizon > t0) {
        return Err(Error::Domain(format!("need 0 <= t0 < horizon, got t0 = {t0}, horizon = {horizon}")));
    }
    let impulses = gamma.in_window(t0, horizon);
    let input_cuts: Vec<f64> = u.breakpoints().into_iter().filter(|&t| t > t0 && t < horizon).collect();
    let mut cuts: Vec<f64> = impulses.iter().copied().chain(input_cuts.iter().copied()).collect();
    cuts.push(horizon);
    sort_dedup(&mut cuts);

    let m = sys.input_dim();
    let ubuf = RefCell::new(vec![0.0; m]);
    let mut x = x0.to_vec();
    let mut steps = vec![];
    let mut jumps = vec![];
    let mut h = f64::NAN;
    let mut budget = opts.max_steps;
    let mut t = t0;
    let mut escape = None;
    for &cut in &cuts {
        if cut > t {
            // the input formula active on [t, cut]
            let (p, q) = piece_around(&input_cuts, t, cut);
            let rhs = |s: f64, xs: &[f64], dx: &mut [f64]| {
                let mut ub = ubuf.borrow_mut();
                u.eval_on_piece(p, q, s, &mut ub);
                sys.flow_into(s, xs, &ub, dx);
            };
            match integrate_piece(&rhs, t, cut, &mut x, &mut h, opts, &mut steps, &mut budget)? {
                PieceEnd::Reached => {}
                PieceEnd::Escape(tx) => {
                    escape = Some(tx);
                    break;
                }
            }
            t = cut;
        }
        if impulses.binary_search_by(|s| s.partial_cmp(&cut).unwrap()).is_ok() {
            let input = u.eval_at_impulse(cut);
            let dx = sys.jump(cut, &x, &input);
            let right: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            jumps.push(JumpRecord { t: cut, left: x.clone(), right: right.clone(), input });
            if !right.iter().all(|v| v.is_finite()) || norm(&right) > opts.blowup_threshold {
                escape = Some(cut);
                jumps.pop();
                break;
            }
            x = right;
        }
    }
    let end = escape.unwrap_or(horizon);
    Ok(Trajectory { t0, x0: x0.to_vec(), steps, jumps, end, escape })
}

/// The smooth input piece containing `[a, b]`, given the sorted input breakpoints.
fn piece_around(cuts: &[f64], a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let i = cuts.partition_point(|&c| c <= mid);
    let p = if i == 0 { a.min(cuts.first().copied().unwrap_or(a)) } else { cuts[i - 1] };
    let q = cuts.get(i).copied().unwrap_or(b);
    (p.min(a), q.max(b))
}

/// Largest defect of the integral identity
/// `x(t) = x(t0) + ∫ f(s, x, u) ds + Σ_{τ ∈ γ ∩ (t0, t]} g(τ, x(τ⁻), u(τ))`
/// over step ends and step midpoints, on both sides of every impulse.
pub fn residual(traj: &Trajectory, sys: &SystemModel, gamma: &ImpulseSequence, u: &InputSignal) -> f64 {
    let n = traj.dim();
    let t0 = traj.t0;
    let last = traj.steps.last().map_or(t0, |s| s.t1);
    let input_cuts: Vec<f64> = u.breakpoints().into_iter().filter(|&t| t > t0 && t < last).collect();
    let impulses: Vec<f64> = gamma.in_window(t0, last).to_vec();
    let jump_incr: Vec<Vec<f64>> = impulses
        .iter()
        .map(|&tau| match traj.eval_left(tau) {
            Ok(xl) => sys.jump(tau, &xl, &u.eval_at_impulse(tau)),
            Err(_) => vec![0.0; n],
        })
        .collect();
    let mut jump_sum = vec![0.0; n];
    let mut next_jump = 0usize;
    let mut integral = vec![0.0; n];
    let mut worst: f64 = 0.0;
    let mut ub = vec![0.0; u.dim()];
    let defect = |x: &[f64], integral: &[f64], jump_sum: &[f64]| -> f64 {
        let d: Vec<f64> = (0..n).map(|i| x[i] - traj.x0[i] - integral[i] - jump_sum[i]).collect();
        norm(&d)
    };
    for s in &traj.steps {
        let (p, q) = piece_around(&input_cuts, s.t0, s.t1);
        let mut integrand = |a: f64, b: f64| {
            gauss_legendre5_vec(
                |tt: f64| {
                    u.eval_on_piece(p, q, tt, &mut ub);
                    sys.flow(tt, &s.eval(tt), &ub)
                },
                a,
                b,
                n,
            )
        };
        let mid = 0.5 * (s.t0 + s.t1);
        // impulses strictly inside a step (only when the trajectory ignored them)
        while next_jump < impulses.len() && impulses[next_jump] <= mid {
            for i in 0..n {
                jump_sum[i] += jump_incr[next_jump][i];
            }
            next_jump += 1;
        }
        let first = integrand(s.t0, mid);
        let at_mid: Vec<f64> = (0..n).map(|i| integral[i] + first[i]).collect();
        worst = worst.max(defect(&s.eval(mid), &at_mid, &jump_sum));
        let second = integrand(mid, s.t1);
        for i in 0..n {
            integral[i] = at_mid[i] + second[i];
        }
        while next_jump < impulses.len() && impulses[next_jump] < s.t1 {
            for i in 0..n {
                jump_sum[i] += jump_incr[next_jump][i];
            }
            next_jump += 1;
        }
        worst = worst.max(defect(&s.end_value(), &integral, &jump_sum));
        if next_jump < impulses.len() && impulses[next_jump] == s.t1 {
            for i in 0..n {
                jump_sum[i] += jump_incr[next_jump][i];
            }
            next_jump += 1;
            if let Ok(xr) = traj.eval(s.t1) {
                worst = worst.max(defect(&xr, &integral, &jump_sum));
            }
        }
    }
    worst
}
