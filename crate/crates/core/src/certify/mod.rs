//! Ensemble checks of stability estimates.
//!
//! Every universal quantifier (system, initial time, initial state, input,
//! time) is sampled. A passing report means no counterexample was found on
//! the sampled points, nothing more.

pub mod equiv;
pub mod pipeline;
pub mod probe;

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compfun::{validate_class, ClassKind, ComparisonFunction, FunctionDescriptor, KLFunction, KlDescriptor};
use crate::error::{Error, Result};
use crate::hybrid_time::ImpulseSequence;
use crate::quad::{linspace, norm, sort_dedup};
use crate::signals::{flow_energy, InputSignal, Segment, Wave};
use crate::simulator::{simulate, IntegratorOptions, SystemModel};

pub use equiv::{check_weak_strong_equiv, EquivReport};
pub use pipeline::{pipeline_iss_to_iiss, PipelineOptions, PipelineReport, StageReport};
pub use probe::{probe_eps_delta, ProbeReport, ProbeSpec};

/// Absolute tolerance on margins before a point counts as a violation.
pub const DEFAULT_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    #[serde(alias = "0-guas")]
    ZeroGuas,
    Iss,
    Iiss,
    Ubebs,
}

/// Strong estimates decay in hybrid elapsed time, weak ones in `t - t0` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Strong,
    Weak,
}

/// The functions of one estimate.
///
/// * 0-GUAS: `|x(t)| <= β(|x0|, s)`
/// * ISS: `|x(t)| <= β(|x0|, s) + ρ(‖u‖∞)`
/// * iISS: `α(|x(t)|) <= β(|x0|, s) + ‖u‖_{ρ1,ρ2}`
/// * UBEBS: `α(|x(t)|) <= |x0| + ‖u‖_{ρ1,ρ2} + c`
///
/// with `s` the hybrid elapsed time (strong) or `t - t0` (weak).
#[derive(Debug, Clone)]
pub struct EstimateSpec {
    pub kind: EstimateKind,
    pub mode: Mode,
    pub beta: Option<KLFunction>,
    pub alpha: Option<ComparisonFunction>,
    pub rho: Option<ComparisonFunction>,
    pub rho1: Option<ComparisonFunction>,
    pub rho2: Option<ComparisonFunction>,
    pub c: f64,
}

impl EstimateSpec {
    fn blank(kind: EstimateKind) -> Self {
        Self { kind, mode: Mode::Strong, beta: None, alpha: None, rho: None, rho1: None, rho2: None, c: 0.0 }
    }

    pub fn zero_guas(beta: KLFunction) -> Self {
        Self { beta: Some(beta), ..Self::blank(EstimateKind::ZeroGuas) }
    }

    pub fn iss(beta: KLFunction, rho: ComparisonFunction) -> Self {
        Self { beta: Some(beta), rho: Some(rho), ..Self::blank(EstimateKind::Iss) }
    }

    pub fn iiss(alpha: ComparisonFunction, beta: KLFunction, rho1: ComparisonFunction, rho2: ComparisonFunction) -> Self {
        Self { alpha: Some(alpha), beta: Some(beta), rho1: Some(rho1), rho2: Some(rho2), ..Self::blank(EstimateKind::Iiss) }
    }

    pub fn ubebs(alpha: ComparisonFunction, rho1: ComparisonFunction, rho2: ComparisonFunction, c: f64) -> Self {
        Self { alpha: Some(alpha), rho1: Some(rho1), rho2: Some(rho2), c, ..Self::blank(EstimateKind::Ubebs) }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn weak(self) -> Self {
        self.with_mode(Mode::Weak)
    }

    fn needs_energy(&self) -> bool {
        matches!(self.kind, EstimateKind::Iiss | EstimateKind::Ubebs)
    }

    pub fn validate(&self) -> Result<()> {
        fn need<'a, T>(v: &'a Option<T>, name: &str, kind: EstimateKind) -> Result<&'a T> {
            v.as_ref().ok_or_else(|| Error::Validation(format!("{kind:?} estimate needs {name}")))
        }
        fn gain(f: &ComparisonFunction, name: &str, class: &[ClassKind]) -> Result<()> {
            if !class.contains(&f.kind()) {
                return Err(Error::Validation(format!("{name} must be one of {class:?}, got {:?}", f.kind())));
            }
            let rep = validate_class(f, 256);
            if !rep.passed() {
                return Err(Error::Validation(format!("{name} failed class validation: {rep}")));
            }
            Ok(())
        }
        let k = self.kind;
        let kinf = &[ClassKind::KInf];
        let k_any = &[ClassKind::K, ClassKind::KInf];
        if matches!(k, EstimateKind::ZeroGuas | EstimateKind::Iss | EstimateKind::Iiss) {
            let beta = need(&self.beta, "beta", k)?;
            let rep = validate_class(beta, 128);
            if !rep.passed() {
                return Err(Error::Validation(format!("beta failed class validation: {rep}")));
            }
        }
        if k == EstimateKind::Iss {
            gain(need(&self.rho, "rho", k)?, "rho", k_any)?;
        }
        if self.needs_energy() {
            gain(need(&self.alpha, "alpha", k)?, "alpha", kinf)?;
            gain(need(&self.rho1, "rho1", k)?, "rho1", k_any)?;
            gain(need(&self.rho2, "rho2", k)?, "rho2", k_any)?;
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Validation(format!("offset c must be a finite nonnegative number, got {}", self.c)));
        }
        if self.c > 0.0 && k != EstimateKind::Ubebs {
            return Err(Error::Validation("only UBEBS estimates carry an offset".into()));
        }
        Ok(())
    }

    /// `(observed, bound)` at one sampled point.
    pub fn sides(&self, obs: &Observation) -> (f64, f64) {
        let s = match self.mode {
            Mode::Strong => obs.dt + obs.jumps as f64,
            Mode::Weak => obs.dt,
        };
        let beta = || self.beta.as_ref().map_or(0.0, |b| b.value(obs.x0_norm, s));
        let alpha = || self.alpha.as_ref().map_or(obs.x_norm, |a| a.value(obs.x_norm));
        match self.kind {
            EstimateKind::ZeroGuas => (obs.x_norm, beta()),
            EstimateKind::Iss => (obs.x_norm, beta() + self.rho.as_ref().map_or(0.0, |r| r.value(obs.sup_u))),
            EstimateKind::Iiss => (alpha(), beta() + obs.energy),
            EstimateKind::Ubebs => (alpha(), obs.x0_norm + obs.energy + self.c),
        }
    }

    pub fn to_descriptor(&self) -> Result<EstimateDescriptor> {
        let cf = |f: &Option<ComparisonFunction>| f.as_ref().map(|f| f.to_descriptor()).transpose();
        Ok(EstimateDescriptor {
            kind: self.kind,
            mode: self.mode,
            beta: self.beta.as_ref().map(|b| b.to_descriptor()).transpose()?,
            alpha: cf(&self.alpha)?,
            rho: cf(&self.rho)?,
            rho1: cf(&self.rho1)?,
            rho2: cf(&self.rho2)?,
            c: self.c,
        })
    }
}

/// Textual form of an [`EstimateSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateDescriptor {
    pub kind: EstimateKind,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<KlDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<FunctionDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<FunctionDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<FunctionDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<FunctionDescriptor>,
    #[serde(default)]
    pub c: f64,
}

impl EstimateDescriptor {
    pub fn build(&self) -> Result<EstimateSpec> {
        let cf = |f: &Option<FunctionDescriptor>| f.as_ref().map(ComparisonFunction::from_descriptor).transpose();
        let spec = EstimateSpec {
            kind: self.kind,
            mode: self.mode,
            beta: self.beta.as_ref().map(KLFunction::from_descriptor).transpose()?,
            alpha: cf(&self.alpha)?,
            rho: cf(&self.rho)?,
            rho1: cf(&self.rho1)?,
            rho2: cf(&self.rho2)?,
            c: self.c,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One system of the family with its impulse times.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub system: SystemModel,
    pub gamma: ImpulseSequence,
}

impl FamilyMember {
    pub fn new(system: SystemModel, gamma: ImpulseSequence) -> Self {
        Self { system, gamma }
    }
}

/// Initial time, initial state and input of one sampled trajectory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub input: InputSignal,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub horizon: f64,
    /// Uniform grid points per scenario, before impulse times are added.
    pub grid: usize,
    pub integrator: IntegratorOptions,
    pub slack: f64,
    /// Additional times to sample, where they fall inside a scenario's window.
    pub extra_times: Vec<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { horizon: 10.0, grid: 201, integrator: IntegratorOptions::default(), slack: DEFAULT_SLACK, extra_times: vec![] }
    }
}

/// Everything an estimate needs at one sampled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    /// The point is the left limit `x(t⁻)` at an impulse time.
    pub left_limit: bool,
    pub x_norm: f64,
    pub x0_norm: f64,
    pub dt: f64,
    /// Impulses in `(t0, t]`, or `(t0, t)` for a left limit.
    pub jumps: usize,
    /// `‖u‖∞` over the same window.
    pub sup_u: f64,
    /// `‖u‖_{ρ1,ρ2}` over the same window; zero when no energy gains are given.
    pub energy: f64,
}

/// Sampled observations of one trajectory, plus the escape time if it blew up.
#[derive(Debug, Clone)]
pub struct ObservedTrajectory {
    pub points: Vec<Observation>,
    pub escape: Option<f64>,
}

/// Simulates `scenario` on `member` and samples it on the grid, at every
/// impulse time and at every impulse left limit.
pub fn observe(
    member: &FamilyMember,
    scenario: &Scenario,
    opts: &CheckOptions,
    energy_gains: Option<(&ComparisonFunction, &ComparisonFunction)>,
) -> Result<ObservedTrajectory> {
    let t0 = scenario.t0;
    if !(opts.horizon > t0) {
        return Err(Error::Config(format!("scenario '{}' starts at {t0}, past the horizon {}", scenario.id, opts.horizon)));
    }
    let traj = simulate(&member.system, &member.gamma, t0, &scenario.x0, &scenario.input, opts.horizon, &opts.integrator)?;
    let reach = traj.escape();
    let inside = |t: f64| t >= t0 && t <= opts.horizon && reach.is_none_or(|tx| t < tx);
    let impulses: Vec<f64> = member.gamma.in_window(t0, opts.horizon).iter().copied().filter(|&t| inside(t)).collect();
    let mut times: Vec<f64> = linspace(t0, opts.horizon, opts.grid.max(2)).into_iter().filter(|&t| inside(t)).collect();
    times.extend(impulses.iter().copied());
    times.extend(opts.extra_times.iter().copied().filter(|&t| inside(t)));
    sort_dedup(&mut times);

    let u = &scenario.input;
    let x0_norm = norm(&scenario.x0);
    let mut out = Vec::with_capacity(times.len() + impulses.len());
    let (mut flow_e, mut jump_e, mut ess, mut pt_sup) = (0.0, 0.0, 0.0f64, 0.0f64);
    let mut jumps = 0usize;
    let mut prev = t0;
    for &t in &times {
        if t > prev {
            ess = ess.max(u.ess_sup(prev, t));
            if let Some((r1, _)) = energy_gains {
                flow_e += flow_energy(u, prev, t, r1);
            }
            prev = t;
        }
        let at_impulse = t > t0 && impulses.binary_search_by(|s| s.partial_cmp(&t).unwrap()).is_ok();
        if at_impulse {
            out.push(Observation {
                t,
                left_limit: true,
                x_norm: norm(&traj.eval_left(t)?),
                x0_norm,
                dt: t - t0,
                jumps,
                sup_u: ess.max(pt_sup),
                energy: flow_e + jump_e,
            });
            let mag = u.impulse_magnitude(t);
            pt_sup = pt_sup.max(mag);
            if let Some((_, r2)) = energy_gains {
                jump_e += r2.value(mag);
            }
            jumps += 1;
        }
        out.push(Observation {
            t,
            left_limit: false,
            x_norm: norm(&traj.eval(t)?),
            x0_norm,
            dt: t - t0,
            jumps,
            sup_u: ess.max(pt_sup),
            energy: flow_e + jump_e,
        });
    }
    Ok(ObservedTrajectory { points: out, escape: reach })
}

/// Location of the worst sampled point.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub member: usize,
    pub scenario: usize,
    pub input_id: String,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub t: f64,
    pub left_limit: bool,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeRecord {
    pub member: usize,
    pub scenario: usize,
    pub t_escape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioMargin {
    pub member: usize,
    pub scenario: usize,
    pub margin: f64,
    pub checks: usize,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub pass: bool,
    /// Smallest `bound - observed` over all sampled points.
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    /// Worst point strictly inside a flow interval: not an impulse time, not a left limit.
    pub flow_witness: Option<Witness>,
    pub checks: usize,
    pub slack: f64,
    pub escapes: Vec<EscapeRecord>,
    pub per_scenario: Vec<ScenarioMargin>,
}

impl CertificateReport {
    /// A finite escape under an estimate that otherwise passes: the estimate
    /// would have ruled the escape out.
    pub fn inconsistent(&self) -> bool {
        self.pass && !self.escapes.is_empty()
    }

    pub fn margins_csv(&self) -> String {
        let mut s = String::from("# schema impiss-margins/1\nmember,scenario,margin,checks\n");
        for m in &self.per_scenario {
            s.push_str(&format!("{},{},{:.16e},{}\n", m.member, m.scenario, m.margin, m.checks));
        }
        s
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS (no counterexample found)" } else { "FAIL" };
        writeln!(f, "verdict: {verdict}")?;
        writeln!(f, "checks: {}", self.checks)?;
        writeln!(f, "worst margin: {:.16e} (slack {:e})", self.worst_margin, self.slack)?;
        if let Some(w) = &self.witness {
            writeln!(
                f,
                "witness: member {} scenario {} ({}) t0 = {} |x0| = {:.6} t = {}{} observed = {:.16e} bound = {:.16e}",
                w.member,
                w.scenario,
                w.input_id,
                w.t0,
                norm(&w.x0),
                w.t,
                if w.left_limit { " (left limit)" } else { "" },
                w.observed,
                w.bound
            )?;
        }
        if let Some(w) = self.flow_witness.as_ref().filter(|w| !self.pass && w.observed > w.bound) {
            writeln!(
                f,
                "worst violation inside a flow interval: member {} scenario {} t = {} observed = {:.16e} bound = {:.16e}",
                w.member, w.scenario, w.t, w.observed, w.bound
            )?;
        }
        for e in &self.escapes {
            writeln!(f, "finite escape: member {} scenario {} at t = {}", e.member, e.scenario, e.t_escape)?;
        }
        if self.inconsistent() {
            writeln!(f, "warning: trajectories escaped although the estimate holds on the sampled points")?;
        }
        Ok(())
    }
}

struct Partial {
    member: usize,
    scenario: usize,
    margin: f64,
    worst: Option<(Observation, f64, f64)>,
    flow_worst: Option<(Observation, f64, f64)>,
    checks: usize,
    escape: Option<f64>,
}

/// Checks `spec` at every sampled point of every (member, scenario) pair.
pub fn check_estimate(
    ensemble: &[FamilyMember],
    spec: &EstimateSpec,
    scenarios: &[Scenario],
    opts: &CheckOptions,
) -> Result<CertificateReport> {
    if ensemble.is_empty() || scenarios.is_empty() {
        return Err(Error::Config("estimate check needs at least one system and one scenario".into()));
    }
    spec.validate()?;
    let zero_input = spec.kind == EstimateKind::ZeroGuas;
    let zeroed: Vec<Scenario> = if zero_input {
        scenarios.iter().map(|s| Scenario { input: InputSignal::zero(s.input.dim(), s.input.horizon()), ..s.clone() }).collect()
    } else {
        scenarios.to_vec()
    };
    let gains = match (&spec.rho1, &spec.rho2) {
        (Some(a), Some(b)) if spec.needs_energy() => Some((a, b)),
        _ => None,
    };
    let pairs: Vec<(usize, usize)> = (0..ensemble.len()).flat_map(|m| (0..zeroed.len()).map(move |s| (m, s))).collect();
    let partials: Vec<Partial> = pairs
        .par_iter()
        .map(|&(m, s)| -> Result<Partial> {
            let obs = observe(&ensemble[m], &zeroed[s], opts, gains)?;
            let gamma = &ensemble[m].gamma;
            let mut p = Partial {
                member: m,
                scenario: s,
                margin: f64::INFINITY,
                worst: None,
                flow_worst: None,
                checks: 0,
                escape: obs.escape,
            };
            let mut flow_margin = f64::INFINITY;
            for o in &obs.points {
                let (lhs, rhs) = spec.sides(o);
                let margin = if lhs.is_finite() { rhs - lhs } else { f64::NEG_INFINITY };
                p.checks += 1;
                if margin < p.margin || p.worst.is_none() {
                    p.margin = margin;
                    p.worst = Some((*o, lhs, rhs));
                }
                if !o.left_limit && !gamma.contains(o.t) && (margin < flow_margin || p.flow_worst.is_none()) {
                    flow_margin = margin;
                    p.flow_worst = Some((*o, lhs, rhs));
                }
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(partials, &zeroed, opts.slack))
}

fn witness(p: &Partial, sc: &Scenario, o: &Observation, lhs: f64, rhs: f64) -> Witness {
    Witness {
        member: p.member,
        scenario: p.scenario,
        input_id: sc.id.clone(),
        t0: sc.t0,
        x0: sc.x0.clone(),
        t: o.t,
        left_limit: o.left_limit,
        observed: lhs,
        bound: rhs,
    }
}

fn aggregate(partials: Vec<Partial>, scenarios: &[Scenario], slack: f64) -> CertificateReport {
    let mut rep = CertificateReport {
        pass: true,
        worst_margin: f64::INFINITY,
        witness: None,
        flow_witness: None,
        checks: 0,
        slack,
        escapes: vec![],
        per_scenario: Vec::with_capacity(partials.len()),
    };
    // Partials arrive in (member, scenario) order, so strict `<` keeps the lowest index on ties.
    for p in partials {
        rep.checks += p.checks;
        rep.per_scenario.push(ScenarioMargin { member: p.member, scenario: p.scenario, margin: p.margin, checks: p.checks });
        if let Some(tx) = p.escape {
            rep.escapes.push(EscapeRecord { member: p.member, scenario: p.scenario, t_escape: tx });
        }
        let sc = &scenarios[p.scenario];
        if let Some((o, lhs, rhs)) = &p.worst {
            if p.margin < rep.worst_margin || rep.witness.is_none() {
                rep.worst_margin = p.margin;
                rep.witness = Some(witness(&p, sc, o, *lhs, *rhs));
            }
        }
        if let Some((o, lhs, rhs)) = &p.flow_worst {
            let better = rep.flow_witness.as_ref().is_none_or(|w| rhs - lhs < w.bound - w.observed);
            if better {
                rep.flow_witness = Some(witness(&p, sc, o, *lhs, *rhs));
            }
        }
    }
    rep.pass = rep.worst_margin >= -slack;
    rep
}

/// Input shapes used by [`scenario_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputShape {
    Zero,
    Step,
    Sinusoid,
    /// Zero during flows, nonzero values at impulse times only.
    ImpulsePoints,
}

pub const ALL_SHAPES: [InputShape; 4] = [InputShape::Zero, InputShape::Step, InputShape::Sinusoid, InputShape::ImpulsePoints];

/// Seeded random scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBatch {
    pub count: usize,
    pub seed: u64,
    pub t0_max: f64,
    pub x0_max: f64,
    pub input_max: f64,
    pub shapes: Vec<InputShape>,
}

impl Default for ScenarioBatch {
    fn default() -> Self {
        Self { count: 50, seed: 1, t0_max: 3.0, x0_max: 10.0, input_max: 2.0, shapes: ALL_SHAPES.to_vec() }
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let n = norm(&v);
    if n == 0.0 {
        return v;
    }
    let r = radius * rng.gen::<f64>();
    v.into_iter().map(|x| x / n * r).collect()
}

/// Builds `batch.count` scenarios, cycling through the shapes. `impulse_times`
/// are the times where impulse-point inputs place their values.
pub fn scenario_batch(
    batch: &ScenarioBatch,
    state_dim: usize,
    input_dim: usize,
    horizon: f64,
    impulse_times: &[f64],
) -> Result<Vec<Scenario>> {
    if batch.shapes.is_empty() {
        return Err(Error::Config("scenario batch needs at least one input shape".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(batch.seed);
    (0..batch.count)
        .map(|k| {
            let shape = batch.shapes[k % batch.shapes.len()];
            let t0 = if k == 0 { 0.0 } else { rng.gen_range(0.0..=batch.t0_max.min(horizon * 0.5)) };
            let x0 = random_vector(&mut rng, state_dim, batch.x0_max);
            let amp = batch.input_max;
            let input = match shape {
                InputShape::Zero => InputSignal::zero(input_dim, horizon),
                InputShape::Step => {
                    let on = rng.gen_range(0.0..horizon * 0.8);
                    let level = random_vector(&mut rng, input_dim, amp);
                    let zero = (0..input_dim).map(|_| Wave::Constant { value: 0.0 }).collect();
                    let high = level.iter().map(|&v| Wave::Constant { value: v }).collect();
                    if on > 0.0 {
                        InputSignal::new(
                            input_dim,
                            horizon,
                            vec![
                                Segment { start: 0.0, end: on, components: zero },
                                Segment { start: on, end: horizon, components: high },
                            ],
                        )?
                    } else {
                        InputSignal::new(input_dim, horizon, vec![Segment { start: 0.0, end: horizon, components: high }])?
                    }
                }
                InputShape::Sinusoid => {
                    let comps = (0..input_dim)
                        .map(|_| Wave::Sinusoid {
                            amplitude: amp * rng.gen::<f64>(),
                            omega: rng.gen_range(0.5..6.0),
                            phase: rng.gen_range(0.0..std::f64::consts::TAU),
                            offset: 0.0,
                        })
                        .collect();
                    InputSignal::new(input_dim, horizon, vec![Segment { start: 0.0, end: horizon, components: comps }])?
                }
                InputShape::ImpulsePoints => {
                    let mut s = InputSignal::zero(input_dim, horizon);
                    for &t in impulse_times {
                        s = s.with_point_value(t, random_vector(&mut rng, input_dim, amp))?;
                    }
                    s
                }
            };
            Ok(Scenario { id: format!("{shape:?}-{k}").to_lowercase(), t0, x0, input })
        })
        .collect()
}

/// Sorted union of the impulse times of all members.
pub fn family_impulse_times(ensemble: &[FamilyMember]) -> Vec<f64> {
    let mut ts: Vec<f64> = ensemble.iter().flat_map(|m| m.gamma.times().iter().copied()).collect();
    sort_dedup(&mut ts);
    ts
}

/// `α^{-1}∘β`, the 0-GUAS function implied by an iISS estimate.
pub fn guas_from_iiss(alpha: &ComparisonFunction, beta: &KLFunction) -> KLFunction {
    beta.clone().with_outer(ComparisonFunction::inverse(alpha.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid_time::gen_dwell;
    use crate::simulator::library::{s1, s2};

    pub(crate) fn s1_member() -> FamilyMember {
        FamilyMember::new(s1(), ImpulseSequence::new((1..=9).map(f64::from).collect(), 10.0).unwrap())
    }

    fn ln2_beta() -> KLFunction {
        KLFunction::exponential(1.0, 2f64.ln())
    }

    fn batch(count: usize, seed: u64, members: &[FamilyMember]) -> Vec<Scenario> {
        let b = ScenarioBatch { count, seed, ..ScenarioBatch::default() };
        scenario_batch(&b, 1, 1, 10.0, &family_impulse_times(members)).unwrap()
    }

    #[test]
    fn s1_guas_passes() {
        let fam = vec![s1_member()];
        let sc = batch(50, 3, &fam);
        let rep = check_estimate(&fam, &EstimateSpec::zero_guas(ln2_beta()), &sc, &CheckOptions::default()).unwrap();
        assert!(rep.pass, "{rep}");
        assert!(rep.checks > 50 * 200);
    }

    #[test]
    fn too_fast_decay_fails_between_jumps() {
        let fam = vec![s1_member()];
        let sc = batch(50, 3, &fam);
        let rep =
            check_estimate(&fam, &EstimateSpec::zero_guas(KLFunction::exponential(1.0, 2.0)), &sc, &CheckOptions::default())
                .unwrap();
        assert!(!rep.pass);
        let w = rep.flow_witness.unwrap();
        assert!(!w.left_limit && w.t.fract() != 0.0, "witness at {}", w.t);
        assert!(w.observed > w.bound);
    }

    #[test]
    fn zero_scenario_margin_is_bound() {
        let fam = vec![s1_member()];
        let sc = vec![Scenario { id: "origin".into(), t0: 0.5, x0: vec![0.0], input: InputSignal::zero(1, 10.0) }];
        let spec = EstimateSpec::ubebs(
            ComparisonFunction::identity(),
            ComparisonFunction::identity(),
            ComparisonFunction::identity(),
            0.25,
        );
        let rep = check_estimate(&fam, &spec, &sc, &CheckOptions::default()).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.worst_margin, 0.25);
        assert!(check_estimate(&fam, &spec, &[], &CheckOptions::default()).is_err());
    }

    #[test]
    fn s2_iss_passes_and_reproduces() {
        let fam = vec![FamilyMember::new(s2(), gen_dwell(0.5, 10.0, None).unwrap())];
        let sc = batch(40, 9, &fam);
        let spec = EstimateSpec::iss(ln2_beta(), ComparisonFunction::linear(2.0));
        let a = check_estimate(&fam, &spec, &sc, &CheckOptions::default()).unwrap();
        let b = check_estimate(&fam, &spec, &sc, &CheckOptions::default()).unwrap();
        assert!(a.pass, "{a}");
        assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
        assert_eq!(a.witness, b.witness);
        assert_eq!(a.margins_csv(), b.margins_csv());
    }

    #[test]
    fn strong_pass_implies_weak_pass_pointwise() {
        let fam = vec![FamilyMember::new(s2(), gen_dwell(0.5, 10.0, None).unwrap())];
        let sc = batch(12, 4, &fam);
        let spec = EstimateSpec::iss(ln2_beta(), ComparisonFunction::linear(2.0));
        let weak = spec.clone().weak();
        for s in &sc {
            let obs = observe(&fam[0], s, &CheckOptions::default(), None).unwrap();
            for o in &obs.points {
                let (l, r) = spec.sides(o);
                let (lw, rw) = weak.sides(o);
                if r >= l {
                    assert!(rw >= lw);
                }
            }
        }
    }

    #[test]
    fn left_limits_are_sampled() {
        let fam = [s1_member()];
        let sc = [Scenario { id: "one".into(), t0: 0.0, x0: vec![1.0], input: InputSignal::zero(1, 10.0) }];
        let obs = observe(&fam[0], &sc[0], &CheckOptions::default(), None).unwrap();
        let left: Vec<_> = obs.points.iter().filter(|o| o.left_limit).collect();
        assert_eq!(left.len(), 9);
        let at1 = left[0];
        assert_eq!((at1.t, at1.jumps), (1.0, 0));
        assert!((at1.x_norm - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn spec_validation() {
        let mut spec = EstimateSpec::iss(ln2_beta(), ComparisonFunction::identity());
        spec.rho = None;
        assert!(spec.validate().is_err());
        let bad = EstimateSpec::ubebs(
            ComparisonFunction::constant(1.0),
            ComparisonFunction::identity(),
            ComparisonFunction::identity(),
            0.0,
        );
        assert!(bad.validate().is_err());
        let neg = EstimateSpec::ubebs(
            ComparisonFunction::identity(),
            ComparisonFunction::identity(),
            ComparisonFunction::identity(),
            -1.0,
        );
        assert!(neg.validate().is_err());
        let d = EstimateSpec::iss(ln2_beta(), ComparisonFunction::linear(2.0)).weak().to_descriptor().unwrap();
        let text = toml::to_string(&d).unwrap();
        let back: EstimateDescriptor = toml::from_str(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.build().unwrap().mode, Mode::Weak);
    }
}
