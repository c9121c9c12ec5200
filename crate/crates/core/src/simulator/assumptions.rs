//! Declared assumption envelopes and their sampled validation.
//!
//! Each check draws random points (or point pairs) from a ball of states, a
//! ball of inputs and a time window, and reports the smallest slack
//! `bound - observed`. Sampling can only find counterexamples; a pass means
//! none was found.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SystemModel;
use crate::compfun::ComparisonFunction;
use crate::error::{Error, Result};
use crate::quad::{linspace, norm};

/// Two-point envelopes for one map (flow or jump):
///
/// ```text
/// |a(t,ξ,μ1) − a(t,ξ,μ2)| <= phi_tilde(|μ1−μ2|)·[n(|ξ|) + o(|μ1| ∧ |μ2|)]
/// |a(t,ξ1,μ) − a(t,ξ2,μ)| <= eta(|ξ1−ξ2|)·[p(|ξ1| ∧ |ξ2|) + phi(|μ|)]
/// ```
#[derive(Debug, Clone)]
pub struct ChannelEnvelope {
    pub phi_tilde: ComparisonFunction,
    pub n: ComparisonFunction,
    pub o: ComparisonFunction,
    pub eta: ComparisonFunction,
    pub p: ComparisonFunction,
    pub phi: ComparisonFunction,
}

/// Flow and jump envelopes plus the local Lipschitz modulus `l_f` of the
/// flow's state envelope: `eta_f(s) <= l_f(M)·s` for `0 <= s <= M`.
#[derive(Debug, Clone)]
pub struct AssumptionEnvelopes {
    pub f: ChannelEnvelope,
    pub g: ChannelEnvelope,
    pub l_f: ComparisonFunction,
}

impl AssumptionEnvelopes {
    /// Largest `eta_f(s) - l_f(M)·s` over a grid of `M <= m_max` and `s <= M`; `<= 0` when consistent.
    pub fn eta_lipschitz_defect(&self, m_max: f64, grid: usize) -> (f64, f64, f64) {
        let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
        for m in linspace(0.0, m_max, grid).into_iter().skip(1) {
            let l = self.l_f.value(m);
            for s in linspace(0.0, m, grid) {
                let d = self.f.eta.value(s) - l * s;
                if d > worst.0 {
                    worst = (d, m, s);
                }
            }
        }
        worst
    }
}

/// Envelope data declared with a system. Every field is optional; checks
/// that need a missing field fail with a configuration error.
#[derive(Debug, Clone, Default)]
pub struct AssumptionData {
    /// `|f| <= n_f(|ξ|)·(1 + nu_f(|μ|))`
    pub n_f: Option<ComparisonFunction>,
    pub nu_f: Option<ComparisonFunction>,
    /// `|g| <= n_g(|ξ|)·(1 + nu_g(|μ|))`
    pub n_g: Option<ComparisonFunction>,
    pub nu_g: Option<ComparisonFunction>,
    /// Lipschitz constant of `f(t,·,0)` on the ball of radius `R`, as a function of `R`.
    pub lipschitz: Option<ComparisonFunction>,
    /// Modulus of continuity of `g(t,·,0)` on the sampled ball.
    pub omega: Option<ComparisonFunction>,
    pub envelopes: Option<AssumptionEnvelopes>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    /// `f(t,0,0) = 0` and `g(t,0,0) = 0`.
    Equilibrium,
    FlowBound,
    JumpBound,
    /// `|a(t,ξ,μ) − a(t,ξ,0)| <= eta + kappa·nu_a(|μ|)` for both maps.
    InputContinuity {
        eta: f64,
        kappa: f64,
    },
    FlowLipschitz,
    JumpContinuity,
    InputEnvelope,
    StateEnvelope,
    EtaLipschitz,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::Equilibrium => "equilibrium at the origin",
            Check::FlowBound => "flow growth bound",
            Check::JumpBound => "jump growth bound",
            Check::InputContinuity { .. } => "input continuity at zero input",
            Check::FlowLipschitz => "flow Lipschitz in the state",
            Check::JumpContinuity => "jump continuity in the state",
            Check::InputEnvelope => "two-point input envelope",
            Check::StateEnvelope => "two-point state envelope",
            Check::EtaLipschitz => "state envelope locally linear",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub seed: u64,
    pub samples: usize,
    pub state_radius: f64,
    pub input_radius: f64,
    pub t_max: f64,
    pub checks: Vec<Check>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 4096,
            state_radius: 2.0,
            input_radius: 2.0,
            t_max: 10.0,
            checks: vec![Check::Equilibrium, Check::FlowBound, Check::JumpBound, Check::FlowLipschitz, Check::JumpContinuity],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: Check,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `bound − observed` seen.
    pub worst_slack: f64,
    /// `(t, ξ1, ξ2, μ1, μ2)` at the worst sample; unused entries are empty.
    pub witness: (f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.violations == 0)
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            writeln!(
                f,
                "{:<34} {:>6} samples  {:>5} violations  worst slack {:.6e}",
                o.check.to_string(),
                o.samples,
                o.violations,
                o.worst_slack
            )?;
        }
        write!(f, "sampled check: a pass means no counterexample was found")
    }
}

fn need<'a>(x: &'a Option<ComparisonFunction>, what: &str) -> Result<&'a ComparisonFunction> {
    x.as_ref().ok_or_else(|| Error::Config(format!("assumption check needs the `{what}` envelope")))
}

fn need_env(d: &AssumptionData) -> Result<&AssumptionEnvelopes> {
    d.envelopes.as_ref().ok_or_else(|| Error::Config("assumption check needs the two-point envelopes".into()))
}

/// Uniform point in the ball of radius `r`, biased towards the boundary half the time.
fn ball(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = norm(&v);
        if n > 1e-12 && n <= 1.0 {
            let rad = if rng.gen_bool(0.5) { r * rng.gen::<f64>() } else { r * (1.0 - 0.05 * rng.gen::<f64>()) };
            return v.iter().map(|x| x / n * rad).collect();
        }
    }
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

struct Tally {
    out: CheckOutcome,
}

impl Tally {
    fn new(check: Check) -> Self {
        Self {
            out: CheckOutcome {
                check,
                samples: 0,
                violations: 0,
                worst_slack: f64::INFINITY,
                witness: (0.0, vec![], vec![], vec![], vec![]),
            },
        }
    }

    fn record(&mut self, bound: f64, observed: f64, w: (f64, &[f64], &[f64], &[f64], &[f64])) {
        self.out.samples += 1;
        let slack = bound - observed;
        if observed > bound + 1e-12 * (1.0 + bound.abs()) {
            self.out.violations += 1;
        }
        if slack < self.out.worst_slack {
            self.out.worst_slack = slack;
            self.out.witness = (w.0, w.1.to_vec(), w.2.to_vec(), w.3.to_vec(), w.4.to_vec());
        }
    }
}

/// Sample the requested assumption inequalities on `sys`.
pub fn validate_assumptions(sys: &SystemModel, spec: &SampleSpec) -> Result<AssumptionReport> {
    let d = &sys.assumptions;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut outcomes = vec![];
    let zu = vec![0.0; m];
    let zx = vec![0.0; n];
    let none: &[f64] = &[];
    for &check in &spec.checks {
        let mut tally = Tally::new(check);
        for k in 0..spec.samples {
            let t = rng.gen_range(0.0..=spec.t_max);
            let x1 = ball(&mut rng, n, spec.state_radius);
            // half the pairs are close, to probe local slopes
            let x2 = if k % 2 == 0 {
                ball(&mut rng, n, spec.state_radius)
            } else {
                let p = ball(&mut rng, n, 1e-3 * spec.state_radius);
                let y: Vec<f64> = x1.iter().zip(&p).map(|(a, b)| a + b).collect();
                let ny = norm(&y);
                if ny > spec.state_radius {
                    y.iter().map(|v| v * spec.state_radius / ny).collect()
                } else {
                    y
                }
            };
            let u1 = ball(&mut rng, m, spec.input_radius);
            let u2 = ball(&mut rng, m, spec.input_radius);
            match check {
                Check::Equilibrium => {
                    let v = norm(&sys.flow(t, &zx, &zu)).max(norm(&sys.jump(t, &zx, &zu)));
                    tally.record(0.0, v, (t, none, none, none, none));
                }
                Check::FlowBound | Check::JumpBound => {
                    let (nn, nu, val) = if check == Check::FlowBound {
                        (need(&d.n_f, "n_f")?, need(&d.nu_f, "nu_f")?, sys.flow(t, &x1, &u1))
                    } else {
                        (need(&d.n_g, "n_g")?, need(&d.nu_g, "nu_g")?, sys.jump(t, &x1, &u1))
                    };
                    let bound = nn.value(norm(&x1)) * (1.0 + nu.value(norm(&u1)));
                    tally.record(bound, norm(&val), (t, &x1, none, &u1, none));
                }
                Check::InputContinuity { eta, kappa } => {
                    let nf = need(&d.nu_f, "nu_f")?;
                    let ng = need(&d.nu_g, "nu_g")?;
                    let df = diff(&sys.flow(t, &x1, &u1), &sys.flow(t, &x1, &zu));
                    tally.record(eta + kappa * nf.value(norm(&u1)), df, (t, &x1, none, &u1, none));
                    let dg = diff(&sys.jump(t, &x1, &u1), &sys.jump(t, &x1, &zu));
                    tally.record(eta + kappa * ng.value(norm(&u1)), dg, (t, &x1, none, &u1, none));
                }
                Check::FlowLipschitz => {
                    let l = need(&d.lipschitz, "lipschitz")?.value(spec.state_radius);
                    let dv = diff(&sys.flow(t, &x1, &zu), &sys.flow(t, &x2, &zu));
                    tally.record(l * diff(&x1, &x2), dv, (t, &x1, &x2, none, none));
                }
                Check::JumpContinuity => {
                    let w = need(&d.omega, "omega")?;
                    let dv = diff(&sys.jump(t, &x1, &zu), &sys.jump(t, &x2, &zu));
                    tally.record(w.value(diff(&x1, &x2)), dv, (t, &x1, &x2, none, none));
                }
                Check::InputEnvelope => {
                    let env = need_env(d)?;
                    let lo = norm(&u1).min(norm(&u2));
                    for (ch, a, b) in [
                        (&env.f, sys.flow(t, &x1, &u1), sys.flow(t, &x1, &u2)),
                        (&env.g, sys.jump(t, &x1, &u1), sys.jump(t, &x1, &u2)),
                    ] {
                        let bound = ch.phi_tilde.value(diff(&u1, &u2)) * (ch.n.value(norm(&x1)) + ch.o.value(lo));
                        tally.record(bound, diff(&a, &b), (t, &x1, none, &u1, &u2));
                    }
                }
                Check::StateEnvelope => {
                    let env = need_env(d)?;
                    let lo = norm(&x1).min(norm(&x2));
                    for (ch, a, b) in [
                        (&env.f, sys.flow(t, &x1, &u1), sys.flow(t, &x2, &u1)),
                        (&env.g, sys.jump(t, &x1, &u1), sys.jump(t, &x2, &u1)),
                    ] {
                        let bound = ch.eta.value(diff(&x1, &x2)) * (ch.p.value(lo) + ch.phi.value(norm(&u1)));
                        tally.record(bound, diff(&a, &b), (t, &x1, &x2, &u1, none));
                    }
                }
                Check::EtaLipschitz => {
                    let env = need_env(d)?;
                    let mm = rng.gen_range(0.0..=spec.state_radius);
                    let s = rng.gen_range(0.0..=mm);
                    tally.record(env.l_f.value(mm) * s, env.f.eta.value(s), (mm, &[s], none, none, none));
                }
            }
        }
        outcomes.push(tally.out);
    }
    Ok(AssumptionReport { outcomes })
}

#[cfg(test)]
mod tests {
    use super::super::library::{s1, s2, SystemDescriptor};
    use super::*;

    fn all_checks() -> Vec<Check> {
        vec![
            Check::Equilibrium,
            Check::FlowBound,
            Check::JumpBound,
            Check::FlowLipschitz,
            Check::JumpContinuity,
            Check::InputContinuity { eta: 0.0, kappa: 1.0 },
            Check::InputEnvelope,
            Check::StateEnvelope,
            Check::EtaLipschitz,
        ]
    }

    #[test]
    fn s1_declared_envelopes_hold() {
        let sys = s1().with_assumptions(AssumptionData {
            n_f: Some(ComparisonFunction::identity()),
            nu_f: Some(ComparisonFunction::identity()),
            n_g: Some(ComparisonFunction::linear(0.5)),
            nu_g: Some(ComparisonFunction::identity()),
            lipschitz: Some(ComparisonFunction::constant(1.0)),
            omega: Some(ComparisonFunction::linear(0.5)),
            envelopes: s1().assumptions.envelopes,
        });
        let rep = validate_assumptions(&sys, &SampleSpec { checks: all_checks(), ..SampleSpec::default() }).unwrap();
        assert!(rep.pass(), "{rep}");
        let rep = validate_assumptions(&s2(), &SampleSpec { checks: all_checks(), ..SampleSpec::default() }).unwrap();
        assert!(rep.pass(), "{rep}");
    }

    #[test]
    fn zero_system_passes() {
        let zero = SystemModel::from_fns("zero", 1, 1, |_, _, _, dx| dx[0] = 0.0, |_, _, _, dx| dx[0] = 0.0).with_assumptions(
            AssumptionData {
                n_f: Some(ComparisonFunction::constant(0.0)),
                nu_f: Some(ComparisonFunction::identity()),
                n_g: Some(ComparisonFunction::constant(0.0)),
                nu_g: Some(ComparisonFunction::identity()),
                lipschitz: Some(ComparisonFunction::constant(0.0)),
                omega: Some(ComparisonFunction::linear(0.0)),
                envelopes: None,
            },
        );
        assert!(validate_assumptions(&zero, &SampleSpec::default()).unwrap().pass());
    }

    #[test]
    fn cubic_with_wrong_lipschitz_fails() {
        let mut cubic = SystemDescriptor::ScalarPolynomial {
            flow: vec![0.0, 0.0, -1.0],
            input_gain: 0.0,
            jump: vec![],
            jump_input_gain: 0.0,
        }
        .build()
        .unwrap();
        cubic.assumptions.lipschitz = Some(ComparisonFunction::constant(1.0));
        let spec = SampleSpec { checks: vec![Check::FlowLipschitz], ..SampleSpec::default() };
        let rep = validate_assumptions(&cubic, &spec).unwrap();
        assert!(!rep.pass());
        let (_, x1, x2, _, _) = &rep.outcomes[0].witness;
        // the worst pair sits where the slope 3ξ² is large
        assert!(x1[0].abs().max(x2[0].abs()) > 1.0);
        // the library's own slope envelope 3R² = 12 passes
        cubic.assumptions.lipschitz = Some(ComparisonFunction::power(3.0, 2.0));
        assert!(validate_assumptions(&cubic, &spec).unwrap().pass());
    }

    #[test]
    fn missing_envelope_is_a_config_error() {
        let sys = s1().with_assumptions(AssumptionData::default());
        let spec = SampleSpec { checks: vec![Check::FlowBound], ..SampleSpec::default() };
        assert!(matches!(validate_assumptions(&sys, &spec), Err(Error::Config(_))));
    }
}
