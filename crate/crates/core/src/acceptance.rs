//! The acceptance battery: eleven end-to-end criteria with fixed tolerances.
//!
//! Each criterion is deterministic for a given seed and reports a one-line detail.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certify::{
    check_estimate, check_weak_strong_equiv, family_impulse_times, guas_from_iiss, pipeline_iss_to_iiss, probe_eps_delta,
    scenario_batch, CheckOptions, EstimateSpec, FamilyMember, PipelineOptions, ProbeSpec, ScenarioBatch,
};
use crate::compfun::{validate_class, ComparisonFunction, KLFunction};
use crate::error::Result;
use crate::gains::{
    ell, synthesize_ubebs_gain, t_r, tilde_h, AssumptionEnvelopes, ChannelEnvelope, GainGrid, IssCertificateData, RadiusData,
};
use crate::gronwall::{domination_oracle, h_bound, h_bound_const, h_level, GronwallProblem, Rate};
use crate::hybrid_time::{check_uib, gen_dwell, ImpulseSequence};
use crate::quad::linspace;
use crate::signals::{energy_norm, exceedance, sup_norm, InputSignal, Segment, Wave};
use crate::simulator::library::{s1, s2, unstable};
use crate::simulator::{residual, simulate, IntegratorOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

pub struct Criterion {
    pub id: usize,
    /// Module tag used by `--only`.
    pub tag: &'static str,
    pub title: &'static str,
    run: fn(u64) -> Result<Outcome>,
}

impl Criterion {
    /// Runs the criterion; errors count as failures.
    pub fn run(&self, seed: u64) -> Outcome {
        (self.run)(seed).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")))
    }

    pub fn matches(&self, filter: &str) -> bool {
        filter.split(',').map(str::trim).any(|f| f == self.tag || f == self.id.to_string() || f == format!("c{}", self.id))
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, tag: "simulator", title: "closed-form trajectory match", run: c1_closed_form },
        Criterion { id: 2, tag: "gronwall", title: "Gronwall domination", run: c2_domination },
        Criterion { id: 3, tag: "gronwall", title: "semigroup inequality", run: c3_semigroup },
        Criterion { id: 4, tag: "gronwall", title: "shift invariance", run: c4_shift },
        Criterion { id: 5, tag: "certify", title: "strong 0-GUAS certificate", run: c5_guas },
        Criterion { id: 6, tag: "certify", title: "strong ISS certificate", run: c6_iss },
        Criterion { id: 7, tag: "signals", title: "norm identities", run: c7_norms },
        Criterion { id: 8, tag: "gains", title: "gain synthesis sanity", run: c8_gains },
        Criterion { id: 9, tag: "pipeline", title: "pipeline end-to-end", run: c9_pipeline },
        Criterion { id: 10, tag: "probe", title: "eps-delta probes and iISS consequences", run: c10_probes },
        Criterion { id: 11, tag: "uib", title: "UIB and weak/strong equivalence", run: c11_uib },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub id: usize,
    pub tag: &'static str,
    pub title: &'static str,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTable {
    pub rows: Vec<SuiteRow>,
}

impl SuiteTable {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.pass)
    }
}

impl fmt::Display for SuiteTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "C{:<2} {:<9} {:<40} {}  {}",
                r.id,
                r.tag,
                r.title,
                if r.outcome.pass { "PASS" } else { "FAIL" },
                r.outcome.detail
            )?;
        }
        let passed = self.rows.iter().filter(|r| r.outcome.pass).count();
        writeln!(f, "{passed}/{} criteria passed", self.rows.len())
    }
}

/// Runs every criterion matching `only` (all when `None`).
pub fn run_suite(only: Option<&str>, seed: u64) -> SuiteTable {
    let rows = criteria()
        .into_iter()
        .filter(|c| only.is_none_or(|f| c.matches(f)))
        .map(|c| SuiteRow { id: c.id, tag: c.tag, title: c.title, outcome: c.run(seed) })
        .collect();
    SuiteTable { rows }
}

fn unit_steps(horizon: f64) -> ImpulseSequence {
    ImpulseSequence::new((1..=9).map(f64::from).collect(), horizon).expect("valid literal sequence")
}

fn ln2_beta() -> KLFunction {
    KLFunction::exponential(1.0, 2f64.ln())
}

fn c1_closed_form(_seed: u64) -> Result<Outcome> {
    let sys = s1();
    let gamma = unit_steps(10.0);
    let u = InputSignal::zero(1, 10.0);
    let opts = IntegratorOptions::default();
    let traj = simulate(&sys, &gamma, 0.0, &[1.0], &u, 10.0, &opts)?;
    let exact = |t: f64| (-t).exp() * 0.5f64.powi(gamma.count(0.0, t) as i32);
    let mut times = linspace(0.0, 10.0, 2001);
    times.extend(traj.step_times());
    let mut err = 0.0f64;
    for t in times {
        err = err.max((traj.eval(t)?[0] - exact(t)).abs());
    }
    for k in 1..=9 {
        let t = k as f64;
        err = err.max((traj.eval_left(t)?[0] - (-t).exp() * 0.5f64.powi(k - 1)).abs());
    }
    let res = residual(&traj, &sys, &gamma, &u);
    Ok(Outcome::new(err <= 1e-8 && res <= 1e-6, format!("max error {err:.3e} (<= 1e-8), residual {res:.3e} (<= 1e-6)")))
}

/// Random problem with at most five well-separated jumps and a piecewise-constant rate.
fn random_problem(rng: &mut ChaCha8Rng) -> Result<GronwallProblem> {
    let n = rng.gen_range(0..=5usize);
    let t0 = rng.gen_range(0.0..2.0);
    let span = rng.gen_range(1.0..3.0);
    let t_end = t0 + span;
    let sigma: Vec<f64> = (0..n).map(|k| t0 + span * (k as f64 + 0.25 + 0.5 * rng.gen::<f64>()) / (n as f64 + 0.5)).collect();
    let ts: Vec<f64> = vec![t0, t0 + span / 3.0, t0 + 2.0 * span / 3.0];
    let values: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..=2.0)).collect();
    let omega = match rng.gen_range(0..3) {
        0 => ComparisonFunction::identity(),
        1 => ComparisonFunction::power(1.0, 0.5),
        _ => ComparisonFunction::min(ComparisonFunction::linear(1.5), ComparisonFunction::power(1.0, 0.5)),
    };
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
    GronwallProblem::new(
        rng.gen_range(0.0..3.0),
        Rate::Piecewise { ts, values },
        c,
        omega,
        ImpulseSequence::new(sigma, t_end)?,
        t0,
        t_end,
    )
}

fn c2_domination(seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6f6e);
    let (mut failures, mut zero_failures) = (0, 0);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..200 {
        let prob = random_problem(&mut rng)?;
        let rep = domination_oracle(&prob, 200, 200, seed.wrapping_add(k))?;
        worst = worst.max(rep.worst_gap);
        if !rep.pass {
            failures += 1;
        }
        let zero = GronwallProblem { p: 0.0, ..prob.clone() };
        if linspace(zero.t0, zero.t_end, 7).into_iter().any(|t| h_bound(&zero, t) != Ok(0.0)) {
            zero_failures += 1;
        }
    }
    Ok(Outcome::new(
        failures == 0 && zero_failures == 0,
        format!("200 problems x 200 sub-solutions: {failures} dominated-bound failures, worst gap {worst:.3e}; p = 0 nonzero in {zero_failures}"),
    ))
}

fn c3_semigroup(seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7365_6d69);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..100 {
        let prob = random_problem(&mut rng)?;
        let k = prob.c_seq.len();
        for _ in 0..10 {
            let (x, y) = (rng.gen_range(prob.t0..=prob.t_end), rng.gen_range(prob.t0..=prob.t_end));
            let (r, t) = (x.min(y), x.max(y));
            let lhs = h_level(&prob, k, r)? * prob.a.integral(r, t).exp();
            let rhs = h_level(&prob, k, t)?;
            if rhs > 0.0 {
                worst = worst.max(lhs / rhs - 1.0);
            }
            if lhs > rhs * (1.0 + 1e-9) {
                violations += 1;
            }
        }
    }
    Ok(Outcome::new(violations == 0, format!("1000 (r, t) pairs: {violations} violations, worst excess {worst:.3e} (<= 1e-9)")))
}

fn c4_shift(seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7368_6966);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let base = random_problem(&mut rng)?;
        let l = rng.gen_range(0.0..2.0);
        let prob = GronwallProblem { a: Rate::Constant(l), ..base };
        let t = rng.gen_range(prob.t0..=prob.t_end);
        let j = prob.c_seq.len();
        let shifted = h_level(&prob, j, t)?;
        let reference = h_bound_const(prob.p, l, &prob.c_seq, &prob.omega, j, t - prob.t0)?;
        worst = worst.max((shifted - reference).abs() / (1.0 + reference));
    }
    Ok(Outcome::new(worst <= 1e-9, format!("50 instances: worst relative difference {worst:.3e} (<= 1e-9)")))
}

fn c5_guas(seed: u64) -> Result<Outcome> {
    let fam = vec![FamilyMember::new(s1(), unit_steps(10.0))];
    let batch = ScenarioBatch { count: 50, seed, t0_max: 3.0, x0_max: 10.0, ..ScenarioBatch::default() };
    let sc = scenario_batch(&batch, 1, 1, 10.0, &family_impulse_times(&fam))?;
    let opts = CheckOptions::default();
    let good = check_estimate(&fam, &EstimateSpec::zero_guas(ln2_beta()), &sc, &opts)?;
    let bad = check_estimate(&fam, &EstimateSpec::zero_guas(KLFunction::exponential(1.0, 2.0)), &sc, &opts)?;
    let between = bad.flow_witness.as_ref().filter(|w| w.observed > w.bound && !fam[0].gamma.contains(w.t) && !w.left_limit);
    let detail = match between {
        Some(w) => format!(
            "correct beta margin {:.3e}; wrong beta fails at t = {:.6} (between jumps), observed {:.6e} > bound {:.6e}",
            good.worst_margin, w.t, w.observed, w.bound
        ),
        None => format!("correct beta pass = {}; wrong beta pass = {} without an inter-jump witness", good.pass, bad.pass),
    };
    Ok(Outcome::new(good.pass && !bad.pass && between.is_some(), detail))
}

fn c6_iss(seed: u64) -> Result<Outcome> {
    let fam = vec![FamilyMember::new(s2(), unit_steps(10.0))];
    let batch = ScenarioBatch { count: 100, seed, ..ScenarioBatch::default() };
    let sc = scenario_batch(&batch, 1, 1, 10.0, &family_impulse_times(&fam))?;
    let spec = EstimateSpec::iss(ln2_beta(), ComparisonFunction::linear(2.0));
    let rep = check_estimate(&fam, &spec, &sc, &CheckOptions::default())?;
    let dense = check_estimate(&fam, &spec, &sc, &CheckOptions { grid: 4001, ..CheckOptions::default() })?;
    let pass = rep.pass && dense.worst_margin >= -1e-7;
    Ok(Outcome::new(
        pass,
        format!("100 scenarios: margin {:.3e}; dense-grid margin {:.3e} (>= -1e-7)", rep.worst_margin, dense.worst_margin),
    ))
}

fn random_signal(rng: &mut ChaCha8Rng) -> Result<(InputSignal, ImpulseSequence)> {
    let coeffs: Vec<f64> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let segs = vec![
        Segment { start: 0.0, end: 2.0, components: vec![Wave::Polynomial { coeffs }] },
        Segment {
            start: 2.0,
            end: 5.0,
            components: vec![Wave::Sinusoid {
                amplitude: rng.gen_range(-3.0..3.0),
                omega: rng.gen_range(0.1..4.0),
                phase: rng.gen_range(0.0..6.0),
                offset: 0.0,
            }],
        },
    ];
    let mut u = InputSignal::new(1, 5.0, segs)?;
    let mut times: Vec<f64> = (0..rng.gen_range(0..6)).map(|_| f64::from(rng.gen_range(1u32..500)) / 100.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for &t in &times {
        if rng.gen_bool(0.5) {
            u = u.with_point_value(t, vec![rng.gen_range(-4.0..4.0)])?;
        }
    }
    Ok((u, ImpulseSequence::new(times, 5.0)?))
}

fn c7_norms(seed: u64) -> Result<Outcome> {
    let id = ComparisonFunction::identity();
    let three = InputSignal::constant(&[3.0], 2.0);
    let worked = energy_norm(&three, 0.0, 2.0, &ImpulseSequence::new(vec![1.0], 2.0)?, &id, &id)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_726d);
    let chi1 = ComparisonFunction::power(1.0, 2.0);
    let chi2 = ComparisonFunction::linear(2.0);
    let (mut additivity, mut trunc_excess, mut cheb_excess) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let (u, gm) = random_signal(&mut rng)?;
        let mut p = [rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)];
        p.sort_by(f64::total_cmp);
        let e = |a, b| energy_norm(&u, a, b, &gm, &chi1, &id);
        additivity = additivity.max((e(p[0], p[1])? + e(p[1], p[2])? - e(p[0], p[2])?).abs());
        let b = rng.gen_range(0.01..3.0);
        trunc_excess = trunc_excess.max(sup_norm(&u.truncate(b)?, 0.0, 5.0, &gm) - b);
        let total = energy_norm(&u, 0.0, 5.0, &gm, &chi1, &chi2)?;
        let ex = exceedance(&u, b, &gm)?;
        cheb_excess = cheb_excess.max(ex.measure * chi1.value(b) - total).max(ex.impulse_count as f64 * chi2.value(b) - total);
    }
    let pass = worked == 9.0 && additivity <= 1e-9 && trunc_excess <= 1e-12 && cheb_excess <= 1e-8;
    Ok(Outcome::new(
        pass,
        format!(
            "worked value {worked}; additivity defect {additivity:.3e}; truncation excess {trunc_excess:.3e}; Chebyshev excess {cheb_excess:.3e}"
        ),
    ))
}

fn unit_channel() -> ChannelEnvelope {
    ChannelEnvelope {
        phi_tilde: ComparisonFunction::identity(),
        n: ComparisonFunction::constant(1.0),
        o: ComparisonFunction::constant(0.0),
        eta: ComparisonFunction::identity(),
        p: ComparisonFunction::constant(1.0),
        phi: ComparisonFunction::identity(),
    }
}

fn c8_gains(_seed: u64) -> Result<Outcome> {
    let env = AssumptionEnvelopes { f: unit_channel(), g: unit_channel(), l_f: ComparisonFunction::constant(1.0) };
    let cert = IssCertificateData::new(KLFunction::exponential(1.0, 1.0), ComparisonFunction::identity())?;
    let tr_err = (t_r(&cert, 3.0, 1e-12)? - (1.0 + 3f64.ln())).abs();
    let h0_err = (tilde_h(0, 1.0, 1.0, 2.0, 0.0, &env, &cert)? - std::f64::consts::E).abs();

    let tol = 1e-9;
    let mut bracket_failures = 0;
    for r in [1.5, 2.0, 3.0, 5.0, 8.0] {
        let d = RadiusData::new(r, &env, &cert)?;
        let corners = d.t_r.floor() as usize;
        for s in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let (lo, hi) = d.tilde_p_bracket(&env, s, tol);
            let worst = |p: f64| (0..=corners).map(|j| d.tilde_h(&env, j, p, d.t_r - j as f64, s)).fold(0.0, f64::max);
            let cap = d.m_r / 2.0;
            if !(lo > 0.0 && hi <= lo * (1.0 + tol) && worst(lo) <= cap && worst(hi) > cap) {
                bracket_failures += 1;
            }
        }
    }
    let coarse = ell(2.0, &env, &cert, 40)?;
    let fine = ell(2.0, &env, &cert, 400)?;
    let ell_change = (fine - coarse).abs() / fine;

    let s2_env = s2().assumptions.envelopes.clone().expect("library systems declare envelopes");
    let s2_cert = IssCertificateData::new(ln2_beta(), ComparisonFunction::linear(2.0))?;
    let res = synthesize_ubebs_gain(&s2_env, &s2_cert, GainGrid { r_max: 12.0, points: 48 })?;
    let classes_ok = [&res.alpha, &res.chi1, &res.chi2, &res.kappa].iter().all(|f| validate_class(*f, 512).passed());
    let dominated = linspace(0.0, res.alpha.domain_hint(), 400).into_iter().all(|b| {
        let a2 = res.alpha.value(b).powi(2);
        res.chi1.value(b) >= a2 && res.chi2.value(b) >= a2
    });
    let pass = tr_err <= 1e-6 && h0_err <= 1e-12 && bracket_failures == 0 && ell_change <= 0.02 && classes_ok && dominated;
    Ok(Outcome::new(
        pass,
        format!(
            "T_r error {tr_err:.1e}; h0 error {h0_err:.1e}; {bracket_failures}/25 bracket failures; ell change {:.2}%; classes {}; chi >= alpha^2 {}",
            100.0 * ell_change,
            if classes_ok { "ok" } else { "FAIL" },
            if dominated { "ok" } else { "FAIL" }
        ),
    ))
}

fn c9_pipeline(seed: u64) -> Result<Outcome> {
    let gamma = unit_steps(10.0);
    let fam = vec![FamilyMember::new(s1(), gamma.clone()), FamilyMember::new(s2(), gamma)];
    let env = s2().assumptions.envelopes.clone().expect("library systems declare envelopes");
    let cert = IssCertificateData::new(ln2_beta(), ComparisonFunction::linear(2.0))?;
    let opts = PipelineOptions {
        scenarios: ScenarioBatch { count: 24, seed, ..ScenarioBatch::default() },
        gain_grid: GainGrid { r_max: 20.0, points: 48 },
        ..PipelineOptions::default()
    };
    let rep = pipeline_iss_to_iiss(&fam, &cert, &env, &opts)?;
    let unstable_fam = vec![FamilyMember::new(unstable(), ImpulseSequence::empty(10.0))];
    let bad = pipeline_iss_to_iiss(&unstable_fam, &cert, &env, &opts)?;
    let growth = bad.halted_at == Some(1) && bad.stages[0].report.witness.as_ref().is_some_and(|w| w.observed > w.bound);
    Ok(Outcome::new(
        rep.pass() && growth,
        format!(
            "{{S1, S2}}: {} of 4 stages passed; x' = x halts at stage {:?}{}",
            rep.stages.iter().filter(|s| s.pass).count(),
            bad.halted_at,
            if growth { " with a growth witness" } else { "" }
        ),
    ))
}

fn s1_family() -> Result<Vec<FamilyMember>> {
    Ok(vec![
        FamilyMember::new(s1(), gen_dwell(0.5, 10.0, None)?),
        FamilyMember::new(s1(), unit_steps(10.0)),
        FamilyMember::new(s1(), ImpulseSequence::empty(10.0)),
    ])
}

fn c10_probes(seed: u64) -> Result<Outcome> {
    let fam = s1_family()?;
    let id = ComparisonFunction::identity();
    let spec = ProbeSpec { seed, ..ProbeSpec::default() };
    let probe = probe_eps_delta(&fam, &id, &id, &id, &spec)?;
    let deltas: Vec<String> = probe.eps_delta.iter().map(|e| format!("{}->{:?}", e.eps, e.delta)).collect();
    let found = probe.eps_delta.iter().all(|e| e.delta.is_some()) && probe.eps_delta.len() == 3;

    let sc =
        scenario_batch(&ScenarioBatch { count: 30, seed, ..ScenarioBatch::default() }, 1, 1, 10.0, &family_impulse_times(&fam))?;
    let opts = CheckOptions::default();
    let (alpha, beta) = (id.clone(), ln2_beta());
    let iiss = check_estimate(&fam, &EstimateSpec::iiss(alpha.clone(), beta.clone(), id.clone(), id.clone()), &sc, &opts)?;
    let guas = check_estimate(&fam, &EstimateSpec::zero_guas(guas_from_iiss(&alpha, &beta)), &sc, &opts)?;
    let psi = crate::gains::psi_from_iiss(&beta)?.compose(&alpha)?;
    let ubebs = check_estimate(&fam, &EstimateSpec::ubebs(psi, id.clone(), id, 0.0), &sc, &opts)?;
    let meta = !iiss.pass || (guas.pass && ubebs.pass);
    Ok(Outcome::new(
        found && iiss.pass && meta,
        format!(
            "deltas [{}]; iISS {}, derived 0-GUAS {}, derived UBEBS {}",
            deltas.join(", "),
            verdict(iiss.pass),
            verdict(guas.pass),
            verdict(ubebs.pass)
        ),
    ))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn c11_uib(seed: u64) -> Result<Outcome> {
    let phi = ComparisonFunction::affine_power(0.0, 1.0, 2.0, 1.0);
    let dwell = gen_dwell(0.5, 10.0, None)?;
    let uib = check_uib(std::slice::from_ref(&dwell), &phi);
    let packed: Vec<ImpulseSequence> =
        (1..=4).map(|k| ImpulseSequence::new((1..=k).map(|i| i as f64 / k as f64).collect(), 10.0)).collect::<Result<_>>()?;
    let packed_rep = check_uib(&packed, &phi);

    let fam: Vec<FamilyMember> =
        [0.5, 0.75, 1.3].iter().map(|&d| gen_dwell(d, 10.0, None).map(|g| FamilyMember::new(s1(), g))).collect::<Result<_>>()?;
    let sc =
        scenario_batch(&ScenarioBatch { count: 20, seed, ..ScenarioBatch::default() }, 1, 1, 10.0, &family_impulse_times(&fam))?;
    let equiv = check_weak_strong_equiv(&fam, &phi, &EstimateSpec::zero_guas(ln2_beta()), &sc, &CheckOptions::default())?;
    let surrogate = equiv.surrogate.as_ref().is_some_and(|s| s.pass);
    let pass = uib.pass && !packed_rep.pass && equiv.strong_not_weak == 0 && equiv.weak.pass && surrogate;
    Ok(Outcome::new(
        pass,
        format!(
            "dwell-0.5 UIB {}; packed UIB {}; strong-not-weak points {} of {}; surrogate {}",
            verdict(uib.pass),
            verdict(packed_rep.pass),
            equiv.strong_not_weak,
            equiv.points,
            verdict(surrogate)
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_select_subsets() {
        let all = criteria();
        assert!(all.len() >= 11);
        let ids: Vec<usize> = all.iter().filter(|c| c.matches("gronwall")).map(|c| c.id).collect();
        assert_eq!(ids, vec![2, 3, 4]);
        assert_eq!(all.iter().filter(|c| c.matches("c7, uib")).count(), 2);
        assert_eq!(all.iter().filter(|c| c.matches("nothing")).count(), 0);
    }

    #[test]
    fn gronwall_rows_are_deterministic() {
        let a = run_suite(Some("4"), 3);
        let b = run_suite(Some("4"), 3);
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 1);
        assert!(a.pass(), "{a}");
    }
}
