//! From a strong ISS certificate to a checked strong iISS estimate.
//!
//! Stages:
//! 1. zero-input stability with the certificate's `β`;
//! 2. synthesized UBEBS gains, checked as `a(|x|) <= |x0| + ‖u‖_{χ1,χ2} + c`;
//! 3. the zero-offset form `α̃(|x|) <= |x0| + ‖u‖_{ρ̃1,ρ̃2}` with `ρ̃_i = max{χ_i, ν}`;
//! 4. a candidate iISS estimate assembled from stages 1 and 3.

use std::fmt;

use super::{
    check_estimate, family_impulse_times, observe, scenario_batch, CertificateReport, CheckOptions, EstimateSpec, FamilyMember,
    Scenario, ScenarioBatch,
};
use crate::compfun::{ClassKind, ComparisonFunction, KLFunction};
use crate::error::{Error, Result};
use crate::gains::{rho_tilde, synthesize_ubebs_gain, AssumptionEnvelopes, GainGrid, IssCertificateData, UbebsGainResult};
use crate::quad::{logspace, norm};
use crate::signals::energy_norm;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub scenarios: ScenarioBatch,
    pub check: CheckOptions,
    pub gain_grid: GainGrid,
    /// Radii at which the zero-offset state bound is sampled.
    pub alpha_radii: usize,
    /// Scenarios per member and radius when sampling that bound.
    pub alpha_scenarios: usize,
    /// Relative headroom added to the sampled state bound.
    pub alpha_headroom: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            scenarios: ScenarioBatch { count: 24, ..ScenarioBatch::default() },
            check: CheckOptions::default(),
            gain_grid: GainGrid::default(),
            alpha_radii: 16,
            alpha_scenarios: 8,
            alpha_headroom: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: usize,
    pub name: &'static str,
    pub pass: bool,
    pub report: CertificateReport,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub stages: Vec<StageReport>,
    pub gains: Option<UbebsGainResult>,
    /// The zero-offset gains `(α̃, ρ̃1, ρ̃2)`.
    pub zero_offset: Option<(ComparisonFunction, ComparisonFunction, ComparisonFunction)>,
    pub iiss: Option<EstimateSpec>,
    /// Number of the stage that failed, if any.
    pub halted_at: Option<usize>,
}

impl PipelineReport {
    pub fn pass(&self) -> bool {
        self.halted_at.is_none() && self.stages.len() == 4 && self.stages.iter().all(|s| s.pass)
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stages {
            writeln!(f, "stage {} ({}): {}", s.stage, s.name, if s.pass { "pass" } else { "FAIL" })?;
            for line in s.report.to_string().lines() {
                writeln!(f, "  {line}")?;
            }
        }
        if let Some(g) = &self.gains {
            for n in &g.notes {
                writeln!(f, "note: {n}")?;
            }
        }
        match self.halted_at {
            Some(k) => writeln!(f, "halted at stage {k}"),
            None => writeln!(f, "all stages passed"),
        }
    }
}

fn family_nu(
    family: &[FamilyMember],
    pick: impl Fn(&FamilyMember) -> Option<ComparisonFunction>,
    name: &str,
) -> Result<ComparisonFunction> {
    family
        .iter()
        .map(|m| pick(m).ok_or_else(|| Error::Config(format!("system '{}' declares no {name}", m.system.name()))))
        .reduce(|a, b| Ok(ComparisonFunction::max(a?, b?)))
        .expect("family is not empty")
}

/// Sampled `ᾱ(r) = sup{|x(t)| : |x0| <= r, ‖u‖ <= r}` turned into a K∞ majorant `α̂`,
/// and `α̃(s) = α̂^{-1}(s/2)`.
fn zero_offset_alpha(
    family: &[FamilyMember],
    rho1: &ComparisonFunction,
    rho2: &ComparisonFunction,
    base: &[Scenario],
    r_max: f64,
    opts: &PipelineOptions,
) -> Result<ComparisonFunction> {
    let radii = logspace(r_max * 1e-4, r_max, opts.alpha_radii.max(2));
    let mut sup = Vec::with_capacity(radii.len());
    let mut running = 0.0f64;
    for (k, &r) in radii.iter().enumerate() {
        for (mi, m) in family.iter().enumerate() {
            for (si, s) in base.iter().take(opts.alpha_scenarios).enumerate() {
                let d = norm(&s.x0);
                let x0: Vec<f64> = if d > 0.0 { s.x0.iter().map(|v| v / d * r).collect() } else { s.x0.clone() };
                // Alternate between full-size inputs and inputs that share the budget with x0.
                let cap = if (k + si + mi) % 2 == 0 { r } else { 0.5 * r };
                let e = energy_norm(&s.input, s.t0, opts.check.horizon, &m.gamma, rho1, rho2)?;
                let input = if e > cap { scale_energy(s, m, cap, rho1, rho2, opts.check.horizon)? } else { s.input.clone() };
                let sc = Scenario { id: s.id.clone(), t0: s.t0, x0, input };
                let obs = observe(m, &sc, &opts.check, None)?;
                if let Some(tx) = obs.escape {
                    return Err(Error::Numerical { t: tx, detail: "escape while sampling the zero-offset state bound".into() });
                }
                running = running.max(obs.points.iter().map(|p| p.x_norm).fold(0.0, f64::max));
            }
        }
        sup.push(running);
    }
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for k in 0..radii.len() {
        xs.push(radii[k]);
        ys.push(sup[(k + 1).min(radii.len() - 1)] * (1.0 + opts.alpha_headroom));
    }
    let slope = 1e-9 * (1.0 + running / r_max);
    let hat = ComparisonFunction::sum(
        ComparisonFunction::tabulated(xs, ys, ClassKind::Nondecreasing)?,
        ComparisonFunction::linear(slope),
    )
    .with_kind(ClassKind::KInf);
    ComparisonFunction::inverse(hat).compose(&ComparisonFunction::linear(0.5))
}

fn scale_energy(
    s: &Scenario,
    m: &FamilyMember,
    cap: f64,
    rho1: &ComparisonFunction,
    rho2: &ComparisonFunction,
    horizon: f64,
) -> Result<crate::signals::InputSignal> {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if energy_norm(&s.input.scaled(mid), s.t0, horizon, &m.gamma, rho1, rho2)? <= cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(s.input.scaled(lo))
}

/// Runs the four stages, stopping at the first failing one.
pub fn pipeline_iss_to_iiss(
    family: &[FamilyMember],
    iss_cert: &IssCertificateData,
    env: &AssumptionEnvelopes,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    if family.is_empty() || opts.scenarios.count == 0 {
        return Err(Error::Config("pipeline needs at least one system and a nonzero scenario budget".into()));
    }
    iss_cert.validate()?;
    let first = &family[0].system;
    let scenarios =
        scenario_batch(&opts.scenarios, first.state_dim(), first.input_dim(), opts.check.horizon, &family_impulse_times(family))?;
    let mut out = PipelineReport { stages: vec![], gains: None, zero_offset: None, iiss: None, halted_at: None };
    let push = |out: &mut PipelineReport, stage: usize, name: &'static str, report: CertificateReport| -> bool {
        let pass = report.pass;
        out.stages.push(StageReport { stage, name, pass, report });
        if !pass {
            out.halted_at = Some(stage);
        }
        pass
    };

    let guas = check_estimate(family, &EstimateSpec::zero_guas(iss_cert.beta.clone()), &scenarios, &opts.check)?;
    if !push(&mut out, 1, "zero-input stability", guas) {
        return Ok(out);
    }
    let iss = check_estimate(family, &EstimateSpec::iss(iss_cert.beta.clone(), iss_cert.rho.clone()), &scenarios, &opts.check)?;
    if !iss.pass {
        return Err(Error::Precondition(format!("the ISS certificate does not hold on the ensemble:\n{iss}")));
    }

    let gains = synthesize_ubebs_gain(env, iss_cert, opts.gain_grid)?;
    let (a, c) = gains.ubebs_form();
    let ubebs =
        check_estimate(family, &EstimateSpec::ubebs(a, gains.chi1.clone(), gains.chi2.clone(), c), &scenarios, &opts.check)?;
    let (chi1, chi2) = (gains.chi1.clone(), gains.chi2.clone());
    out.gains = Some(gains);
    if !push(&mut out, 2, "bounded energy, bounded state", ubebs) {
        return Ok(out);
    }

    let nu_f = family_nu(family, |m| m.system.assumptions.nu_f.clone(), "nu_f")?;
    let nu_g = family_nu(family, |m| m.system.assumptions.nu_g.clone(), "nu_g")?;
    let (rt1, rt2) = rho_tilde(&chi1, &chi2, &nu_f, &nu_g);
    let r_max = scenarios.iter().map(|s| norm(&s.x0)).fold(1.0, f64::max) * 1.5;
    let alpha_t = zero_offset_alpha(family, &rt1, &rt2, &scenarios, r_max, opts)?;
    let zero =
        check_estimate(family, &EstimateSpec::ubebs(alpha_t.clone(), rt1.clone(), rt2.clone(), 0.0), &scenarios, &opts.check)?;
    out.zero_offset = Some((alpha_t.clone(), rt1.clone(), rt2.clone()));
    if !push(&mut out, 3, "zero-offset bound", zero) {
        return Ok(out);
    }

    // Candidate: α = α̃/2 as in the attractivity argument, β = α̃∘β_ISS from the zero-input decay.
    let alpha_c = ComparisonFunction::linear(0.5).compose(&alpha_t)?;
    let beta_c: KLFunction = iss_cert.beta.clone().with_outer(alpha_t);
    let spec = EstimateSpec::iiss(alpha_c, beta_c, rt1, rt2);
    let iiss = check_estimate(family, &spec, &scenarios, &opts.check)?;
    out.iiss = Some(spec);
    push(&mut out, 4, "candidate iISS estimate", iiss);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid_time::{gen_dwell, ImpulseSequence};
    use crate::simulator::library::{s1, s2, unstable};

    fn cert() -> IssCertificateData {
        IssCertificateData::new(KLFunction::exponential(1.0, 2f64.ln()), ComparisonFunction::linear(2.0)).unwrap()
    }

    fn quick() -> PipelineOptions {
        PipelineOptions {
            scenarios: ScenarioBatch { count: 8, ..ScenarioBatch::default() },
            check: CheckOptions { grid: 81, ..CheckOptions::default() },
            gain_grid: GainGrid { r_max: 20.0, points: 32 },
            alpha_radii: 8,
            alpha_scenarios: 4,
            ..PipelineOptions::default()
        }
    }

    #[test]
    fn s1_s2_family_passes() {
        let gamma = gen_dwell(1.0, 10.0, None).unwrap();
        let fam = vec![FamilyMember::new(s1(), gamma.clone()), FamilyMember::new(s2(), gamma)];
        let env = s2().assumptions.envelopes.clone().unwrap();
        let rep = pipeline_iss_to_iiss(&fam, &cert(), &env, &quick()).unwrap();
        assert!(rep.pass(), "{rep}");
        assert_eq!(rep.stages.len(), 4);
    }

    #[test]
    fn unstable_halts_at_stage_one() {
        let fam = vec![FamilyMember::new(unstable(), ImpulseSequence::empty(10.0))];
        let env = s2().assumptions.envelopes.clone().unwrap();
        let rep = pipeline_iss_to_iiss(&fam, &cert(), &env, &quick()).unwrap();
        assert_eq!(rep.halted_at, Some(1));
        let w = rep.stages[0].report.witness.as_ref().unwrap();
        assert!(w.observed > w.bound);
    }

    #[test]
    fn empty_budget_is_an_error() {
        let fam = vec![FamilyMember::new(s1(), ImpulseSequence::empty(10.0))];
        let env = s2().assumptions.envelopes.clone().unwrap();
        let opts = PipelineOptions { scenarios: ScenarioBatch { count: 0, ..ScenarioBatch::default() }, ..quick() };
        assert!(pipeline_iss_to_iiss(&fam, &cert(), &env, &opts).is_err());
    }
}
