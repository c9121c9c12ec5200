//! Sampled ε-δ probes of the iISS property.
//!
//! Three conditions are probed for a gain `(ρ1, ρ2)`:
//! boundedness on hybrid-time windows, stability (a `δ` for every `ε`) and
//! attractivity (`α(|x(t)|) <= ε + ‖u‖` after some hybrid time `T`).

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{observe, scenario_batch, CheckOptions, FamilyMember, Observation, Scenario, ScenarioBatch, ALL_SHAPES};
use crate::compfun::{ClassKind, ComparisonFunction};
use crate::error::{Error, Result};
use crate::quad::norm;
use crate::signals::{energy_norm, InputSignal};
use crate::simulator::IntegratorOptions;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    pub eps: Vec<f64>,
    pub radii: Vec<f64>,
    /// Hybrid-time windows for the boundedness cells and candidate `T` values for attractivity.
    pub windows: Vec<f64>,
    /// Maximum number of `δ` halvings per `ε`.
    pub budget: usize,
    /// Scenarios per member and magnitude level.
    pub scenarios: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Input amplitude used by the attractivity scenarios.
    pub input_max: f64,
    #[serde(skip)]
    pub integrator: IntegratorOptions,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            eps: vec![0.1, 0.5, 1.0],
            radii: vec![0.5, 2.0],
            windows: vec![1.0, 2.0, 4.0, 8.0, 12.0],
            budget: 20,
            scenarios: 16,
            seed: 11,
            horizon: 10.0,
            input_max: 1.0,
            integrator: IntegratorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemStatus {
    Pass,
    /// The search ran out of budget or samples; no verdict either way.
    Inconclusive,
    Fail,
}

/// Empirical bound on one `(T, r, s)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBound {
    pub window: f64,
    pub r: f64,
    pub s: f64,
    pub c: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsDelta {
    pub eps: f64,
    pub delta: Option<f64>,
    /// `(δ tried, largest sampled |x|)`
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attractivity {
    pub r: f64,
    pub eps: f64,
    pub t: Option<f64>,
    pub status: ItemStatus,
    /// `(T tried, worst margin ε + ‖u‖ - α(|x|) after T)`
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub boundedness: Vec<CellBound>,
    pub boundedness_status: ItemStatus,
    pub eps_delta: Vec<EpsDelta>,
    pub eps_delta_status: ItemStatus,
    pub attractivity: Vec<Attractivity>,
    pub attractivity_status: ItemStatus,
}

impl ProbeReport {
    pub fn all_pass(&self) -> bool {
        [self.boundedness_status, self.eps_delta_status, self.attractivity_status].iter().all(|s| *s == ItemStatus::Pass)
    }
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "boundedness: {:?} (sampled witnesses only)", self.boundedness_status)?;
        for c in &self.boundedness {
            writeln!(f, "  T = {} r = {} s = {}: C = {:.16e} over {} points", c.window, c.r, c.s, c.c, c.samples)?;
        }
        writeln!(f, "eps-delta: {:?}", self.eps_delta_status)?;
        for e in &self.eps_delta {
            match e.delta {
                Some(d) => writeln!(f, "  eps = {}: delta = {d}", e.eps)?,
                None => writeln!(f, "  eps = {}: no delta within budget, trace {:?}", e.eps, e.trace)?,
            }
        }
        writeln!(f, "attractivity: {:?}", self.attractivity_status)?;
        for a in &self.attractivity {
            writeln!(f, "  r = {} eps = {}: T = {:?} ({:?}) trace {:?}", a.r, a.eps, a.t, a.status, a.trace)?;
        }
        Ok(())
    }
}

/// Smallest scale `k <= 1` with `‖k·u‖ <= target`, by bisection.
fn scale_to_energy(
    u: &InputSignal,
    member: &FamilyMember,
    t0: f64,
    horizon: f64,
    target: f64,
    rho1: &ComparisonFunction,
    rho2: &ComparisonFunction,
) -> Result<InputSignal> {
    let energy = |k: f64| energy_norm(&u.scaled(k), t0, horizon, &member.gamma, rho1, rho2);
    if energy(1.0)? <= target {
        return Ok(u.clone());
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if energy(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(u.scaled(lo))
}

struct Level<'a> {
    spec: &'a ProbeSpec,
    rho1: &'a ComparisonFunction,
    rho2: &'a ComparisonFunction,
}

impl Level<'_> {
    fn opts(&self) -> CheckOptions {
        CheckOptions { horizon: self.spec.horizon, integrator: self.spec.integrator, ..CheckOptions::default() }
    }

    /// Scenarios with `|x0| <= x_max` and, when `energy_cap` is set, `‖u‖ <= energy_cap`.
    fn scenarios(
        &self,
        member: &FamilyMember,
        salt: u64,
        x_max: f64,
        input_max: f64,
        energy_cap: Option<f64>,
    ) -> Result<Vec<Scenario>> {
        let batch = ScenarioBatch {
            count: self.spec.scenarios,
            seed: self.spec.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            t0_max: self.spec.horizon * 0.25,
            x0_max: x_max,
            input_max,
            shapes: ALL_SHAPES.to_vec(),
        };
        let (n, m) = (member.system.state_dim(), member.system.input_dim());
        let mut out = scenario_batch(&batch, n, m, self.spec.horizon, member.gamma.times())?;
        if let Some(first) = out.first_mut() {
            // The sphere itself, not just its interior.
            let d = norm(&first.x0);
            if d > 0.0 {
                first.x0.iter_mut().for_each(|v| *v *= x_max / d);
            } else {
                first.x0[0] = x_max;
            }
        }
        if let Some(cap) = energy_cap {
            for s in &mut out {
                s.input = scale_to_energy(&s.input, member, s.t0, self.spec.horizon, cap, self.rho1, self.rho2)?;
            }
        }
        Ok(out)
    }

    fn observe_all(
        &self,
        family: &[FamilyMember],
        salt: u64,
        x_max: f64,
        input_max: f64,
        energy_cap: Option<f64>,
    ) -> Result<Vec<(Vec<Observation>, Option<f64>)>> {
        let opts = self.opts();
        let mut out = vec![];
        for (i, m) in family.iter().enumerate() {
            for s in self.scenarios(m, salt.wrapping_add(i as u64 * 7919), x_max, input_max, energy_cap)? {
                let o = observe(m, &s, &opts, Some((self.rho1, self.rho2)))?;
                out.push((o.points, o.escape));
            }
        }
        Ok(out)
    }
}

/// Probes the three ε-δ conditions on sampled scenarios.
pub fn probe_eps_delta(
    family: &[FamilyMember],
    rho1: &ComparisonFunction,
    rho2: &ComparisonFunction,
    alpha: &ComparisonFunction,
    spec: &ProbeSpec,
) -> Result<ProbeReport> {
    if family.is_empty() || spec.scenarios == 0 {
        return Err(Error::Config("probe needs at least one system and one scenario per level".into()));
    }
    for (name, g) in [("rho1", rho1), ("rho2", rho2), ("alpha", alpha)] {
        if !matches!(g.kind(), ClassKind::K | ClassKind::KInf) {
            return Err(Error::Validation(format!("{name} must be class K")));
        }
    }
    if spec.eps.iter().chain(&spec.radii).chain(&spec.windows).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("eps, radii and windows must be positive".into()));
    }
    let level = Level { spec, rho1, rho2 };

    // Boundedness on hybrid-time windows.
    let mut boundedness = vec![];
    let mut b_status = ItemStatus::Pass;
    for (ri, &r) in spec.radii.iter().enumerate() {
        for (si, &s) in spec.radii.iter().enumerate() {
            let runs = level.observe_all(family, 100 + (ri * 31 + si) as u64, r, s.max(1e-12), Some(s))?;
            for &w in &spec.windows {
                let mut c: f64 = 0.0;
                let mut samples = 0;
                for (pts, escape) in &runs {
                    if escape.is_some_and(|tx| pts.first().is_none_or(|p| tx - (p.t - p.dt) <= w)) {
                        c = f64::INFINITY;
                    }
                    for p in pts.iter().filter(|p| p.dt + p.jumps as f64 <= w) {
                        c = c.max(p.x_norm);
                        samples += 1;
                    }
                }
                if !c.is_finite() {
                    b_status = ItemStatus::Fail;
                }
                boundedness.push(CellBound { window: w, r, s, c, samples });
            }
        }
    }

    // Stability: a δ for every ε.
    let mut eps_delta = vec![];
    let mut e_status = ItemStatus::Pass;
    for (ei, &eps) in spec.eps.iter().enumerate() {
        let mut delta = eps;
        let mut trace = vec![];
        let mut found = None;
        for step in 0..=spec.budget {
            let runs = level.observe_all(family, 1000 + (ei * 97 + step) as u64, delta, delta, Some(delta))?;
            let worst = runs
                .iter()
                .map(|(pts, esc)| if esc.is_some() { f64::INFINITY } else { pts.iter().map(|p| p.x_norm).fold(0.0, f64::max) })
                .fold(0.0, f64::max);
            trace.push((delta, worst));
            if worst <= eps {
                found = Some(delta);
                break;
            }
            delta *= 0.5;
        }
        if found.is_none() {
            e_status = ItemStatus::Inconclusive;
        }
        eps_delta.push(EpsDelta { eps, delta: found, trace });
    }

    // Attractivity after hybrid time T.
    let mut windows = spec.windows.clone();
    windows.sort_by(f64::total_cmp);
    let mut attractivity = vec![];
    let mut a_status = ItemStatus::Pass;
    for (ri, &r) in spec.radii.iter().enumerate() {
        let runs = level.observe_all(family, 5000 + ri as u64, r, spec.input_max, None)?;
        for &eps in &spec.eps {
            let mut trace = vec![];
            let mut found = None;
            for &t_cand in &windows {
                let mut margin = f64::INFINITY;
                let mut seen = 0;
                for (pts, esc) in &runs {
                    let total = pts.last().map_or(0.0, |p| p.energy);
                    if esc.is_some() {
                        margin = f64::NEG_INFINITY;
                    }
                    for p in pts.iter().filter(|p| p.dt + p.jumps as f64 >= t_cand) {
                        seen += 1;
                        margin = margin.min(eps + total - alpha.value(p.x_norm));
                    }
                }
                if seen == 0 {
                    break;
                }
                trace.push((t_cand, margin));
                if margin >= 0.0 {
                    found = Some(t_cand);
                    break;
                }
            }
            let status = match found {
                Some(_) => ItemStatus::Pass,
                // Margins that keep shrinking as T grows witness growth rather than slow decay.
                None if trace.len() >= 2 && trace.last().unwrap().1 < trace[0].1 => ItemStatus::Fail,
                None => ItemStatus::Inconclusive,
            };
            a_status = worse(a_status, status);
            attractivity.push(Attractivity { r, eps, t: found, status, trace });
        }
    }

    Ok(ProbeReport {
        boundedness,
        boundedness_status: b_status,
        eps_delta,
        eps_delta_status: e_status,
        attractivity,
        attractivity_status: a_status,
    })
}

fn worse(a: ItemStatus, b: ItemStatus) -> ItemStatus {
    use ItemStatus::*;
    match (a, b) {
        (Fail, _) | (_, Fail) => Fail,
        (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
        _ => Pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid_time::ImpulseSequence;
    use crate::simulator::library::{s1, unstable};

    fn quick() -> ProbeSpec {
        ProbeSpec { scenarios: 6, radii: vec![1.0], windows: vec![2.0, 5.0, 8.0], ..ProbeSpec::default() }
    }

    #[test]
    fn s1_probes_pass() {
        let fam = vec![FamilyMember::new(s1(), ImpulseSequence::new((1..=9).map(f64::from).collect(), 10.0).unwrap())];
        let id = ComparisonFunction::identity();
        let rep = probe_eps_delta(&fam, &id, &id, &id, &quick()).unwrap();
        assert!(rep.all_pass(), "{rep}");
        for e in &rep.eps_delta {
            assert_eq!(e.delta, Some(e.eps));
        }
    }

    #[test]
    fn unstable_attractivity_fails() {
        let fam = vec![FamilyMember::new(unstable(), ImpulseSequence::empty(10.0))];
        let id = ComparisonFunction::identity();
        let rep = probe_eps_delta(&fam, &id, &id, &id, &quick()).unwrap();
        assert_ne!(rep.attractivity_status, ItemStatus::Pass);
        assert!(rep.attractivity.iter().all(|a| a.t.is_none()));
    }

    #[test]
    fn guards() {
        let id = ComparisonFunction::identity();
        assert!(probe_eps_delta(&[], &id, &id, &id, &quick()).is_err());
        let fam = vec![FamilyMember::new(s1(), ImpulseSequence::empty(10.0))];
        let bad = ProbeSpec { eps: vec![0.0], ..quick() };
        assert!(probe_eps_delta(&fam, &id, &id, &id, &bad).is_err());
    }
}
