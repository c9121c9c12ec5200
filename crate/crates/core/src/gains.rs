//! Constructive gain synthesis.
//!
//! Starting from an ISS certificate `(β, ρ)` and two-point envelopes of the
//! flow and jump maps, this module builds the UBEBS gain `(χ1, χ2)`, the
//! state bound `α̃` and the energy map `Ψ` step by step, together with the
//! auxiliary gains used when passing from UBEBS to a zero-offset estimate.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compfun::{invert_k, validate_class, ClassKind, ComparisonFunction, KLFunction};
use crate::error::{Error, Result};
use crate::quad::{linspace, logspace, norm};
use crate::simulator::SystemModel;

pub use crate::simulator::assumptions::{AssumptionEnvelopes, ChannelEnvelope};

/// `β` and `ρ` of a strong ISS estimate.
#[derive(Debug, Clone)]
pub struct IssCertificateData {
    pub beta: KLFunction,
    pub rho: ComparisonFunction,
}

impl IssCertificateData {
    pub fn new(beta: KLFunction, rho: ComparisonFunction) -> Result<Self> {
        let cert = Self { beta, rho };
        cert.validate()?;
        Ok(cert)
    }

    pub fn validate(&self) -> Result<()> {
        let rep = validate_class(&self.beta, 256);
        if !rep.passed() {
            return Err(Error::Validation(format!("beta is not class KL: {rep}")));
        }
        if self.rho.kind() != ClassKind::KInf || !validate_class(&self.rho, 256).passed() {
            return Err(Error::Validation("rho must be class K-infinity".into()));
        }
        Ok(())
    }
}

/// Which map an envelope quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Flow,
    Jump,
}

fn channel(env: &AssumptionEnvelopes, ch: Channel) -> &ChannelEnvelope {
    match ch {
        Channel::Flow => &env.f,
        Channel::Jump => &env.g,
    }
}

/// `(h1, h2) = (N(β(r,0) + ρ(b)) + O(b), P(β(r,0) + ρ(b)))` for the chosen map.
pub fn h12(ch: Channel, r: f64, b: f64, env: &AssumptionEnvelopes, cert: &IssCertificateData) -> (f64, f64) {
    let e = channel(env, ch);
    let q = cert.beta.value(r, 0.0) + cert.rho.value(b);
    (e.n.value(q) + e.o.value(b), e.p.value(q))
}

/// Smallest `T > 1` (up to `tol`) with `β(r, T - 1) <= r/3`.
pub fn t_r(cert: &IssCertificateData, r: f64, tol: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("T_r needs r > 0, got {r}")));
    }
    let target = r / 3.0;
    let beta = |t: f64| cert.beta.value(r, t);
    if beta(0.0) <= target {
        return Ok(1.0 + tol);
    }
    let mut hi = 1.0;
    while beta(hi) > target {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Horizon(format!("beta({r}, t) stays above {target} up to t = 1e9")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol * 0.5 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if beta(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((1.0 + hi).max(1.0 + tol))
}

/// Whether `β(r, ·)` is flat around the `r/3` crossing, where `T_r` may jump as `r` varies.
pub fn t_r_flat(cert: &IssCertificateData, r: f64, t_r: f64) -> bool {
    let t = t_r - 1.0;
    let h = 1e-6 * (1.0 + t);
    cert.beta.value(r, (t - h).max(0.0)) <= cert.beta.value(r, t + h)
}

/// Everything the recursion needs at a given `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusData {
    pub r: f64,
    pub t_r: f64,
    pub b_r: f64,
    pub m_r: f64,
    pub l_r: f64,
    pub h2f: f64,
    pub h2g: f64,
    /// `h_1^f(r, b_r) + h_1^g(r, b_r)`
    pub h1_bar: f64,
}

pub const T_R_TOL: f64 = 1e-10;

impl RadiusData {
    pub fn new(r: f64, env: &AssumptionEnvelopes, cert: &IssCertificateData) -> Result<Self> {
        let t_r = t_r(cert, r, T_R_TOL)?;
        let m_r = r / 3.0;
        let b_r = invert_k(&cert.rho, m_r, 1e-13 * (1.0 + m_r))?;
        let (h1f, h2f) = h12(Channel::Flow, r, b_r, env, cert);
        let (h1g, h2g) = h12(Channel::Jump, r, b_r, env, cert);
        Ok(Self { r, t_r, b_r, m_r, l_r: env.l_f.value(m_r), h2f, h2g, h1_bar: h1f + h1g })
    }

    /// `h̃_j(p, T, r, s)`.
    pub fn tilde_h(&self, env: &AssumptionEnvelopes, j: usize, p: f64, t: f64, s: f64) -> f64 {
        let growth = ((self.h2f * t + s) * self.l_r).exp();
        let mut h = p * growth;
        for _ in 0..j {
            h += (self.h2g + s) * growth * env.g.eta.value(h);
        }
        h
    }

    /// Largest of `h̃_j(p, T_r - j, r, s)` over the corners `j = 0..=⌊T_r⌋`.
    fn worst_corner(&self, env: &AssumptionEnvelopes, p: f64, s: f64) -> f64 {
        (0..=self.t_r.floor() as usize).map(|j| self.tilde_h(env, j, p, self.t_r - j as f64, s)).fold(0.0, f64::max)
    }

    /// Feasible/infeasible pair `(p̂, p̌)` bracketing `p̃(r, s)` with `p̌ <= p̂(1 + tol)`.
    pub fn tilde_p_bracket(&self, env: &AssumptionEnvelopes, s: f64, tol: f64) -> (f64, f64) {
        let cap = self.m_r / 2.0;
        let feasible = |p: f64| self.worst_corner(env, p, s) <= cap;
        // h̃_0 >= p, so anything above the cap is infeasible.
        let mut hi = self.m_r;
        let mut lo = cap;
        while !feasible(lo) {
            hi = lo;
            lo *= 0.5;
            if lo < f64::MIN_POSITIVE {
                return (0.0, hi);
            }
        }
        while hi > lo * (1.0 + tol) {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    }
}

/// `h̃_j(p, T, r, s)`.
#[allow(clippy::too_many_arguments)]
pub fn tilde_h(j: usize, p: f64, t: f64, r: f64, s: f64, env: &AssumptionEnvelopes, cert: &IssCertificateData) -> Result<f64> {
    Ok(RadiusData::new(r, env, cert)?.tilde_h(env, j, p, t, s))
}

/// `p̃(r, s)`, certified: the returned value is feasible and `value·(1 + tol)` is not.
pub fn tilde_p(r: f64, s: f64, env: &AssumptionEnvelopes, cert: &IssCertificateData, tol: f64) -> Result<f64> {
    Ok(RadiusData::new(r, env, cert)?.tilde_p_bracket(env, s, tol).0)
}

pub const TILDE_P_TOL: f64 = 1e-9;

/// `h̄_1(r)(r - 1)/p̃(r, r - 1)`.
fn ell_ratio(r: f64, env: &AssumptionEnvelopes, cert: &IssCertificateData) -> Result<f64> {
    let d = RadiusData::new(r, env, cert)?;
    let num = d.h1_bar * (r - 1.0);
    if num == 0.0 {
        return Ok(0.0);
    }
    let (p, _) = d.tilde_p_bracket(env, r - 1.0, TILDE_P_TOL);
    let v = num / p;
    if !v.is_finite() {
        return Err(Error::Domain(format!("ell is not finite at r = {r} (p~ underflows)")));
    }
    Ok(v)
}

fn ell_grid(r_bar: f64, grid: usize) -> Vec<f64> {
    if r_bar <= 1.0 || grid < 2 {
        vec![1.0]
    } else {
        logspace(1.0, r_bar, grid)
    }
}

/// `ℓ(r̄) = sup_{1<=r<=r̄} h̄_1(r)(r - 1)/p̃(r, r - 1)` on a log-spaced grid.
pub fn ell(r_bar: f64, env: &AssumptionEnvelopes, cert: &IssCertificateData, grid: usize) -> Result<f64> {
    if !(r_bar >= 1.0) {
        return Err(Error::Domain(format!("ell is defined for r >= 1, got {r_bar}")));
    }
    ell_grid(r_bar, grid).into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(ell_ratio(r, env, cert)?)))
}

/// Sampling plan for [`synthesize_ubebs_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainGrid {
    /// Largest `r` at which `ℓ` is sampled; `κ` is validated on `[0, r_max]`.
    pub r_max: f64,
    pub points: usize,
}

impl Default for GainGrid {
    fn default() -> Self {
        Self { r_max: 30.0, points: 96 }
    }
}

/// Slope of the linear term added to the envelope of `ℓ`.
pub const KAPPA_SLOPE: f64 = 1e-6;

/// The synthesized UBEBS data.
#[derive(Debug, Clone)]
pub struct UbebsGainResult {
    pub alpha: ComparisonFunction,
    pub chi1: ComparisonFunction,
    pub chi2: ComparisonFunction,
    pub kappa: ComparisonFunction,
    /// `(r, ℓ(r))` at the sample radii.
    pub ell_table: Vec<(f64, f64)>,
    /// `Ψ(E) = (1+E)[1 + N_g(1+E) + O_g(0)] + η_g(1+E)·P_g(0)`
    pub psi_big: ComparisonFunction,
    /// `α̃(r) = β(r, 0) + 2r/3`
    pub alpha_tilde: ComparisonFunction,
    pub r_max: f64,
    /// Caveats found during synthesis (flat decay regions and the like).
    pub notes: Vec<String>,
}

impl UbebsGainResult {
    /// `κ(r)`, refusing radii beyond the sampled range.
    pub fn kappa_at(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r <= self.r_max) {
            return Err(Error::Domain(format!("kappa is only certified on [0, {}], asked at {r}", self.r_max)));
        }
        Ok(self.kappa.value(r))
    }

    /// `Ψ̃(E) = Ψ(E) - Ψ(0) + E`, a K∞ function with `Ψ <= Ψ(0) + Ψ̃`.
    pub fn psi_tilde(&self) -> ComparisonFunction {
        let psi = self.psi_big.clone();
        let psi0 = psi.value(0.0);
        ComparisonFunction::custom("psi-tilde", ClassKind::KInf, move |e| psi.value(e) - psi0 + e)
    }

    /// `|x(t)| <= α̃(|x0|) + α̃(2Ψ̃(E)) + α̃(2Ψ(0))` with `E` the `(χ1, χ2)` energy.
    pub fn state_bound(&self, x0_norm: f64, energy: f64) -> f64 {
        let psi_t = self.psi_tilde();
        self.alpha_tilde.value(x0_norm)
            + self.alpha_tilde.value(2.0 * psi_t.value(energy))
            + self.alpha_tilde.value(2.0 * self.psi_big.value(0.0))
    }

    /// The state bound rewritten as `a(|x(t)|) <= |x0| + E + c`.
    ///
    /// With `Γ = max{α̃, α̃∘2Ψ̃}` every term of the state bound is at most
    /// `max{Γ(|x0|), Γ(E), Γ(c)}`, so `a = Γ^{-1}(·/3)` and `c = Γ^{-1}(α̃(2Ψ(0)))` work.
    pub fn ubebs_form(&self) -> (ComparisonFunction, f64) {
        let at = self.alpha_tilde.clone();
        let psi_t = self.psi_tilde();
        let energy_term = {
            let at = at.clone();
            ComparisonFunction::custom("alpha-tilde-of-psi", ClassKind::KInf, move |e| at.value(2.0 * psi_t.value(e)))
        };
        let gamma = ComparisonFunction::max(at.clone(), energy_term);
        let offset_state = at.value(2.0 * self.psi_big.value(0.0));
        let inv = ComparisonFunction::inverse(gamma);
        let c = inv.value(offset_state);
        let a = inv.compose(&ComparisonFunction::linear(1.0 / 3.0)).unwrap_or_else(|_| {
            let inv = ComparisonFunction::inverse(self.alpha_tilde.clone());
            ComparisonFunction::custom("ubebs-alpha", ClassKind::KInf, move |s| inv.value(s / 3.0))
        });
        (a, c)
    }
}

/// Checks the classes of every envelope and the Lipschitz bound `η_f(s) <= L^f(M)·s`.
pub fn validate_envelopes(env: &AssumptionEnvelopes, m_max: f64) -> Result<()> {
    for (name, ch) in [("f", &env.f), ("g", &env.g)] {
        for (what, fun) in [("phi_tilde", &ch.phi_tilde), ("eta", &ch.eta), ("phi", &ch.phi)] {
            if !matches!(fun.kind(), ClassKind::K | ClassKind::KInf) || !validate_class(fun, 256).passed() {
                return Err(Error::Validation(format!("{what}_{name} must be class K")));
            }
        }
        for (what, fun) in [("N", &ch.n), ("O", &ch.o), ("P", &ch.p)] {
            if fun.kind() == ClassKind::KlSection
                || !validate_class(&fun.clone().with_kind(ClassKind::Nondecreasing), 256).passed()
            {
                return Err(Error::Validation(format!("{what}_{name} must be nondecreasing")));
            }
        }
    }
    let (defect, m, s) = env.eta_lipschitz_defect(m_max, 64);
    if defect > 1e-12 * (1.0 + m_max) {
        return Err(Error::Validation(format!("eta_f({s}) exceeds L_f({m})·{s} by {defect}")));
    }
    Ok(())
}

/// Runs the full construction: sampled `ℓ`, its K∞ majorant `κ`, `α = κ(3ρ)`,
/// `χ_i >= max{φ, φ̃², α²}`, `Ψ` and `α̃`.
pub fn synthesize_ubebs_gain(env: &AssumptionEnvelopes, cert: &IssCertificateData, grid: GainGrid) -> Result<UbebsGainResult> {
    if !(grid.r_max > 1.0) || grid.points < 2 {
        return Err(Error::Config(format!("gain grid needs r_max > 1 and at least 2 points, got {grid:?}")));
    }
    cert.validate()?;
    validate_envelopes(env, grid.r_max / 3.0)?;

    let radii = logspace(1.0, grid.r_max, grid.points);
    let mut notes = Vec::new();
    let mut ell_table = Vec::with_capacity(radii.len());
    let mut running = 0.0f64;
    for &r in &radii {
        running = running.max(ell_ratio(r, env, cert)?);
        ell_table.push((r, running));
        let tr = t_r(cert, r, T_R_TOL)?;
        if t_r_flat(cert, r, tr) && notes.len() < 8 {
            notes.push(format!("beta({r:.4}, .) is flat near T_r - 1 = {:.6}; T_r may be discontinuous there", tr - 1.0));
        }
    }

    // Node r_k carries ℓ(r_{k+1}), so the interpolant dominates ℓ on each cell.
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for k in 0..ell_table.len() {
        xs.push(ell_table[k].0);
        ys.push(ell_table[(k + 1).min(ell_table.len() - 1)].1);
    }
    // The last cell and the linear extrapolation past r_max keep a slope of order ℓ_max/r_max,
    // so the strict increase survives rounding where ℓ is huge.
    if running > 0.0 {
        *ys.last_mut().expect("table is not empty") = 2.0 * running;
        xs.push(2.0 * grid.r_max);
        ys.push(4.0 * running);
    }
    let envelope = ComparisonFunction::tabulated(xs, ys, ClassKind::Nondecreasing)?;
    let kappa = ComparisonFunction::sum(envelope, ComparisonFunction::linear(KAPPA_SLOPE))
        .with_kind(ClassKind::KInf)
        .with_domain_hint(grid.r_max);

    let three_rho = ComparisonFunction::linear(3.0).compose(&cert.rho)?;
    let alpha = kappa.compose(&three_rho)?;
    let square = ComparisonFunction::power(1.0, 2.0);
    let chi = |ch: &ChannelEnvelope| -> Result<ComparisonFunction> {
        Ok(ComparisonFunction::max(
            ch.phi.clone(),
            ComparisonFunction::max(square.compose(&ch.phi_tilde)?, square.compose(&alpha)?),
        ))
    };
    let chi1 = chi(&env.f)?;
    let chi2 = chi(&env.g)?;

    let g = env.g.clone();
    let psi_big = ComparisonFunction::custom("Psi", ClassKind::Nondecreasing, move |e| {
        (1.0 + e) * (1.0 + g.n.value(1.0 + e) + g.o.value(0.0)) + g.eta.value(1.0 + e) * g.p.value(0.0)
    });
    let alpha_tilde = ComparisonFunction::sum(cert.beta.at_time(0.0), ComparisonFunction::linear(2.0 / 3.0));

    for (name, f) in [("kappa", &kappa), ("alpha", &alpha), ("chi1", &chi1), ("chi2", &chi2)] {
        let rep = validate_class(f, 512);
        if !rep.passed() {
            return Err(Error::Validation(format!("synthesized {name} failed class validation: {rep}")));
        }
    }
    Ok(UbebsGainResult { alpha, chi1, chi2, kappa, ell_table, psi_big, alpha_tilde, r_max: grid.r_max, notes })
}

/// `Ψ` alone, for callers that only need the energy map.
pub fn psi_big(env: &AssumptionEnvelopes, e: f64) -> f64 {
    let g = &env.g;
    (1.0 + e) * (1.0 + g.n.value(1.0 + e) + g.o.value(0.0)) + g.eta.value(1.0 + e) * g.p.value(0.0)
}

/// `ψ(r) = min{β_0^{-1}(r/2), r/2}` with `β_0 = β(·, 0)`.
///
/// Applied to an iISS estimate it yields the zero-offset UBEBS bound
/// `ψ(α(|x|)) <= |x0| + ‖u‖`.
pub fn psi_from_iiss(beta: &KLFunction) -> Result<ComparisonFunction> {
    let beta0 = beta.at_time(0.0);
    let top = beta0.value(beta0.domain_hint());
    if !(top.is_finite() && top > 0.0) {
        return Err(Error::Range { target: beta0.domain_hint(), max: top });
    }
    let half = ComparisonFunction::linear(0.5);
    let inv = ComparisonFunction::inverse(beta0);
    Ok(ComparisonFunction::min(inv.compose(&half)?, half))
}

/// `(max{ρ1, ν_f}, max{ρ2, ν_g})`.
pub fn rho_tilde(
    rho1: &ComparisonFunction,
    rho2: &ComparisonFunction,
    nu_f: &ComparisonFunction,
    nu_g: &ComparisonFunction,
) -> (ComparisonFunction, ComparisonFunction) {
    (ComparisonFunction::max(rho1.clone(), nu_f.clone()), ComparisonFunction::max(rho2.clone(), nu_g.clone()))
}

/// Sampling plan for [`estimate_kappa`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaSampling {
    pub seed: u64,
    pub times: usize,
    pub states: usize,
    pub inputs: usize,
    pub t_max: f64,
    pub input_radius: f64,
}

impl Default for KappaSampling {
    fn default() -> Self {
        Self { seed: 0, times: 64, states: 64, inputs: 64, t_max: 10.0, input_radius: 10.0 }
    }
}

/// Sampled estimate of the input-sensitivity constant.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaEstimate {
    /// Smallest `κ` consistent with every sample. A lower estimate of the true constant.
    pub kappa: f64,
    pub samples: usize,
    /// `(t, ξ, μ)` attaining the estimate.
    pub witness: Option<(f64, Vec<f64>, Vec<f64>)>,
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = norm(&v);
        if n > 1e-9 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Smallest sampled `κ` with `|f(t,ξ,μ) - f(t,ξ,0)| <= η + κ·ν_f(|μ|)` and the
/// same for `g`, over `|ξ| <= r_star`.
pub fn estimate_kappa(sys: &SystemModel, r_star: f64, eta: f64, spec: &KappaSampling) -> Result<KappaEstimate> {
    if !(r_star > 0.0 && eta > 0.0) {
        return Err(Error::Domain(format!("need r* > 0 and eta > 0, got {r_star}, {eta}")));
    }
    let nu_f = sys.assumptions.nu_f.clone().ok_or_else(|| Error::Config("kappa estimate needs nu_f".into()))?;
    let nu_g = sys.assumptions.nu_g.clone().ok_or_else(|| Error::Config("kappa estimate needs nu_g".into()))?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let times = linspace(0.0, spec.t_max, spec.times.max(1));
    let magnitudes = logspace(spec.input_radius * 1e-6, spec.input_radius, spec.inputs.max(2));
    let states: Vec<Vec<f64>> = (0..spec.states.max(1))
        .map(|k| {
            let d = unit_direction(&mut rng, n);
            // Spread radii over [0, r*], always including the boundary.
            let rad = if k == 0 { r_star } else { r_star * rng.gen::<f64>().sqrt() };
            d.into_iter().map(|x| x * rad).collect()
        })
        .collect();
    let directions: Vec<Vec<f64>> = magnitudes.iter().map(|_| unit_direction(&mut rng, m)).collect();
    let zero_u = vec![0.0; m];
    let mut out = KappaEstimate { kappa: 0.0, samples: 0, witness: None };
    for &t in &times {
        for xi in &states {
            let f0 = sys.flow(t, xi, &zero_u);
            let g0 = sys.jump(t, xi, &zero_u);
            for (&mag, dir) in magnitudes.iter().zip(&directions) {
                let mu: Vec<f64> = dir.iter().map(|d| d * mag).collect();
                for (gap, nu) in [(diff(&sys.flow(t, xi, &mu), &f0), &nu_f), (diff(&sys.jump(t, xi, &mu), &g0), &nu_g)] {
                    out.samples += 1;
                    if gap <= eta {
                        continue;
                    }
                    let scale = nu.value(mag);
                    if !(scale > 0.0) {
                        return Err(Error::EnvelopeInconsistency(format!(
                            "difference {gap} exceeds eta = {eta} where nu(|mu|) = 0 (t = {t}, |mu| = {mag})"
                        )));
                    }
                    let need = (gap - eta) / scale;
                    if need > out.kappa {
                        out.kappa = need;
                        out.witness = Some((t, xi.clone(), mu.clone()));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::library::{s2, scalar_linear};
    use crate::simulator::SystemModel;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn constant_channel(k: f64) -> ChannelEnvelope {
        ChannelEnvelope {
            phi_tilde: ComparisonFunction::identity(),
            n: ComparisonFunction::constant(k),
            o: ComparisonFunction::constant(0.0),
            eta: ComparisonFunction::identity(),
            p: ComparisonFunction::constant(k),
            phi: ComparisonFunction::identity(),
        }
    }

    fn unit_env() -> AssumptionEnvelopes {
        AssumptionEnvelopes { f: constant_channel(1.0), g: constant_channel(1.0), l_f: ComparisonFunction::constant(1.0) }
    }

    fn exp_cert() -> IssCertificateData {
        IssCertificateData::new(KLFunction::exponential(1.0, 1.0), ComparisonFunction::identity()).unwrap()
    }

    #[test]
    fn h12_examples() {
        let mut env = unit_env();
        env.f.o = ComparisonFunction::constant(1.0);
        let cert = exp_cert();
        assert_eq!(h12(Channel::Flow, 5.0, 7.0, &env, &cert), (2.0, 1.0));
        env.f.n = ComparisonFunction::identity();
        env.f.o = ComparisonFunction::constant(0.0);
        assert_eq!(h12(Channel::Flow, 1.0, 2.0, &env, &cert).0, 3.0);
        env.f.o = ComparisonFunction::identity();
        env.f.p = ComparisonFunction::identity();
        assert_eq!(h12(Channel::Flow, 0.0, 0.0, &env, &cert), (0.0, 0.0));
    }

    #[test]
    fn t_r_examples() {
        let cert = exp_cert();
        for r in [3.0, 0.1, 40.0] {
            let t = t_r(&cert, r, 1e-12).unwrap();
            assert!((t - (1.0 + 3f64.ln())).abs() < 1e-6, "r = {r}: {t}");
            assert!(cert.beta.value(r, t - 1.0) <= r / 3.0);
        }
        let rational = IssCertificateData::new(
            KLFunction::new(ComparisonFunction::identity(), ComparisonFunction::rational_decay(1.0, 1.0, 1.0)),
            ComparisonFunction::identity(),
        )
        .unwrap();
        assert!((t_r(&rational, 1.0, 1e-12).unwrap() - 3.0).abs() < 1e-9);
        let stuck = IssCertificateData {
            beta: KLFunction::new(ComparisonFunction::identity(), ComparisonFunction::rational_decay(1.0, 1.0, 1e-9)),
            rho: ComparisonFunction::identity(),
        };
        assert!(matches!(t_r(&stuck, 1.0, 1e-9), Err(Error::Horizon(_))));
    }

    #[test]
    fn tilde_h_examples() {
        let env = unit_env();
        let cert = exp_cert();
        assert_eq!(tilde_h(3, 0.0, 1.0, 2.0, 0.5, &env, &cert).unwrap(), 0.0);
        let h0 = tilde_h(0, 1.0, 1.0, 2.0, 0.0, &env, &cert).unwrap();
        assert!((h0 - E).abs() < 1e-12);
        let h1 = tilde_h(1, 1.0, 1.0, 2.0, 0.0, &env, &cert).unwrap();
        assert!((h1 - (E + E * E)).abs() < 1e-12);
    }

    #[test]
    fn tilde_p_certified() {
        let env = unit_env();
        let cert = exp_cert();
        // r = 3 gives M_r = 1 and T_r = 1 + ln 3.
        let d = RadiusData::new(3.0, &env, &cert).unwrap();
        assert!((d.m_r - 1.0).abs() < 1e-15);
        let (lo, hi) = d.tilde_p_bracket(&env, 0.5, 1e-9);
        assert!(lo > 0.0 && hi <= lo * (1.0 + 1e-9));
        for j in 0..=2 {
            assert!(d.tilde_h(&env, j, lo, d.t_r - j as f64, 0.5) <= 0.5);
        }
        assert!((0..=2).any(|j| d.tilde_h(&env, j, hi, d.t_r - j as f64, 0.5) > 0.5));
        let coarse = d.tilde_p_bracket(&env, 0.5, 2e-9);
        assert!(coarse.0 > 0.0 && coarse.1 <= coarse.0 * (1.0 + 2e-9));
        assert!((coarse.0 - lo).abs() <= 2e-9 * lo);
    }

    #[test]
    fn ell_examples() {
        let env = unit_env();
        let cert = exp_cert();
        assert_eq!(ell(1.0, &env, &cert, 50).unwrap(), 0.0);
        let coarse = ell(2.0, &env, &cert, 40).unwrap();
        let fine = ell(2.0, &env, &cert, 400).unwrap();
        assert!(coarse.is_finite() && coarse > 0.0);
        assert!((fine - coarse).abs() <= 0.02 * fine, "{coarse} vs {fine}");
        assert!(ell(3.0, &env, &cert, 40).unwrap() >= coarse);
    }

    #[test]
    fn synthesis_sanity() {
        let env = s2().assumptions.envelopes.clone().unwrap();
        let cert = IssCertificateData::new(KLFunction::exponential(1.0, 2f64.ln()), ComparisonFunction::linear(2.0)).unwrap();
        let res = synthesize_ubebs_gain(&env, &cert, GainGrid { r_max: 12.0, points: 48 }).unwrap();
        assert_eq!(res.alpha.value(0.0), 0.0);
        for (r, l) in &res.ell_table {
            assert!(*l <= res.kappa.value(*r));
        }
        for b in linspace(0.0, res.alpha.domain_hint(), 200) {
            let a2 = res.alpha.value(b).powi(2);
            assert!(res.chi1.value(b) >= a2 && res.chi2.value(b) >= a2);
        }
        assert!(res.kappa_at(res.r_max * 2.0).is_err());
        assert!((res.alpha_tilde.value(3.0) - 5.0).abs() < 1e-12);
        let (a, c) = res.ubebs_form();
        assert!(c >= 0.0);
        // a(|x|) <= |x0| + E + c whenever |x| is within the state bound.
        for (x0, e) in [(0.0, 0.0), (1.0, 0.5), (4.0, 2.0)] {
            let x = res.state_bound(x0, e);
            assert!(a.value(x) <= x0 + e + c + 1e-9, "{x0} {e}");
        }
    }

    #[test]
    fn psi_big_example() {
        let mut env = unit_env();
        env.g.n = ComparisonFunction::constant(1.0);
        env.g.o = ComparisonFunction::constant(0.0);
        env.g.p = ComparisonFunction::constant(1.0);
        assert!((psi_big(&env, 0.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn psi_examples() {
        let psi = psi_from_iiss(&KLFunction::exponential(1.0, 1.0)).unwrap();
        assert_eq!(psi.value(0.0), 0.0);
        assert!((psi.value(3.0) - 1.5).abs() < 1e-12);
        let psi = psi_from_iiss(&KLFunction::exponential(2.0, 1.0)).unwrap();
        assert!((psi.value(4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_tilde_examples() {
        let (a, _) = rho_tilde(
            &ComparisonFunction::identity(),
            &ComparisonFunction::identity(),
            &ComparisonFunction::linear(0.5),
            &ComparisonFunction::identity(),
        );
        assert_eq!(a.value(3.0), 3.0);
        let (a, b) = rho_tilde(
            &ComparisonFunction::power(1.0, 2.0),
            &ComparisonFunction::linear(0.5),
            &ComparisonFunction::identity(),
            &ComparisonFunction::identity(),
        );
        assert_eq!(a.value(0.5), 0.5);
        assert_eq!(a.value(2.0), 4.0);
        assert_eq!(b.value(2.0), 2.0);
        assert_eq!(a.kind(), ClassKind::KInf);
    }

    #[test]
    fn kappa_examples() {
        let spec = KappaSampling { times: 4, states: 16, inputs: 32, ..KappaSampling::default() };
        let lin = scalar_linear(-1.0, 1.0, 0.0, 0.0);
        let k = estimate_kappa(&lin, 2.0, 0.05, &spec).unwrap();
        assert!(k.kappa <= 1.0 && k.kappa > 0.5);
        let quiet = scalar_linear(-1.0, 0.0, -0.5, 0.0);
        assert_eq!(estimate_kappa(&quiet, 2.0, 0.05, &spec).unwrap().kappa, 0.0);
        let mut cubic =
            SystemModel::from_fns("cubic", 1, 1, |_, x, u, dx| dx[0] = -x[0] + u[0].powi(3), |_, _, _, dx| dx[0] = 0.0);
        cubic.assumptions.nu_f = Some(ComparisonFunction::power(1.0, 3.0));
        cubic.assumptions.nu_g = Some(ComparisonFunction::identity());
        let k = estimate_kappa(&cubic, 2.0, 0.1, &spec).unwrap();
        assert!(k.kappa <= 1.0);
        // ν vanishing identically cannot explain an input effect.
        cubic.assumptions.nu_f = Some(ComparisonFunction::constant(0.0));
        assert!(matches!(estimate_kappa(&cubic, 2.0, 0.1, &spec), Err(Error::EnvelopeInconsistency(_))));
        cubic.assumptions.nu_g = None;
        assert!(matches!(estimate_kappa(&cubic, 2.0, 0.1, &spec), Err(Error::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tilde_h_monotone(j in 0usize..4, p in 0.0f64..0.5, t in 0.0f64..2.0, r in 0.5f64..5.0, s in 0.0f64..2.0,
                            dp in 0.0f64..0.1, dt in 0.0f64..0.5, dr in 0.0f64..1.0, ds in 0.0f64..0.5) {
            let env = unit_env();
            let cert = exp_cert();
            let base = tilde_h(j, p, t, r, s, &env, &cert).unwrap();
            let tol = 1.0 + 1e-12;
            prop_assert!(tilde_h(j + 1, p, t, r, s, &env, &cert).unwrap() * tol >= base);
            prop_assert!(tilde_h(j, p + dp, t, r, s, &env, &cert).unwrap() * tol >= base);
            prop_assert!(tilde_h(j, p, t + dt, r, s, &env, &cert).unwrap() * tol >= base);
            prop_assert!(tilde_h(j, p, t, r + dr, s, &env, &cert).unwrap() * tol >= base);
            prop_assert!(tilde_h(j, p, t, r, s + ds, &env, &cert).unwrap() * tol >= base);
        }

        #[test]
        fn tilde_p_nonincreasing_in_s(r in 0.5f64..6.0, s in 0.0f64..3.0, ds in 0.0f64..1.0) {
            let env = unit_env();
            let cert = exp_cert();
            let a = tilde_p(r, s, &env, &cert, 1e-9).unwrap();
            let b = tilde_p(r, s + ds, &env, &cert, 1e-9).unwrap();
            prop_assert!(b <= a * (1.0 + 1e-8));
        }

        #[test]
        fn psi_chain(a in 0.0f64..50.0, b in 0.0f64..50.0, gain in 0.5f64..4.0) {
            let beta = KLFunction::exponential(gain, 1.0);
            let psi = psi_from_iiss(&beta).unwrap();
            let lhs = psi.value(2.0 * beta.value(a, 0.0)) + psi.value(2.0 * b);
            prop_assert!(lhs <= (a + b) * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn rho_tilde_dominates(r in 0.0f64..10.0, p1 in 0.5f64..3.0, p2 in 0.5f64..3.0) {
            let rho = ComparisonFunction::power(1.0, p1);
            let nu = ComparisonFunction::power(2.0, p2);
            let (t, _) = rho_tilde(&rho, &rho, &nu, &nu);
            prop_assert!(t.value(r) >= rho.value(r) && t.value(r) >= nu.value(r));
        }

        #[test]
        fn psi_big_nondecreasing(e in 0.0f64..20.0, de in 0.0f64..5.0) {
            let env = s2().assumptions.envelopes.clone().unwrap();
            prop_assert!(psi_big(&env, e + de) >= psi_big(&env, e));
        }
    }
}
