//! Weak versus strong estimates on families with bounded impulse counts.

use std::fmt;

use super::{check_estimate, observe, CertificateReport, CheckOptions, EstimateSpec, FamilyMember, Mode, Scenario};
use crate::compfun::{ClassKind, ComparisonFunction, KLFunction};
use crate::error::{Error, Result};
use crate::hybrid_time::{check_uib, ImpulseSequence};

#[derive(Debug, Clone)]
pub struct EquivReport {
    pub strong: CertificateReport,
    pub weak: CertificateReport,
    /// The strong estimate rebuilt from the weak one through the count bound.
    pub surrogate: Option<CertificateReport>,
    pub points: usize,
    /// Points where the strong estimate holds and the weak one does not. Always zero
    /// for decreasing `β`.
    pub strong_not_weak: usize,
}

impl EquivReport {
    pub fn pass(&self) -> bool {
        let weak_to_strong = !self.weak.pass || self.surrogate.as_ref().is_none_or(|s| s.pass);
        self.strong_not_weak == 0 && weak_to_strong
    }
}

impl fmt::Display for EquivReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "strong: {}", if self.strong.pass { "pass" } else { "fail" })?;
        writeln!(f, "weak: {}", if self.weak.pass { "pass" } else { "fail" })?;
        writeln!(f, "strong-holds-weak-fails points: {} of {}", self.strong_not_weak, self.points)?;
        if let Some(s) = &self.surrogate {
            writeln!(
                f,
                "weak-to-strong surrogate: {} (worst margin {:.16e})",
                if s.pass { "pass" } else { "fail" },
                s.worst_margin
            )?;
        }
        Ok(())
    }
}

/// `θ^{-1}(τ)` for `θ(s) = s + φ(s)`.
fn theta_inverse(phi: &ComparisonFunction, tau: f64) -> f64 {
    let theta = |s: f64| s + phi.value(s);
    if tau <= theta(0.0) {
        return 0.0;
    }
    let mut hi = tau.max(1.0);
    while theta(hi) < tau {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if theta(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    lo
}

/// `β''(r, τ) = β(r, θ^{-1}(τ))` with `θ(s) = s + φ(s)`.
///
/// When `n ≤ φ(t - t0)`, the hybrid elapsed time `τ` satisfies `τ ≤ θ(t - t0)`,
/// so `β(r, t - t0) ≤ β''(r, τ)` and a weak estimate with `β` yields a strong one with `β''`.
/// The constant part `φ(0)` only shifts the warp: below `θ(0)` the bound keeps `β(r, 0)`.
pub fn strong_surrogate(beta: &KLFunction, phi: &ComparisonFunction) -> KLFunction {
    let decay = beta.decay().clone();
    let phi = phi.clone();
    let warped =
        ComparisonFunction::custom("warped-decay", ClassKind::KlSection, move |tau| decay.value(theta_inverse(&phi, tau)));
    let out = KLFunction::new(beta.amplitude().clone(), warped);
    match beta.outer() {
        Some(o) => out.with_outer(o.clone()),
        None => out,
    }
}

/// Checks both directions of the weak/strong equivalence for a family whose
/// impulse counts satisfy `n ≤ φ(t - t0)`.
pub fn check_weak_strong_equiv(
    family: &[FamilyMember],
    phi: &ComparisonFunction,
    spec: &EstimateSpec,
    scenarios: &[Scenario],
    opts: &CheckOptions,
) -> Result<EquivReport> {
    let gammas: Vec<ImpulseSequence> = family.iter().map(|m| m.gamma.clone()).collect();
    let uib = check_uib(&gammas, phi);
    if !uib.pass {
        return Err(Error::Precondition(format!(
            "impulse family is not uniformly incrementally bounded by the given phi: {:?}",
            uib.worst
        )));
    }
    let strong_spec = spec.clone().with_mode(Mode::Strong);
    let weak_spec = spec.clone().with_mode(Mode::Weak);
    let strong = check_estimate(family, &strong_spec, scenarios, opts)?;
    let weak = check_estimate(family, &weak_spec, scenarios, opts)?;

    let gains = match (&spec.rho1, &spec.rho2) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let mut points = 0;
    let mut strong_not_weak = 0;
    for m in family {
        for s in scenarios {
            for o in observe(m, s, opts, gains)?.points {
                points += 1;
                let (l, r) = strong_spec.sides(&o);
                let (lw, rw) = weak_spec.sides(&o);
                if r - l >= -opts.slack && rw - lw < -opts.slack {
                    strong_not_weak += 1;
                }
            }
        }
    }

    let surrogate = match &spec.beta {
        Some(beta) if weak.pass => {
            let mut s = strong_spec.clone();
            s.beta = Some(strong_surrogate(beta, phi));
            Some(check_estimate(family, &s, scenarios, opts)?)
        }
        _ => None,
    };
    Ok(EquivReport { strong, weak, surrogate, points, strong_not_weak })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{family_impulse_times, scenario_batch, ScenarioBatch};
    use crate::hybrid_time::gen_dwell;
    use crate::simulator::library::s1;

    #[test]
    fn theta_inverse_examples() {
        let phi = ComparisonFunction::affine_power(0.0, 1.0, 2.0, 1.0);
        assert_eq!(theta_inverse(&phi, 0.5), 0.0);
        assert!((theta_inverse(&phi, 4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dwell_family_both_directions() {
        let fam: Vec<FamilyMember> =
            [0.5, 0.75, 1.3].iter().map(|&d| FamilyMember::new(s1(), gen_dwell(d, 10.0, None).unwrap())).collect();
        let sc =
            scenario_batch(&ScenarioBatch { count: 10, ..ScenarioBatch::default() }, 1, 1, 10.0, &family_impulse_times(&fam))
                .unwrap();
        let phi = ComparisonFunction::affine_power(0.0, 1.0, 2.0, 1.0);
        let spec = EstimateSpec::zero_guas(KLFunction::exponential(1.0, 2f64.ln()));
        let rep = check_weak_strong_equiv(&fam, &phi, &spec, &sc, &CheckOptions::default()).unwrap();
        assert!(rep.pass(), "{rep}");
        assert!(rep.weak.pass && rep.surrogate.as_ref().unwrap().pass);
    }

    #[test]
    fn packed_family_is_rejected() {
        let packed = ImpulseSequence::new((1..=40).map(|k| 1.0 + k as f64 * 1e-3).collect(), 10.0).unwrap();
        let fam = vec![FamilyMember::new(s1(), packed)];
        let sc = scenario_batch(&ScenarioBatch { count: 2, ..ScenarioBatch::default() }, 1, 1, 10.0, &[]).unwrap();
        let phi = ComparisonFunction::affine_power(0.0, 1.0, 2.0, 1.0);
        let spec = EstimateSpec::zero_guas(KLFunction::exponential(1.0, 2f64.ln()));
        assert!(matches!(check_weak_strong_equiv(&fam, &phi, &spec, &sc, &CheckOptions::default()), Err(Error::Precondition(_))));
    }
}
