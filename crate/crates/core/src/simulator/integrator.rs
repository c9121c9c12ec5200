//! Explicit Runge-Kutta steppers with dense output.
//!
//! The adaptive method is Dormand-Prince 5(4) with its native fifth-order
//! continuous extension; the fixed-step method is classical RK4 with a
//! cubic Hermite interpolant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; for RK4 this is the step.
    pub max_step: f64,
    pub max_steps: usize,
    pub blowup_threshold: f64,
    /// Resolution of the finite-escape time.
    pub escape_tol: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rtol: 1e-9,
            atol: 1e-11,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
            blowup_threshold: 1e12,
            escape_tol: 1e-6,
        }
    }
}

impl IntegratorOptions {
    pub fn rk4(step: f64) -> Self {
        Self { method: Method::Rk4, max_step: step, ..Self::default() }
    }

    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        if self.method == Method::Rk4 && !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::Config("fixed-step RK4 needs a finite positive max_step".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Interpolant for one accepted step on `[t0, t1]`.
#[derive(Debug, Clone)]
pub enum Dense {
    /// `y(θ) = c0 + θ(c1 + (1-θ)(c2 + θ(c3 + (1-θ)c4)))`
    DormandPrince([Vec<f64>; 5]),
    /// Cubic Hermite from the end values and slopes.
    Hermite { y0: Vec<f64>, y1: Vec<f64>, f0: Vec<f64>, f1: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub dense: Dense,
}

impl Step {
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let th = if h > 0.0 { ((t - self.t0) / h).clamp(0.0, 1.0) } else { 1.0 };
        let th1 = 1.0 - th;
        match &self.dense {
            Dense::DormandPrince(c) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])));
                }
            }
            Dense::Hermite { y0, y1, f0, f1 } => {
                let h00 = (1.0 + 2.0 * th) * th1 * th1;
                let h10 = th * th1 * th1;
                let h01 = th * th * (3.0 - 2.0 * th);
                let h11 = -th * th * th1;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = match &self.dense {
            Dense::DormandPrince(c) => c[0].len(),
            Dense::Hermite { y0, .. } => y0.len(),
        };
        let mut out = vec![0.0; n];
        self.eval_into(t, &mut out);
        out
    }

    pub fn end_value(&self) -> Vec<f64> {
        self.eval(self.t1)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side `dx = f(t, x)` on the current smooth piece.
pub trait Rhs {
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> Rhs for F {
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        self(t, x, dx)
    }
}

/// Outcome of integrating one smooth piece.
pub enum PieceEnd {
    Reached,
    /// `|x|` crossed the blow-up threshold at about this time.
    Escape(f64),
}

/// Integrates `x' = f(t, x)` from `(a, x)` to exactly `b`, appending accepted steps.
///
/// `h` carries the step-size suggestion between pieces.
pub fn integrate_piece<R: Rhs>(
    f: &R,
    a: f64,
    b: f64,
    x: &mut Vec<f64>,
    h: &mut f64,
    opts: &IntegratorOptions,
    steps: &mut Vec<Step>,
    step_budget: &mut usize,
) -> Result<PieceEnd> {
    match opts.method {
        Method::Rk45 => dopri_piece(f, a, b, x, h, opts, steps, step_budget),
        Method::Rk4 => rk4_piece(f, a, b, x, opts, steps, step_budget),
    }
}

fn weighted_rms(e: &[f64], y0: &[f64], y1: &[f64], opts: &IntegratorOptions) -> f64 {
    let n = e.len() as f64;
    let s: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<R: Rhs>(f: &R, t: f64, x: &[f64], f0: &[f64], span: f64, opts: &IntegratorOptions) -> f64 {
    let n = x.len();
    let sc: Vec<f64> = x.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (x.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let x1: Vec<f64> = x.iter().zip(f0).map(|(v, d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f.eval(t + h0, &x1, &mut f1);
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span).min(opts.max_step)
}

#[allow(clippy::too_many_arguments)]
fn dopri_piece<R: Rhs>(
    f: &R,
    a: f64,
    b: f64,
    x: &mut Vec<f64>,
    h: &mut f64,
    opts: &IntegratorOptions,
    steps: &mut Vec<Step>,
    step_budget: &mut usize,
) -> Result<PieceEnd> {
    let n = x.len();
    let mut t = a;
    let mut k1 = vec![0.0; n];
    f.eval(t, x, &mut k1);
    if !(*h > 0.0) || !h.is_finite() {
        *h = initial_step(f, t, x, &k1, b - a, opts);
    }
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    while t < b {
        if *step_budget == 0 {
            return Err(Error::Numerical { t, detail: format!("step budget exhausted (|x| = {:e})", norm(x)) });
        }
        let mut hs = h.min(opts.max_step).min(b - t);
        let last = t + hs >= b - 1e-14 * b.abs().max(1.0);
        if last {
            hs = b - t;
        }
        for i in 0..n {
            ytmp[i] = x[i] + hs * A21 * k1[i];
        }
        f.eval(t + C2 * hs, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = x[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        f.eval(t + C3 * hs, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = x[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f.eval(t + C4 * hs, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = x[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f.eval(t + C5 * hs, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = x[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let tn = if last { b } else { t + hs };
        f.eval(tn, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = x[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f.eval(tn, &ynew, &mut k7);
        for i in 0..n {
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = weighted_rms(&err, x, &ynew, opts);
        let finite = ynew.iter().chain(k7.iter()).all(|v| v.is_finite());
        if e <= 1.0 && finite {
            *step_budget -= 1;
            let r2: Vec<f64> = (0..n).map(|i| ynew[i] - x[i]).collect();
            let r3: Vec<f64> = (0..n).map(|i| hs * k1[i] - r2[i]).collect();
            let r4: Vec<f64> = (0..n).map(|i| r2[i] - hs * k7[i] - r3[i]).collect();
            let r5: Vec<f64> =
                (0..n).map(|i| hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])).collect();
            let step = Step { t0: t, t1: tn, dense: Dense::DormandPrince([x.clone(), r2, r3, r4, r5]) };
            let crossed = norm(&ynew) > opts.blowup_threshold;
            steps.push(step);
            if crossed {
                return Ok(PieceEnd::Escape(escape_time(steps.last().unwrap(), opts)));
            }
            x.copy_from_slice(&ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = tn;
            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                *h = hs * fac;
            } else {
                *h = (*h).max(hs * fac);
            }
        } else {
            let fac = if finite { (0.9 * e.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            *h = hs * fac;
            if *h < 1e-14 * t.abs().max(1.0) {
                if !finite || norm(x) > opts.blowup_threshold * 1e-3 {
                    return Ok(PieceEnd::Escape(t));
                }
                return Err(Error::Numerical { t, detail: format!("step size underflow (h = {:e}, |x| = {:e})", *h, norm(x)) });
            }
        }
    }
    Ok(PieceEnd::Reached)
}

fn rk4_piece<R: Rhs>(
    f: &R,
    a: f64,
    b: f64,
    x: &mut Vec<f64>,
    opts: &IntegratorOptions,
    steps: &mut Vec<Step>,
    step_budget: &mut usize,
) -> Result<PieceEnd> {
    let n = x.len();
    let count = ((b - a) / opts.max_step).ceil().max(1.0) as usize;
    let hs = (b - a) / count as f64;
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    f.eval(a, x, &mut k1);
    for s in 0..count {
        if *step_budget == 0 {
            return Err(Error::Numerical { t: a + s as f64 * hs, detail: "step budget exhausted".into() });
        }
        *step_budget -= 1;
        let t = a + s as f64 * hs;
        let tn = if s + 1 == count { b } else { t + hs };
        for i in 0..n {
            ytmp[i] = x[i] + 0.5 * hs * k1[i];
        }
        f.eval(t + 0.5 * hs, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = x[i] + 0.5 * hs * k2[i];
        }
        f.eval(t + 0.5 * hs, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = x[i] + hs * k3[i];
        }
        f.eval(tn, &ytmp, &mut k4);
        let y1: Vec<f64> = (0..n).map(|i| x[i] + hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        let mut f1 = vec![0.0; n];
        f.eval(tn, &y1, &mut f1);
        if !y1.iter().all(|v| v.is_finite()) {
            return Ok(PieceEnd::Escape(t));
        }
        steps.push(Step {
            t0: t,
            t1: tn,
            dense: Dense::Hermite { y0: x.clone(), y1: y1.clone(), f0: k1.clone(), f1: f1.clone() },
        });
        if norm(&y1) > opts.blowup_threshold {
            return Ok(PieceEnd::Escape(escape_time(steps.last().unwrap(), opts)));
        }
        x.copy_from_slice(&y1);
        k1 = f1;
    }
    Ok(PieceEnd::Reached)
}

/// First time inside `step` where the interpolant's norm reaches the threshold.
fn escape_time(step: &Step, opts: &IntegratorOptions) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1);
    while hi - lo > opts.escape_tol {
        let mid = 0.5 * (lo + hi);
        if norm(&step.eval(mid)) > opts.blowup_threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(f: impl Fn(f64, &[f64], &mut [f64]), x0: &[f64], b: f64, opts: &IntegratorOptions) -> (Vec<Step>, Vec<f64>) {
        let mut x = x0.to_vec();
        let mut steps = vec![];
        let mut h = f64::NAN;
        let mut budget = opts.max_steps;
        match integrate_piece(&f, 0.0, b, &mut x, &mut h, opts, &mut steps, &mut budget).unwrap() {
            PieceEnd::Reached => {}
            PieceEnd::Escape(t) => panic!("escape at {t}"),
        }
        (steps, x)
    }

    #[test]
    fn dopri_matches_exponential() {
        let opts = IntegratorOptions::default();
        let (steps, x) = run(|_, x, dx| dx[0] = -x[0], &[1.0], 3.0, &opts);
        assert!((x[0] - (-3f64).exp()).abs() < 1e-10);
        assert_eq!(steps.last().unwrap().t1, 3.0);
    }

    #[test]
    fn dense_output_is_fifth_order_accurate() {
        // oscillator: compare interpolated values mid-step against the exact solution
        let opts = IntegratorOptions::with_tolerances(1e-10, 1e-12);
        let (steps, _) = run(
            |_, x, dx| {
                dx[0] = x[1];
                dx[1] = -x[0];
            },
            &[1.0, 0.0],
            10.0,
            &opts,
        );
        let mut worst: f64 = 0.0;
        for s in &steps {
            for k in 1..8 {
                let t = s.t0 + (s.t1 - s.t0) * k as f64 / 8.0;
                let y = s.eval(t);
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
        }
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn rk4_fixed_step() {
        let opts = IntegratorOptions::rk4(0.01);
        let (steps, x) = run(|_, x, dx| dx[0] = -x[0], &[1.0], 1.0, &opts);
        assert_eq!(steps.len(), 100);
        assert!((x[0] - (-1f64).exp()).abs() < 1e-9);
        let mid = steps[50].eval(0.505);
        assert!((mid[0] - (-0.505f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn detects_finite_escape() {
        // x' = x², x(0) = 1 escapes at t = 1
        let opts = IntegratorOptions::default();
        let mut x = vec![1.0];
        let mut steps = vec![];
        let mut h = f64::NAN;
        let mut budget = opts.max_steps;
        let f = |_: f64, x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0];
        match integrate_piece(&f, 0.0, 2.0, &mut x, &mut h, &opts, &mut steps, &mut budget).unwrap() {
            PieceEnd::Escape(t) => assert!((t - 1.0).abs() < 1e-6, "escape at {t}"),
            PieceEnd::Reached => panic!("missed the escape"),
        }
    }
}
