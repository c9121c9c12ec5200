//! Built-in parametric systems.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::assumptions::{AssumptionData, AssumptionEnvelopes, ChannelEnvelope};
use super::{Dynamics, SystemModel};
use crate::compfun::ComparisonFunction;
use crate::error::{Error, Result};

/// Selector plus parameters for a library system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemDescriptor {
    /// `f = a·x + b·u`, `g = c·x + d·u`
    ScalarLinear {
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
        #[serde(default)]
        d: f64,
    },
    /// `f = A x + B u`, `g = C x + D u` with `x ∈ R²`, `u ∈ R`.
    PlanarLinear {
        a: [[f64; 2]; 2],
        #[serde(default)]
        b: [f64; 2],
        c: [[f64; 2]; 2],
        #[serde(default)]
        d: [f64; 2],
    },
    /// `f = Σ_k flow[k]·x^{k+1} + input_gain·u`, `g = Σ_k jump[k]·x^{k+1} + jump_input_gain·u`
    ScalarPolynomial {
        flow: Vec<f64>,
        #[serde(default)]
        input_gain: f64,
        #[serde(default)]
        jump: Vec<f64>,
        #[serde(default)]
        jump_input_gain: f64,
    },
    /// `f = -(a + a_osc·sin(omega·t))·x + b·tanh(u)`, `g = c·x + d·tanh(u)`
    BoundedNonlinear {
        a: f64,
        #[serde(default)]
        a_osc: f64,
        #[serde(default = "unit")]
        omega: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
        #[serde(default)]
        d: f64,
    },
}

fn unit() -> f64 {
    1.0
}

struct ScalarLinear {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Dynamics for ScalarLinear {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn flow(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = self.a * x[0] + self.b * u[0];
    }
    fn jump(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = self.c * x[0] + self.d * u[0];
    }
}

struct PlanarLinear {
    a: [[f64; 2]; 2],
    b: [f64; 2],
    c: [[f64; 2]; 2],
    d: [f64; 2],
}

impl Dynamics for PlanarLinear {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn flow(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for i in 0..2 {
            dx[i] = self.a[i][0] * x[0] + self.a[i][1] * x[1] + self.b[i] * u[0];
        }
    }
    fn jump(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for i in 0..2 {
            dx[i] = self.c[i][0] * x[0] + self.c[i][1] * x[1] + self.d[i] * u[0];
        }
    }
}

struct ScalarPolynomial {
    flow: Vec<f64>,
    input_gain: f64,
    jump: Vec<f64>,
    jump_input_gain: f64,
}

fn poly_no_constant(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c) * x
}

impl Dynamics for ScalarPolynomial {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn flow(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = poly_no_constant(&self.flow, x[0]) + self.input_gain * u[0];
    }
    fn jump(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = poly_no_constant(&self.jump, x[0]) + self.jump_input_gain * u[0];
    }
}

struct BoundedNonlinear {
    a: f64,
    a_osc: f64,
    omega: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Dynamics for BoundedNonlinear {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn flow(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = -(self.a + self.a_osc * (self.omega * t).sin()) * x[0] + self.b * u[0].tanh();
    }
    fn jump(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = self.c * x[0] + self.d * u[0].tanh();
    }
}

/// Spectral norm of a 2×2 matrix.
fn spectral_norm(m: &[[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = *m;
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

/// Envelopes for `f = p·x + q·u`-type maps with state gain `p` and input gain `q`.
fn linear_channel(state_gain: f64, input_gain: f64) -> ChannelEnvelope {
    ChannelEnvelope {
        phi_tilde: ComparisonFunction::identity(),
        n: ComparisonFunction::constant(input_gain),
        o: ComparisonFunction::constant(0.0),
        eta: ComparisonFunction::identity(),
        p: ComparisonFunction::constant(state_gain),
        phi: ComparisonFunction::identity(),
    }
}

/// Assumption data for maps bounded by `|f| <= sf·|x| + qf·|u|`, `|g| <= sg·|x| + qg·|u|`.
fn linear_bound_data(sf: f64, qf: f64, sg: f64, qg: f64) -> AssumptionData {
    AssumptionData {
        n_f: Some(ComparisonFunction::affine_power(0.0, 1.0, sf, qf)),
        nu_f: Some(ComparisonFunction::identity()),
        n_g: Some(ComparisonFunction::affine_power(0.0, 1.0, sg, qg)),
        nu_g: Some(ComparisonFunction::identity()),
        lipschitz: Some(ComparisonFunction::constant(sf)),
        omega: Some(ComparisonFunction::linear(sg)),
        envelopes: Some(AssumptionEnvelopes {
            f: linear_channel(sf, qf),
            g: linear_channel(sg, qg),
            l_f: ComparisonFunction::constant(1.0),
        }),
    }
}

impl SystemDescriptor {
    pub fn build(&self) -> Result<SystemModel> {
        let (name, dynamics, data): (&str, Arc<dyn Dynamics>, AssumptionData) = match self.clone() {
            SystemDescriptor::ScalarLinear { a, b, c, d } => {
                ("scalar-linear", Arc::new(ScalarLinear { a, b, c, d }), linear_bound_data(a.abs(), b.abs(), c.abs(), d.abs()))
            }
            SystemDescriptor::PlanarLinear { a, b, c, d } => {
                let nb = b[0].hypot(b[1]);
                let nd = d[0].hypot(d[1]);
                (
                    "planar-linear",
                    Arc::new(PlanarLinear { a, b, c, d }),
                    linear_bound_data(spectral_norm(&a), nb, spectral_norm(&c), nd),
                )
            }
            SystemDescriptor::ScalarPolynomial { flow, input_gain, jump, jump_input_gain } => {
                if flow.is_empty() {
                    return Err(Error::Config("scalar-polynomial needs at least one flow coefficient".into()));
                }
                let growth = |cs: &[f64], gain: f64| {
                    cs.iter().enumerate().fold(ComparisonFunction::constant(gain), |acc, (k, c)| {
                        ComparisonFunction::sum(acc, ComparisonFunction::power(c.abs(), (k + 1) as f64))
                    })
                };
                let slope = flow.iter().enumerate().fold(ComparisonFunction::constant(0.0), |acc, (k, c)| {
                    ComparisonFunction::sum(acc, ComparisonFunction::power(c.abs() * (k + 1) as f64, k as f64))
                });
                let data = AssumptionData {
                    n_f: Some(growth(&flow, input_gain.abs())),
                    nu_f: Some(ComparisonFunction::identity()),
                    n_g: Some(growth(&jump, jump_input_gain.abs())),
                    nu_g: Some(ComparisonFunction::identity()),
                    lipschitz: Some(slope),
                    ..AssumptionData::default()
                };
                ("scalar-polynomial", Arc::new(ScalarPolynomial { flow, input_gain, jump, jump_input_gain }), data)
            }
            SystemDescriptor::BoundedNonlinear { a, a_osc, omega, b, c, d } => (
                "bounded-nonlinear",
                Arc::new(BoundedNonlinear { a, a_osc, omega, b, c, d }),
                linear_bound_data(a.abs() + a_osc.abs(), b.abs(), c.abs(), d.abs()),
            ),
        };
        Ok(SystemModel::new(name, dynamics).with_assumptions(data).with_descriptor(self.clone()))
    }
}

/// `f = a·x + b·u`, `g = c·x + d·u`.
pub fn scalar_linear(a: f64, b: f64, c: f64, d: f64) -> SystemModel {
    SystemDescriptor::ScalarLinear { a, b, c, d }.build().expect("scalar-linear always builds")
}

/// Decaying flow, halving jumps, no input.
pub fn s1() -> SystemModel {
    scalar_linear(-1.0, 0.0, -0.5, 0.0)
}

/// `x' = -x + u`, `x(τ) = x(τ⁻)/2 + u(τ)/2`.
pub fn s2() -> SystemModel {
    scalar_linear(-1.0, 1.0, -0.5, 0.5)
}

/// `x' = x` with a zero jump map.
pub fn unstable() -> SystemModel {
    scalar_linear(1.0, 0.0, 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_maps() {
        let s = s2();
        assert_eq!(s.flow(0.0, &[2.0], &[1.0]), vec![-1.0]);
        assert_eq!(s.jump(0.0, &[2.0], &[1.0]), vec![-0.5]);
        let p = SystemDescriptor::ScalarPolynomial {
            flow: vec![0.0, 0.0, -1.0],
            input_gain: 1.0,
            jump: vec![],
            jump_input_gain: 0.0,
        }
        .build()
        .unwrap();
        assert_eq!(p.flow(0.0, &[2.0], &[0.5]), vec![-7.5]);
        let pl = SystemDescriptor::PlanarLinear {
            a: [[0.0, 1.0], [-1.0, 0.0]],
            b: [0.0, 1.0],
            c: [[-0.5, 0.0], [0.0, -0.5]],
            d: [0.0; 2],
        }
        .build()
        .unwrap();
        assert_eq!(pl.flow(0.0, &[1.0, 2.0], &[3.0]), vec![2.0, 2.0]);
        assert!((spectral_norm(&[[0.0, 1.0], [-1.0, 0.0]]) - 1.0).abs() < 1e-15);
        assert!((spectral_norm(&[[3.0, 0.0], [4.0, 0.0]]) - 5.0).abs() < 1e-14);
        for s in [s1(), s2(), unstable(), p, pl] {
            assert_eq!(s.equilibrium_defect(&[0.0, 1.0, 7.5]), 0.0);
        }
    }

    #[test]
    fn descriptors_parse() {
        let d: SystemDescriptor = toml::from_str("model = \"scalar-linear\"\na = -1.0\nc = -0.5").unwrap();
        assert_eq!(d, SystemDescriptor::ScalarLinear { a: -1.0, b: 0.0, c: -0.5, d: 0.0 });
        let back: SystemDescriptor = toml::from_str(&toml::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(toml::from_str::<SystemDescriptor>("model = \"quartic\"").is_err());
    }
}
