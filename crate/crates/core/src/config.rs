//! Run configuration files.
//!
//! One TOML document drives every subcommand. Sections:
//!
//! ```toml
//! [run]          # horizon, t0, x0 (list of initial states), seed
//! [system]       # library system: model = "scalar-linear", a = -1.0, ...
//! [gamma]        # kind = "times", times = [...] | kind = "dwell", delta = 0.5, seed = 7
//! [[family]]     # optional extra members: { system = {...}, gamma = {...} }
//! [input]        # constant = [...] | [[input.segments]] ... ; point_values
//! [estimate]     # kind = "iss", mode = "strong", beta = {...}, rho = {...}
//! [integrator]   # method, rtol, atol, max_step, ...
//! [output]       # trajectory / report / margins paths
//! [norms]        # rho1, rho2 for the `norms` subcommand
//! [gronwall]     # problem for `bound`, plus [bound] times/points
//! [scenarios]    # seeded scenario batch for `certify`
//! [check]        # grid, slack
//! [gains]        # r_max, points
//! [probe]        # eps, radii, windows, budget, ...
//! [pipeline]     # presence selects the four-stage pipeline in `certify`
//! ```
//!
//! Functions use the descriptor grammar `{form = "...", params = [...], args = [...]}`;
//! see [`crate::compfun::SUPPORTED_FORMS`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::{EstimateDescriptor, FamilyMember, ProbeSpec, ScenarioBatch};
use crate::compfun::FunctionDescriptor;
use crate::error::{Error, Result};
use crate::gains::GainGrid;
use crate::gronwall::GronwallDescriptor;
use crate::hybrid_time::{gen_dwell, ImpulseSequence, Jitter};
use crate::signals::{InputSignal, SignalDescriptor};
use crate::simulator::{IntegratorOptions, SystemDescriptor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub t0: f64,
    /// Initial states; one trajectory per entry.
    pub x0: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { horizon: 10.0, t0: 0.0, x0: vec![], seed: 1 }
    }
}

/// Impulse times as a literal list or a dwell-time generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GammaSpec {
    Times {
        times: Vec<f64>,
    },
    Dwell {
        delta: f64,
        /// Enables jittered gaps when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spread: Option<f64>,
    },
}

impl GammaSpec {
    pub fn build(&self, horizon: f64) -> Result<ImpulseSequence> {
        match self {
            GammaSpec::Times { times } => ImpulseSequence::new(times.clone(), horizon),
            GammaSpec::Dwell { delta, seed, spread } => {
                let jitter = seed.map(|s| Jitter { seed: s, spread: spread.unwrap_or(Jitter::seeded(s).spread) });
                gen_dwell(*delta, horizon, jitter)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub system: SystemDescriptor,
    pub gamma: GammaSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margins: Option<String>,
    /// Uniform grid size for trajectory output; impulse times are added.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsSection {
    pub rho1: FunctionDescriptor,
    pub rho2: FunctionDescriptor,
    /// Window `(a, b]`; defaults to `(t0, horizon]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    /// Explicit query times; when empty, `points` uniform times on `[t0, t_end]`.
    pub times: Vec<f64>,
    pub points: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        Self { times: vec![], points: 101 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub grid: usize,
    pub slack: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { grid: 201, slack: crate::certify::DEFAULT_SLACK }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub alpha_radii: usize,
    pub alpha_scenarios: usize,
    pub alpha_headroom: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = crate::certify::PipelineOptions::default();
        Self { alpha_radii: d.alpha_radii, alpha_scenarios: d.alpha_scenarios, alpha_headroom: d.alpha_headroom }
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemDescriptor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub family: Vec<MemberSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<SignalDescriptor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateDescriptor>,
    pub integrator: IntegratorOptions,
    pub output: OutputSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gronwall: Option<GronwallDescriptor>,
    pub bound: BoundSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<ScenarioBatch>,
    pub check: CheckSection,
    pub gains: GainGrid,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineSection>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds every referenced function once so bad descriptors surface at load.
    pub fn validate(&self) -> Result<()> {
        if !(self.run.horizon > self.run.t0) {
            return Err(Error::Config(format!("run.horizon ({}) must exceed run.t0 ({})", self.run.horizon, self.run.t0)));
        }
        self.integrator.validate()?;
        if !self.family.is_empty() || self.system.is_some() {
            self.family_members()?;
        }
        if let Some(e) = &self.estimate {
            e.build().map_err(|err| field_error("estimate", err))?;
        }
        if let Some(n) = &self.norms {
            for (name, f) in [("norms.rho1", &n.rho1), ("norms.rho2", &n.rho2)] {
                crate::compfun::ComparisonFunction::from_descriptor(f).map_err(|err| field_error(name, err))?;
            }
        }
        if let Some(g) = &self.gronwall {
            g.build().map_err(|err| field_error("gronwall", err))?;
        }
        if self.input.is_some() {
            self.input_signal()?;
        }
        Ok(())
    }

    /// `[system]` with `[gamma]` (no impulses when absent), followed by `[[family]]`.
    pub fn family_members(&self) -> Result<Vec<FamilyMember>> {
        let h = self.run.horizon;
        let mut out = vec![];
        if let Some(s) = &self.system {
            let gamma = match &self.gamma {
                Some(g) => g.build(h).map_err(|e| field_error("gamma", e))?,
                None => ImpulseSequence::empty(h),
            };
            out.push(FamilyMember::new(s.build().map_err(|e| field_error("system", e))?, gamma));
        }
        for (i, m) in self.family.iter().enumerate() {
            let system = m.system.build().map_err(|e| field_error(&format!("family[{i}].system"), e))?;
            let gamma = m.gamma.build(h).map_err(|e| field_error(&format!("family[{i}].gamma"), e))?;
            out.push(FamilyMember::new(system, gamma));
        }
        if out.is_empty() {
            return Err(Error::Config("missing [system] section".into()));
        }
        Ok(out)
    }

    /// `[input]`, or the zero input of dimension `m` when absent.
    pub fn input_or_zero(&self, m: usize) -> Result<InputSignal> {
        match &self.input {
            Some(_) => self.input_signal(),
            None => Ok(InputSignal::zero(m, self.run.horizon)),
        }
    }

    fn input_signal(&self) -> Result<InputSignal> {
        let d = self.input.as_ref().ok_or_else(|| Error::Config("missing [input] section".into()))?;
        d.build(self.run.horizon).map_err(|e| field_error("input", e))
    }

    pub fn initial_states(&self, n: usize) -> Vec<Vec<f64>> {
        if self.run.x0.is_empty() {
            let mut x = vec![0.0; n];
            x[0] = 1.0;
            vec![x]
        } else {
            self.run.x0.clone()
        }
    }
}

fn field_error(field: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("[{field}] {m}")),
        Error::Validation(m) => Error::Config(format!("[{field}] {m}")),
        Error::Domain(m) => Error::Config(format!("[{field}] {m}")),
        other => other,
    }
}

/// Full-precision decimal rendering with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[run]
horizon = 10.0
x0 = [[1.0], [-2.5]]

[system]
model = "scalar-linear"
a = -1.0
b = 1.0
c = -0.5
d = 0.5

[gamma]
kind = "dwell"
delta = 1.0

[input]
constant = [0.5]

[estimate]
kind = "iss"
beta = { amplitude = { form = "identity" }, decay = { form = "exp-decay", params = [1.0, 0.6931471805599453] } }
rho = { form = "affine-power", params = [2.0] }

[integrator]
rtol = 1e-10
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.family_members().unwrap()[0].gamma.len(), 10);
        assert_eq!(cfg.initial_states(1).len(), 2);
        let once = cfg.to_toml().unwrap();
        let again = RunConfig::from_toml(&once).unwrap().to_toml().unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn diagnostics_name_the_problem() {
        let e = RunConfig::from_toml("[system]\nmodel = \"scalar-linear\"\na = -1.0\nbogus = 3\n").unwrap_err();
        assert!(e.to_string().contains("bogus") && e.to_string().contains("line"), "{e}");
        let bad_form = SAMPLE.replace("exp-decay", "exp-decline");
        let e = RunConfig::from_toml(&bad_form).unwrap_err().to_string();
        assert!(e.contains("estimate") && e.contains("rational-decay"), "{e}");
    }

    #[test]
    fn number_format_has_17_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
