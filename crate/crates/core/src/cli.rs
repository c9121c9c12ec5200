//! Command-line front end.
//!
//! Exit codes: 0 on success or pass, 2 when an estimate or criterion fails,
//! 1 on usage, configuration or numerical errors. The default worker count
//! comes from `IMPISS_THREADS`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::acceptance::run_suite;
use crate::certify::{
    check_estimate, family_impulse_times, pipeline_iss_to_iiss, probe_eps_delta, scenario_batch, CheckOptions, EstimateKind,
    FamilyMember, PipelineOptions, ProbeSpec, Scenario, ScenarioBatch,
};
use crate::compfun::ComparisonFunction;
use crate::config::{fmt_num, RunConfig};
use crate::error::{Error, Result};
use crate::gains::{synthesize_ubebs_gain, IssCertificateData};
use crate::gronwall::h_bound_on_grid;
use crate::quad::{linspace, sort_dedup};
use crate::signals::{energy_norm, sup_norm};
use crate::simulator::{simulate, Trajectory};

pub const TRAJECTORY_SCHEMA: &str = "# schema impiss-trajectory/1";
pub const BOUND_SCHEMA: &str = "# schema impiss-hbound/1";
pub const GAINS_SCHEMA: &str = "# schema impiss-gains/1";
pub const THREADS_ENV: &str = "IMPISS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "impiss", version, about = "Simulation and stability certification for impulsive systems with inputs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every initial state in [run].x0 and write trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output path; one file per initial state (`name_k.csv` after the first).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sup and energy norms of [input] over a window.
    Norms {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the generalized Gronwall bound of [gronwall] at the [bound] times.
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize UBEBS gains from the ISS estimate and the system envelopes.
    Gains {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check [estimate] on sampled scenarios, or run the four-stage pipeline when [pipeline] is present.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Per-scenario margins CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled eps-delta probes of the iISS gains in [estimate].
    Probe {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance battery and print a pass/fail table.
    Suite {
        /// Comma-separated criterion tags or numbers, e.g. `gronwall` or `1,5`.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Result of a subcommand: text for stdout, files to write, and whether it passed.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub files: Vec<(PathBuf, String)>,
    pub pass: bool,
}

/// Parses `argv` (including the program name), runs it and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match execute(&cli.command) {
        Ok(out) => {
            for (path, text) in &out.files {
                if let Err(e) = std::fs::write(path, text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return 1;
                }
            }
            print!("{}", out.stdout);
            if out.pass {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        // A second initialization (e.g. repeated calls in one process) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn execute(cmd: &Command) -> Result<Output> {
    match cmd {
        Command::Simulate { config, out } => cmd_simulate(&RunConfig::load(config)?, out.as_deref()),
        Command::Norms { config } => cmd_norms(&RunConfig::load(config)?),
        Command::Bound { config, out } => cmd_bound(&RunConfig::load(config)?, out.as_deref()),
        Command::Gains { config, out } => cmd_gains(&RunConfig::load(config)?, out.as_deref()),
        Command::Certify { config, out } => cmd_certify(&RunConfig::load(config)?, out.as_deref()),
        Command::Probe { config } => cmd_probe(&RunConfig::load(config)?),
        Command::Suite { only, seed } => {
            let table = run_suite(only.as_deref(), *seed);
            if table.rows.is_empty() {
                return Err(Error::Config(format!("--only {} matches no criterion", only.as_deref().unwrap_or(""))));
            }
            Ok(Output { stdout: table.to_string(), files: vec![], pass: table.pass() })
        }
    }
}

fn output_path(cli: Option<&Path>, cfg: Option<&String>) -> Option<PathBuf> {
    cli.map(Path::to_path_buf).or_else(|| cfg.map(PathBuf::from))
}

/// `t,x1..xn,jump_flag,left_x1..left_xn`; left-limit columns are filled on jump rows only.
pub fn trajectory_csv(traj: &Trajectory, times: &[f64]) -> Result<String> {
    let n = traj.dim();
    let mut s = String::from(TRAJECTORY_SCHEMA);
    s.push('\n');
    let xs: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let lefts: Vec<String> = (1..=n).map(|i| format!("left_x{i}")).collect();
    writeln!(s, "t,{},jump_flag,{}", xs.join(","), lefts.join(",")).expect("writing to a String");
    for &t in times {
        let x = traj.eval(t)?;
        let jump = traj.jumps().iter().find(|j| j.t == t);
        let cells: Vec<String> = x.iter().map(|v| fmt_num(*v)).collect();
        let left: Vec<String> = match jump {
            Some(j) => j.left.iter().map(|v| fmt_num(*v)).collect(),
            None => vec![String::new(); n],
        };
        writeln!(s, "{},{},{},{}", fmt_num(t), cells.join(","), u8::from(jump.is_some()), left.join(","))
            .expect("writing to a String");
    }
    Ok(s)
}

fn numbered(path: &Path, k: usize) -> PathBuf {
    if k == 0 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{k}"),
    };
    path.with_file_name(name)
}

fn cmd_simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<Output> {
    let member = cfg.family_members()?.remove(0);
    let sys = &member.system;
    let u = cfg.input_or_zero(sys.input_dim())?;
    let horizon = cfg.run.horizon;
    let path = output_path(out, cfg.output.trajectory.as_ref());
    let mut result = Output { pass: true, ..Output::default() };
    for (k, x0) in cfg.initial_states(sys.state_dim()).iter().enumerate() {
        if x0.len() != sys.state_dim() {
            return Err(Error::Config(format!(
                "run.x0[{k}] has {} entries, the system has {} states",
                x0.len(),
                sys.state_dim()
            )));
        }
        let traj = simulate(sys, &member.gamma, cfg.run.t0, x0, &u, horizon, &cfg.integrator)?;
        let end = traj.escape().unwrap_or(horizon);
        let mut times: Vec<f64> = linspace(cfg.run.t0, end, cfg.output.points.unwrap_or(201).max(2))
            .into_iter()
            .filter(|&t| traj.escape().is_none_or(|tx| t < tx))
            .collect();
        times.extend(member.gamma.in_window(cfg.run.t0, end).iter().copied().filter(|&t| traj.escape().is_none_or(|tx| t < tx)));
        sort_dedup(&mut times);
        let csv = trajectory_csv(&traj, &times)?;
        if let Some(tx) = traj.escape() {
            writeln!(result.stdout, "initial state {k}: finite escape at t = {}", fmt_num(tx)).expect("writing to a String");
        }
        match &path {
            Some(p) => result.files.push((numbered(p, k), csv)),
            None => result.stdout.push_str(&csv),
        }
    }
    Ok(result)
}

fn cmd_norms(cfg: &RunConfig) -> Result<Output> {
    let member = cfg.family_members()?.remove(0);
    let norms = cfg.norms.as_ref().ok_or_else(|| Error::Config("norms needs a [norms] section with rho1 and rho2".into()))?;
    let u = cfg.input_or_zero(member.system.input_dim())?;
    let [a, b] = norms.window.unwrap_or([cfg.run.t0, cfg.run.horizon]);
    let rho1 = ComparisonFunction::from_descriptor(&norms.rho1)?;
    let rho2 = ComparisonFunction::from_descriptor(&norms.rho2)?;
    let sup = sup_norm(&u, a, b, &member.gamma);
    let energy = energy_norm(&u, a, b, &member.gamma, &rho1, &rho2)?;
    let stdout = format!(
        "window = ({}, {}]\nsup_norm = {}\nenergy_norm = {}\nimpulses_in_window = {}\n",
        fmt_num(a),
        fmt_num(b),
        fmt_num(sup),
        fmt_num(energy),
        member.gamma.count(a, b)
    );
    Ok(Output { stdout, files: vec![], pass: true })
}

fn cmd_bound(cfg: &RunConfig, out: Option<&Path>) -> Result<Output> {
    let prob = cfg.gronwall.as_ref().ok_or_else(|| Error::Config("bound needs a [gronwall] section".into()))?.build()?;
    let times =
        if cfg.bound.times.is_empty() { linspace(prob.t0, prob.t_end, cfg.bound.points.max(2)) } else { cfg.bound.times.clone() };
    let hs = h_bound_on_grid(&prob, &times)?;
    let mut csv = format!("{BOUND_SCHEMA}\nt,k,h_k\n");
    for (t, h) in times.iter().zip(&hs) {
        writeln!(csv, "{},{},{}", fmt_num(*t), prob.jump_index(*t), fmt_num(*h)).expect("writing to a String");
    }
    Ok(emit(csv, output_path(out, cfg.output.report.as_ref())))
}

fn emit(text: String, path: Option<PathBuf>) -> Output {
    match path {
        Some(p) => Output { stdout: String::new(), files: vec![(p, text)], pass: true },
        None => Output { stdout: text, files: vec![], pass: true },
    }
}

fn iss_certificate(cfg: &RunConfig) -> Result<IssCertificateData> {
    let spec = cfg.estimate.as_ref().ok_or_else(|| Error::Config("missing [estimate] section".into()))?.build()?;
    match (spec.kind, spec.beta, spec.rho) {
        (EstimateKind::Iss, Some(beta), Some(rho)) => IssCertificateData::new(beta, rho),
        _ => Err(Error::Config("[estimate] must be an ISS estimate with beta and rho".into())),
    }
}

fn envelopes(members: &[FamilyMember]) -> Result<crate::gains::AssumptionEnvelopes> {
    members[0]
        .system
        .assumptions
        .envelopes
        .clone()
        .ok_or_else(|| Error::Config(format!("system '{}' declares no assumption envelopes", members[0].system.name())))
}

fn cmd_gains(cfg: &RunConfig, out: Option<&Path>) -> Result<Output> {
    let members = cfg.family_members()?;
    let cert = iss_certificate(cfg)?;
    let res = synthesize_ubebs_gain(&envelopes(&members)?, &cert, cfg.gains)?;
    let mut csv = format!("{GAINS_SCHEMA}\nr,ell,kappa,alpha,chi1,chi2\n");
    for (r, l) in &res.ell_table {
        let vals = [*r, *l, res.kappa.value(*r), res.alpha.value(*r), res.chi1.value(*r), res.chi2.value(*r)];
        writeln!(csv, "{}", vals.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(",")).expect("writing to a String");
    }
    let (_, c) = res.ubebs_form();
    let mut summary = format!(
        "r_max = {}\nPsi(0) = {}\nubebs_offset_c = {}\n",
        fmt_num(res.r_max),
        fmt_num(res.psi_big.value(0.0)),
        fmt_num(c)
    );
    for n in &res.notes {
        writeln!(summary, "note: {n}").expect("writing to a String");
    }
    Ok(match output_path(out, cfg.output.report.as_ref()) {
        Some(p) => Output { stdout: summary, files: vec![(p, csv)], pass: true },
        None => Output { stdout: summary + &csv, files: vec![], pass: true },
    })
}

fn check_options(cfg: &RunConfig) -> CheckOptions {
    CheckOptions {
        horizon: cfg.run.horizon,
        grid: cfg.check.grid,
        integrator: cfg.integrator,
        slack: cfg.check.slack,
        ..CheckOptions::default()
    }
}

/// The seeded batch from [scenarios], plus one scenario per explicit initial state with [input].
fn scenarios(cfg: &RunConfig, members: &[FamilyMember]) -> Result<Vec<Scenario>> {
    let sys = &members[0].system;
    let batch = cfg.scenarios.clone().unwrap_or(ScenarioBatch { seed: cfg.run.seed, ..ScenarioBatch::default() });
    let mut out = scenario_batch(&batch, sys.state_dim(), sys.input_dim(), cfg.run.horizon, &family_impulse_times(members))?;
    if !cfg.run.x0.is_empty() {
        let u = cfg.input_or_zero(sys.input_dim())?;
        for (k, x0) in cfg.run.x0.iter().enumerate() {
            out.push(Scenario { id: format!("config-{k}"), t0: cfg.run.t0, x0: x0.clone(), input: u.clone() });
        }
    }
    Ok(out)
}

fn cmd_certify(cfg: &RunConfig, out: Option<&Path>) -> Result<Output> {
    let members = cfg.family_members()?;
    let margins_path = output_path(out, cfg.output.margins.as_ref());
    if let Some(p) = &cfg.pipeline {
        let cert = iss_certificate(cfg)?;
        let opts = PipelineOptions {
            scenarios: cfg.scenarios.clone().unwrap_or(PipelineOptions::default().scenarios),
            check: check_options(cfg),
            gain_grid: cfg.gains,
            alpha_radii: p.alpha_radii,
            alpha_scenarios: p.alpha_scenarios,
            alpha_headroom: p.alpha_headroom,
        };
        let rep = pipeline_iss_to_iiss(&members, &cert, &envelopes(&members)?, &opts)?;
        let mut files = vec![];
        if let (Some(path), Some(last)) = (margins_path, rep.stages.last()) {
            files.push((path, last.report.margins_csv()));
        }
        return Ok(Output { stdout: rep.to_string(), files, pass: rep.pass() });
    }
    let spec = cfg.estimate.as_ref().ok_or_else(|| Error::Config("certify needs an [estimate] section".into()))?.build()?;
    let sc = scenarios(cfg, &members)?;
    let rep = check_estimate(&members, &spec, &sc, &check_options(cfg))?;
    let files = margins_path.map(|p| vec![(p, rep.margins_csv())]).unwrap_or_default();
    Ok(Output { stdout: rep.to_string(), files, pass: rep.pass })
}

fn cmd_probe(cfg: &RunConfig) -> Result<Output> {
    let members = cfg.family_members()?;
    let spec = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| Error::Config("probe needs an [estimate] section with alpha, rho1, rho2".into()))?
        .build()?;
    let (Some(alpha), Some(rho1), Some(rho2)) = (&spec.alpha, &spec.rho1, &spec.rho2) else {
        return Err(Error::Config("probe needs alpha, rho1 and rho2 in [estimate]".into()));
    };
    let probe = ProbeSpec { integrator: cfg.integrator, ..cfg.probe.clone().unwrap_or_default() };
    let rep = probe_eps_delta(&members, rho1, rho2, alpha, &probe)?;
    Ok(Output { stdout: rep.to_string(), files: vec![], pass: rep.all_pass() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["impiss", "frobnicate"]), 1);
        assert_eq!(run(["impiss", "simulate"]), 1);
        assert_eq!(run(["impiss", "simulate", "--config", "/nonexistent/s1.toml"]), 1);
        assert_eq!(run(["impiss", "suite", "--only", "nothing"]), 1);
    }

    #[test]
    fn numbered_paths() {
        assert_eq!(numbered(Path::new("/tmp/traj.csv"), 0), PathBuf::from("/tmp/traj.csv"));
        assert_eq!(numbered(Path::new("/tmp/traj.csv"), 2), PathBuf::from("/tmp/traj_2.csv"));
        assert_eq!(numbered(Path::new("out"), 1), PathBuf::from("out_1"));
    }
}
