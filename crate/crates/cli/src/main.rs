//! `higgs-deform <command> --config <path> [--out <dir>] [--seed <u64>]`
//!
//! Writes `report.json` to the output directory, plus `obstruction.csv`
//! (kuranishi) and `spectrum.csv` (hodge). Exit codes: 0 all checks pass,
//! 2 parse error, 3 validation failure, 4 numerical failure, 1 I/O failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use higgs_deform::config::{RunConfig, Tolerances};
use higgs_deform::deformation::{dbar_square_residual, probe_sections, DeformedOperator};
use higgs_deform::dgla::{Convention, Dgla, GradedElement};
use higgs_deform::error::Error;
use higgs_deform::gauge::{full_gauge, gauge_fix, match_to_kuranishi, vertical_gauge};
use higgs_deform::higgs::{validate_higgs, ValidationReport};
use higgs_deform::hodge::{DegreeSummary, HodgeSystem};
use higgs_deform::kuranishi::{evaluate_epsilon, kuranishi_space_equations, mc_check, KuranishiSeries, PolyEquation};
use higgs_deform::random;
use higgs_deform::resolver;
use higgs_deform::suite::{self, Check};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "higgs-deform", version, about = "Deformations of holomorphic-Higgs pairs on flat tori")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    Validate,
    Identities,
    Hodge,
    Kuranishi,
    McCheck,
    GaugeFix,
    Match,
}

#[derive(Serialize)]
struct Report {
    tool: &'static str,
    version: &'static str,
    command: Command,
    seed: u64,
    config: RunConfig,
    convention: Convention,
    tolerances: Tolerances,
    validation: ValidationReport,
    checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hodge: Option<HodgeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    obstruction: Option<Vec<PolyEquation>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    pass: bool,
    /// Wall-clock seconds per phase; the only nondeterministic field.
    timings: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct HodgeReport {
    /// Dimension of `L^i`.
    dims: Vec<usize>,
    /// Dimension of the harmonic space in degree `i`.
    harmonic_dims: Vec<usize>,
    blocks: usize,
    summaries: Vec<DegreeSummary>,
}

/// How a run ended, mapped to the exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Pass,
    Parse,
    Validation,
    Numerical,
    Io,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Parse => 2,
            Outcome::Validation => 3,
            Outcome::Numerical => 4,
            Outcome::Io => 1,
        }
    }
}

fn classify(e: &Error) -> Outcome {
    match e {
        Error::Parse(_) => Outcome::Parse,
        Error::InvalidGeometry(_) | Error::InvalidConfig(_) | Error::SingularMetric(_) => Outcome::Validation,
        _ => Outcome::Numerical,
    }
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.0.entry(name.to_string()).or_default() += t.elapsed().as_secs_f64();
        out
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => ExitCode::from(o.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Outcome::Io.code())
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return Ok(Outcome::Parse);
        }
    };
    let mut cfg = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(Outcome::Parse);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;

    let mut timer = Timer(BTreeMap::new());
    let convention = timer.time("resolver", resolver::convention);
    let higgs = match cfg.higgs() {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(classify(&e));
        }
    };
    let validation = timer.time("validate", || validate_higgs(&higgs, cfg.tolerances.validation));
    let mut report = Report {
        tool: "higgs-deform",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command,
        seed: cfg.seed,
        config: cfg.clone(),
        convention,
        tolerances: cfg.tolerances,
        validation: validation.clone(),
        checks: validation_checks(&validation, cfg.tolerances.validation),
        hodge: None,
        obstruction: None,
        details: None,
        error: None,
        pass: false,
        timings: BTreeMap::new(),
    };
    let outcome = if !validation.pass {
        report.error = Some("validation failed".into());
        Outcome::Validation
    } else {
        match Dgla::resolved(higgs).map_err(anyhow::Error::from).and_then(|dg| dispatch(cli.command, &cfg, dg, &cli.out, &mut report, &mut timer)) {
            Ok(()) if suite::all_pass(&report.checks) => Outcome::Pass,
            Ok(()) => Outcome::Numerical,
            Err(e) => {
                report.error = Some(format!("{e:#}"));
                match e.downcast_ref::<Error>() {
                    Some(core) => classify(core),
                    None => Outcome::Io,
                }
            }
        }
    };
    report.pass = outcome == Outcome::Pass;
    report.timings = timer.0;
    let path = cli.out.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: {:.3e} (tolerance {:.3e})", c.name, c.worst, c.tolerance);
    }
    Ok(outcome)
}

fn validation_checks(v: &ValidationReport, tol: f64) -> Vec<Check> {
    let mut out = Vec::new();
    for (name, value) in [("dbar theta", v.dbar_theta), ("theta ^ theta", v.theta_wedge_theta), ("K hermitian", v.k_hermitian_defect), ("Bianchi", v.bianchi)] {
        let mut c = Check::new(name, tol.max(if name == "Bianchi" { 1e-8 } else { 0.0 }));
        c.record(value);
        out.push(c);
    }
    let mut pd = Check::new("K positive definite", 0.0);
    pd.record(if v.k_positive { 0.0 } else { 1.0 });
    out.push(pd);
    out
}

fn dispatch(cmd: Command, cfg: &RunConfig, dg: Dgla, out: &Path, report: &mut Report, timer: &mut Timer) -> anyhow::Result<()> {
    let ids = cfg.identities;
    let tol = &cfg.tolerances;
    let mut rng = random::rng(cfg.seed);
    if cmd == Command::Validate {
        return Ok(());
    }
    if cmd == Command::Identities {
        let axioms = timer.time("axioms", || suite::dgla_axioms(&dg, ids.samples, ids.band, ids.max_degree, tol.identity, &mut rng));
        let cartan = timer.time("cartan", || suite::cartan_suite(&dg, ids.samples, ids.band, tol.identity, &mut rng));
        let mc = mc_examples(&dg, ids.band, &mut rng)?;
        let mut mc_check = Check::new("mc_residual of the flat examples", tol.identity);
        for x in &mc {
            mc_check.record(dg.mc_residual(x).norm());
        }
        let flat = timer.time("flatness", || suite::flatness_suite(&dg, ids.flatness_samples, ids.band, tol.identity, &mc, 10.0 * tol.identity, &mut rng));
        report.checks.extend(axioms.into_iter().chain(cartan).chain([mc_check]).chain(flat));
        return Ok(());
    }

    let sys = timer.time("hodge_assembly", || HodgeSystem::assemble(dg, cfg.hodge_options()))?;
    report.hodge = Some(HodgeReport {
        dims: (0..sys.summaries.len()).map(|d| sys.dim(d)).collect(),
        harmonic_dims: sys.harmonic_dims(),
        blocks: sys.block_count(),
        summaries: sys.summaries.clone(),
    });
    if cmd == Command::Hodge {
        let checks = timer.time("hodge_suite", || suite::hodge_suite(&sys, ids.samples, ids.band, tol.hodge, tol.identity, tol.min_gap, &mut rng));
        report.checks.extend(checks);
        write_spectrum(&sys, &out.join("spectrum.csv"))?;
        return Ok(());
    }

    let series = timer.time("kuranishi_series", || KuranishiSeries::solve(&sys, cfg.kuranishi.max_order))?;
    let fp = cfg.fixed_point_options();
    match cmd {
        Command::Kuranishi => {
            let mut rec = Check::new("recursion consistency", tol.identity);
            rec.record(series.recursion_residual(&sys)?);
            let mut adj = Check::new("d* eps_nu = 0", tol.identity);
            adj.record(series.adjoint_residual(&sys));
            report.checks.extend([rec, adj]);
            let eqs = kuranishi_space_equations(&series);
            write_obstruction(&series, &out.join("obstruction.csv"))?;
            report.details = Some(serde_json::json!({
                "h1_dim": series.m,
                "h2_dim": series.h2_dim,
                "max_order": series.max_order,
                "unobstructed_axes": series.unobstructed_axes(),
                "equations_trivial": eqs.iter().all(|e| e.is_trivial()),
            }));
            report.obstruction = Some(eqs);
        }
        Command::McCheck => {
            let probes = probe_sections(sys.dgla.config.geom(), sys.dgla.config.rank());
            let mut mc = Check::new("mc_residual where the obstruction vanishes", tol.mc);
            let mut flat = Check::new("max |Dbar^2 s| where the obstruction vanishes", 10.0 * tol.mc);
            let mut points = Vec::new();
            for t in &cfg.kuranishi.points {
                let rep = timer.time("mc_check", || mc_check(&series, &sys, t, &fp))?;
                let ev = evaluate_epsilon(&series, &sys, t, &fp)?;
                let op = DeformedOperator::new(&sys.dgla, ev.fixed_point)?;
                let d2 = probes.iter().map(|s| dbar_square_residual(&op, s).0.norm()).fold(0.0, f64::max);
                if rep.obstruction_poly_norm <= higgs_deform::kuranishi::ZERO_TOL {
                    mc.record(rep.mc_residual_norm);
                    flat.record(d2);
                }
                points.push(serde_json::json!({ "t": pairs(t), "report": rep, "max_dbar_squared": d2 }));
            }
            report.checks.extend([mc, flat]);
            report.details = Some(serde_json::json!({ "points": points }));
        }
        Command::GaugeFix | Command::Match => {
            let t0 = t0(cfg, series.m);
            let eps = evaluate_epsilon(&series, &sys, &t0, &fp)?.value;
            let g = sys.dgla.config.geom().clone();
            let r = sys.dgla.config.rank();
            let opts = cfg.gauge_options();
            let mut fixed = Check::new("|d* eta_gamma|", opts.tol);
            let mut recovered = Check::new("|t - t0| / (1e-6 |t0| + 1e-9)", 1.0);
            let mut matching = Check::new("matching residual", opts.matching_tol);
            let mut runs = Vec::new();
            let t0_norm = t0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for _ in 0..cfg.gauge.samples {
                let gamma = random::element(&g, r, 0, cfg.gauge.gamma_band, &mut rng).scale_real(cfg.gauge.gamma_amplitude);
                let eta = full_gauge(&sys.dgla, &eps, &gamma)?;
                if cmd == Command::GaugeFix {
                    let fix = timer.time("gauge_fix", || gauge_fix(&eta, &sys, &opts))?;
                    fixed.record(fix.residual);
                    runs.push(serde_json::json!({ "iterations": fix.iterations, "history": fix.history }));
                } else {
                    let rep = timer.time("match", || match_to_kuranishi(&eta, &sys, &series, &opts))?;
                    let err = rep.t_complex().iter().zip(&t0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                    recovered.record(err / (1e-6 * t0_norm + 1e-9));
                    matching.record(rep.matching_residual);
                    runs.push(serde_json::json!({ "t_error": err, "report": rep }));
                }
            }
            report.checks.extend(if cmd == Command::GaugeFix { vec![fixed] } else { vec![recovered, matching] });
            report.details = Some(serde_json::json!({ "t0": pairs(&t0), "runs": runs }));
        }
        Command::Validate | Command::Identities | Command::Hodge => unreachable!(),
    }
    Ok(())
}

/// Maurer-Cartan elements with known flatness: zero and vertical gauge
/// transforms of zero.
fn mc_examples(dg: &Dgla, band: usize, rng: &mut impl Rng) -> higgs_deform::error::Result<Vec<GradedElement>> {
    let zero = GradedElement::zero(&dg.config, 1);
    let g = dg.config.geom();
    let r = dg.config.rank();
    let mut out = vec![zero.clone()];
    for _ in 0..2 {
        let upsilon = random::form(g, r, r, 0, 0, band, rng);
        // Keep the pointwise size of upsilon near 1e-3 so that the truncated
        // exponential is exact to rounding.
        let sup: f64 = upsilon.components().flat_map(|(_, m)| m.iter()).flat_map(|f| f.coeffs().iter()).map(|c| c.norm()).sum();
        let upsilon = upsilon.scale_real(1e-3 / sup.max(f64::MIN_POSITIVE));
        out.push(vertical_gauge(dg, &zero, &upsilon)?);
    }
    Ok(out)
}

fn t0(cfg: &RunConfig, m: usize) -> Vec<C64> {
    match cfg.t0() {
        Some(t) => t.to_vec(),
        None => {
            let mut t = vec![C64::default(); m];
            if m > 0 {
                t[0] = C64::new(1e-2, 0.0);
            }
            t
        }
    }
}

fn pairs(t: &[C64]) -> Vec<[f64; 2]> {
    t.iter().map(|z| [z.re, z.im]).collect()
}

fn write_spectrum(sys: &HodgeSystem, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["degree", "index", "eigenvalue"])?;
    for deg in 0..sys.summaries.len() {
        for (i, ev) in sys.spectrum(deg).iter().enumerate() {
            w.write_record([deg.to_string(), i.to_string(), format!("{ev:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_obstruction(series: &KuranishiSeries, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=series.m).map(|j| format!("e{j}")).collect();
    header.extend(["h2_index", "re", "im"].map(String::from));
    w.write_record(&header)?;
    for (mono, coeffs) in &series.obstruction {
        for (k, c) in coeffs.iter().enumerate() {
            let mut row: Vec<String> = mono.iter().map(|e| e.to_string()).collect();
            row.extend([k.to_string(), format!("{:e}", c.re), format!("{:e}", c.im)]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
