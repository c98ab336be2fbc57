mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lmax_core::coverings::whitney::{build_whitney, check_covering, minimal_t};
use lmax_core::coverings::{cloud, whitney_neighbors, NeighborBounds, SearchLimits};
use lmax_core::domain::presets;
use lmax_core::report::{json_hash, Report, Status};
use lmax_core::verification::{
    sweep_row, verify_all, verify_beta_independence, verify_finite_unions, verify_prop45, verify_self_improvement,
    verify_theorem2, verify_theorem3_and_4, BankSpec, Experiment, ExperimentConfig, SweepRow, Tolerances,
    WeightPairSpec,
};
use lmax_core::weights::{
    ainfty_estimate, apq_constant, doubling_constant, reverse_holder_exponent, sawyer_testing_constant,
    TestingSetup, WeightClassReport,
};
use lmax_core::{evaluate, Beta, Cube, Domain, DomainSpec, Error, Lattice, MaximalRequest, Mode, ScalarField};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use output::{heatmap_svg, read_columns, trend_svg, Out};

const EXIT_HYPOTHESIS: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Parser, Debug)]
#[command(name = "lmax", version, about = "Local maximal operators and weights on grid domains")]
struct Cli {
    /// Worker threads (falls back to LMAX_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a configuration entry: `dotted.key=json-value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Distance to the complement at every cell center.
    Distance {
        #[command(flatten)]
        common: Common,
    },
    /// Whitney-type covering with its exhaustive checks.
    Whitney {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: f64,
        /// Scale parameter (defaults to the smallest admissible value).
        #[arg(short = 't', long = "t")]
        t: Option<u32>,
    },
    /// Cloud of a cube and, for cloud bases, its Whitney neighbours.
    Cloud {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: f64,
        /// Cube center, comma separated.
        #[arg(long, value_delimiter = ',')]
        center: Vec<f64>,
        #[arg(long)]
        half: f64,
        #[arg(short = 't', long = "t")]
        t: Option<u32>,
    },
    /// Evaluates a maximal operator on a field.
    Maximal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_enum, default_value = "uncentered")]
        mode: ModeArg,
        /// Order of the fractional mode.
        #[arg(long, default_value_t = 0.0)]
        order: f64,
        /// Binary field file (constant one when omitted).
        #[arg(long)]
        field: Option<PathBuf>,
        /// Binary weight file for the weighted mode.
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dyadic")]
        lattice: LatticeArg,
    },
    /// Weight-class diagnostics for an experiment configuration.
    Weights {
        #[command(flatten)]
        common: Common,
    },
    /// Runs theorem-level experiments.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        experiment: ExperimentArg,
        /// Smaller parameter of the beta-independence experiment (default beta/2).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Sweeps domains, parameters and resolutions.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Uncentered,
    Centered,
    Truncated,
    Weighted,
    Fractional,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LatticeArg {
    Dyadic,
    Dense,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ExperimentArg {
    All,
    Theorem2,
    Theorem3,
    Prop45,
    BetaIndependence,
    SelfImprovement,
    FiniteUnions,
}

/// Parameters of `lmax sweep`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct SweepConfig {
    dimension: usize,
    domains: Vec<String>,
    betas: Vec<Beta>,
    exponents: Vec<[f64; 2]>,
    cells: Vec<usize>,
    weights: WeightPairSpec,
    bank: BankSpec,
    seed: u64,
    tolerances: Tolerances,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dimension: 2,
            domains: vec!["punctured-square".into(), "box-annulus".into(), "half-space".into()],
            betas: vec![Beta::new(1, 4).unwrap(), Beta::new(1, 2).unwrap()],
            exponents: vec![[2.0, 2.0], [2.0, 3.0], [3.0, 3.0]],
            cells: vec![64, 128, 256],
            weights: WeightPairSpec::PowerPair { alpha: 0.5, center: None },
            bank: BankSpec::default(),
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

enum Failure {
    Usage(String),
    Io(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => Failure::Io(e.to_string()),
            e @ (Error::Json(_) | Error::Usage(_) | Error::Domain(_) | Error::Format(_)) => Failure::Usage(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(format!("malformed config: {e}"))
    }
}

type Outcome = Result<Status, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(m) = configure_workers(cli.workers) {
        eprintln!("lmax: {m}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(cli.verb) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::HypothesisNotMet) => ExitCode::from(EXIT_HYPOTHESIS),
        Ok(Status::Fail) => {
            eprintln!("lmax: at least one check failed");
            ExitCode::from(EXIT_ERROR)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("lmax: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("lmax: i/o error: {m}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Other(m)) => {
            eprintln!("lmax: {m}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn configure_workers(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("LMAX_WORKERS") {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| format!("LMAX_WORKERS={s} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("worker count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(verb: Verb) -> Outcome {
    match verb {
        Verb::Distance { common } => distance(&common),
        Verb::Whitney { common, beta, t } => whitney(&common, beta, t),
        Verb::Cloud { common, beta, center, half, t } => cloud_cmd(&common, beta, &center, half, t),
        Verb::Maximal { common, beta, mode, order, field, sigma, lattice } => {
            maximal(&common, beta, mode, order, field.as_deref(), sigma.as_deref(), lattice)
        }
        Verb::Weights { common } => weights(&common),
        Verb::Verify { common, experiment, alpha } => verify(&common, experiment, alpha),
        Verb::Sweep { common } => sweep(&common),
    }
}

/// Reads the config (or `{}`), applies overrides and returns it with its directory.
fn load_config(c: &Common) -> Result<(Value, Option<PathBuf>), Failure> {
    let (mut v, base) = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            (serde_json::from_str(&text)?, p.parent().map(Path::to_path_buf))
        }
        None => (json!({}), None),
    };
    for o in &c.overrides {
        apply_override(&mut v, o)?;
    }
    Ok((v, base))
}

fn apply_override(v: &mut Value, item: &str) -> Result<(), Failure> {
    let (key, raw) = item.split_once('=').ok_or_else(|| Failure::Usage(format!("override `{item}` is not key=value")))?;
    let val: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(Failure::Usage(format!("override `{key}` descends into a non-object")));
        }
        let obj = cur.as_object_mut().unwrap();
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), val);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Ok(())
}

fn manifest(verb: &str, config: &Value, seed: u64, extra: Value) -> Value {
    json!({
        "verb": verb,
        "config_hash": json_hash(config),
        "seed": seed,
        "versions": { "lmax": env!("CARGO_PKG_VERSION") },
        "args": extra,
        "created_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// The domain of a domain-level verb: a full spec, `{"preset": name, "cells": n}`,
/// or any config carrying one of those under `domain`.
fn domain_from(v: &Value, base: Option<&Path>) -> Result<Domain, Failure> {
    if let Some(inner) = v.get("domain").filter(|d| d.is_object()) {
        return domain_from(inner, base);
    }
    if let Some(name) = v.get("preset").and_then(Value::as_str) {
        let cells = v.get("cells").and_then(Value::as_u64).unwrap_or(64) as usize;
        let dim = v.get("dimension").and_then(Value::as_u64).unwrap_or(2) as usize;
        return preset(name, dim, cells);
    }
    let spec: DomainSpec = serde_json::from_value(v.clone())?;
    Ok(Domain::from_spec(&spec, base)?)
}

fn preset(name: &str, dim: usize, cells: usize) -> Result<Domain, Failure> {
    let d = match name {
        "punctured-square" => presets::punctured_square(dim, cells)?,
        "box-annulus" => presets::box_annulus(dim, cells)?,
        "half-space" => presets::half_space_clip(dim, cells)?,
        _ => return Err(Failure::Usage(format!("unknown preset `{name}`"))),
    };
    Ok(d)
}

fn beta_arg(b: f64) -> Result<Beta, Failure> {
    Ok(Beta::from_f64(b)?)
}

fn distance(c: &Common) -> Outcome {
    let (cfg, base) = load_config(c)?;
    let d = domain_from(&cfg, base.as_deref())?;
    let out = Out::create(&c.out, &manifest("distance", &cfg, 0, json!({})))?;
    let g = d.grid();
    let s: Vec<f64> = g.cell_indices().map(|i| d.node_distance(i)).collect();
    let f = ScalarField::from_samples(g.clone(), s)?;
    f.write(&out.path("distance.bin"))?;
    out.json(
        "distance.json",
        &json!({
            "domain": d.spec(),
            "interior_cells": d.interior_flags().iter().filter(|&&k| k).count(),
            "max_distance": d.max_node_distance(),
            "min_interior_distance": d.min_interior_node_distance(),
        }),
    )?;
    Ok(Status::Pass)
}

fn whitney(c: &Common, beta: f64, t: Option<u32>) -> Outcome {
    let (cfg, base) = load_config(c)?;
    let d = domain_from(&cfg, base.as_deref())?;
    let beta = beta_arg(beta)?;
    let t = t.unwrap_or_else(|| minimal_t(beta, 20));
    let out = Out::create(&c.out, &manifest("whitney", &cfg, 0, json!({ "beta": beta, "t": t })))?;
    let cov = build_whitney(&d, beta, t)?;
    let check = check_covering(&d, &cov)?;
    out.json("whitney.json", &cov)?;
    out.json("whitney_check.json", &json!({ "passed": check.passed(), "check": check }))?;
    Ok(if check.passed() { Status::Pass } else { Status::Fail })
}

fn cloud_cmd(c: &Common, beta: f64, center: &[f64], half: f64, t: Option<u32>) -> Outcome {
    let (cfg, base) = load_config(c)?;
    let d = domain_from(&cfg, base.as_deref())?;
    let beta = beta_arg(beta)?;
    let q = Cube::new(center, half)?;
    let out = Out::create(&c.out, &manifest("cloud", &cfg, 0, json!({ "beta": beta, "center": center, "half": half })))?;
    let limits = SearchLimits::default();
    let cl = cloud(&d, beta, &q, limits)?;
    let mut doc = json!({ "cloud": cl });
    if lmax_core::coverings::cloud::is_cloud_base(&d, beta, &q) {
        let t = t.unwrap_or_else(|| minimal_t(beta, 20));
        let fam = whitney_neighbors(&d, beta, t, &q, limits)?;
        let bounds = NeighborBounds::new(beta, t, d.dim());
        doc["neighbors"] = serde_json::to_value(&fam)?;
        doc["bounds"] = serde_json::to_value(bounds)?;
        doc["within_bounds"] = json!((fam.upper_count() as f64) <= bounds.m && fam.ratio <= bounds.k);
    }
    out.json("cloud.json", &doc)?;
    Ok(Status::Pass)
}

#[derive(Serialize)]
struct WitnessRow {
    i: usize,
    j: usize,
    k: usize,
    value: f64,
    flagged: bool,
    side: Option<usize>,
    lo_i: Option<usize>,
    lo_j: Option<usize>,
    lo_k: Option<usize>,
}

fn maximal(
    c: &Common,
    beta: f64,
    mode: ModeArg,
    order: f64,
    field: Option<&Path>,
    sigma: Option<&Path>,
    lattice: LatticeArg,
) -> Outcome {
    let (cfg, base) = load_config(c)?;
    let d = domain_from(&cfg, base.as_deref())?;
    let beta = beta_arg(beta)?;
    let mode = match mode {
        ModeArg::Uncentered => Mode::Uncentered,
        ModeArg::Centered => Mode::Centered,
        ModeArg::Truncated => Mode::Truncated,
        ModeArg::Weighted => Mode::Weighted,
        ModeArg::Fractional => Mode::Fractional(order),
    };
    let lattice = match lattice {
        LatticeArg::Dyadic => Lattice::Dyadic,
        LatticeArg::Dense => Lattice::Dense,
    };
    let args = json!({ "beta": beta, "mode": mode, "lattice": lattice,
        "field": field.map(|p| p.display().to_string()), "sigma": sigma.map(|p| p.display().to_string()) });
    let out = Out::create(&c.out, &manifest("maximal", &cfg, 0, args))?;
    let g = d.grid();
    let f = match field {
        Some(p) => ScalarField::read(p, g)?,
        None => ScalarField::constant(g, 1.0)?,
    };
    let s = match sigma {
        Some(p) => Some(ScalarField::read(p, g)?),
        None => None,
    };
    let mut req = MaximalRequest::new(&d, &f, beta, mode).lattice(lattice);
    if let Some(s) = &s {
        req = req.sigma(s);
    }
    let res = evaluate(&req)?;
    res.to_field()?.write(&out.path("maximal.bin"))?;
    let rows: Vec<WitnessRow> = g
        .cell_indices()
        .enumerate()
        .map(|(k, i)| {
            let w = res.witnesses[k];
            WitnessRow {
                i: i[0],
                j: i[1],
                k: i[2],
                value: res.values[k],
                flagged: res.flagged[k],
                side: w.map(|b| b.hi[0] - b.lo[0]),
                lo_i: w.map(|b| b.lo[0]),
                lo_j: w.map(|b| b.lo[1]),
                lo_k: w.map(|b| b.lo[2]),
            }
        })
        .collect();
    out.csv("witnesses.csv", &rows)?;
    out.json("maximal.json", &res.stats)?;
    if d.dim() == 2 {
        let vals: Vec<f64> = read_columns(&out.path("witnesses.csv"), &["value"])?
            .iter()
            .map(|r| r[0].parse().unwrap_or(f64::NAN))
            .collect();
        let cells = g.cells();
        std::fs::write(out.path("maximal.svg"), heatmap_svg("maximal function", cells[0], cells[1], &vals))
            .map_err(Error::Io)?;
    }
    Ok(Status::Pass)
}

fn experiment(c: &Common) -> Result<(Experiment, Value), Failure> {
    let (v, base) = load_config(c)?;
    let cfg: ExperimentConfig = serde_json::from_value(v.clone())?;
    Ok((Experiment::new(cfg, base.as_deref())?, v))
}

fn weights(c: &Common) -> Outcome {
    let (exp, v) = experiment(c)?;
    let out = Out::create(&c.out, &manifest("weights", &v, exp.cfg.seed, json!({})))?;
    let beta = exp.cfg.beta;
    let tol = &exp.cfg.tolerances;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(exp.cfg.seed);
    let setup = TestingSetup { domain: &exp.domain, u: &exp.u, sigma: &exp.sigma, exps: exp.exps, beta, mode: Mode::Uncentered };
    let reports: Vec<WeightClassReport> = vec![
        doubling_constant(&exp.u, &exp.domain, beta, &exp.testing),
        doubling_constant(&exp.sigma, &exp.domain, beta, &exp.testing),
        apq_constant(&exp.u, &exp.sigma, exp.exps, &exp.testing, true)?,
        ainfty_estimate(&exp.sigma, &exp.testing, &mut rng, tol.ainfty_c_cap),
        reverse_holder_exponent(&exp.sigma, &exp.testing, tol.rhi_cap)?,
        sawyer_testing_constant(&setup, &exp.cfg.lattice, &exp.testing)?,
    ];
    let labels = ["u doubling", "sigma doubling", "A_pq local", "sigma A_infinity", "sigma reverse Hoelder", "sawyer testing"];
    let doc: Vec<Value> = labels
        .iter()
        .zip(&reports)
        .map(|(l, r)| json!({ "label": l, "report": r }))
        .collect();
    out.json("weights.json", &doc)?;
    Ok(Status::Pass)
}

fn overall(reports: &[Report]) -> Status {
    reports.iter().map(Report::status).max().unwrap_or(Status::Pass)
}

fn verify(c: &Common, which: ExperimentArg, alpha: Option<f64>) -> Outcome {
    let (exp, v) = experiment(c)?;
    let out = Out::create(&c.out, &manifest("verify", &v, exp.cfg.seed, json!({ "experiment": format!("{which:?}"), "alpha": alpha })))?;
    let alpha = match alpha {
        Some(a) => beta_arg(a)?,
        None => Beta::from_ratio(exp.cfg.beta.ratio() / 2)?,
    };
    let reports = match which {
        ExperimentArg::All => verify_all(&exp)?,
        ExperimentArg::Theorem2 => vec![verify_theorem2(&exp)?],
        ExperimentArg::Theorem3 => vec![verify_theorem3_and_4(&exp)?],
        ExperimentArg::Prop45 => vec![verify_prop45(&exp)?],
        ExperimentArg::BetaIndependence => vec![verify_beta_independence(&exp, alpha)?],
        ExperimentArg::SelfImprovement => vec![verify_self_improvement(&exp)?],
        ExperimentArg::FiniteUnions => vec![verify_finite_unions(&exp)?],
    };
    let status = overall(&reports);
    out.json("report.json", &json!({ "status": status, "reports": reports }))?;
    Ok(status)
}

fn sweep(c: &Common) -> Outcome {
    let (v, _) = load_config(c)?;
    let cfg: SweepConfig = serde_json::from_value(v.clone())?;
    let out = Out::create(&c.out, &manifest("sweep", &v, cfg.seed, json!({})))?;
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut reports = Vec::new();
    for name in &cfg.domains {
        for &cells in &cfg.cells {
            let d = preset(name, cfg.dimension, cells)?;
            for &beta in &cfg.betas {
                for &[p, q] in &cfg.exponents {
                    let ec = ExperimentConfig {
                        domain: d.spec(),
                        weights: cfg.weights.clone(),
                        p,
                        q,
                        beta,
                        lattice: Lattice::Dyadic,
                        bank: cfg.bank.clone(),
                        seed: cfg.seed,
                        tolerances: cfg.tolerances.clone(),
                    };
                    let exp = Experiment::new(ec, None)?;
                    let (row, rep) = sweep_row(name, &exp)?;
                    rows.push(row);
                    reports.push(rep);
                }
            }
        }
    }
    out.csv("sweep.csv", &rows)?;
    out.json("sweep.json", &reports)?;
    let table = read_columns(&out.path("sweep.csv"), &["domain", "beta", "p", "q", "cells", "gap"])?;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &table {
        let key = format!("{} b={} p={} q={}", r[0], r[1], r[2], r[3]);
        let pt = (r[4].parse().unwrap_or(0.0), r[5].parse().unwrap_or(f64::NAN));
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, s)) => s.push(pt),
            None => series.push((key, vec![pt])),
        }
    }
    std::fs::write(out.path("sweep.svg"), trend_svg("norm / testing gap", &series)).map_err(Error::Io)?;
    Ok(overall(&reports))
}
