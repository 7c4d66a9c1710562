//! One module per concern: argument structs, config-file merging, and the
//! run function for each subcommand. Every run writes its artifacts plus a
//! `manifest.json` echoing the fully resolved configuration, and returns a
//! one-line summary for stdout. Flags take precedence over config-file
//! values; defaults fill whatever remains.

use std::path::{Path, PathBuf};

use basslab_core::compartmental::{bass_series, circle_series, solve_hetero};
use basslab_core::io::{write_csv, write_json};
use basslab_core::lab::{
    bass_horizon, circle_horizon, hetero_compare, hetero_counterexample, study_circle,
    study_complete, study_kgroup, toy_embedding, verify_bound, BoundReport, ConvergenceStudy,
    StudyOptions, ToyRule,
};
use basslab_core::master::{
    solve_circle_reduced, solve_complete_reduced, solve_full_master, solve_kgroup_reduced,
    solve_truncated_circle, solve_truncated_complete, solve_truncated_kgroup, EmbeddedFamily,
    KGroupOptions, TopClosure,
};
use basslab_core::stochastic::monte_carlo;
use basslab_core::{
    uniform_grid, BassParams, Error, GroupSizes, HeteroSpec, IntegratorConfig, Result,
};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::netcfg::{load_spec_value, parse_spec, NetworkConfig};

const DEFAULT_POINTS: usize = 400;

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON file supplying any value not given as a flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV, JSON, and manifest artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker budget for parallel sweeps and replicates.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Complete,
    Circle,
    Kgroup,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Complete => "complete",
            Family::Circle => "circle",
            Family::Kgroup => "kgroup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    Ansatz,
    Zero,
}

impl From<Closure> for TopClosure {
    fn from(c: Closure) -> TopClosure {
        match c {
            Closure::Ansatz => TopClosure::Ansatz,
            Closure::Zero => TopClosure::Zero,
        }
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParameter(format!("{what} is required")))
}

fn load_file<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", p.display())))
        }
    }
}

fn out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.or(file).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: &C) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
        },
    )
}

/// Spec comes either from a `--spec` file or inline in the config file.
fn resolve_spec(
    flag: Option<&PathBuf>,
    file: Option<serde_json::Value>,
) -> Result<Option<(HeteroSpec, serde_json::Value)>> {
    let value = match flag {
        Some(path) => Some(load_spec_value(path)?),
        None => file,
    };
    match value {
        None => Ok(None),
        Some(v) => Ok(Some((parse_spec(&v)?, v))),
    }
}

fn named_columns<'a>(names: &'a [String], series: &'a [&'a [f64]]) -> Vec<(&'a str, &'a [f64])> {
    names
        .iter()
        .map(String::as_str)
        .zip(series.iter().copied())
        .collect()
}

// ---------------------------------------------------------------------------
// compartmental

#[derive(Debug, Args)]
pub struct CompartmentalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Limit family to evaluate.
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Multi-group spec JSON file (kgroup family).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Final time; defaults to the family's saturation time.
    #[arg(long)]
    horizon: Option<f64>,
    /// Uniform grid size including both endpoints.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompartmentalFile {
    family: Option<Family>,
    p: Option<f64>,
    q: Option<f64>,
    spec: Option<serde_json::Value>,
    horizon: Option<f64>,
    points: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct CompartmentalConfig {
    family: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<serde_json::Value>,
    horizon: f64,
    points: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

pub fn run_compartmental(args: CompartmentalArgs) -> Result<String> {
    let file: CompartmentalFile = load_file(args.common.config.as_ref())?;
    let family = args.family.or(file.family).unwrap_or(Family::Complete);
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let dir = out_dir(args.common.out, file.out)?;
    let points = args.points.or(file.points).unwrap_or(DEFAULT_POINTS);
    let cfg = IntegratorConfig::default();

    let mut params = None;
    let mut spec = None;
    let horizon = match args.horizon.or(file.horizon) {
        Some(h) => h,
        None => match family {
            Family::Complete | Family::Circle => {
                let pr = BassParams::new(
                    require(args.p.or(file.p), "--p")?,
                    require(args.q.or(file.q), "--q")?,
                )?;
                let h = if family == Family::Complete {
                    bass_horizon(&pr)?
                } else {
                    circle_horizon(&pr)?
                };
                params = Some(pr);
                h
            }
            Family::Kgroup => {
                let (sp, _) = require(
                    resolve_spec(args.spec.as_ref(), file.spec.clone())?,
                    "--spec",
                )?;
                let h = basslab_core::lab::hetero_horizon(&sp, &cfg)?;
                spec = Some(sp);
                h
            }
        },
    };
    let grid = uniform_grid(horizon, points)?;

    let csv = dir.join("compartmental.csv");
    let final_f;
    match family {
        Family::Complete | Family::Circle => {
            let pr = match params {
                Some(pr) => pr,
                None => BassParams::new(
                    require(args.p.or(file.p), "--p")?,
                    require(args.q.or(file.q), "--q")?,
                )?,
            };
            params = Some(pr);
            let f = if family == Family::Complete {
                bass_series(&grid, &pr)?
            } else {
                circle_series(&grid, &pr)?
            };
            final_f = *f.last().unwrap();
            write_csv(&csv, &[("t", &grid), ("f", &f)])?;
        }
        Family::Kgroup => {
            let sp = match spec.take() {
                Some(sp) => sp,
                None => {
                    require(
                        resolve_spec(args.spec.as_ref(), file.spec.clone())?,
                        "--spec",
                    )?
                    .0
                }
            };
            let sol = solve_hetero(&sp, &grid, &cfg)?;
            final_f = *sol.total().last().unwrap();
            let mut names = vec!["t".to_string(), "f".to_string()];
            let mut series: Vec<&[f64]> = vec![&grid, sol.total()];
            for k in 0..sp.groups() {
                names.push(format!("f_{}", k + 1));
                series.push(sol.group(k));
            }
            write_csv(&csv, &named_columns(&names, &series))?;
            spec = Some(sp);
        }
    }

    write_manifest(
        &dir,
        "compartmental",
        &CompartmentalConfig {
            family: family.name(),
            p: params.map(|pr| pr.p),
            q: params.map(|pr| pr.q),
            spec: spec.map(|sp| spec_value(&sp)),
            horizon,
            points,
            out: dir.display().to_string(),
            threads,
        },
    )?;
    Ok(format!(
        "compartmental {}: f({horizon:.4}) = {final_f:.6} -> {}",
        family.name(),
        csv.display()
    ))
}

fn spec_value(spec: &HeteroSpec) -> serde_json::Value {
    serde_json::from_str(&spec.to_json()).expect("spec serializes to valid json")
}

// ---------------------------------------------------------------------------
// master

#[derive(Debug, Args)]
pub struct MasterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Network family for the reduced or truncated systems.
    #[arg(long, value_enum)]
    family: Option<Family>,
    /// Population size (kgroup: split by the floor rule).
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    /// Explicit kgroup sizes, overriding --M.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Multi-group spec JSON file (kgroup family).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Solve the truncated limit ladder instead of a finite population.
    #[arg(long)]
    limit: bool,
    /// Truncation level for --limit.
    #[arg(long = "N", alias = "n")]
    n: Option<usize>,
    /// Closure for the top level of the truncated ladder.
    #[arg(long, value_enum)]
    closure: Option<Closure>,
    /// Solve the exact subset master equations instead of a reduction.
    #[arg(long)]
    full: bool,
    /// Network JSON for --full (any family, including weight matrices).
    #[arg(long)]
    network: Option<PathBuf>,
    /// Write every composition column of the kgroup system.
    #[arg(long)]
    table: bool,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MasterFile {
    family: Option<Family>,
    #[serde(alias = "M")]
    m: Option<usize>,
    sizes: Option<Vec<usize>>,
    p: Option<f64>,
    q: Option<f64>,
    spec: Option<serde_json::Value>,
    limit: Option<bool>,
    #[serde(alias = "N")]
    n: Option<usize>,
    closure: Option<Closure>,
    full: Option<bool>,
    network: Option<NetworkConfig>,
    table: Option<bool>,
    horizon: Option<f64>,
    points: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct MasterConfig {
    mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    closure: Option<Closure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<NetworkConfig>,
    table: bool,
    horizon: f64,
    points: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

pub fn run_master(mut args: MasterArgs) -> Result<String> {
    let mut file: MasterFile = load_file(args.common.config.as_ref())?;
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let limit = args.limit || file.limit.unwrap_or(false);
    let full = args.full || file.full.unwrap_or(false);
    let table = args.table || file.table.unwrap_or(false);
    if limit && full {
        return Err(Error::InvalidParameter(
            "--limit and --full are mutually exclusive".into(),
        ));
    }
    let dir = out_dir(args.common.out.take(), file.out.take())?;
    let points = args.points.or(file.points).unwrap_or(DEFAULT_POINTS);
    let cfg = IntegratorConfig::default();
    let csv = dir.join("master.csv");

    if full {
        let network = match args.network.as_ref() {
            Some(path) => NetworkConfig::from_path(path)?,
            None => match file.network {
                Some(n) => n,
                None => family_network(&args, &file)?,
            },
        };
        let horizon = match args.horizon.or(file.horizon) {
            Some(h) => h,
            None => network.default_horizon(&cfg)?,
        };
        let grid = uniform_grid(horizon, points)?;
        let net = network.build()?;
        let sol = solve_full_master(&net, &grid, &cfg)?;
        write_csv(&csv, &[("t", &grid), ("f_discrete", sol.f_discrete())])?;
        let final_f = *sol.f_discrete().last().unwrap();
        write_manifest(
            &dir,
            "master",
            &MasterConfig {
                mode: "full",
                family: None,
                m: Some(net.node_count()),
                sizes: None,
                p: None,
                q: None,
                spec: None,
                n: None,
                closure: None,
                network: Some(network),
                table,
                horizon,
                points,
                out: dir.display().to_string(),
                threads,
            },
        )?;
        return Ok(format!(
            "master full M={}: f_discrete({horizon:.4}) = {final_f:.6} -> {}",
            net.node_count(),
            csv.display()
        ));
    }

    let family = require(args.family.or(file.family), "--family")?;
    let closure = args.closure.or(file.closure).unwrap_or(Closure::Ansatz);
    match family {
        Family::Complete | Family::Circle => {
            let pr = BassParams::new(
                require(args.p.or(file.p), "--p")?,
                require(args.q.or(file.q), "--q")?,
            )?;
            let horizon = match args.horizon.or(file.horizon) {
                Some(h) => h,
                None if family == Family::Complete => bass_horizon(&pr)?,
                None => circle_horizon(&pr)?,
            };
            let grid = uniform_grid(horizon, points)?;
            let (ladder, label, m_out, n_out) = if limit {
                let n = require(args.n.or(file.n), "--N")?;
                let ladder = if family == Family::Complete {
                    solve_truncated_complete(n, &pr, closure.into(), &grid, &cfg)?
                } else {
                    solve_truncated_circle(n, &pr, closure.into(), &grid, &cfg)?
                };
                (ladder, "limit", None, Some(n))
            } else {
                let m = require(args.m.or(file.m), "--M")?;
                let ladder = if family == Family::Complete {
                    solve_complete_reduced(m, &pr, &grid, &cfg)?
                } else {
                    solve_circle_reduced(m, &pr, &grid, &cfg)?
                };
                (ladder, "reduced", Some(m), None)
            };
            let mut names = vec!["t".to_string(), "f".to_string()];
            let mut series: Vec<&[f64]> = vec![&grid, ladder.f_discrete()];
            for n in 1..=ladder.node_count() {
                names.push(format!("u_{n}"));
                series.push(ladder.level(n)?);
            }
            write_csv(&csv, &named_columns(&names, &series))?;
            let final_f = *ladder.f_discrete().last().unwrap();
            write_manifest(
                &dir,
                "master",
                &MasterConfig {
                    mode: label,
                    family: Some(family.name()),
                    m: m_out,
                    sizes: None,
                    p: Some(pr.p),
                    q: Some(pr.q),
                    spec: None,
                    n: n_out,
                    closure: limit.then_some(closure),
                    network: None,
                    table,
                    horizon,
                    points,
                    out: dir.display().to_string(),
                    threads,
                },
            )?;
            Ok(format!(
                "master {} {label}: f({horizon:.4}) = {final_f:.6} -> {}",
                family.name(),
                csv.display()
            ))
        }
        Family::Kgroup => {
            let (spec, _) = require(
                resolve_spec(args.spec.as_ref(), file.spec.clone())?,
                "--spec",
            )?;
            let horizon = match args.horizon.or(file.horizon) {
                Some(h) => h,
                None => basslab_core::lab::hetero_horizon(&spec, &cfg)?,
            };
            let grid = uniform_grid(horizon, points)?;
            if limit {
                let n = require(args.n.or(file.n), "--N")?;
                let sol = solve_truncated_kgroup(&spec, n, closure.into(), &grid, &cfg)?;
                let k = spec.groups();
                let mut names = vec!["t".to_string(), "f".to_string()];
                let mut series: Vec<&[f64]> = vec![&grid, sol.f_limit()];
                for g in 0..k {
                    names.push(format!("u_e{}", g + 1));
                    series.push(sol.singleton(g));
                }
                for g in 0..k {
                    names.push(format!("c_{}", g + 1));
                    series.push(sol.factor(g));
                }
                write_csv(&csv, &named_columns(&names, &series))?;
                let final_f = *sol.f_limit().last().unwrap();
                write_manifest(
                    &dir,
                    "master",
                    &MasterConfig {
                        mode: "limit",
                        family: Some("kgroup"),
                        m: None,
                        sizes: None,
                        p: None,
                        q: None,
                        spec: Some(spec_value(&spec)),
                        n: Some(n),
                        closure: Some(closure),
                        network: None,
                        table,
                        horizon,
                        points,
                        out: dir.display().to_string(),
                        threads,
                    },
                )?;
                return Ok(format!(
                    "master kgroup limit: f({horizon:.4}) = {final_f:.6} -> {}",
                    csv.display()
                ));
            }
            let sizes = match args.sizes.clone().or(file.sizes.clone()) {
                Some(s) => GroupSizes::explicit(s)?,
                None => GroupSizes::from_fractions(&spec, require(args.m.or(file.m), "--M")?)?,
            };
            let opts = KGroupOptions {
                store_table: table,
                ..KGroupOptions::default()
            };
            let sol = solve_kgroup_reduced(&spec, &sizes, &grid, &cfg, &opts)?;
            let mut names = vec!["t".to_string(), "f_discrete".to_string()];
            let mut series: Vec<&[f64]> = vec![&grid, sol.f_discrete()];
            for g in 0..spec.groups() {
                names.push(format!("u_e{}", g + 1));
                series.push(sol.singleton(g));
            }
            if let Some(tab) = sol.table() {
                for comp in tab.compositions() {
                    names.push(basslab_core::master::KGroupTable::column_name(&comp));
                    series.push(tab.value(&comp)?);
                }
            }
            write_csv(&csv, &named_columns(&names, &series))?;
            let final_f = *sol.f_discrete().last().unwrap();
            write_manifest(
                &dir,
                "master",
                &MasterConfig {
                    mode: "reduced",
                    family: Some("kgroup"),
                    m: Some(sizes.total()),
                    sizes: Some(sizes.sizes().to_vec()),
                    p: None,
                    q: None,
                    spec: Some(spec_value(&spec)),
                    n: None,
                    closure: None,
                    network: None,
                    table,
                    horizon,
                    points,
                    out: dir.display().to_string(),
                    threads,
                },
            )?;
            Ok(format!(
                "master kgroup reduced M={}: f_discrete({horizon:.4}) = {final_f:.6} -> {}",
                sizes.total(),
                csv.display()
            ))
        }
    }
}

/// --full without --network falls back to the family flags.
fn family_network(args: &MasterArgs, file: &MasterFile) -> Result<NetworkConfig> {
    let family = require(args.family.or(file.family), "--network or --family")?;
    Ok(match family {
        Family::Complete => NetworkConfig::Complete {
            m: require(args.m.or(file.m), "--M")?,
            p: require(args.p.or(file.p), "--p")?,
            q: require(args.q.or(file.q), "--q")?,
        },
        Family::Circle => NetworkConfig::Circle {
            m: require(args.m.or(file.m), "--M")?,
            p: require(args.p.or(file.p), "--p")?,
            q: require(args.q.or(file.q), "--q")?,
        },
        Family::Kgroup => {
            let spec_value = match args.spec.as_ref() {
                Some(path) => load_spec_value(path)?,
                None => require(file.spec.clone(), "--spec")?,
            };
            NetworkConfig::KGroup {
                spec: spec_value,
                m: args.m.or(file.m),
                sizes: args.sizes.clone().or_else(|| file.sizes.clone()),
            }
        }
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Network JSON file.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Number of Monte Carlo replicates.
    #[arg(long = "R", alias = "replicates")]
    replicates: Option<usize>,
    /// Master seed; replicate seeds derive from it deterministically.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    network: Option<NetworkConfig>,
    #[serde(alias = "R")]
    replicates: Option<usize>,
    seed: Option<u64>,
    horizon: Option<f64>,
    points: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct SimulateConfig {
    network: NetworkConfig,
    replicates: usize,
    seed: u64,
    horizon: f64,
    points: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

/// The config file may be a plain network description (it then carries the
/// `family` tag at top level) or a full flag-value file with a `network`
/// field.
fn load_simulate_file(path: Option<&PathBuf>) -> Result<SimulateFile> {
    let Some(p) = path else {
        return Ok(SimulateFile::default());
    };
    let text = std::fs::read_to_string(p)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", p.display())))?;
    if value.get("family").is_some() {
        let network = serde_json::from_value(value)
            .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", p.display())))?;
        return Ok(SimulateFile {
            network: Some(network),
            ..SimulateFile::default()
        });
    }
    serde_json::from_value(value)
        .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", p.display())))
}

pub fn run_simulate(args: SimulateArgs) -> Result<String> {
    let file = load_simulate_file(args.common.config.as_ref())?;
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let network = match args.network.as_ref() {
        Some(path) => NetworkConfig::from_path(path)?,
        None => require(file.network, "--network")?,
    };
    let replicates = args.replicates.or(file.replicates).unwrap_or(1000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let points = args.points.or(file.points).unwrap_or(DEFAULT_POINTS);
    let cfg = IntegratorConfig::default();
    let horizon = match args.horizon.or(file.horizon) {
        Some(h) => h,
        None => network.default_horizon(&cfg)?,
    };
    let dir = out_dir(args.common.out, file.out)?;
    let grid = uniform_grid(horizon, points)?;
    let net = network.build()?;
    let summary = monte_carlo(&net, &grid, replicates, seed)?;
    let csv = dir.join("simulate.csv");
    summary.write_csv(&csv)?;
    write_manifest(
        &dir,
        "simulate",
        &SimulateConfig {
            network,
            replicates,
            seed,
            horizon,
            points,
            out: dir.display().to_string(),
            threads,
        },
    )?;
    Ok(format!(
        "simulate M={} R={replicates} seed={seed}: f_mean({horizon:.4}) = {:.6} -> {}",
        net.node_count(),
        summary.f_mean().last().unwrap(),
        csv.display()
    ))
}

// ---------------------------------------------------------------------------
// converge

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Family whose finite populations are compared against their limit.
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Multi-group spec JSON file (kgroup family).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Population sizes, strictly increasing.
    #[arg(long = "Ms", alias = "ms", value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// State cap for the kgroup family.
    #[arg(long)]
    budget: Option<usize>,
    /// Also write one trajectory CSV per population size.
    #[arg(long)]
    trajectories: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergeFile {
    family: Option<Family>,
    p: Option<f64>,
    q: Option<f64>,
    spec: Option<serde_json::Value>,
    #[serde(alias = "Ms")]
    ms: Option<Vec<usize>>,
    horizon: Option<f64>,
    points: Option<usize>,
    budget: Option<usize>,
    trajectories: Option<bool>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct ConvergeConfig {
    family: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<serde_json::Value>,
    ms: Vec<usize>,
    horizon: f64,
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<usize>,
    trajectories: bool,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct FitSummary {
    slope: f64,
    intercept: f64,
    rms: f64,
}

#[derive(Serialize)]
struct GridSummary {
    #[serde(rename = "T")]
    t: f64,
    points: usize,
}

#[derive(Serialize)]
struct StudySummary {
    family: String,
    params: serde_json::Value,
    fit: Option<FitSummary>,
    grid: GridSummary,
    ms: Vec<usize>,
    sup_diffs: Vec<f64>,
    truncated: bool,
}

pub fn run_converge(args: ConvergeArgs) -> Result<String> {
    let file: ConvergeFile = load_file(args.common.config.as_ref())?;
    let family = args.family.or(file.family).unwrap_or(Family::Complete);
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let dir = out_dir(args.common.out, file.out)?;
    let ms = require(args.ms.or(file.ms), "--Ms")?;
    let trajectories = args.trajectories || file.trajectories.unwrap_or(false);
    let mut opts = if family == Family::Kgroup {
        StudyOptions::kgroup_default()
    } else {
        StudyOptions::default()
    };
    opts.horizon = args.horizon.or(file.horizon);
    if let Some(points) = args.points.or(file.points) {
        opts.grid_points = points;
    }
    if let Some(budget) = args.budget.or(file.budget) {
        opts.state_budget = budget;
    }

    let mut params = None;
    let mut spec = None;
    let study = match family {
        Family::Complete | Family::Circle => {
            let pr = BassParams::new(
                require(args.p.or(file.p), "--p")?,
                require(args.q.or(file.q), "--q")?,
            )?;
            params = Some(pr);
            if family == Family::Complete {
                study_complete(&pr, &ms, &opts)?
            } else {
                study_circle(&pr, &ms, &opts)?
            }
        }
        Family::Kgroup => {
            let (sp, _) = require(
                resolve_spec(args.spec.as_ref(), file.spec.clone())?,
                "--spec",
            )?;
            let study = study_kgroup(&sp, &ms, &opts)?;
            spec = Some(sp);
            study
        }
    };

    let ms_f64: Vec<f64> = study.ms.iter().map(|&m| m as f64).collect();
    write_csv(
        &dir.join("study.csv"),
        &[("m", &ms_f64), ("sup_diff", &study.sup_diffs)],
    )?;
    let params_value = match (params, &spec) {
        (Some(pr), _) => serde_json::json!({ "p": pr.p, "q": pr.q }),
        (None, Some(sp)) => spec_value(sp),
        (None, None) => unreachable!("one parameter source always resolves"),
    };
    let json = dir.join("study.json");
    write_json(
        &json,
        &StudySummary {
            family: family.name().to_string(),
            params: params_value,
            fit: study.fit.as_ref().map(|f| FitSummary {
                slope: f.slope,
                intercept: f.intercept,
                rms: f.rms_residual,
            }),
            grid: GridSummary {
                t: study.horizon,
                points: study.grid_points,
            },
            ms: study.ms.clone(),
            sup_diffs: study.sup_diffs.clone(),
            truncated: study.truncated,
        },
    )?;
    if trajectories {
        write_study_trajectories(&dir, family, &study, params, spec.as_ref(), &opts)?;
    }
    write_manifest(
        &dir,
        "converge",
        &ConvergeConfig {
            family: family.name(),
            p: params.map(|pr| pr.p),
            q: params.map(|pr| pr.q),
            spec: spec.as_ref().map(spec_value),
            ms,
            horizon: study.horizon,
            points: study.grid_points,
            budget: args.budget.or(file.budget),
            trajectories,
            out: dir.display().to_string(),
            threads,
        },
    )?;
    let verdict = match &study.fit {
        Some(fit) => format!("slope = {:.4}", fit.slope),
        None => "differences at the floor; no rate fit".to_string(),
    };
    Ok(format!(
        "converge {} M={:?}: {verdict} -> {}",
        family.name(),
        study.ms,
        json.display()
    ))
}

fn write_study_trajectories(
    dir: &Path,
    family: Family,
    study: &ConvergenceStudy,
    params: Option<BassParams>,
    spec: Option<&HeteroSpec>,
    opts: &StudyOptions,
) -> Result<()> {
    let grid = uniform_grid(study.horizon, study.grid_points)?;
    for &m in &study.ms {
        let f = match family {
            Family::Complete => {
                let pr = params.expect("scalar family has params");
                solve_complete_reduced(m, &pr, &grid, &opts.cfg)?
                    .f_discrete()
                    .to_vec()
            }
            Family::Circle => {
                let pr = params.expect("scalar family has params");
                solve_circle_reduced(m, &pr, &grid, &opts.cfg)?
                    .f_discrete()
                    .to_vec()
            }
            Family::Kgroup => {
                let sp = spec.expect("kgroup family has a spec");
                let sizes = GroupSizes::from_fractions(sp, m)?;
                let kopts = KGroupOptions {
                    state_budget: opts.state_budget,
                    store_table: false,
                };
                solve_kgroup_reduced(sp, &sizes, &grid, &opts.cfg, &kopts)?
                    .f_discrete()
                    .to_vec()
            }
        };
        write_csv(
            &dir.join(format!("trajectory_m{m}.csv")),
            &[("t", &grid), ("f_discrete", &f)],
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// hetero

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeteroMode {
    /// Mild heterogeneity against its homogenized stand-in.
    Compare,
    /// Two-group cross-influence system that initially beats homogeneous.
    Cross,
}

#[derive(Debug, Args)]
pub struct HeteroArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    mode: Option<HeteroMode>,
    /// Group fractions (compare mode).
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    /// External rates: one per group in compare mode, a single value in
    /// cross mode.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Internal rates, same shape as --p.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeteroFile {
    mode: Option<HeteroMode>,
    a: Option<Vec<f64>>,
    p: Option<Vec<f64>>,
    q: Option<Vec<f64>>,
    horizon: Option<f64>,
    points: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct HeteroConfig {
    mode: HeteroMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Vec<f64>>,
    p: Vec<f64>,
    q: Vec<f64>,
    horizon: f64,
    points: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct CompareSummary {
    mode: HeteroMode,
    hom: BassParams,
    gap_positive: bool,
    y_positive: bool,
    fractions_ascending: bool,
    max_gap: f64,
}

#[derive(Serialize)]
struct CrossSummary {
    mode: HeteroMode,
    initial_positive: bool,
    crossing_time: Option<f64>,
    het_curvature: basslab_core::compartmental::InitialCurvature,
    hom_curvature: basslab_core::compartmental::InitialCurvature,
    degenerate: bool,
}

pub fn run_hetero(args: HeteroArgs) -> Result<String> {
    let file: HeteroFile = load_file(args.common.config.as_ref())?;
    let mode = args.mode.or(file.mode).unwrap_or(HeteroMode::Compare);
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let dir = out_dir(args.common.out, file.out)?;
    let points = args.points.or(file.points).unwrap_or(DEFAULT_POINTS);
    let cfg = IntegratorConfig::default();
    let p = require(args.p.or(file.p), "--p")?;
    let q = require(args.q.or(file.q), "--q")?;
    let csv = dir.join("hetero.csv");
    let json = dir.join("hetero.json");

    match mode {
        HeteroMode::Compare => {
            let a = require(args.a.or(file.a), "--a")?;
            let spec = HeteroSpec::mild(a.clone(), p.clone(), q.clone())?;
            let horizon = match args.horizon.or(file.horizon) {
                Some(h) => h,
                None => bass_horizon(&spec.homogenize())?,
            };
            let grid = uniform_grid(horizon, points)?;
            let cmp = hetero_compare(&p, &q, &a, &grid, &cfg)?;
            let mut names = vec![
                "t".to_string(),
                "f_het".to_string(),
                "f_hom".to_string(),
                "gap".to_string(),
                "y".to_string(),
            ];
            let mut series: Vec<&[f64]> =
                vec![&grid, &cmp.f_het, &cmp.f_hom, &cmp.gap, &cmp.y];
            for (k, frac) in cmp.group_fractions.iter().enumerate() {
                names.push(format!("g_{}", k + 1));
                series.push(frac);
            }
            write_csv(&csv, &named_columns(&names, &series))?;
            let max_gap = cmp.gap.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            write_json(
                &json,
                &CompareSummary {
                    mode,
                    hom: cmp.hom,
                    gap_positive: cmp.gap_positive,
                    y_positive: cmp.y_positive,
                    fractions_ascending: cmp.fractions_ascending,
                    max_gap,
                },
            )?;
            write_manifest(
                &dir,
                "hetero",
                &HeteroConfig {
                    mode,
                    a: Some(a),
                    p,
                    q,
                    horizon,
                    points,
                    out: dir.display().to_string(),
                    threads,
                },
            )?;
            Ok(format!(
                "hetero compare K={}: ordered below homogenized = {} (max gap {max_gap:.6}) -> {}",
                cmp.group_fractions.len(),
                cmp.gap_positive,
                json.display()
            ))
        }
        HeteroMode::Cross => {
            if p.len() != 1 || q.len() != 1 {
                return Err(Error::InvalidParameter(
                    "cross mode takes scalar --p and --q".into(),
                ));
            }
            let pr = BassParams::new(p[0], q[0])?;
            let horizon = match args.horizon.or(file.horizon) {
                Some(h) => h,
                None => bass_horizon(&pr)?,
            };
            let grid = uniform_grid(horizon, points)?;
            let report = hetero_counterexample(&pr, &grid, &cfg)?;
            write_csv(
                &csv,
                &[
                    ("t", &grid[..]),
                    ("f_het", &report.f_het),
                    ("f_hom", &report.f_hom),
                    ("diff", &report.diff),
                ],
            )?;
            write_json(
                &json,
                &CrossSummary {
                    mode,
                    initial_positive: report.initial_positive,
                    crossing_time: report.crossing_time,
                    het_curvature: report.het_curvature,
                    hom_curvature: report.hom_curvature,
                    degenerate: report.degenerate,
                },
            )?;
            write_manifest(
                &dir,
                "hetero",
                &HeteroConfig {
                    mode,
                    a: None,
                    p,
                    q,
                    horizon,
                    points,
                    out: dir.display().to_string(),
                    threads,
                },
            )?;
            let crossing = match report.crossing_time {
                Some(t) => format!("crossing at t = {t:.4}"),
                None => "no crossing on the grid".to_string(),
            };
            Ok(format!(
                "hetero cross p={} q={}: leads initially = {}, {crossing} -> {}",
                pr.p,
                pr.q,
                report.initial_positive,
                json.display()
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// toy

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Constant,
    Geometric,
}

impl From<Rule> for ToyRule {
    fn from(r: Rule) -> ToyRule {
        match r {
            Rule::Constant => ToyRule::Constant,
            Rule::Geometric => ToyRule::Geometric,
        }
    }
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Coefficient rule of the ladder.
    #[arg(long, value_enum)]
    rule: Option<Rule>,
    /// Number of rungs before the u_{M+1} = 0 closure.
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToyFile {
    rule: Option<Rule>,
    #[serde(alias = "M")]
    m: Option<usize>,
    horizon: Option<f64>,
    points: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct ToyConfig {
    rule: Rule,
    m: usize,
    horizon: f64,
    points: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

pub fn run_toy(args: ToyArgs) -> Result<String> {
    let file: ToyFile = load_file(args.common.config.as_ref())?;
    let rule = require(args.rule.or(file.rule), "--rule")?;
    let m = require(args.m.or(file.m), "--M")?;
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let dir = out_dir(args.common.out, file.out)?;
    let horizon = args.horizon.or(file.horizon).unwrap_or(match rule {
        Rule::Constant => 5.0,
        Rule::Geometric => 1.0,
    });
    let points = args.points.or(file.points).unwrap_or(401);
    let grid = uniform_grid(horizon, points)?;
    let cfg = IntegratorConfig::default();
    let run = toy_embedding(rule.into(), m, &grid, &cfg)?;

    let mut names = vec!["t".to_string()];
    let mut owned: Vec<Vec<f64>> = Vec::new();
    for k in 1..=m {
        names.push(format!("u_{k}"));
    }
    for k in 1..=m {
        if let Some(reference) = run.reference(k) {
            names.push(format!("u_{k}_ref"));
            owned.push(reference);
        }
        if rule == Rule::Geometric {
            names.push(format!("u_{k}_cap"));
            owned.push(run.geometric_envelope(k));
        }
    }
    let mut series: Vec<&[f64]> = vec![&grid];
    for k in 1..=m {
        series.push(run.u(k)?);
    }
    for col in &owned {
        series.push(col);
    }
    let csv = dir.join("toy.csv");
    write_csv(&csv, &named_columns(&names, &series))?;
    write_manifest(
        &dir,
        "toy",
        &ToyConfig {
            rule,
            m,
            horizon,
            points,
            out: dir.display().to_string(),
            threads,
        },
    )?;
    let u1_final = *run.u(1)?.last().unwrap();
    let rule_name = match rule {
        Rule::Constant => "constant",
        Rule::Geometric => "geometric",
    };
    Ok(format!(
        "toy {rule_name} M={m}: u_1({horizon:.4}) = {u1_final:.6} -> {}",
        csv.display()
    ))
}

// ---------------------------------------------------------------------------
// bound

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundFamily {
    Complete,
    Circle,
    Both,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which embedded family's estimate to verify.
    #[arg(long, value_enum)]
    family: Option<BoundFamily>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Population sizes to verify.
    #[arg(long = "Ms", alias = "ms", value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    /// Weight exponents as fractions of the critical value.
    #[arg(long = "eps-fracs", value_delimiter = ',')]
    eps_fracs: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundFile {
    family: Option<BoundFamily>,
    p: Option<f64>,
    q: Option<f64>,
    #[serde(alias = "Ms")]
    ms: Option<Vec<usize>>,
    eps_fracs: Option<Vec<f64>>,
    horizon: Option<f64>,
    points: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct BoundConfig {
    family: BoundFamily,
    p: f64,
    q: f64,
    ms: Vec<usize>,
    eps_fracs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    points: usize,
    out: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

pub fn run_bound(args: BoundArgs) -> Result<String> {
    let file: BoundFile = load_file(args.common.config.as_ref())?;
    let family = args.family.or(file.family).unwrap_or(BoundFamily::Both);
    let threads = crate::init_workers(args.common.threads.or(file.threads))?;
    let dir = out_dir(args.common.out, file.out)?;
    let pr = BassParams::new(
        require(args.p.or(file.p), "--p")?,
        require(args.q.or(file.q), "--q")?,
    )?;
    let ms = args.ms.or(file.ms).unwrap_or(vec![4, 8, 16, 32, 64]);
    let eps_fracs = args
        .eps_fracs
        .or(file.eps_fracs)
        .unwrap_or(vec![0.25, 0.5, 0.75]);
    let points = args.points.or(file.points).unwrap_or(DEFAULT_POINTS);
    let horizon = args.horizon.or(file.horizon);
    let cfg = IntegratorConfig::default();
    let eps_tilde = (1.0 + pr.p / pr.q).ln();

    let families: &[EmbeddedFamily] = match family {
        BoundFamily::Complete => &[EmbeddedFamily::Complete],
        BoundFamily::Circle => &[EmbeddedFamily::Circle],
        BoundFamily::Both => &[EmbeddedFamily::Complete, EmbeddedFamily::Circle],
    };
    let mut reports: Vec<BoundReport> = Vec::new();
    for &fam in families {
        let t_end = match horizon {
            Some(h) => h,
            None => match fam {
                EmbeddedFamily::Complete => bass_horizon(&pr)?,
                EmbeddedFamily::Circle => circle_horizon(&pr)?,
            },
        };
        let grid = uniform_grid(t_end, points)?;
        for &m in &ms {
            for &frac in &eps_fracs {
                reports.push(verify_bound(fam, m, &pr, frac * eps_tilde, &grid, &cfg)?);
            }
        }
        let per_family: Vec<&BoundReport> = reports
            .iter()
            .filter(|r| r.family == fam)
            .collect();
        let name = match fam {
            EmbeddedFamily::Complete => "bounds_complete.csv",
            EmbeddedFamily::Circle => "bounds_circle.csv",
        };
        let cols: Vec<Vec<f64>> = vec![
            per_family.iter().map(|r| r.m as f64).collect(),
            per_family.iter().map(|r| r.eps).collect(),
            per_family.iter().map(|r| r.lhs).collect(),
            per_family.iter().map(|r| r.gap_exact).collect(),
            per_family.iter().map(|r| r.gap_analytic).collect(),
            per_family.iter().map(|r| r.rhs).collect(),
            per_family
                .iter()
                .map(|r| if r.passes { 1.0 } else { 0.0 })
                .collect(),
        ];
        write_csv(
            &dir.join(name),
            &[
                ("m", &cols[0]),
                ("eps", &cols[1]),
                ("lhs", &cols[2]),
                ("gap_exact", &cols[3]),
                ("gap_analytic", &cols[4]),
                ("rhs", &cols[5]),
                ("passes", &cols[6]),
            ],
        )?;
    }
    let json = dir.join("bounds.json");
    write_json(&json, &reports)?;
    write_manifest(
        &dir,
        "bound",
        &BoundConfig {
            family,
            p: pr.p,
            q: pr.q,
            ms,
            eps_fracs,
            horizon,
            points,
            out: dir.display().to_string(),
            threads,
        },
    )?;
    let failed = reports.iter().filter(|r| !r.passes).count();
    let total = reports.len();
    if failed > 0 {
        return Err(Error::Invariant(format!(
            "{failed}/{total} bound cases violated; reports in {}",
            json.display()
        )));
    }
    let margin = reports
        .iter()
        .filter(|r| r.lhs > 0.0)
        .map(|r| r.rhs / r.lhs)
        .fold(f64::INFINITY, f64::min);
    Ok(format!(
        "bound p={} q={}: {total}/{total} hold (min margin {margin:.1}x) -> {}",
        pr.p,
        pr.q,
        json.display()
    ))
}
