//! Command-line front end: `procure-lab <subcommand> [flags]`.
//!
//! Exit codes: 0 success, 1 input or domain error, 2 numerical failure,
//! 3 verification failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::alpha_par::{self, AlphaParam};
use crate::error::Error;
use crate::model::{price_of_anarchy, CostVector};
use crate::numerics::{lin_space, log_space};
use crate::tullock::{self, Budget};
use crate::verify::{self, UtilityFunctional};
use crate::{dsic, paid_as_bid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mechanism {
    Dsic,
    Tullock,
    Pab,
}

impl Mechanism {
    fn name(self) -> &'static str {
        match self {
            Mechanism::Dsic => "dsic",
            Mechanism::Tullock => "tullock",
            Mechanism::Pab => "pab",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Alpha,
    Budget,
    #[value(name = "C")]
    C,
}

#[derive(Debug, Parser)]
#[command(
    name = "procure-lab",
    version,
    about = "Procurement mechanism solvers and experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply the α-proportional allocation rule to a cost (bid) vector
    Allocate(Opts),
    /// Solve a mechanism: allocation, bids, payments and diagnostics
    Solve(Opts),
    /// Certify a bid vector as an equilibrium with a best-response oracle
    Verify(Opts),
    /// Write the dataset for figure 1-5 into the --out directory
    Figure {
        id: u8,
        #[command(flatten)]
        opts: Opts,
    },
    /// Sweep one parameter and print a table
    Sweep {
        #[arg(long)]
        param: SweepParam,
        /// lo:hi:steps
        #[arg(long)]
        range: String,
        /// Space sweep points logarithmically
        #[arg(long)]
        log: bool,
        #[command(flatten)]
        opts: Opts,
    },
    /// Worst-case social cost / price of anarchy for a mechanism
    WorstCase(Opts),
    /// Run the built-in check suite and print a pass/fail table
    Selftest(Opts),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    #[arg(long)]
    pub mechanism: Option<Mechanism>,
    /// Comma-separated costs
    #[arg(long)]
    pub costs: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// File of key=value lines; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated candidate bids (verify)
    #[arg(long)]
    pub bids: Option<String>,
    /// Number of agents
    #[arg(long)]
    pub n: Option<usize>,
    /// Largest cost ratio
    #[arg(long = "C")]
    pub big_c: Option<f64>,
    /// Grid points per coordinate (worst-case scans)
    #[arg(long)]
    pub grid: Option<usize>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DOMAIN
            },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Fully resolved settings: command-line flags over config-file values.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub mechanism: Option<Mechanism>,
    pub costs: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub budget: Option<f64>,
    pub tolerance: Option<f64>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub bids: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub big_c: Option<f64>,
    pub grid: Option<usize>,
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("cannot parse number '{}'", t.trim())))
        })
        .collect()
}

fn parse_value<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::input(format!("bad value for {key}: '{s}'")))
}

fn parse_enum<T: ValueEnum>(key: &str, s: &str) -> CliResult<T> {
    T::from_str(s.trim(), true).map_err(|_| CliError::input(format!("bad value for {key}: '{s}'")))
}

fn read_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::input(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    pub fn resolve(opts: &Opts) -> CliResult<Self> {
        let file = match &opts.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        for key in file.keys() {
            if !matches!(
                key.as_str(),
                "mechanism"
                    | "costs"
                    | "alpha"
                    | "budget"
                    | "tolerance"
                    | "format"
                    | "out"
                    | "seed"
                    | "bids"
                    | "n"
                    | "C"
                    | "grid"
            ) {
                return Err(CliError::input(format!("unknown config key '{key}'")));
            }
        }
        let get = |k: &str| file.get(k).map(String::as_str);

        let mechanism = match (opts.mechanism, get("mechanism")) {
            (Some(m), _) => Some(m),
            (None, Some(s)) => Some(parse_enum("mechanism", s)?),
            _ => None,
        };
        let format = match (opts.format, get("format")) {
            (Some(f), _) => f,
            (None, Some(s)) => parse_enum("format", s)?,
            _ => Format::Csv,
        };
        let list = |flag: &Option<String>, key: &str| -> CliResult<Option<Vec<f64>>> {
            match flag.as_deref().or(get(key)) {
                Some(s) => parse_list(s).map(Some),
                None => None.map(Ok).transpose(),
            }
        };
        macro_rules! scalar {
            ($flag:expr, $key:literal) => {
                match ($flag, get($key)) {
                    (Some(v), _) => Some(v),
                    (None, Some(s)) => Some(parse_value($key, s)?),
                    _ => None,
                }
            };
        }
        Ok(RunConfig {
            mechanism,
            costs: list(&opts.costs, "costs")?,
            alpha: scalar!(opts.alpha, "alpha"),
            budget: scalar!(opts.budget, "budget"),
            tolerance: scalar!(opts.tolerance, "tolerance"),
            format,
            out: opts.out.clone().or_else(|| get("out").map(PathBuf::from)),
            seed: scalar!(opts.seed, "seed").unwrap_or(0),
            bids: list(&opts.bids, "bids")?,
            n: scalar!(opts.n, "n"),
            big_c: scalar!(opts.big_c, "C"),
            grid: scalar!(opts.grid, "grid"),
        })
    }

    fn mechanism(&self) -> CliResult<Mechanism> {
        self.mechanism
            .ok_or_else(|| CliError::input("--mechanism is required"))
    }

    fn costs(&self) -> CliResult<CostVector> {
        let c = self
            .costs
            .clone()
            .ok_or_else(|| CliError::input("--costs is required"))?;
        Ok(CostVector::new(c)?)
    }

    fn alpha(&self) -> CliResult<f64> {
        self.alpha
            .ok_or_else(|| CliError::input("--alpha is required"))
    }

    fn budget(&self) -> CliResult<Budget> {
        let b = self
            .budget
            .ok_or_else(|| CliError::input("--budget is required"))?;
        Ok(Budget::new(b)?)
    }

    fn n(&self) -> CliResult<usize> {
        self.n.ok_or_else(|| CliError::input("--n is required"))
    }

    fn big_c(&self) -> CliResult<f64> {
        self.big_c.ok_or_else(|| CliError::input("--C is required"))
    }
}

/// A number with 9 significant digits; scientific notation outside `[1e-4, 1e9)`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0.00000000".into();
    }
    let a = v.abs();
    if !(1e-4..1e9).contains(&a) {
        return format!("{v:.8e}");
    }
    let exp = a.log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into the next decade, adding a digit
    let rounded: f64 = s.parse().unwrap_or(v);
    if rounded.abs() >= 10f64.powi(exp + 1) && decimals > 0 {
        let d = decimals - 1;
        return format!("{v:.d$}");
    }
    s
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_num(*v))
        .collect::<Vec<_>>()
        .join(",")
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Parses `lo:hi:steps` into sweep points.
pub fn parse_range(text: &str, log: bool) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::input(format!(
            "range must be lo:hi:steps, got '{text}'"
        )));
    }
    let lo: f64 = parse_value("range", parts[0])?;
    let hi: f64 = parse_value("range", parts[1])?;
    let steps: usize = parse_value("range", parts[2])?;
    if steps == 0 || !(lo <= hi) || (log && !(lo > 0.0)) {
        return Err(CliError::input(format!("invalid range '{text}'")));
    }
    Ok(if log {
        log_space(lo, hi, steps)
    } else {
        lin_space(lo, hi, steps)
    })
}

fn cmd_allocate(cfg: &RunConfig) -> CliResult<i32> {
    let costs = cfg.costs()?;
    let alpha = AlphaParam::new(cfg.alpha()?)?;
    let x = alpha_par::allocate(&costs.as_bids(), alpha);
    let text = match cfg.format {
        Format::Csv => format!("{}\n", join(x.shares())),
        Format::Json => to_json(&json!({ "costs": costs, "alpha": alpha, "allocation": x })),
    };
    emit(&text, cfg.out.as_deref())?;
    Ok(EXIT_OK)
}

struct Solved {
    json: Value,
    allocation: Vec<f64>,
    bids: Vec<f64>,
    payments: Vec<f64>,
    utilities: Vec<f64>,
    social_cost: f64,
    poa: f64,
}

fn solve(cfg: &RunConfig) -> CliResult<Solved> {
    let mechanism = cfg.mechanism()?;
    let costs = cfg.costs()?;
    let (param_key, param, outcome, bids, diagnostics) = match mechanism {
        Mechanism::Dsic => {
            let alpha = cfg.alpha()?;
            let a = AlphaParam::new(alpha)?;
            let bids = costs.as_bids();
            let outcome = dsic::outcome(&bids, &costs, a)?;
            let diag = json!({ "truthful": true, "closed_form_social_cost": dsic::social_cost_closed_form(&costs, a) });
            ("alpha", alpha, outcome, bids.bids().to_vec(), diag)
        }
        Mechanism::Tullock => {
            let budget = cfg.budget()?;
            let s = tullock::equilibrium(&costs, budget)?;
            let residual = (s.allocation.shares().iter().sum::<f64>() - 1.0).abs();
            let diag = json!({
                "v_star": s.v_star,
                "active_count": s.active_count,
                "iterations": s.prefixes_tested,
                "residuals": { "sum": residual },
                "poa_bound": tullock::poa_bound(&costs, budget).ok(),
            });
            ("budget", budget.value(), s.outcome, s.bids, diag)
        }
        Mechanism::Pab => {
            let alpha = cfg.alpha()?;
            let s = paid_as_bid::equilibrium(&costs, alpha)?;
            let diag = json!({
                "d_star": s.d_star,
                "iterations": s.iterations,
                "residuals": { "foc": s.residual_foc, "sum": s.residual_sum, "product_spread": s.product_spread },
            });
            ("alpha", alpha, s.outcome, s.bids, diag)
        }
    };
    let poa = price_of_anarchy(&costs, &outcome.allocation)?;
    let mut obj = json!({
        "mechanism": mechanism.name(),
        "costs": costs,
        "allocation": outcome.allocation,
        "bids": bids,
        "payments": outcome.payments,
        "utilities": outcome.utilities,
        "social_cost": outcome.social_cost,
        "poa": poa,
        "diagnostics": diagnostics,
    });
    obj[param_key] = json!(param);
    Ok(Solved {
        json: obj,
        allocation: outcome.allocation.shares().to_vec(),
        bids,
        payments: outcome.payments,
        utilities: outcome.utilities,
        social_cost: outcome.social_cost,
        poa,
    })
}

fn cmd_solve(cfg: &RunConfig) -> CliResult<i32> {
    let s = solve(cfg)?;
    let text = match cfg.format {
        Format::Json => to_json(&s.json),
        Format::Csv => {
            let costs = cfg.costs.as_deref().unwrap_or_default();
            let mut t = String::from("agent,cost,allocation,bid,payment,utility,social_cost,poa\n");
            for (i, c) in costs.iter().enumerate() {
                writeln!(
                    t,
                    "{i},{}",
                    join(&[
                        *c,
                        s.allocation[i],
                        s.bids[i],
                        s.payments[i],
                        s.utilities[i],
                        s.social_cost,
                        s.poa
                    ])
                )
                .unwrap();
            }
            t
        }
    };
    emit(&text, cfg.out.as_deref())?;
    Ok(EXIT_OK)
}

fn cmd_verify(cfg: &RunConfig) -> CliResult<i32> {
    let mechanism = cfg.mechanism()?;
    let costs = cfg.costs()?;
    let tolerance = cfg.tolerance.unwrap_or(1e-6);
    let u = match mechanism {
        Mechanism::Dsic => UtilityFunctional::dsic(cfg.alpha()?)?,
        Mechanism::Tullock => UtilityFunctional::Tullock {
            budget: cfg.budget()?,
        },
        Mechanism::Pab => UtilityFunctional::paid_as_bid(cfg.alpha()?)?,
    };
    let bids = match &cfg.bids {
        Some(b) => b.clone(),
        None => solve(cfg)?.bids,
    };
    let report = verify::check_pne(&u, &bids, &costs, tolerance)?;
    let text = match cfg.format {
        Format::Json => to_json(&serde_json::to_value(&report).expect("report serializes")),
        Format::Csv => {
            let mut t = String::from(
                "agent,tested_bid,best_bid,tested_utility,best_utility,relative_gap,pass\n",
            );
            for r in &report.agents {
                writeln!(
                    t,
                    "{},{},{}",
                    r.agent,
                    join(&[
                        r.tested_bid,
                        r.best_bid,
                        r.tested_utility,
                        r.best_utility,
                        r.relative_gap
                    ]),
                    if r.relative_gap <= tolerance {
                        "PASS"
                    } else {
                        "FAIL"
                    }
                )
                .unwrap();
            }
            t
        }
    };
    emit(&text, cfg.out.as_deref())?;
    eprintln!("{}", if report.pass { "PASS" } else { "FAIL" });
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY })
}

/// A CSV table whose rows were computed independently; failed rows carry
/// NaN fields and a message in the trailing `error` column.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<std::result::Result<Vec<f64>, String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_err()).count()
    }

    pub fn render(&self) -> String {
        let width = self.header.len();
        let mut t = self.header.join(",");
        t.push_str(",error\n");
        for row in &self.rows {
            match row {
                Ok(values) => {
                    t.push_str(&join(values));
                    t.push_str(",\n");
                }
                Err(msg) => {
                    t.push_str(&vec!["nan"; width].join(","));
                    writeln!(t, ",{}", sanitize(msg)).unwrap();
                }
            }
        }
        t
    }

    pub fn render_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                match row {
                    Ok(values) => {
                        for (k, v) in self.header.iter().zip(values) {
                            obj.insert(k.clone(), json!(v));
                        }
                    }
                    Err(msg) => {
                        obj.insert("error".into(), json!(msg));
                    }
                }
                Value::Object(obj)
            })
            .collect();
        json!({ "columns": self.header, "rows": rows })
    }
}

fn collect_rows<P, F>(points: Vec<P>, f: F) -> Vec<std::result::Result<Vec<f64>, String>>
where
    P: Send + Sync,
    F: Fn(&P) -> crate::Result<Vec<f64>> + Send + Sync,
{
    points
        .par_iter()
        .map(|p| f(p).map_err(|e| e.to_string()))
        .collect()
}

fn two_costs(c2: f64) -> crate::Result<CostVector> {
    CostVector::new(vec![1.0, c2])
}

/// Datasets behind figures 1-5, as (file name, table).
pub fn figure_table(id: u8, budget: f64) -> CliResult<(String, Table)> {
    let table = match id {
        1 => {
            let mut t = Table::new(&["alpha", "c2", "x1", "x2", "social_cost"]);
            let points: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
                .iter()
                .flat_map(|&a| log_space(1.0, 10.0, 200).into_iter().map(move |c2| (a, c2)))
                .collect();
            t.rows = collect_rows(points, |&(a, c2)| {
                let c = two_costs(c2)?;
                let x = alpha_par::allocate(&c.as_bids(), AlphaParam::new(a)?);
                let sc = crate::model::social_cost(&c, &x)?;
                Ok(vec![a, c2, x.shares()[0], x.shares()[1], sc])
            });
            t
        }
        2 => {
            let b = Budget::new(budget)?;
            if budget <= 1.0 {
                return Err(CliError::input("figure 2 needs a budget above 1"));
            }
            let mut t = Table::new(&["n", "c2", "x2", "social_cost"]);
            let points: Vec<(usize, f64)> = [2usize, 4, 8]
                .iter()
                .flat_map(|&n| (0..200).map(move |k| (n, 1.0 + (budget - 1.0) * k as f64 / 200.0)))
                .collect();
            t.rows = collect_rows(points, |&(n, c2)| {
                let mut c = vec![c2; n];
                c[0] = 1.0;
                let s = tullock::equilibrium(&CostVector::new(c)?, b)?;
                Ok(vec![
                    n as f64,
                    c2,
                    s.allocation.shares()[1],
                    s.outcome.social_cost,
                ])
            });
            t
        }
        3 => {
            let mut t = Table::new(&[
                "c2",
                "honest_b1",
                "honest_b2",
                "honest_x1",
                "honest_x2",
                "equilibrium_b1",
                "equilibrium_b2",
                "equilibrium_x1",
                "equilibrium_x2",
            ]);
            let alpha = 5.0;
            t.rows = collect_rows(log_space(1.0, 1000.0, 200), |&c2| {
                let c = two_costs(c2)?;
                let honest = alpha_par::allocate(&c.as_bids(), AlphaParam::new(alpha)?);
                let s = paid_as_bid::equilibrium(&c, alpha)?;
                let x = s.allocation.shares();
                Ok(vec![
                    c2,
                    1.0,
                    c2,
                    honest.shares()[0],
                    honest.shares()[1],
                    s.bids[0],
                    s.bids[1],
                    x[0],
                    x[1],
                ])
            });
            t
        }
        4 => {
            let mut t = Table::new(&[
                "alpha",
                "c2",
                "x1",
                "x2",
                "social_cost",
                "one_over_alpha",
                "one_minus_one_over_alpha",
            ]);
            let points: Vec<(f64, f64)> = [2.5, 3.0, 5.0]
                .iter()
                .flat_map(|&a| {
                    log_space(1.0, 100.0, 200)
                        .into_iter()
                        .map(move |c2| (a, c2))
                })
                .collect();
            t.rows = collect_rows(points, |&(a, c2)| {
                let s = paid_as_bid::equilibrium(&two_costs(c2)?, a)?;
                let x = s.allocation.shares();
                Ok(vec![
                    a,
                    c2,
                    x[0],
                    x[1],
                    s.outcome.social_cost,
                    1.0 / a,
                    1.0 - 1.0 / a,
                ])
            });
            t
        }
        5 => {
            let alpha = 4.0;
            let mut t = Table::new(&["n", "C", "poa", "upper_C", "lower_C_over_alpha"]);
            let points: Vec<(usize, f64)> = [2usize, 4, 8, 16]
                .iter()
                .flat_map(|&n| (0..=90).map(move |k| (n, 1.0 + k as f64 / 10.0)))
                .collect();
            t.rows = collect_rows(points, |&(n, big_c)| {
                let mut c = vec![big_c; n];
                c[0] = 1.0;
                let p = paid_as_bid::poa(&CostVector::new(c)?, alpha)?;
                Ok(vec![n as f64, big_c, p, big_c, big_c / alpha])
            });
            t
        }
        _ => {
            return Err(CliError::input(format!(
                "unknown figure id {id} (expected 1-5)"
            )))
        }
    };
    Ok((format!("fig{id}.csv"), table))
}

fn cmd_figure(id: u8, cfg: &RunConfig) -> CliResult<i32> {
    let (name, table) = figure_table(id, cfg.budget.unwrap_or(5.0))?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let path = dir.join(name);
    fs::write(&path, table.render())?;
    let failed = table.failures();
    if failed > 0 {
        eprintln!("{}: {failed} point(s) failed", path.display());
        return Ok(EXIT_NUMERICAL);
    }
    eprintln!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn sweep_table(
    mechanism: Mechanism,
    param: SweepParam,
    points: Vec<f64>,
    cfg: &RunConfig,
) -> CliResult<Table> {
    let numbered =
        |prefix: &str, n: usize| (1..=n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    match (mechanism, param) {
        (Mechanism::Tullock, SweepParam::Budget) => {
            let costs = cfg.costs()?;
            let mut header = vec!["budget".to_string()];
            header.extend(numbered("x", costs.len()));
            header.extend(["social_cost", "poa", "poa_bound"].map(String::from));
            let rows = tullock::budget_sweep(&costs, &points)
                .into_iter()
                .map(|r| {
                    r.map(|row| {
                        let mut v = vec![row.budget];
                        v.extend_from_slice(row.allocation.shares());
                        v.extend([row.social_cost, row.poa, row.poa_bound]);
                        v
                    })
                    .map_err(|e| e.to_string())
                })
                .collect();
            Ok(Table { header, rows })
        }
        (Mechanism::Dsic, SweepParam::Alpha) => {
            let n = cfg.n.unwrap_or(2);
            let mut t = Table::new(&["n", "alpha", "r_star", "worst_case_social_cost", "bound"]);
            t.rows = collect_rows(points, |&a| {
                let w = dsic::worst_case_social_cost(n, AlphaParam::new(a)?)?;
                Ok(vec![
                    n as f64,
                    a,
                    w.r_star,
                    w.worst_social_cost,
                    w.upper_bound,
                ])
            });
            Ok(t)
        }
        (Mechanism::Pab, SweepParam::C) => {
            let n = cfg.n()?;
            let alpha = cfg.alpha()?;
            let mut t = Table::new(&["n", "C", "poa"]);
            t.rows = collect_rows(points, |&big_c| {
                let mut c = vec![big_c; n];
                c[0] = 1.0;
                Ok(vec![
                    n as f64,
                    big_c,
                    paid_as_bid::poa(&CostVector::new(c)?, alpha)?,
                ])
            });
            Ok(t)
        }
        (Mechanism::Pab, SweepParam::Alpha) => {
            let costs = cfg.costs()?;
            let mut header = vec!["alpha".to_string()];
            header.extend(numbered("x", costs.len()));
            header.extend(numbered("b", costs.len()));
            header.extend(["social_cost", "poa"].map(String::from));
            let rows = collect_rows(points, |&a| {
                let s = paid_as_bid::equilibrium(&costs, a)?;
                let mut v = vec![a];
                v.extend_from_slice(s.allocation.shares());
                v.extend_from_slice(&s.bids);
                v.extend([
                    s.outcome.social_cost,
                    price_of_anarchy(&costs, &s.allocation)?,
                ]);
                Ok(v)
            });
            Ok(Table { header, rows })
        }
        (m, p) => Err(CliError::input(format!(
            "no sweep over {p:?} for mechanism {}",
            m.name()
        ))),
    }
}

fn cmd_sweep(param: SweepParam, range: &str, log: bool, cfg: &RunConfig) -> CliResult<i32> {
    let points = parse_range(range, log)?;
    let table = sweep_table(cfg.mechanism()?, param, points, cfg)?;
    let text = match cfg.format {
        Format::Csv => table.render(),
        Format::Json => to_json(&table.render_json()),
    };
    emit(&text, cfg.out.as_deref())?;
    Ok(if table.failures() > 0 {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    })
}

fn cmd_worst_case(cfg: &RunConfig) -> CliResult<i32> {
    let value = match cfg.mechanism()? {
        Mechanism::Dsic => {
            let n = cfg.n()?;
            let a = AlphaParam::new(cfg.alpha()?)?;
            let w = dsic::worst_case_social_cost(n, a)?;
            let scan = match cfg.grid {
                Some(g) => Some(dsic::worst_case_scan(
                    n,
                    a,
                    &log_space(1.0, cfg.big_c.unwrap_or(5.0), g),
                )?),
                None => None,
            };
            json!({ "mechanism": "dsic", "worst_case": w, "scan": scan })
        }
        Mechanism::Pab => {
            let s = paid_as_bid::worst_case_scan(
                cfg.n()?,
                cfg.big_c()?,
                cfg.alpha()?,
                cfg.grid.unwrap_or(15),
            )?;
            json!({ "mechanism": "pab", "scan": s, "corner_dominates": s.corner_dominates() })
        }
        Mechanism::Tullock => {
            let costs = cfg.costs()?;
            let budget = cfg.budget()?;
            let s = tullock::equilibrium(&costs, budget)?;
            json!({
                "mechanism": "tullock",
                "poa": price_of_anarchy(&costs, &s.allocation)?,
                "poa_bound": tullock::poa_bound(&costs, budget)?,
            })
        }
    };
    let text = match cfg.format {
        Format::Json => to_json(&value),
        Format::Csv => flatten_csv(&value),
    };
    emit(&text, cfg.out.as_deref())?;
    Ok(EXIT_OK)
}

/// Two-line CSV of the scalar leaves of a JSON object; arrays are joined with `;`.
fn flatten_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, keys: &mut Vec<String>, vals: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, x, keys, vals);
                }
            }
            Value::Array(a) => {
                keys.push(prefix.to_string());
                vals.push(
                    a.iter()
                        .map(|x| x.as_f64().map(fmt_num).unwrap_or_else(|| x.to_string()))
                        .collect::<Vec<_>>()
                        .join(";"),
                );
            }
            Value::Null => {}
            Value::Number(n) => {
                keys.push(prefix.to_string());
                vals.push(if n.is_f64() {
                    fmt_num(n.as_f64().unwrap_or(f64::NAN))
                } else {
                    n.to_string()
                });
            }
            Value::Bool(b) => {
                keys.push(prefix.to_string());
                vals.push(b.to_string());
            }
            Value::String(s) => {
                keys.push(prefix.to_string());
                vals.push(sanitize(s));
            }
        }
    }
    let (mut keys, mut vals) = (Vec::new(), Vec::new());
    walk("", v, &mut keys, &mut vals);
    format!("{}\n{}\n", keys.join(","), vals.join(","))
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> crate::Result<(bool, String)>) -> Check {
    match run() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn selftest_checks(seed: u64) -> Vec<Check> {
    let c = |v: &[f64]| CostVector::new(v.to_vec());
    vec![
        check("dsic worst-case bound grid", || {
            let mut worst_slack = f64::INFINITY;
            for n in [2, 4, 8, 16] {
                for a in [1.5, 2.0, 3.0, 4.0, 5.0] {
                    let w = dsic::worst_case_social_cost(n, AlphaParam::new(a)?)?;
                    worst_slack = worst_slack.min(w.upper_bound - w.worst_social_cost);
                }
            }
            Ok((
                worst_slack >= -1e-9,
                format!("min slack {}", fmt_num(worst_slack)),
            ))
        }),
        check("alpha-PAR minimizes scaled cost", || {
            let mut gap: f64 = 0.0;
            for costs in [[1.0, 2.0, 4.0], [3.0, 1.5, 2.5], [4.5, 4.0, 1.0]] {
                for a in [1.0, 2.0, 4.0] {
                    let r = alpha_par::verify_optimality(&c(&costs)?, AlphaParam::new(a)?, 0.01)?;
                    gap = gap.max(r.max_coord_gap);
                }
            }
            Ok((gap <= 0.01, format!("max gap {}", fmt_num(gap))))
        }),
        check("myerson payment matches arctan form", || {
            let b = crate::model::BidVector::new(vec![1.0, 2.0])?;
            let p = dsic::myerson_payment(0, &b, AlphaParam::new(2.0)?)?;
            let d: f64 = 0.25;
            let exact = 0.8 + (std::f64::consts::FRAC_PI_2 - (d.sqrt()).atan()) / d.sqrt();
            Ok((
                (p - exact).abs() <= 1e-8 * exact,
                format!("payment {}", fmt_num(p)),
            ))
        }),
        check("dsic truthful bidding is a best response", || {
            let u = UtilityFunctional::dsic(2.5)?;
            let r = verify::check_pne(&u, &[1.0, 1.7, 3.0], &c(&[1.0, 1.7, 3.0])?, 1e-5)?;
            Ok((r.pass, format!("max gap {}", fmt_num(r.max_gap()))))
        }),
        check("tullock equilibrium certified", || {
            let costs = c(&[1.0, 3.0])?;
            let s = tullock::equilibrium(&costs, Budget::new(5.0)?)?;
            let r = verify::check_pne(&UtilityFunctional::tullock(5.0)?, &s.bids, &costs, 1e-6)?;
            let exact = (s.v_star - 4.0 / 3.0).abs() <= 1e-10;
            Ok((r.pass && exact, format!("v* {}", fmt_num(s.v_star))))
        }),
        check("tullock large-budget limit", || {
            let s = tullock::equilibrium(&c(&[1.0, 2.0, 3.0])?, Budget::new(1e6)?)?;
            let dev = s
                .allocation
                .shares()
                .iter()
                .map(|x| (x - 1.0 / 3.0).abs())
                .fold(0.0, f64::max);
            Ok((dev <= 1e-4, format!("max deviation {}", fmt_num(dev))))
        }),
        check("paid-as-bid equilibrium certified", || {
            let costs = c(&[1.0, 1.5, 2.0])?;
            let s = paid_as_bid::equilibrium(&costs, 3.0)?;
            let r =
                verify::check_pne(&UtilityFunctional::paid_as_bid(3.0)?, &s.bids, &costs, 1e-6)?;
            Ok((
                r.pass && s.residual_foc <= 1e-9,
                format!("foc residual {}", fmt_num(s.residual_foc)),
            ))
        }),
        check("paid-as-bid poa <= 1.4 (n=16, C=2, alpha=4)", || {
            let mut v = vec![2.0; 16];
            v[0] = 1.0;
            let p = paid_as_bid::poa(&c(&v)?, 4.0)?;
            Ok(((1.0..=1.4).contains(&p), format!("poa {}", fmt_num(p))))
        }),
        check("paid-as-bid corner dominates scan", || {
            let s = paid_as_bid::worst_case_scan(3, 3.0, 4.0, 10)?;
            Ok((
                s.corner_dominates(),
                format!("corner poa {}", fmt_num(s.corner_poa)),
            ))
        }),
        check("psi decreasing, phi minimum", || {
            let mut ok = true;
            for a in [2.0, 3.0, 4.0, 5.0] {
                let xs = lin_space(0.01, 1.0 - 1.0 / a - 0.01, 200);
                let ps = xs
                    .iter()
                    .map(|x| paid_as_bid::psi(*x, a))
                    .collect::<crate::Result<Vec<_>>>()?;
                ok &= ps.windows(2).all(|w| w[1] < w[0]);
                let (a_star, min) = paid_as_bid::phi_min(a)?;
                ok &= (paid_as_bid::phi(a_star, a)? - min).abs() <= 1e-9;
            }
            Ok((ok, String::new()))
        }),
        check("sybil experiments", || {
            let d = dsic::sybil_counterexample(&c(&[1.0, 2.0])?, AlphaParam::new(2.0)?, 2)?;
            let t = tullock::sybil_equivalence(1.0, Budget::new(5.0)?, &[0.3, 0.2, 0.5], 1.5)?;
            Ok((
                d.sybil_gains() && t.equal(),
                format!("sybil share {}", fmt_num(d.sybil_alloc)),
            ))
        }),
        check("ex-post safety", || {
            let pab = verify::ex_post_safety_check(
                &UtilityFunctional::paid_as_bid(5.0)?,
                1.0,
                1000,
                seed,
            )?;
            let tul =
                verify::ex_post_safety_check(&UtilityFunctional::tullock(5.0)?, 1.0, 1000, seed)?;
            Ok((
                pab.safe() && !tul.safe(),
                format!(
                    "tullock violation fraction {}",
                    fmt_num(tul.violation_fraction)
                ),
            ))
        }),
    ]
}

fn cmd_selftest(cfg: &RunConfig) -> CliResult<i32> {
    let checks = selftest_checks(cfg.seed);
    let mut t = String::new();
    for ch in &checks {
        writeln!(
            t,
            "{}  {}  {}",
            if ch.pass { "PASS" } else { "FAIL" },
            ch.name,
            ch.detail
        )
        .unwrap();
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    writeln!(t, "{} passed, {failed} failed", checks.len() - failed).unwrap();
    emit(&t, cfg.out.as_deref())?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Allocate(o) => cmd_allocate(&RunConfig::resolve(&o)?),
        Command::Solve(o) => cmd_solve(&RunConfig::resolve(&o)?),
        Command::Verify(o) => cmd_verify(&RunConfig::resolve(&o)?),
        Command::Figure { id, opts } => cmd_figure(id, &RunConfig::resolve(&opts)?),
        Command::Sweep {
            param,
            range,
            log,
            opts,
        } => cmd_sweep(param, &range, log, &RunConfig::resolve(&opts)?),
        Command::WorstCase(o) => cmd_worst_case(&RunConfig::resolve(&o)?),
        Command::Selftest(o) => cmd_selftest(&RunConfig::resolve(&o)?),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_DOMAIN } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
