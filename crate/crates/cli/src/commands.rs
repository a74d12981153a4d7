use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rl2ml::coefficients::{CoefficientTable, GammaConfig};
use rl2ml::frontier::{frontier_sweep, FrontierResult};
use rl2ml::objective::{weight_limit, WeightPolynomial};
use rl2ml::selection::{
    counts_to_ks, read_counts, select_gamma_from_counts, write_counts, CountRecord, Metric,
    SelectionConfig, SelectionResult,
};
use rl2ml::simulator::{sample_success_counts, simulate as run_simulation, SimulationRow, SyntheticPolicy};

use crate::config::{parse_list, require, ConfigFile, Layer};
use crate::format::{g17, Csv};
use crate::{CliError, FrontierArgs, SelectArgs, SimulateArgs, TableArgs, WeightsArgs};

/// Logits of the built-in 8-state policy (success probability ≈ 0.298).
pub const DEFAULT_LOGITS: [f64; 8] = [0.2, 0.1, 0.0, -0.4, 0.5, 0.1, -0.3, 0.3];
pub const DEFAULT_CORRECT: [usize; 3] = [0, 3, 6];
pub const DEFAULT_SIM_GAMMAS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_WEIGHT_POINTS: usize = 101;

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes to `out` if given, otherwise hands the text back for stdout.
fn emit(out: Option<&Path>, text: String) -> Result<String, CliError> {
    match out {
        Some(path) => write_file(path, &text).map(|_| String::new()),
        None => Ok(text),
    }
}

pub fn table_csv(gamma: f64, n: usize, m: Option<usize>) -> Result<String, CliError> {
    let config = match m {
        Some(m) => GammaConfig::triad(gamma, m, n)?,
        None => GammaConfig::new(gamma, n)?,
    };
    let table = CoefficientTable::new(config);
    let mut csv = Csv::new(&["K", "beta", "alpha"]);
    for k in 1..=n {
        csv.row([k.to_string(), g17(table.beta(k)), g17(table.alpha(k))]);
    }
    Ok(csv.finish())
}

pub fn table(args: TableArgs, file: Option<&ConfigFile>) -> Result<String, CliError> {
    let l = Layer::new(file, "table");
    let gamma = require(l.f64(args.gamma, "gamma")?, "gamma")?;
    let n = require(l.uint(args.n, "n")?, "n")?;
    let m = l.uint(args.m, "m")?;
    let out = l.path(args.out, "out")?;
    emit(out.as_deref(), table_csv(gamma, n, m)?)
}

pub fn weights_csv(gamma: f64, n: usize, ps: &[f64]) -> Result<String, CliError> {
    if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Config(format!("p = {p} is outside [0, 1]")));
    }
    let poly = WeightPolynomial::new(gamma, n)?;
    let mut csv = Csv::new(&["p", "w", "dw", "ddw", "w_limit"]);
    for p in ps {
        let ev = poly.eval(*p);
        let (dw, ddw) = match ev.derivs() {
            Ok(d) => (g17(d.dw), g17(d.ddw)),
            Err(_) => (String::new(), String::new()),
        };
        csv.row([g17(*p), g17(ev.w), dw, ddw, g17(weight_limit(gamma, *p))]);
    }
    Ok(csv.finish())
}

fn unit_grid(points: usize) -> Result<Vec<f64>, CliError> {
    match points {
        0 => Ok(Vec::new()),
        1 => Err(CliError::Config("--points must be 0 or at least 2".into())),
        _ => Ok((0..points).map(|i| i as f64 / (points - 1) as f64).collect()),
    }
}

pub fn weights(args: WeightsArgs, file: Option<&ConfigFile>) -> Result<String, CliError> {
    let l = Layer::new(file, "weights");
    let gamma = require(l.f64(args.gamma, "gamma")?, "gamma")?;
    let n = require(l.uint(args.n, "n")?, "n")?;
    let ps = match l.list::<f64>(args.p, "p")? {
        Some(ps) => ps,
        None => unit_grid(l.uint(args.points, "points")?.unwrap_or(DEFAULT_WEIGHT_POINTS))?,
    };
    let out = l.path(args.out, "out")?;
    emit(out.as_deref(), weights_csv(gamma, n, &ps)?)
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "",
    }
}

pub fn simulation_csv(rows: &[SimulationRow]) -> String {
    let mut csv = Csv::new(&[
        "gamma",
        "n",
        "mode",
        "trials",
        "mean_error_norm",
        "ci_radius",
        "max_abs_z",
        "empirical_trace",
        "count_term",
        "within_term",
        "mean_flag",
        "trace_flag",
    ]);
    for r in rows {
        csv.row([
            g17(r.gamma),
            r.n.to_string(),
            r.mode.to_string(),
            r.trials.to_string(),
            g17(r.mean_error_norm),
            g17(r.ci_radius),
            g17(r.max_abs_z),
            g17(r.empirical_trace),
            g17(r.count_term),
            g17(r.within_term),
            flag(r.mean_pass).into(),
            flag(r.trace_pass).into(),
        ]);
    }
    csv.finish()
}

/// Counts-file records for per-trial success counts, one prompt id per trial.
pub fn trial_records(ks: &[usize], n: usize) -> Vec<CountRecord> {
    ks.iter()
        .enumerate()
        .map(|(t, k)| CountRecord {
            prompt_id: format!("t{t}"),
            k: *k,
            n,
        })
        .collect()
}

pub fn build_policy(logits: Option<Vec<f64>>, correct: Option<Vec<usize>>) -> Result<SyntheticPolicy, CliError> {
    let logits = logits.unwrap_or_else(|| DEFAULT_LOGITS.to_vec());
    let correct = correct.unwrap_or_else(|| DEFAULT_CORRECT.to_vec());
    let mut mask = vec![false; logits.len()];
    for z in correct {
        *mask.get_mut(z).ok_or_else(|| {
            CliError::Config(format!("correct state {z} is out of range for {} logits", logits.len()))
        })? = true;
    }
    Ok(SyntheticPolicy::new(logits, mask)?)
}

pub fn simulate(args: SimulateArgs, file: Option<&ConfigFile>) -> Result<String, CliError> {
    let l = Layer::new(file, "simulate");
    let gammas = l.list::<f64>(args.gamma, "gamma")?.unwrap_or_else(|| DEFAULT_SIM_GAMMAS.to_vec());
    let n = require(l.uint(args.n, "n")?, "n")?;
    let trials = l.uint(args.trials, "trials")?.unwrap_or(DEFAULT_TRIALS);
    let seed = l.uint(args.seed, "seed")?.unwrap_or(0);
    let policy = build_policy(l.list(args.logits, "logits")?, l.list(args.correct, "correct")?)?;
    let out = l.path(args.out, "out")?;
    let counts_out = l.path(args.counts_out, "counts_out")?;
    if trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    if n == 0 {
        return Err(CliError::Config("n must be at least 1".into()));
    }
    let rows = run_simulation(&policy, &gammas, n, trials, seed)?;
    if let Some(path) = counts_out {
        let ks = sample_success_counts(&policy, n, trials, seed);
        let mut buf = Vec::new();
        write_counts(&mut buf, &trial_records(&ks, n))?;
        write_file(&path, std::str::from_utf8(&buf).expect("counts are ASCII"))?;
    }
    emit(out.as_deref(), simulation_csv(&rows))
}

pub fn selection_trace_csv(result: &SelectionResult) -> String {
    let mut csv = Csv::new(&["gamma", "U", "R", "objective"]);
    for t in &result.trace {
        csv.row([g17(t.gamma), g17(t.u), g17(t.r), g17(t.objective)]);
    }
    csv.finish()
}

pub fn summary_line(result: &SelectionResult) -> String {
    format!(
        "gamma_star={} chosen_by={} objective={}\n",
        g17(result.gamma_star),
        result.chosen_by.as_str(),
        g17(result.objective_star)
    )
}

pub fn load_counts(path: &Path) -> Result<Vec<CountRecord>, CliError> {
    let f = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(read_counts(BufReader::new(f))?)
}

pub fn select(args: SelectArgs, file: Option<&ConfigFile>) -> Result<String, CliError> {
    let l = Layer::new(file, "select");
    let counts_path = require(l.path(args.counts, "counts")?, "counts")?;
    let lambda = require(l.f64(args.lambda_var, "lambda_var")?, "lambda_var")?;
    let records = load_counts(&counts_path)?;
    let (n, ks) = counts_to_ks(&records)?;
    if let Some(want) = l.uint::<usize>(args.n, "n")? {
        if want != n {
            return Err(CliError::Config(format!("--n {want} does not match N = {n} in the counts file")));
        }
    }
    let mut config = SelectionConfig::new(n, lambda);
    if let Some(m) = l.string(args.metric, "metric")? {
        config.metric = m.parse::<Metric>()?;
    }
    config.gamma_min = l.f64(args.gamma_min, "gamma_min")?.unwrap_or(config.gamma_min);
    config.gamma_max = l.f64(args.gamma_max, "gamma_max")?.unwrap_or(config.gamma_max);
    config.grid_points = l.uint(args.grid_points, "grid_points")?.unwrap_or(config.grid_points);
    config.newton_iters = l.uint(args.newton_iters, "newton_iters")?.unwrap_or(config.newton_iters);
    config.gamma_init = l.f64(args.gamma_init, "gamma_init")?.unwrap_or(config.gamma_init);
    config.a = l.f64(args.a, "a")?.unwrap_or(config.a);
    config.b = l.f64(args.b, "b")?.unwrap_or(config.b);
    let result = select_gamma_from_counts(&ks, &config)?;
    if let Some(path) = l.path(args.out, "out")? {
        write_file(&path, &selection_trace_csv(&result))?;
    }
    Ok(summary_line(&result))
}

pub fn frontier_csv(rows: &[(f64, FrontierResult)]) -> String {
    let mut csv = Csv::new(&["gamma", "m_need", "m_cap_exact", "m_cap_approx", "feasible"]);
    for (g, r) in rows {
        csv.row([
            g17(*g),
            r.m_need.to_string(),
            r.m_cap_exact.to_string(),
            r.m_cap_approx.to_string(),
            r.feasible.to_string(),
        ]);
    }
    csv.finish()
}

pub fn frontier(args: FrontierArgs, file: Option<&ConfigFile>) -> Result<String, CliError> {
    let l = Layer::new(file, "frontier");
    let gammas: Vec<f64> = match args.gamma {
        Some(text) => parse_list(&text, "gamma")?,
        None => require(l.list(None, "gamma")?, "gamma")?,
    };
    let n = require(l.uint(args.n, "n")?, "n")?;
    let p_min = require(l.f64(args.p_min, "p_min")?, "p_min")?;
    let delta = require(l.f64(args.delta, "delta")?, "delta")?;
    let a_max = require(l.f64(args.a_max, "a_max")?, "a_max")?;
    let out = l.path(args.out, "out")?;
    let rows = frontier_sweep(&gammas, n, p_min, delta, a_max)?;
    emit(out.as_deref(), frontier_csv(&rows))
}
