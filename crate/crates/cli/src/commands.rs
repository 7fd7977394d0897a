use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::CommandFactory;
use ecga_core::engine::{run_observed, Algorithm, RunConfig, DEFAULT_TOURNAMENT_SIZE};
use ecga_core::facetwise::{
    fe_ratio, predicted_convergence_time, predicted_nfe_inheritance, predicted_nfe_mutation,
    predicted_population_size, scaling_bounds_mutation, speedup_inheritance, speedup_mutation,
    FacetwiseParams,
};
use ecga_core::harness::{
    bisect_population_size, sweep_inheritance, sweep_mutation_scaling, write_bisection_csv,
    write_fit_csv, BisectionSpec, Executor, SweepSettings,
};
use ecga_core::{InheritanceSampling, MarginalProductModel, ProblemSpec};
use serde::Serialize;

use crate::cli::{
    AlgorithmArgs, BisectArgs, BisectionArgs, Cli, Command, PredictArgs, RunArgs, SweepMArgs,
    SweepPiArgs,
};
use crate::config::{parse_grid, parse_int_grid, Settings};
use crate::CliError;

const DEFAULT_PROBLEM: &str = "onemax:100";
const DEFAULT_SEED: u64 = 1;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Bisect(a) => bisect(a),
        Command::SweepPi(a) => sweep_pi(a),
        Command::SweepM(a) => sweep_m(a),
        Command::Predict(a) => predict(a),
    }
}

/// Long flag names of a subcommand, minus `config` itself.
fn config_keys(subcommand: &str) -> BTreeSet<String> {
    let root = Cli::command();
    let sub = root
        .find_subcommand(subcommand)
        .expect("subcommand is registered");
    sub.get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|l| *l != "config" && *l != "help")
        .map(str::to_string)
        .collect()
}

fn problem_spec(settings: &Settings, flag: Option<String>) -> Result<ProblemSpec, CliError> {
    let text = settings.get(flag, "problem", DEFAULT_PROBLEM.to_string())?;
    text.parse()
        .map_err(|e| CliError::Usage(format!("problem `{text}`: {e}")))
}

fn run_config(settings: &Settings, a: AlgorithmArgs, n: usize, seed: u64) -> Result<RunConfig, CliError> {
    let problem = problem_spec(settings, a.problem)?;
    let p_i = settings.get(a.p_i, "p-i", 0.0)?;
    let algorithm = match settings.opt::<String>(a.algo, "algo")? {
        Some(name) => name.parse::<Algorithm>().map_err(|e| CliError::Usage(e.to_string()))?,
        None if p_i > 0.0 => Algorithm::EcgaInheritance,
        None => Algorithm::Ecga,
    };
    let sampling: InheritanceSampling = settings
        .get(a.sampling, "sampling", "bernoulli".to_string())?
        .parse()
        .map_err(|e: ecga_core::Error| CliError::Usage(e.to_string()))?;
    let mut cfg = RunConfig::new(problem, algorithm, n)
        .with_inheritance(p_i)
        .with_tournament_size(settings.get(a.s, "s", DEFAULT_TOURNAMENT_SIZE)?)
        .with_seed(seed);
    cfg.inheritance_sampling = sampling;
    cfg.max_generations = settings.opt(a.max_gens, "max-gens")?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn bisection_spec(settings: &Settings, a: BisectionArgs) -> Result<BisectionSpec, CliError> {
    let d = BisectionSpec::default();
    let spec = BisectionSpec {
        alpha: settings.opt(a.alpha, "alpha")?,
        probe_runs: settings.get(a.probe_runs, "probe-runs", d.probe_runs)?,
        n_low: settings.get(a.n_low, "n-low", d.n_low)?,
        n_high: settings.get(a.n_high, "n-high", d.n_high)?,
        tolerance: settings.get(a.tolerance, "tolerance", d.tolerance)?,
        cap: settings.get(a.cap, "cap", d.cap)?,
        validate: settings.get(a.validate, "validate", d.validate)?,
    };
    if let Some(alpha) = spec.alpha {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CliError::Usage(format!("alpha must be in [0, 1], got {alpha}")));
        }
    }
    if spec.n_low >= spec.n_high || spec.probe_runs == 0 || !(spec.tolerance > 0.0) {
        return Err(CliError::Usage(
            "bisection needs n-low < n-high, probe-runs > 0 and tolerance > 0".into(),
        ));
    }
    Ok(spec)
}

fn output_path(settings: &Settings, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    settings
        .opt(flag, "out")?
        .ok_or_else(|| CliError::Usage("--out is required".into()))
}

/// Writes all of `bytes` or nothing visible at `path`.
fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn workers(settings: &Settings, flag: Option<usize>) -> Result<usize, CliError> {
    let w = settings.get(flag, "workers", 1)?;
    if w == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(w)
}

#[derive(Serialize)]
struct RunReport<'a> {
    problem: String,
    algorithm: String,
    n: usize,
    s: usize,
    p_i: f64,
    seed: u64,
    success: bool,
    correct_bbs: usize,
    n_fe: u64,
    generations: usize,
    best_fitness: f64,
    evaluated_assignments: u64,
    inherited_assignments: u64,
    final_model: &'a MarginalProductModel,
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let settings = Settings::load(a.common.config.as_deref(), &config_keys("run"))?;
    let verbose = settings.flag(a.common.verbose, "verbose")?;
    workers(&settings, a.common.workers)?;
    let n = settings.get(a.n, "n", 1000)?;
    let seed = settings.get(a.common.seed, "seed", DEFAULT_SEED)?;
    let cfg = run_config(&settings, a.algorithm, n, seed)?;
    let mut stderr = std::io::stderr();
    let result = run_observed(&cfg, &mut |g| {
        if verbose {
            let _ = writeln!(stderr, "{g}");
        }
    })?;
    if !result.best_fitness.is_finite() {
        return Err(CliError::Runtime("run produced a non-finite best fitness".into()));
    }
    let report = RunReport {
        problem: cfg.problem.to_string(),
        algorithm: cfg.algorithm.to_string(),
        n: cfg.population_size,
        s: cfg.tournament_size,
        p_i: cfg.inheritance_probability,
        seed: cfg.seed,
        success: result.success,
        correct_bbs: result.correct_bbs,
        n_fe: result.n_fe,
        generations: result.generations_used,
        best_fitness: result.best_fitness,
        evaluated_assignments: result.evaluated_assignments,
        inherited_assignments: result.inherited_assignments,
        final_model: &result.final_model,
    };
    let json = serde_json::to_string(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn bisect(a: BisectArgs) -> Result<(), CliError> {
    let settings = Settings::load(a.common.config.as_deref(), &config_keys("bisect"))?;
    let verbose = settings.flag(a.common.verbose, "verbose")?;
    let exec = Executor::new(workers(&settings, a.common.workers)?)?;
    let seed = settings.get(a.common.seed, "seed", DEFAULT_SEED)?;
    let out = output_path(&settings, a.out)?;
    let spec = bisection_spec(&settings, a.bisection)?;
    // Validated at the smallest population the bisection may probe.
    let template = run_config(&settings, a.algorithm, spec.n_low.max(2), seed)?;
    let outcome = bisect_population_size(&template, &spec, seed, &exec)?;
    if verbose {
        for p in &outcome.probes {
            eprintln!("probe n={} successes={}/{}", p.n, p.successes, p.runs);
        }
    }
    if !outcome.validated {
        eprintln!("warning: n={} failed its validation batch", outcome.n);
    }
    let mut buf = Vec::new();
    write_bisection_csv(&template, &outcome, &mut buf)?;
    write_file(&out, &buf)
}

fn sweep_settings(
    settings: &Settings,
    common_seed: Option<u64>,
    common_workers: Option<usize>,
    runs: Option<usize>,
    s: Option<usize>,
    bisection: BisectionArgs,
) -> Result<SweepSettings, CliError> {
    let runs = settings.get(runs, "runs", 100)?;
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    Ok(SweepSettings {
        runs,
        bisection: bisection_spec(settings, bisection)?,
        base_seed: settings.get(common_seed, "seed", DEFAULT_SEED)?,
        workers: workers(settings, common_workers)?,
        tournament_size: settings.get(s, "s", DEFAULT_TOURNAMENT_SIZE)?,
        ..SweepSettings::default()
    })
}

fn sweep_pi(a: SweepPiArgs) -> Result<(), CliError> {
    let settings = Settings::load(a.common.config.as_deref(), &config_keys("sweep-pi"))?;
    let verbose = settings.flag(a.common.verbose, "verbose")?;
    let problem = problem_spec(&settings, a.problem)?;
    let grid = parse_grid(&settings.get(a.grid, "grid", "0:0.9:0.1".to_string())?)?;
    if let Some(p) = grid.iter().find(|p| !(0.0..=0.95).contains(*p)) {
        return Err(CliError::Usage(format!("p_i {p} outside [0, 0.95]")));
    }
    if !grid.contains(&0.0) {
        return Err(CliError::Usage("p_i grid must include the 0 baseline".into()));
    }
    let out = output_path(&settings, a.out)?;
    let sweep_settings = sweep_settings(
        &settings,
        a.common.seed,
        a.common.workers,
        a.runs,
        a.s,
        a.bisection,
    )?;
    let sweep = sweep_inheritance(problem, &grid, &sweep_settings)?;
    if verbose {
        for c in &sweep.cells {
            eprintln!(
                "p_i={} n={} success_rate={} mean_nfe={} validated={}",
                c.p_i, c.n, c.stats.success_rate, c.stats.mean_nfe, c.bisection.validated
            );
        }
    }
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf)?;
    write_file(&out, &buf)
}

fn default_fit_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    out.with_file_name(format!("{stem}_fit.csv"))
}

fn sweep_m(a: SweepMArgs) -> Result<(), CliError> {
    let settings = Settings::load(a.common.config.as_deref(), &config_keys("sweep-m"))?;
    let verbose = settings.flag(a.common.verbose, "verbose")?;
    let k = settings.get(a.k, "k", 4)?;
    let d = settings.get(a.d, "d", 1.0)?;
    let m_grid = parse_int_grid(&settings.get(a.m_grid, "m-grid", "5,10,20,40".to_string())?)?;
    let (lo, hi) = (
        m_grid.iter().copied().min().unwrap_or(0),
        m_grid.iter().copied().max().unwrap_or(0),
    );
    if m_grid.len() < 4 || lo < 2 || hi < 4 * lo {
        return Err(CliError::Usage(
            "m grid needs at least 4 values, all >= 2, spanning a factor of 4".into(),
        ));
    }
    ProblemSpec::Trap { m: lo, k, d }
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let out = output_path(&settings, a.out)?;
    let fit_out = settings.opt(a.fit_out, "fit-out")?.unwrap_or_else(|| default_fit_path(&out));
    let sweep_settings = sweep_settings(
        &settings,
        a.common.seed,
        a.common.workers,
        a.runs,
        a.s,
        a.bisection,
    )?;
    let sweep = sweep_mutation_scaling(k, &m_grid, d, &sweep_settings)?;
    if verbose {
        for c in &sweep.cells {
            eprintln!(
                "m={} n_ecga={} n_mut={} eta={}",
                c.m, c.n_ecga, c.n_mut, c.eta_empirical
            );
        }
    }
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv)?;
    let mut fits = Vec::new();
    write_fit_csv(&sweep.fit_summaries(), &mut fits)?;
    write_file(&out, &csv)?;
    write_file(&fit_out, &fits)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Predictor {
    Ratio,
    Speedup,
    PopulationInheritance,
    NfeInheritance,
    Convergence,
    PopulationEcga,
    Bounds,
    NfeMutation,
    EtaMutation,
}

impl Predictor {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "16" | "ratio" => Predictor::Ratio,
            "17" | "speedup" => Predictor::Speedup,
            "13" | "n-inheritance" => Predictor::PopulationInheritance,
            "15" | "nfe-inheritance" => Predictor::NfeInheritance,
            "14" | "convergence" => Predictor::Convergence,
            "3" | "n-ecga" => Predictor::PopulationEcga,
            "8" | "bounds" => Predictor::Bounds,
            "9" | "nfe-mut" => Predictor::NfeMutation,
            "10" | "eta-mut" => Predictor::EtaMutation,
            other => return Err(CliError::Usage(format!("unknown predictor `{other}`"))),
        })
    }

    fn over_p(self) -> bool {
        matches!(
            self,
            Predictor::Ratio
                | Predictor::Speedup
                | Predictor::PopulationInheritance
                | Predictor::NfeInheritance
        )
    }
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    let settings = Settings::load(a.config.as_deref(), &config_keys("predict"))?;
    let eq = Predictor::parse(&settings.get(a.eq, "eq", "16".to_string())?)?;
    let default_grid = if eq.over_p() { "0:0.9:0.1" } else { "5,10,20,40" };
    let grid_text = settings.get(a.grid, "grid", default_grid.to_string())?;
    let k = settings.get(a.k, "k", 4)?;
    let m = settings.get(a.m, "m", 10)?;
    let c = settings.get(a.c, "c", 1.0)?;
    let mut params = FacetwiseParams::new(k, m);
    params.noise_to_signal = settings.get(a.noise_to_signal, "noise-to-signal", 1.0)?;
    params.alpha = settings.get(a.alpha, "alpha", params.alpha)?;
    params.fitness_variance = settings.get(a.sigma_f2, "sigma-f2", 1.0)?;
    params.noise_variance = settings.get(a.sigma_n2, "sigma-n2", 0.0)?;
    params.c_n = c;
    params.c_t = c;
    let n = settings.get(a.n, "n", 1000.0)?;
    let t_c = settings.get(a.t_c, "t-c", 10.0)?;
    let usage = |e: ecga_core::Error| CliError::Usage(e.to_string());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let header: Vec<&str> = if eq.over_p() {
        let grid = parse_grid(&grid_text)?;
        if let Some(p) = grid.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(CliError::Usage(format!("p_i {p} outside [0, 1)")));
        }
        for &p in &grid {
            let value = match eq {
                Predictor::Ratio => fe_ratio(p),
                Predictor::Speedup => speedup_inheritance(p).map_err(usage)?.speedup,
                Predictor::PopulationInheritance => {
                    params.p_i = p;
                    predicted_population_size(&params, c).map_err(usage)?.with_inheritance
                }
                _ => predicted_nfe_inheritance(n, t_c, p).map_err(usage)?,
            };
            rows.push(vec![p, value]);
        }
        let name = match eq {
            Predictor::Ratio => "ratio",
            Predictor::Speedup => "speedup",
            Predictor::PopulationInheritance => "n",
            _ => "nfe",
        };
        vec!["p_i", name]
    } else {
        let grid = parse_int_grid(&grid_text)?;
        if grid.iter().any(|&m| m < 1) {
            return Err(CliError::Usage("m grid values must be positive".into()));
        }
        for &mi in &grid {
            let mut p = params;
            p.m = mi;
            let mf = mi as f64;
            rows.push(match eq {
                Predictor::Convergence => vec![mf, predicted_convergence_time(&p).map_err(usage)?],
                Predictor::PopulationEcga => {
                    p.alpha = 0.5;
                    vec![mf, predicted_population_size(&p, c).map_err(usage)?.proportional]
                }
                Predictor::Bounds => {
                    let b = scaling_bounds_mutation(k, mi);
                    vec![mf, b.lower, b.nominal, b.upper]
                }
                Predictor::NfeMutation => vec![mf, predicted_nfe_mutation(k, mi, c)],
                _ => vec![mf, speedup_mutation(k, mi, c)],
            });
        }
        match eq {
            Predictor::Convergence => vec!["m", "t_c"],
            Predictor::PopulationEcga => vec!["m", "n"],
            Predictor::Bounds => vec!["m", "lower", "nominal", "upper"],
            Predictor::NfeMutation => vec!["m", "nfe_mut"],
            _ => vec!["m", "eta"],
        }
    };

    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|v| {
                if v.is_finite() {
                    Ok(v.to_string())
                } else {
                    Err(CliError::Runtime("predictor produced a non-finite value".into()))
                }
            })
            .collect::<Result<_, _>>()?;
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    print!("{text}");
    Ok(())
}
