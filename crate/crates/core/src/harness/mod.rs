//! Experiment orchestration: bisection population sizing, inheritance and
//! mutation sweeps, and their CSV output.
//!
//! Every run seed is derived from `(base_seed, cell, replicate)`, so a sweep
//! is a pure function of its settings. Replicates may execute on a worker
//! pool; results are always reduced in seed order.

pub mod fit;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use fit::{fit_power_law, linear_regression, LinearFit, PowerLawFit};

use crate::engine::{self, Algorithm, RunConfig, RunResult};
use crate::error::{Error, Result};
use crate::facetwise::{fe_ratio, speedup_inheritance};
use crate::problems::ProblemSpec;

/// Seed distance between sweep cells.
pub const CELL_SEED_STRIDE: u64 = 1_000_000;
const PROBE_SEED_OFFSET: u64 = 400_000;
const VALIDATION_SEED_OFFSET: u64 = 700_000;

pub const INHERITANCE_CSV_HEADER: [&str; 10] = [
    "p_i",
    "n",
    "runs",
    "success_rate",
    "mean_nfe",
    "stderr_nfe",
    "ratio_empirical",
    "ratio_eq16",
    "speedup_empirical",
    "speedup_eq17",
];
pub const MUTATION_CSV_HEADER: [&str; 8] = [
    "m", "k", "n_ecga", "nfe_ecga", "n_mut", "nfe_mut", "eta_empirical", "eta_fit",
];
pub const FIT_CSV_HEADER: [&str; 6] = ["series", "exponent", "constant", "r2", "ci_low", "ci_high"];
pub const BISECTION_CSV_HEADER: [&str; 9] = [
    "problem",
    "algorithm",
    "p_i",
    "alpha",
    "n",
    "probe_runs",
    "probe_success_rate",
    "validation_success_rate",
    "validated",
];

/// First seed of cell `cell`.
pub fn cell_seed(base_seed: u64, cell: usize) -> u64 {
    base_seed + cell as u64 * CELL_SEED_STRIDE
}

/// Runs replicate batches on a bounded worker pool.
pub struct Executor {
    pool: rayon::ThreadPool,
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        Ok(Executor { pool })
    }

    /// One run per seed, with `template` at population size `n`. Results
    /// are in seed order.
    pub fn run_batch(&self, template: &RunConfig, n: usize, seeds: &[u64]) -> Result<Vec<RunResult>> {
        self.pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let mut cfg = template.clone();
                    cfg.population_size = n;
                    cfg.seed = seed;
                    engine::run(&cfg)
                })
                .collect()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisectionSpec {
    /// Target failure rate; `None` means `1/m`.
    pub alpha: Option<f64>,
    pub probe_runs: usize,
    pub n_low: usize,
    pub n_high: usize,
    /// Stop once `(n_high - n_low) <= tolerance * n_high`.
    pub tolerance: f64,
    /// Bracket expansion gives up above this population size.
    pub cap: usize,
    /// Re-check the result on a fresh batch of seeds.
    pub validate: bool,
}

impl Default for BisectionSpec {
    fn default() -> Self {
        BisectionSpec {
            alpha: None,
            probe_runs: 30,
            n_low: 16,
            n_high: 256,
            tolerance: 0.1,
            cap: 1 << 20,
            validate: true,
        }
    }
}

impl BisectionSpec {
    fn check(&self) -> Result<()> {
        if self.n_low >= self.n_high {
            return Err(Error::InvalidArgument(format!(
                "bisection bracket [{}, {}] is empty",
                self.n_low, self.n_high
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
        }
        if self.probe_runs == 0 {
            return Err(Error::InvalidArgument("bisection needs at least one probe run".into()));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub n: usize,
    pub successes: usize,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisectionOutcome {
    pub n: usize,
    pub alpha: f64,
    pub probe_success_rate: f64,
    pub validation_success_rate: Option<f64>,
    /// False when the validation batch missed the target; such cells are flagged.
    pub validated: bool,
    pub probes: Vec<Probe>,
}

/// Successes needed out of `runs` for a success rate of at least `1 - alpha`.
fn required_successes(alpha: f64, runs: usize) -> usize {
    ((1.0 - alpha) * runs as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Smallest population size (within tolerance) whose success rate over the
/// probe seeds is at least `1 - alpha`. All probes share one seed block.
pub fn bisect_population_size(
    template: &RunConfig,
    spec: &BisectionSpec,
    seed_base: u64,
    exec: &Executor,
) -> Result<BisectionOutcome> {
    spec.check()?;
    let m = template.problem.block_count();
    let alpha = spec.alpha.unwrap_or(1.0 / m as f64);
    let need = required_successes(alpha, spec.probe_runs);
    let min_n = template.tournament_size.max(2);
    let probe_seeds: Vec<u64> = (0..spec.probe_runs as u64)
        .map(|r| seed_base + PROBE_SEED_OFFSET + r)
        .collect();
    let mut probes: Vec<Probe> = Vec::new();
    let successes = |n: usize, probes: &mut Vec<Probe>| -> Result<usize> {
        if let Some(p) = probes.iter().find(|p| p.n == n) {
            return Ok(p.successes);
        }
        let results = exec.run_batch(template, n, &probe_seeds)?;
        let s = results.iter().filter(|r| r.success).count();
        probes.push(Probe {
            n,
            successes: s,
            runs: spec.probe_runs,
        });
        Ok(s)
    };

    let mut lo = spec.n_low.max(min_n);
    let mut hi = spec.n_high.max(lo + 1);
    let n = if need == 0 {
        lo
    } else {
        while successes(hi, &mut probes)? < need {
            lo = hi;
            hi = hi.checked_mul(2).filter(|&h| h <= spec.cap).ok_or(Error::BracketCap { cap: spec.cap })?;
        }
        let mut found = None;
        while successes(lo, &mut probes)? >= need {
            hi = lo;
            if lo == min_n {
                found = Some(lo);
                break;
            }
            lo = (lo / 2).max(min_n);
        }
        match found {
            Some(n) => n,
            None => {
                while hi - lo > 1 && (hi - lo) as f64 > spec.tolerance * hi as f64 {
                    let mid = lo + (hi - lo) / 2;
                    if successes(mid, &mut probes)? >= need {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    };

    let probe_rate = probes
        .iter()
        .find(|p| p.n == n)
        .map(|p| p.successes as f64 / p.runs as f64)
        .unwrap_or(1.0);
    let (validation_success_rate, validated) = if spec.validate && need > 0 {
        let seeds: Vec<u64> = (0..spec.probe_runs as u64)
            .map(|r| seed_base + VALIDATION_SEED_OFFSET + r)
            .collect();
        let results = exec.run_batch(template, n, &seeds)?;
        let s = results.iter().filter(|r| r.success).count();
        (Some(s as f64 / seeds.len() as f64), s >= need)
    } else {
        (None, true)
    };
    probes.sort_by_key(|p| p.n);
    Ok(BisectionOutcome {
        n,
        alpha,
        probe_success_rate: probe_rate,
        validation_success_rate,
        validated,
        probes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSettings {
    /// Measurement replicates per cell.
    pub runs: usize,
    pub bisection: BisectionSpec,
    pub base_seed: u64,
    pub workers: usize,
    pub tournament_size: usize,
    /// Start each cell's bracket around the previous cell's population size.
    pub reuse_bracket: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            runs: 100,
            bisection: BisectionSpec::default(),
            base_seed: 1,
            workers: 1,
            tournament_size: engine::DEFAULT_TOURNAMENT_SIZE,
            reuse_bracket: true,
        }
    }
}

/// Summary statistics of one batch of replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchStats {
    pub runs: usize,
    pub success_rate: f64,
    pub mean_nfe: f64,
    pub stderr_nfe: f64,
    pub mean_generations: f64,
    pub seed_range: (u64, u64),
}

fn batch_stats(results: &[RunResult], seeds: &[u64]) -> BatchStats {
    let runs = results.len();
    let nfe: Vec<f64> = results.iter().map(|r| r.n_fe as f64).collect();
    let mean = nfe.iter().sum::<f64>() / runs as f64;
    let var = if runs > 1 {
        nfe.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64
    } else {
        0.0
    };
    BatchStats {
        runs,
        success_rate: results.iter().filter(|r| r.success).count() as f64 / runs as f64,
        mean_nfe: mean,
        stderr_nfe: (var / runs as f64).sqrt(),
        mean_generations: results.iter().map(|r| r.generations_used as f64).sum::<f64>() / runs as f64,
        seed_range: (seeds[0], *seeds.last().unwrap()),
    }
}

fn measure(
    template: &RunConfig,
    n: usize,
    cell_base: u64,
    runs: usize,
    exec: &Executor,
) -> Result<(BatchStats, Vec<RunResult>)> {
    if runs == 0 {
        return Err(Error::InvalidArgument("a sweep cell needs at least one run".into()));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|r| cell_base + r).collect();
    let results = exec.run_batch(template, n, &seeds)?;
    Ok((batch_stats(&results, &seeds), results))
}

fn next_bracket(spec: &BisectionSpec, previous: Option<usize>, reuse: bool) -> BisectionSpec {
    let mut s = spec.clone();
    if let (true, Some(prev)) = (reuse, previous) {
        s.n_low = (prev * 2 / 3).max(2);
        s.n_high = (prev * 3 / 2).max(s.n_low + 1);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InheritanceCell {
    pub p_i: f64,
    pub n: usize,
    pub stats: BatchStats,
    pub ratio_empirical: f64,
    pub ratio_eq16: f64,
    pub speedup_empirical: f64,
    pub speedup_eq17: f64,
    pub bisection: BisectionOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InheritanceSweep {
    pub problem: ProblemSpec,
    pub cells: Vec<InheritanceCell>,
}

/// For each `p_i`: size the population by bisection, measure `runs`
/// replicates, and compare the evaluation ratio against `n_fe(p_i = 0)`.
pub fn sweep_inheritance(
    problem: ProblemSpec,
    grid: &[f64],
    settings: &SweepSettings,
) -> Result<InheritanceSweep> {
    if let Some(&bad) = grid.iter().find(|&&p| !(0.0..=0.95).contains(&p)) {
        return Err(Error::InvalidArgument(format!("p_i grid value {bad} outside [0, 0.95]")));
    }
    let baseline = grid
        .iter()
        .position(|&p| p == 0.0)
        .ok_or_else(|| Error::InvalidArgument("p_i grid must contain the 0 baseline".into()))?;
    let exec = Executor::new(settings.workers)?;
    let mut raw = Vec::with_capacity(grid.len());
    let mut previous = None;
    for (cell, &p_i) in grid.iter().enumerate() {
        let template = RunConfig::new(problem, Algorithm::EcgaInheritance, 2)
            .with_inheritance(p_i)
            .with_tournament_size(settings.tournament_size);
        let base = cell_seed(settings.base_seed, cell);
        let spec = next_bracket(&settings.bisection, previous, settings.reuse_bracket);
        let bisection = bisect_population_size(&template, &spec, base, &exec)?;
        let (stats, _) = measure(&template, bisection.n, base, settings.runs, &exec)?;
        previous = Some(bisection.n);
        raw.push((p_i, bisection, stats));
    }
    let base_nfe = raw[baseline].2.mean_nfe;
    let cells = raw
        .into_iter()
        .map(|(p_i, bisection, stats)| {
            let ratio = stats.mean_nfe / base_nfe;
            Ok(InheritanceCell {
                p_i,
                n: bisection.n,
                stats,
                ratio_empirical: ratio,
                ratio_eq16: fe_ratio(p_i),
                speedup_empirical: 1.0 / ratio,
                speedup_eq17: speedup_inheritance(p_i)?.speedup,
                bisection,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InheritanceSweep { problem, cells })
}

fn fmt_finite(v: f64, what: &str) -> Result<String> {
    if v.is_finite() {
        Ok(v.to_string())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl InheritanceSweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(INHERITANCE_CSV_HEADER)?;
        for c in &self.cells {
            w.write_record([
                fmt_finite(c.p_i, "p_i")?,
                c.n.to_string(),
                c.stats.runs.to_string(),
                fmt_finite(c.stats.success_rate, "success_rate")?,
                fmt_finite(c.stats.mean_nfe, "mean_nfe")?,
                fmt_finite(c.stats.stderr_nfe, "stderr_nfe")?,
                fmt_finite(c.ratio_empirical, "ratio_empirical")?,
                fmt_finite(c.ratio_eq16, "ratio_eq16")?,
                fmt_finite(c.speedup_empirical, "speedup_empirical")?,
                fmt_finite(c.speedup_eq17, "speedup_eq17")?,
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MutationCell {
    pub m: usize,
    pub k: usize,
    pub n_ecga: usize,
    pub n_mut: usize,
    pub ecga: BatchStats,
    pub mutation: BatchStats,
    pub eta_empirical: f64,
    pub eta_fit: f64,
    pub bisection_ecga: BisectionOutcome,
    pub bisection_mut: BisectionOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MutationSweep {
    pub k: usize,
    pub cells: Vec<MutationCell>,
    /// Power law of selectomutative evaluations against m.
    pub nfe_mut_fit: PowerLawFit,
    pub nfe_ecga_fit: PowerLawFit,
    /// Line `eta = intercept + slope * sqrt(k) ln m`.
    pub eta_fit: LinearFit,
}

/// Bisection-sized eCGA and selectomutative runs on `trap(m x k)` for each
/// `m`, with power-law and speed-up fits.
pub fn sweep_mutation_scaling(
    k: usize,
    m_grid: &[usize],
    d: f64,
    settings: &SweepSettings,
) -> Result<MutationSweep> {
    if m_grid.len() < 4 {
        return Err(Error::InvalidArgument("m grid needs at least 4 points".into()));
    }
    let (lo, hi) = (
        *m_grid.iter().min().unwrap(),
        *m_grid.iter().max().unwrap(),
    );
    if lo < 2 || hi < 4 * lo {
        return Err(Error::InvalidArgument(
            "m grid must start at m >= 2 and span at least a factor of 4".into(),
        ));
    }
    let exec = Executor::new(settings.workers)?;
    let mut rows = Vec::new();
    let (mut prev_ecga, mut prev_mut) = (None, None);
    for (i, &m) in m_grid.iter().enumerate() {
        let problem = ProblemSpec::Trap { m, k, d };
        let mut out = Vec::new();
        for (j, algorithm) in [Algorithm::Ecga, Algorithm::Selectomutative].into_iter().enumerate() {
            let template =
                RunConfig::new(problem, algorithm, 2).with_tournament_size(settings.tournament_size);
            let base = cell_seed(settings.base_seed, 2 * i + j);
            let previous = if j == 0 { prev_ecga } else { prev_mut };
            // Larger m needs larger populations; scale the hint up by the m ratio.
            let hint = previous.map(|(pn, pm): (usize, usize)| pn * m / pm);
            let spec = next_bracket(&settings.bisection, hint, settings.reuse_bracket);
            let bisection = bisect_population_size(&template, &spec, base, &exec)?;
            let (stats, _) = measure(&template, bisection.n, base, settings.runs, &exec)?;
            if j == 0 {
                prev_ecga = Some((bisection.n, m));
            } else {
                prev_mut = Some((bisection.n, m));
            }
            out.push((bisection, stats));
        }
        let (mb, ms) = out.pop().unwrap();
        let (eb, es) = out.pop().unwrap();
        rows.push((m, eb, es, mb, ms));
    }

    let mut_points: Vec<(f64, f64)> = rows.iter().map(|r| (r.0 as f64, r.4.mean_nfe)).collect();
    let ecga_points: Vec<(f64, f64)> = rows.iter().map(|r| (r.0 as f64, r.2.mean_nfe)).collect();
    let eta_points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((k as f64).sqrt() * (r.0 as f64).ln(), r.2.mean_nfe / r.4.mean_nfe))
        .collect();
    let nfe_mut_fit = fit_power_law(&mut_points)?;
    let nfe_ecga_fit = fit_power_law(&ecga_points)?;
    let eta_fit = linear_regression(&eta_points)?;
    let cells = rows
        .into_iter()
        .zip(&eta_points)
        .map(|((m, eb, es, mb, ms), &(x, eta))| MutationCell {
            m,
            k,
            n_ecga: eb.n,
            n_mut: mb.n,
            ecga: es,
            mutation: ms,
            eta_empirical: eta,
            eta_fit: eta_fit.predict(x),
            bisection_ecga: eb,
            bisection_mut: mb,
        })
        .collect();
    Ok(MutationSweep {
        k,
        cells,
        nfe_mut_fit,
        nfe_ecga_fit,
        eta_fit,
    })
}

/// One row of the fit summary CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub series: String,
    pub exponent: f64,
    pub constant: f64,
    pub r2: f64,
    pub ci: (f64, f64),
}

impl MutationSweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MUTATION_CSV_HEADER)?;
        for c in &self.cells {
            w.write_record([
                c.m.to_string(),
                c.k.to_string(),
                c.n_ecga.to_string(),
                fmt_finite(c.ecga.mean_nfe, "nfe_ecga")?,
                c.n_mut.to_string(),
                fmt_finite(c.mutation.mean_nfe, "nfe_mut")?,
                fmt_finite(c.eta_empirical, "eta_empirical")?,
                fmt_finite(c.eta_fit, "eta_fit")?,
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    /// Power laws of both evaluation series plus the speed-up line (its
    /// slope in the exponent column, intercept in the constant column).
    pub fn fit_summaries(&self) -> Vec<FitSummary> {
        vec![
            FitSummary {
                series: "nfe_mut".into(),
                exponent: self.nfe_mut_fit.exponent,
                constant: self.nfe_mut_fit.constant,
                r2: self.nfe_mut_fit.r2,
                ci: self.nfe_mut_fit.exponent_ci,
            },
            FitSummary {
                series: "nfe_ecga".into(),
                exponent: self.nfe_ecga_fit.exponent,
                constant: self.nfe_ecga_fit.constant,
                r2: self.nfe_ecga_fit.r2,
                ci: self.nfe_ecga_fit.exponent_ci,
            },
            FitSummary {
                series: "eta_vs_sqrtk_logm".into(),
                exponent: self.eta_fit.slope,
                constant: self.eta_fit.intercept,
                r2: self.eta_fit.r2,
                ci: self.eta_fit.slope_ci,
            },
        ]
    }
}

pub fn write_fit_csv<W: Write>(fits: &[FitSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_CSV_HEADER)?;
    for f in fits {
        w.write_record([
            f.series.clone(),
            fmt_finite(f.exponent, "exponent")?,
            fmt_finite(f.constant, "constant")?,
            fmt_finite(f.r2, "r2")?,
            fmt_finite(f.ci.0, "ci_low")?,
            fmt_finite(f.ci.1, "ci_high")?,
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn write_bisection_csv<W: Write>(
    template: &RunConfig,
    outcome: &BisectionOutcome,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BISECTION_CSV_HEADER)?;
    let probe_runs = outcome.probes.first().map_or(0, |p| p.runs);
    w.write_record([
        template.problem.to_string(),
        template.algorithm.to_string(),
        fmt_finite(template.inheritance_probability, "p_i")?,
        fmt_finite(outcome.alpha, "alpha")?,
        outcome.n.to_string(),
        probe_runs.to_string(),
        fmt_finite(outcome.probe_success_rate, "probe_success_rate")?,
        outcome
            .validation_success_rate
            .map(|v| fmt_finite(v, "validation_success_rate"))
            .transpose()?
            .unwrap_or_default(),
        outcome.validated.to_string(),
    ])?;
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}
