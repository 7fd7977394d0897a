//! The selectorecombinative eCGA loop and run configuration.
//!
//! Each generation: tournament selection, greedy MDL model search on the
//! selected set, sampling a full replacement population from the model, and
//! fitness assignment (evaluation, or inheritance from the schema fitness
//! table with probability `p_i`). Runs stop when the population has
//! converged, when an evaluated individual reaches the known optimum, or
//! after the generation cap.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{random_population, Individual, Population, Provenance, RandomSource};
use crate::inheritance::{assign_offspring_fitness, estimate_schema_fitness, InheritanceSampling};
use crate::mpm::{greedy_model_search, sample_offspring, MarginalProductModel};
use crate::problems::{Problem, ProblemSpec};

/// Count of actual fitness evaluations. Only [`Problem::evaluate`] adds to it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvaluationLedger {
    actual: u64,
}

impl EvaluationLedger {
    pub fn count(&self) -> u64 {
        self.actual
    }

    pub(crate) fn record(&mut self) {
        self.actual += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ecga,
    EcgaInheritance,
    Selectomutative,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ecga => "ecga",
            Algorithm::EcgaInheritance => "ecga_inheritance",
            Algorithm::Selectomutative => "selectomutative",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ecga" => Ok(Algorithm::Ecga),
            "ecga_inheritance" | "inheritance" => Ok(Algorithm::EcgaInheritance),
            "selectomutative" | "bbwise" | "mutation" => Ok(Algorithm::Selectomutative),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm `{s}`"))),
        }
    }
}

pub const DEFAULT_TOURNAMENT_SIZE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    pub population_size: usize,
    pub tournament_size: usize,
    /// Defaults to `5 * l` when unset.
    pub max_generations: Option<usize>,
    pub inheritance_probability: f64,
    pub inheritance_sampling: InheritanceSampling,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, algorithm: Algorithm, population_size: usize) -> Self {
        RunConfig {
            problem,
            algorithm,
            population_size,
            tournament_size: DEFAULT_TOURNAMENT_SIZE,
            max_generations: None,
            inheritance_probability: 0.0,
            inheritance_sampling: InheritanceSampling::Bernoulli,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_inheritance(mut self, p_i: f64) -> Self {
        self.inheritance_probability = p_i;
        self
    }

    pub fn with_tournament_size(mut self, s: usize) -> Self {
        self.tournament_size = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.population_size;
        if n < 2 {
            return Err(Error::InvalidArgument(format!("population size must be >= 2, got {n}")));
        }
        if self.tournament_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "tournament size must be >= 2, got {}",
                self.tournament_size
            )));
        }
        if self.tournament_size > n {
            return Err(Error::TournamentTooLarge {
                s: self.tournament_size,
                n,
            });
        }
        let p = self.inheritance_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "inheritance probability must be in [0, 1], got {p}"
            )));
        }
        match self.algorithm {
            Algorithm::Ecga | Algorithm::Selectomutative if p != 0.0 => Err(Error::InvalidArgument(
                format!("{} does not use inheritance (p_i = {p})", self.algorithm),
            )),
            Algorithm::EcgaInheritance if p >= 1.0 => Err(Error::InvalidArgument(
                "p_i = 1 leaves no evaluated individuals after generation 0".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub success: bool,
    pub correct_bbs: usize,
    pub n_fe: u64,
    /// Populations that received fitness, the initial one included.
    pub generations_used: usize,
    pub best_fitness: f64,
    pub final_model: MarginalProductModel,
    /// Fitness assignments made through evaluation over the whole run.
    pub evaluated_assignments: u64,
    pub inherited_assignments: u64,
}

/// Per-generation snapshot for verbose logging.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub model: Option<String>,
    pub evaluations: u64,
}

impl fmt::Display for GenerationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "generation={} best_fitness={} mean_fitness={} evaluations={} model={}",
            self.generation,
            self.best_fitness,
            self.mean_fitness,
            self.evaluations,
            self.model.as_deref().unwrap_or("-")
        )
    }
}

pub type Observer<'a> = &'a mut dyn FnMut(&GenerationRecord);

/// Tournament selection without replacement: `s` passes over shuffled
/// groups of `s`, one winner per group, truncated to `n` winners.
pub fn tournament_select(pop: &Population, s: usize, rng: &mut RandomSource) -> Result<Population> {
    let n = pop.len();
    if s == 0 {
        return Err(Error::InvalidArgument("tournament size must be positive".into()));
    }
    if s > n {
        return Err(Error::TournamentTooLarge { s, n });
    }
    let fitness: Vec<f64> = pop
        .iter()
        .enumerate()
        .map(|(i, m)| m.fitness().ok_or(Error::UnsetFitness { index: i }))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut winners = Vec::with_capacity(n);
    'passes: for _ in 0..s {
        rng.shuffle(&mut order);
        for group in order.chunks(s) {
            let mut best = group[0];
            for &i in &group[1..] {
                if fitness[i] > fitness[best] {
                    best = i;
                }
            }
            winners.push(pop.get(best).clone());
            if winners.len() == n {
                break 'passes;
            }
        }
    }
    Population::new(winners)
}

pub(crate) fn evaluate_all(
    pop: &mut Population,
    problem: &Problem,
    ledger: &mut EvaluationLedger,
) -> Result<()> {
    for member in pop.members_mut() {
        let f = problem.evaluate(member.genome(), ledger)?;
        member.assign(f, Provenance::Evaluated)?;
    }
    Ok(())
}

/// Best member by recorded fitness among evaluated members, falling back to
/// all members when none is evaluated. Inherited values can overestimate, so
/// they only decide when nothing was evaluated.
pub(crate) fn best_reported(pop: &Population) -> (usize, f64) {
    let pick = |evaluated_only: bool| {
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in pop.iter().enumerate() {
            if evaluated_only && !m.is_evaluated() {
                continue;
            }
            if let Some(f) = m.fitness() {
                if best.is_none_or(|(_, bf)| f > bf) {
                    best = Some((i, f));
                }
            }
        }
        best
    };
    pick(true)
        .or_else(|| pick(false))
        .expect("population members have fitness")
}

/// Plain eCGA; `config.inheritance_probability` must be 0.
pub fn run_ecga(config: &RunConfig) -> Result<RunResult> {
    run_ecga_observed(config, &mut |_| {})
}

pub fn run_ecga_observed(config: &RunConfig, observer: Observer<'_>) -> Result<RunResult> {
    if config.algorithm != Algorithm::Ecga {
        return Err(Error::InvalidArgument(format!(
            "run_ecga called with algorithm {}",
            config.algorithm
        )));
    }
    config.validate()?;
    generational_loop(config, observer)
}

/// eCGA where offspring inherit model-estimated fitness with probability `p_i`.
pub fn run_ecga_with_inheritance(config: &RunConfig) -> Result<RunResult> {
    run_ecga_with_inheritance_observed(config, &mut |_| {})
}

pub fn run_ecga_with_inheritance_observed(
    config: &RunConfig,
    observer: Observer<'_>,
) -> Result<RunResult> {
    if config.algorithm != Algorithm::EcgaInheritance {
        return Err(Error::InvalidArgument(format!(
            "run_ecga_with_inheritance called with algorithm {}",
            config.algorithm
        )));
    }
    config.validate()?;
    generational_loop(config, observer)
}

/// Dispatches on `config.algorithm`.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    run_observed(config, &mut |_| {})
}

pub fn run_observed(config: &RunConfig, observer: Observer<'_>) -> Result<RunResult> {
    match config.algorithm {
        Algorithm::Ecga => run_ecga_observed(config, observer),
        Algorithm::EcgaInheritance => run_ecga_with_inheritance_observed(config, observer),
        Algorithm::Selectomutative => crate::mutation::run_selectomutative_observed(config, observer),
    }
}

fn generational_loop(config: &RunConfig, observer: Observer<'_>) -> Result<RunResult> {
    let problem = config.problem.build()?;
    let n = config.population_size;
    let p_i = config.inheritance_probability;
    let max_generations = config.max_generations.unwrap_or(5 * problem.len()).max(1);
    let optimum = problem.optimum_fitness();

    let mut rng = RandomSource::new(config.seed);
    let mut ledger = EvaluationLedger::default();
    let mut pop = random_population(problem.len(), n, &mut rng)?;
    evaluate_all(&mut pop, &problem, &mut ledger)?;
    let mut evaluated_assignments = pop.evaluated_count() as u64;
    let mut inherited_assignments = 0u64;
    let mut generations = 1usize;
    let mut last_model: Option<MarginalProductModel> = None;

    loop {
        let (_, best) = best_reported(&pop);
        observer(&GenerationRecord {
            generation: generations - 1,
            best_fitness: best,
            mean_fitness: pop.mean_fitness().unwrap_or(f64::NAN),
            model: last_model.as_ref().map(ToString::to_string),
            evaluations: ledger.count(),
        });
        let reached_optimum = pop
            .iter()
            .any(|m| m.is_evaluated() && m.fitness().is_some_and(|f| f >= optimum));
        if reached_optimum || pop.is_converged() || generations >= max_generations {
            break;
        }

        let selected = tournament_select(&pop, config.tournament_size, &mut rng)?;
        let model = greedy_model_search(&selected)?;
        let mut offspring = sample_offspring(&model, &selected, n, &mut rng)?;
        if p_i > 0.0 {
            // Schema offsets come from the selected evaluated parents; if
            // selection kept none, fall back to the evaluated pre-selection
            // members, and evaluate everyone if there are none at all.
            let table = estimate_schema_fitness(&model, &selected)
                .or_else(|_| estimate_schema_fitness(&model, &pop));
            match table {
                Ok(table) => {
                    assign_offspring_fitness(
                        &mut offspring,
                        p_i,
                        &table,
                        &problem,
                        &mut ledger,
                        &mut rng,
                        config.inheritance_sampling,
                    )?;
                    // Counted from provenance, independently of the ledger.
                    let evaluated = offspring.evaluated_count();
                    evaluated_assignments += evaluated as u64;
                    inherited_assignments += (n - evaluated) as u64;
                }
                Err(Error::NoEvaluatedIndividuals) => {
                    evaluate_all(&mut offspring, &problem, &mut ledger)?;
                    evaluated_assignments += offspring.evaluated_count() as u64;
                }
                Err(e) => return Err(e),
            }
        } else {
            evaluate_all(&mut offspring, &problem, &mut ledger)?;
            evaluated_assignments += offspring.evaluated_count() as u64;
        }
        pop = offspring;
        generations += 1;
        last_model = Some(model);
    }

    let (best_idx, best_fitness) = best_reported(&pop);
    let best: &Individual = pop.get(best_idx);
    let correct_bbs = problem.count_correct_bbs(best.genome())?;
    let final_model = match last_model {
        Some(m) => m,
        None => MarginalProductModel::singletons(&pop)?,
    };
    Ok(RunResult {
        success: correct_bbs == problem.block_count(),
        correct_bbs,
        n_fe: ledger.count(),
        generations_used: generations,
        best_fitness,
        final_model,
        evaluated_assignments,
        inherited_assignments,
    })
}
