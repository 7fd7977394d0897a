//! Endogenous fitness model built on the marginal product model.
//!
//! Each schema (one configuration of one partition) gets a fitness offset:
//! the mean fitness of evaluated individuals carrying it minus the mean of
//! all evaluated individuals. An offspring's inherited fitness is the
//! evaluated mean plus the offsets of the schemata it carries. Schemata
//! that no evaluated individual carries contribute zero.

use std::io::Write;

use crate::engine::EvaluationLedger;
use crate::error::{Error, Result};
use crate::genome::{Genome, Population, Provenance, RandomSource};
use crate::mpm::{MarginalProductModel, Partition};
use crate::problems::Problem;

/// How offspring are chosen to inherit rather than be evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InheritanceSampling {
    /// Independent Bernoulli(p_i) draw per offspring.
    #[default]
    Bernoulli,
    /// Exactly `round(p_i * n)` inheritors, chosen uniformly.
    Quota,
}

impl std::str::FromStr for InheritanceSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(InheritanceSampling::Bernoulli),
            "quota" => Ok(InheritanceSampling::Quota),
            other => Err(Error::InvalidArgument(format!(
                "unknown inheritance sampling `{other}` (bernoulli, quota)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaFitnessTable {
    partitions: Vec<Partition>,
    deltas: Vec<Vec<f64>>,
    support: Vec<Vec<u64>>,
    mean: f64,
    evaluated: usize,
}

impl SchemaFitnessTable {
    /// Mean fitness over the evaluated individuals.
    pub fn mean_evaluated_fitness(&self) -> f64 {
        self.mean
    }

    /// Number of evaluated individuals the table was estimated from.
    pub fn evaluated_count(&self) -> usize {
        self.evaluated
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// Offset of configuration `config` of partition `i`.
    pub fn schema_fitness(&self, i: usize, config: usize) -> f64 {
        self.deltas[i][config]
    }

    /// Evaluated individuals carrying configuration `config` of partition `i`.
    pub fn support(&self, i: usize, config: usize) -> u64 {
        self.support[i][config]
    }

    /// Writes `partition,config,n_h,schema_fitness` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["partition", "config", "n_h", "schema_fitness"])?;
        for (i, p) in self.partitions.iter().enumerate() {
            let k = p.size();
            for (j, &delta) in self.deltas[i].iter().enumerate() {
                let bits: String = (0..k)
                    .map(|t| if (j >> (k - 1 - t)) & 1 == 1 { '1' } else { '0' })
                    .collect();
                w.write_record([
                    p.to_string(),
                    bits,
                    self.support[i][j].to_string(),
                    delta.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Schema fitness offsets over the evaluated members of `pop`.
pub fn estimate_schema_fitness(
    model: &MarginalProductModel,
    pop: &Population,
) -> Result<SchemaFitnessTable> {
    if pop.genome_len() != model.genome_len() {
        return Err(Error::LengthMismatch {
            expected: model.genome_len(),
            actual: pop.genome_len(),
        });
    }
    let evaluated: Vec<(&Genome, f64)> = pop
        .iter()
        .filter(|m| m.is_evaluated())
        .map(|m| (m.genome(), m.fitness().expect("evaluated member has fitness")))
        .collect();
    if evaluated.is_empty() {
        return Err(Error::NoEvaluatedIndividuals);
    }
    let mean = evaluated.iter().map(|(_, f)| f).sum::<f64>() / evaluated.len() as f64;

    let mut deltas = Vec::with_capacity(model.partition_count());
    let mut support = Vec::with_capacity(model.partition_count());
    for p in model.partitions() {
        let mut sums = vec![0.0; p.config_count()];
        let mut counts = vec![0u64; p.config_count()];
        for (g, f) in &evaluated {
            let j = p.config_of(g);
            sums[j] += f;
            counts[j] += 1;
        }
        deltas.push(
            sums.iter()
                .zip(&counts)
                .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 - mean })
                .collect(),
        );
        support.push(counts);
    }
    Ok(SchemaFitnessTable {
        partitions: model.partitions().to_vec(),
        deltas,
        support,
        mean,
        evaluated: evaluated.len(),
    })
}

/// Evaluated mean plus the schema offsets carried by `offspring`.
pub fn inherited_fitness(offspring: &Genome, table: &SchemaFitnessTable) -> Result<f64> {
    let covered: usize = table.partitions.iter().map(Partition::size).sum();
    if offspring.len() != covered {
        return Err(Error::LengthMismatch {
            expected: covered,
            actual: offspring.len(),
        });
    }
    Ok(table.mean
        + table
            .partitions
            .iter()
            .zip(&table.deltas)
            .map(|(p, d)| d[p.config_of(offspring)])
            .sum::<f64>())
}

/// Gives each offspring either an inherited fitness (probability `p_i`) or a
/// counted evaluation. Returns the number of evaluations spent.
pub fn assign_offspring_fitness(
    offspring: &mut Population,
    p_i: f64,
    table: &SchemaFitnessTable,
    problem: &Problem,
    ledger: &mut EvaluationLedger,
    rng: &mut RandomSource,
    sampling: InheritanceSampling,
) -> Result<usize> {
    if !(0.0..1.0).contains(&p_i) {
        return Err(Error::InvalidArgument(format!(
            "inheritance probability must be in [0, 1), got {p_i}"
        )));
    }
    let n = offspring.len();
    // p_i = 0 draws nothing so runs replay plain eCGA exactly.
    let inherit: Vec<bool> = if p_i == 0.0 {
        vec![false; n]
    } else {
        match sampling {
            InheritanceSampling::Bernoulli => (0..n).map(|_| rng.bernoulli(p_i)).collect(),
            InheritanceSampling::Quota => {
                let quota = (p_i * n as f64).round() as usize;
                let mut flags: Vec<bool> = (0..n).map(|i| i < quota).collect();
                rng.shuffle(&mut flags);
                flags
            }
        }
    };
    let before = ledger.count();
    for (member, inherits) in offspring.members_mut().iter_mut().zip(inherit) {
        if inherits {
            let f = inherited_fitness(member.genome(), table)?;
            member.assign(f, Provenance::Inherited)?;
        } else {
            let f = problem.evaluate(member.genome(), ledger)?;
            member.assign(f, Provenance::Evaluated)?;
        }
    }
    Ok((ledger.count() - before) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::Individual;
    use crate::mpm::fit_frequencies;
    use crate::problems::onemax;

    fn evaluated_pop(problem: &Problem, genomes: &[&str]) -> Population {
        Population::new(
            genomes
                .iter()
                .map(|s| {
                    let g: Genome = s.parse().unwrap();
                    let f = problem.objective(&g).unwrap();
                    Individual::with_fitness(g, f, Provenance::Evaluated)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn onemax_two_bit_hand_example() {
        let problem = onemax(2).unwrap();
        let pop = evaluated_pop(&problem, &["11", "10", "01", "00"]);
        let model = MarginalProductModel::singletons(&pop).unwrap();
        let table = estimate_schema_fitness(&model, &pop).unwrap();
        assert_eq!(table.mean_evaluated_fitness(), 1.0);
        assert_eq!(table.evaluated_count(), 4);
        for i in 0..2 {
            assert_eq!(table.schema_fitness(i, 1), 0.5);
            assert_eq!(table.schema_fitness(i, 0), -0.5);
            assert_eq!(table.support(i, 1), 2);
        }
        assert_eq!(inherited_fitness(&"11".parse().unwrap(), &table).unwrap(), 2.0);
        assert_eq!(inherited_fitness(&"00".parse().unwrap(), &table).unwrap(), 0.0);
    }

    #[test]
    fn identical_members_give_zero_offsets() {
        let problem = onemax(3).unwrap();
        let pop = evaluated_pop(&problem, &["101"; 4]);
        let model = MarginalProductModel::singletons(&pop).unwrap();
        let table = estimate_schema_fitness(&model, &pop).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(table.schema_fitness(i, j), 0.0);
            }
        }
        // Every offspring, seen or not, inherits the mean.
        assert_eq!(inherited_fitness(&"010".parse().unwrap(), &table).unwrap(), 2.0);
    }

    #[test]
    fn absent_schema_contributes_zero() {
        let problem = onemax(2).unwrap();
        let pop = evaluated_pop(&problem, &["00", "11"]);
        let model =
            fit_frequencies(&[Partition::new(vec![0, 1]).unwrap()], &pop).unwrap();
        let table = estimate_schema_fitness(&model, &pop).unwrap();
        assert_eq!(table.support(0, 0b01), 0);
        assert_eq!(table.schema_fitness(0, 0b01), 0.0);
        assert_eq!(inherited_fitness(&"01".parse().unwrap(), &table).unwrap(), 1.0);
    }

    #[test]
    fn only_evaluated_members_count() {
        let problem = onemax(2).unwrap();
        let mut members: Vec<Individual> = evaluated_pop(&problem, &["11", "00"]).into_members();
        members.push(Individual::with_fitness("11".parse().unwrap(), 99.0, Provenance::Inherited));
        members.push(Individual::new("10".parse().unwrap()));
        let pop = Population::new(members).unwrap();
        let model = MarginalProductModel::singletons(&pop).unwrap();
        let table = estimate_schema_fitness(&model, &pop).unwrap();
        assert_eq!(table.evaluated_count(), 2);
        assert_eq!(table.mean_evaluated_fitness(), 1.0);

        let none = Population::new(vec![Individual::new("10".parse().unwrap())]).unwrap();
        let m = MarginalProductModel::singletons(&none).unwrap();
        assert_eq!(
            estimate_schema_fitness(&m, &none).unwrap_err(),
            Error::NoEvaluatedIndividuals
        );
    }

    fn table_for(problem: &Problem) -> SchemaFitnessTable {
        let pop = evaluated_pop(problem, &["1111", "0000", "1010", "0101"]);
        let model = MarginalProductModel::singletons(&pop).unwrap();
        estimate_schema_fitness(&model, &pop).unwrap()
    }

    #[test]
    fn zero_probability_evaluates_everyone() {
        let problem = onemax(4).unwrap();
        let table = table_for(&problem);
        let mut rng = RandomSource::new(1);
        let mut kids = Population::from_genomes(vec![Genome::ones(4); 20]).unwrap();
        let mut ledger = EvaluationLedger::default();
        let spent = assign_offspring_fitness(
            &mut kids, 0.0, &table, &problem, &mut ledger, &mut rng, InheritanceSampling::Bernoulli,
        )
        .unwrap();
        assert_eq!(spent, 20);
        assert_eq!(ledger.count(), 20);
        assert!(kids.iter().all(|k| k.is_evaluated()));
    }

    #[test]
    fn high_probability_evaluated_count_within_binomial_bound() {
        let problem = onemax(4).unwrap();
        let table = table_for(&problem);
        let n = 1000;
        let sigma = (n as f64 * 0.9 * 0.1).sqrt();
        for seed in 0..5 {
            let mut rng = RandomSource::new(seed);
            let mut kids = Population::from_genomes(vec![Genome::ones(4); n]).unwrap();
            let mut ledger = EvaluationLedger::default();
            let spent = assign_offspring_fitness(
                &mut kids, 0.9, &table, &problem, &mut ledger, &mut rng, InheritanceSampling::Bernoulli,
            )
            .unwrap();
            assert!((spent as f64 - 100.0).abs() <= 3.0 * sigma, "{spent}");
            assert_eq!(spent, kids.evaluated_count());
            assert_eq!(ledger.count() as usize, kids.evaluated_count());
        }
    }

    #[test]
    fn quota_sampling_is_exact() {
        let problem = onemax(4).unwrap();
        let table = table_for(&problem);
        let mut kids = Population::from_genomes(vec![Genome::zeros(4); 50]).unwrap();
        let mut ledger = EvaluationLedger::default();
        let spent = assign_offspring_fitness(
            &mut kids, 0.3, &table, &problem, &mut ledger, &mut RandomSource::new(4), InheritanceSampling::Quota,
        )
        .unwrap();
        assert_eq!(spent, 35);
    }

    #[test]
    fn invalid_probability_is_rejected() {
        let problem = onemax(4).unwrap();
        let table = table_for(&problem);
        let mut kids = Population::from_genomes(vec![Genome::zeros(4); 5]).unwrap();
        let mut ledger = EvaluationLedger::default();
        for p in [1.0, -0.1, 1.5] {
            assert!(assign_offspring_fitness(
                &mut kids, p, &table, &problem, &mut ledger, &mut RandomSource::new(0), InheritanceSampling::Bernoulli,
            )
            .is_err());
        }
    }

    #[test]
    fn csv_dump_lists_every_schema() {
        let problem = onemax(2).unwrap();
        let pop = evaluated_pop(&problem, &["11", "10", "01", "00"]);
        let model = MarginalProductModel::singletons(&pop).unwrap();
        let table = estimate_schema_fitness(&model, &pop).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "partition,config,n_h,schema_fitness\n[0],0,2,-0.5\n[0],1,2,0.5\n[1],0,2,-0.5\n[1],1,2,0.5\n"
        );
    }
}
