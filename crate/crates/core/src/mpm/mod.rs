//! Marginal product models.
//!
//! A model is a partition of the loci into disjoint groups plus, for each
//! group, the frequency table of its `2^k` bit configurations in a
//! population. Models are scored with the MDL metric: the bits needed to
//! store the tables (`log2(n) * sum(2^k - 1)`) plus the entropy-coded size of
//! the population under the model (`n * sum_i H_i`).
//!
//! Configuration `j` of a partition reads its loci in ascending order with
//! the lowest locus as the most significant bit, so configuration `0b01` of
//! `[0,3]` means locus 0 is 0 and locus 3 is 1.

mod search;

use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::genome::{Genome, Individual, Population, RandomSource};

pub use search::{greedy_model_search, greedy_model_search_traced, SearchTrace};

/// Largest partition a model may hold; dense tables beyond this are refused.
pub const MAX_PARTITION_SIZE: usize = 24;

/// A sorted, non-empty set of distinct loci.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    loci: Vec<usize>,
}

impl Partition {
    pub fn new(mut loci: Vec<usize>) -> Result<Self> {
        if loci.is_empty() {
            return Err(Error::InvalidArgument("partition must hold at least one locus".into()));
        }
        loci.sort_unstable();
        if loci.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate locus in partition {loci:?}")));
        }
        Ok(Partition { loci })
    }

    pub fn singleton(locus: usize) -> Self {
        Partition { loci: vec![locus] }
    }

    pub fn loci(&self) -> &[usize] {
        &self.loci
    }

    pub fn size(&self) -> usize {
        self.loci.len()
    }

    pub fn lowest(&self) -> usize {
        self.loci[0]
    }

    pub fn config_count(&self) -> usize {
        1usize << self.loci.len()
    }

    /// Configuration index of `genome` restricted to this partition.
    pub fn config_of(&self, genome: &Genome) -> usize {
        self.loci
            .iter()
            .fold(0usize, |acc, &l| (acc << 1) | genome.get(l) as usize)
    }

    /// Writes configuration `config` into the partition's loci of `genome`.
    pub fn write_config(&self, genome: &mut Genome, config: usize) {
        let k = self.loci.len();
        for (t, &l) in self.loci.iter().enumerate() {
            genome.set(l, (config >> (k - 1 - t)) & 1 == 1);
        }
    }

    pub fn union(&self, other: &Partition) -> Partition {
        let mut loci = self.loci.clone();
        loci.extend_from_slice(&other.loci);
        loci.sort_unstable();
        Partition { loci }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, l) in self.loci.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str("]")
    }
}

/// Checks that `partitions` are disjoint, within `[0, len)` and cover every locus.
pub fn validate_cover(partitions: &[Partition], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    for p in partitions {
        if p.size() > MAX_PARTITION_SIZE {
            return Err(Error::PartitionTooLarge {
                size: p.size(),
                cap: MAX_PARTITION_SIZE,
            });
        }
        for &l in p.loci() {
            if l >= len {
                return Err(Error::InvalidCover {
                    len,
                    reason: format!("locus {l} out of range"),
                });
            }
            if std::mem::replace(&mut seen[l], true) {
                return Err(Error::InvalidCover {
                    len,
                    reason: format!("locus {l} appears twice"),
                });
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidCover {
            len,
            reason: format!("locus {missing} not covered"),
        });
    }
    Ok(())
}

/// `n * sum_j -p_j log2 p_j` over a table of counts summing to `n`; `0 log 0 = 0`.
pub(crate) fn entropy_bits<I: IntoIterator<Item = u64>>(counts: I, n: usize) -> f64 {
    let n_f = n as f64;
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n_f;
            -p * p.log2()
        })
        .sum();
    n_f * h
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalProductModel {
    partitions: Vec<Partition>,
    counts: Vec<Vec<u64>>,
    n: usize,
    genome_len: usize,
}

/// Tabulates configuration counts of every partition over `pop`.
pub fn fit_frequencies(partitions: &[Partition], pop: &Population) -> Result<MarginalProductModel> {
    validate_cover(partitions, pop.genome_len())?;
    let mut partitions = partitions.to_vec();
    partitions.sort_by_key(Partition::lowest);
    let counts = partitions
        .iter()
        .map(|p| {
            let mut table = vec![0u64; p.config_count()];
            for member in pop {
                table[p.config_of(member.genome())] += 1;
            }
            table
        })
        .collect();
    Ok(MarginalProductModel {
        partitions,
        counts,
        n: pop.len(),
        genome_len: pop.genome_len(),
    })
}

impl MarginalProductModel {
    /// One singleton partition per locus.
    pub fn singletons(pop: &Population) -> Result<Self> {
        let parts: Vec<Partition> = (0..pop.genome_len()).map(Partition::singleton).collect();
        fit_frequencies(&parts, pop)
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    /// Size of the population the tables were fitted on.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn genome_len(&self) -> usize {
        self.genome_len
    }

    /// Raw counts `n_ij` of partition `i`.
    pub fn counts(&self, i: usize) -> &[u64] {
        &self.counts[i]
    }

    /// `p_ij = n_ij / n`.
    pub fn probability(&self, i: usize, config: usize) -> f64 {
        self.counts[i][config] as f64 / self.n as f64
    }

    /// Bits to store the marginal tables: `log2(n) * sum_i (2^k_i - 1)`.
    pub fn model_complexity(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::PopulationTooSmall(self.n));
        }
        let free: usize = self.partitions.iter().map(|p| p.config_count() - 1).sum();
        Ok((self.n as f64).log2() * free as f64)
    }

    /// Entropy-coded population size: `n * sum_i sum_j -p_ij log2 p_ij`.
    pub fn compressed_population_complexity(&self) -> f64 {
        self.counts
            .iter()
            .map(|t| entropy_bits(t.iter().copied(), self.n))
            .sum()
    }

    pub fn mdl_score(&self) -> Result<f64> {
        Ok(self.model_complexity()? + self.compressed_population_complexity())
    }

    /// Does the model contain exactly this set of loci as one partition?
    pub fn contains_partition(&self, loci: &[usize]) -> bool {
        let mut sorted = loci.to_vec();
        sorted.sort_unstable();
        self.partitions.iter().any(|p| p.loci() == sorted.as_slice())
    }

    /// How many of `planted` appear as exact partitions of this model.
    pub fn recovered_partitions(&self, planted: &[Vec<usize>]) -> usize {
        planted.iter().filter(|b| self.contains_partition(b)).count()
    }

    /// Draws `count` offspring; each partition's configuration is sampled
    /// independently with probability `p_ij`.
    pub fn sample(&self, count: usize, rng: &mut RandomSource) -> Result<Population> {
        if count == 0 {
            return Err(Error::InvalidArgument("offspring count must be at least 1".into()));
        }
        let cumulative: Vec<(Vec<usize>, Vec<u64>)> = self
            .counts
            .iter()
            .map(|table| {
                let mut configs = Vec::new();
                let mut cum = Vec::new();
                let mut acc = 0u64;
                for (j, &c) in table.iter().enumerate() {
                    if c > 0 {
                        acc += c;
                        configs.push(j);
                        cum.push(acc);
                    }
                }
                (configs, cum)
            })
            .collect();
        let n = self.n as u64;
        let offspring = (0..count)
            .map(|_| {
                let mut genome = Genome::zeros(self.genome_len);
                for (p, (configs, cum)) in self.partitions.iter().zip(&cumulative) {
                    let config = if configs.len() == 1 {
                        configs[0]
                    } else {
                        let r = rng.below(n as usize) as u64;
                        configs[cum.partition_point(|&c| c <= r)]
                    };
                    p.write_config(&mut genome, config);
                }
                Individual::new(genome)
            })
            .collect();
        Population::new(offspring)
    }
}

/// Samples `count` offspring from a model fitted on `selected`.
pub fn sample_offspring(
    model: &MarginalProductModel,
    selected: &Population,
    count: usize,
    rng: &mut RandomSource,
) -> Result<Population> {
    if selected.genome_len() != model.genome_len() || selected.len() != model.n() {
        return Err(Error::InvalidArgument(
            "model was not fitted on the given selected population".into(),
        ));
    }
    model.sample(count, rng)
}

impl fmt::Display for MarginalProductModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.partitions {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl Serialize for MarginalProductModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let parts: Vec<&[usize]> = self.partitions.iter().map(Partition::loci).collect();
        let mut s = serializer.serialize_struct("MarginalProductModel", 3)?;
        s.serialize_field("structure", &self.to_string())?;
        s.serialize_field("partitions", &parts)?;
        s.serialize_field("n", &self.n)?;
        s.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(genomes: &[&str]) -> Population {
        Population::from_genomes(genomes.iter().map(|s| s.parse::<Genome>().unwrap())).unwrap()
    }

    fn parts(spec: &[&[usize]]) -> Vec<Partition> {
        spec.iter().map(|l| Partition::new(l.to_vec()).unwrap()).collect()
    }

    /// n/2 copies of `00` and n/2 of `11`.
    fn planted_pair(n: usize) -> Population {
        let mut g = vec!["00"; n / 2];
        g.extend(vec!["11"; n / 2]);
        pop(&g)
    }

    #[test]
    fn frequencies_singletons_and_pair() {
        let p = pop(&["00", "11"]);
        let m = fit_frequencies(&parts(&[&[0], &[1]]), &p).unwrap();
        for i in 0..2 {
            assert_eq!(m.probability(i, 0), 0.5);
            assert_eq!(m.probability(i, 1), 0.5);
        }
        let joint = fit_frequencies(&parts(&[&[0, 1]]), &p).unwrap();
        assert_eq!(joint.counts(0), &[1, 0, 0, 1]);
    }

    #[test]
    fn frequencies_point_mass() {
        let p = pop(&["1111"; 8]);
        let m = fit_frequencies(&parts(&[&[0, 1], &[2], &[3]]), &p).unwrap();
        assert_eq!(m.counts(0), &[0, 0, 0, 8]);
        assert_eq!(m.counts(1), &[0, 8]);
        assert_eq!(m.counts(2), &[0, 8]);
    }

    #[test]
    fn invalid_covers_are_rejected() {
        let p = pop(&["000"]);
        assert!(fit_frequencies(&parts(&[&[0, 1]]), &p).is_err());
        assert!(fit_frequencies(&parts(&[&[0, 1], &[1, 2]]), &p).is_err());
        assert!(fit_frequencies(&parts(&[&[0, 1, 2, 3]]), &p).is_err());
        assert!(Partition::new(vec![1, 1]).is_err());
        assert!(Partition::new(vec![]).is_err());
    }

    #[test]
    fn model_complexity_golden_values() {
        // [1,3][2][4] in one-based loci = [0,2][1][3].
        let p = Population::from_genomes((0..16).map(|i| {
            Genome::from_bits((0..4).map(|b| ((i >> b) & 1) as u8).collect()).unwrap()
        }))
        .unwrap();
        let m = fit_frequencies(&parts(&[&[0, 2], &[1], &[3]]), &p).unwrap();
        assert_eq!(m.model_complexity().unwrap(), 20.0);
        let singles = MarginalProductModel::singletons(&p).unwrap();
        assert_eq!(singles.model_complexity().unwrap(), 4.0 * 4.0);
        let whole = fit_frequencies(&parts(&[&[0, 1, 2, 3]]), &pop(&["0000", "1111"])).unwrap();
        assert_eq!(whole.model_complexity().unwrap(), 15.0);
        let tiny = MarginalProductModel::singletons(&pop(&["01"])).unwrap();
        assert_eq!(tiny.model_complexity(), Err(Error::PopulationTooSmall(1)));
    }

    #[test]
    fn compressed_complexity_golden_values() {
        let converged = MarginalProductModel::singletons(&pop(&["1010"; 6])).unwrap();
        assert_eq!(converged.compressed_population_complexity(), 0.0);

        let uniform = Population::from_genomes((0..8).map(|i| {
            Genome::from_bits((0..3).map(|b| ((i >> b) & 1) as u8).collect()).unwrap()
        }))
        .unwrap();
        let joint = fit_frequencies(&parts(&[&[0, 1, 2]]), &uniform).unwrap();
        assert_eq!(joint.compressed_population_complexity(), 8.0 * 3.0);

        let planted = planted_pair(32);
        let merged = fit_frequencies(&parts(&[&[0, 1]]), &planted).unwrap();
        let split = MarginalProductModel::singletons(&planted).unwrap();
        assert_eq!(merged.compressed_population_complexity(), 32.0);
        assert_eq!(split.compressed_population_complexity(), 64.0);
        assert_eq!(merged.mdl_score().unwrap(), 47.0);
        assert_eq!(split.mdl_score().unwrap(), 74.0);
    }

    #[test]
    fn display_is_sorted() {
        let p = pop(&["0000"]);
        let m = fit_frequencies(&parts(&[&[3, 0], &[2], &[1]]), &p).unwrap();
        assert_eq!(m.to_string(), "[0,3][1][2]");
    }

    #[test]
    fn config_index_is_msb_first() {
        let part = Partition::new(vec![3, 0]).unwrap();
        let g: Genome = "0001".parse().unwrap();
        assert_eq!(part.config_of(&g), 0b01);
        let mut h = Genome::zeros(4);
        part.write_config(&mut h, 0b10);
        assert_eq!(h.to_string(), "1000");
    }

    #[test]
    fn sampling_point_mass_and_zero_probability_configs() {
        let converged = pop(&["0110"; 5]);
        let m = MarginalProductModel::singletons(&converged).unwrap();
        let kids = sample_offspring(&m, &converged, 50, &mut RandomSource::new(1)).unwrap();
        assert!(kids.iter().all(|k| k.genome().to_string() == "0110"));

        let planted = planted_pair(10);
        let m = fit_frequencies(&parts(&[&[0, 1]]), &planted).unwrap();
        let kids = sample_offspring(&m, &planted, 500, &mut RandomSource::new(2)).unwrap();
        let mut saw = [false; 2];
        for k in &kids {
            let s = k.genome().to_string();
            assert!(s == "00" || s == "11", "{s}");
            saw[(s == "11") as usize] = true;
        }
        assert!(saw[0] && saw[1]);
        assert!(sample_offspring(&m, &planted, 0, &mut RandomSource::new(2)).is_err());
    }

    #[test]
    fn sampled_frequency_within_binomial_bound() {
        let mut g = vec!["1"; 3];
        g.extend(vec!["0"; 7]);
        let selected = pop(&g);
        let m = MarginalProductModel::singletons(&selected).unwrap();
        let count = 10_000;
        let kids = sample_offspring(&m, &selected, count, &mut RandomSource::new(5)).unwrap();
        let ones = kids.iter().filter(|k| k.genome().get(0) == 1).count() as f64;
        let sigma = (count as f64 * 0.3 * 0.7).sqrt();
        assert!((ones - 3000.0).abs() <= 3.0 * sigma, "{ones}");
    }
}
