//! Binary genomes, individuals with provenance-tagged fitness, populations and
//! the seeded random source every stochastic operator draws from.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length bitstring. Every locus holds 0 or 1.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    bits: Vec<u8>,
}

impl Genome {
    pub fn zeros(len: usize) -> Self {
        Genome { bits: vec![0; len] }
    }

    pub fn ones(len: usize) -> Self {
        Genome { bits: vec![1; len] }
    }

    /// Builds a genome from 0/1 values; anything else is rejected.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidArgument(format!(
                "locus {pos} holds {} (binary alphabet only)",
                bits[pos]
            )));
        }
        Ok(Genome { bits })
    }

    pub fn random(len: usize, rng: &mut RandomSource) -> Self {
        Genome {
            bits: (0..len).map(|_| rng.bit()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, locus: usize) -> u8 {
        self.bits[locus]
    }

    pub fn set(&mut self, locus: usize, value: bool) {
        self.bits[locus] = value as u8;
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

impl std::str::FromStr for Genome {
    type Err = Error;

    /// Parses `"0110 1111"`; whitespace and underscores are ignored.
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidArgument(format!("bad genome character `{other}`"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Genome { bits })
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome({self})")
    }
}

/// Where an individual's fitness came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Unset,
    Evaluated,
    Inherited,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    genome: Genome,
    fitness: f64,
    provenance: Provenance,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Individual {
            genome,
            fitness: 0.0,
            provenance: Provenance::Unset,
        }
    }

    pub fn with_fitness(genome: Genome, fitness: f64, provenance: Provenance) -> Self {
        Individual {
            genome,
            fitness,
            provenance,
        }
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `None` until a fitness has been assigned.
    pub fn fitness(&self) -> Option<f64> {
        match self.provenance {
            Provenance::Unset => None,
            _ => Some(self.fitness),
        }
    }

    /// Records a fitness value. Fails if one was already assigned: an
    /// individual is either evaluated or inherited, never both.
    pub fn assign(&mut self, fitness: f64, provenance: Provenance) -> Result<()> {
        if self.provenance != Provenance::Unset {
            return Err(Error::FitnessAlreadyAssigned);
        }
        if provenance == Provenance::Unset {
            return Err(Error::InvalidArgument("cannot assign Unset provenance".into()));
        }
        self.fitness = fitness;
        self.provenance = provenance;
        Ok(())
    }

    pub fn is_evaluated(&self) -> bool {
        self.provenance == Provenance::Evaluated
    }
}

/// A non-empty set of individuals sharing one genome length.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    members: Vec<Individual>,
    genome_len: usize,
}

impl Population {
    pub fn new(members: Vec<Individual>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("population must be non-empty".into()))?;
        let genome_len = first.genome.len();
        if let Some(bad) = members.iter().find(|m| m.genome.len() != genome_len) {
            return Err(Error::LengthMismatch {
                expected: genome_len,
                actual: bad.genome.len(),
            });
        }
        Ok(Population {
            members,
            genome_len,
        })
    }

    pub fn from_genomes<I: IntoIterator<Item = Genome>>(genomes: I) -> Result<Self> {
        Population::new(genomes.into_iter().map(Individual::new).collect())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn genome_len(&self) -> usize {
        self.genome_len
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Individual] {
        &mut self.members
    }

    pub fn get(&self, index: usize) -> &Individual {
        &self.members[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Individual> {
        self.members.iter()
    }

    pub fn into_members(self) -> Vec<Individual> {
        self.members
    }

    /// Mean recorded fitness over members with a fitness, `None` if there are none.
    pub fn mean_fitness(&self) -> Option<f64> {
        mean(self.members.iter().filter_map(Individual::fitness))
    }

    /// Mean over evaluated members only.
    pub fn mean_evaluated_fitness(&self) -> Option<f64> {
        mean(
            self.members
                .iter()
                .filter(|m| m.is_evaluated())
                .map(|m| m.fitness),
        )
    }

    pub fn evaluated_count(&self) -> usize {
        self.members.iter().filter(|m| m.is_evaluated()).count()
    }

    /// True when every locus frequency is within `1/(2n)` of 0 or 1.
    pub fn is_converged(&self) -> bool {
        let n = self.members.len() as f64;
        let eps = 0.5 / n;
        (0..self.genome_len).all(|locus| {
            let ones = self.members.iter().filter(|m| m.genome.get(locus) == 1).count() as f64;
            let p = ones / n;
            p <= eps || p >= 1.0 - eps
        })
    }
}

fn mean<I: Iterator<Item = f64>>(values: I) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl<'a> IntoIterator for &'a Population {
    type Item = &'a Individual;
    type IntoIter = std::slice::Iter<'a, Individual>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// Seeded, replayable pseudo-random stream (ChaCha8).
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bit(&mut self) -> u8 {
        (self.rng.next_u32() & 1) as u8
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// `n` genomes of `len` uniformly random bits each, all fitness-unset.
pub fn random_population(len: usize, n: usize, rng: &mut RandomSource) -> Result<Population> {
    if len == 0 {
        return Err(Error::InvalidArgument("genome length must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be at least 1".into()));
    }
    Population::from_genomes((0..n).map(|_| Genome::random(len, rng)))
}

/// Index of the fittest member; ties go to the lowest index.
pub fn best_index(pop: &Population) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, member) in pop.iter().enumerate() {
        let f = member.fitness().ok_or(Error::UnsetFitness { index: i })?;
        match best {
            Some((_, bf)) if f <= bf => {}
            _ => best = Some((i, f)),
        }
    }
    Ok(best.expect("population is non-empty").0)
}

pub fn best_individual(pop: &Population) -> Result<Individual> {
    best_index(pop).map(|i| pop.get(i).clone())
}
