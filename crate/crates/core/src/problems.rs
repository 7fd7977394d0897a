//! Additively separable benchmarks with planted building-block structure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::EvaluationLedger;
use crate::error::{Error, Result};
use crate::genome::{Genome, RandomSource};

/// Largest block size for which the block variance is enumerated.
const MAX_ENUMERATED_BLOCK: usize = 20;

/// Parsed form of the `onemax:<l>` / `trap:<m>x<k>[:d]` strings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProblemSpec {
    OneMax { len: usize },
    Trap { m: usize, k: usize, d: f64 },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match *self {
            ProblemSpec::OneMax { len } => onemax(len),
            ProblemSpec::Trap { m, k, d } => mk_trap(m, k, d),
        }
    }

    /// Number of building blocks.
    pub fn block_count(&self) -> usize {
        match *self {
            ProblemSpec::OneMax { len } => len,
            ProblemSpec::Trap { m, .. } => m,
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ProblemSpec(s.to_string());
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        match kind.to_ascii_lowercase().as_str() {
            "onemax" => {
                let len = rest.parse::<usize>().map_err(|_| bad())?;
                Ok(ProblemSpec::OneMax { len })
            }
            "trap" => {
                let (shape, d) = match rest.split_once(':') {
                    Some((shape, d)) => (shape, d.parse::<f64>().map_err(|_| bad())?),
                    None => (rest, 1.0),
                };
                let (m, k) = shape.split_once(['x', 'X']).ok_or_else(bad)?;
                Ok(ProblemSpec::Trap {
                    m: m.parse().map_err(|_| bad())?,
                    k: k.parse().map_err(|_| bad())?,
                    d,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::OneMax { len } => write!(f, "onemax:{len}"),
            ProblemSpec::Trap { m, k, d } if *d == 1.0 => write!(f, "trap:{m}x{k}"),
            ProblemSpec::Trap { m, k, d } => write!(f, "trap:{m}x{k}:{d}"),
        }
    }
}

/// Per-block fitness contribution as a function of the block's one-count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockFunction {
    /// Each block is one locus worth its bit value.
    OneMax,
    /// Fully deceptive trap of size `k` with signal `d`.
    Trap { k: usize, d: f64 },
}

impl BlockFunction {
    pub fn value(&self, ones: usize) -> f64 {
        match *self {
            BlockFunction::OneMax => ones as f64,
            BlockFunction::Trap { k, d } => trap(k, d, ones),
        }
    }
}

/// `k` at the all-ones block, otherwise `(k - d)(1 - u/(k-1))`.
pub fn trap(k: usize, d: f64, ones: usize) -> f64 {
    if ones == k {
        k as f64
    } else {
        (k as f64 - d) * (1.0 - ones as f64 / (k as f64 - 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    len: usize,
    blocks: Vec<Vec<usize>>,
    function: BlockFunction,
    optimum: f64,
    signal: f64,
    bb_variance: f64,
}

/// Counts ones in `[0, len)`; fitness equals that count.
pub fn onemax(len: usize) -> Result<Problem> {
    if len == 0 {
        return Err(Error::InvalidArgument("onemax needs at least one locus".into()));
    }
    Ok(Problem {
        len,
        blocks: (0..len).map(|i| vec![i]).collect(),
        function: BlockFunction::OneMax,
        optimum: len as f64,
        signal: 1.0,
        bb_variance: 0.25,
    })
}

/// `m` consecutive deceptive trap blocks of `k` bits each.
pub fn mk_trap(m: usize, k: usize, d: f64) -> Result<Problem> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("trap needs k >= 2, got {k}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("trap needs at least one block".into()));
    }
    if !(d > 0.0 && d <= 1.0) {
        return Err(Error::InvalidArgument(format!("trap signal must be in (0, 1], got {d}")));
    }
    if k > MAX_ENUMERATED_BLOCK {
        return Err(Error::PartitionTooLarge {
            size: k,
            cap: MAX_ENUMERATED_BLOCK,
        });
    }
    let function = BlockFunction::Trap { k, d };
    Ok(Problem {
        len: m * k,
        blocks: (0..m).map(|b| (b * k..(b + 1) * k).collect()).collect(),
        function,
        optimum: (m * k) as f64,
        signal: d,
        bb_variance: enumerated_block_variance(k, &function),
    })
}

/// Variance of one block's contribution under uniformly random bits, by
/// enumerating all `2^k` configurations.
fn enumerated_block_variance(k: usize, function: &BlockFunction) -> f64 {
    let configs = 1u64 << k;
    let values: Vec<f64> = (0..configs)
        .map(|c| function.value(c.count_ones() as usize))
        .collect();
    let mean = values.iter().sum::<f64>() / configs as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / configs as f64
}

impl Problem {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The true building blocks, each a sorted list of loci.
    pub fn planted_partitions(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Size of the largest block.
    pub fn block_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn function(&self) -> BlockFunction {
        self.function
    }

    pub fn optimum_fitness(&self) -> f64 {
        self.optimum
    }

    /// Signal difference `d` between the best and second-best block.
    pub fn signal(&self) -> f64 {
        self.signal
    }

    /// Fitness variance of a single block under uniform bits.
    pub fn bb_variance(&self) -> f64 {
        self.bb_variance
    }

    /// Same problem with its loci relabelled by a random permutation, so
    /// building blocks are no longer contiguous.
    pub fn shuffled(&self, rng: &mut RandomSource) -> Problem {
        let mut perm: Vec<usize> = (0..self.len).collect();
        rng.shuffle(&mut perm);
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut mapped: Vec<usize> = b.iter().map(|&l| perm[l]).collect();
                mapped.sort_unstable();
                mapped
            })
            .collect();
        Problem {
            blocks,
            ..self.clone()
        }
    }

    fn check_len(&self, genome: &Genome) -> Result<()> {
        if genome.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: genome.len(),
            });
        }
        Ok(())
    }

    fn block_ones(&self, genome: &Genome, block: &[usize]) -> usize {
        block.iter().map(|&l| genome.get(l) as usize).sum()
    }

    /// Pure objective value. Does not touch any ledger; search code must go
    /// through [`Problem::evaluate`].
    pub fn objective(&self, genome: &Genome) -> Result<f64> {
        self.check_len(genome)?;
        Ok(self
            .blocks
            .iter()
            .map(|b| self.function.value(self.block_ones(genome, b)))
            .sum())
    }

    /// Counted fitness evaluation: one ledger tick per call.
    pub fn evaluate(&self, genome: &Genome, ledger: &mut EvaluationLedger) -> Result<f64> {
        let f = self.objective(genome)?;
        ledger.record();
        Ok(f)
    }

    pub fn is_block_optimal(&self, genome: &Genome, block: usize) -> bool {
        let b = &self.blocks[block];
        self.block_ones(genome, b) == b.len()
    }

    /// Number of planted blocks at their optimal configuration.
    pub fn count_correct_bbs(&self, genome: &Genome) -> Result<usize> {
        self.check_len(genome)?;
        Ok((0..self.blocks.len())
            .filter(|&b| self.is_block_optimal(genome, b))
            .count())
    }
}
