//! Greedy MDL structure search.
//!
//! Starts from all-singleton partitions and, each round, applies the pairwise
//! merge with the largest strict decrease of the MDL score. Equal decreases
//! go to the merge whose partitions have the smallest lowest loci, compared
//! lexicographically. Joint configuration counts are computed either from
//! per-configuration indicator bitsets (`popcount(a & b)`), which is what makes
//! the initial all-pairs round over singletons cheap, or by direct histogram.

use super::{entropy_bits, MarginalProductModel, Partition, MAX_PARTITION_SIZE};
use crate::error::{Error, Result};
use crate::genome::Population;

/// Indicator bitsets are kept only for tables up to this many entries.
const INDICATOR_TABLE_LIMIT: usize = 1 << 16;
/// Dense joint histograms larger than this fall back to sort-and-count.
const DENSE_HISTOGRAM_LIMIT: usize = 1 << 20;

/// Model returned by the search plus the partition structure and MDL score
/// after every accepted merge (index 0 is the all-singleton start).
#[derive(Clone, Debug)]
pub struct SearchTrace {
    pub model: MarginalProductModel,
    pub steps: Vec<Vec<Partition>>,
    pub scores: Vec<f64>,
}

struct Group {
    loci: Vec<usize>,
    codes: Vec<u32>,
    counts: Vec<u64>,
    nonzero: Vec<u32>,
    indicators: Option<Vec<Vec<u64>>>,
    entropy: f64,
}

impl Group {
    fn k(&self) -> usize {
        self.loci.len()
    }
}

struct Workspace<'a> {
    pop: &'a Population,
    n: usize,
    words: usize,
    log2n: f64,
    hist: Vec<u64>,
    joint: Vec<u64>,
    col_sums: Vec<u64>,
    sort_buf: Vec<u64>,
}

impl<'a> Workspace<'a> {
    fn new(pop: &'a Population) -> Self {
        let n = pop.len();
        Workspace {
            pop,
            n,
            words: n.div_ceil(64),
            log2n: (n as f64).log2(),
            hist: Vec::new(),
            joint: Vec::new(),
            col_sums: Vec::new(),
            sort_buf: Vec::new(),
        }
    }

    fn group(&self, loci: Vec<usize>) -> Group {
        let codes: Vec<u32> = self
            .pop
            .iter()
            .map(|m| {
                let g = m.genome();
                loci.iter().fold(0u32, |acc, &l| (acc << 1) | g.get(l) as u32)
            })
            .collect();
        let mut counts = vec![0u64; 1 << loci.len()];
        for &c in &codes {
            counts[c as usize] += 1;
        }
        let nonzero: Vec<u32> = (0..counts.len() as u32)
            .filter(|&j| counts[j as usize] > 0)
            .collect();
        let indicators = (counts.len() <= INDICATOR_TABLE_LIMIT).then(|| {
            let mut slot = vec![usize::MAX; counts.len()];
            for (s, &j) in nonzero.iter().enumerate() {
                slot[j as usize] = s;
            }
            let mut sets = vec![vec![0u64; self.words]; nonzero.len()];
            for (x, &c) in codes.iter().enumerate() {
                sets[slot[c as usize]][x / 64] |= 1u64 << (x % 64);
            }
            sets
        });
        let entropy = entropy_bits(counts.iter().copied(), self.n);
        Group {
            loci,
            codes,
            counts,
            nonzero,
            indicators,
            entropy,
        }
    }

    /// `n * H` of the joint configuration of `a` and `b`.
    fn joint_entropy(&mut self, a: &Group, b: &Group) -> f64 {
        let (na, nb) = (a.nonzero.len(), b.nonzero.len());
        let bitset_cost = (na - 1) * (nb - 1) * self.words;
        match (&a.indicators, &b.indicators) {
            (Some(ia), Some(ib)) if bitset_cost <= self.n => {
                self.joint_counts_bitset(a, ia, b, ib);
            }
            _ => self.joint_counts_direct(a, b),
        }
        entropy_bits(self.joint.iter().copied(), self.n)
    }

    fn joint_counts_bitset(&mut self, a: &Group, ia: &[Vec<u64>], b: &Group, ib: &[Vec<u64>]) {
        let (na, nb) = (a.nonzero.len(), b.nonzero.len());
        self.joint.clear();
        self.col_sums.clear();
        self.col_sums.resize(nb, 0);
        // The last row and column follow from the marginals.
        for r in 0..na - 1 {
            let mut row = 0u64;
            for c in 0..nb - 1 {
                let cnt: u64 = ia[r]
                    .iter()
                    .zip(&ib[c])
                    .map(|(x, y)| (x & y).count_ones() as u64)
                    .sum();
                self.joint.push(cnt);
                row += cnt;
                self.col_sums[c] += cnt;
            }
            let last = a.counts[a.nonzero[r] as usize] - row;
            self.joint.push(last);
            self.col_sums[nb - 1] += last;
        }
        for c in 0..nb {
            self.joint
                .push(b.counts[b.nonzero[c] as usize] - self.col_sums[c]);
        }
    }

    fn joint_counts_direct(&mut self, a: &Group, b: &Group) {
        let kb = b.k();
        let size = 1usize << (a.k() + kb);
        self.joint.clear();
        if size <= DENSE_HISTOGRAM_LIMIT && size <= 16 * self.n.max(256) {
            self.hist.clear();
            self.hist.resize(size, 0);
            for (&ca, &cb) in a.codes.iter().zip(&b.codes) {
                self.hist[((ca as usize) << kb) | cb as usize] += 1;
            }
            self.joint.extend(self.hist.iter().copied().filter(|&c| c > 0));
        } else {
            self.sort_buf.clear();
            self.sort_buf.extend(
                a.codes
                    .iter()
                    .zip(&b.codes)
                    .map(|(&ca, &cb)| ((ca as u64) << kb) | cb as u64),
            );
            self.sort_buf.sort_unstable();
            let mut i = 0;
            while i < self.sort_buf.len() {
                let v = self.sort_buf[i];
                let start = i;
                while i < self.sort_buf.len() && self.sort_buf[i] == v {
                    i += 1;
                }
                self.joint.push((i - start) as u64);
            }
        }
    }

    /// Score change of merging `a` and `b`, or `None` when it cannot strictly improve.
    fn merge_delta(&mut self, a: &Group, b: &Group) -> Option<f64> {
        let (ka, kb) = (a.k(), b.k());
        if ka + kb > MAX_PARTITION_SIZE {
            return None;
        }
        let extra_params = ((1u64 << (ka + kb)) - (1u64 << ka) - (1u64 << kb) + 1) as f64;
        let model_cost = self.log2n * extra_params;
        // Mutual information never exceeds either marginal entropy.
        if model_cost > a.entropy.min(b.entropy) + 1e-9 * self.n as f64 {
            return None;
        }
        let delta = model_cost + self.joint_entropy(a, b) - a.entropy - b.entropy;
        (delta < 0.0).then_some(delta)
    }
}

/// Greedy MDL model search over the (selected) population `pop`.
pub fn greedy_model_search(pop: &Population) -> Result<MarginalProductModel> {
    run(pop, false).map(|t| t.model)
}

/// Same search, recording every intermediate structure and score.
pub fn greedy_model_search_traced(pop: &Population) -> Result<SearchTrace> {
    run(pop, true)
}

fn run(pop: &Population, trace: bool) -> Result<SearchTrace> {
    let n = pop.len();
    if n < 2 {
        return Err(Error::PopulationTooSmall(n));
    }
    let len = pop.genome_len();
    let mut ws = Workspace::new(pop);
    // Slot i holds the group whose lowest locus is i.
    let mut groups: Vec<Option<Group>> = (0..len).map(|l| Some(ws.group(vec![l]))).collect();
    let mut delta = vec![None; len * len];
    for i in 0..len {
        for j in i + 1..len {
            let (a, b) = (groups[i].as_ref().unwrap(), groups[j].as_ref().unwrap());
            delta[i * len + j] = ws.merge_delta(a, b);
        }
    }

    let structure = |groups: &[Option<Group>]| -> Vec<Partition> {
        groups
            .iter()
            .flatten()
            .map(|g| Partition { loci: g.loci.clone() })
            .collect()
    };
    let mut score: f64 = groups
        .iter()
        .flatten()
        .map(|g| ws.log2n * ((g.counts.len() - 1) as f64) + g.entropy)
        .sum();
    let mut steps = Vec::new();
    let mut scores = vec![score];
    if trace {
        steps.push(structure(&groups));
    }

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..len {
            if groups[i].is_none() {
                continue;
            }
            for j in i + 1..len {
                if groups[j].is_none() {
                    continue;
                }
                if let Some(d) = delta[i * len + j] {
                    if best.is_none_or(|(_, _, bd)| d < bd) {
                        best = Some((i, j, d));
                    }
                }
            }
        }
        let Some((i, j, d)) = best else { break };

        let gi = groups[i].take().unwrap();
        let gj = groups[j].take().unwrap();
        let mut loci = gi.loci;
        loci.extend_from_slice(&gj.loci);
        loci.sort_unstable();
        groups[i] = Some(ws.group(loci));
        score += d;
        scores.push(score);
        if trace {
            steps.push(structure(&groups));
        }

        let merged = groups[i].as_ref().unwrap();
        for x in 0..len {
            if x == i {
                continue;
            }
            if let Some(other) = groups[x].as_ref() {
                let value = ws.merge_delta(merged, other);
                let (lo, hi) = if x < i { (x, i) } else { (i, x) };
                delta[lo * len + hi] = value;
            }
        }
    }

    let groups: Vec<Group> = groups.into_iter().flatten().collect();
    let model = MarginalProductModel {
        partitions: groups
            .iter()
            .map(|g| Partition { loci: g.loci.clone() })
            .collect(),
        counts: groups.into_iter().map(|g| g.counts).collect(),
        n,
        genome_len: len,
    };
    Ok(SearchTrace {
        model,
        steps,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fit_frequencies;
    use super::*;
    use crate::genome::{random_population, Genome, RandomSource};

    fn pop(genomes: &[&str]) -> Population {
        Population::from_genomes(genomes.iter().map(|s| s.parse::<Genome>().unwrap())).unwrap()
    }

    /// Brute force: no pairwise merge of the returned model lowers the score.
    fn assert_locally_optimal(model: &MarginalProductModel, pop: &Population) {
        let base = model.mdl_score().unwrap();
        let parts = model.partitions();
        for a in 0..parts.len() {
            for b in a + 1..parts.len() {
                if parts[a].size() + parts[b].size() > MAX_PARTITION_SIZE {
                    continue;
                }
                let mut merged: Vec<Partition> = parts
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != a && i != b)
                    .map(|(_, p)| p.clone())
                    .collect();
                merged.push(parts[a].union(&parts[b]));
                let s = fit_frequencies(&merged, pop).unwrap().mdl_score().unwrap();
                assert!(s >= base - 1e-9, "merge {} {} lowers score {s} < {base}", parts[a], parts[b]);
            }
        }
    }

    #[test]
    fn planted_correlation_is_merged() {
        // Loci 0 and 2 copy each other; locus 1 is independent.
        let mut g = Vec::new();
        for i in 0..32 {
            let a = i % 2;
            let b = (i / 2) % 2;
            g.push(format!("{a}{b}{a}"));
        }
        let p = pop(&g.iter().map(String::as_str).collect::<Vec<_>>());
        let m = greedy_model_search(&p).unwrap();
        assert!(m.contains_partition(&[0, 2]));
        assert_eq!(m.to_string(), "[0,2][1]");
        assert_locally_optimal(&m, &p);
    }

    #[test]
    fn converged_population_stays_singleton() {
        let p = pop(&["10110"; 12]);
        let m = greedy_model_search(&p).unwrap();
        assert_eq!(m.partition_count(), 5);
        assert_eq!(m.compressed_population_complexity(), 0.0);
    }

    #[test]
    fn rejects_tiny_population() {
        assert_eq!(
            greedy_model_search(&pop(&["01"])).unwrap_err(),
            Error::PopulationTooSmall(1)
        );
    }

    #[test]
    fn iid_uniform_bits_stay_independent() {
        let mut merged_runs = 0;
        for seed in 0..20 {
            let p = random_population(16, 600, &mut RandomSource::new(seed)).unwrap();
            let m = greedy_model_search(&p).unwrap();
            if m.partition_count() != 16 {
                merged_runs += 1;
            }
        }
        assert_eq!(merged_runs, 0);
    }

    #[test]
    fn search_result_is_locally_optimal_and_monotone() {
        for seed in 0..6 {
            let mut rng = RandomSource::new(100 + seed);
            // Correlated blocks of 3 with some noise, plus independent bits.
            let genomes: Vec<Genome> = (0..120)
                .map(|_| {
                    let mut bits = Vec::new();
                    for _ in 0..3 {
                        let v = rng.bit();
                        for _ in 0..3 {
                            bits.push(if rng.bernoulli(0.1) { 1 - v } else { v });
                        }
                    }
                    bits.push(rng.bit());
                    Genome::from_bits(bits).unwrap()
                })
                .collect();
            let p = Population::from_genomes(genomes).unwrap();
            let trace = greedy_model_search_traced(&p).unwrap();
            assert_locally_optimal(&trace.model, &p);
            for w in trace.scores.windows(2) {
                assert!(w[1] < w[0]);
            }
            // Running scores agree with independent recomputation.
            for (parts, &s) in trace.steps.iter().zip(&trace.scores) {
                let direct = fit_frequencies(parts, &p).unwrap().mdl_score().unwrap();
                assert!((direct - s).abs() < 1e-6 * direct.max(1.0));
            }
            for block in [[0, 1, 2], [3, 4, 5], [6, 7, 8]] {
                assert!(trace.model.contains_partition(&block), "{}", trace.model);
            }
        }
    }

    #[test]
    fn direct_and_bitset_joint_counts_agree() {
        let p = random_population(10, 300, &mut RandomSource::new(9)).unwrap();
        let mut ws = Workspace::new(&p);
        let a = ws.group(vec![0, 3, 5]);
        let b = ws.group(vec![1, 7]);
        let (ia, ib) = (a.indicators.clone().unwrap(), b.indicators.clone().unwrap());
        ws.joint_counts_bitset(&a, &ia, &b, &ib);
        let mut bits = ws.joint.clone();
        ws.joint_counts_direct(&a, &b);
        let mut direct = ws.joint.clone();
        bits.retain(|&c| c > 0);
        bits.sort_unstable();
        direct.sort_unstable();
        assert_eq!(bits, direct);
        assert_eq!(direct.iter().sum::<u64>(), 300);
    }
}
