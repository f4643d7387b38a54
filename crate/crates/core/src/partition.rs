//! The lattice of set partitions of particle labels.
//!
//! A [`Partition`] is stored as a restricted-growth string: entry `i` is the
//! block index of particle `i + 1`, and block indices appear in order of
//! their least element. This makes equality structural and gives the
//! canonical external form `(125)(37)(46)` for free.
//!
//! Ordering follows the cluster-expansion convention: `a ⊇ b` ("a coarsens
//! b") when every block of `b` lies inside a block of `a`. The one-cluster
//! partition is the top element `1`, the all-singletons partition is the
//! bottom element `0`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest particle count accepted by enumeration (Bell(12) = 4,213,597).
pub const MAX_PARTICLES: usize = 12;

/// Largest particle count for which a full [`LatticeTable`] is materialised.
pub const MAX_TABLE_PARTICLES: usize = 7;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    rgs: Vec<u8>,
    n_blocks: usize,
}

impl Partition {
    /// Builds a partition from a restricted-growth string.
    pub fn from_rgs(rgs: Vec<u8>) -> Result<Self> {
        if rgs.is_empty() || rgs.len() > MAX_PARTICLES {
            return Err(Error::Capacity(format!("particle count {} outside 1..={MAX_PARTICLES}", rgs.len())));
        }
        let mut next = 0u8;
        for &b in &rgs {
            if b > next {
                return Err(Error::Domain(format!("{rgs:?} is not a restricted-growth string")));
            }
            if b == next {
                next += 1;
            }
        }
        Ok(Partition { rgs, n_blocks: next as usize })
    }

    /// Builds a partition from arbitrary blocks of 1-based labels.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        if n == 0 || n > MAX_PARTICLES {
            return Err(Error::Capacity(format!("particle count {n} outside 1..={MAX_PARTICLES}")));
        }
        let mut owner = vec![usize::MAX; n];
        for (bi, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Domain("empty block".into()));
            }
            for &label in block {
                if label == 0 || label > n {
                    return Err(Error::Domain(format!("label {label} outside 1..={n}")));
                }
                if owner[label - 1] != usize::MAX {
                    return Err(Error::Domain(format!("label {label} appears twice")));
                }
                owner[label - 1] = bi;
            }
        }
        if let Some(missing) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Domain(format!("label {} not covered", missing + 1)));
        }
        Ok(Self::canonicalize(&owner))
    }

    /// Relabels arbitrary block ids into restricted-growth form.
    fn canonicalize(ids: &[usize]) -> Self {
        let mut map: HashMap<usize, u8> = HashMap::new();
        let mut rgs = Vec::with_capacity(ids.len());
        for &id in ids {
            let len = map.len() as u8;
            rgs.push(*map.entry(id).or_insert(len));
        }
        let n_blocks = map.len();
        Partition { rgs, n_blocks }
    }

    /// The one-cluster partition `1`.
    pub fn top(n: usize) -> Result<Self> {
        Self::from_rgs(vec![0; n])
    }

    /// The `n`-cluster partition `0`.
    pub fn bottom(n: usize) -> Result<Self> {
        if n > MAX_PARTICLES {
            return Err(Error::Capacity(format!("particle count {n} outside 1..={MAX_PARTICLES}")));
        }
        Self::from_rgs((0..n as u8).collect())
    }

    pub fn n_particles(&self) -> usize {
        self.rgs.len()
    }

    /// Number of clusters `n_a`.
    pub fn n_clusters(&self) -> usize {
        self.n_blocks
    }

    pub fn rgs(&self) -> &[u8] {
        &self.rgs
    }

    /// Block index of a 1-based particle label.
    pub fn block_of(&self, label: usize) -> usize {
        self.rgs[label - 1] as usize
    }

    /// Blocks as sorted 1-based labels, ordered by least element.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.n_blocks];
        for (i, &b) in self.rgs.iter().enumerate() {
            blocks[b as usize].push(i + 1);
        }
        blocks
    }

    /// Sizes `n_{a_i}` of the clusters.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_blocks];
        for &b in &self.rgs {
            sizes[b as usize] += 1;
        }
        sizes
    }

    pub fn is_top(&self) -> bool {
        self.n_blocks == 1
    }

    pub fn is_bottom(&self) -> bool {
        self.n_blocks == self.rgs.len()
    }

    fn check_same(&self, other: &Partition) -> Result<()> {
        if self.rgs.len() != other.rgs.len() {
            return Err(Error::Domain(format!("partitions of {} and {} particles", self.rgs.len(), other.rgs.len())));
        }
        Ok(())
    }

    /// `self ⊆ other`: every block of `self` lies inside a block of `other`.
    pub fn refines(&self, other: &Partition) -> Result<bool> {
        self.check_same(other)?;
        Ok(refines_unchecked(&self.rgs, &other.rgs, self.n_blocks))
    }

    /// `self ⊇ other`.
    pub fn coarsens(&self, other: &Partition) -> Result<bool> {
        other.refines(self)
    }

    /// Least upper bound `a ∪ b`: the finest partition coarsening both.
    pub fn join(&self, other: &Partition) -> Result<Partition> {
        self.check_same(other)?;
        let n = self.rgs.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for rgs in [&self.rgs, &other.rgs] {
            let mut first: Vec<Option<usize>> = vec![None; n];
            for (i, &b) in rgs.iter().enumerate() {
                match first[b as usize] {
                    None => first[b as usize] = Some(i),
                    Some(j) => {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            parent[ri.max(rj)] = ri.min(rj);
                        }
                    }
                }
            }
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        Ok(Self::canonicalize(&roots))
    }

    /// Greatest lower bound `a ∩ b`: all non-empty pairwise block intersections.
    pub fn meet(&self, other: &Partition) -> Result<Partition> {
        self.check_same(other)?;
        let ids: Vec<usize> =
            self.rgs.iter().zip(&other.rgs).map(|(&a, &b)| a as usize * MAX_PARTICLES + b as usize).collect();
        Ok(Self::canonicalize(&ids))
    }

    /// Counts, for each block of `self`, the blocks of `finer` inside it.
    /// Caller guarantees `finer ⊆ self`.
    fn nested_counts(&self, finer: &Partition) -> Vec<usize> {
        let mut seen = vec![false; finer.n_blocks];
        let mut counts = vec![0usize; self.n_blocks];
        for (i, &fb) in finer.rgs.iter().enumerate() {
            if !seen[fb as usize] {
                seen[fb as usize] = true;
                counts[self.rgs[i] as usize] += 1;
            }
        }
        counts
    }
}

fn refines_unchecked(finer: &[u8], coarser: &[u8], finer_blocks: usize) -> bool {
    let mut image = vec![u8::MAX; finer_blocks];
    for (&f, &c) in finer.iter().zip(coarser) {
        let slot = &mut image[f as usize];
        if *slot == u8::MAX {
            *slot = c;
        } else if *slot != c {
            return false;
        }
    }
    true
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wide = self.rgs.len() > 9;
        for block in self.blocks() {
            f.write_str("(")?;
            for (k, label) in block.iter().enumerate() {
                if wide && k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{label}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Partition{self}")
    }
}

impl FromStr for Partition {
    type Err = Error;

    /// Parses `(125)(37)(46)`; with ten or more particles labels inside a
    /// block are comma separated, e.g. `(1,10)(2,...)`. Block and element
    /// order is free; the particle count is the largest label.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut blocks = Vec::new();
        let mut rest = s.as_str();
        while !rest.is_empty() {
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.find(')').map(|end| (&r[..end], &r[end + 1..])))
                .ok_or_else(|| Error::Parse(format!("malformed partition {s:?}")))?;
            let labels: Result<Vec<usize>> = if inner.0.contains(',') {
                inner.0.split(',').map(|t| t.parse().map_err(|_| Error::Parse(format!("bad label {t:?}")))).collect()
            } else {
                inner
                    .0
                    .chars()
                    .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(|| Error::Parse(format!("bad label {c:?}"))))
                    .collect()
            };
            blocks.push(labels?);
            rest = inner.1;
        }
        let n = blocks.iter().flatten().copied().max().ok_or_else(|| Error::Parse("empty partition".into()))?;
        Partition::from_blocks(n, &blocks)
    }
}

impl serde::Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Lazily enumerates restricted-growth strings in lexicographic order,
/// so `1` comes first and `0` last.
pub struct PartitionIter {
    rgs: Vec<u8>,
    maxes: Vec<u8>,
    done: bool,
}

impl PartitionIter {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_PARTICLES {
            return Err(Error::Capacity(format!("particle count {n} outside 1..={MAX_PARTICLES}")));
        }
        Ok(PartitionIter { rgs: vec![0; n], maxes: vec![0; n], done: false })
    }
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let out = Partition { rgs: self.rgs.clone(), n_blocks: block_count(&self.rgs) };
        // advance: rightmost position that may still grow
        let n = self.rgs.len();
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.rgs[i] <= self.maxes[i - 1] {
                self.rgs[i] += 1;
                self.maxes[i] = self.maxes[i - 1].max(self.rgs[i]);
                for j in i + 1..n {
                    self.rgs[j] = 0;
                    self.maxes[j] = self.maxes[j - 1];
                }
                break;
            }
        }
        Some(out)
    }
}

fn block_count(rgs: &[u8]) -> usize {
    rgs.iter().copied().max().map_or(0, |m| m as usize + 1)
}

/// All set partitions of `{1..n}` in canonical order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    Ok(PartitionIter::new(n)?.collect())
}

/// Bell numbers by the Bell triangle.
pub fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

pub(crate) fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// Zeta function of the order: 1 when `a ⊇ b`.
pub fn zeta(a: &Partition, b: &Partition) -> Result<i64> {
    Ok(i64::from(a.coarsens(b)?))
}

/// Möbius function `μ(a, b)` of the partition lattice, nonzero only for `a ⊇ b`:
/// `(−1)^{n_a} ∏_i (−1)^{n_{b_i}} (n_{b_i} − 1)!` with `n_{b_i}` the number of
/// blocks of `b` inside block `i` of `a`.
pub fn mobius(a: &Partition, b: &Partition) -> Result<i64> {
    if !a.coarsens(b)? {
        return Ok(0);
    }
    let sign = if a.n_clusters().is_multiple_of(2) { 1 } else { -1 };
    Ok(a.nested_counts(b).into_iter().fold(sign, |acc, m| {
        let s = if m % 2 == 0 { 1 } else { -1 };
        acc * s * factorial(m - 1)
    }))
}

/// Cluster-expansion coefficient `𝒞_a = (−1)^{n_a} (n_a − 1)! = −μ(1, a)`.
pub fn cluster_coefficient(a: &Partition) -> i64 {
    let n = a.n_clusters();
    let sign = if n.is_multiple_of(2) { 1 } else { -1 };
    sign * factorial(n - 1)
}

/// Full partition lattice for one particle count with precomputed order and
/// Möbius matrices. Immutable after construction.
#[derive(Debug)]
pub struct LatticeTable {
    n_particles: usize,
    partitions: Vec<Partition>,
    index: HashMap<Partition, usize>,
    coarsens: Vec<bool>,
    mobius: Vec<i64>,
}

impl LatticeTable {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_TABLE_PARTICLES {
            return Err(Error::Capacity(format!("lattice table limited to {MAX_TABLE_PARTICLES} particles, got {n}")));
        }
        let partitions = enumerate_partitions(n)?;
        let m = partitions.len();
        let index = partitions.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let mut coarsens = vec![false; m * m];
        let mut mob = vec![0i64; m * m];
        for (i, a) in partitions.iter().enumerate() {
            for (j, b) in partitions.iter().enumerate() {
                coarsens[i * m + j] = refines_unchecked(&b.rgs, &a.rgs, b.n_blocks);
                mob[i * m + j] = mobius(a, b)?;
            }
        }
        Ok(LatticeTable { n_particles: n, partitions, index, coarsens, mobius: mob })
    }

    /// Process-wide cached table for `n`.
    pub fn shared(n: usize) -> Result<Arc<LatticeTable>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<LatticeTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().unwrap().get(&n) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(LatticeTable::new(n)?);
        cache.lock().unwrap().entry(n).or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// `partitions[i] ⊇ partitions[j]`.
    pub fn coarsens_idx(&self, i: usize, j: usize) -> bool {
        self.coarsens[i * self.len() + j]
    }

    pub fn zeta_idx(&self, i: usize, j: usize) -> i64 {
        i64::from(self.coarsens_idx(i, j))
    }

    pub fn mobius_idx(&self, i: usize, j: usize) -> i64 {
        self.mobius[i * self.len() + j]
    }

    pub fn top_index(&self) -> usize {
        0
    }

    pub fn bottom_index(&self) -> usize {
        self.len() - 1
    }
}
