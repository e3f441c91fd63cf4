//! K-sets: subsets `I` where every pair satisfies `f_ij >= (f_ii + f_jj) / 2`.
//!
//! The pair condition defines the kinship graph, and K-sets are exactly its
//! cliques. K*-sets add the upper bound `f_ij <= max(f_ii, f_jj)` on every
//! pair, so they are the cliques of a sparser graph. Minimal K-sets contain no
//! subset of size >= 2 carrying a locally stable interior equilibrium.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::equilibria::{solve_support, tangent_max_eig, TOL_EIG};
use crate::error::{Error, Result};
use crate::fitness::{FitnessMatrix, Law};

/// Default cap on subsets emitted by a listing enumeration.
pub const DEFAULT_LIST_CAP: usize = 1_000_000;
/// Default node budget of the maximum-clique search.
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000_000;
/// Largest set accepted by [`is_minimal_kset`] (it scans all `2^|S|` subsets).
pub const MINIMAL_SCAN_LIMIT: usize = 20;

/// Sorted index set, with a bit mask when `n <= 64`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsetRef {
    indices: Vec<usize>,
    mask: Option<u64>,
}

impl SubsetRef {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("subset indices must be strictly increasing"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("subset index {bad} out of range for n = {n}")));
        }
        let mask = (n <= 64).then(|| indices.iter().fold(0u64, |m, &i| m | (1u64 << i)));
        Ok(Self { indices, mask })
    }

    pub fn from_mask(mask: u64, n: usize) -> Result<Self> {
        if n > 64 || (n < 64 && mask >> n != 0) {
            return Err(Error::invalid(format!("mask {mask:#x} does not fit n = {n}")));
        }
        let indices = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        Ok(Self {
            indices,
            mask: Some(mask),
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mask(&self) -> Option<u64> {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        match self.mask {
            Some(m) if i < 64 => m >> i & 1 == 1,
            Some(_) => false,
            None => self.indices.binary_search(&i).is_ok(),
        }
    }
}

impl Serialize for SubsetRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices.serialize(s)
    }
}

/// The K-set inequality on raw entries.
#[inline]
pub fn pair_values_ok(fij: f64, fii: f64, fjj: f64) -> bool {
    fij >= (fii + fjj) / 2.0
}

/// The K*-set inequalities on raw entries.
#[inline]
pub fn star_values_ok(fij: f64, fii: f64, fjj: f64) -> bool {
    pair_values_ok(fij, fii, fjj) && fij <= fii.max(fjj)
}

#[inline]
fn pair_condition(f: &FitnessMatrix, i: usize, j: usize) -> bool {
    pair_values_ok(f.get(i, j), f.diag(i), f.diag(j))
}

#[inline]
fn star_condition(f: &FitnessMatrix, i: usize, j: usize) -> bool {
    star_values_ok(f.get(i, j), f.diag(i), f.diag(j))
}

/// `f_ij >= (f_ii + f_jj) / 2`, ties included.
pub fn pair_ok(f: &FitnessMatrix, i: usize, j: usize) -> Result<bool> {
    if i == j {
        return Err(Error::pre("pair condition needs two distinct indices"));
    }
    if i >= f.n() || j >= f.n() {
        return Err(Error::pre(format!("index out of range for n = {}", f.n())));
    }
    Ok(pair_condition(f, i, j))
}

/// Singletons and the empty set are K-sets.
pub fn is_kset(f: &FitnessMatrix, s: &[usize]) -> bool {
    s.iter()
        .enumerate()
        .all(|(a, &i)| s[a + 1..].iter().all(|&j| pair_condition(f, i, j)))
}

pub fn is_kstar_set(f: &FitnessMatrix, s: &[usize]) -> Result<bool> {
    if s.len() < 2 {
        return Err(Error::pre("K*-set test needs at least two indices"));
    }
    Ok(s.iter()
        .enumerate()
        .all(|(a, &i)| s[a + 1..].iter().all(|&j| star_condition(f, i, j))))
}

/// True iff no `J ⊆ S` with `|J| >= 2` has a positive equilibrium that also
/// passes the internal-stability (tangent) condition. The caller is expected
/// to have checked that `S` is a K-set.
pub fn is_minimal_kset(f: &FitnessMatrix, s: &[usize]) -> Result<bool> {
    let m = s.len();
    if m > MINIMAL_SCAN_LIMIT {
        return Err(Error::SubsetScanTooLarge {
            size: m,
            limit: MINIMAL_SCAN_LIMIT,
        });
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != m || sorted.iter().any(|&i| i >= f.n()) {
        return Err(Error::pre("subset must hold distinct in-range indices"));
    }
    let mut sub = Vec::with_capacity(m);
    // small subsets first: pairs settle most instances
    let mut masks: Vec<u32> = (1u32..(1u32 << m)).filter(|x| x.count_ones() >= 2).collect();
    masks.sort_by_key(|x| x.count_ones());
    for mask in masks {
        sub.clear();
        sub.extend((0..m).filter(|&b| mask >> b & 1 == 1).map(|b| sorted[b]));
        if solve_support(f, &sub).is_ok() && tangent_max_eig(f, &sub)? <= TOL_EIG {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Undirected graph on `0..n` stored as adjacency bitsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KinshipGraph {
    n: usize,
    words: usize,
    adj: Vec<u64>,
}

impl KinshipGraph {
    pub fn from_predicate(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let words = n.div_ceil(64).max(1);
        let mut adj = vec![0u64; n * words];
        for i in 0..n {
            for j in 0..i {
                if edge(i, j) {
                    adj[i * words + j / 64] |= 1 << (j % 64);
                    adj[j * words + i / 64] |= 1 << (i % 64);
                }
            }
        }
        Self { n, words, adj }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.adj[i * self.words..(i + 1) * self.words]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn edge_density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1) / 2) as f64
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
            .collect()
    }

    pub fn is_clique(&self, s: &[usize]) -> bool {
        s.iter()
            .enumerate()
            .all(|(a, &i)| s[a + 1..].iter().all(|&j| self.has_edge(i, j)))
    }

    /// Counts cliques of every size in `r_min..=r_max`, optionally listing them.
    pub fn count_cliques(&self, r_min: usize, r_max: usize, list_cap: Option<usize>) -> Result<CliqueCounts> {
        if r_min < 2 || r_min > r_max || r_max > self.n {
            return Err(Error::pre(format!(
                "need 2 <= r_min <= r_max <= n, got r_min = {r_min}, r_max = {r_max}, n = {}",
                self.n
            )));
        }
        let per_root: Vec<CliqueCounts> = (0..self.n)
            .into_par_iter()
            .map(|v| {
                let mut acc = CliqueCounts::new(r_max, list_cap.is_some());
                let mut cand = self.row(v).to_vec();
                clear_upto(&mut cand, v);
                let mut current = vec![v];
                self.extend_cliques(&mut current, &cand, r_min, r_max, list_cap, &mut acc);
                acc
            })
            .collect();

        let mut total = CliqueCounts::new(r_max, list_cap.is_some());
        for part in per_root {
            for (t, c) in total.counts.iter_mut().zip(&part.counts) {
                *t += c;
            }
            if let (Some(cap), Some(out), Some(list)) = (list_cap, total.listing.as_mut(), part.listing) {
                for (size, mut sets) in list {
                    let have: usize = out.values().map(Vec::len).sum();
                    let room = cap.saturating_sub(have);
                    if sets.len() > room {
                        sets.truncate(room);
                    }
                    if !sets.is_empty() {
                        out.entry(size).or_default().extend(sets);
                    }
                }
            }
        }
        if let (Some(cap), Some(out)) = (list_cap, total.listing.as_mut()) {
            let window: u64 = total.counts[r_min..=r_max].iter().sum();
            total.truncated = window > cap as u64;
            for sets in out.values_mut() {
                sets.sort();
            }
        }
        total.r_min = r_min;
        Ok(total)
    }

    fn extend_cliques(
        &self,
        current: &mut Vec<usize>,
        cand: &[u64],
        r_min: usize,
        r_max: usize,
        list_cap: Option<usize>,
        acc: &mut CliqueCounts,
    ) {
        let size = current.len();
        if size >= r_min {
            acc.counts[size] += 1;
            if let (Some(cap), Some(list)) = (list_cap, acc.listing.as_mut()) {
                if acc.listed < cap {
                    list.entry(size).or_default().push(current.clone());
                    acc.listed += 1;
                }
            }
        }
        if size >= r_max || size + popcount(cand) < r_min {
            return;
        }
        for v in BitIter::new(cand) {
            let mut next: Vec<u64> = cand.iter().zip(self.row(v)).map(|(a, b)| a & b).collect();
            clear_upto(&mut next, v);
            current.push(v);
            self.extend_cliques(current, &next, r_min, r_max, list_cap, acc);
            current.pop();
        }
    }

    /// Exact maximum clique by branch and bound with greedy-colouring bounds.
    /// Fails with [`Error::BudgetExceeded`] rather than return an unproven size.
    pub fn max_clique(&self, node_budget: u64) -> Result<Vec<usize>> {
        if self.n == 0 {
            return Ok(Vec::new());
        }
        // relabel by decreasing degree so colour classes pack the dense core first
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&v| (std::cmp::Reverse(self.degree(v)), v));
        let relabeled = KinshipGraph::from_predicate(self.n, |a, b| self.has_edge(order[a], order[b]));

        let mut search = MaxCliqueSearch {
            g: &relabeled,
            best: Vec::new(),
            current: Vec::new(),
            nodes: 0,
            budget: node_budget,
        };
        // greedy seed
        for v in 0..self.n {
            if search.best.iter().all(|&u| relabeled.has_edge(u, v)) {
                search.best.push(v);
            }
        }
        let mut all = vec![0u64; relabeled.words];
        for v in 0..self.n {
            all[v / 64] |= 1 << (v % 64);
        }
        search.expand(all)?;
        let mut clique: Vec<usize> = search.best.iter().map(|&v| order[v]).collect();
        clique.sort_unstable();
        Ok(clique)
    }
}

struct MaxCliqueSearch<'a> {
    g: &'a KinshipGraph,
    best: Vec<usize>,
    current: Vec<usize>,
    nodes: u64,
    budget: u64,
}

impl MaxCliqueSearch<'_> {
    fn expand(&mut self, mut cand: Vec<u64>) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { nodes: self.budget });
        }
        // greedy sequential colouring of the candidate set
        let mut coloured: Vec<(usize, usize)> = Vec::with_capacity(popcount(&cand));
        let mut uncoloured = cand.clone();
        let mut colour = 0;
        while uncoloured.iter().any(|&w| w != 0) {
            colour += 1;
            let mut q = uncoloured.clone();
            while let Some(v) = first_bit(&q) {
                q[v / 64] &= !(1 << (v % 64));
                uncoloured[v / 64] &= !(1 << (v % 64));
                for (qw, aw) in q.iter_mut().zip(self.g.row(v)) {
                    *qw &= !aw;
                }
                coloured.push((v, colour));
            }
        }
        for &(v, c) in coloured.iter().rev() {
            if self.current.len() + c <= self.best.len() {
                return Ok(());
            }
            let next: Vec<u64> = cand.iter().zip(self.g.row(v)).map(|(a, b)| a & b).collect();
            self.current.push(v);
            if next.iter().all(|&w| w == 0) {
                if self.current.len() > self.best.len() {
                    self.best = self.current.clone();
                }
            } else {
                self.expand(next)?;
            }
            self.current.pop();
            cand[v / 64] &= !(1 << (v % 64));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueCounts {
    /// `counts[r]` for `r <= r_max`; entries below `r_min` are zero.
    pub counts: Vec<u64>,
    pub listing: Option<BTreeMap<usize, Vec<Vec<usize>>>>,
    pub truncated: bool,
    r_min: usize,
    listed: usize,
}

impl CliqueCounts {
    fn new(r_max: usize, listing: bool) -> Self {
        Self {
            counts: vec![0; r_max + 1],
            listing: listing.then(BTreeMap::new),
            truncated: false,
            r_min: 0,
            listed: 0,
        }
    }
}

#[inline]
fn popcount(bits: &[u64]) -> usize {
    bits.iter().map(|w| w.count_ones() as usize).sum()
}

#[inline]
fn first_bit(bits: &[u64]) -> Option<usize> {
    bits.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
}

/// Clears bits `0..=v`.
#[inline]
fn clear_upto(bits: &mut [u64], v: usize) {
    let word = v / 64;
    for w in bits.iter_mut().take(word) {
        *w = 0;
    }
    let keep = if v % 64 == 63 { 0 } else { !0u64 << (v % 64 + 1) };
    bits[word] &= keep;
}

struct BitIter<'a> {
    bits: &'a [u64],
    word: usize,
    cur: u64,
}

impl<'a> BitIter<'a> {
    fn new(bits: &'a [u64]) -> Self {
        Self {
            bits,
            word: 0,
            cur: bits.first().copied().unwrap_or(0),
        }
    }
}

impl Iterator for BitIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        while self.cur == 0 {
            self.word += 1;
            if self.word >= self.bits.len() {
                return None;
            }
            self.cur = self.bits[self.word];
        }
        let b = self.cur.trailing_zeros() as usize;
        self.cur &= self.cur - 1;
        Some(self.word * 64 + b)
    }
}

pub fn build_graph(f: &FitnessMatrix) -> KinshipGraph {
    KinshipGraph::from_predicate(f.n(), |i, j| pair_condition(f, i, j))
}

/// Graph whose cliques are the K*-sets.
pub fn build_kstar_graph(f: &FitnessMatrix) -> KinshipGraph {
    KinshipGraph::from_predicate(f.n(), |i, j| star_condition(f, i, j))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnumerationMode {
    Count,
    /// List subsets up to the given cap; counts stay exact past the cap.
    List { cap: usize },
}

/// Per-size K-set counts `X_{n,r}` over a size window.
#[derive(Clone, Debug, PartialEq)]
pub struct KSetInventory {
    pub n: usize,
    pub law: Option<Law>,
    pub counts_by_size: BTreeMap<usize, u64>,
    /// Largest size with a positive count, among 1 and the counted window.
    /// This equals `L_n` whenever the window's upper end is at least `L_n`.
    pub max_size: usize,
    pub listing: Option<BTreeMap<usize, Vec<Vec<usize>>>>,
    pub listing_truncated: bool,
}

impl KSetInventory {
    fn from_counts(f: &FitnessMatrix, c: CliqueCounts, r_max: usize) -> Self {
        let counts_by_size: BTreeMap<usize, u64> = (c.r_min..=r_max).map(|r| (r, c.counts[r])).collect();
        let max_size = counts_by_size
            .iter()
            .filter(|(_, &x)| x > 0)
            .map(|(&r, _)| r)
            .max()
            .unwrap_or(1);
        Self {
            n: f.n(),
            law: f.provenance().law,
            counts_by_size,
            max_size,
            listing: c.listing,
            listing_truncated: c.truncated,
        }
    }

    pub fn count(&self, r: usize) -> Option<u64> {
        self.counts_by_size.get(&r).copied()
    }

    /// JSON record: `{"n", "law", "counts", "L_n", "listing"?}`.
    pub fn to_json_value(&self, l_n: Option<usize>) -> serde_json::Value {
        let mut v = serde_json::json!({
            "n": self.n,
            "law": self.law.map_or_else(|| "custom".to_string(), |l| l.to_string()),
            "counts": self.counts_by_size,
            "L_n": l_n.unwrap_or(self.max_size),
        });
        if let Some(list) = &self.listing {
            let flat: Vec<&Vec<usize>> = list.values().flatten().collect();
            v["listing"] = serde_json::json!(flat);
            v["listing_truncated"] = serde_json::json!(self.listing_truncated);
        }
        v
    }
}

pub fn enumerate_ksets(
    f: &FitnessMatrix,
    r_min: usize,
    r_max: usize,
    mode: EnumerationMode,
) -> Result<KSetInventory> {
    enumerate_in(&build_graph(f), f, r_min, r_max, mode)
}

/// Same as [`enumerate_ksets`] for K*-sets.
pub fn enumerate_kstar_sets(
    f: &FitnessMatrix,
    r_min: usize,
    r_max: usize,
    mode: EnumerationMode,
) -> Result<KSetInventory> {
    enumerate_in(&build_kstar_graph(f), f, r_min, r_max, mode)
}

fn enumerate_in(
    g: &KinshipGraph,
    f: &FitnessMatrix,
    r_min: usize,
    r_max: usize,
    mode: EnumerationMode,
) -> Result<KSetInventory> {
    let cap = match mode {
        EnumerationMode::Count => None,
        EnumerationMode::List { cap } => Some(cap),
    };
    let c = g.count_cliques(r_min, r_max, cap)?;
    Ok(KSetInventory::from_counts(f, c, r_max))
}

/// `L_n`, the largest K-set size.
pub fn max_kset_size(f: &FitnessMatrix) -> Result<usize> {
    max_kset_size_with_budget(f, DEFAULT_NODE_BUDGET)
}

pub fn max_kset_size_with_budget(f: &FitnessMatrix, node_budget: u64) -> Result<usize> {
    Ok(build_graph(f).max_clique(node_budget)?.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::FitnessDistribution;
    use crate::rng::RngStream;

    fn rows(r: &[&[f64]]) -> FitnessMatrix {
        FitnessMatrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn brute_counts(f: &FitnessMatrix) -> (Vec<u64>, usize) {
        let n = f.n();
        let mut counts = vec![0u64; n + 1];
        let mut best = 1;
        for mask in 1u32..(1 << n) {
            let s: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let ok = s.iter().enumerate().all(|(a, &i)| {
                s[a + 1..]
                    .iter()
                    .all(|&j| f.get(i, j) >= (f.get(i, i) + f.get(j, j)) / 2.0)
            });
            if ok {
                counts[s.len()] += 1;
                best = best.max(s.len());
            }
        }
        (counts, best)
    }

    #[test]
    fn pair_ok_cases() {
        let f = rows(&[&[0.0, 0.3], &[0.3, 0.0]]);
        assert!(pair_ok(&f, 0, 1).unwrap());
        let f = rows(&[&[0.6, 0.5], &[0.5, 0.4]]);
        assert!(pair_ok(&f, 0, 1).unwrap());
        let f = rows(&[&[0.9, 0.5], &[0.5, 0.9]]);
        assert!(!pair_ok(&f, 0, 1).unwrap());
        assert!(pair_ok(&f, 1, 1).is_err());
    }

    #[test]
    fn graph_corner_cases() {
        let c = FitnessMatrix::constant(6, 0.4).unwrap();
        assert_eq!(build_graph(&c).edge_count(), 15);
        let mut r = vec![vec![0.5; 5]; 5];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let e = FitnessMatrix::from_rows(&r).unwrap();
        assert_eq!(build_graph(&e).edge_count(), 0);
        assert_eq!(max_kset_size(&e).unwrap(), 1);
        assert_eq!(max_kset_size(&c).unwrap(), 6);
    }

    #[test]
    fn uniform_edge_density_is_half() {
        let d = FitnessDistribution::uniform();
        let f = FitnessMatrix::sample(2000, &d, &mut RngStream::new(3, 0)).unwrap();
        let g = build_graph(&f);
        assert!((g.edge_density() - 0.5).abs() < 0.01, "{}", g.edge_density());
        for (i, j) in g.edges().into_iter().take(1000) {
            assert!(pair_ok(&f, i, j).unwrap());
        }
    }

    #[test]
    fn kset_predicates() {
        let f = rows(&[&[0.2, 0.5, 0.1], &[0.5, 0.4, 0.6], &[0.1, 0.6, 0.9]]);
        assert!(is_kset(&f, &[1]));
        assert!(is_kset(&f, &[]));
        assert!(is_kset(&f, &[0, 1]));
        assert!(!is_kset(&f, &[0, 2]));
        assert!(is_kstar_set(&f, &[0]).is_err());
        // 0.5 in [0.3, 0.4]? no: the pair carries an equilibrium
        assert!(!is_kstar_set(&f, &[0, 1]).unwrap());
        let t = rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(is_kstar_set(&t, &[0, 1]).unwrap());
    }

    #[test]
    fn complete_graph_counts_are_binomial() {
        let c = FitnessMatrix::constant(5, 0.1).unwrap();
        let inv = enumerate_ksets(&c, 2, 5, EnumerationMode::Count).unwrap();
        assert_eq!(inv.count(3), Some(10));
        assert_eq!(inv.count(5), Some(1));
        assert_eq!(inv.max_size, 5);
        assert!(enumerate_ksets(&c, 1, 3, EnumerationMode::Count).is_err());
        assert!(enumerate_ksets(&c, 3, 2, EnumerationMode::Count).is_err());
        assert!(enumerate_ksets(&c, 2, 6, EnumerationMode::Count).is_err());
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for (seed, law) in [
            (1, Law::Uniform),
            (2, Law::LinearDensity { c: 0.8 }),
            (3, Law::TruncatedExponential { c: 2.0 }),
            (4, Law::UnboundedExponential),
        ] {
            let d = FitnessDistribution::new(law).unwrap();
            for t in 0..25 {
                let n = 2 + t % 11;
                let f = FitnessMatrix::sample(n, &d, &mut RngStream::new(seed, t as u64)).unwrap();
                let (bc, bl) = brute_counts(&f);
                let inv = enumerate_ksets(&f, 2, n, EnumerationMode::Count).unwrap();
                for r in 2..=n {
                    assert_eq!(inv.count(r).unwrap(), bc[r], "law {law} n {n} r {r}");
                }
                assert_eq!(max_kset_size(&f).unwrap(), bl);
                assert_eq!(inv.max_size, bl);
            }
        }
    }

    #[test]
    fn listing_is_hereditary_and_capped() {
        let d = FitnessDistribution::uniform();
        let f = FitnessMatrix::sample(30, &d, &mut RngStream::new(8, 0)).unwrap();
        let inv = enumerate_ksets(&f, 2, 6, EnumerationMode::List { cap: usize::MAX }).unwrap();
        let list = inv.listing.as_ref().unwrap();
        for (r, sets) in list {
            assert_eq!(sets.len() as u64, inv.count(*r).unwrap());
            for s in sets.iter().take(50) {
                assert_eq!(s.len(), *r);
                for mask in 1u32..(1 << s.len()) {
                    let t: Vec<usize> = (0..s.len()).filter(|&b| mask >> b & 1 == 1).map(|b| s[b]).collect();
                    assert!(is_kset(&f, &t));
                }
            }
            assert!(sets.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(!inv.listing_truncated);

        let capped = enumerate_ksets(&f, 2, 6, EnumerationMode::List { cap: 10 }).unwrap();
        assert!(capped.listing_truncated);
        assert_eq!(capped.counts_by_size, inv.counts_by_size);
        let listed: usize = capped.listing.as_ref().unwrap().values().map(Vec::len).sum();
        assert_eq!(listed, 10);
    }

    #[test]
    fn kstar_enumeration_matches_filtering() {
        let d = FitnessDistribution::uniform();
        for t in 0..20 {
            let f = FitnessMatrix::sample(25, &d, &mut RngStream::new(21, t)).unwrap();
            let all = enumerate_ksets(&f, 2, 4, EnumerationMode::List { cap: usize::MAX }).unwrap();
            let star = enumerate_kstar_sets(&f, 2, 4, EnumerationMode::Count).unwrap();
            for r in 2..=4 {
                let filtered = all.listing.as_ref().unwrap().get(&r).map_or(0, |sets| {
                    sets.iter().filter(|s| is_kstar_set(&f, s).unwrap()).count()
                });
                assert_eq!(star.count(r).unwrap(), filtered as u64);
                assert!(star.count(r).unwrap() <= all.count(r).unwrap());
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let c = FitnessMatrix::constant(40, 0.1).unwrap();
        assert!(matches!(
            max_kset_size_with_budget(&c, 0),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn minimal_kset_cases() {
        // pair with an interior equilibrium is not minimal
        let f = rows(&[&[0.2, 0.8], &[0.8, 0.4]]);
        assert!(!is_minimal_kset(&f, &[0, 1]).unwrap());
        // K* pair: no equilibrium
        let g = rows(&[&[0.2, 0.35], &[0.35, 0.4]]);
        assert!(is_kstar_set(&g, &[0, 1]).unwrap());
        assert!(is_minimal_kset(&g, &[0, 1]).unwrap());
        let big: Vec<usize> = (0..21).collect();
        let c = FitnessMatrix::constant(21, 0.1).unwrap();
        assert!(matches!(
            is_minimal_kset(&c, &big),
            Err(Error::SubsetScanTooLarge { .. })
        ));
    }

    #[test]
    fn minimal_implies_kstar_on_random_ksets() {
        let d = FitnessDistribution::uniform();
        let mut checked = 0;
        for t in 0..4000u64 {
            let f = FitnessMatrix::sample(4, &d, &mut RngStream::new(77, t)).unwrap();
            let s = [0, 1, 2, 3];
            if !is_kset(&f, &s) {
                continue;
            }
            checked += 1;
            if is_minimal_kset(&f, &s).unwrap() {
                assert!(is_kstar_set(&f, &s).unwrap());
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn subset_ref_mask_agrees() {
        let s = SubsetRef::new(vec![0, 3, 5], 8).unwrap();
        assert_eq!(s.mask(), Some(0b101001));
        assert_eq!(SubsetRef::from_mask(0b101001, 8).unwrap(), s);
        assert!(s.contains(3) && !s.contains(4));
        assert!(SubsetRef::new(vec![3, 1], 8).is_err());
        assert!(SubsetRef::new(vec![9], 8).is_err());
        assert!(SubsetRef::new(vec![1, 70], 100).unwrap().mask().is_none());
    }

    #[test]
    fn clear_upto_edges() {
        let mut b = vec![!0u64, !0u64];
        clear_upto(&mut b, 63);
        assert_eq!(b, vec![0, !0u64]);
        let mut b = vec![!0u64, !0u64];
        clear_upto(&mut b, 64);
        assert_eq!(b, vec![0, !1u64]);
    }
}
