//! Coloured-graph state with incremental bookkeeping.
//!
//! The state is a simple graph on `n` vertices plus a two-colouring (colour 1 is called
//! white, colour 0 black).  All quantities the dynamics needs are cached and maintained
//! incrementally: per-vertex degrees, per-vertex discordant degrees (number of
//! opposite-coloured neighbours), the edge count, the discordant-edge count and the white
//! count.  A colour flip updates the caches in O(degree), an edge toggle in O(1).
//!
//! Adjacency is stored as one u64 bitset row per vertex, which keeps pair queries O(1)
//! and lets the connectivity statistic run on word-parallel intersections.

use crate::params::ModelParams;
use crate::{Error, Result};

/// Hard cap on vertex count; adjacency is n^2 bits.
pub const MAX_N: usize = 4096;

/// One elementary transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Vertex flips its colour.
    Flip(usize),
    /// Unordered pair toggles its edge (appears if absent, vanishes if present).
    Toggle(usize, usize),
}

/// Scalar summary of a state: colour fraction and pair densities.
///
/// Densities are relative to the number of unordered pairs n(n-1)/2, so
/// `concordant + discordant = edge_density` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    /// Fraction of white (colour 1) vertices.
    pub q: f64,
    /// Edge density.
    pub p: f64,
    /// Density of present concordant edges.
    pub concordant: f64,
    /// Density of present discordant edges.
    pub discordant: f64,
    /// Raw count of present discordant edges.
    pub discordant_count: u64,
    /// Raw edge count.
    pub edge_count: u64,
}

#[derive(Debug, Clone)]
pub struct ColouredGraph {
    n: usize,
    /// u64 words per adjacency row.
    words: usize,
    /// Row-major adjacency bitset, `n * words` words, diagonal clear.
    adj: Vec<u64>,
    colours: Vec<u8>,
    degree: Vec<u32>,
    /// Number of opposite-coloured neighbours per vertex.
    disc_degree: Vec<u32>,
    edge_count: u64,
    disc_edge_count: u64,
    white_count: usize,
}

impl ColouredGraph {
    /// Builds a graph from a colour vector (entries 0/1) and an edge list.  Edges may be
    /// given in either endpoint order; duplicates and loops are rejected.
    pub fn new(colours: Vec<u8>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::with_colours(colours)?;
        for &(u, v) in edges {
            g.check_pair(u, v)?;
            if g.has_edge(u, v) {
                return Err(Error::InvalidInput(format!("duplicate edge ({u}, {v})")));
            }
            g.apply_transition(Transition::Toggle(u, v))?;
        }
        Ok(g)
    }

    /// Edgeless graph with the given colours.
    pub fn with_colours(colours: Vec<u8>) -> Result<Self> {
        let n = colours.len();
        if n == 0 {
            return Err(Error::InvalidInput("graph must have at least one vertex".into()));
        }
        if n > MAX_N {
            return Err(Error::SizeLimit(format!("n = {n} exceeds MAX_N = {MAX_N}")));
        }
        if let Some(c) = colours.iter().find(|&&c| c > 1) {
            return Err(Error::InvalidInput(format!("colour {c} is not 0 or 1")));
        }
        let words = n.div_ceil(64);
        let white_count = colours.iter().filter(|&&c| c == 1).count();
        Ok(ColouredGraph {
            n,
            words,
            adj: vec![0; n * words],
            colours,
            degree: vec![0; n],
            disc_degree: vec![0; n],
            edge_count: 0,
            disc_edge_count: 0,
            white_count,
        })
    }

    /// Dense test constructor: vertex v takes colour bit v of `colour_mask`; pair (u, v)
    /// with u < v is an edge when bit `pair_index(u, v)` of `edge_mask` is set, pairs
    /// ordered (0,1), (0,2), (1,2), (0,3), ...
    pub fn from_bits(n: usize, colour_mask: u64, edge_mask: u64) -> Result<Self> {
        if n > 11 {
            // n(n-1)/2 must fit in the u64 edge mask.
            return Err(Error::SizeLimit("from_bits supports n <= 11".into()));
        }
        let colours = (0..n).map(|v| ((colour_mask >> v) & 1) as u8).collect();
        let mut g = Self::with_colours(colours)?;
        let mut idx = 0;
        for v in 1..n {
            for u in 0..v {
                if (edge_mask >> idx) & 1 == 1 {
                    g.apply_transition(Transition::Toggle(u, v))?;
                }
                idx += 1;
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn colour(&self, u: usize) -> u8 {
        self.colours[u]
    }

    pub fn colours(&self) -> &[u8] {
        &self.colours
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    pub fn degree(&self, u: usize) -> u32 {
        self.degree[u]
    }

    /// Number of opposite-coloured neighbours of `u`; this times `eta` is u's flip rate.
    pub fn disc_degree(&self, u: usize) -> u32 {
        self.disc_degree[u]
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn disc_edge_count(&self) -> u64 {
        self.disc_edge_count
    }

    pub fn white_count(&self) -> usize {
        self.white_count
    }

    pub fn pair_count(&self) -> u64 {
        (self.n as u64) * (self.n as u64 - 1) / 2
    }

    /// Neighbour list of `u` in increasing order.
    pub fn neighbours(&self, u: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.degree[u] as usize);
        let row = &self.adj[u * self.words..(u + 1) * self.words];
        for (w, &word) in row.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(w * 64 + b);
                bits &= bits - 1;
            }
        }
        out
    }

    /// Adjacency row of `u` as a bitset slice.
    pub fn adjacency_row(&self, u: usize) -> &[u64] {
        &self.adj[u * self.words..(u + 1) * self.words]
    }

    fn check_vertex(&self, u: usize) -> Result<()> {
        if u >= self.n {
            return Err(Error::InvalidInput(format!(
                "vertex {u} out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    fn check_pair(&self, u: usize, v: usize) -> Result<()> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(Error::InvalidInput(format!("pair ({u}, {u}) is a loop")));
        }
        Ok(())
    }

    /// Flip rate numerator of vertex `u`: its discordant degree.
    pub fn vertex_flip_rate(&self, u: usize) -> Result<u64> {
        self.check_vertex(u)?;
        Ok(self.disc_degree[u] as u64)
    }

    /// Per-pair toggle rate constant of `{u, v}` under `params` (the category constant;
    /// the chain multiplies it by `rho`).
    pub fn edge_switch_rate(&self, u: usize, v: usize, params: &ModelParams) -> Result<f64> {
        self.check_pair(u, v)?;
        let concordant = self.colours[u] == self.colours[v];
        Ok(params.s(concordant, self.has_edge(u, v)))
    }

    /// Category of a pair as (colours agree?, edge present?).
    pub fn pair_category(&self, u: usize, v: usize) -> Result<(bool, bool)> {
        self.check_pair(u, v)?;
        Ok((self.colours[u] == self.colours[v], self.has_edge(u, v)))
    }

    /// Counts of pairs per category, ordered (c,0), (c,1), (d,0), (d,1); derived from the
    /// cached aggregates in O(1).
    pub fn category_counts(&self) -> [u64; 4] {
        let w = self.white_count as u64;
        let b = (self.n - self.white_count) as u64;
        let disc_pairs = w * b;
        let conc_pairs = self.pair_count() - disc_pairs;
        let d1 = self.disc_edge_count;
        let c1 = self.edge_count - d1;
        [conc_pairs - c1, c1, disc_pairs - d1, d1]
    }

    /// Total event rate of the chain in the given state.
    pub fn total_rate(&self, params: &ModelParams) -> f64 {
        let [c0, c1, d0, d1] = self.category_counts();
        let edge = params.s_c0 * c0 as f64
            + params.s_c1 * c1 as f64
            + params.s_d0 * d0 as f64
            + params.s_d1 * d1 as f64;
        2.0 * params.eta * self.disc_edge_count as f64 + params.rho * edge
    }

    fn set_bit(&mut self, u: usize, v: usize, on: bool) {
        let idx = u * self.words + v / 64;
        let mask = 1u64 << (v % 64);
        if on {
            self.adj[idx] |= mask;
        } else {
            self.adj[idx] &= !mask;
        }
    }

    /// Applies one transition, maintaining every cached quantity.
    pub fn apply_transition(&mut self, t: Transition) -> Result<()> {
        match t {
            Transition::Flip(u) => {
                self.check_vertex(u)?;
                let old = self.colours[u];
                // Every edge at u swaps concordance.
                for v in self.neighbours(u) {
                    if self.colours[v] == old {
                        self.disc_degree[v] += 1;
                    } else {
                        self.disc_degree[v] -= 1;
                    }
                }
                let deg = self.degree[u];
                let disc = self.disc_degree[u];
                self.disc_edge_count += deg as u64 - disc as u64;
                self.disc_edge_count -= disc as u64;
                self.disc_degree[u] = deg - disc;
                self.colours[u] = 1 - old;
                if old == 1 {
                    self.white_count -= 1;
                } else {
                    self.white_count += 1;
                }
            }
            Transition::Toggle(u, v) => {
                self.check_pair(u, v)?;
                let present = self.has_edge(u, v);
                let discordant = self.colours[u] != self.colours[v];
                self.set_bit(u, v, !present);
                self.set_bit(v, u, !present);
                if present {
                    self.degree[u] -= 1;
                    self.degree[v] -= 1;
                    self.edge_count -= 1;
                    if discordant {
                        self.disc_degree[u] -= 1;
                        self.disc_degree[v] -= 1;
                        self.disc_edge_count -= 1;
                    }
                } else {
                    self.degree[u] += 1;
                    self.degree[v] += 1;
                    self.edge_count += 1;
                    if discordant {
                        self.disc_degree[u] += 1;
                        self.disc_degree[v] += 1;
                        self.disc_edge_count += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Scalar summary; the single-vertex graph reports zero pair densities.
    pub fn summary_stats(&self) -> SummaryStats {
        let pairs = self.pair_count();
        let inv = if pairs == 0 { 0.0 } else { 1.0 / pairs as f64 };
        let d = self.disc_edge_count as f64 * inv;
        let c = (self.edge_count - self.disc_edge_count) as f64 * inv;
        SummaryStats {
            q: self.white_count as f64 / self.n as f64,
            p: self.edge_count as f64 * inv,
            concordant: c,
            discordant: d,
            discordant_count: self.disc_edge_count,
            edge_count: self.edge_count,
        }
    }

    /// Connectivity statistic: the minimum over ordered vertex pairs (i, j), including
    /// i = j, of |N(i) n N(j)| / n.  The diagonal terms make isolated vertices (and the
    /// hub-less star) report 0.
    pub fn connectivity_nu(&self) -> f64 {
        let mut min_common = self.degree.iter().copied().min().unwrap_or(0) as u64;
        for i in 0..self.n {
            if min_common == 0 {
                break;
            }
            let ri = &self.adj[i * self.words..(i + 1) * self.words];
            for j in (i + 1)..self.n {
                let rj = &self.adj[j * self.words..(j + 1) * self.words];
                let mut common = 0u64;
                for w in 0..self.words {
                    common += (ri[w] & rj[w]).count_ones() as u64;
                }
                min_common = min_common.min(common);
                if min_common == 0 {
                    break;
                }
            }
        }
        min_common as f64 / self.n as f64
    }

    /// Recomputes every cached quantity from the adjacency bits and compares; true when
    /// all caches are consistent.  Intended for tests and debug assertions.
    pub fn verify_cached_counts(&self) -> bool {
        let mut edge_count = 0u64;
        let mut disc_edge_count = 0u64;
        for u in 0..self.n {
            let mut deg = 0u32;
            let mut disc = 0u32;
            for v in 0..self.n {
                if v != u && self.has_edge(u, v) {
                    deg += 1;
                    if self.colours[u] != self.colours[v] {
                        disc += 1;
                    }
                    if u < v {
                        edge_count += 1;
                        if self.colours[u] != self.colours[v] {
                            disc_edge_count += 1;
                        }
                    }
                }
            }
            if deg != self.degree[u] || disc != self.disc_degree[u] {
                return false;
            }
            if self.has_edge(u, u) {
                return false;
            }
        }
        edge_count == self.edge_count
            && disc_edge_count == self.disc_edge_count
            && self.white_count == self.colours.iter().filter(|&&c| c == 1).count()
    }

    /// Sorted edge list with endpoints ordered u < v.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count as usize);
        for u in 0..self.n {
            for v in self.neighbours(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 1.1, [1.5, 0.5, 0.7, 2.0]).unwrap()
    }

    #[test]
    fn triangle_flip_rate() {
        // Triangle with one white vertex: the white vertex sees two opposite neighbours.
        let g = ColouredGraph::new(vec![1, 0, 0], &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(g.vertex_flip_rate(0).unwrap(), 2);
        assert_eq!(g.vertex_flip_rate(1).unwrap(), 1);
        assert_eq!(g.vertex_flip_rate(2).unwrap(), 1);
        assert!(g.vertex_flip_rate(3).is_err());
    }

    #[test]
    fn isolated_and_monochrome_vertices_never_flip() {
        let g = ColouredGraph::new(vec![1, 0, 1], &[]).unwrap();
        for u in 0..3 {
            assert_eq!(g.vertex_flip_rate(u).unwrap(), 0);
        }
        let g = ColouredGraph::new(vec![1, 1, 1], &[(0, 1), (1, 2), (0, 2)]).unwrap();
        for u in 0..3 {
            assert_eq!(g.vertex_flip_rate(u).unwrap(), 0);
        }
    }

    #[test]
    fn edge_switch_rates_by_category() {
        let p = fig1();
        let g = ColouredGraph::new(vec![1, 1, 0], &[(0, 2)]).unwrap();
        // Concordant absent pair (0,1) appears at s_c0.
        assert_eq!(g.edge_switch_rate(0, 1, &p).unwrap(), 1.5);
        // Discordant present pair (0,2) vanishes at s_d1.
        assert_eq!(g.edge_switch_rate(0, 2, &p).unwrap(), 2.0);
        // Discordant absent pair (1,2) appears at s_d0.
        assert_eq!(g.edge_switch_rate(1, 2, &p).unwrap(), 0.7);
        assert!(g.edge_switch_rate(1, 1, &p).is_err());
        let zero = ModelParams::new(1.0, 1.0, [0.0; 4]).unwrap();
        assert_eq!(g.edge_switch_rate(0, 1, &zero).unwrap(), 0.0);
    }

    #[test]
    fn flip_is_involutive_and_updates_discordance() {
        let mut g = ColouredGraph::new(vec![1, 0, 0], &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let before = g.clone();
        g.apply_transition(Transition::Flip(0)).unwrap();
        // All-black triangle: no discordant edges left.
        assert_eq!(g.disc_edge_count(), 0);
        assert_eq!(g.white_count(), 0);
        assert!(g.verify_cached_counts());
        g.apply_transition(Transition::Flip(0)).unwrap();
        assert_eq!(g.colours(), before.colours());
        assert_eq!(g.disc_edge_count(), before.disc_edge_count());
        assert!(g.verify_cached_counts());
    }

    #[test]
    fn toggle_moves_pair_between_categories() {
        let mut g = ColouredGraph::new(vec![1, 0], &[]).unwrap();
        assert_eq!(g.category_counts(), [0, 0, 1, 0]);
        g.apply_transition(Transition::Toggle(0, 1)).unwrap();
        assert_eq!(g.category_counts(), [0, 0, 0, 1]);
        let s = g.summary_stats();
        assert_eq!(s.q, 0.5);
        assert_eq!(s.p, 1.0);
        assert_eq!(s.concordant, 0.0);
        assert_eq!(s.discordant, 1.0);
        g.apply_transition(Transition::Toggle(1, 0)).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.verify_cached_counts());
    }

    #[test]
    fn summary_of_extreme_graphs() {
        // Complete all-white graph: q = 1, p = 1, all concordant.
        let n = 6;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        let g = ColouredGraph::new(vec![1; n], &edges).unwrap();
        let s = g.summary_stats();
        assert_eq!((s.q, s.p, s.concordant, s.discordant), (1.0, 1.0, 1.0, 0.0));
        // Empty half-white graph.
        let g = ColouredGraph::new(vec![1, 1, 0, 0], &[]).unwrap();
        let s = g.summary_stats();
        assert_eq!((s.q, s.p), (0.5, 0.0));
        assert!(ColouredGraph::with_colours(vec![]).is_err());
    }

    #[test]
    fn total_rate_matches_definition() {
        let p = fig1();
        let g = ColouredGraph::new(vec![1, 0, 1, 0], &[(0, 1), (2, 3), (0, 2)]).unwrap();
        // Direct sum over vertices and pairs.
        let mut expect = 0.0;
        for u in 0..4 {
            expect += p.eta * g.vertex_flip_rate(u).unwrap() as f64;
        }
        for u in 0..4 {
            for v in (u + 1)..4 {
                expect += p.rho * g.edge_switch_rate(u, v, &p).unwrap();
            }
        }
        assert!((g.total_rate(&p) - expect).abs() < 1e-12);
    }

    #[test]
    fn connectivity_examples() {
        // K4: every ordered pair shares at least 2 neighbours; diagonal gives 3.
        let g = ColouredGraph::new(
            vec![1, 1, 0, 0],
            &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        assert_eq!(g.connectivity_nu(), 0.5);
        // Star: the two leaves of any pair share the hub, but a leaf with itself has
        // exactly one neighbour and the hub-vs-leaf pair shares none.
        let g = ColouredGraph::new(vec![1, 0, 0, 0, 0], &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(g.connectivity_nu(), 0.0);
        let g = ColouredGraph::new(vec![1, 0], &[]).unwrap();
        assert_eq!(g.connectivity_nu(), 0.0);
    }

    #[test]
    fn connectivity_brute_force_cross_check() {
        // Oracle: direct double loop over ordered pairs including the diagonal.
        let g = ColouredGraph::from_bits(7, 0b1010110, 0x1f3a57).unwrap();
        let n = g.n();
        let mut min_common = u64::MAX;
        for i in 0..n {
            for j in 0..n {
                let mut common = 0;
                for z in 0..n {
                    if z != i && z != j && g.has_edge(i, z) && g.has_edge(j, z) {
                        common += 1;
                    }
                }
                if i == j {
                    common = g.degree(i) as u64;
                }
                min_common = min_common.min(common);
            }
        }
        assert_eq!(g.connectivity_nu(), min_common as f64 / n as f64);
    }

    proptest! {
        #[test]
        fn cached_counts_survive_random_transitions(
            seedc in 0u64..u64::MAX,
            seede in 0u64..u64::MAX,
            ops in proptest::collection::vec((0usize..40, 0usize..40), 1..80),
        ) {
            let n = 11;
            let mut g = ColouredGraph::from_bits(n, seedc, seede).unwrap();
            for (a, b) in ops {
                let u = a % n;
                let v = b % n;
                if u == v {
                    g.apply_transition(Transition::Flip(u)).unwrap();
                } else {
                    g.apply_transition(Transition::Toggle(u, v)).unwrap();
                }
                prop_assert!(g.verify_cached_counts());
                let [c0, c1, d0, d1] = g.category_counts();
                prop_assert_eq!(c0 + c1 + d0 + d1, g.pair_count());
                prop_assert_eq!(d1, g.disc_edge_count());
                // Total flip weight equals twice the discordant edge count.
                let flips: u64 = (0..n).map(|u| g.vertex_flip_rate(u).unwrap()).sum();
                prop_assert_eq!(flips, 2 * g.disc_edge_count());
            }
        }

        #[test]
        fn connectivity_is_label_invariant(perm_seed in 0u64..u64::MAX) {
            let g = ColouredGraph::from_bits(8, 0b10110100, 0x0fd3_a5c1).unwrap();
            // Fisher-Yates with a splitmix-style generator.
            let n = g.n();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = perm_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let colours: Vec<u8> = (0..n).map(|v| g.colour(perm[v])).collect();
            let mut edges = Vec::new();
            let inv: Vec<usize> = {
                let mut inv = vec![0; n];
                for (i, &p) in perm.iter().enumerate() { inv[p] = i; }
                inv
            };
            for (u, v) in g.edge_list() {
                edges.push((inv[u], inv[v]));
            }
            let h = ColouredGraph::new(colours, &edges).unwrap();
            prop_assert_eq!(g.connectivity_nu(), h.connectivity_nu());
        }
    }
}
