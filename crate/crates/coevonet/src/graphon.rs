//! Coloured step graphons, motif densities, the subgraph metric, the cut-distance
//! bracket and the colour-averaging projection.
//!
//! A coloured graphon is stored on an m-point grid: a symmetric kernel `kappa` with
//! values in [0,1] and a colour profile `c` in [0,1]^m.  A coloured graph embeds as the
//! step graphon on n cells with 0/1 kernel (diagonal zero) and 0/1 colours.
//!
//! The density of a motif F with colours `c^F` is the grid average over all vertex-tuple
//! placements of  prod_{edges} kappa(x_i, x_j) * prod_i c(x_i)^{c^F_i} (1-c(x_i))^{1-c^F_i}.
//! For graphs this equals a homomorphism count over n^k tuples (adjacent motif vertices
//! must land on distinct adjacent graph vertices because the embedded diagonal is zero),
//! which the [`DensityCounts`] cache evaluates in closed form for k <= 3 so that big-n
//! trajectories can record densities cheaply.

use rand::Rng;

use crate::graph::ColouredGraph;
use crate::motif::{Motif, MotifCatalog, Shape};
use crate::{Error, Result};

/// Grid-size cap for the exact cut norm (2^m subset enumeration).
pub const MAX_EXACT_CUT_M: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ColouredGraphon {
    m: usize,
    /// Row-major m x m symmetric kernel, values in [0,1].
    kernel: Vec<f64>,
    /// Colour profile, values in [0,1].
    colour: Vec<f64>,
}

impl ColouredGraphon {
    pub fn new(m: usize, kernel: Vec<f64>, colour: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("graphon grid must be non-empty".into()));
        }
        if kernel.len() != m * m || colour.len() != m {
            return Err(Error::InvalidInput(format!(
                "grid size mismatch: m = {m}, kernel len {}, colour len {}",
                kernel.len(),
                colour.len()
            )));
        }
        for &v in kernel.iter().chain(colour.iter()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("value {v} outside [0,1]")));
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if kernel[i * m + j] != kernel[j * m + i] {
                    return Err(Error::InvalidInput(format!(
                        "kernel not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(ColouredGraphon { m, kernel, colour })
    }

    /// Constant kernel `p`, constant colour `q` on an m-grid.
    pub fn constant(m: usize, p: f64, q: f64) -> Result<Self> {
        ColouredGraphon::new(m, vec![p; m * m], vec![q; m])
    }

    /// Step-graphon embedding of a coloured graph: one cell per vertex, 0/1 kernel with
    /// zero diagonal, 0/1 colours.
    pub fn embed(g: &ColouredGraph) -> Self {
        let n = g.n();
        let mut kernel = vec![0.0; n * n];
        for u in 0..n {
            for v in g.neighbours(u) {
                kernel[u * n + v] = 1.0;
            }
        }
        let colour = g.colours().iter().map(|&c| c as f64).collect();
        ColouredGraphon {
            m: n,
            kernel,
            colour,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn kernel_at(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.m + j]
    }

    pub fn colour(&self) -> &[f64] {
        &self.colour
    }

    /// Mean kernel value (edge density).
    pub fn edge_density(&self) -> f64 {
        sorted_mean(&self.kernel)
    }

    /// Mean colour (white fraction).
    pub fn colour_mean(&self) -> f64 {
        sorted_mean(&self.colour)
    }

    /// Replaces the colour profile by its mean; kernel untouched.  Constant profiles
    /// pass through bit-for-bit, so projecting twice equals projecting once.
    pub fn project(&self) -> ColouredGraphon {
        let first = self.colour[0];
        let mean = if self.colour.iter().all(|&c| c == first) {
            first
        } else {
            self.colour_mean()
        };
        ColouredGraphon {
            m: self.m,
            kernel: self.kernel.clone(),
            colour: vec![mean; self.m],
        }
    }

    /// Density of a coloured motif by exact grid summation, O(m^k).
    pub fn motif_density(&self, f: &Motif) -> Result<f64> {
        let k = f.k();
        self.density_guard(k)?;
        let weights = self.colour_weights(f);
        Ok(self.tuple_sum(k, &f.edges(), Some(&weights)))
    }

    /// Density of an uncoloured shape (colours ignored), O(m^k).
    pub fn shape_density(&self, f: &Shape) -> Result<f64> {
        let k = f.k();
        self.density_guard(k)?;
        Ok(self.tuple_sum(k, &f.edges(), None))
    }

    fn density_guard(&self, k: usize) -> Result<()> {
        if k == 0 || k > 4 {
            return Err(Error::SizeLimit(format!(
                "grid densities support motif sizes 1..=4, got {k}"
            )));
        }
        let cost = (self.m as f64).powi(k as i32);
        if cost > 2e9 {
            return Err(Error::SizeLimit(format!(
                "grid density of a size-{k} motif on an m = {} grid is too large; use the \
                 counting path for graphs",
                self.m
            )));
        }
        Ok(())
    }

    /// Per-vertex colour weight tables: `weights[v][x]` is vertex v's colour factor when
    /// placed on cell x.
    fn colour_weights(&self, f: &Motif) -> Vec<Vec<f64>> {
        (0..f.k())
            .map(|v| {
                self.colour
                    .iter()
                    .map(|&c| if f.colour(v) == 1 { c } else { 1.0 - c })
                    .collect()
            })
            .collect()
    }

    fn tuple_sum(&self, k: usize, edges: &[(usize, usize)], weights: Option<&[Vec<f64>]>) -> f64 {
        let m = self.m;
        let mut total = 0.0;
        let mut idx = vec![0usize; k];
        'outer: loop {
            let mut term = 1.0;
            if let Some(w) = weights {
                for v in 0..k {
                    term *= w[v][idx[v]];
                }
            }
            if term != 0.0 {
                for &(a, b) in edges {
                    term *= self.kernel[idx[a] * m + idx[b]];
                    if term == 0.0 {
                        break;
                    }
                }
            }
            total += term;
            for v in 0..k {
                idx[v] += 1;
                if idx[v] < m {
                    continue 'outer;
                }
                idx[v] = 0;
            }
            break;
        }
        total / (m as f64).powi(k as i32)
    }

    /// Connectivity statistic of the kernel: the minimum over grid cell pairs (i, j),
    /// including i = j, of the grid average of kappa(i, z) kappa(z, j) over z.
    pub fn connectivity_nu(&self) -> f64 {
        let m = self.m;
        let mut min = f64::INFINITY;
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for z in 0..m {
                    s += self.kernel[i * m + z] * self.kernel[z * m + j];
                }
                min = min.min(s / m as f64);
            }
        }
        min
    }

    /// Samples an n-vertex graph: vertex positions are iid uniform cells, colours are
    /// Bernoulli(colour(cell)), pairs are independent Bernoulli(kappa(cell_i, cell_j)).
    pub fn sample_graph<R: Rng>(&self, n: usize, rng: &mut R) -> Result<ColouredGraph> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        let m = self.m;
        let cells: Vec<usize> = (0..n)
            .map(|_| ((rng.gen::<f64>() * m as f64) as usize).min(m - 1))
            .collect();
        let colours: Vec<u8> = cells
            .iter()
            .map(|&x| u8::from(rng.gen::<f64>() < self.colour[x]))
            .collect();
        let mut g = ColouredGraph::with_colours(colours)?;
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen::<f64>() < self.kernel[cells[u] * m + cells[v]] {
                    g.apply_transition(crate::graph::Transition::Toggle(u, v))?;
                }
            }
        }
        Ok(g)
    }
}

/// Mean computed by summing in sorted order, so the result is invariant under any
/// permutation of the entries (bit-exact grid-relabelling equivariance relies on this).
pub fn sorted_mean(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / values.len() as f64
}

// --- graph-side densities ---

/// Number of injective colour- and edge-preserving maps from `f` into `g` (non-edges of
/// the motif are unconstrained), summed over ordered tuples.
pub fn injective_count(g: &ColouredGraph, f: &Motif) -> Result<u64> {
    let k = f.k();
    let n = g.n();
    if k > 8 {
        return Err(Error::SizeLimit(format!("injective counts support k <= 8, got {k}")));
    }
    if n > 64 {
        return Err(Error::SizeLimit(format!(
            "injective counts support n <= 64, got {n}"
        )));
    }
    if k > n {
        return Ok(0);
    }
    let edges = f.edges();
    let mut count = 0u64;
    let mut assign = vec![0usize; k];
    let mut used = 0u64;
    fn rec(
        g: &ColouredGraph,
        f: &Motif,
        edges: &[(usize, usize)],
        assign: &mut [usize],
        used: &mut u64,
        v: usize,
        count: &mut u64,
    ) {
        if v == f.k() {
            *count += 1;
            return;
        }
        for u in 0..g.n() {
            if (*used >> u) & 1 == 1 || g.colour(u) != f.colour(v) {
                continue;
            }
            let ok = edges
                .iter()
                .filter(|&&(a, b)| (a == v && b < v) || (b == v && a < v))
                .all(|&(a, b)| {
                    let other = if a == v { b } else { a };
                    g.has_edge(u, assign[other])
                });
            if ok {
                assign[v] = u;
                *used |= 1 << u;
                rec(g, f, edges, assign, used, v + 1, count);
                *used &= !(1 << u);
            }
        }
    }
    rec(g, f, &edges, &mut assign, &mut used, 0, &mut count);
    Ok(count)
}

/// Falling factorial (n)_k as f64.
pub fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Injective motif density: injective count over (n)_k ordered tuples; 0 when k > n.
pub fn injective_density(g: &ColouredGraph, f: &Motif) -> Result<f64> {
    if f.k() > g.n() {
        return Ok(0.0);
    }
    Ok(injective_count(g, f)? as f64 / falling(g.n(), f.k()))
}

/// Homomorphism count over all n^k ordered tuples with the embedded-diagonal convention:
/// motif-adjacent vertices must map to distinct adjacent graph vertices, colours must
/// match exactly, and non-adjacent motif vertices may collide.
pub fn hom_count(g: &ColouredGraph, f: &Motif) -> Result<u64> {
    hom_count_impl(g, f.k(), &f.edges(), Some(f))
}

/// Colour-blind homomorphism count of a shape.
pub fn shape_hom_count(g: &ColouredGraph, f: &Shape) -> Result<u64> {
    hom_count_impl(g, f.k(), &f.edges(), None)
}

fn hom_count_impl(
    g: &ColouredGraph,
    k: usize,
    edges: &[(usize, usize)],
    colours: Option<&Motif>,
) -> Result<u64> {
    if k > 8 {
        return Err(Error::SizeLimit(format!("hom counts support k <= 8, got {k}")));
    }
    if (g.n() as f64).powi(k as i32) > 5e8 {
        return Err(Error::SizeLimit(format!(
            "hom count of size-{k} motif on n = {} is too large; use DensityCounts",
            g.n()
        )));
    }
    let mut count = 0u64;
    let mut assign = vec![0usize; k];
    fn rec(
        g: &ColouredGraph,
        k: usize,
        edges: &[(usize, usize)],
        colours: Option<&Motif>,
        assign: &mut [usize],
        v: usize,
        count: &mut u64,
    ) {
        if v == k {
            *count += 1;
            return;
        }
        'cand: for u in 0..g.n() {
            if let Some(f) = colours {
                if g.colour(u) != f.colour(v) {
                    continue;
                }
            }
            for &(a, b) in edges {
                let other = if a == v && b < v {
                    b
                } else if b == v && a < v {
                    a
                } else {
                    continue;
                };
                if !g.has_edge(u, assign[other]) {
                    continue 'cand;
                }
            }
            assign[v] = u;
            rec(g, k, edges, colours, assign, v + 1, count);
        }
    }
    rec(g, k, &edges, colours, &mut assign, 0, &mut count);
    Ok(count)
}

/// Regular (grid) motif density of a graph: hom count over n^k.  Equals
/// `ColouredGraphon::embed(g).motif_density(f)` exactly.
pub fn graph_density(g: &ColouredGraph, f: &Motif) -> Result<f64> {
    Ok(hom_count(g, f)? as f64 / (g.n() as f64).powi(f.k() as i32))
}

pub fn graph_shape_density(g: &ColouredGraph, f: &Shape) -> Result<f64> {
    Ok(shape_hom_count(g, f)? as f64 / (g.n() as f64).powi(f.k() as i32))
}

/// Closed-form density ingredients of one graph, for evaluating every motif with
/// k <= 3 in O(1) after an O(n^2 + E n / 64) setup.
#[derive(Debug, Clone)]
pub struct DensityCounts {
    n: usize,
    /// Vertex counts by colour.
    verts: [f64; 2],
    /// Ordered adjacent pairs by colours (u, v).
    pairs: [[f64; 2]; 2],
    /// Ordered wedges: centre colour, then the two leaf colours.
    wedges: [[[f64; 2]; 2]; 2],
    /// Ordered triangles by position colours.
    triangles: [[[f64; 2]; 2]; 2],
}

impl DensityCounts {
    pub fn new(g: &ColouredGraph) -> Self {
        let n = g.n();
        let w = g.white_count();
        let words = n.div_ceil(64);
        let mut white_mask = vec![0u64; words];
        for v in 0..n {
            if g.colour(v) == 1 {
                white_mask[v / 64] |= 1 << (v % 64);
            }
        }
        // Degrees split by neighbour colour.
        let mut deg_by = vec![[0u64; 2]; n];
        for v in 0..n {
            let row = g.adjacency_row(v);
            let mut white = 0u64;
            for i in 0..words {
                white += (row[i] & white_mask[i]).count_ones() as u64;
            }
            deg_by[v] = [g.degree(v) as u64 - white, white];
        }
        let mut pairs = [[0.0; 2]; 2];
        let mut wedges = [[[0.0; 2]; 2]; 2];
        for v in 0..n {
            let c = g.colour(v) as usize;
            let [db, dw] = deg_by[v];
            pairs[c][0] += db as f64;
            pairs[c][1] += dw as f64;
            for (a, da) in [(0, db as f64), (1, dw as f64)] {
                for (b, dbb) in [(0, db as f64), (1, dw as f64)] {
                    wedges[c][a][b] += da * dbb;
                }
            }
        }
        // Unordered triangles by colour multiset index (number of white corners).
        let mut tri_ms = [0u64; 4];
        for u in 0..n {
            let ru = g.adjacency_row(u);
            for v in g.neighbours(u) {
                if v <= u {
                    continue;
                }
                let rv = g.adjacency_row(v);
                let mut common_white = 0u64;
                let mut common = 0u64;
                for i in 0..words {
                    let c = ru[i] & rv[i];
                    common += c.count_ones() as u64;
                    common_white += (c & white_mask[i]).count_ones() as u64;
                }
                let base = (g.colour(u) + g.colour(v)) as usize;
                tri_ms[base + 1] += common_white;
                tri_ms[base] += common - common_white;
            }
        }
        // Each triangle was counted once per edge.
        for t in tri_ms.iter_mut() {
            debug_assert!(*t % 3 == 0);
            *t /= 3;
        }
        // Ordered triangles with position colours (c1, c2, c3): every unordered triangle
        // whose colour multiset matches contributes (#whites)! (#blacks)! orderings.
        let fact = [1.0, 1.0, 2.0, 6.0];
        let mut triangles = [[[0.0; 2]; 2]; 2];
        for c1 in 0..2 {
            for c2 in 0..2 {
                for c3 in 0..2 {
                    let whites = c1 + c2 + c3;
                    triangles[c1][c2][c3] = tri_ms[whites] as f64 * fact[whites] * fact[3 - whites];
                }
            }
        }
        DensityCounts {
            n,
            verts: [(n - w) as f64, w as f64],
            pairs,
            wedges,
            triangles,
        }
    }

    /// Homomorphism count of a coloured motif with k <= 3.
    pub fn motif_hom(&self, f: &Motif) -> Result<f64> {
        let k = f.k();
        let c: Vec<usize> = f.colours().iter().map(|&c| c as usize).collect();
        match k {
            1 => Ok(self.verts[c[0]]),
            2 => {
                if f.has_edge(0, 1) {
                    Ok(self.pairs[c[0]][c[1]])
                } else {
                    Ok(self.verts[c[0]] * self.verts[c[1]])
                }
            }
            3 => match f.edge_count() {
                0 => Ok(self.verts[c[0]] * self.verts[c[1]] * self.verts[c[2]]),
                1 => {
                    let (a, b) = f.edges()[0];
                    let iso = 3 - a - b;
                    Ok(self.pairs[c[a]][c[b]] * self.verts[c[iso]])
                }
                2 => {
                    let centre = (0..3).find(|&v| f.degree(v) == 2).unwrap();
                    let leaves: Vec<usize> = (0..3).filter(|&v| v != centre).collect();
                    Ok(self.wedges[c[centre]][c[leaves[0]]][c[leaves[1]]])
                }
                _ => Ok(self.triangles[c[0]][c[1]][c[2]]),
            },
            _ => Err(Error::SizeLimit(format!(
                "DensityCounts supports motif sizes 1..=3, got {k}"
            ))),
        }
    }

    pub fn motif_density(&self, f: &Motif) -> Result<f64> {
        Ok(self.motif_hom(f)? / (self.n as f64).powi(f.k() as i32))
    }

    /// Colour-blind density of a shape with k <= 3.
    pub fn shape_density(&self, f: &Shape) -> Result<f64> {
        let k = f.k();
        let n = self.n as f64;
        let verts = self.verts[0] + self.verts[1];
        debug_assert_eq!(verts, n);
        let pairs: f64 = self.pairs.iter().flatten().sum();
        let hom = match k {
            1 => n,
            2 => {
                if f.edge_count() == 1 {
                    pairs
                } else {
                    n * n
                }
            }
            3 => match f.edge_count() {
                0 => n * n * n,
                1 => pairs * n,
                2 => self
                    .wedges
                    .iter()
                    .flat_map(|a| a.iter().flatten())
                    .sum::<f64>(),
                _ => self
                    .triangles
                    .iter()
                    .flat_map(|a| a.iter().flatten())
                    .sum::<f64>(),
            },
            _ => {
                return Err(Error::SizeLimit(format!(
                    "DensityCounts supports shape sizes 1..=3, got {k}"
                )))
            }
        };
        Ok(hom / n.powi(k as i32))
    }

    /// White fraction.
    pub fn colour_mean(&self) -> f64 {
        self.verts[1] / self.n as f64
    }
}

/// Densities of every catalog motif.  Graphs with many vertices must keep the catalog at
/// k_max <= 3 (counting path); small graphs fall back to the generic loop for k = 4.
pub fn graph_catalog_densities(g: &ColouredGraph, catalog: &MotifCatalog) -> Result<Vec<f64>> {
    let counts = DensityCounts::new(g);
    catalog
        .motifs()
        .iter()
        .map(|f| {
            if f.k() <= 3 {
                counts.motif_density(f)
            } else {
                graph_density(g, f)
            }
        })
        .collect()
}

/// Densities of every catalog motif of a graphon (grid integrals).
pub fn graphon_catalog_densities(w: &ColouredGraphon, catalog: &MotifCatalog) -> Result<Vec<f64>> {
    catalog.motifs().iter().map(|f| w.motif_density(f)).collect()
}

/// Subgraph metric value plus the weight of everything the catalog truncates away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DSub {
    pub value: f64,
    /// Upper bound on the truncated tail: 2^-len(catalog).
    pub truncation_bound: f64,
}

/// Weighted density gap over aligned catalog density vectors.
pub fn d_sub_from_densities(t1: &[f64], t2: &[f64]) -> DSub {
    assert_eq!(t1.len(), t2.len());
    let mut value = 0.0;
    for (i, (a, b)) in t1.iter().zip(t2).enumerate() {
        value += MotifCatalog::weight(i) * (a - b).abs();
    }
    DSub {
        value,
        truncation_bound: 0.5f64.powi(t1.len() as i32),
    }
}

/// Subgraph metric between two graphons over the catalog.
pub fn d_sub(w1: &ColouredGraphon, w2: &ColouredGraphon, catalog: &MotifCatalog) -> Result<DSub> {
    let t1 = graphon_catalog_densities(w1, catalog)?;
    let t2 = graphon_catalog_densities(w2, catalog)?;
    Ok(d_sub_from_densities(&t1, &t2))
}

/// Weighted density gap between a graph and its colour-averaged projection:
/// sum_i 2^-(i+1) |t_{F_i}(G) - qbar^w (1-qbar)^b t_{shape(F_i)}(G)|.
pub fn projection_gap(g: &ColouredGraph, catalog: &MotifCatalog) -> Result<f64> {
    let counts = DensityCounts::new(g);
    let qbar = counts.colour_mean();
    let mut gap = 0.0;
    for (i, f) in catalog.motifs().iter().enumerate() {
        let (t, ts) = if f.k() <= 3 {
            (counts.motif_density(f)?, counts.shape_density(&f.shape())?)
        } else {
            (graph_density(g, f)?, graph_shape_density(g, &f.shape())?)
        };
        let projected =
            qbar.powi(f.white_count() as i32) * (1.0 - qbar).powi(f.black_count() as i32) * ts;
        gap += MotifCatalog::weight(i) * (t - projected).abs();
    }
    Ok(gap)
}

// --- cut norms and the cut-distance bracket ---

/// Exact cut norm of a signed step kernel on an m-grid: max over cell subsets (A, B) of
/// |sum_{A x B} a_ij| / m^2.  Exhaustive over 2^m subsets A (Gray code), greedy in B.
pub fn cut_norm_exact(a: &[f64], m: usize) -> Result<f64> {
    if m > MAX_EXACT_CUT_M {
        return Err(Error::SizeLimit(format!(
            "exact cut norm supports m <= {MAX_EXACT_CUT_M}, got {m}"
        )));
    }
    assert_eq!(a.len(), m * m);
    let mut col = vec![0.0f64; m];
    let mut best = 0.0f64;
    let mut prev_gray = 0u32;
    for g in 1u32..(1 << m) {
        let gray = g ^ (g >> 1);
        let flipped = (gray ^ prev_gray).trailing_zeros() as usize;
        let sign = if (gray >> flipped) & 1 == 1 { 1.0 } else { -1.0 };
        for j in 0..m {
            col[j] += sign * a[flipped * m + j];
        }
        prev_gray = gray;
        let mut pos = 0.0;
        let mut neg = 0.0;
        for &s in &col {
            if s > 0.0 {
                pos += s;
            } else {
                neg -= s;
            }
        }
        best = best.max(pos).max(neg);
    }
    Ok(best / (m * m) as f64)
}

/// Lower bound on the cut norm by alternating greedy optimisation of (A, B) from random
/// starts; exact for many instances but only guaranteed to be a lower bound.
pub fn cut_norm_lower(a: &[f64], m: usize, restarts: usize, seed: u64) -> f64 {
    use rand::RngCore;
    assert_eq!(a.len(), m * m);
    let mut rng = crate::rngs::stream_rng(seed, 0x6375746e);
    let mut best = 0.0f64;
    for sign in [1.0f64, -1.0] {
        for _ in 0..restarts.max(1) {
            let mut in_a: Vec<bool> = (0..m).map(|_| rng.next_u32() & 1 == 1).collect();
            let mut in_b: Vec<bool> = (0..m).map(|_| rng.next_u32() & 1 == 1).collect();
            // Alternate: best B given A, best A given B; monotone, terminates.
            for _ in 0..64 {
                let mut changed = false;
                for j in 0..m {
                    let s: f64 = (0..m).filter(|&i| in_a[i]).map(|i| a[i * m + j]).sum();
                    let want = sign * s > 0.0;
                    if in_b[j] != want {
                        in_b[j] = want;
                        changed = true;
                    }
                }
                for i in 0..m {
                    let s: f64 = (0..m).filter(|&j| in_b[j]).map(|j| a[i * m + j]).sum();
                    let want = sign * s > 0.0;
                    if in_a[i] != want {
                        in_a[i] = want;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut v = 0.0;
            for i in 0..m {
                if in_a[i] {
                    for j in 0..m {
                        if in_b[j] {
                            v += a[i * m + j];
                        }
                    }
                }
            }
            best = best.max(v.abs());
        }
    }
    best / (m * m) as f64
}

/// Exact cut norm of a signed colour profile: max over subsets of |sum_A c_i| / m.
pub fn colour_cut_norm(c: &[f64]) -> f64 {
    let pos: f64 = c.iter().filter(|&&v| v > 0.0).sum();
    let neg: f64 = c.iter().filter(|&&v| v < 0.0).sum();
    pos.max(-neg) / c.len() as f64
}

/// Two-sided bracket for the overlay cut distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutDistanceBracket {
    /// Valid lower bound: overlay-invariant mean gaps.
    pub lower: f64,
    /// Value at the best overlay permutation found.  A true upper bound when
    /// `exact_norms` holds; otherwise itself a heuristic.
    pub upper: f64,
    /// Whether cut norms were computed exhaustively (m <= 16).
    pub exact_norms: bool,
}

/// Cut distance between same-grid coloured graphons: infimum over overlays of
/// ||kappa1 - kappa2 o lambda||_cut + ||c1 - c2 o lambda||_cut, with the overlay
/// restricted to grid permutations.  Returns a bracket: the lower bound comes from the
/// permutation-invariant mean gaps, the upper from the best permutation searched.
pub fn cut_distance(
    w1: &ColouredGraphon,
    w2: &ColouredGraphon,
    restarts: usize,
    seed: u64,
) -> Result<CutDistanceBracket> {
    let m = w1.m();
    if w2.m() != m {
        return Err(Error::InvalidInput(format!(
            "cut distance needs matching grids, got {m} and {}",
            w2.m()
        )));
    }
    let lower = (w1.edge_density() - w2.edge_density()).abs()
        + (w1.colour_mean() - w2.colour_mean()).abs();
    let exact = m <= MAX_EXACT_CUT_M;
    let eval = |perm: &[usize]| -> Result<f64> {
        let mut dk = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                dk[i * m + j] = w1.kernel_at(i, j) - w2.kernel_at(perm[i], perm[j]);
            }
        }
        let dc: Vec<f64> = (0..m).map(|i| w1.colour()[i] - w2.colour()[perm[i]]).collect();
        let kn = if exact {
            cut_norm_exact(&dk, m)?
        } else {
            cut_norm_lower(&dk, m, restarts.max(4), seed)
        };
        Ok(kn + colour_cut_norm(&dc))
    };
    // Candidate overlays: identity, both sort orders, then greedy L1 improvement by
    // pairwise swaps from the best seed candidate (surrogate objective: plain L1 gap,
    // cheap to update), followed by exact evaluation of the finalists.
    let idone: Vec<usize> = (0..m).collect();
    let sort_key = |w: &ColouredGraphon| -> Vec<(usize, f64, f64)> {
        let mut v: Vec<(usize, f64, f64)> = (0..m)
            .map(|i| {
                let deg: f64 = (0..m).map(|j| w.kernel_at(i, j)).sum();
                (i, w.colour()[i], deg)
            })
            .collect();
        v.sort_by(|a, b| (a.1, a.2).partial_cmp(&(b.1, b.2)).unwrap());
        v
    };
    let s1 = sort_key(w1);
    let s2 = sort_key(w2);
    let mut sorted = vec![0usize; m];
    for (r1, r2) in s1.iter().zip(&s2) {
        sorted[r1.0] = r2.0;
    }
    let l1 = |perm: &[usize]| -> f64 {
        let mut v = 0.0;
        for i in 0..m {
            for j in 0..m {
                v += (w1.kernel_at(i, j) - w2.kernel_at(perm[i], perm[j])).abs();
            }
            v += (w1.colour()[i] - w2.colour()[perm[i]]).abs();
        }
        v
    };
    let mut improved = sorted.clone();
    let mut cur = l1(&improved);
    let mut pass = 0;
    loop {
        let mut changed = false;
        for i in 0..m {
            for j in (i + 1)..m {
                improved.swap(i, j);
                let v = l1(&improved);
                if v + 1e-15 < cur {
                    cur = v;
                    changed = true;
                } else {
                    improved.swap(i, j);
                }
            }
        }
        pass += 1;
        if !changed || pass >= 4 {
            break;
        }
    }
    let mut upper = f64::INFINITY;
    for perm in [&idone, &sorted, &improved] {
        upper = upper.min(eval(perm)?);
    }
    Ok(CutDistanceBracket {
        lower,
        upper,
        exact_norms: exact,
    })
}
