//! Signed motif multisets and the drift/diffusion coefficients they induce for motif
//! densities under the jump chain, plus an exhaustive generator oracle for checking the
//! closed-form coefficients against brute force.
//!
//! The chain moves by single colour flips and single edge toggles.  Applying the
//! generator to a motif density produces signed combinations of densities of edited
//! motifs: a flip at an embedded vertex is witnessed by a discordant neighbour, which
//! either lies outside the embedding (attach a leaf) or inside it (add an internal
//! edge); for non-injective densities two embedded vertices can also collide (merge).
//! Second-order (diffusion) coefficients pair two embeddings that share the flipped
//! vertex (cross merge plus a witness leaf).  Multiplicities are bookkept on canonical
//! keys so that structurally equal contributions cancel exactly.

use std::collections::BTreeMap;

use num::rational::Ratio;
use num::Zero;

use crate::graph::{ColouredGraph, Transition};
use crate::graphon::{self, ColouredGraphon, DensityCounts};
use crate::motif::{CanonKey, Motif, Shape, MAX_CANON_K};
use crate::params::ModelParams;
use crate::{Error, Result};

pub type Rational = Ratio<i128>;

/// Multiset of motif classes with integer (possibly negative) multiplicities.
/// Entries with multiplicity zero are pruned eagerly.
#[derive(Debug, Clone, Default)]
pub struct SignedMotifSet {
    entries: BTreeMap<CanonKey, (Motif, i64)>,
}

impl PartialEq for SignedMotifSet {
    /// Equality of classes and multiplicities; representatives are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((k1, (_, m1)), (k2, (_, m2)))| k1 == k2 && m1 == m2)
    }
}

impl Eq for SignedMotifSet {}

impl SignedMotifSet {
    pub fn new() -> Self {
        SignedMotifSet::default()
    }

    pub fn insert(&mut self, motif: Motif, mult: i64) -> Result<()> {
        if motif.k() > MAX_CANON_K {
            return Err(Error::SizeLimit(format!(
                "multiset entry with {} vertices exceeds canonicalisation limit {MAX_CANON_K}",
                motif.k()
            )));
        }
        if mult == 0 {
            return Ok(());
        }
        let key = motif.canonical_key();
        match self.entries.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert((motif, mult));
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                e.get_mut().1 += mult;
                if e.get().1 == 0 {
                    e.remove();
                }
            }
        }
        Ok(())
    }

    /// Number of distinct classes.
    pub fn class_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn multiplicity(&self, motif: &Motif) -> i64 {
        self.entries
            .get(&motif.canonical_key())
            .map_or(0, |(_, m)| *m)
    }

    /// (representative, multiplicity) pairs in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&Motif, i64)> {
        self.entries.values().map(|(m, c)| (m, *c))
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in other.iter() {
            out.insert(m.clone(), c).expect("sizes already admitted");
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in other.iter() {
            out.insert(m.clone(), -c).expect("sizes already admitted");
        }
        out
    }

    /// Multiplicity-weighted sum of a density over the entries.
    pub fn eval<F>(&self, mut t: F) -> Result<f64>
    where
        F: FnMut(&Motif) -> Result<f64>,
    {
        let mut total = 0.0;
        for (m, c) in self.iter() {
            total += c as f64 * t(m)?;
        }
        Ok(total)
    }

    pub fn eval_rational<F>(&self, mut t: F) -> Result<Rational>
    where
        F: FnMut(&Motif) -> Result<Rational>,
    {
        let mut total = Rational::zero();
        for (m, c) in self.iter() {
            total += t(m)? * Rational::from_integer(c as i128);
        }
        Ok(total)
    }

    /// Dump as (canonical key, multiplicity) rows, key order.
    pub fn dump(&self) -> Vec<(CanonKey, i64)> {
        self.entries.iter().map(|(k, (_, c))| (k.clone(), *c)).collect()
    }
}

// --- multiset builders ---
//
// All index sums run over ordered vertex choices, so multiplicities count ordered
// witnesses exactly.  New-vertex colours are fixed before any flip is applied.

/// For each vertex: attach a leaf of the same colour, then flip the vertex.
pub fn spawn_flip(f: &Motif) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for p in 0..f.k() {
        let (m, leaf) = f.with_vertex(f.colour(p));
        out.insert(m.with_flipped(p).with_edge(p, leaf), 1)?;
    }
    Ok(out)
}

/// For each vertex: attach a leaf of the opposite colour.
pub fn spawn_opposite(f: &Motif) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for p in 0..f.k() {
        let (m, leaf) = f.with_vertex(1 - f.colour(p));
        out.insert(m.with_edge(p, leaf), 1)?;
    }
    Ok(out)
}

pub fn spawn_diff(f: &Motif) -> Result<SignedMotifSet> {
    Ok(spawn_flip(f)?.minus(&spawn_opposite(f)?))
}

/// For each ordered pair of same-coloured vertices (p, q): flip p and join p to q
/// (joining is idempotent but still counts).
pub fn internal_flip(f: &Motif) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for p in 0..f.k() {
        for q in 0..f.k() {
            if q != p && f.colour(q) == f.colour(p) {
                out.insert(f.with_flipped(p).with_edge(p, q), 1)?;
            }
        }
    }
    Ok(out)
}

/// For each ordered pair of opposite-coloured vertices (p, q): join p to q.
pub fn internal_opposite(f: &Motif) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for p in 0..f.k() {
        for q in 0..f.k() {
            if q != p && f.colour(q) != f.colour(p) {
                out.insert(f.with_edge(p, q), 1)?;
            }
        }
    }
    Ok(out)
}

pub fn internal_diff(f: &Motif) -> Result<SignedMotifSet> {
    Ok(internal_flip(f)?.minus(&internal_opposite(f)?))
}

/// For each unordered non-adjacent same-coloured pair: the plain merge.  These are the
/// collision classes relating subgraph densities to injective ones.
pub fn merge_classes(f: &Motif) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for a in 0..f.k() {
        for b in (a + 1)..f.k() {
            if !f.has_edge(a, b) && f.colour(a) == f.colour(b) {
                out.insert(f.merge(a, b).0, 1)?;
            }
        }
    }
    Ok(out)
}

/// Merge-collision correction to the subgraph-density drift: leaf sets of the merge
/// classes minus merge classes of the leaf sets.  Merging and leaf attachment commute
/// except where they touch the same vertices, and the difference is exactly the O(1)
/// effect of hom-count collisions on the flip drift.
pub fn merge_correction(f: &Motif) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    let merged = merge_classes(f)?;
    for (h, mult) in merged.iter() {
        let leaves = spawn_diff(h)?;
        for (h2, mult2) in leaves.iter() {
            out.insert(h2.clone(), mult * mult2)?;
        }
    }
    let leaves = spawn_diff(f)?;
    for (h, mult) in leaves.iter() {
        let merged = merge_classes(h)?;
        for (h2, mult2) in merged.iter() {
            out.insert(h2.clone(), -mult * mult2)?;
        }
    }
    Ok(out)
}

fn merge_spawn_impl(f: &Motif, same_colour: bool) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for a in 0..f.k() {
        for b in 0..f.k() {
            if b == a || f.has_edge(a, b) || (f.colour(a) == f.colour(b)) != same_colour {
                continue;
            }
            let (merged, kept) = f.merge(a, b);
            let (m, leaf) = merged.with_vertex(f.colour(a));
            out.insert(m.with_flipped(kept).with_edge(kept, leaf), 1)?;
        }
    }
    Ok(out)
}

/// For each ordered non-adjacent same-coloured pair (a, b): merge them, attach a leaf
/// of the original colour to the merged vertex, and flip the merged vertex.
pub fn merge_spawn_same(f: &Motif) -> Result<SignedMotifSet> {
    merge_spawn_impl(f, true)
}

/// The same construction over opposite-coloured non-adjacent pairs (the merged vertex
/// takes the first vertex's colour).
pub fn merge_spawn_opposite(f: &Motif) -> Result<SignedMotifSet> {
    merge_spawn_impl(f, false)
}

pub fn merge_spawn_diff(f: &Motif) -> Result<SignedMotifSet> {
    Ok(merge_spawn_same(f)?.minus(&merge_spawn_opposite(f)?))
}

/// Cross-merge a vertex of `f` with a vertex of `f2` (merged vertex keeps `f`'s
/// colour), attach a leaf of the merged vertex's original colour, flip the merged
/// vertex.  `matched` selects pairs whose colours agree or disagree.
pub fn pair_merge_flip(f: &Motif, f2: &Motif, matched: bool) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for a in 0..f.k() {
        for b in 0..f2.k() {
            if (f.colour(a) == f2.colour(b)) != matched {
                continue;
            }
            let (merged, kept, _) = f.cross_merge(a, f2, b);
            let (m, leaf) = merged.with_vertex(f.colour(a));
            out.insert(m.with_flipped(kept).with_edge(kept, leaf), 1)?;
        }
    }
    Ok(out)
}

/// As [`pair_merge_flip`] but the leaf takes the opposite colour and nothing flips.
pub fn pair_merge_plain(f: &Motif, f2: &Motif, matched: bool) -> Result<SignedMotifSet> {
    let mut out = SignedMotifSet::new();
    for a in 0..f.k() {
        for b in 0..f2.k() {
            if (f.colour(a) == f2.colour(b)) != matched {
                continue;
            }
            let (merged, kept, _) = f.cross_merge(a, f2, b);
            let (m, leaf) = merged.with_vertex(1 - f.colour(a));
            out.insert(m.with_edge(kept, leaf), 1)?;
        }
    }
    Ok(out)
}

/// Signed diffusion multiset: matched flip + matched plain − mismatched flip −
/// mismatched plain.
pub fn diffusion_set(f: &Motif, f2: &Motif) -> Result<SignedMotifSet> {
    Ok(pair_merge_flip(f, f2, true)?
        .plus(&pair_merge_plain(f, f2, true)?)
        .minus(&pair_merge_flip(f, f2, false)?)
        .minus(&pair_merge_plain(f, f2, false)?))
}

// --- coefficient evaluation ---

/// Which density family a coefficient is built from.  Injective densities admit an
/// exact first-order formula; regular densities pick up merge corrections and an
/// O(1/n) error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavour {
    Injective,
    Regular,
}

/// Density evaluator used by the coefficient formulas.
pub enum DensitySource<'a> {
    Graph(&'a ColouredGraph, Flavour),
    /// Grid densities; the regular-flavour formulas apply.
    Graphon(&'a ColouredGraphon),
}

impl DensitySource<'_> {
    pub fn flavour(&self) -> Flavour {
        match self {
            DensitySource::Graph(_, fl) => *fl,
            DensitySource::Graphon(_) => Flavour::Regular,
        }
    }

    pub fn density(&self, m: &Motif) -> Result<f64> {
        match self {
            DensitySource::Graph(g, Flavour::Injective) => graphon::injective_density(g, m),
            DensitySource::Graph(g, Flavour::Regular) => graphon::graph_density(g, m),
            DensitySource::Graphon(w) => w.motif_density(m),
        }
    }
}

/// Drift and diffusion coefficients of one motif pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    /// Flip-driven drift of t_F (carries an explicit O(n) leaf-set factor).
    pub mu_v: f64,
    /// Toggle-driven drift of t_F.
    pub mu_e: f64,
    /// Flip-driven second-order coefficient of the pair (F, F').
    pub sigma_v: f64,
}

/// Flip-driven drift coefficient.  Injective flavour: exactly (n−k) over the leaf sets
/// plus the internal set.  Regular flavour: the leaf prefactor becomes n and the
/// hom-count collisions add the merge correction; the result is accurate to O(1/n).
pub fn vertex_drift(f: &Motif, src: &DensitySource, n: usize) -> Result<f64> {
    let spare = n.checked_sub(f.k()).ok_or_else(|| {
        Error::InvalidInput(format!("motif has {} vertices but n = {n}", f.k()))
    })?;
    let t = |m: &Motif| src.density(m);
    match src.flavour() {
        Flavour::Injective => {
            Ok(spare as f64 * spawn_diff(f)?.eval(t)? + internal_diff(f)?.eval(t)?)
        }
        Flavour::Regular => Ok(n as f64 * spawn_diff(f)?.eval(t)?
            + internal_diff(f)?.eval(t)?
            + merge_correction(f)?.eval(t)?),
    }
}

/// Toggle-driven drift coefficient: per motif edge, the appear-rate times the density
/// gain from deleting the edge, minus the vanish-rate times the density.
pub fn edge_drift(f: &Motif, src: &DensitySource, params: &ModelParams) -> Result<f64> {
    let t_f = src.density(f)?;
    let mut out = 0.0;
    for (r, s) in f.edges() {
        let conc = f.colour(r) == f.colour(s);
        let gain = params.s(conc, false);
        let loss = params.s(conc, true);
        out += gain * (src.density(&f.without_edge(r, s))? - t_f) - loss * t_f;
    }
    Ok(out)
}

/// Flip-driven diffusion coefficient of a motif pair.
pub fn vertex_diffusion(f: &Motif, f2: &Motif, src: &DensitySource) -> Result<f64> {
    diffusion_set(f, f2)?.eval(|m| src.density(m))
}

pub fn coefficients(
    f: &Motif,
    f2: &Motif,
    src: &DensitySource,
    n: usize,
    params: &ModelParams,
) -> Result<Coefficients> {
    Ok(Coefficients {
        mu_v: vertex_drift(f, src, n)?,
        mu_e: edge_drift(f, src, params)?,
        sigma_v: vertex_diffusion(f, f2, src)?,
    })
}

// --- rational mode (exact zero assertions) ---

fn falling_i128(n: usize, k: usize) -> i128 {
    (0..k).map(|i| (n - i) as i128).product()
}

pub fn injective_density_rational(g: &ColouredGraph, f: &Motif) -> Result<Rational> {
    if f.k() > g.n() {
        return Ok(Rational::zero());
    }
    let count = graphon::injective_count(g, f)? as i128;
    Ok(Rational::new(count, falling_i128(g.n(), f.k())))
}

pub fn regular_density_rational(g: &ColouredGraph, f: &Motif) -> Result<Rational> {
    let count = graphon::hom_count(g, f)? as i128;
    Ok(Rational::new(count, (g.n() as i128).pow(f.k() as u32)))
}

fn rational_density(g: &ColouredGraph, f: &Motif, flavour: Flavour) -> Result<Rational> {
    match flavour {
        Flavour::Injective => injective_density_rational(g, f),
        Flavour::Regular => regular_density_rational(g, f),
    }
}

pub fn vertex_drift_rational(
    f: &Motif,
    g: &ColouredGraph,
    flavour: Flavour,
) -> Result<Rational> {
    let spare = g.n().checked_sub(f.k()).ok_or_else(|| {
        Error::InvalidInput(format!("motif has {} vertices but n = {}", f.k(), g.n()))
    })?;
    let t = |m: &Motif| rational_density(g, m, flavour);
    match flavour {
        Flavour::Injective => {
            let nk = Rational::from_integer(spare as i128);
            Ok(spawn_diff(f)?.eval_rational(t)? * nk + internal_diff(f)?.eval_rational(t)?)
        }
        Flavour::Regular => {
            let n = Rational::from_integer(g.n() as i128);
            Ok(spawn_diff(f)?.eval_rational(t)? * n
                + internal_diff(f)?.eval_rational(t)?
                + merge_correction(f)?.eval_rational(t)?)
        }
    }
}

pub fn vertex_diffusion_rational(
    f: &Motif,
    f2: &Motif,
    g: &ColouredGraph,
    flavour: Flavour,
) -> Result<Rational> {
    diffusion_set(f, f2)?.eval_rational(|m| rational_density(g, m, flavour))
}

// --- colour-sum identities ---

/// Exact colour-sum checks for one shape: summing the flip-driven drift (and the
/// diffusion against a fixed partner) over all 2^k colourings must vanish, because the
/// colourings' multisets rearrange into each other.  The five multiset identities are
/// the structural form of that cancellation.
#[derive(Debug, Clone)]
pub struct ColourSumReport {
    /// Σ over colourings of the flip-driven drift (regular flavour), exact.
    pub drift_sum: Rational,
    /// Σ over colourings H of the diffusion coefficient (H, H'), exact.
    pub diffusion_row_sum: Rational,
    /// Σ over colourings H of the diffusion coefficient (H', H), exact.
    pub diffusion_col_sum: Rational,
    /// Multiset identities: leaf sets, internal sets, merge sets, and the two
    /// cross-merge pairings (flip-vs-plain across the matched/mismatched split).
    pub identities: [bool; 5],
}

impl ColourSumReport {
    pub fn all_zero(&self) -> bool {
        self.drift_sum.is_zero()
            && self.diffusion_row_sum.is_zero()
            && self.diffusion_col_sum.is_zero()
    }

    pub fn all_identities(&self) -> bool {
        self.identities.iter().all(|&b| b)
    }
}

pub fn verify_colour_sums(
    shape: &Shape,
    partner: &Motif,
    g: &ColouredGraph,
) -> Result<ColourSumReport> {
    let colourings = shape.colourings();
    let mut drift_sum = Rational::zero();
    let mut row = Rational::zero();
    let mut col = Rational::zero();
    for h in &colourings {
        drift_sum += vertex_drift_rational(h, g, Flavour::Regular)?;
        row += vertex_diffusion_rational(h, partner, g, Flavour::Regular)?;
        col += vertex_diffusion_rational(partner, h, g, Flavour::Regular)?;
    }
    let mut sums: Vec<SignedMotifSet> = (0..10).map(|_| SignedMotifSet::new()).collect();
    for h in &colourings {
        let parts: [SignedMotifSet; 10] = [
            spawn_flip(h)?,
            spawn_opposite(h)?,
            internal_flip(h)?,
            internal_opposite(h)?,
            merge_spawn_same(h)?,
            merge_spawn_opposite(h)?,
            pair_merge_flip(h, partner, true)?,
            pair_merge_plain(h, partner, false)?,
            pair_merge_plain(h, partner, true)?,
            pair_merge_flip(h, partner, false)?,
        ];
        for (acc, part) in sums.iter_mut().zip(parts) {
            *acc = acc.plus(&part);
        }
    }
    let identities = [
        sums[0] == sums[1],
        sums[2] == sums[3],
        sums[4] == sums[5],
        sums[6] == sums[7],
        sums[8] == sums[9],
    ];
    Ok(ColourSumReport {
        drift_sum,
        diffusion_row_sum: row,
        diffusion_col_sum: col,
        identities,
    })
}

// --- exact generator oracle ---

/// Largest graph the exhaustive oracle accepts.
pub const MAX_ORACLE_N: usize = 128;

/// Applies the full jump-rate sum to an arbitrary graph functional: every colour flip
/// weighted by its discordance count, every pair toggle weighted by its category rate.
pub fn exact_generator_oracle<F>(
    g: &ColouredGraph,
    params: &ModelParams,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(&ColouredGraph) -> Result<f64>,
{
    let n = g.n();
    if n > MAX_ORACLE_N {
        return Err(Error::SizeLimit(format!(
            "oracle enumerates all transitions; n = {n} exceeds {MAX_ORACLE_N}"
        )));
    }
    let base = f(g)?;
    let mut total = 0.0;
    for u in 0..n {
        let rate = g.vertex_flip_rate(u)? as f64;
        if rate == 0.0 {
            continue;
        }
        let mut flipped = g.clone();
        flipped.apply_transition(Transition::Flip(u))?;
        total += params.eta * rate * (f(&flipped)? - base);
    }
    for u in 0..n {
        for v in (u + 1)..n {
            let rate = g.edge_switch_rate(u, v, params)?;
            if rate == 0.0 {
                continue;
            }
            let mut toggled = g.clone();
            toggled.apply_transition(Transition::Toggle(u, v))?;
            total += params.rho * rate * (f(&toggled)? - base);
        }
    }
    Ok(total)
}

/// Oracle-vs-formula residual for the drift of a single motif density.
#[derive(Debug, Clone, Copy)]
pub struct DriftCheck {
    pub oracle: f64,
    pub formula: f64,
}

impl DriftCheck {
    pub fn residual(&self) -> f64 {
        (self.oracle - self.formula).abs()
    }
}

/// First-order check: the generator applied to one motif density against
/// eta * mu_v + rho * mu_e.  Exact for injective densities; O(1/n) for regular.
pub fn check_drift(
    g: &ColouredGraph,
    f: &Motif,
    params: &ModelParams,
    flavour: Flavour,
) -> Result<DriftCheck> {
    let src = DensitySource::Graph(g, flavour);
    let formula = params.eta * vertex_drift(f, &src, g.n())?
        + params.rho * edge_drift(f, &src, params)?;
    let oracle = exact_generator_oracle(g, params, |gg| {
        DensitySource::Graph(gg, flavour).density(f)
    })?;
    Ok(DriftCheck { oracle, formula })
}

/// Second-order check on the product t_F t_F2: drift terms by the product rule plus
/// the symmetrised diffusion coefficient.  Residual is O(1/n).
pub fn check_product(
    g: &ColouredGraph,
    f: &Motif,
    f2: &Motif,
    params: &ModelParams,
    flavour: Flavour,
) -> Result<DriftCheck> {
    let src = DensitySource::Graph(g, flavour);
    let n = g.n();
    let t1 = src.density(f)?;
    let t2 = src.density(f2)?;
    let drift1 = params.eta * vertex_drift(f, &src, n)? + params.rho * edge_drift(f, &src, params)?;
    let drift2 =
        params.eta * vertex_drift(f2, &src, n)? + params.rho * edge_drift(f2, &src, params)?;
    let sigma = 0.5
        * params.eta
        * (vertex_diffusion(f, f2, &src)? + vertex_diffusion(f2, f, &src)?);
    let formula = drift1 * t2 + drift2 * t1 + sigma;
    let oracle = exact_generator_oracle(g, params, |gg| {
        let s = DensitySource::Graph(gg, flavour);
        Ok(s.density(f)? * s.density(f2)?)
    })?;
    Ok(DriftCheck { oracle, formula })
}

// --- projected generator ---

/// Smooth scalar function of d density coordinates with first and second derivatives.
pub trait Smooth {
    fn dim(&self) -> usize;
    fn value(&self, y: &[f64]) -> f64;
    fn grad(&self, y: &[f64], i: usize) -> f64;
    fn hess(&self, y: &[f64], i: usize, j: usize) -> f64;
}

/// h(y) = Σ a_i y_i + Σ c_m y_{i_m} y_{j_m}; covers every test case.
#[derive(Debug, Clone)]
pub struct Polynomial2 {
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl Polynomial2 {
    pub fn linear(weights: Vec<f64>) -> Self {
        Polynomial2 {
            linear: weights,
            quadratic: Vec::new(),
        }
    }
}

impl Smooth for Polynomial2 {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, y: &[f64]) -> f64 {
        let mut v: f64 = self.linear.iter().zip(y).map(|(a, yy)| a * yy).sum();
        for &(i, j, c) in &self.quadratic {
            v += c * y[i] * y[j];
        }
        v
    }

    fn grad(&self, y: &[f64], i: usize) -> f64 {
        let mut v = self.linear[i];
        for &(a, b, c) in &self.quadratic {
            if a == i {
                v += c * y[b];
            }
            if b == i {
                v += c * y[a];
            }
        }
        v
    }

    fn hess(&self, _y: &[f64], i: usize, j: usize) -> f64 {
        let mut v = 0.0;
        for &(a, b, c) in &self.quadratic {
            if (a, b) == (i, j) || (a, b) == (j, i) {
                v += c;
                if i == j {
                    // y_i^2 contributes 2c on the diagonal.
                    v += c;
                }
            }
        }
        v
    }
}

/// The generator applied to h of the colour-averaged density vector, split into the
/// closed-form main groups and the remainder terms that measure how far the graph is
/// from its own colour-average.  Groups needing 1/q or 1/(1−q) are None when the graph
/// is monochromatic.
#[derive(Debug, Clone)]
pub struct ProjectedGenerator {
    /// Toggle-driven drift main group (rho included).
    pub edge_drift: f64,
    /// Flip-driven first-derivative diffusion group (eta included).
    pub diffusion_grad: Option<f64>,
    /// Flip-driven second-derivative diffusion group (eta included).
    pub diffusion_hess: Option<f64>,
    /// Toggle remainder: rate-weighted colour-average defects of the edge terms.
    pub edge_remainder: f64,
    /// Flip remainder: colour-average defect of the discordant-edge density times the
    /// second-derivative structure.
    pub diffusion_remainder: Option<f64>,
}

impl ProjectedGenerator {
    /// Main terms plus remainders; None if reciprocal groups were degenerate.
    pub fn total(&self) -> Option<f64> {
        Some(
            self.edge_drift
                + self.diffusion_grad?
                + self.diffusion_hess?
                + self.edge_remainder
                + self.diffusion_remainder?,
        )
    }

    pub fn main_terms(&self) -> Option<f64> {
        Some(self.edge_drift + self.diffusion_grad? + self.diffusion_hess?)
    }
}

/// Evaluates the generator exactly (up to O(1/n)) on h ∘ (densities of F_1..F_d) ∘
/// colour-average, using regular densities of `g` throughout.
pub fn projected_generator(
    h: &dyn Smooth,
    motifs: &[Motif],
    g: &ColouredGraph,
    params: &ModelParams,
) -> Result<ProjectedGenerator> {
    if h.dim() != motifs.len() {
        return Err(Error::InvalidInput(format!(
            "function dimension {} does not match {} motifs",
            h.dim(),
            motifs.len()
        )));
    }
    let counts = DensityCounts::new(g);
    let qbar = counts.colour_mean();
    let y_w = qbar;
    let y_b = 1.0 - qbar;
    let shape_t = |s: &Shape| -> Result<f64> {
        if s.k() <= 3 {
            counts.shape_density(s)
        } else {
            graphon::graph_shape_density(g, s)
        }
    };
    let motif_t = |m: &Motif| -> Result<f64> {
        if m.k() <= 3 {
            counts.motif_density(m)
        } else {
            graphon::graph_density(g, m)
        }
    };
    // Colour-averaged density of a motif: qbar^w (1-qbar)^b times its shape density.
    let y_of = |m: &Motif| -> Result<f64> {
        Ok(y_w.powi(m.white_count() as i32)
            * y_b.powi(m.black_count() as i32)
            * shape_t(&m.shape())?)
    };
    let y: Vec<f64> = motifs.iter().map(&y_of).collect::<Result<_>>()?;

    // Colour-averaged appear/vanish rates weight the edge terms.
    let mut edge_drift = 0.0;
    for (i, f) in motifs.iter().enumerate() {
        let mut acc = 0.0;
        for (r, s) in f.edges() {
            acc += params.gain(qbar) * (y_of(&f.without_edge(r, s))? - y[i]);
        }
        acc -= f.edge_count() as f64 * params.loss(qbar) * y[i];
        edge_drift += acc * h.grad(&y, i);
    }
    edge_drift *= params.rho;

    // Discordant-edge density of the colour-averaged graph and its defect on g itself.
    let wb_edge = Motif::new(vec![1, 0], &[(0, 1)]).expect("two-vertex motif");
    let y_e = y_w * y_b * shape_t(&wb_edge.shape())?;
    let delta_e = motif_t(&wb_edge)? - y_e;

    // Both flip groups multiply the same derivative structure: the main terms carry
    // the colour-averaged discordant density, the remainder its defect on g.
    let degenerate = y_w == 0.0 || y_b == 0.0;
    let (diffusion_grad, diffusion_hess, diffusion_remainder) = if degenerate {
        (None, None, None)
    } else {
        let lin = |w: usize, b: usize| w as f64 / y_w - b as f64 / y_b;
        let mut grad_group = 0.0;
        let mut hess_group = 0.0;
        for (i, f) in motifs.iter().enumerate() {
            let (w, b) = (f.white_count(), f.black_count());
            // Second derivative of q^w (1-q)^b carries falling factorials.
            let bracket = (w * w.saturating_sub(1)) as f64 / (y_w * y_w)
                - 2.0 * (w * b) as f64 / (y_w * y_b)
                + (b * b.saturating_sub(1)) as f64 / (y_b * y_b);
            grad_group += bracket * y[i] * h.grad(&y, i);
            for (j, f2) in motifs.iter().enumerate() {
                let cross = lin(w, b) * lin(f2.white_count(), f2.black_count());
                hess_group += cross * y[i] * y[j] * h.hess(&y, i, j);
            }
        }
        (
            Some(params.eta * y_e * grad_group),
            Some(params.eta * y_e * hess_group),
            Some(params.eta * delta_e * (grad_group + hess_group)),
        )
    };

    // Toggle remainder: per colouring of each shape, the defect of the deletion
    // bracket, weighted by the concordance split of the removed edge.
    let delta_of = |m: &Motif| -> Result<f64> {
        Ok(motif_t(m)?
            - y_w.powi(m.white_count() as i32)
                * y_b.powi(m.black_count() as i32)
                * shape_t(&m.shape())?)
    };
    let mut edge_remainder = 0.0;
    for (i, f) in motifs.iter().enumerate() {
        let prefactor =
            y_w.powi(f.white_count() as i32) * y_b.powi(f.black_count() as i32) * h.grad(&y, i);
        let mut acc = 0.0;
        for h_col in f.shape().colourings() {
            for (r, s) in h_col.edges() {
                let conc = h_col.colour(r) == h_col.colour(s);
                let d_h = delta_of(&h_col)?;
                let gain = delta_of(&h_col.without_edge(r, s))? - d_h;
                acc += params.s(conc, false) * gain - params.s(conc, true) * d_h;
            }
        }
        edge_remainder += prefactor * acc;
    }
    edge_remainder *= params.rho;

    Ok(ProjectedGenerator {
        edge_drift,
        diffusion_grad,
        diffusion_hess,
        edge_remainder,
        diffusion_remainder,
    })
}

/// The functional the projected generator acts on, as a plain graph function (for
/// oracle comparison): h of the colour-averaged densities of the given motifs.
pub fn projected_observable(
    h: &dyn Smooth,
    motifs: &[Motif],
    g: &ColouredGraph,
) -> Result<f64> {
    let counts = DensityCounts::new(g);
    let qbar = counts.colour_mean();
    let mut y = Vec::with_capacity(motifs.len());
    for m in motifs {
        let ts = if m.k() <= 3 {
            counts.shape_density(&m.shape())?
        } else {
            graphon::graph_shape_density(g, &m.shape())?
        };
        y.push(qbar.powi(m.white_count() as i32) * (1.0 - qbar).powi(m.black_count() as i32) * ts);
    }
    Ok(h.value(&y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motif::enumerate_motifs;
    use crate::rngs::stream_rng;

    fn white() -> Motif {
        Motif::vertex(1)
    }

    fn black() -> Motif {
        Motif::vertex(0)
    }

    fn wb_edge() -> Motif {
        Motif::new(vec![1, 0], &[(0, 1)]).unwrap()
    }

    fn fig1_params() -> ModelParams {
        ModelParams::new(1.0, 1.1, [1.5, 0.5, 0.7, 2.0]).unwrap()
    }

    fn random_graph(n: usize, seed: u64) -> ColouredGraph {
        let w = ColouredGraphon::constant(1, 0.5, 0.5).unwrap();
        let mut rng = stream_rng(seed, 7);
        w.sample_graph(n, &mut rng).unwrap()
    }

    #[test]
    fn leaf_sets_of_a_single_vertex_cancel() {
        for v in [white(), black()] {
            let plus = spawn_flip(&v).unwrap();
            let minus = spawn_opposite(&v).unwrap();
            assert_eq!(plus.class_count(), 1);
            assert_eq!(minus.class_count(), 1);
            // Both are the discordant edge up to isomorphism.
            assert_eq!(plus, minus);
            assert!(spawn_diff(&v).unwrap().is_empty());
            assert!(internal_flip(&v).unwrap().is_empty());
            assert!(internal_opposite(&v).unwrap().is_empty());
            assert!(merge_spawn_diff(&v).unwrap().is_empty());
        }
    }

    #[test]
    fn multiset_algebra_cancels_exactly() {
        let f = Motif::new(vec![1, 0, 1], &[(0, 1), (1, 2)]).unwrap();
        let a = spawn_flip(&f).unwrap().plus(&internal_opposite(&f).unwrap());
        let b = merge_spawn_same(&f).unwrap();
        assert_eq!(a.plus(&b).minus(&b), a);
        assert!(a.minus(&a).is_empty());
    }

    #[test]
    fn mismatched_merge_sets_are_order_symmetric() {
        // The mismatched flip+plain total does not depend on which motif comes first.
        let f = Motif::new(vec![1, 0], &[(0, 1)]).unwrap();
        let f2 = Motif::new(vec![1, 1, 0], &[(0, 1), (1, 2)]).unwrap();
        let lhs = pair_merge_flip(&f, &f2, false)
            .unwrap()
            .plus(&pair_merge_plain(&f, &f2, false).unwrap());
        let rhs = pair_merge_flip(&f2, &f, false)
            .unwrap()
            .plus(&pair_merge_plain(&f2, &f, false).unwrap());
        assert_eq!(lhs, rhs);
        // The individual sets do differ (merged colour follows the first argument).
        assert_ne!(
            pair_merge_flip(&f, &f2, false).unwrap(),
            pair_merge_flip(&f2, &f, false).unwrap()
        );
    }

    #[test]
    fn vertex_pair_diffusion_sets() {
        // (white, white) reduces to twice the discordant edge; (white, black) to the
        // negative of that.
        let t_ww = diffusion_set(&white(), &white()).unwrap();
        assert_eq!(t_ww.class_count(), 1);
        assert_eq!(t_ww.multiplicity(&wb_edge()), 2);
        let t_wb = diffusion_set(&white(), &black()).unwrap();
        assert_eq!(t_wb.multiplicity(&wb_edge()), -2);
        let g = random_graph(9, 3);
        let src = DensitySource::Graph(&g, Flavour::Regular);
        let t_e = src.density(&wb_edge()).unwrap();
        assert!((vertex_diffusion(&white(), &white(), &src).unwrap() - 2.0 * t_e).abs() < 1e-14);
        assert!((vertex_diffusion(&white(), &black(), &src).unwrap() + 2.0 * t_e).abs() < 1e-14);
    }

    #[test]
    fn regular_drift_of_pair_motifs_is_exact() {
        // Closed forms: the edgeless ww pair has density qbar^2, whose exact drift is
        // twice the discordant-edge density; the ww edge drifts by the signed star and
        // path terms alone (the merge correction cancels the idempotent internal adds).
        let g = random_graph(9, 21);
        let src = DensitySource::Graph(&g, Flavour::Regular);
        let ww_pair = Motif::new(vec![1, 1], &[]).unwrap();
        let t_e = src.density(&wb_edge()).unwrap();
        let got = vertex_drift(&ww_pair, &src, g.n()).unwrap();
        assert!((got - 2.0 * t_e).abs() < 1e-13, "{got} vs {}", 2.0 * t_e);

        let ww_edge = Motif::new(vec![1, 1], &[(0, 1)]).unwrap();
        let star = Motif::new(vec![1, 0, 1], &[(0, 1), (1, 2)]).unwrap();
        let path = Motif::new(vec![1, 1, 0], &[(0, 1), (1, 2)]).unwrap();
        let want = 2.0 * g.n() as f64
            * (src.density(&star).unwrap() - src.density(&path).unwrap());
        let got = vertex_drift(&ww_edge, &src, g.n()).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        // And both match the exhaustive generator with eta = 1, no toggles.
        let params = ModelParams::new(1.0, 1.0, [0.0; 4]).unwrap();
        for f in [ww_pair, ww_edge] {
            let oracle = exact_generator_oracle(&g, &params, |gg| {
                DensitySource::Graph(gg, Flavour::Regular).density(&f)
            })
            .unwrap();
            let formula = vertex_drift(&f, &src, g.n()).unwrap();
            assert!((oracle - formula).abs() < 1e-12, "{f:?}: {oracle} vs {formula}");
        }
    }

    #[test]
    fn single_vertex_drift_vanishes_everywhere() {
        let g = random_graph(8, 5);
        let params = fig1_params();
        for fl in [Flavour::Injective, Flavour::Regular] {
            let src = DensitySource::Graph(&g, fl);
            assert_eq!(vertex_drift(&white(), &src, g.n()).unwrap(), 0.0);
            assert_eq!(edge_drift(&white(), &src, &params).unwrap(), 0.0);
        }
    }

    #[test]
    fn oracle_basics() {
        let params = fig1_params();
        let g = random_graph(7, 1);
        // Constant functional.
        let z = exact_generator_oracle(&g, &params, |_| Ok(3.25)).unwrap();
        assert_eq!(z, 0.0);
        // Two white vertices, edge present: only removal has positive rate, and the
        // uncoloured edge density drops from 1 to 0.
        let k2 = ColouredGraph::new(vec![1, 1], &[(0, 1)]).unwrap();
        let got = exact_generator_oracle(&k2, &params, |gg| Ok(gg.summary_stats().p)).unwrap();
        assert!((got - -params.rho * params.s_c1).abs() < 1e-15);
    }

    #[test]
    fn injective_drift_formula_is_exact() {
        let params = fig1_params();
        for seed in 0..3u64 {
            let g = random_graph(6, 100 + seed);
            for f in enumerate_motifs(3).unwrap() {
                let check = check_drift(&g, &f, &params, Flavour::Injective).unwrap();
                assert!(
                    check.residual() < 1e-10,
                    "seed {seed} motif {f:?}: {} vs {}",
                    check.oracle,
                    check.formula
                );
            }
        }
    }

    #[test]
    fn regular_drift_formula_is_first_order_accurate() {
        let params = fig1_params();
        let mut worst = [0.0f64; 2];
        for (i, n) in [8usize, 32].into_iter().enumerate() {
            for seed in 0..3u64 {
                let g = random_graph(n, 40 + seed);
                for f in enumerate_motifs(2).unwrap() {
                    let check = check_drift(&g, &f, &params, Flavour::Regular).unwrap();
                    worst[i] = worst[i].max(check.residual() * n as f64);
                }
            }
        }
        // n * residual stays bounded as n quadruples; an O(1) defect in the formula
        // would scale it by 4.
        assert!(worst[1] <= worst[0] * 2.0 + 0.1, "{worst:?}");
        assert!(worst[1] < 3.0, "{worst:?}");
    }

    #[test]
    fn product_rule_with_diffusion_is_first_order_accurate() {
        let params = fig1_params();
        let f = white();
        let f2 = wb_edge();
        let mut scaled = Vec::new();
        for n in [8usize, 16, 32] {
            let g = random_graph(n, 77);
            let check = check_product(&g, &f, &f2, &params, Flavour::Injective).unwrap();
            scaled.push(check.residual() * n as f64);
        }
        assert!(scaled[2] <= scaled[0] * 2.0 + 1e-9, "{scaled:?}");
        // And the pure second moment of the colour density.
        let g = random_graph(16, 78);
        let check = check_product(&g, &white(), &white(), &params, Flavour::Injective).unwrap();
        assert!(check.residual() < 10.0 / 16.0, "{}", check.residual());
    }

    #[test]
    fn colour_sums_vanish_exactly() {
        let g = random_graph(6, 9);
        let partner = wb_edge();
        for k in 1..=3usize {
            for f in enumerate_motifs(k).unwrap() {
                let report = verify_colour_sums(&f.shape(), &partner, &g).unwrap();
                assert!(report.all_zero(), "shape of {f:?}: {report:?}");
                assert!(report.all_identities(), "shape of {f:?}: {report:?}");
            }
        }
    }

    #[test]
    fn projected_generator_monochromatic_graph_degenerates() {
        let g = ColouredGraph::new(vec![1, 1, 1, 1], &[(0, 1), (2, 3)]).unwrap();
        let params = fig1_params();
        let motifs = vec![wb_edge()];
        let h = Polynomial2::linear(vec![1.0]);
        let out = projected_generator(&h, &motifs, &g, &params).unwrap();
        assert!(out.diffusion_grad.is_none());
        assert!(out.total().is_none());
        // All-white colourings have zero colour-average defect.
        let counts = DensityCounts::new(&g);
        let all_white = Motif::new(vec![1, 1], &[(0, 1)]).unwrap();
        let t = counts.motif_density(&all_white).unwrap();
        let ts = counts.shape_density(&all_white.shape()).unwrap();
        assert_eq!(t, ts);
    }

    #[test]
    fn projected_generator_linear_no_switching_kills_edge_group() {
        let params = ModelParams::new(1.3, 0.9, [0.0, 0.0, 0.0, 0.0]).unwrap();
        let g = random_graph(10, 12);
        let motifs = vec![wb_edge()];
        let h = Polynomial2::linear(vec![2.0]);
        let out = projected_generator(&h, &motifs, &g, &params).unwrap();
        assert_eq!(out.edge_drift, 0.0);
        assert_eq!(out.edge_remainder, 0.0);
    }

    #[test]
    fn projected_generator_matches_oracle_increasingly_well() {
        let params = fig1_params();
        let motifs: Vec<Motif> = vec![
            white(),
            wb_edge(),
            Motif::new(vec![1, 1, 0], &[(0, 1), (1, 2)]).unwrap(),
        ];
        let h = Polynomial2 {
            linear: vec![0.7, -1.1, 0.4],
            quadratic: vec![(0, 1, 0.6), (2, 2, -0.3)],
        };
        let mut residuals = Vec::new();
        for n in [16usize, 32, 64] {
            let g = random_graph(n, 2000 + n as u64);
            let out = projected_generator(&h, &motifs, &g, &params).unwrap();
            let oracle =
                exact_generator_oracle(&g, &params, |gg| projected_observable(&h, &motifs, gg))
                    .unwrap();
            residuals.push((out.total().unwrap() - oracle).abs());
        }
        assert!(
            residuals[2] < residuals[0],
            "residuals did not shrink: {residuals:?}"
        );
        assert!(residuals[2] < 0.5, "{residuals:?}");
    }
}
