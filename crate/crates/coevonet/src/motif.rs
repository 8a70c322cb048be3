//! Coloured motifs: small vertex-coloured graphs used as density observables, plus the
//! edit operations the generator calculus is built from.
//!
//! A motif is a labelled object; two motifs are equivalent when some relabelling matches
//! colours and edges simultaneously.  Equivalence is decided through a canonical key: the
//! lexicographically smallest byte encoding of (colours, adjacency bits) over all k!
//! permutations.  Densities only depend on the class, so canonical keys double as cache
//! and catalog keys.
//!
//! Edit operations return fresh motifs.  `merge` keeps the first-named vertex's position
//! and colour and shifts later indices down by one; `cross_merge` appends the second
//! motif's vertices (minus the merged one) after the first motif's.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Largest motif size the enumeration will attempt (2^k colourings x 2^(k(k-1)/2) edge
/// sets get canonicalised, so this is deliberately small).
pub const MAX_ENUMERATE_K: usize = 5;

/// Largest motif size canonicalisation accepts (k! permutations).
pub const MAX_CANON_K: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Motif {
    colours: Vec<u8>,
    /// Bit j of rows[i] is the edge {i, j}; diagonal clear, symmetric.
    rows: Vec<u64>,
}

/// Canonical key bytes: `[k, colours..., packed upper-triangle bits...]` minimised over
/// vertex permutations.
pub type CanonKey = Vec<u8>;

/// One edit operation on a motif.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    /// Set the colour of a vertex.
    SetColour(usize, u8),
    /// Append an isolated black vertex (colour it afterwards with `SetColour`).
    AddVertex,
    /// Connect two vertices; a no-op when the edge is already present.
    AddEdge(usize, usize),
    /// Disconnect two vertices; a no-op when the edge is absent.
    RemoveEdge(usize, usize),
    /// Identify `remove` with `keep`: the merged vertex keeps `keep`'s index and colour
    /// and inherits the union of both neighbourhoods; indices above `remove` shift down.
    Merge { keep: usize, remove: usize },
}

impl Motif {
    pub fn new(colours: Vec<u8>, edges: &[(usize, usize)]) -> Result<Self> {
        let k = colours.len();
        if k == 0 || k > 64 {
            return Err(Error::InvalidInput(format!("motif size {k} out of range")));
        }
        if let Some(c) = colours.iter().find(|&&c| c > 1) {
            return Err(Error::InvalidInput(format!("colour {c} is not 0 or 1")));
        }
        let mut m = Motif {
            colours,
            rows: vec![0; k],
        };
        for &(a, b) in edges {
            m.check_pair(a, b)?;
            m.set_edge(a, b, true);
        }
        Ok(m)
    }

    /// Single vertex of the given colour.
    pub fn vertex(colour: u8) -> Self {
        Motif::new(vec![colour], &[]).expect("single vertex is valid")
    }

    pub fn k(&self) -> usize {
        self.colours.len()
    }

    pub fn colour(&self, v: usize) -> u8 {
        self.colours[v]
    }

    pub fn colours(&self) -> &[u8] {
        &self.colours
    }

    /// Number of white (colour 1) vertices.
    pub fn white_count(&self) -> usize {
        self.colours.iter().filter(|&&c| c == 1).count()
    }

    /// Number of black (colour 0) vertices.
    pub fn black_count(&self) -> usize {
        self.k() - self.white_count()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && (self.rows[a] >> b) & 1 == 1
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.k();
        let mut out = Vec::new();
        for a in 0..k {
            for b in (a + 1)..k {
                if self.has_edge(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn degree(&self, v: usize) -> usize {
        self.rows[v].count_ones() as usize
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.k() {
            return Err(Error::InvalidInput(format!(
                "motif vertex {v} out of range for k = {}",
                self.k()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        if a == b {
            return Err(Error::InvalidInput(format!("motif pair ({a}, {a}) is a loop")));
        }
        Ok(())
    }

    fn set_edge(&mut self, a: usize, b: usize, on: bool) {
        if on {
            self.rows[a] |= 1 << b;
            self.rows[b] |= 1 << a;
        } else {
            self.rows[a] &= !(1 << b);
            self.rows[b] &= !(1 << a);
        }
    }

    /// Applies one edit operation, returning the edited motif.
    pub fn apply(&self, op: EditOp) -> Result<Motif> {
        let mut m = self.clone();
        match op {
            EditOp::SetColour(v, c) => {
                m.check_vertex(v)?;
                if c > 1 {
                    return Err(Error::InvalidInput(format!("colour {c} is not 0 or 1")));
                }
                m.colours[v] = c;
            }
            EditOp::AddVertex => {
                if m.k() == 64 {
                    return Err(Error::SizeLimit("motif size limit is 64".into()));
                }
                m.colours.push(0);
                m.rows.push(0);
            }
            EditOp::AddEdge(a, b) => {
                m.check_pair(a, b)?;
                m.set_edge(a, b, true);
            }
            EditOp::RemoveEdge(a, b) => {
                m.check_pair(a, b)?;
                m.set_edge(a, b, false);
            }
            EditOp::Merge { keep, remove } => {
                m.check_pair(keep, remove)?;
                return Ok(self.merge(keep, remove).0);
            }
        }
        Ok(m)
    }

    /// Appends a vertex of the given colour, returning the motif and the new index.
    pub fn with_vertex(&self, colour: u8) -> (Motif, usize) {
        let mut m = self.clone();
        m.colours.push(colour);
        m.rows.push(0);
        (m, self.k())
    }

    /// Flips the colour of one vertex.
    pub fn with_flipped(&self, v: usize) -> Motif {
        let mut m = self.clone();
        m.colours[v] = 1 - m.colours[v];
        m
    }

    pub fn with_edge(&self, a: usize, b: usize) -> Motif {
        let mut m = self.clone();
        m.set_edge(a, b, true);
        m
    }

    pub fn without_edge(&self, a: usize, b: usize) -> Motif {
        let mut m = self.clone();
        m.set_edge(a, b, false);
        m
    }

    /// Identifies `remove` with `keep` (see module docs).  Returns the merged motif and
    /// the new index of the kept vertex.
    pub fn merge(&self, keep: usize, remove: usize) -> (Motif, usize) {
        let k = self.k();
        debug_assert!(keep != remove && keep < k && remove < k);
        let map = |v: usize| if v > remove { v - 1 } else { v };
        let mut colours = Vec::with_capacity(k - 1);
        for v in 0..k {
            if v != remove {
                colours.push(self.colours[v]);
            }
        }
        let mut m = Motif {
            colours,
            rows: vec![0; k - 1],
        };
        for (a, b) in self.edges() {
            let (mut a, mut b) = (a, b);
            if a == remove {
                a = keep;
            }
            if b == remove {
                b = keep;
            }
            if a != b {
                m.set_edge(map(a), map(b), true);
            }
        }
        (m, map(keep))
    }

    /// Merges vertex `a` of `self` with vertex `b` of `other`: the merged vertex keeps
    /// `a`'s index and colour; the remaining vertices of `other` are appended in order.
    /// Returns the combined motif, the merged index, and the index offset at which
    /// `other`'s surviving vertices were appended (vertex j != b of `other` lands at
    /// `offset + j - (j > b)`).
    pub fn cross_merge(&self, a: usize, other: &Motif, b: usize) -> (Motif, usize, usize) {
        let k = self.k();
        debug_assert!(a < k && b < other.k());
        let mut colours = self.colours.clone();
        for (v, &c) in other.colours.iter().enumerate() {
            if v != b {
                colours.push(c);
            }
        }
        let mut m = Motif {
            rows: vec![0; colours.len()],
            colours,
        };
        for (x, y) in self.edges() {
            m.set_edge(x, y, true);
        }
        let map = |v: usize| {
            if v == b {
                a
            } else {
                k + v - usize::from(v > b)
            }
        };
        for (x, y) in other.edges() {
            let (x, y) = (map(x), map(y));
            if x != y {
                m.set_edge(x, y, true);
            }
        }
        (m, a, k)
    }

    /// Canonical key of the colour-isomorphism class (see module docs).
    pub fn canonical_key(&self) -> CanonKey {
        let k = self.k();
        assert!(k <= MAX_CANON_K, "canonicalisation supports k <= {MAX_CANON_K}");
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = Vec::new();
        let mut buf = Vec::new();
        self.encode(&perm, &mut best);
        // Heap's algorithm over all k! permutations.
        let mut c = vec![0usize; k];
        let mut i = 0;
        while i < k {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                self.encode(&perm, &mut buf);
                if buf < best {
                    std::mem::swap(&mut best, &mut buf);
                }
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    fn encode(&self, perm: &[usize], out: &mut Vec<u8>) {
        let k = self.k();
        out.clear();
        out.push(k as u8);
        for &v in perm {
            out.push(self.colours[v]);
        }
        let mut acc = 0u8;
        let mut nbits = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                acc = (acc << 1) | u8::from(self.has_edge(perm[i], perm[j]));
                nbits += 1;
                if nbits == 8 {
                    out.push(acc);
                    acc = 0;
                    nbits = 0;
                }
            }
        }
        if nbits > 0 {
            out.push(acc << (8 - nbits));
        }
    }

    /// True when the two motifs are colour-isomorphic.
    pub fn isomorphic(&self, other: &Motif) -> bool {
        self.k() == other.k() && self.canonical_key() == other.canonical_key()
    }

    /// The uncoloured shadow (colours forgotten).
    pub fn shape(&self) -> Shape {
        Shape {
            k: self.k(),
            rows: self.rows.clone(),
        }
    }

    /// Motif with all colours swapped (white <-> black).
    pub fn colour_swapped(&self) -> Motif {
        Motif {
            colours: self.colours.iter().map(|&c| 1 - c).collect(),
            rows: self.rows.clone(),
        }
    }
}

/// An uncoloured motif (graph shape).  Distinct from an all-black motif: densities of a
/// shape ignore colours entirely.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    k: usize,
    rows: Vec<u64>,
}

impl Shape {
    pub fn new(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let m = Motif::new(vec![0; k], edges)?;
        Ok(m.shape())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && (self.rows[a] >> b) & 1 == 1
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.as_motif(0).edges()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum::<usize>() / 2
    }

    /// The shape with every vertex given a fixed colour.
    pub fn as_motif(&self, colour: u8) -> Motif {
        Motif {
            colours: vec![colour; self.k],
            rows: self.rows.clone(),
        }
    }

    /// All 2^k labelled colourings of the shape, in mask order (bit v of the mask is the
    /// colour of vertex v).  Multiplicity matters for colour sums, so no deduplication.
    pub fn colourings(&self) -> Vec<Motif> {
        (0u64..(1 << self.k))
            .map(|mask| Motif {
                colours: (0..self.k).map(|v| ((mask >> v) & 1) as u8).collect(),
                rows: self.rows.clone(),
            })
            .collect()
    }

    pub fn canonical_key(&self) -> CanonKey {
        self.as_motif(0).canonical_key()
    }
}

/// One representative per colour-isomorphism class on exactly `k` vertices, sorted by
/// canonical key.
pub fn enumerate_motifs(k: usize) -> Result<Vec<Motif>> {
    if k == 0 || k > MAX_ENUMERATE_K {
        return Err(Error::SizeLimit(format!(
            "enumeration supports 1 <= k <= {MAX_ENUMERATE_K}, got {k}"
        )));
    }
    let pairs = k * (k - 1) / 2;
    let mut classes: BTreeMap<CanonKey, Motif> = BTreeMap::new();
    for colour_mask in 0u64..(1 << k) {
        for edge_mask in 0u64..(1 << pairs) {
            let colours: Vec<u8> = (0..k).map(|v| ((colour_mask >> v) & 1) as u8).collect();
            let mut m = Motif::new(colours, &[])?;
            let mut idx = 0;
            for b in 1..k {
                for a in 0..b {
                    if (edge_mask >> idx) & 1 == 1 {
                        m.set_edge(a, b, true);
                    }
                    idx += 1;
                }
            }
            classes.entry(m.canonical_key()).or_insert(m);
        }
    }
    Ok(classes.into_values().collect())
}

/// The ordered motif catalog: all classes of size 1..=k_max in (size, canonical key)
/// order.  Index i (0-based) carries the metric weight 2^-(i+1).
#[derive(Debug, Clone)]
pub struct MotifCatalog {
    motifs: Vec<Motif>,
    index: BTreeMap<CanonKey, usize>,
    k_max: usize,
}

impl MotifCatalog {
    pub fn up_to(k_max: usize) -> Result<Self> {
        if k_max == 0 || k_max > MAX_ENUMERATE_K {
            return Err(Error::SizeLimit(format!(
                "catalog supports 1 <= k_max <= {MAX_ENUMERATE_K}, got {k_max}"
            )));
        }
        let mut motifs = Vec::new();
        for k in 1..=k_max {
            motifs.extend(enumerate_motifs(k)?);
        }
        let index = motifs
            .iter()
            .enumerate()
            .map(|(i, m)| (m.canonical_key(), i))
            .collect();
        Ok(MotifCatalog {
            motifs,
            index,
            k_max,
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    pub fn motifs(&self) -> &[Motif] {
        &self.motifs
    }

    pub fn get(&self, i: usize) -> &Motif {
        &self.motifs[i]
    }

    /// Catalog index of the class of `m`, when within `k_max`.
    pub fn index_of(&self, m: &Motif) -> Option<usize> {
        self.index.get(&m.canonical_key()).copied()
    }

    /// Metric weight of catalog position i.
    pub fn weight(i: usize) -> f64 {
        0.5f64.powi(i as i32 + 1)
    }
}
