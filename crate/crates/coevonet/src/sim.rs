//! Event-driven simulation of the chain, exact in distribution.
//!
//! The sampler is a direct Gillespie scheme over the two event families: colour flips,
//! drawn proportionally to discordant degree through a Fenwick tree, and pair toggles,
//! drawn uniformly inside one of the four (concordance, presence) categories.  A flip
//! re-categorises all n-1 pairs at the flipped vertex, so flips cost O(n) and toggles
//! O(log n); bookkeeping is exact, no rate is ever approximated or rounded.
//!
//! Also here: the distance-kernel initial condition, the exhaustive law of tiny chains
//! (the distributional test oracle), the random-walk mixing table, and the connectivity
//! regime monitor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::fenwick::Fenwick;
use crate::graph::{ColouredGraph, SummaryStats, Transition};
use crate::graphon::graph_catalog_densities;
use crate::motif::MotifCatalog;
use crate::params::ModelParams;
use crate::rngs::stream_rng;
use crate::{Error, Result};

/// RNG stream reserved for initial-condition sampling, so that ensemble run streams
/// (0, 1, 2, ...) never collide with it under a shared seed.
pub const INIT_STREAM: u64 = u64::MAX;

/// Largest n for the exact transition-matrix mixing table.
pub const MAX_MIXING_N: usize = 512;

/// Largest n for the exhaustive state-space law (2^(n + n(n-1)/2) states).
pub const MAX_EXACT_LAW_N: usize = 5;

/// Triangular index of the unordered pair u < v: (0,1) -> 0, (0,2) -> 1, (1,2) -> 2, ...
/// Matches the bit order of `ColouredGraph::from_bits`.
fn pair_index(u: usize, v: usize) -> usize {
    debug_assert!(u < v);
    v * (v - 1) / 2 + u
}

fn pair_from_index(id: usize) -> (usize, usize) {
    let mut v = ((1.0 + (1.0 + 8.0 * id as f64).sqrt()) / 2.0) as usize;
    while v * (v - 1) / 2 > id {
        v -= 1;
    }
    while v * (v + 1) / 2 <= id {
        v += 1;
    }
    (id - v * (v - 1) / 2, v)
}

/// Category id: 0 concordant-absent, 1 concordant-present, 2 discordant-absent,
/// 3 discordant-present.  Bit 0 is presence, bit 1 discordance, so a colour flip at an
/// endpoint is `^ 2` and a toggle is `^ 1`.
fn cat_index(concordant: bool, present: bool) -> u8 {
    ((!concordant) as u8) * 2 + present as u8
}

fn cat_rate(cat: u8, params: &ModelParams) -> f64 {
    params.s(cat < 2, cat & 1 == 1)
}

/// Chain state plus the sampling caches: per-category pair index sets with positions,
/// and a Fenwick tree over discordant degrees.
#[derive(Debug, Clone)]
pub struct SimState {
    graph: ColouredGraph,
    params: ModelParams,
    clock: f64,
    event_count: u64,
    cats: [Vec<u32>; 4],
    /// (category, slot within category) per triangular pair id.
    pos: Vec<(u8, u32)>,
    flip_tree: Fenwick,
}

impl SimState {
    pub fn new(graph: ColouredGraph, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let n = graph.n();
        let mut cats: [Vec<u32>; 4] = Default::default();
        let mut pos = vec![(0u8, 0u32); n * (n - 1) / 2];
        for v in 1..n {
            for u in 0..v {
                let (conc, present) = graph.pair_category(u, v)?;
                let cat = cat_index(conc, present);
                let id = pair_index(u, v);
                pos[id] = (cat, cats[cat as usize].len() as u32);
                cats[cat as usize].push(id as u32);
            }
        }
        let weights: Vec<u64> = (0..n).map(|u| graph.disc_degree(u) as u64).collect();
        Ok(SimState {
            graph,
            params,
            clock: 0.0,
            event_count: 0,
            cats,
            pos,
            flip_tree: Fenwick::from_weights(&weights),
        })
    }

    pub fn graph(&self) -> &ColouredGraph {
        &self.graph
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// eta times the sum of discordant degrees (= 2 eta D).
    pub fn flip_rate(&self) -> f64 {
        self.params.eta * self.flip_tree.total() as f64
    }

    /// rho times the rate-weighted category counts.
    pub fn edge_rate(&self) -> f64 {
        let mut s = 0.0;
        for cat in 0..4u8 {
            s += cat_rate(cat, &self.params) * self.cats[cat as usize].len() as f64;
        }
        self.params.rho * s
    }

    pub fn total_rate(&self) -> f64 {
        self.flip_rate() + self.edge_rate()
    }

    /// Full cache audit against the graph: category sets, positions, Fenwick weights,
    /// and the closed-form aggregates.  O(n^2); test use.
    pub fn verify_caches(&self) -> bool {
        let n = self.graph.n();
        let counts = self.graph.category_counts();
        for cat in 0..4usize {
            if self.cats[cat].len() as u64 != counts[cat] {
                return false;
            }
        }
        for v in 1..n {
            for u in 0..v {
                let id = pair_index(u, v);
                let (conc, present) = self.graph.pair_category(u, v).unwrap();
                let (cat, slot) = self.pos[id];
                if cat != cat_index(conc, present) {
                    return false;
                }
                if self.cats[cat as usize][slot as usize] != id as u32 {
                    return false;
                }
            }
        }
        let disc_sum: u64 = (0..n).map(|u| self.graph.disc_degree(u) as u64).sum();
        self.flip_tree.total() == disc_sum
            && disc_sum == 2 * self.graph.summary_stats().discordant_count
            && (self.total_rate() - self.graph.total_rate(&self.params)).abs()
                <= 1e-9 * (1.0 + self.total_rate())
    }

    fn move_pair(&mut self, id: usize, new_cat: u8) {
        let (old_cat, slot) = self.pos[id];
        debug_assert_ne!(old_cat, new_cat);
        let old = &mut self.cats[old_cat as usize];
        let last = *old.last().unwrap();
        old.swap_remove(slot as usize);
        if last as usize != id {
            self.pos[last as usize].1 = slot;
        }
        self.pos[id] = (new_cat, self.cats[new_cat as usize].len() as u32);
        self.cats[new_cat as usize].push(id as u32);
    }

    fn apply_flip(&mut self, u: usize) -> Result<()> {
        let n = self.graph.n();
        let nbrs = self.graph.neighbours(u);
        let mut old_disc: Vec<i64> = Vec::with_capacity(nbrs.len() + 1);
        old_disc.push(self.graph.disc_degree(u) as i64);
        for &v in &nbrs {
            old_disc.push(self.graph.disc_degree(v) as i64);
        }
        self.graph.apply_transition(Transition::Flip(u))?;
        self.flip_tree
            .add(u, self.graph.disc_degree(u) as i64 - old_disc[0]);
        for (i, &v) in nbrs.iter().enumerate() {
            self.flip_tree
                .add(v, self.graph.disc_degree(v) as i64 - old_disc[i + 1]);
        }
        // Every pair at u swaps concordance, presence untouched.
        for x in 0..n {
            if x != u {
                let id = pair_index(u.min(x), u.max(x));
                let new_cat = self.pos[id].0 ^ 2;
                self.move_pair(id, new_cat);
            }
        }
        Ok(())
    }

    fn apply_toggle(&mut self, u: usize, v: usize) -> Result<()> {
        let old_u = self.graph.disc_degree(u) as i64;
        let old_v = self.graph.disc_degree(v) as i64;
        self.graph.apply_transition(Transition::Toggle(u, v))?;
        self.flip_tree.add(u, self.graph.disc_degree(u) as i64 - old_u);
        self.flip_tree.add(v, self.graph.disc_degree(v) as i64 - old_v);
        let id = pair_index(u, v);
        let new_cat = self.pos[id].0 ^ 1;
        self.move_pair(id, new_cat);
        Ok(())
    }

    /// Time of the next event, drawn exponentially at the current total rate; None when
    /// the state is absorbing.
    fn draw_next_time(&self, rng: &mut ChaCha8Rng) -> Option<f64> {
        let rate = self.total_rate();
        if rate <= 0.0 {
            return None;
        }
        let e: f64 = rng.sample(Exp1);
        Some(self.clock + e / rate)
    }

    /// Selects and applies one transition; the caller supplies the event time drawn for
    /// the state the selection is made in.
    fn apply_event_at(&mut self, t: f64, rng: &mut ChaCha8Rng) -> Result<Transition> {
        let flip = self.flip_rate();
        let total = flip + self.edge_rate();
        let x = rng.gen::<f64>() * total;
        self.clock = t;
        self.event_count += 1;
        if x < flip {
            let target = rng.gen_range(0..self.flip_tree.total());
            let u = self.flip_tree.select(target);
            self.apply_flip(u)?;
            return Ok(Transition::Flip(u));
        }
        let mut rem = x - flip;
        let mut cat = 3u8;
        for c in 0..4u8 {
            let mass = self.params.rho * cat_rate(c, &self.params) * self.cats[c as usize].len() as f64;
            if rem < mass {
                cat = c;
                break;
            }
            rem -= mass;
        }
        // Float round-off can push x past the last populated category; fall back to the
        // heaviest populated one rather than fail.
        if self.cats[cat as usize].is_empty() || cat_rate(cat, &self.params) == 0.0 {
            cat = (0..4u8)
                .filter(|&c| !self.cats[c as usize].is_empty() && cat_rate(c, &self.params) > 0.0)
                .max_by(|&a, &b| {
                    let ma = cat_rate(a, &self.params) * self.cats[a as usize].len() as f64;
                    let mb = cat_rate(b, &self.params) * self.cats[b as usize].len() as f64;
                    ma.total_cmp(&mb)
                })
                .expect("positive edge rate implies a populated category");
        }
        let slot = rng.gen_range(0..self.cats[cat as usize].len());
        let id = self.cats[cat as usize][slot] as usize;
        let (u, v) = pair_from_index(id);
        self.apply_toggle(u, v)?;
        Ok(Transition::Toggle(u, v))
    }

    /// Runs one event: draws the waiting time and applies a transition.  Returns None
    /// without advancing the clock when the state is absorbing.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<Option<(f64, Transition)>> {
        match self.draw_next_time(rng) {
            None => Ok(None),
            Some(t) => {
                let tr = self.apply_event_at(t, rng)?;
                Ok(Some((t, tr)))
            }
        }
    }
}

/// What to record at each checkpoint beyond the default scalar stats.
#[derive(Debug, Clone, Default)]
pub struct ObserverConfig {
    /// Record catalog motif densities (subgraph flavour, catalog order).
    pub motifs: Option<MotifCatalog>,
    /// Record the connectivity statistic nu (O(n^2 * n/64) per checkpoint).
    pub record_nu: bool,
    /// Keep full graph clones at every checkpoint.
    pub snapshots: bool,
}

/// One checkpoint record.  The state is the one at the last event time <= t (cadlag
/// path evaluated at t).
#[derive(Debug, Clone)]
pub struct TrajPoint {
    pub t: f64,
    pub stats: SummaryStats,
    pub motif_densities: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub event_count: u64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub params: ModelParams,
    pub seed: u64,
    pub stream: u64,
    pub points: Vec<TrajPoint>,
    pub snapshots: Vec<(f64, ColouredGraph)>,
}

impl Trajectory {
    pub fn series<F: Fn(&TrajPoint) -> f64>(&self, f: F) -> Vec<f64> {
        self.points.iter().map(f).collect()
    }
}

fn validate_checkpoints(checkpoints: &[f64]) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidInput("need at least one checkpoint".into()));
    }
    if checkpoints[0] != 0.0 {
        return Err(Error::InvalidInput(format!(
            "first checkpoint must be 0, got {}",
            checkpoints[0]
        )));
    }
    for w in checkpoints.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::InvalidInput(format!(
                "checkpoints must be finite and strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Simulates one trajectory from `init`, recording at the given checkpoint times.
/// The event sequence depends only on (seed, stream) and the initial state, not on the
/// checkpoint grid.
pub fn simulate(
    init: &ColouredGraph,
    params: &ModelParams,
    checkpoints: &[f64],
    observers: &ObserverConfig,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    validate_checkpoints(checkpoints)?;
    let mut state = SimState::new(init.clone(), *params)?;
    let mut rng = stream_rng(seed, stream);
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut snapshots = Vec::new();
    // Pending next-event time, carried across checkpoints so observation never
    // perturbs the event sequence.
    let mut pending: Option<f64> = None;
    let mut frozen = false;
    for &ckpt in checkpoints {
        while !frozen {
            let t_next = match pending {
                Some(t) => t,
                None => match state.draw_next_time(&mut rng) {
                    Some(t) => t,
                    None => {
                        frozen = true;
                        break;
                    }
                },
            };
            if t_next > ckpt {
                pending = Some(t_next);
                break;
            }
            pending = None;
            state.apply_event_at(t_next, &mut rng)?;
        }
        let motif_densities = match &observers.motifs {
            Some(cat) => Some(graph_catalog_densities(state.graph(), cat)?),
            None => None,
        };
        points.push(TrajPoint {
            t: ckpt,
            stats: state.graph().summary_stats(),
            motif_densities,
            nu: observers.record_nu.then(|| state.graph().connectivity_nu()),
            event_count: state.event_count(),
        });
        if observers.snapshots {
            snapshots.push((ckpt, state.graph().clone()));
        }
    }
    Ok(Trajectory {
        n: init.n(),
        params: *params,
        seed,
        stream,
        points,
        snapshots,
    })
}

/// Independent runs on streams 0..runs, in deterministic run order.
pub fn simulate_ensemble(
    init: &ColouredGraph,
    params: &ModelParams,
    checkpoints: &[f64],
    observers: &ObserverConfig,
    seed: u64,
    runs: usize,
) -> Result<Vec<Trajectory>> {
    (0..runs)
        .into_par_iter()
        .map(|run| simulate(init, params, checkpoints, observers, seed, run as u64))
        .collect()
}

/// Initial condition with geometry: vertices at positions i/n, the first ceil(n/2)
/// coloured black, and each pair {u, v} connected independently with probability
/// 0.1 (1 - |u-v|/n) when concordant and 0.9 (1 - |u-v|/n) when discordant.
pub fn init_distance_kernel(n: usize, seed: u64) -> Result<ColouredGraph> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
    }
    let black = n.div_ceil(2);
    let colours: Vec<u8> = (0..n).map(|v| (v >= black) as u8).collect();
    let mut rng = stream_rng(seed, INIT_STREAM);
    let mut edges = Vec::new();
    for v in 1..n {
        for u in 0..v {
            let base = 1.0 - (v - u) as f64 / n as f64;
            let p = if colours[u] == colours[v] { 0.1 } else { 0.9 } * base;
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    ColouredGraph::new(colours, &edges)
}

/// One row of the mixing table: worst-case total variation of the rate-eta random walk
/// against uniform, next to the coupling bound exp(-eta nu^2 n t).
#[derive(Debug, Clone, Copy)]
pub struct MixingRow {
    pub t: f64,
    pub max_tv: f64,
    pub bound: f64,
}

impl MixingRow {
    pub fn holds(&self) -> bool {
        self.max_tv <= self.bound + 1e-9
    }
}

/// Exact law of the walk that jumps at rate eta along every adjacent edge, via
/// uniformised matrix exponential; one row per requested time.
pub fn mixing_check(g: &ColouredGraph, eta: f64, ts: &[f64]) -> Result<Vec<MixingRow>> {
    let n = g.n();
    if n > MAX_MIXING_N {
        return Err(Error::SizeLimit(format!(
            "exact mixing table needs n <= {MAX_MIXING_N}, got {n}; sample the walk instead"
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let nu = g.connectivity_nu();
    let max_deg = (0..n).map(|u| g.degree(u)).max().unwrap_or(0) as f64;
    let lambda = eta * max_deg;
    // Row-stochastic uniformised step: P = I + Q / lambda.
    let mut p = vec![0.0f64; n * n];
    if lambda > 0.0 {
        for u in 0..n {
            for v in g.neighbours(u) {
                p[u * n + v] = eta / lambda;
            }
            p[u * n + u] = 1.0 - eta * g.degree(u) as f64 / lambda;
        }
    }
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("times must be >= 0, got {t}")));
        }
        let lt = lambda * t;
        if lt > 700.0 {
            return Err(Error::SizeLimit(format!(
                "uniformisation with lambda t = {lt:.1} underflows; reduce t or eta"
            )));
        }
        let max_tv = if lambda == 0.0 || t == 0.0 {
            1.0 - 1.0 / n as f64
        } else {
            // law = sum_k Pois(lt; k) P^k, accumulated until the Poisson tail is dust.
            let mut law = vec![0.0f64; n * n];
            let mut powk: Vec<f64> = (0..n * n)
                .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
                .collect();
            let mut weight = (-lt).exp();
            let mut covered = 0.0;
            let mut k = 0usize;
            loop {
                for i in 0..n * n {
                    law[i] += weight * powk[i];
                }
                covered += weight;
                if 1.0 - covered < 1e-12 {
                    break;
                }
                // powk <- powk * P
                let mut next = vec![0.0f64; n * n];
                for i in 0..n {
                    for l in 0..n {
                        let a = powk[i * n + l];
                        if a != 0.0 {
                            let row = &p[l * n..l * n + n];
                            let out = &mut next[i * n..i * n + n];
                            for (o, b) in out.iter_mut().zip(row) {
                                *o += a * b;
                            }
                        }
                    }
                }
                powk = next;
                k += 1;
                weight *= lt / k as f64;
            }
            let unif = 1.0 / n as f64;
            (0..n)
                .map(|i| {
                    0.5 * (0..n)
                        .map(|j| (law[i * n + j] / covered - unif).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        };
        rows.push(MixingRow {
            t,
            max_tv,
            bound: (-eta * nu * nu * n as f64 * t).exp(),
        });
    }
    Ok(rows)
}

/// Connectivity regime by the coupling constants z0 = s_c0 min s_d0 and
/// z1 = s_c1 max s_d1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectivityRegime {
    /// z0 > 0 and z1 > 0: every pair regrows at rate >= rho z0; nu stays above
    /// nu0^3 / 2 except with probability exponentially small in n (needs the
    /// equilibrium density z0/(z0+z1) > nu0).
    Regrowing,
    /// z0 = 0 < z1: edges can only vanish; nu stays above (nu0/2) exp(-2 rho t).
    DecayOnly,
    /// z1 = 0: no edge ever vanishes, nu never drops below nu0.
    NonDecreasing,
}

#[derive(Debug, Clone)]
pub struct ConnectivityReport {
    pub regime: ConnectivityRegime,
    pub nu0: f64,
    pub min_nu: f64,
    pub min_t: f64,
    /// z0 / (z0 + z1), the lower-bounding equilibrium density (None when z0 = z1 = 0).
    pub equilibrium_p: Option<f64>,
    /// The Regrowing threshold requires equilibrium_p > nu0.
    pub threshold_applicable: bool,
    /// Some checkpoint fell at or below the regime threshold.
    pub breached: bool,
}

pub fn connectivity_regime(params: &ModelParams) -> ConnectivityRegime {
    let z1 = params.s_c1.max(params.s_d1);
    let z0 = params.s_c0.min(params.s_d0);
    if z1 == 0.0 {
        ConnectivityRegime::NonDecreasing
    } else if z0 == 0.0 {
        ConnectivityRegime::DecayOnly
    } else {
        ConnectivityRegime::Regrowing
    }
}

/// Threshold curve the regime guarantees nu stays above (up to the stated exception
/// probability).
pub fn connectivity_threshold(
    regime: ConnectivityRegime,
    nu0: f64,
    rho: f64,
    t: f64,
) -> f64 {
    match regime {
        ConnectivityRegime::Regrowing => 0.5 * nu0.powi(3),
        ConnectivityRegime::DecayOnly => 0.5 * nu0 * (-2.0 * rho * t).exp(),
        ConnectivityRegime::NonDecreasing => nu0,
    }
}

pub fn monitor_connectivity(
    snapshots: &[(f64, ColouredGraph)],
    params: &ModelParams,
) -> Result<ConnectivityReport> {
    if snapshots.is_empty() {
        return Err(Error::InvalidInput("no snapshots to monitor".into()));
    }
    let regime = connectivity_regime(params);
    let nu0 = snapshots[0].1.connectivity_nu();
    let z0 = params.s_c0.min(params.s_d0);
    let z1 = params.s_c1.max(params.s_d1);
    let equilibrium_p = (z0 + z1 > 0.0).then(|| z0 / (z0 + z1));
    let mut min_nu = f64::INFINITY;
    let mut min_t = snapshots[0].0;
    let mut breached = false;
    for (t, g) in snapshots {
        let nu = g.connectivity_nu();
        if nu < min_nu {
            min_nu = nu;
            min_t = *t;
        }
        let thr = connectivity_threshold(regime, nu0, params.rho, *t);
        breached |= match regime {
            ConnectivityRegime::NonDecreasing => nu < thr,
            _ => nu <= thr,
        };
    }
    Ok(ConnectivityReport {
        regime,
        nu0,
        min_nu,
        min_t,
        equilibrium_p,
        threshold_applicable: regime != ConnectivityRegime::Regrowing
            || equilibrium_p.is_some_and(|p| p > nu0),
        breached,
    })
}

/// State id of a tiny graph in the exhaustive law: colour bits 0..n, then edge bits in
/// `from_bits` pair order.
pub fn encode_state(g: &ColouredGraph) -> Result<usize> {
    let n = g.n();
    if n > MAX_EXACT_LAW_N {
        return Err(Error::SizeLimit(format!(
            "state encoding supports n <= {MAX_EXACT_LAW_N}, got {n}"
        )));
    }
    let mut id = 0usize;
    for v in 0..n {
        id |= (g.colour(v) as usize) << v;
    }
    for v in 1..n {
        for u in 0..v {
            if g.has_edge(u, v) {
                id |= 1 << (n + pair_index(u, v));
            }
        }
    }
    Ok(id)
}

/// Exact law of the chain at time t over the full state space of n-vertex coloured
/// graphs, by uniformised exponential of the explicit rate matrix.  The result indexes
/// states by `encode_state` and sums to 1 up to accumulation error.
pub fn exact_chain_law(init: &ColouredGraph, params: &ModelParams, t: f64) -> Result<Vec<f64>> {
    let n = init.n();
    if n > MAX_EXACT_LAW_N {
        return Err(Error::SizeLimit(format!(
            "exhaustive law supports n <= {MAX_EXACT_LAW_N}, got {n}"
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    params.validate()?;
    let pairs = n * (n - 1) / 2;
    let states = 1usize << (n + pairs);
    // Transition table: per state, the outgoing (target, rate) list.
    let mut transitions: Vec<Vec<(u32, f64)>> = Vec::with_capacity(states);
    let mut max_exit = 0.0f64;
    for s in 0..states {
        let colour_mask = (s & ((1 << n) - 1)) as u64;
        let edge_mask = (s >> n) as u64;
        let g = ColouredGraph::from_bits(n, colour_mask, edge_mask)?;
        let mut out = Vec::new();
        let mut exit = 0.0;
        for u in 0..n {
            let rate = params.eta * g.vertex_flip_rate(u)? as f64;
            if rate > 0.0 {
                out.push(((s ^ (1 << u)) as u32, rate));
                exit += rate;
            }
        }
        for v in 1..n {
            for u in 0..v {
                let rate = params.rho * g.edge_switch_rate(u, v, params)?;
                if rate > 0.0 {
                    out.push(((s ^ (1 << (n + pair_index(u, v)))) as u32, rate));
                    exit += rate;
                }
            }
        }
        max_exit = max_exit.max(exit);
        transitions.push(out);
    }
    let start = encode_state(init)?;
    let mut law = vec![0.0f64; states];
    if max_exit == 0.0 || t == 0.0 {
        law[start] = 1.0;
        return Ok(law);
    }
    let lambda = max_exit;
    let lt = lambda * t;
    if lt > 700.0 {
        return Err(Error::SizeLimit(format!(
            "uniformisation with lambda t = {lt:.1} underflows; reduce t"
        )));
    }
    let mut v = vec![0.0f64; states];
    v[start] = 1.0;
    let mut weight = (-lt).exp();
    let mut covered = 0.0;
    let mut k = 0usize;
    loop {
        for (li, &vi) in law.iter_mut().zip(&v) {
            *li += weight * vi;
        }
        covered += weight;
        if 1.0 - covered < 1e-13 {
            break;
        }
        // v <- v P with P = I + Q / lambda.
        let mut next = v.clone();
        for (s, outs) in transitions.iter().enumerate() {
            let mass = v[s];
            if mass != 0.0 {
                for &(tgt, rate) in outs {
                    let step = mass * rate / lambda;
                    next[s] -= step;
                    next[tgt as usize] += step;
                }
            }
        }
        v = next;
        k += 1;
        weight *= lt / k as f64;
    }
    let norm: f64 = 1.0 / covered;
    for li in &mut law {
        *li *= norm;
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::ColouredGraphon;
    use crate::motif::Motif;

    fn fig1_params() -> ModelParams {
        ModelParams::new(1.0, 1.1, [1.5, 0.5, 0.7, 2.0]).unwrap()
    }

    fn random_graph(n: usize, seed: u64) -> ColouredGraph {
        let w = ColouredGraphon::constant(1, 0.4, 0.5).unwrap();
        let mut rng = stream_rng(seed, 11);
        w.sample_graph(n, &mut rng).unwrap()
    }

    #[test]
    fn pair_index_round_trips() {
        let mut id = 0;
        for v in 1..80 {
            for u in 0..v {
                assert_eq!(pair_index(u, v), id);
                assert_eq!(pair_from_index(id), (u, v));
                id += 1;
            }
        }
    }

    #[test]
    fn caches_survive_many_events() {
        let g = random_graph(24, 3);
        let mut state = SimState::new(g, fig1_params()).unwrap();
        assert!(state.verify_caches());
        let mut rng = stream_rng(5, 0);
        for i in 0..400 {
            let stepped = state.step(&mut rng).unwrap();
            assert!(stepped.is_some());
            if i % 50 == 0 {
                assert!(state.verify_caches(), "caches diverged at event {i}");
            }
        }
        assert!(state.verify_caches());
        assert_eq!(state.event_count(), 400);
    }

    #[test]
    fn replay_is_deterministic_and_streams_differ() {
        let g = random_graph(12, 9);
        let params = fig1_params();
        let run = |stream: u64| -> Vec<(f64, Transition)> {
            let mut state = SimState::new(g.clone(), params).unwrap();
            let mut rng = stream_rng(42, stream);
            (0..60)
                .map(|_| state.step(&mut rng).unwrap().unwrap())
                .collect()
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }

    #[test]
    fn observation_grid_does_not_perturb_events() {
        let g = random_graph(14, 2);
        let params = fig1_params();
        let obs = ObserverConfig::default();
        let coarse = simulate(&g, &params, &[0.0, 0.4], &obs, 7, 3).unwrap();
        let fine = simulate(
            &g,
            &params,
            &[0.0, 0.05, 0.1, 0.2, 0.3, 0.4],
            &obs,
            7,
            3,
        )
        .unwrap();
        let a = coarse.points.last().unwrap();
        let b = fine.points.last().unwrap();
        assert_eq!(a.event_count, b.event_count);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn absorbing_state_freezes_trajectory() {
        // All-white consensus and zero switching rates: no event can fire.
        let g = ColouredGraph::new(vec![1; 6], &[(0, 1), (2, 3)]).unwrap();
        let params = ModelParams::new(1.0, 1.0, [0.0; 4]).unwrap();
        let traj = simulate(
            &g,
            &params,
            &[0.0, 1.0, 2.0, 5.0],
            &ObserverConfig::default(),
            1,
            0,
        )
        .unwrap();
        assert_eq!(traj.points.len(), 4);
        for p in &traj.points {
            assert_eq!(p.event_count, 0);
            assert_eq!(p.stats.q, 1.0);
            assert_eq!(p.stats.edge_count, 2);
        }
    }

    #[test]
    fn checkpoint_grid_is_validated() {
        let g = random_graph(6, 1);
        let params = fig1_params();
        let obs = ObserverConfig::default();
        assert!(simulate(&g, &params, &[], &obs, 1, 0).is_err());
        assert!(simulate(&g, &params, &[0.5, 1.0], &obs, 1, 0).is_err());
        assert!(simulate(&g, &params, &[0.0, 1.0, 1.0], &obs, 1, 0).is_err());
        assert!(simulate(&g, &params, &[0.0, f64::NAN], &obs, 1, 0).is_err());
    }

    #[test]
    fn distance_kernel_matches_construction() {
        let n = 200;
        let g = init_distance_kernel(n, 77).unwrap();
        let h = init_distance_kernel(n, 77).unwrap();
        assert_eq!(g.colours(), h.colours());
        assert_eq!(g.edge_list(), h.edge_list());
        // First ceil(n/2) black (colour 0), rest white; q = floor(n/2)/n.
        assert!(g.colours()[..n / 2].iter().all(|&c| c == 0));
        assert!(g.colours()[n.div_ceil(2)..].iter().all(|&c| c == 1));
        assert_eq!(g.summary_stats().q, (n / 2) as f64 / n as f64);
        // Discordant edges dominate concordant ones by construction.
        let s = g.summary_stats();
        assert!(
            s.discordant > 2.0 * s.concordant,
            "D = {}, C = {}",
            s.discordant,
            s.concordant
        );
        assert_ne!(
            init_distance_kernel(n, 78).unwrap().edge_list(),
            g.edge_list()
        );
    }

    #[test]
    fn ensemble_is_ordered_and_reproducible() {
        let g = random_graph(10, 4);
        let params = fig1_params();
        let obs = ObserverConfig::default();
        let runs = simulate_ensemble(&g, &params, &[0.0, 0.2], &obs, 9, 6).unwrap();
        assert_eq!(runs.len(), 6);
        for (i, r) in runs.iter().enumerate() {
            assert_eq!(r.stream, i as u64);
            let solo = simulate(&g, &params, &[0.0, 0.2], &obs, 9, i as u64).unwrap();
            assert_eq!(r.points.last().unwrap().stats, solo.points.last().unwrap().stats);
        }
    }

    #[test]
    fn observers_record_motifs_nu_and_snapshots() {
        let g = random_graph(16, 8);
        let params = fig1_params();
        let obs = ObserverConfig {
            motifs: Some(MotifCatalog::up_to(2).unwrap()),
            record_nu: true,
            snapshots: true,
        };
        let traj = simulate(&g, &params, &[0.0, 0.1], &obs, 3, 0).unwrap();
        let p0 = &traj.points[0];
        let densities = p0.motif_densities.as_ref().unwrap();
        // Colour fraction is the density of the single white vertex.
        let cat = MotifCatalog::up_to(2).unwrap();
        let white_idx = cat.index_of(&Motif::vertex(1)).unwrap();
        assert!((densities[white_idx] - p0.stats.q).abs() < 1e-12);
        assert_eq!(p0.nu.unwrap(), g.connectivity_nu());
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[0].1.edge_count(), g.edge_count());
    }

    #[test]
    fn mixing_table_on_complete_graph() {
        let n = 16;
        let colours = vec![1u8; n];
        let mut edges = Vec::new();
        for v in 1..n {
            for u in 0..v {
                edges.push((u, v));
            }
        }
        let g = ColouredGraph::new(colours, &edges).unwrap();
        let rows = mixing_check(&g, 1.0, &[0.0, 0.02, 0.05, 0.2]).unwrap();
        assert_eq!(rows[0].max_tv, 1.0 - 1.0 / n as f64);
        assert!(rows[0].bound == 1.0);
        for w in rows.windows(2) {
            assert!(w[1].max_tv < w[0].max_tv);
        }
        for r in &rows {
            assert!(r.holds(), "t = {}: tv {} > bound {}", r.t, r.max_tv, r.bound);
        }
        assert!(rows[3].max_tv < 1e-3);
    }

    #[test]
    fn mixing_table_disconnected_graph_is_vacuous() {
        let g = ColouredGraph::new(vec![1, 1, 0, 0], &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.connectivity_nu(), 0.0);
        let rows = mixing_check(&g, 1.0, &[0.0, 1.0]).unwrap();
        for r in &rows {
            assert_eq!(r.bound, 1.0);
            assert!(r.holds());
        }
        // Two-cluster walk never leaves its component: TV stays at 1/2.
        assert!((rows[1].max_tv - 0.5).abs() < 1e-9);
    }

    #[test]
    fn connectivity_regimes_classify_and_monitor() {
        let p_grow = ModelParams::new(1.0, 1.0, [1.0, 0.5, 2.0, 0.25]).unwrap();
        assert_eq!(connectivity_regime(&p_grow), ConnectivityRegime::Regrowing);
        let p_decay = ModelParams::new(1.0, 1.0, [0.0, 1.0, 0.5, 1.0]).unwrap();
        assert_eq!(connectivity_regime(&p_decay), ConnectivityRegime::DecayOnly);
        let p_frozen = ModelParams::new(1.0, 1.0, [1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            connectivity_regime(&p_frozen),
            ConnectivityRegime::NonDecreasing
        );

        // Under z1 = 0 the statistic never drops below its initial value.
        let g = init_distance_kernel(60, 5).unwrap();
        let obs = ObserverConfig {
            snapshots: true,
            ..Default::default()
        };
        let traj = simulate(&g, &p_frozen, &[0.0, 0.05, 0.1, 0.2], &obs, 11, 0).unwrap();
        let report = monitor_connectivity(&traj.snapshots, &p_frozen).unwrap();
        assert_eq!(report.regime, ConnectivityRegime::NonDecreasing);
        assert!(!report.breached, "{report:?}");
        assert!(report.min_nu >= report.nu0);
        assert_eq!(report.equilibrium_p, Some(1.0));
    }

    #[test]
    fn exact_law_two_vertices_closed_form() {
        // Both vertices white: colours frozen, the single pair is a two-state chain
        // with gain rho s_c0 and loss rho s_c1.
        let params = ModelParams::new(1.0, 2.0, [0.6, 0.4, 0.0, 0.0]).unwrap();
        let g = ColouredGraph::new(vec![1, 1], &[]).unwrap();
        let t = 0.7;
        let law = exact_chain_law(&g, &params, t).unwrap();
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let p_inf = 0.6 / (0.6 + 0.4);
        let p_t = p_inf * (1.0 - (-params.rho * (0.6 + 0.4) * t).exp());
        let with_edge = encode_state(&ColouredGraph::new(vec![1, 1], &[(0, 1)]).unwrap()).unwrap();
        let without = encode_state(&g).unwrap();
        assert!((law[with_edge] - p_t).abs() < 1e-10);
        assert!((law[without] - (1.0 - p_t)).abs() < 1e-10);
        for (s, &m) in law.iter().enumerate() {
            if s != with_edge && s != without {
                assert_eq!(m, 0.0);
            }
        }
    }

    #[test]
    fn exact_law_preserves_colour_martingale() {
        // Discordant edge start: flips are active; E[q_t] must stay 1/2 and the law
        // must sum to 1.
        let params = fig1_params();
        let g = ColouredGraph::new(vec![1, 0], &[(0, 1)]).unwrap();
        let law = exact_chain_law(&g, &params, 0.9).unwrap();
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let mut mean_q = 0.0;
        for (s, &m) in law.iter().enumerate() {
            let whites = (s & 0b11).count_ones() as f64;
            mean_q += m * whites / 2.0;
        }
        assert!((mean_q - 0.5).abs() < 1e-10, "{mean_q}");
    }

    #[test]
    fn empirical_frequencies_track_exact_law() {
        // Coarse distributional check on the 8-state two-vertex chain; the acceptance
        // suite runs the full chi-square on three vertices.
        let params = ModelParams::new(1.0, 1.0, [1.0, 0.8, 0.5, 1.2]).unwrap();
        let g = ColouredGraph::new(vec![1, 0], &[]).unwrap();
        let t = 0.4;
        let law = exact_chain_law(&g, &params, t).unwrap();
        let runs = 4000usize;
        let obs = ObserverConfig {
            snapshots: true,
            ..Default::default()
        };
        let trajs = simulate_ensemble(&g, &params, &[0.0, t], &obs, 123, runs).unwrap();
        let mut counts = vec![0usize; law.len()];
        for tr in &trajs {
            counts[encode_state(&tr.snapshots[1].1).unwrap()] += 1;
        }
        for (s, &m) in law.iter().enumerate() {
            let freq = counts[s] as f64 / runs as f64;
            let sd = (m * (1.0 - m) / runs as f64).sqrt();
            assert!(
                (freq - m).abs() <= 5.0 * sd + 1e-3,
                "state {s}: freq {freq} vs law {m}"
            );
        }
    }
}
