//! Simulator and numerics toolkit for a co-evolving vertex-colour / edge Markov chain on
//! dense graphs, together with its graphon-valued scaling limit.
//!
//! The finite model lives on coloured graphs: every vertex carries a colour (white or
//! black), every unordered vertex pair is either connected or not.  Two kinds of events
//! drive the dynamics:
//!
//! * a vertex flips its colour at rate `eta` times its number of opposite-coloured
//!   neighbours;
//! * a pair toggles its edge at rate `rho` times a per-category constant, the category
//!   being (colours agree?, edge present?) with constants `s_c0, s_c1, s_d0, s_d1`.
//!
//! In the dense scaling the colour fraction `q` follows a Fisher-Wright diffusion sped up
//! by the discordant-edge density, while the connection kernel relaxes cell-wise towards a
//! q-dependent equilibrium.  The crate provides
//!
//! * [`graph`]: the coloured-graph state with O(degree) incremental bookkeeping,
//! * [`motif`]: coloured motifs, canonical forms and the edit operations used by the
//!   generator calculus,
//! * [`graphon`]: step-graphon embeddings, motif densities, the subgraph and cut metrics,
//!   and the colour-averaging projection,
//! * [`sim`]: the exact Gillespie simulator plus mixing and connectivity diagnostics,
//! * [`limit`]: the limit SDE/ODE integrator, equilibria, polarisation estimators and the
//!   closed motif-density flow,
//! * [`gencoeff`]: the motif-multiset calculus giving exact drift/diffusion coefficients
//!   of the generator acting on density observables, with an exact rational mode,
//! * [`paths`]: metrics on cadlag paths of observables,
//! * [`io`]: the JSON/CSV external formats.

pub mod fenwick;
pub mod gencoeff;
pub mod graph;
pub mod graphon;
pub mod io;
pub mod limit;
pub mod motif;
pub mod params;
pub mod paths;
pub mod rngs;
pub mod sim;

use thiserror::Error;

/// Unified error type for fallible toolkit operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (bad index, malformed input, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The requested computation exceeds a documented size limit.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// A data file parsed but failed semantic validation.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Builds the global rayon pool with `threads` workers (or the `COEVONET_THREADS`
/// environment variable when `None`).  Call once, before any parallel work; later calls
/// are ignored by rayon and reported as `Ok(false)`.
pub fn init_thread_pool(threads: Option<usize>) -> Result<bool> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var("COEVONET_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::InvalidInput(format!("COEVONET_THREADS must be an integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    let Some(threads) = threads else {
        return Ok(false);
    };
    if threads == 0 {
        return Err(Error::InvalidInput("thread count must be positive".into()));
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok())
}
