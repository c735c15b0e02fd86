//! Batch front-end for `urgentkit-core`: simulate degraded datasets from a
//! manifest, run the enhancement pipeline, score the outputs and manage
//! codebooks. Every command is deterministic in (inputs, config, seed) and
//! independent of the worker count.

pub mod codec_cmd;
pub mod config;
pub mod enhance;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod report;
pub mod simulate;

use rayon::prelude::*;

pub use error::{CliError, Outcome, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Lowercase hex SHA-256.
pub fn hex_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex(Sha256::digest(bytes).as_slice())
}

/// Maps `f` over `items` on a pool of `jobs` workers, results in input
/// order.
pub(crate) fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}
