//! Building blocks of the `vmuckle` binary, kept in a library so the
//! acceptance and integration tests can call them directly.

pub mod bench;
pub mod demo;
pub mod handshake;
pub mod kat;
pub mod options;
pub mod pki;
pub mod replay;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use vmuckle::handshake::StageError;

/// Environment variable that makes every random choice reproducible.
pub const SEED_ENV: &str = "VMUCKLE_SEED";

/// A seeded generator when `seed` is set, otherwise one keyed from the OS.
pub fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

/// One-line failure description ending in the short reason, e.g.
/// `initiator rejected: peer MAC invalid (MacInvalid)`.
pub fn describe(e: &StageError) -> String {
    match (e, e.handshake_error()) {
        (_, Some(h)) => format!("{e} ({})", h.reason()),
        (StageError::Io(io), _) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            "peer closed the connection".into()
        }
        _ => e.to_string(),
    }
}
