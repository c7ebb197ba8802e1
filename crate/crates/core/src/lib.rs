//! Hybrid authenticated key exchange mixing classical, post-quantum and
//! QKD-supplied key material, authenticated by pre-shared keys, hybrid
//! certificates, or both.

mod codec;
pub mod hakelab;
pub mod handshake;
pub mod mka;
pub mod pki;
pub mod qkd;
pub mod schedule;
mod secret;
pub mod suite;
pub mod wire;

pub use codec::{CodecError, MAX_FIELD_LEN};
pub use secret::Secret;

/// Chapters of the guide in `book/`, compiled so their listings stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/suites.md")]
    mod suites {}
    #[doc = include_str!("../../../book/src/handshake.md")]
    mod handshake {}
    #[doc = include_str!("../../../book/src/key-schedule.md")]
    mod key_schedule {}
    #[doc = include_str!("../../../book/src/qkd.md")]
    mod qkd {}
    #[doc = include_str!("../../../book/src/pki.md")]
    mod pki {}
    #[doc = include_str!("../../../book/src/macsec.md")]
    mod macsec {}
    #[doc = include_str!("../../../book/src/hakelab.md")]
    mod hakelab {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
