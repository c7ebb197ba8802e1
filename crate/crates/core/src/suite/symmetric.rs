use aes_gcm::aead::{Aead, Payload};
use aes_gcm::Aes256Gcm;
use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha384};

use super::SuiteError;

/// Output length of the suite hash (SHA-384) and therefore of every PRF call.
pub const HASH_LEN: usize = 48;
pub const AEAD_KEY_LEN: usize = 32;
pub const AEAD_NONCE_LEN: usize = 12;

const ZERO_KEY: [u8; HASH_LEN] = [0; HASH_LEN];

fn canonical_key(key: &[u8]) -> &[u8] {
    if key.is_empty() {
        &ZERO_KEY
    } else {
        key
    }
}

fn hmac(key: &[u8], input: &[u8]) -> Hmac<Sha384> {
    let mut m = <Hmac<Sha384> as KeyInit>::new_from_slice(canonical_key(key)).expect("HMAC takes any key length");
    m.update(input);
    m
}

pub fn hash(data: &[u8]) -> [u8; HASH_LEN] {
    Sha384::digest(data).into()
}

/// `F(key, input) = HMAC-SHA-384(key, input)`.
///
/// An empty key stands for the absent value `⊥` (first-stage SecState, no
/// PSK, no classical KEM) and is replaced by 48 zero bytes.
pub fn prf(key: &[u8], input: &[u8]) -> [u8; HASH_LEN] {
    hmac(key, input).finalize().into_bytes().into()
}

pub fn mac_auth(key: &[u8], message: &[u8]) -> [u8; HASH_LEN] {
    prf(key, message)
}

pub fn mac_verify(key: &[u8], message: &[u8], tag: &[u8]) -> bool {
    hmac(key, message).verify_slice(tag).is_ok()
}

/// AES-256-GCM; the output is ciphertext followed by the 16-byte tag.
pub fn aead_seal(
    key: &[u8],
    nonce: &[u8; AEAD_NONCE_LEN],
    associated_data: &[u8],
    plaintext: &[u8],
) -> Result<Vec<u8>, SuiteError> {
    let cipher = Aes256Gcm::new_from_slice(key).map_err(|_| SuiteError::InvalidSuite("AEAD key must be 32 bytes".into()))?;
    cipher
        .encrypt(&(*nonce).into(), Payload { msg: plaintext, aad: associated_data })
        .map_err(|_| SuiteError::InvalidSuite("plaintext too long for AES-GCM".into()))
}

pub fn aead_open(
    key: &[u8],
    nonce: &[u8; AEAD_NONCE_LEN],
    associated_data: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, SuiteError> {
    let cipher = Aes256Gcm::new_from_slice(key).map_err(|_| SuiteError::AeadAuthFailure)?;
    cipher
        .decrypt(&(*nonce).into(), Payload { msg: ciphertext, aad: associated_data })
        .map_err(|_| SuiteError::AeadAuthFailure)
}
