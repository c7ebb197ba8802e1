use fn_dsa::{KeyPairGenerator as _, SigningKey as _, VerifyingKey as _};
use hmac::{Hmac, KeyInit, Mac};
use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRngCore, SeedableRng};
use sha2::{Digest, Sha256};

use super::SuiteError;
use crate::Secret;

/// Digital signature scheme. Signing is deterministic; randomness is only
/// consumed by key generation.
pub trait SignatureScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn public_key_len(&self) -> usize;
    /// Maximum (for Falcon: padded, hence exact) signature length.
    fn signature_len(&self) -> usize;
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError>;
    fn sign(&self, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError>;
    fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

pub struct NoSignature;

impl SignatureScheme for NoSignature {
    fn name(&self) -> &'static str {
        "none"
    }
    fn public_key_len(&self) -> usize {
        0
    }
    fn signature_len(&self) -> usize {
        0
    }
    fn keygen(&self, _: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        Err(unknown_none())
    }
    fn sign(&self, _: &[u8], _: &[u8]) -> Result<Vec<u8>, SuiteError> {
        Err(unknown_none())
    }
    fn verify(&self, _: &[u8], _: &[u8], _: &[u8]) -> bool {
        false
    }
}

fn unknown_none() -> SuiteError {
    SuiteError::UnknownAlgorithm { kind: super::AlgorithmKind::Signature, name: "none".into() }
}

/// Test-only scheme: `pk = SHA-256("TestDSS pk" || sk)`, `sig = HMAC-SHA-256(pk, m)`.
/// Anyone holding the public key can forge, so it must never leave the test
/// harness; it keeps handshake tests independent of the PQC libraries.
pub struct TestDss;

impl TestDss {
    fn public(sk: &[u8]) -> [u8; 32] {
        let mut d = Sha256::new();
        d.update(b"TestDSS pk");
        d.update(sk);
        d.finalize().into()
    }

    fn tag(pk: &[u8], message: &[u8]) -> Vec<u8> {
        let mut m = <Hmac<Sha256> as KeyInit>::new_from_slice(pk).expect("HMAC takes any key length");
        m.update(message);
        m.finalize().into_bytes().to_vec()
    }
}

impl SignatureScheme for TestDss {
    fn name(&self) -> &'static str {
        "TestDSS"
    }
    fn public_key_len(&self) -> usize {
        32
    }
    fn signature_len(&self) -> usize {
        32
    }
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        let mut sk = [0u8; 32];
        rng.fill_bytes(&mut sk);
        Ok((Self::public(&sk).to_vec(), Secret::from(sk)))
    }
    fn sign(&self, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
        if sk.len() != 32 {
            return Err(SuiteError::MalformedSecretKey(self.name()));
        }
        Ok(Self::tag(&Self::public(sk), message))
    }
    fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> bool {
        if pk.len() != 32 {
            return false;
        }
        let mut m = <Hmac<Sha256> as KeyInit>::new_from_slice(pk).expect("HMAC takes any key length");
        m.update(message);
        m.verify_slice(signature).is_ok()
    }
}

pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn name(&self) -> &'static str {
        "Ed25519"
    }
    fn public_key_len(&self) -> usize {
        32
    }
    fn signature_len(&self) -> usize {
        64
    }
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
        Ok((sk.verifying_key().to_bytes().to_vec(), Secret::from(seed)))
    }
    fn sign(&self, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
        use ed25519_dalek::Signer;
        let seed: [u8; 32] = sk.try_into().map_err(|_| SuiteError::MalformedSecretKey(self.name()))?;
        Ok(ed25519_dalek::SigningKey::from_bytes(&seed).sign(message).to_bytes().to_vec())
    }
    fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> bool {
        use ed25519_dalek::Verifier;
        let Ok(pk) = <[u8; 32]>::try_from(pk) else { return false };
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk) else { return false };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else { return false };
        vk.verify(message, &sig).is_ok()
    }
}

macro_rules! ml_dsa_binding {
    ($ty:ident, $params:ty, $name:literal, $pk:literal, $sig:literal) => {
        /// ML-DSA (FIPS 204), deterministic signing with an empty context;
        /// secret keys are the 32-byte seed.
        pub struct $ty;

        impl SignatureScheme for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn public_key_len(&self) -> usize {
                $pk
            }
            fn signature_len(&self) -> usize {
                $sig
            }
            fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                let sk = ml_dsa::SigningKey::<$params>::from_seed(&seed.into());
                let vk = ml_dsa::Keypair::verifying_key(&sk);
                Ok((vk.encode().to_vec(), Secret::from(seed)))
            }
            fn sign(&self, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
                let seed: [u8; 32] = sk.try_into().map_err(|_| SuiteError::MalformedSecretKey($name))?;
                let sk = ml_dsa::SigningKey::<$params>::from_seed(&seed.into());
                let sig = sk
                    .expanded_key()
                    .sign_deterministic(message, b"")
                    .map_err(|_| SuiteError::MalformedSecretKey($name))?;
                Ok(sig.encode().to_vec())
            }
            fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> bool {
                let Ok(enc) = ml_dsa::EncodedVerifyingKey::<$params>::try_from(pk) else { return false };
                let vk = ml_dsa::VerifyingKey::<$params>::decode(&enc);
                let Ok(sig) = ml_dsa::Signature::<$params>::try_from(signature) else { return false };
                vk.verify_with_context(message, b"", &sig)
            }
        }
    };
}

ml_dsa_binding!(MlDsa44, ml_dsa::MlDsa44, "ML-DSA-44", 1312, 2420);
ml_dsa_binding!(MlDsa65, ml_dsa::MlDsa65, "ML-DSA-65", 1952, 3309);
ml_dsa_binding!(MlDsa87, ml_dsa::MlDsa87, "ML-DSA-87", 2592, 4627);

/// Falcon (FN-DSA) with raw message hashing. The signing randomness is drawn
/// from a ChaCha20 stream keyed by `SHA-256(sk || message)`, so signatures are
/// reproducible for a given key and message.
pub struct Falcon {
    name: &'static str,
    logn: u32,
}

#[allow(non_upper_case_globals)]
pub const Falcon512: Falcon = Falcon { name: "Falcon-512", logn: fn_dsa::FN_DSA_LOGN_512 };
#[allow(non_upper_case_globals)]
pub const Falcon1024: Falcon = Falcon { name: "Falcon-1024", logn: fn_dsa::FN_DSA_LOGN_1024 };

impl SignatureScheme for Falcon {
    fn name(&self) -> &'static str {
        self.name
    }
    fn public_key_len(&self) -> usize {
        fn_dsa::vrfy_key_size(self.logn)
    }
    fn signature_len(&self) -> usize {
        fn_dsa::signature_size(self.logn)
    }
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let mut stream = ChaCha20Rng::from_seed(seed);
        let mut sk = vec![0u8; fn_dsa::sign_key_size(self.logn)];
        let mut vk = vec![0u8; fn_dsa::vrfy_key_size(self.logn)];
        fn_dsa::KeyPairGeneratorStandard::default().keygen(self.logn, &mut stream, &mut sk, &mut vk);
        Ok((vk, Secret::new(sk)))
    }
    fn sign(&self, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
        let mut key = fn_dsa::SigningKeyStandard::decode(sk).ok_or(SuiteError::MalformedSecretKey(self.name))?;
        if key.get_logn() != self.logn {
            return Err(SuiteError::MalformedSecretKey(self.name));
        }
        let mut d = Sha256::new();
        d.update(b"Falcon signing stream");
        d.update(sk);
        d.update(message);
        let mut stream = ChaCha20Rng::from_seed(d.finalize().into());
        let mut sig = vec![0u8; fn_dsa::signature_size(self.logn)];
        key.sign(&mut stream, &fn_dsa::DOMAIN_NONE, &fn_dsa::HASH_ID_RAW, message, &mut sig);
        Ok(sig)
    }
    fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> bool {
        if pk.len() != fn_dsa::vrfy_key_size(self.logn) {
            return false;
        }
        fn_dsa::VerifyingKeyStandard::decode(pk)
            .is_some_and(|vk| vk.verify(signature, &fn_dsa::DOMAIN_NONE, &fn_dsa::HASH_ID_RAW, message))
    }
}

macro_rules! slh_dsa_binding {
    ($ty:ident, $params:ty, $name:literal, $n:literal, $sig:literal) => {
        /// SLH-DSA (FIPS 205), deterministic variant with an empty context.
        pub struct $ty;

        impl SignatureScheme for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn public_key_len(&self) -> usize {
                2 * $n
            }
            fn signature_len(&self) -> usize {
                $sig
            }
            fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
                let mut seeds = [0u8; 3 * $n];
                rng.fill_bytes(&mut seeds);
                let sk = slh_dsa::SigningKey::<$params>::slh_keygen_internal(
                    &seeds[..$n],
                    &seeds[$n..2 * $n],
                    &seeds[2 * $n..],
                );
                let vk = slh_dsa::signature::Keypair::verifying_key(&sk);
                Ok((vk.to_vec(), Secret::new(sk.to_vec())))
            }
            fn sign(&self, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
                let sk = slh_dsa::SigningKey::<$params>::try_from(sk)
                    .map_err(|_| SuiteError::MalformedSecretKey($name))?;
                let sig = sk
                    .try_sign_with_context(message, b"", None)
                    .map_err(|_| SuiteError::MalformedSecretKey($name))?;
                Ok(sig.to_vec())
            }
            fn verify(&self, pk: &[u8], message: &[u8], signature: &[u8]) -> bool {
                let Ok(vk) = slh_dsa::VerifyingKey::<$params>::try_from(pk) else { return false };
                let Ok(sig) = slh_dsa::Signature::<$params>::try_from(signature) else { return false };
                vk.try_verify_with_context(message, b"", &sig).is_ok()
            }
        }
    };
}

slh_dsa_binding!(SlhDsaShake128f, slh_dsa::Shake128f, "SLH-DSA-SHAKE-128f", 16, 17088);
slh_dsa_binding!(SlhDsaShake192f, slh_dsa::Shake192f, "SLH-DSA-SHAKE-192f", 24, 35664);
slh_dsa_binding!(SlhDsaShake256f, slh_dsa::Shake256f, "SLH-DSA-SHAKE-256f", 32, 49856);
