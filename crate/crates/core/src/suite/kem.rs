use ml_kem::{Decapsulate, KeyExport, TryKeyInit};
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::SuiteError;
use crate::Secret;

/// Key-encapsulation mechanism.
///
/// Secret keys are opaque byte strings owned by the implementation; for the
/// ML-KEM bindings they hold the 64-byte seed.
pub trait Kem: Send + Sync {
    fn name(&self) -> &'static str;
    fn public_key_len(&self) -> usize;
    fn ciphertext_len(&self) -> usize;
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError>;
    fn encaps(&self, pk: &[u8], rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError>;
    fn decaps(&self, sk: &[u8], ct: &[u8]) -> Result<Secret, SuiteError>;
}

/// Absent classical KEM: every value is the empty string.
pub struct NoKem;

impl Kem for NoKem {
    fn name(&self) -> &'static str {
        "none"
    }
    fn public_key_len(&self) -> usize {
        0
    }
    fn ciphertext_len(&self) -> usize {
        0
    }
    fn keygen(&self, _: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        Ok((Vec::new(), Secret::empty()))
    }
    fn encaps(&self, pk: &[u8], _: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        if !pk.is_empty() {
            return Err(SuiteError::MalformedPublicKey("none"));
        }
        Ok((Vec::new(), Secret::empty()))
    }
    fn decaps(&self, sk: &[u8], ct: &[u8]) -> Result<Secret, SuiteError> {
        if !sk.is_empty() || !ct.is_empty() {
            return Err(SuiteError::DecapsFailure("none"));
        }
        Ok(Secret::empty())
    }
}

/// Hash-based stand-in KEM for fast deterministic tests. The ciphertext
/// carries the encapsulation randomness in the clear, so it provides no
/// secrecy at all; it exists to exercise the protocol plumbing.
///
/// * `pk = SHA-256("TestKEM-32 pk" || sk)`
/// * `ct = r || SHA-256("TestKEM-32 tag" || pk || r)`
/// * `ss = SHA-256("TestKEM-32 ss" || pk || r)`
///
/// Decapsulation recomputes the tag and rejects explicitly on mismatch.
pub struct TestKem32;

impl TestKem32 {
    fn h(label: &[u8], parts: &[&[u8]]) -> [u8; 32] {
        let mut d = Sha256::new();
        d.update(label);
        for p in parts {
            d.update(p);
        }
        d.finalize().into()
    }
}

impl Kem for TestKem32 {
    fn name(&self) -> &'static str {
        "TestKEM-32"
    }
    fn public_key_len(&self) -> usize {
        32
    }
    fn ciphertext_len(&self) -> usize {
        64
    }
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        let mut sk = [0u8; 32];
        rng.fill_bytes(&mut sk);
        let pk = Self::h(b"TestKEM-32 pk", &[&sk]);
        Ok((pk.to_vec(), Secret::from(sk)))
    }
    fn encaps(&self, pk: &[u8], rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        if pk.len() != 32 {
            return Err(SuiteError::MalformedPublicKey(self.name()));
        }
        let mut r = [0u8; 32];
        rng.fill_bytes(&mut r);
        let mut ct = r.to_vec();
        ct.extend_from_slice(&Self::h(b"TestKEM-32 tag", &[pk, &r]));
        Ok((ct, Secret::from(Self::h(b"TestKEM-32 ss", &[pk, &r]))))
    }
    fn decaps(&self, sk: &[u8], ct: &[u8]) -> Result<Secret, SuiteError> {
        if sk.len() != 32 || ct.len() != 64 {
            return Err(SuiteError::DecapsFailure(self.name()));
        }
        let pk = Self::h(b"TestKEM-32 pk", &[sk]);
        let (r, tag) = ct.split_at(32);
        if Self::h(b"TestKEM-32 tag", &[&pk, r]) != tag {
            return Err(SuiteError::DecapsFailure(self.name()));
        }
        Ok(Secret::from(Self::h(b"TestKEM-32 ss", &[&pk, r])))
    }
}

/// ECDH over P-521 used as a KEM: the ciphertext is an ephemeral public key
/// (uncompressed SEC1) and the shared secret is the x-coordinate.
pub struct EcdhP521;

const P521_SCALAR_LEN: usize = 66;

fn p521_secret(rng: &mut dyn CryptoRngCore) -> p521::SecretKey {
    loop {
        let mut b = [0u8; P521_SCALAR_LEN];
        rng.fill_bytes(&mut b);
        b[0] &= 0x01;
        if let Ok(sk) = p521::SecretKey::from_slice(&b) {
            return sk;
        }
    }
}

impl Kem for EcdhP521 {
    fn name(&self) -> &'static str {
        "ECDH-P521"
    }
    fn public_key_len(&self) -> usize {
        133
    }
    fn ciphertext_len(&self) -> usize {
        133
    }
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        let sk = p521_secret(rng);
        let pk = sk.public_key().to_sec1_bytes().to_vec();
        Ok((pk, Secret::new(sk.to_bytes().to_vec())))
    }
    fn encaps(&self, pk: &[u8], rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
        let peer = p521::PublicKey::from_sec1_bytes(pk).map_err(|_| SuiteError::MalformedPublicKey(self.name()))?;
        let eph = p521_secret(rng);
        let ct = eph.public_key().to_sec1_bytes().to_vec();
        let ss = eph.diffie_hellman(&peer);
        Ok((ct, Secret::from_slice(ss.raw_secret_bytes())))
    }
    fn decaps(&self, sk: &[u8], ct: &[u8]) -> Result<Secret, SuiteError> {
        let sk = p521::SecretKey::from_slice(sk).map_err(|_| SuiteError::MalformedSecretKey(self.name()))?;
        let eph = p521::PublicKey::from_sec1_bytes(ct).map_err(|_| SuiteError::DecapsFailure(self.name()))?;
        let ss = sk.diffie_hellman(&eph);
        Ok(Secret::from_slice(ss.raw_secret_bytes()))
    }
}

macro_rules! ml_kem_binding {
    ($ty:ident, $params:ty, $name:literal, $pk:literal, $ct:literal) => {
        /// ML-KEM (FIPS 203) with implicit rejection; secret keys are the 64-byte seed.
        pub struct $ty;

        impl Kem for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn public_key_len(&self) -> usize {
                $pk
            }
            fn ciphertext_len(&self) -> usize {
                $ct
            }
            fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
                let mut seed = [0u8; 64];
                rng.fill_bytes(&mut seed);
                let dk = ml_kem::DecapsulationKey::<$params>::from_seed(seed.into());
                let pk = dk.encapsulation_key().to_bytes().to_vec();
                Ok((pk, Secret::from(seed)))
            }
            fn encaps(
                &self,
                pk: &[u8],
                rng: &mut dyn CryptoRngCore,
            ) -> Result<(Vec<u8>, Secret), SuiteError> {
                let ek = ml_kem::EncapsulationKey::<$params>::new_from_slice(pk)
                    .map_err(|_| SuiteError::MalformedPublicKey($name))?;
                let mut m = [0u8; 32];
                rng.fill_bytes(&mut m);
                let (ct, ss) = ek.encapsulate_deterministic(&m.into());
                Ok((ct.to_vec(), Secret::from_slice(&ss)))
            }
            fn decaps(&self, sk: &[u8], ct: &[u8]) -> Result<Secret, SuiteError> {
                let seed: [u8; 64] = sk.try_into().map_err(|_| SuiteError::MalformedSecretKey($name))?;
                let dk = ml_kem::DecapsulationKey::<$params>::from_seed(seed.into());
                let ct = ml_kem::Ciphertext::<$params>::try_from(ct).map_err(|_| SuiteError::DecapsFailure($name))?;
                Ok(Secret::from_slice(&dk.decapsulate(&ct)))
            }
        }
    };
}

ml_kem_binding!(MlKem512, ml_kem::MlKem512, "ML-KEM-512", 800, 768);
ml_kem_binding!(MlKem768, ml_kem::MlKem768, "ML-KEM-768", 1184, 1088);
ml_kem_binding!(MlKem1024, ml_kem::MlKem1024, "ML-KEM-1024", 1568, 1568);

#[cfg(test)]
mod tests {
    use super::super::registry::KEMS;
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn every_kem_round_trips_with_declared_sizes() {
        let mut rng = ChaCha20Rng::from_seed([1; 32]);
        for kem in KEMS {
            for _ in 0..3 {
                let (pk, sk) = kem.keygen(&mut rng).unwrap();
                assert_eq!(pk.len(), kem.public_key_len(), "{}", kem.name());
                let (ct, ss) = kem.encaps(&pk, &mut rng).unwrap();
                assert_eq!(ct.len(), kem.ciphertext_len(), "{}", kem.name());
                assert_eq!(kem.decaps(sk.as_bytes(), &ct).unwrap(), ss, "{}", kem.name());
            }
        }
    }

    #[test]
    fn ml_kem_sizes() {
        let mut rng = ChaCha20Rng::from_seed([2; 32]);
        let (pk, _) = MlKem768.keygen(&mut rng).unwrap();
        assert_eq!(pk.len(), 1184);
        let (pk, _) = MlKem512.keygen(&mut rng).unwrap();
        let (ct, ss) = MlKem512.encaps(&pk, &mut rng).unwrap();
        assert_eq!((ct.len(), ss.len()), (768, 32));
    }

    #[test]
    fn ml_kem_implicit_rejection_returns_other_secret() {
        let mut rng = ChaCha20Rng::from_seed([3; 32]);
        let (pk, sk) = MlKem768.keygen(&mut rng).unwrap();
        let (mut ct, ss) = MlKem768.encaps(&pk, &mut rng).unwrap();
        ct[10] ^= 1;
        let other = MlKem768.decaps(sk.as_bytes(), &ct).unwrap();
        assert_ne!(other, ss);
    }

    #[test]
    fn test_kem_explicit_rejection() {
        let mut rng = ChaCha20Rng::from_seed([4; 32]);
        let (pk, sk) = TestKem32.keygen(&mut rng).unwrap();
        let (ct, _) = TestKem32.encaps(&pk, &mut rng).unwrap();
        for i in [0, 31, 32, 63] {
            let mut bad = ct.clone();
            bad[i] ^= 0x80;
            assert_eq!(TestKem32.decaps(sk.as_bytes(), &bad), Err(SuiteError::DecapsFailure("TestKEM-32")));
        }
    }

    #[test]
    fn p521_rejects_off_curve_points() {
        let mut rng = ChaCha20Rng::from_seed([5; 32]);
        let (mut pk, _) = EcdhP521.keygen(&mut rng).unwrap();
        pk[40] ^= 1;
        assert!(matches!(EcdhP521.encaps(&pk, &mut rng), Err(SuiteError::MalformedPublicKey(_))));
    }
}
