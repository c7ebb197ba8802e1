//! Command-line options shared by `handshake` and `demo-macsec`, and the
//! code that turns them into session configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use vmuckle::handshake::{
    AuthConfig, AuthMode, QkdHandlePolicy, Role, SessionConfig, INITIATOR_ID, RESPONDER_ID,
};
use vmuckle::pki::{CertChain, HybridCertificate, Identity};
use vmuckle::qkd::{FileProvider, QkdProvider, Simulator};
use vmuckle::suite::{AlgorithmId, CipherSuite};
use vmuckle::Secret;

/// Hex of "vmuckle-demo-link". Anyone can read it, so it is for demos only.
pub const DEMO_QKD_SEED: &str = "766d75636b6c652d64656d6f2d6c696e6b";

#[derive(Args, Debug, Clone)]
pub struct SuiteArgs {
    /// Post-quantum KEM.
    #[arg(long, default_value = "ML-KEM-768")]
    pub kem_pq: String,
    /// Classical KEM, or `none`.
    #[arg(long, default_value = "ECDH-P521")]
    pub kem_c: String,
    /// Signature scheme of the leaf certificates and handshake signatures.
    #[arg(long, default_value = "ML-DSA-65")]
    pub sig: String,
    /// Accept TestKEM-32 and TestDSS. They offer no security.
    #[arg(long)]
    pub allow_test_only: bool,
}

impl SuiteArgs {
    pub fn suite(&self) -> Result<CipherSuite> {
        let suite = CipherSuite::new(&self.kem_c, &self.kem_pq, &self.sig)?;
        if !self.allow_test_only {
            for id in [suite.kem_c, suite.kem_pq, suite.dss] {
                ensure!(!id.is_test_only(), "{} is a test-only algorithm; pass --allow-test-only to use it", id.name());
            }
        }
        Ok(suite)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthKind {
    Psk,
    Cert,
    Both,
}

impl From<AuthKind> for AuthMode {
    fn from(k: AuthKind) -> Self {
        match k {
            AuthKind::Psk => AuthMode::PskOnly,
            AuthKind::Cert => AuthMode::DssOnly,
            AuthKind::Both => AuthMode::Both,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct AuthArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub auth: AuthKind,
    /// File holding the pre-shared key as hex.
    #[arg(long)]
    pub psk_file: Option<PathBuf>,
    /// Own certificate chain (`pki gen-leaf` output).
    #[arg(long)]
    pub cert_chain: Option<PathBuf>,
    /// Own key file (`pki gen-leaf` output).
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Trusted root certificate. Defaults to the root in --cert-chain.
    #[arg(long)]
    pub ca: Option<PathBuf>,
    /// Expected subject of the peer's certificate.
    #[arg(long)]
    pub peer_id: Option<String>,
}

pub fn read_psk(path: &Path) -> Result<Secret> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let psk = hex::decode(text.trim()).with_context(|| format!("{} does not hold a hex key", path.display()))?;
    ensure!(!psk.is_empty(), "{} holds an empty key", path.display());
    Ok(Secret::new(psk))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

impl AuthArgs {
    pub fn mode(&self) -> AuthMode {
        self.auth.into()
    }

    pub fn peer_id(&self, role: Role) -> String {
        self.peer_id.clone().unwrap_or_else(|| {
            match role {
                Role::Initiator => RESPONDER_ID,
                Role::Responder => INITIATOR_ID,
            }
            .to_owned()
        })
    }

    /// Loads everything the selected mode needs from files.
    pub fn load(&self) -> Result<AuthConfig> {
        let mode = self.mode();
        let mut auth = AuthConfig::default();
        if mode != AuthMode::PskOnly {
            let (Some(chain_path), Some(key_path)) = (&self.cert_chain, &self.key) else {
                bail!("--auth {:?} needs --cert-chain and --key", self.auth);
            };
            let chain = CertChain::from_file_bytes(&read(chain_path)?)
                .with_context(|| format!("parsing {}", chain_path.display()))?;
            let identity =
                Identity::from_file_bytes(&read(key_path)?).with_context(|| format!("parsing {}", key_path.display()))?;
            ensure!(
                identity.pq.public == chain.leaf.pk_pq_sig.key,
                "{} does not match the leaf certificate in {}",
                key_path.display(),
                chain_path.display()
            );
            let anchor = match &self.ca {
                Some(p) => HybridCertificate::from_file_bytes(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => chain.root.clone(),
            };
            auth = AuthConfig::certificate(chain, identity.pq.secret.clone(), anchor);
        }
        if mode != AuthMode::DssOnly {
            let Some(p) = &self.psk_file else {
                bail!("--auth {:?} needs --psk-file", self.auth);
            };
            auth = auth.with_psk(read_psk(p)?);
        }
        Ok(auth)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleKind {
    /// Key index = offset + stage number.
    Stage,
    /// Key index derived from both nonces.
    Nonce,
}

#[derive(Args, Debug, Clone)]
pub struct QkdArgs {
    /// `sim:<hex seed>` for the simulator or `file:<path>` for a hex key file.
    #[arg(long, default_value_t = format!("sim:{DEMO_QKD_SEED}"))]
    pub qkd_source: String,
    #[arg(long, default_value = "link-0")]
    pub qkd_stream: String,
    #[arg(long, value_enum, default_value = "stage")]
    pub qkd_handles: HandleKind,
    /// Added to the stage number with `--qkd-handles stage`.
    #[arg(long, default_value_t = 0)]
    pub qkd_offset: u64,
}

impl QkdArgs {
    pub fn provider(&self) -> Result<Arc<dyn QkdProvider>> {
        if let Some(seed) = self.qkd_source.strip_prefix("sim:") {
            let seed = hex::decode(seed).context("QKD simulator seed is not hex")?;
            Ok(Arc::new(Simulator::new(&seed, self.qkd_stream.clone())?))
        } else if let Some(path) = self.qkd_source.strip_prefix("file:") {
            Ok(Arc::new(FileProvider::new(path)?))
        } else {
            bail!("--qkd-source must start with sim: or file:")
        }
    }

    pub fn policy(&self) -> QkdHandlePolicy {
        match self.qkd_handles {
            HandleKind::Stage => QkdHandlePolicy::StageNumber { offset: self.qkd_offset },
            HandleKind::Nonce => QkdHandlePolicy::NonceDerived,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleArg {
    Initiator,
    Responder,
}

#[derive(Args, Debug, Clone)]
pub struct NetArgs {
    /// Defaults to responder with --listen and initiator with --connect.
    #[arg(long, value_enum)]
    pub role: Option<RoleArg>,
    /// Accept one TCP connection on this address.
    #[arg(long, conflicts_with = "connect")]
    pub listen: Option<String>,
    /// Connect to a listening peer.
    #[arg(long)]
    pub connect: Option<String>,
}

impl NetArgs {
    /// `None` when both parties run in this process.
    pub fn role(&self) -> Result<Option<Role>> {
        let implied = match (&self.listen, &self.connect) {
            (Some(_), _) => Some(Role::Responder),
            (_, Some(_)) => Some(Role::Initiator),
            _ => None,
        };
        let explicit = self.role.map(|r| match r {
            RoleArg::Initiator => Role::Initiator,
            RoleArg::Responder => Role::Responder,
        });
        match (explicit, implied) {
            (Some(_), None) => bail!("--role needs --listen or --connect"),
            (Some(r), Some(_)) => Ok(Some(r)),
            (None, i) => Ok(i),
        }
    }

    pub fn is_networked(&self) -> bool {
        self.listen.is_some() || self.connect.is_some()
    }
}

/// Configuration for one side of a networked run.
pub fn session_config(suite: &SuiteArgs, auth: &AuthArgs, qkd: &QkdArgs, role: Role) -> Result<SessionConfig> {
    let suite = suite.suite()?;
    let cfg = auth.load()?;
    if auth.mode() != AuthMode::PskOnly {
        let leaf_alg = cfg.local_cert_chain.as_ref().map(|c| c.leaf.pk_pq_sig.algorithm);
        if leaf_alg != Some(suite.dss) {
            bail!(
                "--sig {} does not match the leaf certificate key ({})",
                suite.dss.name(),
                leaf_alg.map_or("none", |a: AlgorithmId| a.name())
            );
        }
    }
    Ok(SessionConfig {
        suite,
        auth: cfg,
        peer_id: auth.peer_id(role),
        qkd: qkd.provider()?,
        qkd_stream: qkd.qkd_stream.clone(),
        qkd_handles: qkd.policy(),
        now: None,
    })
}
