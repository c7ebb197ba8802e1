//! `pki` subcommands: a two-level hybrid CA on disk.
//!
//! Files: `*.key` holds an identity (VMK1), `*.crt` one certificate (VMC1),
//! `*.chain` a leaf with its intermediate and root (VMCH).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use rand_core::CryptoRngCore;
use vmuckle::pki::{
    issue, unix_now, verify_chain, CertChain, HybridCertificate, Identity, Validity, CA_PQ_ALG, CERT_MAGIC,
    CHAIN_MAGIC, CLASSICAL_ALG, KEY_MAGIC,
};
use vmuckle::suite::AlgorithmId;

#[derive(Subcommand, Debug)]
pub enum PkiCommand {
    /// Self-signed root: writes OUT.key and OUT.crt.
    GenRoot(GenCa),
    /// Intermediate signed by a root: writes OUT.key and OUT.crt.
    GenIntermediate {
        #[command(flatten)]
        ca: GenCa,
        #[command(flatten)]
        parent: Parent,
    },
    /// End-entity key and chain: writes OUT.key and OUT.chain.
    GenLeaf {
        #[arg(long)]
        name: String,
        /// Post-quantum key of the leaf; must match `--sig` of the handshake.
        #[arg(long, default_value = "ML-DSA-65")]
        sig: String,
        #[arg(long, default_value_t = 365)]
        days: u64,
        #[command(flatten)]
        parent: Parent,
        /// Root certificate to include in the chain.
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_test_only: bool,
    },
    /// Print any key, certificate or chain file.
    Show { file: PathBuf },
    /// Verify a chain against a trusted root.
    Verify {
        #[arg(long)]
        chain: PathBuf,
        /// Trusted root. Defaults to the root inside the chain.
        #[arg(long)]
        ca: Option<PathBuf>,
        /// Leaf subject to insist on.
        #[arg(long)]
        name: Option<String>,
        /// Verification time in seconds since the epoch.
        #[arg(long)]
        now: Option<u64>,
    },
}

#[derive(Args, Debug)]
pub struct GenCa {
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value = CA_PQ_ALG)]
    pub pq: String,
    #[arg(long, default_value = CLASSICAL_ALG)]
    pub classical: String,
    #[arg(long, default_value_t = 3650)]
    pub days: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub allow_test_only: bool,
}

#[derive(Args, Debug)]
pub struct Parent {
    /// Issuer key file.
    #[arg(long)]
    pub issuer_key: PathBuf,
    /// Issuer certificate file.
    #[arg(long)]
    pub issuer_cert: PathBuf,
}

fn with_ext(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn signature_alg(name: &str, allow_test_only: bool) -> Result<AlgorithmId> {
    let id = AlgorithmId::signature(name)?;
    if id.is_test_only() && !allow_test_only {
        bail!("{name} is a test-only algorithm; pass --allow-test-only to use it");
    }
    Ok(id)
}

fn load_parent(p: &Parent) -> Result<(Identity, HybridCertificate)> {
    let id = Identity::from_file_bytes(&read(&p.issuer_key)?).context("issuer key")?;
    let cert = HybridCertificate::from_file_bytes(&read(&p.issuer_cert)?).context("issuer certificate")?;
    if id.pq.public != cert.pk_pq_sig.key || id.name != cert.subject {
        bail!("{} does not belong to {}", p.issuer_key.display(), p.issuer_cert.display());
    }
    Ok((id, cert))
}

fn gen_identity(g: &GenCa, rng: &mut dyn CryptoRngCore) -> Result<Identity> {
    let pq = signature_alg(&g.pq, g.allow_test_only)?;
    let cl = signature_alg(&g.classical, g.allow_test_only)?;
    Ok(Identity::generate(g.name.clone(), pq, cl, rng)?)
}

pub fn run(cmd: PkiCommand, rng: &mut dyn CryptoRngCore) -> Result<()> {
    let now = unix_now();
    match cmd {
        PkiCommand::GenRoot(g) => {
            let id = gen_identity(&g, rng)?;
            let cert = issue(&id.issuer(), &id.subject(), Validity::days_from(now, g.days))?;
            write(&with_ext(&g.out, "key"), &id.to_file_bytes())?;
            write(&with_ext(&g.out, "crt"), &cert.to_file_bytes())?;
        }
        PkiCommand::GenIntermediate { ca, parent } => {
            let (issuer, _) = load_parent(&parent)?;
            let id = gen_identity(&ca, rng)?;
            let cert = issue(&issuer.issuer(), &id.subject(), Validity::days_from(now, ca.days))?;
            write(&with_ext(&ca.out, "key"), &id.to_file_bytes())?;
            write(&with_ext(&ca.out, "crt"), &cert.to_file_bytes())?;
        }
        PkiCommand::GenLeaf { name, sig, days, parent, root, out, allow_test_only } => {
            let (issuer, intermediate) = load_parent(&parent)?;
            let root = HybridCertificate::from_file_bytes(&read(&root)?).context("root certificate")?;
            let pq = signature_alg(&sig, allow_test_only)?;
            let id = Identity::generate(name, pq, AlgorithmId::signature(CLASSICAL_ALG)?, rng)?;
            let leaf = issue(&issuer.issuer(), &id.subject(), Validity::days_from(now, days))?;
            let chain = CertChain { leaf, intermediate, root };
            write(&with_ext(&out, "key"), &id.to_file_bytes())?;
            write(&with_ext(&out, "chain"), &chain.to_file_bytes())?;
        }
        PkiCommand::Show { file } => print!("{}", show(&read(&file)?)?),
        PkiCommand::Verify { chain, ca, name, now: at } => {
            let chain = CertChain::from_file_bytes(&read(&chain)?).context("chain")?;
            let anchor = match ca {
                Some(p) => HybridCertificate::from_file_bytes(&read(&p)?).context("trusted root")?,
                None => chain.root.clone(),
            };
            verify_chain(&chain, &anchor, at.unwrap_or(now))?;
            if let Some(n) = name {
                if chain.leaf.subject != n {
                    bail!("leaf names {:?}, expected {n:?}", chain.leaf.subject);
                }
            }
            println!("chain OK: {} <- {} <- {}", chain.leaf.subject, chain.intermediate.subject, chain.root.subject);
        }
    }
    Ok(())
}

fn describe_cert(role: &str, c: &HybridCertificate) -> String {
    format!(
        "{role}: subject={:?} issuer={:?}\n  valid {}..{}\n  keys {} ({} B) + {} ({} B)\n  signed with {} + {}\n",
        c.subject,
        c.issuer,
        c.validity.not_before,
        c.validity.not_after,
        c.pk_pq_sig.algorithm,
        c.pk_pq_sig.key.len(),
        c.pk_classical_sig.algorithm,
        c.pk_classical_sig.key.len(),
        c.issuer_pq_alg,
        c.issuer_classical_alg,
    )
}

/// Human-readable summary of a key, certificate or chain file.
pub fn show(bytes: &[u8]) -> Result<String> {
    let magic: [u8; 4] = bytes.get(..4).and_then(|m| m.try_into().ok()).context("file too short")?;
    Ok(match magic {
        KEY_MAGIC => {
            let id = Identity::from_file_bytes(bytes)?;
            format!(
                "identity {:?}\n  {} public key {} B\n  {} public key {} B\n",
                id.name,
                id.pq.algorithm,
                id.pq.public.len(),
                id.classical.algorithm,
                id.classical.public.len()
            )
        }
        CERT_MAGIC => describe_cert("certificate", &HybridCertificate::from_file_bytes(bytes)?),
        CHAIN_MAGIC => {
            let c = CertChain::from_file_bytes(bytes)?;
            [("leaf", &c.leaf), ("intermediate", &c.intermediate), ("root", &c.root)]
                .iter()
                .map(|(r, c)| describe_cert(r, c))
                .collect()
        }
        _ => bail!("unrecognised file (magic {:02x?})", magic),
    })
}
