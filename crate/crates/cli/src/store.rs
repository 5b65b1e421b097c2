//! On-disk state: wallet and session documents, the chain lock and atomic
//! file replacement.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use covchan_core::channel::Role;
use covchan_core::crypto::{KeyPair, Point};
use covchan_core::hd::{addr_from_pk, wif_decode, wif_encode, Address, Network};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The only network tag wallets may carry.
pub const NETWORK_TAG: &str = "sim-testnet";
pub const NETWORK: Network = Network::Testnet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletFile {
    pub network: String,
    pub wif: String,
    /// Hex of the wallet's own 32-byte chaincode.
    pub chaincode: String,
    pub next_index: u32,
}

impl WalletFile {
    pub fn new(kp: &KeyPair, chaincode: [u8; 32]) -> Self {
        WalletFile {
            network: NETWORK_TAG.into(),
            wif: wif_encode(&kp.sk, NETWORK),
            chaincode: hex::encode(chaincode),
            next_index: 0,
        }
    }

    pub fn keypair(&self) -> Result<KeyPair, CliError> {
        if self.network != NETWORK_TAG {
            return Err(CliError::Usage(format!("unsupported network {:?}", self.network)));
        }
        let (sk, net) = wif_decode(&self.wif)?;
        if net != NETWORK {
            return Err(CliError::Usage("wallet key is not a testnet key".into()));
        }
        Ok(KeyPair::from_secret(sk)?)
    }

    pub fn address(&self) -> Result<Address, CliError> {
        Ok(addr_from_pk(&self.keypair()?.pk, NETWORK))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFile {
    pub role: Role,
    /// Wallet the session was negotiated with.
    pub wallet: PathBuf,
    pub index_last: u32,
    /// Counterparty public key, compressed hex.
    pub peer_pubkey: String,
}

impl SessionFile {
    pub fn peer(&self) -> Result<Point, CliError> {
        Ok(covchan_core::crypto::point_from_hex(&self.peer_pubkey)?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes to a temporary sibling, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Exclusive hold on the chain file, released on drop.
#[derive(Debug)]
pub struct ChainLock {
    path: PathBuf,
}

impl ChainLock {
    pub fn acquire(chain: &Path) -> Result<Self, CliError> {
        let mut name = chain.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(ChainLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::ChainLocked(path.display().to_string()))
            }
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for ChainLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
