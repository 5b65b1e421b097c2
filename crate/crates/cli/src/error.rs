use covchan_core::chain::ChainError;
use covchan_core::channel::ChannelError;
use covchan_core::crypto::CryptoError;
use covchan_core::eval::EvalError;
use covchan_core::hd::HdError;
use covchan_core::masquerade::MasqueradeError;
use covchan_core::tx::TxError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
    #[error("chain file is locked by another process ({0}); remove it if stale")]
    ChainLocked(String),
    #[error("wallet {0} already exists")]
    WalletExists(String),
    #[error("no wallet at {0}; run keygen first")]
    WalletMissing(String),
    #[error("no session at {0}; negotiate first")]
    SessionMissing(String),
    #[error("sender wallet holds {0} spendable outputs, negotiation needs two")]
    NotEnoughFunding(usize),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
}

macro_rules! via_channel {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Channel(e.into())
            }
        }
    )*};
}

via_channel!(ChainError, CryptoError, HdError, TxError, MasqueradeError);

impl CliError {
    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Name printed on failure; stable across releases.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Channel(ChannelError::Masquerade(m)) => match m {
                MasqueradeError::EmptyAfterFilter => "EmptyAfterFilter",
                MasqueradeError::SchemaError(_) => "SchemaError",
                MasqueradeError::WeightSumError(_) => "WeightSumError",
                MasqueradeError::Io(_) => "IoError",
                _ => ChannelError::Masquerade(m.clone()).class(),
            },
            CliError::Channel(e) => e.class(),
            CliError::Eval(e) => match e {
                EvalError::LengthMismatch(..) => "LengthMismatch",
                EvalError::DegenerateData(_) => "DegenerateData",
                EvalError::SchemaError(_) => "SchemaError",
                EvalError::Io(_) => "IoError",
            },
            CliError::Usage(_) => "UsageError",
            CliError::ChainLocked(_) => "ChainLocked",
            CliError::WalletExists(_) => "WalletExists",
            CliError::WalletMissing(_) => "WalletMissing",
            CliError::SessionMissing(_) => "SessionMissing",
            CliError::NotEnoughFunding(_) => "NotEnoughFunding",
            CliError::Io { .. } => "IoError",
            CliError::Json { .. } => "SchemaError",
        }
    }
}
