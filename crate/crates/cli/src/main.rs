//! `covchan`: drives the covert channel against a simulated chain kept in a
//! data directory.
//!
//! Every command prints one result line (`key=value` pairs, or a JSON object
//! with `--json`). Failures exit with status 1 and print the error class.

mod error;
mod store;

use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covchan_core::chain::ChainState;
use covchan_core::channel::{
    negotiate_recv, negotiate_send, receive_message, send_message, ChannelError, FeatureSource, FixedFeatures,
    FundingPolicy, Masquerader, Role, SessionState,
};
use covchan_core::crypto::{ecdh_chaincode, keypair_from_rng, point_to_hex, HashStream, KeyPair, Secp256k1};
use covchan_core::eval::{evaluate_blackbox, mix_datasets, read_feature_set, write_feature_set, Label, LabeledRow};
use covchan_core::hd::{addr_from_pk, Address, ExtendedPrivateKey};
use covchan_core::masquerade::{
    expected_capacity, fit_fee_model, fit_synth_model, generate_corpus, ingest_corpus, read_capacity_table,
    read_corpus_csv, sample_features, write_corpus_csv, Filters, GeneratorConfig, ModelBundle, SynthConfig,
    TxFeatureRecord, DEFAULT_INTERVALS,
};
use rand::Rng;
use serde_json::{json, Map, Value};

use error::CliError;
use store::{read_json, write_atomic, write_json, ChainLock, SessionFile, WalletFile, NETWORK};

#[derive(Debug, Parser)]
#[command(name = "covchan", version, about = "Covert channel over a simulated UTXO chain")]
struct Cli {
    /// Directory holding the chain, wallet, session and model files.
    #[arg(long, env = "COVCHAN_DATA_DIR", default_value = "covchan-data", global = true)]
    data_dir: PathBuf,
    /// Chain file [default: <data-dir>/chain.bin]
    #[arg(long, global = true)]
    chain: Option<PathBuf>,
    /// Wallet file [default: <data-dir>/wallet.json]
    #[arg(long, global = true)]
    wallet: Option<PathBuf>,
    /// Session file [default: <data-dir>/session.json]
    #[arg(long, global = true)]
    session: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the result as a JSON object.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a wallet with a fresh key.
    Keygen {
        #[arg(long)]
        force: bool,
    },
    /// Mint an output to an address.
    Faucet { addr: Address, sats: u64 },
    /// Move the mempool into a new block.
    Mine,
    /// Spend two wallet outputs with a kleptographic signature pair.
    NegotiateSend {
        /// Receiver public key, compressed hex.
        #[arg(long)]
        peer: String,
        /// Recipient of the first spend [default: a fresh address]
        #[arg(long)]
        charlie: Option<Address>,
        /// Recipient of the second spend [default: a fresh address]
        #[arg(long)]
        dave: Option<Address>,
        /// Fee of each spend in satoshi.
        #[arg(long, default_value_t = 1_000)]
        fee: u64,
    },
    /// Recover the sender key from the chain and open a receiving session.
    NegotiateRecv {
        /// Sender public key, compressed hex.
        #[arg(long)]
        peer: String,
    },
    /// Send a file over the negotiated session.
    Send {
        file: PathBuf,
        /// Model bundle to draw transaction shapes from; fixed shapes otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Mine a block after each covert transaction.
        #[arg(long)]
        mine: bool,
    },
    /// Read the next message from the negotiated session.
    Recv {
        /// Write the message here instead of printing it as hex.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export every non-faucet transaction as a corpus CSV.
    CorpusExport {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit amount and fee models to a corpus CSV.
    Fit {
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_INTERVALS)]
        intervals: usize,
    },
    /// Sample synthetic feature records from a model bundle.
    Synth {
        n: usize,
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a real/fake mix and score the clustering against the labels.
    EvalBlackbox {
        real: PathBuf,
        fake: PathBuf,
        /// Covert share of the mix.
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
    },
    /// Expected bits and fee per covert transaction from an input-count table.
    Capacity { table: PathBuf },
    /// Write a synthetic corpus CSV.
    GenCorpus {
        #[arg(long, default_value_t = 100_000)]
        records: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One result line.
#[derive(Default)]
struct Report(Map<String, Value>);

impl Report {
    fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.into(), value.into());
        self
    }

    fn render(&self, as_json: bool) -> String {
        if as_json {
            return Value::Object(self.0.clone()).to_string();
        }
        self.0
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

struct Ctx {
    data_dir: PathBuf,
    chain: PathBuf,
    wallet: PathBuf,
    session: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn new(cli: &Cli) -> Self {
        let d = &cli.data_dir;
        Ctx {
            data_dir: d.clone(),
            chain: cli.chain.clone().unwrap_or_else(|| d.join("chain.bin")),
            wallet: cli.wallet.clone().unwrap_or_else(|| d.join("wallet.json")),
            session: cli.session.clone().unwrap_or_else(|| d.join("session.json")),
            seed: cli.seed,
        }
    }

    fn rng(&self, label: &str) -> HashStream {
        match self.seed {
            Some(s) => HashStream::from_u64(s).derive(label, 0),
            None => HashStream::from_optional_seed(None),
        }
    }

    fn in_data(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.data_dir.join(name))
    }

    /// A missing chain file is an empty chain.
    fn load_chain(&self) -> Result<ChainState, CliError> {
        if self.chain.exists() {
            Ok(ChainState::load(&self.chain)?)
        } else {
            Ok(ChainState::new(NETWORK))
        }
    }

    fn save_chain(&self, chain: &ChainState) -> Result<(), CliError> {
        write_atomic(&self.chain, &chain.to_bytes())
    }

    fn load_wallet(&self, path: &Path) -> Result<WalletFile, CliError> {
        if !path.exists() {
            return Err(CliError::WalletMissing(path.display().to_string()));
        }
        read_json(path)
    }

    fn load_session(&self, role: Role) -> Result<SessionFile, CliError> {
        if !self.session.exists() {
            return Err(CliError::SessionMissing(self.session.display().to_string()));
        }
        let s: SessionFile = read_json(&self.session)?;
        if s.role != role {
            return Err(ChannelError::WrongRole.into());
        }
        Ok(s)
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let ctx = Ctx::new(cli);
    match &cli.command {
        Command::Keygen { force } => {
            if ctx.wallet.exists() && !force {
                return Err(CliError::WalletExists(ctx.wallet.display().to_string()));
            }
            let mut rng = ctx.rng("keygen");
            let kp: KeyPair = keypair_from_rng(&mut rng);
            let wallet = WalletFile::new(&kp, rng.gen());
            write_json(&ctx.wallet, &wallet)?;
            Ok(Report::default()
                .with("address", addr_from_pk(&kp.pk, NETWORK).to_string())
                .with("pubkey", point_to_hex(&kp.pk))
                .with("wallet", ctx.wallet.display().to_string()))
        }
        Command::Faucet { addr, sats } => {
            if addr.network != NETWORK {
                return Err(CliError::Usage("faucet only pays testnet addresses".into()));
            }
            let _lock = ChainLock::acquire(&ctx.chain)?;
            let mut chain = ctx.load_chain()?;
            let op = chain.faucet_fund(addr, *sats)?;
            ctx.save_chain(&chain)?;
            Ok(Report::default().with("outpoint", op.to_string()).with("value", *sats))
        }
        Command::Mine => {
            let _lock = ChainLock::acquire(&ctx.chain)?;
            let mut chain = ctx.load_chain()?;
            let block = chain.mine_block();
            ctx.save_chain(&chain)?;
            Ok(Report::default()
                .with("height", block.height)
                .with("txs", block.txids.len()))
        }
        Command::NegotiateSend {
            peer,
            charlie,
            dave,
            fee,
        } => {
            let wallet = ctx.load_wallet(&ctx.wallet)?;
            let alice = wallet.keypair()?;
            let peer_pk = covchan_core::crypto::point_from_hex(peer)?;
            let mut rng = ctx.rng("negotiate-send");
            let mut fresh = || addr_from_pk(&keypair_from_rng::<Secp256k1, _>(&mut rng).pk, NETWORK);
            let to_c = charlie.unwrap_or_else(&mut fresh);
            let to_d = dave.unwrap_or_else(&mut fresh);

            let _lock = ChainLock::acquire(&ctx.chain)?;
            let mut chain = ctx.load_chain()?;
            let mut coins = chain.utxos(&wallet.address()?);
            if coins.len() < 2 {
                return Err(CliError::NotEnoughFunding(coins.len()));
            }
            coins.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut rng = ctx.rng("klepto");
            let res = negotiate_send(
                &alice.sk,
                &peer_pk,
                &to_c,
                &to_d,
                &mut chain,
                [coins[0].0, coins[1].0],
                [*fee, *fee],
                &mut rng,
            )?;
            ctx.save_chain(&chain)?;
            write_json(
                &ctx.session,
                &SessionFile {
                    role: Role::Sender,
                    wallet: ctx.wallet.clone(),
                    index_last: 0,
                    peer_pubkey: point_to_hex(&peer_pk),
                },
            )?;
            Ok(Report::default()
                .with("txid1", res.txid1.to_string())
                .with("txid2", res.txid2.to_string()))
        }
        Command::NegotiateRecv { peer } => {
            let wallet = ctx.load_wallet(&ctx.wallet)?;
            let bob = wallet.keypair()?;
            let peer_pk = covchan_core::crypto::point_from_hex(peer)?;
            let chain = ctx.load_chain()?;
            let res = negotiate_recv(&bob.sk, &peer_pk, &chain)?;
            write_json(
                &ctx.session,
                &SessionFile {
                    role: Role::Receiver,
                    wallet: ctx.wallet.clone(),
                    index_last: 0,
                    peer_pubkey: point_to_hex(&peer_pk),
                },
            )?;
            Ok(Report::default()
                .with("txid1", res.txid1.to_string())
                .with("txid2", res.txid2.to_string())
                .with("sender", addr_from_pk(&peer_pk, NETWORK).to_string()))
        }
        Command::Send { file, model, mine } => {
            let mut sess = ctx.load_session(Role::Sender)?;
            let alice = ctx.load_wallet(&sess.wallet)?.keypair()?;
            let chaincode = ecdh_chaincode::<Secp256k1>(&alice.sk, &sess.peer()?)?;
            let mut state = SessionState {
                esk_ab: ExtendedPrivateKey::new(alice.sk, chaincode)?,
                index_last: sess.index_last,
                role: Role::Sender,
            };
            let mut message = Vec::new();
            open(file)?
                .read_to_end(&mut message)
                .map_err(|e| CliError::io(file, e))?;
            let bundle = match model {
                Some(p) => Some(load_bundle(p)?),
                None => None,
            };
            let mut fixed = FixedFeatures::default();
            let mut drawn;
            let source: &mut dyn FeatureSource = match &bundle {
                Some(b) => {
                    drawn = Masquerader::new(b, ctx.rng("features"));
                    &mut drawn
                }
                None => &mut fixed,
            };
            let policy = if *mine {
                FundingPolicy::FaucetAndMine
            } else {
                FundingPolicy::Faucet
            };

            let _lock = ChainLock::acquire(&ctx.chain)?;
            let mut chain = ctx.load_chain()?;
            let mut rng = ctx.rng("send");
            let result = send_message(&mut state, &message, &mut chain, source, policy, &mut rng);
            // Transactions already submitted stay on chain even when a later one fails.
            ctx.save_chain(&chain)?;
            sess.index_last = state.index_last;
            write_json(&ctx.session, &sess)?;
            let report = result?;
            Ok(Report::default()
                .with("bytes", message.len())
                .with("txs", report.txids.len())
                .with("segments", report.segments)
                .with("index", report.new_index))
        }
        Command::Recv { out } => {
            let mut sess = ctx.load_session(Role::Receiver)?;
            let bob = ctx.load_wallet(&sess.wallet)?.keypair()?;
            let chain = ctx.load_chain()?;
            let neg = negotiate_recv(&bob.sk, &sess.peer()?, &chain)?;
            let mut state = SessionState {
                esk_ab: neg.esk_ab,
                index_last: sess.index_last,
                role: Role::Receiver,
            };
            let got = receive_message(&mut state, &chain)?;
            let mut report = Report::default()
                .with("bytes", got.message.len())
                .with("segments", got.segments)
                .with("index", got.new_index);
            match out {
                Some(p) => {
                    write_atomic(p, &got.message)?;
                    report = report.with("out", p.display().to_string());
                }
                None => report = report.with("message", hex::encode(&got.message)),
            }
            sess.index_last = state.index_last;
            write_json(&ctx.session, &sess)?;
            Ok(report)
        }
        Command::CorpusExport { out } => {
            let chain = ctx.load_chain()?;
            let rows = chain.export_corpus();
            let path = ctx.in_data(out, "corpus.csv");
            let mut buf = Vec::new();
            write_corpus_csv(&mut buf, &rows)?;
            write_atomic(&path, &buf)?;
            Ok(Report::default()
                .with("rows", rows.len())
                .with("out", path.display().to_string()))
        }
        Command::Fit { corpus, out, intervals } => {
            if *intervals == 0 {
                return Err(CliError::Usage("--intervals must be positive".into()));
            }
            let rows = read_corpus_csv(open(corpus)?)?;
            let c = ingest_corpus(rows, &corpus.display().to_string(), Filters::default())?;
            let config = SynthConfig {
                seed: ctx.seed.unwrap_or(0),
                ..SynthConfig::default()
            };
            let bundle = ModelBundle::new(
                fit_synth_model(&c.records, config)?,
                fit_fee_model(&c.records, *intervals),
            );
            let path = ctx.in_data(out, "model.json");
            write_atomic(&path, bundle.to_json().as_bytes())?;
            Ok(Report::default()
                .with("records", c.len())
                .with("dropped", c.dropped_coinbase + c.dropped_oversize + c.dropped_invalid)
                .with("fee_buckets", bundle.fees.buckets.len())
                .with("out", path.display().to_string()))
        }
        Command::Synth { n, seed, model, out } => {
            let bundle = load_bundle(&ctx.in_data(model, "model.json"))?;
            let recs = sample_features(&bundle.synth, &bundle.fees, *n, *seed)?;
            let rows: Vec<LabeledRow> = recs.iter().map(|r| LabeledRow::new(r, Label::Covert)).collect();
            let path = ctx.in_data(out, "fake.csv");
            let mut buf = Vec::new();
            write_feature_set(&mut buf, &rows)?;
            write_atomic(&path, &buf)?;
            Ok(Report::default()
                .with("rows", rows.len())
                .with("out", path.display().to_string()))
        }
        Command::EvalBlackbox { real, fake, ratio } => {
            if !(*ratio > 0.0 && *ratio < 1.0) {
                return Err(CliError::Usage("--ratio must be in (0, 1)".into()));
            }
            let real = read_records(real)?;
            let fake = read_records(fake)?;
            let seed = ctx.seed.unwrap_or(0);
            let m = evaluate_blackbox(&mix_datasets(&real, &fake, *ratio, seed), seed)?;
            Ok(Report::default()
                .with("ari", m.ari)
                .with("nmi", m.nmi)
                .with("n_real", m.n_real)
                .with("n_covert", m.n_covert))
        }
        Command::Capacity { table } => {
            let (w, f) = read_capacity_table(open(table)?)?;
            let c = expected_capacity(&w, &f)?;
            Ok(Report::default()
                .with("bits", c.bits_per_tx.round() as u64)
                .with("fee", c.fee_per_tx.round() as u64)
                .with("mean_inputs", json!((c.mean_inputs * 1e3).round() / 1e3))
                .with("bits_exact", c.bits_per_tx)
                .with("fee_exact", c.fee_per_tx))
        }
        Command::GenCorpus { records, noise, out } => {
            if !(0.0..1.0).contains(noise) {
                return Err(CliError::Usage("--noise must be in [0, 1)".into()));
            }
            let rows = generate_corpus(&GeneratorConfig {
                records: *records,
                seed: ctx.seed.unwrap_or(0),
                noise: *noise,
            });
            let path = ctx.in_data(out, "corpus.csv");
            let mut buf = Vec::new();
            write_corpus_csv(&mut buf, &rows)?;
            write_atomic(&path, &buf)?;
            Ok(Report::default()
                .with("rows", rows.len())
                .with("out", path.display().to_string()))
        }
    }
}

fn load_bundle(path: &Path) -> Result<ModelBundle, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(ModelBundle::from_json(&text)?)
}

/// Feature records from either a corpus CSV (filtered as in `fit`) or a
/// labeled feature-set CSV (labels ignored), told apart by the header.
fn read_records(path: &Path) -> Result<Vec<TxFeatureRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.starts_with("txid,") {
        let rows = read_corpus_csv(text.as_bytes())?;
        Ok(ingest_corpus(rows, &path.display().to_string(), Filters::default())?.records)
    } else {
        Ok(read_feature_set(text.as_bytes())?
            .iter()
            .map(LabeledRow::record)
            .collect())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            println!("{}", report.render(cli.json));
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                println!("{}", json!({ "error": e.class(), "message": e.to_string() }));
            } else {
                eprintln!("error={} message={e}", e.class());
            }
            ExitCode::FAILURE
        }
    }
}
