use std::collections::HashSet;

use covchan_core::chain::{ChainError, ChainState};
use covchan_core::channel::{
    keystream, msg_decode, msg_encode, negotiate_recv, negotiate_send, receive_message, send_message, ChannelError,
    FeatureSource, FixedFeatures, FundingPolicy, Masquerader, Role, SessionState,
};
use covchan_core::crypto::{
    ecdh_chaincode, keypair_generate, klepto_sign_pair, scalar_to_bytes, CryptoError, HashStream, KeyPair, Secp256k1,
};
use covchan_core::hd::{addr_from_pk, addr_from_sk, child_at, ExtendedPrivateKey, Network};
use covchan_core::masquerade::{
    fit_fee_model, fit_synth_model, generate_corpus, ingest_corpus, Filters, GeneratorConfig, ModelBundle, SynthConfig,
    TxFeatureRecord,
};
use covchan_core::tx::{attach_signatures, build_raw_tx, extract_signatures, p2pkh_script, sighash_all};
use rand::RngCore;
use sha2::{Digest, Sha512};

struct Parties {
    alice: KeyPair,
    bob: KeyPair,
    charlie: KeyPair,
    dave: KeyPair,
}

fn parties() -> Parties {
    Parties {
        alice: keypair_generate(Some([0xa1; 32])),
        bob: keypair_generate(Some([0xb0; 32])),
        charlie: keypair_generate(Some([0xc4; 32])),
        dave: keypair_generate(Some([0xd5; 32])),
    }
}

fn addr(kp: &KeyPair) -> covchan_core::hd::Address {
    addr_from_pk(&kp.pk, Network::Testnet)
}

fn negotiated(chain: &mut ChainState) -> (SessionState, SessionState) {
    let p = parties();
    let f1 = chain.faucet_fund(&addr(&p.alice), 100_000).unwrap();
    let f2 = chain.faucet_fund(&addr(&p.alice), 80_000).unwrap();
    let mut rng = HashStream::from_u64(1);
    let sent = negotiate_send(
        &p.alice.sk,
        &p.bob.pk,
        &addr(&p.charlie),
        &addr(&p.dave),
        chain,
        [f1, f2],
        [2_000, 1_500],
        &mut rng,
    )
    .unwrap();
    let got = negotiate_recv(&p.bob.sk, &p.alice.pk, chain).unwrap();
    assert_eq!(got.esk_ab, sent.esk_ab);
    (
        SessionState::new(sent.esk_ab, Role::Sender),
        SessionState::new(got.esk_ab, Role::Receiver),
    )
}

#[test]
fn negotiation_shares_the_extended_key() {
    let p = parties();
    let mut chain = ChainState::new(Network::Testnet);
    let (alice, _) = negotiated(&mut chain);
    assert_eq!(alice.esk_ab.sk, p.alice.sk);
    // Chaincode is SHA256 of the shared x-coordinate, from either side.
    assert_eq!(
        alice.esk_ab.chaincode,
        ecdh_chaincode::<Secp256k1>(&p.bob.sk, &p.alice.pk).unwrap()
    );
    // Charlie and Dave received the spends, less the fees.
    assert_eq!(chain.balance(&addr(&p.charlie)), 98_000);
    assert_eq!(chain.balance(&addr(&p.dave)), 78_500);
    assert_eq!(chain.balance(&addr(&p.alice)), 0);
}

#[test]
fn negotiation_found_in_either_order_among_noise() {
    let p = parties();
    let mut chain = ChainState::new(Network::Testnet);
    let a = addr(&p.alice);
    let fs: Vec<_> = (0..3).map(|k| chain.faucet_fund(&a, 50_000 + k).unwrap()).collect();

    // An ordinary spend first, then the pair submitted second-before-first.
    let mut rng = HashStream::from_u64(5);
    let honest = build_raw_tx(&[(fs[2], 50_002)], &[(addr(&p.dave), 40_000)]).unwrap();
    let d = sighash_all(&honest, 0, &p2pkh_script(&a.hash160)).unwrap();
    let k = covchan_core::crypto::random_scalar::<Secp256k1, _>(&mut rng);
    let sig = covchan_core::crypto::ecdsa_sign_with_nonce::<Secp256k1>(&p.alice.sk, &d, &k).unwrap();
    chain
        .submit_tx(attach_signatures(&honest, &[(sig, p.alice.pk)]).unwrap())
        .unwrap();

    let raw1 = build_raw_tx(&[(fs[0], 50_000)], &[(addr(&p.charlie), 49_000)]).unwrap();
    let raw2 = build_raw_tx(&[(fs[1], 50_001)], &[(addr(&p.dave), 49_000)]).unwrap();
    let d1 = sighash_all(&raw1, 0, &p2pkh_script(&a.hash160)).unwrap();
    let d2 = sighash_all(&raw2, 0, &p2pkh_script(&a.hash160)).unwrap();
    let (s1, s2) = klepto_sign_pair::<Secp256k1, _>(&p.alice.sk, &p.bob.pk, &d1, &d2, &mut rng).unwrap();
    let id2 = chain
        .submit_tx(attach_signatures(&raw2, &[(s2, p.alice.pk)]).unwrap())
        .unwrap();
    let id1 = chain
        .submit_tx(attach_signatures(&raw1, &[(s1, p.alice.pk)]).unwrap())
        .unwrap();

    let got = negotiate_recv(&p.bob.sk, &p.alice.pk, &chain).unwrap();
    assert_eq!(got.esk_ab.sk, p.alice.sk);
    assert_eq!((got.txid1, got.txid2), (id1, id2));

    // Someone else's key finds nothing.
    let eve: KeyPair = keypair_generate(Some([0xee; 32]));
    assert_eq!(
        negotiate_recv(&eve.sk, &p.alice.pk, &chain),
        Err(ChannelError::Crypto(CryptoError::ExtractionFailed))
    );
}

#[test]
fn negotiation_needs_two_spends() {
    let p = parties();
    let chain = ChainState::new(Network::Testnet);
    assert_eq!(
        negotiate_recv(&p.bob.sk, &p.alice.pk, &chain),
        Err(ChannelError::NegotiationNotFound)
    );
}

#[test]
fn negotiation_is_atomic() {
    let p = parties();
    let mut chain = ChainState::new(Network::Testnet);
    let f1 = chain.faucet_fund(&addr(&p.alice), 10_000).unwrap();
    let f2 = chain.faucet_fund(&addr(&p.alice), 1_000).unwrap();
    let before = chain.mempool().len();
    let mut rng = HashStream::from_u64(2);
    let err = negotiate_send(
        &p.alice.sk,
        &p.bob.pk,
        &addr(&p.charlie),
        &addr(&p.dave),
        &mut chain,
        [f1, f2],
        [500, 1_000],
        &mut rng,
    )
    .unwrap_err();
    assert_eq!(err.class(), "FeeNonPositive");
    assert_eq!(chain.mempool().len(), before);
    assert_eq!(chain.balance(&addr(&p.alice)), 11_000);

    let foreign = chain.faucet_fund(&addr(&p.dave), 10_000).unwrap();
    let err = negotiate_send(
        &p.alice.sk,
        &p.bob.pk,
        &addr(&p.charlie),
        &addr(&p.dave),
        &mut chain,
        [f1, foreign],
        [500, 500],
        &mut rng,
    )
    .unwrap_err();
    assert_eq!(err, ChannelError::FundingNotOwned(foreign));
    assert_eq!(chain.balance(&addr(&p.alice)), 11_000);
}

#[test]
fn keystream_and_frame_layout() {
    let esk = ExtendedPrivateKey::new(keypair_generate::<Secp256k1>(Some([1; 32])).sk, [0x5a; 32]).unwrap();
    let mut h = Sha512::new();
    h.update(scalar_to_bytes(&esk.sk));
    h.update([0x5a; 32]);
    h.update([0, 0, 0, 7]);
    let full = h.finalize();
    assert_eq!(keystream(&esk, 7).as_slice(), &full[..32]);

    let msg = b"attack at dawn, bring snacks and more snacks";
    let segs = msg_encode(&esk, msg, 7).unwrap();
    assert_eq!(segs.len(), 2);
    let mut frame = [0u8; 64];
    frame[..4].copy_from_slice(&(msg.len() as u32).to_be_bytes());
    frame[4..4 + msg.len()].copy_from_slice(msg);
    for (k, seg) in segs.segments.iter().enumerate() {
        let ks = keystream(&esk, 7 + k as u32);
        let plain: Vec<u8> = seg.iter().zip(ks).map(|(a, b)| a ^ b).collect();
        assert_eq!(plain, frame[32 * k..32 * (k + 1)]);
    }
    assert_eq!(msg_decode(&esk, &segs).unwrap(), msg);

    // Nonzero padding is rejected.
    let mut bad = segs.clone();
    bad.segments[1][31] ^= 1;
    assert!(matches!(msg_decode(&esk, &bad), Err(ChannelError::FrameCorrupt { .. })));
    // A frame longer than its length prefix announces is rejected too.
    let mut long = segs.clone();
    long.segments.push(msg_encode(&esk, b"", 9).unwrap().segments[0]);
    assert!(matches!(
        msg_decode(&esk, &long),
        Err(ChannelError::FrameCorrupt { .. })
    ));
}

fn round_trip(len: usize, features: &mut dyn FeatureSource) {
    let mut chain = ChainState::new(Network::Testnet);
    let (mut alice, mut bob) = negotiated(&mut chain);
    let mut rng = HashStream::from_u64(len as u64);
    let mut msg = vec![0u8; len];
    rng.fill_bytes(&mut msg);
    let report = send_message(&mut alice, &msg, &mut chain, features, FundingPolicy::Faucet, &mut rng).unwrap();
    assert_eq!(report.inputs_per_tx.iter().sum::<u32>() as usize, report.segments);
    assert_eq!(report.new_index as usize, report.segments);
    let out = receive_message(&mut bob, &chain).unwrap();
    assert_eq!(out.message, msg, "length {len}");
    assert_eq!(bob.index_last, alice.index_last);
}

#[test]
fn round_trips_across_frame_boundaries() {
    for len in [0, 1, 27, 28, 29, 31, 32, 33, 100] {
        round_trip(len, &mut FixedFeatures::default());
    }
    round_trip(
        200,
        &mut FixedFeatures {
            input_cnt: 3,
            output_cnt: 1,
            inputs_amount: 90_001,
            fee: 1_000,
        },
    );
}

fn bundle() -> ModelBundle {
    let rows = generate_corpus(&GeneratorConfig {
        records: 5_000,
        seed: 4,
        noise: 0.0,
    });
    let recs = ingest_corpus(rows, "gen", Filters::default()).unwrap().records;
    ModelBundle::new(
        fit_synth_model(&recs, SynthConfig::default()).unwrap(),
        fit_fee_model(&recs, 5),
    )
}

#[test]
fn masqueraded_ten_kib_round_trip() {
    let b = bundle();
    let mut chain = ChainState::new(Network::Testnet);
    let (mut alice, mut bob) = negotiated(&mut chain);
    let mut rng = HashStream::from_u64(77);
    let mut msg = vec![0u8; 10_240];
    rng.fill_bytes(&mut msg);
    let mut source = Masquerader::new(&b, HashStream::from_u64(78));
    let report = send_message(
        &mut alice,
        &msg,
        &mut chain,
        &mut source,
        FundingPolicy::Faucet,
        &mut rng,
    )
    .unwrap();
    assert_eq!(report.segments, 321);

    // Every covert transaction carries the shape the model drew.
    for (id, c) in report.txids.iter().zip(&report.inputs_per_tx) {
        let s = chain.get(id).unwrap();
        assert_eq!(s.tx.inputs.len() as u32, *c);
        let rec = TxFeatureRecord {
            input_cnt: s.tx.inputs.len() as u32,
            output_cnt: s.tx.outputs.len() as u32,
            fee: s.fee(),
            inputs_amount: s.input_total,
            outputs_amount: s.tx.output_total(),
        };
        rec.validate().unwrap();
        assert!(b
            .fees
            .cell(rec.input_cnt, rec.output_cnt)
            .any(|fb| fb.pmf.support.contains(&rec.fee)));
    }
    let out = receive_message(&mut bob, &chain).unwrap();
    assert_eq!(out.message, msg);
    assert_eq!(out.segments, 321);
}

#[test]
fn consecutive_messages_use_fresh_addresses() {
    let mut chain = ChainState::new(Network::Testnet);
    let (mut alice, mut bob) = negotiated(&mut chain);
    let mut rng = HashStream::from_u64(3);
    let mut f = FixedFeatures::default();
    for msg in [&b"first"[..], &[9u8; 70][..], b""] {
        send_message(
            &mut alice,
            msg,
            &mut chain,
            &mut f,
            FundingPolicy::FaucetAndMine,
            &mut rng,
        )
        .unwrap();
        assert_eq!(receive_message(&mut bob, &chain).unwrap().message, msg);
    }
    // Nothing further to read.
    assert_eq!(receive_message(&mut bob, &chain).unwrap().segments, 0);

    let mut seen = HashSet::new();
    for index in 0..alice.index_last {
        let child = child_at(&alice.esk_ab, index).unwrap();
        let a = addr_from_sk(&child.sk, Network::Testnet);
        assert!(seen.insert(a));
        // Funded once, spent once.
        assert_eq!(chain.txids_for_addr(&a).len(), 2);
        assert_eq!(chain.spends_from_addr(&a).len(), 1);
    }
    assert_eq!(alice.index_last, 1 + 3 + 1);
}

/// Fails on the `fail_at`-th request.
struct FailingSource {
    inner: FixedFeatures,
    calls: usize,
    fail_at: usize,
}

impl FeatureSource for FailingSource {
    fn next_features(&mut self, max_inputs: u32) -> Result<TxFeatureRecord, ChannelError> {
        self.calls += 1;
        if self.calls == self.fail_at {
            return Err(ChainError::Malformed("injected".into()).into());
        }
        self.inner.next_features(max_inputs)
    }

    fn fee_for(&mut self, i: u32, j: u32, amount: u64) -> Result<u64, ChannelError> {
        self.inner.fee_for(i, j, amount)
    }
}

#[test]
fn interrupted_send_leaves_a_gap_the_receiver_reports() {
    let mut chain = ChainState::new(Network::Testnet);
    let (mut alice, mut bob) = negotiated(&mut chain);
    let mut rng = HashStream::from_u64(9);
    let mut src = FailingSource {
        inner: FixedFeatures::default(),
        calls: 0,
        fail_at: 3,
    };
    let err = send_message(
        &mut alice,
        &[1u8; 100],
        &mut chain,
        &mut src,
        FundingPolicy::Faucet,
        &mut rng,
    )
    .unwrap_err();
    match &err {
        ChannelError::Interrupted {
            completed_index, txids, ..
        } => {
            assert_eq!((*completed_index, txids.len()), (2, 2));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.class(), "MalformedTransaction");
    assert_eq!(alice.index_last, 2);

    let e = receive_message(&mut bob, &chain).unwrap_err();
    assert_eq!(
        e,
        ChannelError::FrameCorrupt {
            expected: 100,
            available: 60
        }
    );
    assert_eq!(bob.index_last, 0);
}

#[test]
fn signatures_carry_segments_as_nonces() {
    let mut chain = ChainState::new(Network::Testnet);
    let (mut alice, _) = negotiated(&mut chain);
    let mut rng = HashStream::from_u64(1);
    let report = send_message(
        &mut alice,
        b"nonce",
        &mut chain,
        &mut FixedFeatures::default(),
        FundingPolicy::Faucet,
        &mut rng,
    )
    .unwrap();
    let tx = &chain.get(&report.txids[0]).unwrap().tx;
    let (sig, pk) = extract_signatures(tx).unwrap()[0];
    let child = child_at(&alice.esk_ab, 0).unwrap();
    assert_eq!(pk, child.public_key());
    let seg = msg_encode(&alice.esk_ab, b"nonce", 0).unwrap().segments[0];
    // r = x(kG) mod n for k = the whitened segment.
    let k = covchan_core::crypto::scalar_from_bytes(&seg).unwrap();
    let expected = covchan_core::crypto::ecdsa_sign_with_nonce::<Secp256k1>(
        &child.sk,
        &sighash_all(tx, 0, &p2pkh_script(&addr_from_sk(&child.sk, Network::Testnet).hash160)).unwrap(),
        &k,
    )
    .unwrap();
    assert_eq!(sig, expected);
}
