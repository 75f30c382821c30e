use covi_core::config::TransportConfig;
use covi_core::risk::{ContactHandle, RiskLevel};
use covi_core::rng::{Purpose, StreamKey};
use covi_core::transport::{
    derive_mailbox, exchange_tokens, onion_encrypt, peel, Address, CanaryVerdict, ContactKeys, CryptoMode, DepositRecord, MixBehavior, MixKeys,
    MixNetwork, MixServer, NetId, Outgoing, Peeled, PhoneTransport, RiskUpdateMessage, Role, Token, SECONDS_PER_DAY,
};
use rand::{Rng, RngCore};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn lvl(v: u8) -> RiskLevel {
    RiskLevel::new(v).unwrap()
}

#[test]
fn token_agreement_on_ten_thousand_exchanges() {
    let mut rng = StreamKey::new(1, Purpose::Pseudonym).rng();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..10_000 {
        let a = ContactKeys::generate(&mut rng);
        let b = ContactKeys::generate(&mut rng);
        let (pa, pb) = exchange_tokens(&a, &b).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(pa.outgoing(Role::Initiator), pb.incoming(Role::Responder));
        assert_ne!(pa.token_ab, pa.token_ba);
        assert!(seen.insert(pa.token_ab));
    }
}

#[test]
fn eavesdropper_cannot_forge_updates() {
    let mut rng = StreamKey::new(2, Purpose::Pseudonym).rng();
    let a = ContactKeys::generate(&mut rng);
    let b = ContactKeys::generate(&mut rng);
    let (pa, pb) = exchange_tokens(&a, &b).unwrap();
    let mut bob = PhoneTransport::new(NetId(2), CryptoMode::Real);
    bob.add_contact(ContactHandle(1), 0, &pb, Role::Responder);
    let (address, _) = derive_mailbox(&pa.outgoing(Role::Initiator));
    let publics = [a.public_bytes(), b.public_bytes()];
    let mut forged = 0;
    for i in 0..1000u32 {
        // Guesses built from what was broadcast, plus pure noise.
        let mut guess = [0u8; 32];
        if i % 2 == 0 {
            rng.fill_bytes(&mut guess);
        } else {
            for (j, g) in guess.iter_mut().enumerate() {
                *g = publics[0][j] ^ publics[1][j] ^ (i as u8);
            }
        }
        let msg = RiskUpdateMessage { day_of_encounter: 0, new_level: lvl(15), prior_level: lvl(0), counter: i + 1 };
        let ct = msg.seal(&Token(guess), CryptoMode::Real);
        forged += usize::from(bob.deliver_raw(&address, &ct).is_some());
    }
    assert_eq!(forged, 0);
    assert_eq!(bob.rejected_auth, 1000);
}

#[test]
fn mailbox_derivation_avalanche_and_separation() {
    let mut rng = StreamKey::new(3, Purpose::Pseudonym).rng();
    let mut flipped = 0u64;
    for _ in 0..1000 {
        let mut t = [0u8; 32];
        rng.fill_bytes(&mut t);
        let (a1, _) = derive_mailbox(&Token(t));
        let bit = rng.gen_range(0..256);
        t[bit / 8] ^= 1 << (bit % 8);
        let (a2, _) = derive_mailbox(&Token(t));
        flipped += a1.0.iter().zip(a2.0).map(|(x, y)| u64::from((x ^ y).count_ones())).sum::<u64>();
    }
    let share = flipped as f64 / (1000.0 * 256.0);
    assert!((share - 0.5).abs() < 0.01, "flipped share {share}");
    for _ in 0..1_000_000 {
        let mut t = [0u8; 32];
        rng.fill_bytes(&mut t);
        let (address, key) = derive_mailbox(&Token(t));
        assert_ne!(address.0, key.0);
    }
}

#[test]
fn onion_round_trip_for_several_chain_lengths() {
    let mut rng = StreamKey::new(4, Purpose::Mix).rng();
    for n in [1usize, 2, 3, 5] {
        let keys: Vec<MixKeys> = (0..n).map(|_| MixKeys::generate(&mut rng)).collect();
        let pubs: Vec<[u8; 32]> = keys.iter().map(MixKeys::public_bytes).collect();
        let record = DepositRecord { address: Address([n as u8; 32]), ciphertext: vec![7; 40] };
        for mode in [CryptoMode::Real, CryptoMode::Null] {
            let mut env = onion_encrypt(&record, &pubs, mode, &mut rng).unwrap();
            if n > 1 {
                assert!(peel(&env, 2, &keys[1], mode).is_err(), "out-of-order peel at N={n}");
            }
            for (i, k) in keys.iter().enumerate() {
                match peel(&env, i as u8 + 1, k, mode).unwrap() {
                    Peeled::Forward(next) => {
                        assert!(i + 1 < n);
                        env = next;
                    }
                    Peeled::Deposit(r) => {
                        assert_eq!(i + 1, n);
                        assert_eq!(r, record);
                    }
                }
            }
        }
    }
    assert!(onion_encrypt(&DepositRecord { address: Address([0; 32]), ciphertext: vec![] }, &[], CryptoMode::Null, &mut rng).is_err());
}

// Input position x output position counts over 10^4 batches of 8.
#[test]
fn mix_output_order_is_a_uniform_permutation() {
    let k = 8usize;
    let batches = 10_000;
    let key = StreamKey::new(5, Purpose::Mix);
    let keys = MixKeys::generate(&mut key.with(1).rng());
    let pubs = [keys.public_bytes()];
    let mut server = MixServer::new(1, NetId(1000), keys, CryptoMode::Null, k, key.with(2).rng());
    let mut wrap_rng = key.with(3).rng();
    let mut counts = vec![vec![0u64; k]; k];
    for _ in 0..batches {
        for marker in 0..k {
            let rec = DepositRecord { address: Address([marker as u8; 32]), ciphertext: vec![marker as u8] };
            server.receive(onion_encrypt(&rec, &pubs, CryptoMode::Null, &mut wrap_rng).unwrap(), NetId(marker as u64), 0);
        }
        let out = server.process();
        assert_eq!(out.len(), k);
        for (pos, o) in out.iter().enumerate() {
            let Outgoing::Deposit(r) = o else { panic!("single hop deposits") };
            counts[r.ciphertext[0] as usize][pos] += 1;
        }
    }
    let expected = batches as f64 / k as f64;
    let sigma = (batches as f64 * (1.0 / k as f64) * (1.0 - 1.0 / k as f64)).sqrt();
    let mut chi2 = 0.0;
    for row in &counts {
        for &c in row {
            assert!((c as f64 - expected).abs() < 4.0 * sigma, "cell count {c}");
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
    }
    let df = ((k - 1) * (k - 1)) as f64;
    let p = ChiSquared::new(df).unwrap().sf(chi2);
    assert!(p > 0.001, "chi2 {chi2} p {p}");
}

/// Asymptotic Kolmogorov p-value for a one-sample D statistic.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = f64::from(j);
        p += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

fn ks_uniform(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

fn phones_with_contacts(mode: CryptoMode, contacts: usize, day: u32, seed: u64) -> (PhoneTransport, PhoneTransport) {
    let mut rng = StreamKey::new(seed, Purpose::Pseudonym).rng();
    let mut alice = PhoneTransport::new(NetId(1), mode);
    let mut bob = PhoneTransport::new(NetId(2), mode);
    for i in 0..contacts {
        let (pa, pb) = exchange_tokens(&ContactKeys::generate(&mut rng), &ContactKeys::generate(&mut rng)).unwrap();
        alice.add_contact(ContactHandle(i as u64), day, &pa, Role::Initiator);
        bob.add_contact(ContactHandle(i as u64), day, &pb, Role::Responder);
    }
    (alice, bob)
}

#[test]
fn dispatch_delays_are_uniform_over_a_day() {
    let cfg = TransportConfig { null_crypto: true, ..TransportConfig::default() };
    let mut net = MixNetwork::new(&cfg, 6);
    let (mut alice, _) = phones_with_contacts(CryptoMode::Null, 10_000, 1, 6);
    let mut rng = StreamKey::new(6, Purpose::MessageDelay).rng();
    let mut delays = alice.send_risk_update(&mut net, 1, lvl(5), lvl(1), 2 * SECONDS_PER_DAY, &mut rng).unwrap();
    assert_eq!(delays.len(), 10_000);
    assert!(delays.iter().all(|d| (0.0..1.0).contains(d)));
    let n = delays.len();
    let d = ks_uniform(&mut delays);
    let p = ks_p_value(d, n);
    assert!(p > 0.01, "KS D {d} p {p}");
}

#[test]
fn updates_arrive_within_a_day_and_replays_are_rejected() {
    let cfg = TransportConfig { null_crypto: false, ..TransportConfig::default() };
    let mut net = MixNetwork::new(&cfg, 7);
    let (mut alice, mut bob) = phones_with_contacts(CryptoMode::Real, 64, 3, 7);
    let mut rng = StreamKey::new(7, Purpose::MessageDelay).rng();
    let sent_at = 4 * SECONDS_PER_DAY;
    alice.send_risk_update(&mut net, 3, lvl(12), lvl(2), sent_at, &mut rng).unwrap();
    net.run_until(sent_at + SECONDS_PER_DAY + 3600);
    let got = bob.fetch(&net.mailbox, 6);
    assert_eq!(got.len(), 64);
    assert!(got.iter().all(|u| u.day == 3 && u.message.new_level == lvl(12) && u.message.prior_level == lvl(2)));

    // Every stored ciphertext offered again is refused.
    let mut replayed = 0;
    let stored: Vec<(Address, Vec<u8>)> = net.mailbox.scan().map(|(a, s)| (*a, s.ciphertext.clone())).collect();
    assert_eq!(stored.len(), 64);
    for (address, ct) in &stored {
        replayed += 1;
        assert!(bob.deliver_raw(address, ct).is_none());
    }
    assert_eq!(bob.replays_rejected(), replayed);
}

#[test]
fn canaries_under_honest_and_dropping_chains() {
    let cfg = TransportConfig::default();
    for attacked in [false, true] {
        let mut net = MixNetwork::new(&cfg, 8);
        if attacked {
            net.set_first_behavior(MixBehavior::KeepOnly(NetId(9999)));
        }
        let mut rng = StreamKey::new(8, Purpose::MessageDelay).rng();
        let mut phones: Vec<PhoneTransport> = (0..100).map(|i| PhoneTransport::new(NetId(i), CryptoMode::Real)).collect();
        for p in &mut phones {
            p.send_canary(&mut net, 0, &mut rng).unwrap();
        }
        // Ordinary traffic completes the last batch.
        let (mut filler, _) = phones_with_contacts(CryptoMode::Real, 4, 0, 9);
        filler.send_risk_update(&mut net, 0, lvl(1), lvl(0), 0, &mut rng).unwrap();
        net.run_until(3 * SECONDS_PER_DAY);
        let verdicts: Vec<CanaryVerdict> = phones.iter_mut().flat_map(|p| p.canary_check(&net.mailbox, 3 * SECONDS_PER_DAY)).collect();
        let alarms: u64 = phones.iter().map(|p| p.alarms).sum();
        if attacked {
            assert!(verdicts.iter().all(|v| *v == CanaryVerdict::Lost));
            assert_eq!(alarms, 100);
        } else {
            assert!(verdicts.iter().all(|v| *v == CanaryVerdict::Delivered));
            assert_eq!(alarms, 0);
        }
    }
}

#[test]
fn every_deposit_is_mixed_with_a_full_batch() {
    let cfg = TransportConfig { null_crypto: true, ..TransportConfig::default() };
    let mut net = MixNetwork::new(&cfg, 10);
    let (mut alice, _) = phones_with_contacts(CryptoMode::Null, 8 * 5 + 3, 1, 10);
    let mut rng = StreamKey::new(10, Purpose::MessageDelay).rng();
    alice.send_risk_update(&mut net, 1, lvl(3), lvl(1), SECONDS_PER_DAY, &mut rng).unwrap();
    net.run_until(5 * SECONDS_PER_DAY);
    assert_eq!(net.mailbox.stored_count(), 40);
    assert_eq!(net.in_flight(), 3);
    for s in net.servers() {
        assert_eq!(s.batches, 5);
    }
}
