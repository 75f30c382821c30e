//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Built with `harness = false` so the lines always print.

use std::collections::BTreeMap;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use covi_core::aggregation::{
    lump_small_zones, Aggregator, ContactSummary, DiagnosisStatus, FlowMapPacket, HeatMapPacket, Pseudonym, PseudonymStore, PseudonymizedRecord,
    Revocation, ANONYMITY_FLOOR,
};
use covi_core::config::{DiseaseConfig, TestConfig, TransportConfig, WorldConfig};
use covi_core::epi::testing::draw_outcome;
use covi_core::epi::{infectiousness, sample_disease_course, TestOutcome, ViralLoadCurve};
use covi_core::metrics::{bin_masses, compare, mean_post_rt, reference_scores, run_scenario};
use covi_core::risk::{ContactHandle, Quantizer, RiskLevel};
use covi_core::rng::{Purpose, SimRng, StreamKey};
use covi_core::sim::{Scenario, ScenarioKind};
use covi_core::transport::{
    exchange_tokens, onion_encrypt, peel, Address, CanaryVerdict, ContactKeys, CryptoMode, DepositRecord, MixBehavior, MixKeys, MixNetwork,
    MixServer, NetId, Outgoing, Peeled, PhoneTransport, Role, SECONDS_PER_DAY,
};
use covi_core::world::{build_world, detect_encounters, Conditions, Sex, ZoneId, ZoneInfo};
use covi_core::SimConfig;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

// Pinned tolerances.
const RT_RANGE: (f64, f64) = (2.0, 2.6);
const RT_SEEDS: std::ops::Range<u64> = 0..20;
const MAX_RUN: Duration = Duration::from_secs(60);
const COMPARE_SEEDS: std::ops::Range<u64> = 0..10;
const MOBILITY_GAP: f64 = 0.02;
const SEVERITY_SAMPLES: usize = 100_000;
const ASYMPTOMATIC: (f64, f64) = (0.40, 0.01);
const FATAL: (f64, f64) = (0.002, 0.0005);
const REALLY_SICK: (f64, f64) = (0.15, 0.01);
const FNR: (f64, f64) = (0.10, 0.01);
const RAMP_TOL: f64 = 1e-12;
const CHI2_P: f64 = 0.001;
const KS_P: f64 = 0.01;
const BIN_MASS: (f64, f64) = (0.8 / 16.0, 1.2 / 16.0);
const STREAMS: usize = 1000;

type Check = Result<String, String>;

fn within(x: f64, (target, tol): (f64, f64)) -> bool {
    (x - target).abs() <= tol
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_calibration() -> Check {
    let cfg = SimConfig::default();
    let mut rts = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in RT_SEEDS {
        let t = Instant::now();
        let run = run_scenario(&cfg, Scenario::unmitigated(), seed).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        rts.push(mean_post_rt(&run.daily, cfg.scenario.intervention_day).ok_or("no closed cohort")?);
    }
    let rt = rts.iter().sum::<f64>() / rts.len() as f64;
    verdict(
        (RT_RANGE.0..=RT_RANGE.1).contains(&rt) && slowest < MAX_RUN,
        format!("pop {} x {} days, seeds {RT_SEEDS:?}: mean R_t {rt:.3} (want {RT_RANGE:?}), slowest run {:.2} s", cfg.world.population, cfg.world.n_days, slowest.as_secs_f64()),
    )
}

fn c2_ordering() -> Check {
    let cfg = SimConfig::default();
    let seeds: Vec<u64> = COMPARE_SEEDS.collect();
    let cmp = compare(&cfg, &ScenarioKind::COMPARED, &seeds).map_err(|e| e.to_string())?;
    let gap = cmp.equalization.max_gap();
    let get = |k: ScenarioKind| cmp.summaries.iter().find(|s| s.scenario == k).unwrap();
    let cases: Vec<String> = cmp.summaries.iter().map(|s| format!("{} {:.1}", s.scenario, s.mean_final_cases)).collect();
    let (app, b2) = (get(ScenarioKind::RiskApp).mean_post_rt, get(ScenarioKind::BinaryTracing { order: 2 }).mean_post_rt);
    let rt_ok = matches!((app, b2), (Some(a), Some(b)) if a < b);
    verdict(
        gap <= MOBILITY_GAP && cmp.ordering_holds == Some(true) && rt_ok,
        format!(
            "seeds {COMPARE_SEEDS:?}, max mobility gap {:.2}%: [{}]; R_t risk_app {:.3} vs binary(2) {:.3}",
            100.0 * gap,
            cases.join(", "),
            app.unwrap_or(f64::NAN),
            b2.unwrap_or(f64::NAN)
        ),
    )
}

fn c3_disease_constants() -> Check {
    let cfg = DiseaseConfig::default();
    let mut agent = build_world(&WorldConfig::default()).unwrap().agents[0].clone();
    agent.age = 35;
    agent.preexisting_conditions = Conditions::default();
    let mut rng = StreamKey::new(101, Purpose::DiseaseCourse).rng();
    let (mut asym, mut sick, mut fatal) = (0, 0, 0);
    for _ in 0..SEVERITY_SAMPLES {
        let c = sample_disease_course(&agent, &cfg, &mut rng);
        asym += usize::from(c.asymptomatic);
        sick += usize::from(c.really_sick);
        fatal += usize::from(c.fatal);
    }
    let f = |k: usize| k as f64 / SEVERITY_SAMPLES as f64;

    let tc = TestConfig::default();
    let mut rng = StreamKey::new(102, Purpose::TestResult).rng();
    let fp = (0..SEVERITY_SAMPLES).filter(|_| draw_outcome(false, &tc, rng.gen()) == TestOutcome::Positive).count();
    let fneg = (0..SEVERITY_SAMPLES).filter(|_| draw_outcome(true, &tc, rng.gen()) == TestOutcome::Negative).count();

    let mut rng = StreamKey::new(103, Purpose::Symptoms).rng();
    let ratio_exact = (0..10_000).all(|_| {
        let v: f64 = rng.gen_range(0.0..1.5);
        infectiousness(v, true, false, &cfg) == 0.1 * infectiousness(v, false, false, &cfg)
    });
    verdict(
        within(f(asym), ASYMPTOMATIC) && within(f(fatal), FATAL) && within(f(sick), REALLY_SICK) && fp == 0 && within(f(fneg), FNR) && ratio_exact,
        format!(
            "asymptomatic {:.4}, fatal {:.5}, really sick {:.4}, FP {fp}, FNR {:.4}, asymptomatic ratio exact: {ratio_exact}",
            f(asym),
            f(fatal),
            f(sick),
            f(fneg)
        ),
    )
}

fn c4_viral_load() -> Check {
    let mut rng = StreamKey::new(104, Purpose::DiseaseCourse).rng();
    let mut worst_jump = 0.0f64;
    let mut bad = 0;
    for _ in 0..200 {
        let c = ViralLoadCurve::<f64>::new(rng.gen_range(0.5..6.0), rng.gen_range(0.5..6.0), rng.gen_range(0.05..1.0), rng.gen_range(0.5..10.0), rng.gen_range(0.5..10.0))
            .unwrap();
        let step = 0.01;
        let bound = c.max_slope() * step + 1e-12;
        let mut prev = c.load(0.0);
        let mut t = step;
        while t < c.end() + 2.0 {
            let v = c.load(t);
            worst_jump = worst_jump.max((v - prev).abs() / bound);
            if (t <= c.incubation_days || t >= c.end()) && v != 0.0 {
                bad += 1;
            }
            prev = v;
            t += step;
        }
    }
    let ramp = ViralLoadCurve::<f64>::new(2.5, 2.5, 0.8, 5.0, 5.0).unwrap();
    let mid = ramp.viral_load(3.75).unwrap();
    verdict(
        worst_jump <= 1.0 && bad == 0 && (mid - 0.4).abs() <= RAMP_TOL,
        format!("largest step / slope bound {worst_jump:.3}, nonzero outside support {bad}, ramp midpoint {mid}"),
    )
}

fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let p: f64 = (1..=100).map(|j| f64::from(j)).map(|j| 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp()).sum();
    p.clamp(0.0, 1.0)
}

fn phones(mode: CryptoMode, contacts: usize, day: u32, rng: &mut SimRng) -> (PhoneTransport, PhoneTransport) {
    let mut a = PhoneTransport::new(NetId(1), mode);
    let mut b = PhoneTransport::new(NetId(2), mode);
    for i in 0..contacts {
        let (pa, pb) = exchange_tokens(&ContactKeys::generate(rng), &ContactKeys::generate(rng)).unwrap();
        a.add_contact(ContactHandle(i as u64), day, &pa, Role::Initiator);
        b.add_contact(ContactHandle(i as u64), day, &pb, Role::Responder);
    }
    (a, b)
}

fn lvl(v: u8) -> RiskLevel {
    RiskLevel::new(v).unwrap()
}

fn c5_protocol() -> Check {
    let mut rng = StreamKey::new(105, Purpose::Pseudonym).rng();
    let agreed = (0..10_000)
        .filter(|_| {
            let (pa, pb) = exchange_tokens(&ContactKeys::generate(&mut rng), &ContactKeys::generate(&mut rng)).unwrap();
            pa == pb && pa.outgoing(Role::Initiator) == pb.incoming(Role::Responder)
        })
        .count();

    let mut onion_ok = true;
    for n in [1usize, 2, 3, 5] {
        let keys: Vec<MixKeys> = (0..n).map(|_| MixKeys::generate(&mut rng)).collect();
        let pubs: Vec<[u8; 32]> = keys.iter().map(MixKeys::public_bytes).collect();
        let record = DepositRecord { address: Address([n as u8; 32]), ciphertext: vec![9; 33] };
        let mut env = onion_encrypt(&record, &pubs, CryptoMode::Real, &mut rng).unwrap();
        for (i, k) in keys.iter().enumerate() {
            match peel(&env, i as u8 + 1, k, CryptoMode::Real) {
                Ok(Peeled::Forward(next)) if i + 1 < n => env = next,
                Ok(Peeled::Deposit(r)) if i + 1 == n => onion_ok &= r == record,
                _ => onion_ok = false,
            }
        }
    }

    let k = 8usize;
    let key = StreamKey::new(106, Purpose::Mix);
    let mk = MixKeys::generate(&mut key.with(1).rng());
    let pubs = [mk.public_bytes()];
    let mut server = MixServer::new(1, NetId(1000), mk, CryptoMode::Null, k, key.with(2).rng());
    let mut counts = vec![vec![0u64; k]; k];
    for _ in 0..10_000 {
        for m in 0..k {
            let rec = DepositRecord { address: Address([m as u8; 32]), ciphertext: vec![m as u8] };
            server.receive(onion_encrypt(&rec, &pubs, CryptoMode::Null, &mut rng).unwrap(), NetId(m as u64), 0);
        }
        for (pos, o) in server.process().iter().enumerate() {
            if let Outgoing::Deposit(r) = o {
                counts[r.ciphertext[0] as usize][pos] += 1;
            }
        }
    }
    let e = 10_000.0 / k as f64;
    let chi2: f64 = counts.iter().flatten().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let chi2_p = ChiSquared::new(((k - 1) * (k - 1)) as f64).unwrap().sf(chi2);

    let cfg = TransportConfig { null_crypto: false, ..TransportConfig::default() };
    let mut net = MixNetwork::new(&cfg, 107);
    let (mut alice, mut bob) = phones(CryptoMode::Real, 64, 3, &mut rng);
    let mut delay_rng = StreamKey::new(107, Purpose::MessageDelay).rng();
    alice.send_risk_update(&mut net, 3, lvl(12), lvl(2), 4 * SECONDS_PER_DAY, &mut delay_rng).unwrap();
    net.run_until(6 * SECONDS_PER_DAY);
    let delivered = bob.fetch(&net.mailbox, 6).len();
    let stored: Vec<(Address, Vec<u8>)> = net.mailbox.scan().map(|(a, s)| (*a, s.ciphertext.clone())).collect();
    let replays_refused = stored.iter().filter(|(a, ct)| bob.deliver_raw(a, ct).is_none()).count();

    let mut net = MixNetwork::new(&TransportConfig { null_crypto: true, ..TransportConfig::default() }, 108);
    let (mut many, _) = phones(CryptoMode::Null, 10_000, 1, &mut rng);
    let mut delays = many.send_risk_update(&mut net, 1, lvl(5), lvl(1), 2 * SECONDS_PER_DAY, &mut delay_rng).unwrap();
    delays.sort_by(f64::total_cmp);
    let n = delays.len() as f64;
    let d = delays.iter().enumerate().map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs())).fold(0.0, f64::max);
    let ks_p = ks_p_value(d, delays.len());

    let mut alarms = [0u64; 2];
    for (slot, attacked) in [false, true].into_iter().enumerate() {
        let mut net = MixNetwork::new(&TransportConfig::default(), 109);
        if attacked {
            net.set_first_behavior(MixBehavior::KeepOnly(NetId(9999)));
        }
        let mut canaries: Vec<PhoneTransport> = (0..100).map(|i| PhoneTransport::new(NetId(i), CryptoMode::Real)).collect();
        for p in &mut canaries {
            p.send_canary(&mut net, 0, &mut delay_rng).unwrap();
        }
        let (mut filler, _) = phones(CryptoMode::Real, 4, 0, &mut rng);
        filler.send_risk_update(&mut net, 0, lvl(1), lvl(0), 0, &mut delay_rng).unwrap();
        net.run_until(3 * SECONDS_PER_DAY);
        let lost = canaries.iter_mut().flat_map(|p| p.canary_check(&net.mailbox, 3 * SECONDS_PER_DAY)).filter(|v| *v == CanaryVerdict::Lost).count();
        alarms[slot] = canaries.iter().map(|p| p.alarms).sum();
        if !attacked && lost > 0 {
            alarms[slot] += 1000;
        }
    }
    verdict(
        agreed == 10_000 && onion_ok && chi2_p > CHI2_P && delivered == 64 && replays_refused == stored.len() && ks_p > KS_P && alarms[0] == 0 && alarms[1] > 0,
        format!(
            "DH {agreed}/10000, onion N=1,2,3,5 ok: {onion_ok}, mix chi2 p {chi2_p:.3}, replays refused {replays_refused}/{}, delay KS p {ks_p:.3}, canary alarms honest {} / attacked {}",
            stored.len(),
            alarms[0],
            alarms[1]
        ),
    )
}

fn c6_quantizer() -> Check {
    let q = Quantizer::shipped();
    let scores = reference_scores(&SimConfig::default(), &q, &[0, 1, 2, 3, 4]).map_err(|e| e.to_string())?;
    let masses = bin_masses(&q, &scores);
    let (lo, hi) = masses.iter().fold((1.0f64, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    let mut rng = StreamKey::new(110, Purpose::WorldBuild).rng();
    let violations = (0..1_000_000)
        .filter(|_| {
            let (a, b): (f64, f64) = (rng.gen::<f64>().powi(3), rng.gen::<f64>().powi(3));
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            q.level_of(x) > q.level_of(y)
        })
        .count();
    verdict(
        lo >= BIN_MASS.0 && hi <= BIN_MASS.1 && violations == 0,
        format!("{} fixture scores, bin mass range [{lo:.4}, {hi:.4}] (want [{:.4}, {:.4}]), monotonicity violations {violations}/1000000", scores.len(), BIN_MASS.0, BIN_MASS.1),
    )
}

fn record(p: Pseudonym, day: u32) -> PseudonymizedRecord {
    PseudonymizedRecord {
        pseudonym: p,
        age_band: 2,
        sex: Sex::Male,
        conditions: Conditions::default(),
        symptoms_by_day: BTreeMap::new(),
        diagnosis_status: DiagnosisStatus::Unknown,
        contacts: ContactSummary::default(),
        location_visits: BTreeMap::new(),
        received_day: day,
    }
}

fn c7_aggregation() -> Check {
    let mut rng = StreamKey::new(111, Purpose::Policy).rng();
    let mut small_rows = 0;
    let mut accounting = 0;
    for _ in 0..STREAMS {
        let nz = rng.gen_range(1..8u32);
        let days = rng.gen_range(1..4u32);
        let zones: Vec<ZoneInfo> = (0..nz).map(|i| ZoneInfo { id: ZoneId(i), population: rng.gen_range(1..400) }).collect();
        let mut agg = Aggregator::new(lump_small_zones(&zones));
        for _ in 0..rng.gen_range(0..2500) {
            let old = rng.gen_bool(0.2).then(|| lvl(rng.gen_range(0..16)));
            let (zone, day, level) = (ZoneId(rng.gen_range(0..nz)), rng.gen_range(0..days), lvl(rng.gen_range(0..16)));
            if rng.gen() {
                agg.ingest_heat(HeatMapPacket::new(zone, day, level, rng.gen_range(0..16), old).unwrap());
            } else {
                agg.ingest_flow(FlowMapPacket { home_zone_id: zone, day, contact_zone_id: ZoneId(rng.gen_range(0..nz)), received_level: level, old_received_level: old });
            }
        }
        for day in 0..days {
            let heat = agg.emit_heatmap(day);
            small_rows += heat.rows.iter().filter(|r| r.count < ANONYMITY_FLOOR).count();
            small_rows += agg.emit_flowmap(day).rows.iter().filter(|r| r.count < ANONYMITY_FLOOR).count();
            accounting += usize::from(heat.rows.iter().map(|r| r.count).sum::<u64>() + heat.suppressed != agg.total_heat_count(day));
        }
    }

    let big = || Aggregator::new(lump_small_zones(&[ZoneInfo { id: ZoneId(0), population: 500 }, ZoneInfo { id: ZoneId(1), population: 500 }]));
    let pad = |agg: &mut Aggregator| {
        for i in 0..150u8 {
            agg.ingest_heat(HeatMapPacket::new(ZoneId(0), 2, lvl(i % 16), i % 7, None).unwrap());
            agg.ingest_flow(FlowMapPacket { home_zone_id: ZoneId(0), day: 2, contact_zone_id: ZoneId(1), received_level: lvl(i % 16), old_received_level: None });
        }
    };
    let mut mismatched = 0;
    for l in 0..16 {
        for m in 0..16 {
            let (mut a, mut b) = (big(), big());
            pad(&mut a);
            pad(&mut b);
            a.ingest_heat(HeatMapPacket::new(ZoneId(0), 2, lvl(l), 3, None).unwrap());
            a.ingest_heat(HeatMapPacket::new(ZoneId(0), 2, lvl(m), 3, Some(lvl(l))).unwrap());
            a.ingest_flow(FlowMapPacket { home_zone_id: ZoneId(0), day: 2, contact_zone_id: ZoneId(1), received_level: lvl(l), old_received_level: None });
            a.ingest_flow(FlowMapPacket { home_zone_id: ZoneId(0), day: 2, contact_zone_id: ZoneId(1), received_level: lvl(m), old_received_level: Some(lvl(l)) });
            b.ingest_heat(HeatMapPacket::new(ZoneId(0), 2, lvl(m), 3, None).unwrap());
            b.ingest_flow(FlowMapPacket { home_zone_id: ZoneId(0), day: 2, contact_zone_id: ZoneId(1), received_level: lvl(m), old_received_level: None });
            mismatched += usize::from(a.emit_heatmap(2) != b.emit_heatmap(2) || a.emit_flowmap(2) != b.emit_flowmap(2));
        }
    }

    let mut store = PseudonymStore::default();
    for i in 0..200u32 {
        store.insert(record(Pseudonym([(i % 20) as u8; 16]), i % 150));
    }
    let now = 200;
    store.expire_data(now);
    let stale = store.iter().filter(|r| now - r.received_day >= 90).count();
    let target = Pseudonym([7; 16]);
    let revoked = matches!(store.revoke(&target), Revocation::Deleted(_) | Revocation::UnknownPseudonym);
    let left = store.iter().filter(|r| r.pseudonym == target).count();
    verdict(
        small_rows == 0 && accounting == 0 && mismatched == 0 && stale == 0 && revoked && left == 0,
        format!("{STREAMS} streams: rows below {ANONYMITY_FLOOR} {small_rows}, accounting errors {accounting}; correction mismatches {mismatched}/256; records left after expiry {stale}, after revocation {left}"),
    )
}

fn c8_encounters() -> Check {
    let mut mismatched = Vec::new();
    let mut total = 0;
    for trial in 0..20u64 {
        let world = oracle::world_of(50, 200 + trial);
        let table = oracle::plan_all(&world, trial as u32 % 7, trial, |_| covi_core::risk::BehaviorModifiers::none());
        let key = StreamKey::new(trial, Purpose::DistanceBand);
        let mut got: Vec<oracle::Key> = detect_encounters(&oracle::occupancy(&world, &table), &world.kinds(), 0, key).iter().map(oracle::key_of).collect();
        got.sort_unstable();
        let want = oracle::brute_force(&world, &table, key);
        total += want.len();
        if got != want {
            mismatched.push(trial);
        }
    }
    verdict(mismatched.is_empty(), format!("20 random 50-agent days, {total} encounters, mismatching days {mismatched:?}"))
}

fn c9_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_covi"))
            .args(["simulate", "--scenario", "risk_app", "--seed", "17", "--out", out.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        bytes.push(fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    verdict(bytes[0] == bytes[1], format!("two `covi simulate` runs, metrics.csv {} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1]))
}

fn main() {
    let checks: [(u8, &str, fn() -> Check); 9] = [
        (1, "unmitigated calibration", c1_calibration),
        (2, "scenario ordering", c2_ordering),
        (3, "disease constants", c3_disease_constants),
        (4, "viral load", c4_viral_load),
        (5, "protocol suite", c5_protocol),
        (6, "quantizer", c6_quantizer),
        (7, "aggregation", c7_aggregation),
        (8, "encounter oracle", c8_encounters),
        (9, "determinism", c9_determinism),
    ];
    // The comparison is by far the slowest, so everything runs at once.
    let results: Vec<(Check, Duration)> = std::thread::scope(|s| {
        let handles: Vec<_> = checks
            .iter()
            .map(|&(_, _, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
                    (r, t.elapsed())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for ((n, name, _), (r, t)) in checks.iter().zip(results) {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {tag} {name} ({:.1} s): {detail}", t.as_secs_f64());
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
