use covi_core::config::{DiseaseConfig, TestConfig, WorldConfig};
use covi_core::epi::symptoms::sample_background_illness;
use covi_core::epi::testing::draw_outcome;
use covi_core::epi::{infectiousness, sample_disease_course, transmit, PartyState, Status, TestOutcome, TransmissionKernel, ViralLoadCurve};
use covi_core::rng::{Purpose, StreamKey};
use covi_core::world::{build_world, Agent, Conditions, DistanceBand};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn reference_agent() -> Agent {
    let mut a = build_world(&WorldConfig::default()).unwrap().agents[0].clone();
    a.age = 35;
    a.preexisting_conditions = Conditions::default();
    a
}

#[test]
fn severity_rates_for_the_reference_agent() {
    let cfg = DiseaseConfig::default();
    let agent = reference_agent();
    let mut rng = StreamKey::new(11, Purpose::DiseaseCourse).rng();
    let n = 100_000;
    let (mut asym, mut sick, mut extreme, mut fatal) = (0, 0, 0, 0);
    for _ in 0..n {
        let c = sample_disease_course(&agent, &cfg, &mut rng);
        asym += usize::from(c.asymptomatic);
        sick += usize::from(c.really_sick);
        extreme += usize::from(c.extremely_sick);
        fatal += usize::from(c.fatal);
        assert!(!c.extremely_sick || c.really_sick);
        assert!(!c.really_sick || !c.asymptomatic);
    }
    let f = |k: usize| k as f64 / n as f64;
    assert!((f(asym) - 0.40).abs() <= 0.01, "asymptomatic {}", f(asym));
    assert!((f(sick) - 0.15).abs() <= 0.01, "really sick {}", f(sick));
    assert!((f(extreme) / f(sick) - 0.30).abs() <= 0.02, "extremely sick | really sick {}", f(extreme) / f(sick));
    assert!((f(fatal) - 0.002).abs() <= 0.0005, "fatal {}", f(fatal));
}

#[test]
fn sampled_durations_are_truncated() {
    let cfg = DiseaseConfig::default();
    let agent = reference_agent();
    let mut rng = StreamKey::new(12, Purpose::DiseaseCourse).rng();
    let mut sum = 0.0;
    for _ in 0..20_000 {
        let c = sample_disease_course(&agent, &cfg, &mut rng).curve;
        for d in [c.incubation_days, c.rise_days, c.plateau_days, c.decay_days] {
            assert!(d >= cfg.min_duration_days);
        }
        sum += c.incubation_days;
    }
    // Rejection sampling: mean of a normal truncated below at the minimum.
    let (mu, sd) = (cfg.incubation_mean_days, cfg.incubation_sd_days);
    let std = Normal::new(0.0, 1.0).unwrap();
    let alpha = (cfg.min_duration_days - mu) / sd;
    let expected = mu + sd * std.pdf(alpha) / (1.0 - std.cdf(alpha));
    let se = sd / 20_000f64.sqrt();
    assert!((sum / 20_000.0 - expected).abs() < 4.0 * se, "mean {} vs {expected}", sum / 20_000.0);
}

#[test]
fn lab_error_rates() {
    let cfg = TestConfig::default();
    let mut rng = StreamKey::new(13, Purpose::TestResult).rng();
    let n = 100_000;
    let fp = (0..n).filter(|_| draw_outcome(false, &cfg, rng.gen()) == TestOutcome::Positive).count();
    assert_eq!(fp, 0);
    let neg = (0..n).filter(|_| draw_outcome(true, &cfg, rng.gen()) == TestOutcome::Negative).count();
    let fnr = neg as f64 / n as f64;
    assert!((fnr - 0.10).abs() <= 0.01, "fnr {fnr}");
}

#[test]
fn background_illness_hits_one_percent() {
    let world = build_world(&WorldConfig { population: 10_000, ..WorldConfig::default() }).unwrap();
    let mut rng = StreamKey::new(14, Purpose::Symptoms).rng();
    let n = sample_background_illness(&world.agents, 0.01, &mut rng).len();
    assert!((80..=120).contains(&n), "{n} flagged");
}

#[test]
fn ramp_midpoint_is_exact() {
    let c = ViralLoadCurve::<f64>::new(2.5, 2.5, 0.8, 5.0, 5.0).unwrap();
    assert!((c.viral_load(3.75).unwrap() - 0.4).abs() <= 1e-12);
    assert_eq!(c.viral_load(2.5).unwrap(), 0.0);
    assert_eq!(c.viral_load(5.0).unwrap(), 0.8);
    assert!(c.viral_load(-0.01).is_err());
}

fn curve() -> impl Strategy<Value = ViralLoadCurve<f64>> {
    (0.5..6.0f64, 0.5..6.0f64, 0.05..=1.0f64, 0.5..10.0f64, 0.5..10.0f64)
        .prop_map(|(i, r, h, p, d)| ViralLoadCurve::new(i, r, h, p, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn load_is_continuous_and_supported(c in curve()) {
        let step = 0.01;
        let bound = c.max_slope() * step + 1e-12;
        let mut prev = c.load(0.0);
        let mut t = step;
        while t < c.end() + 2.0 {
            let v = c.load(t);
            prop_assert!((v - prev).abs() <= bound, "jump {} at t={t}", (v - prev).abs());
            prop_assert!((0.0..=c.plateau_height).contains(&v));
            if t <= c.incubation_days || t >= c.end() {
                prop_assert_eq!(v, 0.0);
            }
            prev = v;
            t += step;
        }
    }

    #[test]
    fn asymptomatic_ratio_is_exactly_a_tenth(c in curve(), t in 0.0..30.0f64) {
        let cfg = DiseaseConfig::default();
        let v = c.load(t);
        let sym = infectiousness(v, false, false, &cfg);
        let asym = infectiousness(v, true, false, &cfg);
        prop_assert_eq!(asym, sym * 0.1);
    }
}

// Monte-Carlo against the closed-form product, 20 random parameter draws.
#[test]
fn transmission_rate_matches_closed_form() {
    let mut draw = StreamKey::new(15, Purpose::Transmission).rng();
    let mut trials = StreamKey::new(16, Purpose::Transmission).rng();
    for _ in 0..20 {
        let cfg = DiseaseConfig { base_rate: draw.gen_range(0.01..0.2), ..DiseaseConfig::default() };
        let k = TransmissionKernel::<f64>::from_config(&cfg);
        let source = PartyState {
            status: Status::Infectious,
            infectiousness: draw.gen_range(0.05..1.5),
            masked: draw.gen(),
            healthcare_worker: draw.gen(),
            hygiene: false,
        };
        let recipient = PartyState { masked: draw.gen(), hygiene: draw.gen(), ..PartyState::susceptible() };
        let duration: f64 = draw.gen_range(5.0..180.0);
        let band = if draw.gen() { DistanceBand::Close } else { DistanceBand::Medium };
        let mask = |p: &PartyState<f64>| match (p.masked, p.healthcare_worker) {
            (false, _) => 1.0,
            (true, true) => 1.0 - 0.98,
            (true, false) => 1.0 - 0.32,
        };
        let expected = (cfg.base_rate
            * source.infectiousness
            * (duration / 15.0).min(cfg.duration_cap)
            * cfg.distance_factors[band.index()]
            * mask(&source)
            * mask(&recipient)
            * if recipient.hygiene { cfg.hygiene_factor } else { 1.0 })
        .min(1.0);
        let n = 100_000;
        let hits = (0..n).filter(|_| transmit(&k, &source, &recipient, duration, band, trials.gen()).is_some()).count();
        let rate = hits as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((rate - expected).abs() <= 3.0 * sigma + 1e-9, "rate {rate} vs {expected}");
    }
}
