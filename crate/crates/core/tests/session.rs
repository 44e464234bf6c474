use ddiqkd_core::bsm::{setting_distribution, DetectorParams};
use ddiqkd_core::encoding::{Bb84Setting, PathSetting};
use ddiqkd_core::rates::RateParams;
use ddiqkd_core::session::{run_session, sift, BasisChoice, PhotonSource, PulseSimulator, SessionConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ideal(e_mis: f64) -> RateParams {
    RateParams::new(1.0, 1.16, DetectorParams::ideal(), 0.2, e_mis).unwrap()
}

#[test]
fn same_seed_same_report() {
    let cfg = SessionConfig::new(RateParams::reference(), 20.0, 0.7, 300_000, 42).unwrap();
    let a = run_session(&cfg).unwrap();
    let b = run_session(&cfg).unwrap();
    assert_eq!(a, b);
    let other = SessionConfig { seed: 43, ..cfg };
    assert_ne!(run_session(&other).unwrap().tally, a.tally);
}

#[test]
fn thread_count_does_not_change_tallies() {
    let cfg = SessionConfig::new(RateParams::reference(), 0.0, 0.7, 5 * 65_536 + 17, 9).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_session(&cfg).unwrap())
    };
    assert_eq!(run(1).tally, run(4).tally);
}

#[test]
fn prefix_of_a_longer_run_is_reproducible() {
    // Shards are seeded by index, so a run that ends on a shard boundary is a
    // prefix of any longer run.
    let short = SessionConfig::new(RateParams::reference(), 0.0, 0.7, 2 * 65_536, 5).unwrap();
    let long = SessionConfig { n_pulses: 3 * 65_536, ..short };
    let a = run_session(&short).unwrap().tally;
    let b = run_session(&long).unwrap().tally;
    assert_eq!(b.pulses - a.pulses, 65_536);
    for (x, y) in a.detectors.iter().zip(&b.detectors) {
        assert!(x.clicks <= y.clicks && x.errors <= y.errors && x.all_clicks <= y.all_clicks);
    }
}

#[test]
fn half_the_pulses_match_bases() {
    let n = 1_000_000;
    let cfg = SessionConfig::new(RateParams::reference(), 0.0, 0.7, n, 1).unwrap();
    let r = run_session(&cfg).unwrap();
    let se = (0.25 / n as f64).sqrt();
    assert!((r.basis_match_fraction - 0.5).abs() < 4.0 * se, "{}", r.basis_match_fraction);
}

#[test]
fn single_photons_follow_the_ideal_distribution() {
    let sim = PulseSimulator::new(&ideal(0.0), 0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 40_000;
    for alice in Bb84Setting::ALL {
        for bob in PathSetting::ALL {
            let want = setting_distribution(alice, bob);
            let mut counts = [0u32; 4];
            for _ in 0..n {
                let rec = sim.run_pulse(alice, bob, 1, &mut rng);
                counts[rec.outcome.detector().expect("ideal detectors always click").index()] += 1;
            }
            for k in 0..4 {
                let p = want[k];
                let got = counts[k] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((got - p).abs() <= 4.0 * se + 1e-12, "{alice} {bob} D{}: {got} vs {p}", k + 1);
            }
        }
    }
}

#[test]
fn ideal_matched_pairs_never_err() {
    let sim = PulseSimulator::new(&ideal(0.0), 0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for alice in Bb84Setting::ALL {
        for bob in PathSetting::ALL.into_iter().filter(|b| b.basis() == alice.basis) {
            for _ in 0..2_000 {
                let bit = sift(&sim.run_pulse(alice, bob, 1, &mut rng)).unwrap();
                assert!(!bit.is_error(), "{alice} {bob}");
            }
        }
    }
}

#[test]
fn misalignment_sets_the_qber() {
    let e = 0.05;
    for basis in [BasisChoice::Rectilinear, BasisChoice::Diagonal] {
        let cfg = SessionConfig::new(ideal(e), 0.0, 0.5, 400_000, 23)
            .unwrap()
            .with_source(PhotonSource::SinglePhoton)
            .with_basis_choice(basis);
        let r = run_session(&cfg).unwrap();
        assert_eq!(r.basis_match_fraction, 1.0);
        let se = (e * (1.0 - e) / r.sifted_length as f64).sqrt();
        assert!((r.qber - e).abs() < 4.0 * se, "{basis:?}: {}", r.qber);
    }
}

#[test]
fn secret_length_tracks_the_rate() {
    let cfg = SessionConfig::new(RateParams::reference(), 10.0, 0.7, 500_000, 3).unwrap();
    let r = run_session(&cfg).unwrap();
    assert!(r.secret_fraction > 0.0);
    assert_eq!(r.secret_key_length, (r.tally.matched_pulses as f64 * r.secret_fraction).floor() as u64);
    assert!(r.secret_key_length < r.sifted_length);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(SessionConfig::new(RateParams::reference(), 0.0, 0.0, 10, 1).is_err());
    assert!(SessionConfig::new(RateParams::reference(), -1.0, 0.7, 10, 1).is_err());
    assert!(SessionConfig::new(RateParams::reference(), 0.0, 0.7, 0, 1).is_err());
}
