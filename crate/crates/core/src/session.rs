//! Monte Carlo execution of the protocol: random settings on both sides,
//! pulse sampling, detection, sifting with the detector-dependent bit flips,
//! and asymptotic key-length accounting from the tallies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{detect, setting_distribution, BsmOutcome, Detector};
use crate::channel::{poisson_pn, PulseSampler, SourceParams};
use crate::encoding::{Basis, Bb84Setting, PathSetting};
use crate::error::{Error, Result};
use crate::rates::{binary_entropy, RateParams};

/// Whether Bob flips his bit for a click at `detector` in `basis`: rectilinear
/// events at D3/D4 and diagonal events at D2/D4.
pub fn flip_rule(basis: Basis, detector: Detector) -> bool {
    match basis {
        Basis::Rectilinear => matches!(detector, Detector::D3 | Detector::D4),
        Basis::Diagonal => matches!(detector, Detector::D2 | Detector::D4),
    }
}

/// Bob's key bit for setting `bob` once the flip rule for `detector` is applied.
pub fn bob_bit_after_flip(bob: PathSetting, detector: Detector) -> bool {
    bob.bit() ^ flip_rule(bob.basis(), detector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub alice: Bb84Setting,
    pub bob: PathSetting,
    pub outcome: BsmOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedBit {
    pub alice_bit: bool,
    pub bob_bit_after_flip: bool,
    pub basis: Basis,
    pub detector: Detector,
}

impl SiftedBit {
    pub fn is_error(&self) -> bool {
        self.alice_bit != self.bob_bit_after_flip
    }
}

/// Keeps successful events with matching bases; Bob applies the flip rule.
pub fn sift(record: &PulseRecord) -> Option<SiftedBit> {
    let detector = record.outcome.detector()?;
    if record.alice.basis != record.bob.basis() {
        return None;
    }
    Some(SiftedBit {
        alice_bit: record.alice.bit,
        bob_bit_after_flip: bob_bit_after_flip(record.bob, detector),
        basis: record.alice.basis,
        detector,
    })
}

/// Wrong-pair click probability implied by interferometer visibility `V`.
pub fn projected_qber_from_visibility(visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::range("visibility", visibility, "0 <= V <= 1"));
    }
    Ok((1.0 - visibility) / 2.0)
}

/// Bases both parties draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    #[default]
    Both,
    Rectilinear,
    Diagonal,
}

impl BasisChoice {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> Basis {
        match self {
            BasisChoice::Both => {
                if rng.random::<bool>() {
                    Basis::Diagonal
                } else {
                    Basis::Rectilinear
                }
            }
            BasisChoice::Rectilinear => Basis::Rectilinear,
            BasisChoice::Diagonal => Basis::Diagonal,
        }
    }
}

/// Photon-number statistics of Alice's pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonSource {
    #[default]
    Poisson,
    SinglePhoton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionConfig {
    pub params: RateParams,
    pub length_km: f64,
    pub mu: f64,
    pub n_pulses: u64,
    pub seed: u64,
    pub basis_choice: BasisChoice,
    pub source: PhotonSource,
}

impl SessionConfig {
    pub fn new(params: RateParams, length_km: f64, mu: f64, n_pulses: u64, seed: u64) -> Result<Self> {
        let cfg = Self {
            params,
            length_km,
            mu,
            n_pulses,
            seed,
            basis_choice: BasisChoice::Both,
            source: PhotonSource::Poisson,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_basis_choice(mut self, basis_choice: BasisChoice) -> Self {
        self.basis_choice = basis_choice;
        self
    }

    pub fn with_source(mut self, source: PhotonSource) -> Self {
        self.source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        SourceParams::new(self.mu)?;
        self.params.channel(self.length_km)?;
        if self.n_pulses == 0 {
            return Err(Error::range("n_pulses", 0.0, "n_pulses >= 1"));
        }
        Ok(())
    }

    /// `(p0, p1)` of the configured source.
    fn vacuum_and_single(&self) -> (f64, f64) {
        match self.source {
            PhotonSource::Poisson => (
                poisson_pn(self.mu, 0).expect("validated mu"),
                poisson_pn(self.mu, 1).expect("validated mu"),
            ),
            PhotonSource::SinglePhoton => (0.0, 1.0),
        }
    }
}

/// Generates pulse records for fixed source, channel and detectors.
#[derive(Debug, Clone)]
pub struct PulseSimulator {
    pulses: PulseSampler,
    detector: crate::bsm::DetectorParams,
    /// Cumulative click distribution per (photon state, Bob setting).
    routes: [[[f64; 4]; 4]; 4],
}

impl PulseSimulator {
    pub fn new(params: &RateParams, length_km: f64, mu: f64) -> Result<Self> {
        let src = SourceParams::new(mu)?;
        let ch = params.channel(length_km)?;
        let mut routes = [[[0.0; 4]; 4]; 4];
        for alice in Bb84Setting::ALL {
            for bob in PathSetting::ALL {
                let dist = setting_distribution(alice, bob);
                let mut acc = 0.0;
                for (k, p) in dist.iter().enumerate() {
                    acc += p;
                    routes[alice.index()][bob.index()][k] = acc;
                }
            }
        }
        Ok(Self {
            pulses: PulseSampler::new(&src, &ch)?,
            detector: *params.detector(),
            routes,
        })
    }

    fn route<R: Rng + ?Sized>(&self, photon: Bb84Setting, bob: PathSetting, rng: &mut R) -> Detector {
        let cdf = &self.routes[photon.index()][bob.index()];
        let u = rng.random::<f64>() * cdf[3];
        let k = cdf.iter().position(|&c| u < c).unwrap_or(3);
        Detector::ALL[k]
    }

    /// One pulse with `emitted` photons; returns the record.
    pub fn run_pulse<R: Rng + ?Sized>(
        &self,
        alice: Bb84Setting,
        bob: PathSetting,
        emitted: u32,
        rng: &mut R,
    ) -> PulseRecord {
        let pulse = self.pulses.transmit(alice, emitted, rng);
        let mut assigned = [Detector::D1; 64];
        let mut count = 0;
        for photon in pulse.photons() {
            assigned[count] = self.route(photon, bob, rng);
            count += 1;
        }
        let clicks = detect(&assigned[..count], &self.detector, rng);
        PulseRecord {
            alice,
            bob,
            outcome: clicks.outcome(),
        }
    }

    pub fn sample_photon_number<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let pulse = self.pulses.sample(Bb84Setting::H, rng);
        pulse.emitted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectorTally {
    /// Basis-matched pulses where only this detector fired.
    pub clicks: u64,
    /// Of those, sifted bits that disagree after the flip rule.
    pub errors: u64,
    pub vacuum_clicks: u64,
    pub single_clicks: u64,
    pub single_errors: u64,
    /// Single clicks over all pulses, matched or not.
    pub all_clicks: u64,
}

impl DetectorTally {
    fn merge(&mut self, o: &DetectorTally) {
        self.clicks += o.clicks;
        self.errors += o.errors;
        self.vacuum_clicks += o.vacuum_clicks;
        self.single_clicks += o.single_clicks;
        self.single_errors += o.single_errors;
        self.all_clicks += o.all_clicks;
    }
}

/// Integer counters of a session; merging is order independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionTally {
    pub pulses: u64,
    pub matched_pulses: u64,
    pub matched_vacuum_pulses: u64,
    pub matched_single_pulses: u64,
    pub successful_pulses: u64,
    pub detectors: [DetectorTally; 4],
}

impl SessionTally {
    pub fn merge(&mut self, o: &SessionTally) {
        self.pulses += o.pulses;
        self.matched_pulses += o.matched_pulses;
        self.matched_vacuum_pulses += o.matched_vacuum_pulses;
        self.matched_single_pulses += o.matched_single_pulses;
        self.successful_pulses += o.successful_pulses;
        for (a, b) in self.detectors.iter_mut().zip(&o.detectors) {
            a.merge(b);
        }
    }

    pub fn record(&mut self, record: &PulseRecord, emitted: u32) {
        self.pulses += 1;
        let matched = record.alice.basis == record.bob.basis();
        if matched {
            self.matched_pulses += 1;
            match emitted {
                0 => self.matched_vacuum_pulses += 1,
                1 => self.matched_single_pulses += 1,
                _ => {}
            }
        }
        let Some(d) = record.outcome.detector() else {
            return;
        };
        self.successful_pulses += 1;
        let t = &mut self.detectors[d.index()];
        t.all_clicks += 1;
        if let Some(bit) = sift(record) {
            let err = bit.is_error() as u64;
            t.clicks += 1;
            t.errors += err;
            match emitted {
                0 => t.vacuum_clicks += 1,
                1 => {
                    t.single_clicks += 1;
                    t.single_errors += err;
                }
                _ => {}
            }
        }
    }

    pub fn sifted(&self) -> u64 {
        self.detectors.iter().map(|d| d.clicks).sum()
    }

    pub fn sifted_errors(&self) -> u64 {
        self.detectors.iter().map(|d| d.errors).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorEstimate {
    pub gain: f64,
    pub qber: f64,
    pub y0: f64,
    pub y1: f64,
    pub e1: f64,
    pub key_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub config: SessionConfig,
    pub n_pulses: u64,
    pub seed: u64,
    pub tally: SessionTally,
    pub basis_match_fraction: f64,
    pub sifted_length: u64,
    pub qber: f64,
    pub detectors: [DetectorEstimate; 4],
    /// Secret bits per basis-matched pulse, `sum_i max(R_i, 0)` with `q = 1`.
    pub secret_fraction: f64,
    /// Secret bits per pulse with the configured protocol efficiency `q`.
    pub rate_per_pulse: f64,
    pub secret_key_length: u64,
}

fn frac(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn entropy(x: f64) -> f64 {
    binary_entropy(x.clamp(0.0, 1.0)).expect("clamped")
}

/// Pulses per independently seeded random stream.
pub const SHARD_PULSES: u64 = 1 << 16;

fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Runs `config.n_pulses` pulses and applies the key-rate formula to the
/// tallied gains, error rates and photon-number-resolved yields.
pub fn run_session(config: &SessionConfig) -> Result<SessionReport> {
    config.validate()?;
    let sim = PulseSimulator::new(&config.params, config.length_km, config.mu)?;
    let shards = config.n_pulses.div_ceil(SHARD_PULSES);
    let tally = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(config.seed, shard);
            let start = shard * SHARD_PULSES;
            let end = (start + SHARD_PULSES).min(config.n_pulses);
            let mut t = SessionTally::default();
            for _ in start..end {
                let basis_a = config.basis_choice.draw(&mut rng);
                let alice = Bb84Setting::new(basis_a, rng.random());
                let basis_b = config.basis_choice.draw(&mut rng);
                let bob = PathSetting::from_basis_bit(basis_b, rng.random());
                let emitted = match config.source {
                    PhotonSource::Poisson => sim.sample_photon_number(&mut rng),
                    PhotonSource::SinglePhoton => 1,
                };
                let rec = sim.run_pulse(alice, bob, emitted, &mut rng);
                t.record(&rec, emitted);
            }
            t
        })
        .reduce(SessionTally::default, |mut a, b| {
            a.merge(&b);
            a
        });
    Ok(report_from_tally(config, tally))
}

pub fn report_from_tally(config: &SessionConfig, tally: SessionTally) -> SessionReport {
    let (p0, p1) = config.vacuum_and_single();
    let f = config.params.f_ec();
    let detectors = tally.detectors.map(|d| {
        let gain = frac(d.clicks, tally.matched_pulses);
        let qber = frac(d.errors, d.clicks);
        let y0 = frac(d.vacuum_clicks, tally.matched_vacuum_pulses);
        let y1 = frac(d.single_clicks, tally.matched_single_pulses);
        let e1 = frac(d.single_errors, d.single_clicks);
        let key_rate = p0 * y0 + p1 * y1 * (1.0 - entropy(e1)) - gain * f * entropy(qber);
        DetectorEstimate {
            gain,
            qber,
            y0,
            y1,
            e1,
            key_rate,
        }
    });
    let secret_fraction: f64 = detectors.iter().map(|d| d.key_rate.max(0.0)).sum();
    let sifted = tally.sifted();
    SessionReport {
        config: *config,
        n_pulses: config.n_pulses,
        seed: config.seed,
        tally,
        basis_match_fraction: frac(tally.matched_pulses, tally.pulses),
        sifted_length: sifted,
        qber: frac(tally.sifted_errors(), sifted),
        detectors,
        secret_fraction,
        rate_per_pulse: config.params.q() * secret_fraction,
        secret_key_length: (tally.matched_pulses as f64 * secret_fraction).floor() as u64,
    }
}
