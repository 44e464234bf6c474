//! Phase-randomized weak coherent source and the lossy, misaligned fiber.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::Bb84Setting;
use crate::error::{Error, Result};

/// Photon numbers above this are never sampled for `mu <= 2`; the Poisson
/// tail beyond it is below 1e-40.
pub const POISSON_CUTOFF: u32 = 40;

/// Largest mean photon number accepted by the source model.
pub const MAX_MU: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    alpha_db_per_km: f64,
    length_km: f64,
    e_mis: f64,
}

impl ChannelParams {
    pub fn new(alpha_db_per_km: f64, length_km: f64, e_mis: f64) -> Result<Self> {
        if !(alpha_db_per_km >= 0.0 && alpha_db_per_km.is_finite()) {
            return Err(Error::range("alpha_db_per_km", alpha_db_per_km, "alpha >= 0"));
        }
        if !(length_km >= 0.0 && length_km.is_finite()) {
            return Err(Error::range("length_km", length_km, "length >= 0"));
        }
        if !(0.0..=0.5).contains(&e_mis) {
            return Err(Error::range("e_mis", e_mis, "0 <= e_mis <= 0.5"));
        }
        Ok(Self {
            alpha_db_per_km,
            length_km,
            e_mis,
        })
    }

    pub fn alpha_db_per_km(&self) -> f64 {
        self.alpha_db_per_km
    }

    pub fn length_km(&self) -> f64 {
        self.length_km
    }

    pub fn e_mis(&self) -> f64 {
        self.e_mis
    }

    pub fn transmittance(&self) -> f64 {
        transmittance(self)
    }
}

/// `10^(-alpha L / 10)`.
pub fn transmittance(ch: &ChannelParams) -> f64 {
    10f64.powf(-ch.alpha_db_per_km * ch.length_km / 10.0)
}

/// How decoy intensities are treated. Only the infinite-decoy limit, where
/// single-photon yields and errors are known exactly, is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyModel {
    #[default]
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceParams {
    mu: f64,
    pub decoy: DecoyModel,
}

impl SourceParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= MAX_MU) {
            return Err(Error::range("mu", mu, "0 < mu <= 10"));
        }
        Ok(Self {
            mu,
            decoy: DecoyModel::Infinite,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Poisson photon-number probability `e^-mu mu^n / n!`.
pub fn poisson_pn(mu: f64, n: u32) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::range("mu", mu, "mu > 0"));
    }
    if n == 0 {
        return Ok((-mu).exp());
    }
    Ok((-mu + n as f64 * mu.ln() - ln_factorial(n)).exp())
}

/// Inversion sampler for the Poisson photon number with a fixed tail cutoff.
#[derive(Debug, Clone)]
pub struct PoissonSampler {
    cdf: Vec<f64>,
}

impl PoissonSampler {
    pub fn new(mu: f64) -> Result<Self> {
        SourceParams::new(mu)?;
        let mut cdf = Vec::with_capacity(POISSON_CUTOFF as usize + 1);
        let mut p = (-mu).exp();
        let mut acc = 0.0;
        let mut n = 0u32;
        loop {
            acc += p;
            cdf.push(acc);
            n += 1;
            // Keep going past the default cutoff only while the tail is still
            // relevant in double precision (large mu).
            if n > POISSON_CUTOFF && (1.0 - acc) < 1e-17 {
                break;
            }
            if n >= 63 {
                break;
            }
            p *= mu / n as f64;
        }
        Ok(Self { cdf })
    }

    pub fn max_photons(&self) -> u32 {
        self.cdf.len() as u32 - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        // Most pulses are vacuum or single-photon; a linear scan is fastest.
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1) as u32
    }
}

/// Photons of one pulse that reach Bob, with their misalignment flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseSample {
    pub setting: Bb84Setting,
    pub emitted: u32,
    pub surviving: u32,
    /// Bit `k` set means surviving photon `k` arrives in the orthogonal state.
    pub flip_mask: u64,
}

impl PulseSample {
    pub fn flipped(&self, k: u32) -> bool {
        (self.flip_mask >> k) & 1 == 1
    }

    /// Polarization state of each surviving photon.
    pub fn photons(&self) -> impl Iterator<Item = Bb84Setting> + '_ {
        (0..self.surviving).map(move |k| {
            if self.flipped(k) {
                self.setting.flipped()
            } else {
                self.setting
            }
        })
    }
}

/// Reusable sampler for pulses through a fixed source and channel.
#[derive(Debug, Clone)]
pub struct PulseSampler {
    photons: PoissonSampler,
    transmittance: f64,
    e_mis: f64,
}

impl PulseSampler {
    pub fn new(src: &SourceParams, ch: &ChannelParams) -> Result<Self> {
        Ok(Self {
            photons: PoissonSampler::new(src.mu)?,
            transmittance: ch.transmittance(),
            e_mis: ch.e_mis,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, setting: Bb84Setting, rng: &mut R) -> PulseSample {
        let emitted = self.photons.sample(rng);
        self.transmit(setting, emitted, rng)
    }

    /// Channel loss and misalignment applied to a pulse of known photon number.
    pub fn transmit<R: Rng + ?Sized>(&self, setting: Bb84Setting, emitted: u32, rng: &mut R) -> PulseSample {
        let mut surviving = 0u32;
        let mut flip_mask = 0u64;
        for _ in 0..emitted {
            if self.transmittance >= 1.0 || rng.random::<f64>() < self.transmittance {
                if self.e_mis > 0.0 && rng.random::<f64>() < self.e_mis {
                    flip_mask |= 1 << surviving;
                }
                surviving += 1;
            }
        }
        PulseSample {
            setting,
            emitted,
            surviving,
            flip_mask,
        }
    }
}

/// Samples one pulse: Poisson photon number, independent survival of each
/// photon, independent basis-orthogonal flip of each survivor.
pub fn sample_pulse<R: Rng + ?Sized>(
    src: &SourceParams,
    setting: Bb84Setting,
    ch: &ChannelParams,
    rng: &mut R,
) -> Result<PulseSample> {
    Ok(PulseSampler::new(src, ch)?.sample(setting, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn poisson_examples() {
        assert!((poisson_pn(0.7, 0).unwrap() - 0.496_585_303_791_409_5).abs() < 1e-15);
        assert!((poisson_pn(0.7, 1).unwrap() - 0.347_609_712_653_986_6).abs() < 1e-15);
        assert!(poisson_pn(0.0, 1).is_err());
    }

    #[test]
    fn poisson_partial_sums_normalize() {
        for mu in [0.01, 0.3, 0.7, 1.5, 2.0] {
            let total: f64 = (0..=40).map(|n| poisson_pn(mu, n).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "mu {mu}: {total}");
        }
    }

    #[test]
    fn poisson_matches_recursion() {
        for mu in [0.05f64, 0.7, 1.9] {
            let mut p = (-mu).exp();
            for n in 1..=40u32 {
                p *= mu / n as f64;
                let direct = poisson_pn(mu, n).unwrap();
                assert!((direct - p).abs() < 1e-14, "mu {mu} n {n}");
            }
        }
    }

    #[test]
    fn transmittance_examples() {
        let t = |l| ChannelParams::new(0.2, l, 0.0).unwrap().transmittance();
        assert_eq!(t(0.0), 1.0);
        assert!((t(50.0) - 0.1).abs() < 1e-15);
        assert!((t(150.0) - 0.001).abs() < 1e-17);
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelParams::new(-0.1, 0.0, 0.0).is_err());
        assert!(ChannelParams::new(0.2, -1.0, 0.0).is_err());
        assert!(ChannelParams::new(0.2, 1.0, 0.6).is_err());
        assert!(SourceParams::new(0.0).is_err());
    }

    fn mean_surviving(mu: f64, length_km: f64, n: usize, seed: u64) -> (f64, f64) {
        let src = SourceParams::new(mu).unwrap();
        let ch = ChannelParams::new(0.2, length_km, 0.0).unwrap();
        let sampler = PulseSampler::new(&src, &ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: u64 = (0..n)
            .map(|_| sampler.sample(Bb84Setting::H, &mut rng).surviving as u64)
            .sum();
        let mean_want = mu * ch.transmittance();
        (total as f64 / n as f64, (mean_want / n as f64).sqrt())
    }

    #[test]
    fn surviving_mean_lossless() {
        let (mean, se) = mean_surviving(0.7, 0.0, 1_000_000, 1);
        assert!((mean - 0.7).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn surviving_mean_thinned() {
        let (mean, se) = mean_surviving(0.7, 50.0, 1_000_000, 2);
        assert!((mean - 0.07).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn vacuum_limit() {
        let src = SourceParams::new(1e-9).unwrap();
        let ch = ChannelParams::new(0.2, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sampler = PulseSampler::new(&src, &ch).unwrap();
        assert!((0..100_000).all(|_| sampler.sample(Bb84Setting::V, &mut rng).surviving == 0));
    }

    #[test]
    fn flips_change_only_the_bit() {
        let ch = ChannelParams::new(0.2, 0.0, 0.5).unwrap();
        let src = SourceParams::new(2.0).unwrap();
        let sampler = PulseSampler::new(&src, &ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p = sampler.sample(Bb84Setting::PLUS45, &mut rng);
            for (k, s) in p.photons().enumerate() {
                assert_eq!(s.basis, Bb84Setting::PLUS45.basis);
                assert_eq!(s.bit, p.flipped(k as u32));
            }
        }
    }
}
