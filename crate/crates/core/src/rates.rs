//! Analytic yields, gains and error rates of the four-detector receiver, the
//! per-detector decoy-state key rate, optimisation over the signal intensity,
//! and a two-detector decoy BB84 receiver for comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{setting_distribution, Detector, DetectorParams};
use crate::channel::{poisson_pn, ChannelParams, SourceParams};
use crate::encoding::{Bb84Setting, PathSetting};
use crate::error::{Error, Result};
use crate::session::bob_bit_after_flip;

/// Photon numbers summed explicitly in gains and error rates.
pub const N_MAX: u32 = 20;

/// Search interval for the signal mean photon number.
pub const MU_RANGE: (f64, f64) = (0.01, 2.0);

/// Final bracket width of the intensity search.
pub const MU_TOL: f64 = 1e-4;

/// Resolution of cutoff-distance bisection, in km.
pub const CUTOFF_TOL_KM: f64 = 0.5;

/// Background count probability per gate of the two-detector reference
/// receiver used for the default parameter set.
pub const REFERENCE_BACKGROUND: f64 = 6.02e-6;

/// Binary Shannon entropy, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::range("x", x, "0 <= x <= 1"));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

fn h(x: f64) -> f64 {
    binary_entropy(x.clamp(0.0, 1.0)).expect("clamped")
}

/// Per-detector dark-count probability such that `detectors` independent
/// detectors produce a total background probability `background`.
pub fn dark_count_from_background(background: f64, detectors: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&background) || detectors == 0 {
        return Err(Error::range("background", background, "0 <= background < 1"));
    }
    Ok(1.0 - (1.0 - background).powf(1.0 / detectors as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateParams {
    q: f64,
    f_ec: f64,
    detector: DetectorParams,
    alpha_db_per_km: f64,
    e_mis: f64,
}

impl RateParams {
    pub fn new(q: f64, f_ec: f64, detector: DetectorParams, alpha_db_per_km: f64, e_mis: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::range("q", q, "0 < q <= 1"));
        }
        if !(f_ec >= 1.0 && f_ec.is_finite()) {
            return Err(Error::range("f_ec", f_ec, "f_ec >= 1"));
        }
        // Reuse the channel checks for alpha and e_mis.
        ChannelParams::new(alpha_db_per_km, 0.0, e_mis)?;
        Ok(Self {
            q,
            f_ec,
            detector,
            alpha_db_per_km,
            e_mis,
        })
    }

    /// 0.2 dB/km fiber, 14.5 % detectors, 6.02e-6 reference background,
    /// 1.5 % misalignment, f = 1.16, q = 1.
    pub fn reference() -> Self {
        let p_dark = dark_count_from_background(REFERENCE_BACKGROUND, 2).expect("valid");
        Self {
            q: 1.0,
            f_ec: 1.16,
            detector: DetectorParams::new(0.145, p_dark).expect("valid"),
            alpha_db_per_km: 0.2,
            e_mis: 0.015,
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn f_ec(&self) -> f64 {
        self.f_ec
    }

    pub fn detector(&self) -> &DetectorParams {
        &self.detector
    }

    pub fn alpha_db_per_km(&self) -> f64 {
        self.alpha_db_per_km
    }

    pub fn e_mis(&self) -> f64 {
        self.e_mis
    }

    pub fn channel(&self, length_km: f64) -> Result<ChannelParams> {
        ChannelParams::new(self.alpha_db_per_km, length_km, self.e_mis)
    }

    /// Overall single-photon detection probability `eta_det * t(L)`.
    pub fn eta(&self, length_km: f64) -> Result<f64> {
        Ok(self.detector.eta_det() * self.channel(length_km)?.transmittance())
    }
}

/// n-photon yields `Y_{i,n}` and error yields `Y_{i,n} e_{i,n}` for
/// `n = 0..=N_MAX`, averaged over the eight basis-matched setting pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonYields {
    yields: Vec<[f64; 4]>,
    error_yields: Vec<[f64; 4]>,
}

/// Per-n yields for the four-detector receiver. Photons are detected
/// independently with probability `eta`, each routed by the single-photon
/// click distribution of its (possibly misaligned) polarization; a detector
/// is credited only when it alone fires.
pub fn photon_yields(params: &RateParams, length_km: f64) -> Result<PhotonYields> {
    let eta = params.eta(length_km)?;
    let pd = params.detector.p_dark();
    let e = params.e_mis;
    let quiet3 = (1.0 - pd).powi(3);

    let matched: Vec<(Bb84Setting, PathSetting)> = Bb84Setting::ALL
        .iter()
        .flat_map(|&a| {
            PathSetting::ALL
                .into_iter()
                .filter(move |p| p.basis() == a.basis)
                .map(move |p| (a, p))
        })
        .collect();
    let weight = 1.0 / matched.len() as f64;

    let mut yields = vec![[0.0; 4]; N_MAX as usize + 1];
    let mut error_yields = vec![[0.0; 4]; N_MAX as usize + 1];
    for &(alice, bob) in &matched {
        let straight = setting_distribution(alice, bob);
        let turned = setting_distribution(alice.flipped(), bob);
        for d in Detector::ALL {
            let i = d.index();
            let route = (1.0 - e) * straight[i] + e * turned[i];
            let wrong = bob_bit_after_flip(bob, d) != alice.bit;
            let stay = 1.0 - eta + eta * route;
            for n in 0..=N_MAX {
                let none = (1.0 - eta).powi(n as i32);
                // Every photon lost or sent to i, at least one registered at i.
                let photon = (stay.powi(n as i32) - none) * quiet3;
                let dark = none * pd * quiet3;
                yields[n as usize][i] += weight * (photon + dark);
                let err = if wrong { photon } else { 0.0 } + 0.5 * dark;
                error_yields[n as usize][i] += weight * err;
            }
        }
    }
    Ok(PhotonYields { yields, error_yields })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl PhotonYields {
    pub fn yield_of(&self, n: u32, d: Detector) -> f64 {
        self.yields[n as usize][d.index()]
    }

    pub fn error_rate(&self, n: u32, d: Detector) -> f64 {
        ratio(self.error_yields[n as usize][d.index()], self.yields[n as usize][d.index()])
    }

    /// Gains `Q_i`, error-weighted gains `E_i Q_i`, and the Poisson mass
    /// beyond `N_MAX`, which bounds the truncation error of both.
    pub fn mixture(&self, mu: f64) -> Result<([f64; 4], [f64; 4], f64)> {
        let mut gains = [0.0; 4];
        let mut err = [0.0; 4];
        let mut mass = 0.0;
        for n in 0..=N_MAX {
            let p = poisson_pn(mu, n)?;
            mass += p;
            for i in 0..4 {
                gains[i] += p * self.yields[n as usize][i];
                err[i] += p * self.error_yields[n as usize][i];
            }
        }
        Ok((gains, err, (1.0 - mass).max(0.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorYields {
    pub y0: f64,
    pub y1: f64,
    pub e1: f64,
    pub gain: f64,
    pub qber: f64,
}

/// Yields and error rates of each detector at one distance and intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldTable {
    pub mu: f64,
    pub length_km: f64,
    pub detectors: [DetectorYields; 4],
    /// Upper bound on the error of each gain from truncating at `N_MAX`.
    pub truncation_bound: f64,
}

pub fn yield_table(params: &RateParams, length_km: f64, mu: f64) -> Result<YieldTable> {
    let per_n = photon_yields(params, length_km)?;
    let (gains, err, tail) = per_n.mixture(mu)?;
    let detectors = Detector::ALL.map(|d| {
        let i = d.index();
        DetectorYields {
            y0: per_n.yield_of(0, d),
            y1: per_n.yield_of(1, d),
            e1: per_n.error_rate(1, d),
            gain: gains[i],
            qber: ratio(err[i], gains[i]),
        }
    });
    Ok(YieldTable {
        mu,
        length_km,
        detectors,
        truncation_bound: tail,
    })
}

/// Unclamped per-detector rates
/// `R_i = q {p0 Y_i0 + p1 Y_i1 [1 - h(e_i1)] - Q_i f h(E_i)}`.
pub fn detector_rates(yields: &YieldTable, params: &RateParams) -> Result<[f64; 4]> {
    let p0 = poisson_pn(yields.mu, 0)?;
    let p1 = poisson_pn(yields.mu, 1)?;
    Ok(yields.detectors.map(|d| {
        params.q * (p0 * d.y0 + p1 * d.y1 * (1.0 - h(d.e1)) - d.gain * params.f_ec * h(d.qber))
    }))
}

/// Secret bits per pulse, `sum_i max(R_i, 0)`.
pub fn key_rate(yields: &YieldTable, params: &RateParams) -> Result<f64> {
    Ok(detector_rates(yields, params)?.iter().map(|r| r.max(0.0)).sum())
}

pub fn key_rate_at(params: &RateParams, length_km: f64, mu: f64) -> Result<f64> {
    key_rate(&yield_table(params, length_km, mu)?, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptimum {
    pub mu: f64,
    pub rate: f64,
}

/// Golden-section maximisation of `f` on `[lo, hi]` down to bracket width `tol`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    [(x1, f1), (x2, f2), (x, fx)]
        .into_iter()
        .fold((x, fx), |best, c| if c.1 > best.1 { c } else { best })
}

/// Maximises a clamped rate over `MU_RANGE`. `score` returns the clamped and
/// unclamped rate; the unclamped value steers the search where the clamped
/// one is flat at zero.
fn maximise_rate(score: impl Fn(f64) -> (f64, f64) + Sync) -> MuOptimum {
    let objective = |mu: f64| {
        let (clamped, raw) = score(mu);
        if clamped > 0.0 {
            clamped
        } else {
            raw.min(0.0)
        }
    };
    // Coarse scan to bracket the peak before refining.
    const GRID: usize = 40;
    let (lo, hi) = MU_RANGE;
    let step = (hi - lo) / GRID as f64;
    let grid: Vec<(f64, f64)> = (0..=GRID)
        .map(|k| {
            let mu = lo + step * k as f64;
            (mu, objective(mu))
        })
        .collect();
    let best = (0..grid.len())
        .max_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .expect("non-empty grid");
    let a = grid[best.saturating_sub(1)].0;
    let b = grid[(best + 1).min(GRID)].0;
    let (mu, _) = golden_section_max(objective, a, b, MU_TOL);
    let rate = score(mu).0;
    if rate > 0.0 {
        MuOptimum { mu, rate }
    } else {
        MuOptimum { mu: lo, rate: 0.0 }
    }
}

/// Intensity maximising the four-detector key rate at `length_km`.
pub fn optimize_mu(params: &RateParams, length_km: f64) -> Result<MuOptimum> {
    let per_n = photon_yields(params, length_km)?;
    let score = |mu: f64| {
        let rates = rates_from_photon_yields(&per_n, params, mu);
        (rates.iter().map(|r| r.max(0.0)).sum(), rates.iter().sum())
    };
    Ok(maximise_rate(score))
}

fn rates_from_photon_yields(per_n: &PhotonYields, params: &RateParams, mu: f64) -> [f64; 4] {
    let (gains, err, _) = per_n.mixture(mu).expect("mu in search range");
    let p0 = poisson_pn(mu, 0).expect("mu > 0");
    let p1 = poisson_pn(mu, 1).expect("mu > 0");
    Detector::ALL.map(|d| {
        let i = d.index();
        let e1 = per_n.error_rate(1, d);
        let qber = ratio(err[i], gains[i]);
        params.q
            * (p0 * per_n.yield_of(0, d) + p1 * per_n.yield_of(1, d) * (1.0 - h(e1))
                - gains[i] * params.f_ec * h(qber))
    })
}

/// n-photon yield and error yield of an active two-detector BB84 receiver.
/// Double clicks are kept and assigned a random bit.
fn bb84_photon_terms(eta: f64, e: f64, pd: f64, n: u32) -> (f64, f64) {
    let n = n as i32;
    let s = 1.0 - pd;
    let no_right = (1.0 - eta * (1.0 - e)).powi(n);
    let no_wrong = (1.0 - eta * e).powi(n);
    let none = (1.0 - eta).powi(n);
    let y = 1.0 - none * s * s;
    let only_wrong = no_right * s - none * s * s;
    let both = 1.0 - no_right * s - no_wrong * s + none * s * s;
    (y, only_wrong + 0.5 * both)
}

/// Unclamped decoy-BB84 rate `q {Q0 + Q1 [1 - h(e1)] - Q f h(E)}`.
fn bb84_raw_rate(params: &RateParams, eta: f64, mu: f64) -> f64 {
    let (pd, e) = (params.detector.p_dark(), params.e_mis);
    let mut gain = 0.0;
    let mut err = 0.0;
    for n in 0..=N_MAX {
        let p = poisson_pn(mu, n).expect("mu > 0");
        let (y, ey) = bb84_photon_terms(eta, e, pd, n);
        gain += p * y;
        err += p * ey;
    }
    let (y0, _) = bb84_photon_terms(eta, e, pd, 0);
    let (y1, ey1) = bb84_photon_terms(eta, e, pd, 1);
    let q0 = poisson_pn(mu, 0).expect("mu > 0") * y0;
    let q1 = poisson_pn(mu, 1).expect("mu > 0") * y1;
    params.q * (q0 + q1 * (1.0 - h(ratio(ey1, y1))) - gain * params.f_ec * h(ratio(err, gain)))
}

/// Asymptotic decoy-BB84 key rate (bits per pulse) of an active receiver with
/// two detectors sharing the same efficiency, dark counts and misalignment.
pub fn bb84_reference_rate(params: &RateParams, length_km: f64, mu: f64) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::range("mu", mu, "mu > 0"));
    }
    let eta = params.eta(length_km)?;
    Ok(bb84_raw_rate(params, eta, mu).max(0.0))
}

pub fn optimize_bb84_mu(params: &RateParams, length_km: f64) -> Result<MuOptimum> {
    let eta = params.eta(length_km)?;
    Ok(maximise_rate(|mu| {
        let raw = bb84_raw_rate(params, eta, mu);
        (raw.max(0.0), raw)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRatePoint {
    pub length_km: f64,
    pub mu_opt: f64,
    pub rate_proposal: f64,
    pub mu_opt_bb84: f64,
    pub rate_bb84: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateCurve {
    pub points: Vec<KeyRatePoint>,
    pub cutoff_proposal_km: f64,
    pub cutoff_bb84_km: f64,
}

impl KeyRateCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("length_km,mu_opt,rate_proposal,rate_bb84\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                crate::csv_float(p.length_km),
                crate::csv_float(p.mu_opt),
                crate::csv_float(p.rate_proposal),
                crate::csv_float(p.rate_bb84)
            ));
        }
        out
    }
}

/// Largest length with a positive optimised rate, to within `CUTOFF_TOL_KM`.
/// Returns 0 when the rate is already zero at 0 km.
pub fn cutoff_distance(rate_at: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    const STEP_KM: f64 = 10.0;
    const MAX_KM: f64 = 1000.0;
    if rate_at(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = STEP_KM;
    while rate_at(hi)? > 0.0 {
        lo = hi;
        hi += STEP_KM;
        if hi > MAX_KM {
            return Ok(MAX_KM);
        }
    }
    while hi - lo > CUTOFF_TOL_KM {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Optimised rates of both receivers at each length, plus both cutoffs.
pub fn keyrate_curve(params: &RateParams, lengths: &[f64]) -> Result<KeyRateCurve> {
    if lengths.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::range("lengths", f64::NAN, "sorted ascending"));
    }
    let points = lengths
        .par_iter()
        .map(|&length_km| {
            let ours = optimize_mu(params, length_km)?;
            let bb84 = optimize_bb84_mu(params, length_km)?;
            Ok(KeyRatePoint {
                length_km,
                mu_opt: ours.mu,
                rate_proposal: ours.rate,
                mu_opt_bb84: bb84.mu,
                rate_bb84: bb84.rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (ours, bb84) = rayon::join(
        || cutoff_distance(|l| Ok(optimize_mu(params, l)?.rate)),
        || cutoff_distance(|l| Ok(optimize_bb84_mu(params, l)?.rate)),
    );
    Ok(KeyRateCurve {
        points,
        cutoff_proposal_km: ours?,
        cutoff_bb84_km: bb84?,
    })
}

/// Rates of both receivers at a fixed intensity `mu`, plus the cutoffs at
/// that intensity. The `mu_opt` fields hold `mu`.
pub fn keyrate_curve_at_mu(params: &RateParams, lengths: &[f64], mu: f64) -> Result<KeyRateCurve> {
    if lengths.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::range("lengths", f64::NAN, "sorted ascending"));
    }
    SourceParams::new(mu)?;
    let points = lengths
        .par_iter()
        .map(|&length_km| {
            Ok(KeyRatePoint {
                length_km,
                mu_opt: mu,
                rate_proposal: key_rate_at(params, length_km, mu)?,
                mu_opt_bb84: mu,
                rate_bb84: bb84_reference_rate(params, length_km, mu)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KeyRateCurve {
        points,
        cutoff_proposal_km: cutoff_distance(|l| key_rate_at(params, l, mu))?,
        cutoff_bb84_km: cutoff_distance(|l| bb84_reference_rate(params, l, mu))?,
    })
}

/// Minimum single-photon transmittance for which security against general
/// attacks is established.
pub const LOW_LOSS_THRESHOLD: f64 = 0.659;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityRegime {
    ProvenLowLoss,
    ConjecturedHighLoss,
}

pub fn security_regime(single_photon_transmittance: f64) -> Result<SecurityRegime> {
    let t = single_photon_transmittance;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::range("transmittance", t, "0 <= t <= 1"));
    }
    Ok(if t >= LOW_LOSS_THRESHOLD {
        SecurityRegime::ProvenLowLoss
    } else {
        SecurityRegime::ConjecturedHighLoss
    })
}
