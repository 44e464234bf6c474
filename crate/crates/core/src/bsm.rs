//! Linear-optics single-photon Bell-state measurement on the polarization and
//! path qubits of one photon, followed by four threshold detectors.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{apply_lon, hybrid_bell_expand, Basis, Bb84Setting, HybridBell, PathSetting, OPTICAL};
use crate::error::{Error, Result};
use crate::qstate::{r, PureState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
    D3,
    D4,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::D1, Detector::D2, Detector::D3, Detector::D4];

    /// Zero-based index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn bell_state(self) -> HybridBell {
        HybridBell::ALL[self.index()]
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.index() + 1)
    }
}

/// Efficiency and dark-count probability shared by all four detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorParams {
    eta_det: f64,
    p_dark: f64,
}

impl DetectorParams {
    pub fn new(eta_det: f64, p_dark: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta_det) {
            return Err(Error::range("eta_det", eta_det, "0 <= eta_det <= 1"));
        }
        if !(0.0..1.0).contains(&p_dark) {
            return Err(Error::range("p_dark", p_dark, "0 <= p_dark < 1"));
        }
        Ok(Self { eta_det, p_dark })
    }

    pub fn ideal() -> Self {
        Self {
            eta_det: 1.0,
            p_dark: 0.0,
        }
    }

    pub fn eta_det(&self) -> f64 {
        self.eta_det
    }

    pub fn p_dark(&self) -> f64 {
        self.p_dark
    }
}

/// Which of D1..D4 fired in one gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClickPattern {
    pub clicks: [bool; 4],
}

impl ClickPattern {
    pub fn count(&self) -> usize {
        self.clicks.iter().filter(|c| **c).count()
    }

    /// Exactly one detector fired.
    pub fn successful(&self) -> bool {
        self.count() == 1
    }

    pub fn outcome(&self) -> BsmOutcome {
        if self.successful() {
            let i = self.clicks.iter().position(|c| *c).expect("one click");
            BsmOutcome::Success(Detector::ALL[i])
        } else {
            BsmOutcome::Failure
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BsmOutcome {
    Success(Detector),
    Failure,
}

impl BsmOutcome {
    pub fn detector(self) -> Option<Detector> {
        match self {
            BsmOutcome::Success(d) => Some(d),
            BsmOutcome::Failure => None,
        }
    }
}

fn check_optical(state: &PureState) -> Result<()> {
    if state.labels() != OPTICAL {
        return Err(Error::UnknownFactor(state.labels().join(",")));
    }
    Ok(())
}

/// Click distribution over D1..D4 from projecting onto the hybrid Bell basis.
pub fn ideal_bsm_distribution(state: &PureState) -> Result<[f64; 4]> {
    let coeffs = hybrid_bell_expand(state)?;
    Ok(coeffs.map(|c| c.norm_sqr()))
}

/// The optical network in front of the detectors, as a 4x4 unitary acting on
/// the one-photon modes `(H,inp1), (H,inp2), (V,inp1), (V,inp2)` and producing
/// amplitudes at D1..D4.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeNetwork {
    matrix: DMatrix<C64>,
}

impl Default for ModeNetwork {
    fn default() -> Self {
        Self::new()
    }
}

impl ModeNetwork {
    pub fn new() -> Self {
        // Recombining PBS: H is transmitted, V reflected. Arm X collects H from
        // inp1 and V from inp2, arm Y collects H from inp2 and V from inp1.
        // Output order (X,H), (X,V), (Y,H), (Y,V).
        let one = r(1.0);
        let zero = r(0.0);
        let pbs = DMatrix::from_row_slice(
            4,
            4,
            &[
                one, zero, zero, zero, //
                zero, zero, zero, one, //
                zero, one, zero, zero, //
                zero, zero, one, zero,
            ],
        );
        // Rotator R on each arm (half-wave plate at 22.5 deg): H -> +45, V -> -45.
        let h = r(FRAC_1_SQRT_2);
        let rot = DMatrix::from_row_slice(
            4,
            4,
            &[
                h, h, zero, zero, //
                h, -h, zero, zero, //
                zero, zero, h, h, //
                zero, zero, h, -h,
            ],
        );
        // Analysing PBS per arm: (X,H)->D1, (X,V)->D2, (Y,H)->D3, (Y,V)->D4.
        let analyse = DMatrix::<C64>::identity(4, 4);
        Self {
            matrix: analyse * rot * pbs,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn output_amplitudes(&self, state: &PureState) -> Result<[C64; 4]> {
        check_optical(state)?;
        let out = &self.matrix * DVector::from_column_slice(state.amplitudes());
        Ok([out[0], out[1], out[2], out[3]])
    }

    pub fn distribution(&self, state: &PureState) -> Result<[f64; 4]> {
        Ok(self.output_amplitudes(state)?.map(|a| a.norm_sqr()))
    }
}

/// Click distribution from propagating through the explicit mode network.
pub fn mode_network_distribution(state: &PureState) -> Result<[f64; 4]> {
    ModeNetwork::new().distribution(state)
}

/// Ideal click distribution for a BB84 state entering Bob's network at `path`.
pub fn setting_distribution(alice: Bb84Setting, path: PathSetting) -> [f64; 4] {
    let s = apply_lon(path, &alice.state()).expect("BB84 state into LON");
    ideal_bsm_distribution(&s).expect("optical state")
}

/// Threshold detection of photons already routed to detectors: each photon
/// registers with probability `eta_det`, and every detector independently
/// dark-fires with probability `p_dark`.
pub fn detect<R: Rng + ?Sized>(assignments: &[Detector], params: &DetectorParams, rng: &mut R) -> ClickPattern {
    let mut clicks = [false; 4];
    for d in assignments {
        if params.eta_det >= 1.0 || rng.random::<f64>() < params.eta_det {
            clicks[d.index()] = true;
        }
    }
    if params.p_dark > 0.0 {
        for c in clicks.iter_mut() {
            if rng.random::<f64>() < params.p_dark {
                *c = true;
            }
        }
    }
    ClickPattern { clicks }
}

/// One row of the theoretical detection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub alice: Bb84Setting,
    pub bob: PathSetting,
    pub probabilities: [f64; 4],
}

impl TheoryRow {
    pub fn label(&self) -> String {
        format!("|{}>|{}>", self.alice, self.bob)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryTable {
    pub visibility: f64,
    pub rows: Vec<TheoryRow>,
}

/// The eight basis-matched combinations, in the order the experiment lists them.
pub const TABLE_ROWS: [(Bb84Setting, PathSetting); 8] = [
    (Bb84Setting::H, PathSetting::C),
    (Bb84Setting::V, PathSetting::C),
    (Bb84Setting::H, PathSetting::A),
    (Bb84Setting::V, PathSetting::A),
    (Bb84Setting::PLUS45, PathSetting::B0),
    (Bb84Setting::MINUS45, PathSetting::BPi),
    (Bb84Setting::PLUS45, PathSetting::BPi),
    (Bb84Setting::MINUS45, PathSetting::B0),
];

/// Click probabilities for every basis-matched combination when the path
/// interferometer has visibility `visibility`. Interference only matters for
/// the diagonal rows; there a fraction `(1 - V)/2` of the mass moves to the
/// pair the orthogonal state would have hit.
pub fn theory_table(visibility: f64) -> Result<TheoryTable> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::range("visibility", visibility, "0 <= V <= 1"));
    }
    let wrong = (1.0 - visibility) / 2.0;
    let rows = TABLE_ROWS
        .iter()
        .map(|&(alice, bob)| {
            let ideal = setting_distribution(alice, bob);
            let probabilities = match alice.basis {
                Basis::Rectilinear => ideal,
                Basis::Diagonal => {
                    let other = setting_distribution(alice.flipped(), bob);
                    std::array::from_fn(|k| (1.0 - wrong) * ideal[k] + wrong * other[k])
                }
            };
            TheoryRow {
                alice,
                bob,
                probabilities,
            }
        })
        .collect();
    Ok(TheoryTable { visibility, rows })
}

/// Header of [`TheoryTable::csv_rows`].
pub const THEORY_CSV_HEADER: &str = "visibility,state,D1,D2,D3,D4";

impl TheoryTable {
    pub fn to_csv(&self) -> String {
        format!("{THEORY_CSV_HEADER}\n{}", self.csv_rows())
    }

    /// Data rows without the header, state labels quoted since they contain
    /// commas. Several tables can share one file.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let _ = write!(out, "{},\"{}\"", crate::csv_float(self.visibility), row.label());
            for p in row.probabilities {
                let _ = write!(out, ",{}", crate::csv_float(p));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{unitarity_defect, EXACT_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: [f64; 4], b: [f64; 4]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < EXACT_TOL)
    }

    fn routed(alice: Bb84Setting, bob: PathSetting) -> PureState {
        apply_lon(bob, &alice.state()).unwrap()
    }

    #[test]
    fn ideal_examples() {
        let d = ideal_bsm_distribution(&routed(Bb84Setting::H, PathSetting::A)).unwrap();
        assert!(close(d, [0.5, 0.5, 0.0, 0.0]));
        let d = ideal_bsm_distribution(&routed(Bb84Setting::PLUS45, PathSetting::B0)).unwrap();
        assert!(close(d, [0.5, 0.0, 0.5, 0.0]));
        let d = ideal_bsm_distribution(&routed(Bb84Setting::PLUS45, PathSetting::BPi)).unwrap();
        assert!(close(d, [0.0, 0.5, 0.0, 0.5]));
    }

    #[test]
    fn mode_network_matches_projectors_on_all_settings() {
        for alice in Bb84Setting::ALL {
            for bob in PathSetting::ALL {
                let s = routed(alice, bob);
                let a = ideal_bsm_distribution(&s).unwrap();
                let b = mode_network_distribution(&s).unwrap();
                assert!(close(a, b), "{alice} {bob}: {a:?} vs {b:?}");
            }
        }
        let d = mode_network_distribution(&routed(Bb84Setting::V, PathSetting::C)).unwrap();
        assert!(close(d, [0.5, 0.5, 0.0, 0.0]));
    }

    #[test]
    fn mode_network_is_unitary() {
        assert!(unitarity_defect(ModeNetwork::new().matrix()) < EXACT_TOL);
    }

    #[test]
    fn matched_settings_hit_one_pair() {
        let pairs = [[0, 1], [2, 3], [0, 2], [1, 3]];
        for alice in Bb84Setting::ALL {
            for bob in PathSetting::ALL.into_iter().filter(|p| p.basis() == alice.basis) {
                let d = setting_distribution(alice, bob);
                let support: Vec<usize> = (0..4).filter(|&k| d[k] > EXACT_TOL).collect();
                assert!(pairs.iter().any(|p| p[..] == support[..]), "{alice} {bob}: {d:?}");
            }
        }
    }

    #[test]
    fn detect_vacuum_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = DetectorParams::new(0.5, 0.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(detect(&[], &params, &mut rng).count(), 0);
        }
    }

    #[test]
    fn detect_perfect_single_photon() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = detect(&[Detector::D1], &DetectorParams::ideal(), &mut rng);
        assert_eq!(p.clicks, [true, false, false, false]);
        assert!(p.successful());
        assert_eq!(p.outcome(), BsmOutcome::Success(Detector::D1));
    }

    #[test]
    fn double_clicks_fail() {
        let p = ClickPattern {
            clicks: [true, false, true, false],
        };
        assert!(!p.successful());
        assert_eq!(p.outcome(), BsmOutcome::Failure);
        assert_eq!(ClickPattern::default().outcome(), BsmOutcome::Failure);
    }

    #[test]
    fn dark_count_single_click_rate() {
        let p_dark = 6.02e-6;
        let params = DetectorParams::new(0.145, p_dark).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 10_000_000u64;
        let hits = (0..trials)
            .filter(|_| detect(&[], &params, &mut rng).successful())
            .count() as f64;
        // Binomial closed form for exactly one of four independent dark counts.
        let want = 4.0 * p_dark * (1.0 - p_dark).powi(3);
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        let got = hits / trials as f64;
        assert!((got - want).abs() < 3.0 * se, "{got} vs {want} (se {se})");
    }

    #[test]
    fn success_falls_with_dark_counts() {
        // P(only D1) with one photon at D1 is eta (1-p)^3 + (1-eta) p (1-p)^3.
        let mut last = f64::INFINITY;
        for p in [0.0, 0.01, 0.05, 0.1, 0.2] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let params = DetectorParams::new(0.9, p).unwrap();
            let n = 200_000;
            let ok = (0..n)
                .filter(|_| detect(&[Detector::D1], &params, &mut rng).successful())
                .count() as f64
                / n as f64;
            assert!(ok <= last + 3.0 * (0.25 / n as f64).sqrt());
            last = ok;
        }
    }

    #[test]
    fn invalid_detector_params() {
        assert!(DetectorParams::new(1.5, 0.0).is_err());
        assert!(DetectorParams::new(0.5, 1.0).is_err());
        assert!(DetectorParams::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn theory_table_examples() {
        let ideal = theory_table(1.0).unwrap();
        assert_eq!(ideal.rows.len(), 8);
        let row = |t: &TheoryTable, a, b| {
            t.rows.iter().find(|r| r.alice == a && r.bob == b).unwrap().probabilities
        };
        assert!(close(row(&ideal, Bb84Setting::PLUS45, PathSetting::B0), [0.5, 0.0, 0.5, 0.0]));
        assert!(close(row(&ideal, Bb84Setting::H, PathSetting::A), [0.5, 0.5, 0.0, 0.0]));

        let real = theory_table(0.884).unwrap();
        for r in real.rows.iter().filter(|r| r.alice.basis == Basis::Diagonal) {
            let ideal_row = row(&ideal, r.alice, r.bob);
            let off: Vec<usize> = (0..4).filter(|&k| ideal_row[k] == 0.0).collect();
            assert_eq!(off.len(), 2);
            for &k in &off {
                assert!((r.probabilities[k] - 0.029).abs() < EXACT_TOL);
            }
            let mass: f64 = off.iter().map(|&k| r.probabilities[k]).sum();
            assert!((mass - 0.058).abs() < EXACT_TOL);
        }
        for r in real.rows.iter().filter(|r| r.alice.basis == Basis::Rectilinear) {
            assert_eq!(r.probabilities, row(&ideal, r.alice, r.bob));
        }
    }

    #[test]
    fn theory_table_rejects_bad_visibility() {
        assert!(theory_table(1.1).is_err());
        assert!(theory_table(-0.1).is_err());
    }

    #[test]
    fn theory_csv_has_eight_labelled_rows() {
        let csv = theory_table(1.0).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], THEORY_CSV_HEADER);
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("1.0000000000000000e0,\"|H>|c>\","));
        let (head, tail) = lines[8].rsplit_once('"').unwrap();
        assert!(head.ends_with("\"|-45>|b,0>"));
        let probs: Vec<f64> = tail[1..].split(',').map(|x| x.parse().unwrap()).collect();
        assert!(close([probs[0], probs[1], probs[2], probs[3]], [0.0, 0.5, 0.0, 0.5]));
    }
}
