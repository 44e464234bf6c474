//! Numerical checks of the virtual-protocol identities and of the
//! equivalence between the two BSM models.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bsm::{ideal_bsm_distribution, ModeNetwork};
use crate::encoding::{rho_b_with, LonNetwork, QubitInput, VirtualSource, OPTICAL, POL};
use crate::error::Result;
use crate::qstate::{c, hermitian_eigenvalues, trace_distance, PureState, C64, EXACT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// Largest deviation seen over all samples.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            name,
            max_deviation,
            tolerance,
            passed: max_deviation < tolerance,
        }
    }
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[derive(Debug, Clone)]
pub struct IdentityChecks {
    pub samples: usize,
    pub seed: u64,
    pub source: VirtualSource,
    pub network: LonNetwork,
    /// Random register bases tried for basis independence.
    pub rotations: usize,
}

impl Default for IdentityChecks {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 7,
            source: VirtualSource::default(),
            network: LonNetwork::standard(),
            rotations: 16,
        }
    }
}

impl IdentityChecks {
    pub fn run(&self) -> Result<Vec<CheckResult>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let identity = DMatrix::identity(4, 4);
        let rho_a = self.source.rho_a();
        let inputs: Vec<PureState> = (0..self.samples)
            .map(|_| PureState::haar_random(&[POL], &mut rng))
            .collect::<Result<_>>()?;

        let mut to_rho_a: f64 = 0.0;
        let mut between_inputs: f64 = 0.0;
        let mut first = None;
        for s in &inputs {
            let rho_b = rho_b_with(QubitInput::Pure(s), &self.source, &self.network, &identity)?;
            to_rho_a = to_rho_a.max(trace_distance(&rho_b, &rho_a)?);
            let reference = first.get_or_insert_with(|| rho_b.clone());
            between_inputs = between_inputs.max(trace_distance(&rho_b, reference)?);
        }

        // Any fixed register basis leaves the spectrum of rho_B unchanged.
        let spectrum_a = rho_a.eigenvalues();
        let mut spectrum: f64 = 0.0;
        for k in 0..self.rotations {
            let basis = haar_unitary(4, &mut rng);
            for s in inputs.iter().skip(k).step_by(self.rotations.max(1)).take(8) {
                let rho = rho_b_with(QubitInput::Pure(s), &self.source, &self.network, &basis)?;
                let eig = hermitian_eigenvalues(rho.entries());
                for (x, y) in eig.iter().zip(&spectrum_a) {
                    spectrum = spectrum.max((x - y).abs());
                }
            }
        }

        let mut bsm: f64 = 0.0;
        let network = ModeNetwork::new();
        for _ in 0..self.samples {
            let s = PureState::haar_random(&OPTICAL, &mut rng)?;
            let a = ideal_bsm_distribution(&s)?;
            let b = network.distribution(&s)?;
            for (x, y) in a.iter().zip(b) {
                bsm = bsm.max((x - y).abs());
            }
        }

        Ok(vec![
            CheckResult::new("rho_b_equals_rho_a", to_rho_a, EXACT_TOL),
            CheckResult::new("rho_b_input_independent", between_inputs, EXACT_TOL),
            CheckResult::new("rho_b_basis_independent", spectrum, EXACT_TOL),
            CheckResult::new("bsm_models_agree", bsm, EXACT_TOL),
        ])
    }
}
