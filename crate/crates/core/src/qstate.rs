//! Small dense complex linear algebra for pure states and density matrices.
//!
//! Every tensor factor is a qubit. Factors are named, and the first label is
//! the slowest-varying index: for `["pol", "path"]` the basis order is
//! `(H,inp1), (H,inp2), (V,inp1), (V,inp2)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest Hilbert-space dimension handled (four qubits).
pub const MAX_DIM: usize = 16;

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

/// Tolerance for quantities derived through longer numerical chains.
pub const DERIVED_TOL: f64 = 1e-9;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn owned_labels<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    labels.iter().map(|s| s.as_ref().to_string()).collect()
}

fn check_labels(dim: usize, labels: &[String]) -> Result<()> {
    if dim > MAX_DIM {
        return Err(Error::DimensionOverflow(dim));
    }
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::LabelMismatch {
            dim,
            expected: 0,
            got: labels.len(),
        });
    }
    let expected = dim.trailing_zeros() as usize;
    if labels.len() != expected {
        return Err(Error::LabelMismatch {
            dim,
            expected,
            got: labels.len(),
        });
    }
    Ok(())
}

/// A normalized state vector over named qubit factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<C64>,
    labels: Vec<String>,
}

impl PureState {
    /// Builds a state from amplitudes that must already have unit norm.
    pub fn new<S: AsRef<str>>(labels: &[S], amplitudes: Vec<C64>) -> Result<Self> {
        let labels = owned_labels(labels);
        check_labels(amplitudes.len(), &labels)?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes, labels })
    }

    /// Builds a state after rescaling the amplitudes to unit norm.
    pub fn normalized<S: AsRef<str>>(labels: &[S], mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm * norm));
        }
        for a in amplitudes.iter_mut() {
            *a /= norm;
        }
        Self::new(labels, amplitudes)
    }

    /// Computational basis vector `index` over the given factors.
    pub fn basis<S: AsRef<str>>(labels: &[S], index: usize) -> Result<Self> {
        let dim = 1usize << labels.len();
        if index >= dim {
            return Err(Error::DimensionMismatch {
                left: index,
                right: dim,
            });
        }
        let mut amplitudes = vec![C64::default(); dim];
        amplitudes[index] = r(1.0);
        Self::new(labels, amplitudes)
    }

    /// Haar-distributed random state over the given factors.
    pub fn haar_random<S: AsRef<str>, R: Rng + ?Sized>(labels: &[S], rng: &mut R) -> Result<Self> {
        let dim = 1usize << labels.len();
        let amplitudes = (0..dim)
            .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(labels, amplitudes)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Kronecker product; `self` becomes the slower-varying factor.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let dim = self.dim() * other.dim();
        if dim > MAX_DIM {
            return Err(Error::DimensionOverflow(dim));
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        let labels = self.labels.iter().chain(&other.labels).cloned().collect();
        Ok(PureState { amplitudes, labels })
    }

    pub fn to_density(&self) -> DensityMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        DensityMatrix {
            entries: &v * v.adjoint(),
            labels: self.labels.clone(),
        }
    }
}

/// Kronecker product of two pure states.
pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState> {
    a.tensor(b)
}

/// Hermitian, unit-trace, positive semidefinite matrix over named qubit factors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
    labels: Vec<String>,
}

impl DensityMatrix {
    pub fn new<S: AsRef<str>>(labels: &[S], entries: DMatrix<C64>) -> Result<Self> {
        let labels = owned_labels(labels);
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                left: entries.nrows(),
                right: entries.ncols(),
            });
        }
        check_labels(entries.nrows(), &labels)?;
        let rho = Self { entries, labels };
        rho.validate()?;
        Ok(rho)
    }

    fn validate(&self) -> Result<()> {
        let herm_err = (&self.entries - self.entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm_err > EXACT_TOL {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm_err:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr}")));
        }
        let min = self.eigenvalues()[0];
        if min < -EXACT_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn maximally_mixed<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let dim = 1usize << labels.len();
        Self::new(labels, DMatrix::identity(dim, dim) / r(dim as f64))
    }

    /// Convex combination `sum_k w_k rho_k`; weights must be a probability vector.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidProbabilities("empty mixture".into()))?
            .1;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidProbabilities(format!("weights sum to {total}")));
        }
        let mut acc = DMatrix::zeros(first.dim(), first.dim());
        for (w, rho) in parts {
            if rho.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    left: first.dim(),
                    right: rho.dim(),
                });
            }
            acc += &rho.entries * r(*w);
        }
        Self::new(&first.labels, acc)
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let dim = self.dim() * other.dim();
        if dim > MAX_DIM {
            return Err(Error::DimensionOverflow(dim));
        }
        Ok(DensityMatrix {
            entries: self.entries.kronecker(&other.entries),
            labels: self.labels.iter().chain(&other.labels).cloned().collect(),
        })
    }

    /// `U rho U^dagger` for a unitary `U` of matching dimension.
    pub fn conjugate_by(&self, unitary: &DMatrix<C64>) -> Result<DensityMatrix> {
        if unitary.nrows() != self.dim() || unitary.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: unitary.nrows(),
                right: self.dim(),
            });
        }
        Self::new(&self.labels, unitary * &self.entries * unitary.adjoint())
    }

    /// Traces out every factor not listed in `keep`. Kept factors retain
    /// their original relative order.
    pub fn partial_trace<S: AsRef<str>>(&self, keep: &[S]) -> Result<DensityMatrix> {
        let n = self.labels.len();
        let mut keep_pos = Vec::with_capacity(keep.len());
        for name in keep {
            let name = name.as_ref();
            let pos = self
                .labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::UnknownFactor(name.to_string()))?;
            if !keep_pos.contains(&pos) {
                keep_pos.push(pos);
            }
        }
        keep_pos.sort_unstable();
        let traced_pos: Vec<usize> = (0..n).filter(|p| !keep_pos.contains(p)).collect();

        // Bit of factor `pos` inside a full index (factor 0 is most significant).
        let bit = |pos: usize| n - 1 - pos;
        let spread = |positions: &[usize], sub: usize| -> usize {
            let k = positions.len();
            positions.iter().enumerate().fold(0, |acc, (j, &pos)| {
                acc | (((sub >> (k - 1 - j)) & 1) << bit(pos))
            })
        };

        let kdim = 1usize << keep_pos.len();
        let tdim = 1usize << traced_pos.len();
        let mut out = DMatrix::zeros(kdim, kdim);
        for i in 0..kdim {
            let fi = spread(&keep_pos, i);
            for j in 0..kdim {
                let fj = spread(&keep_pos, j);
                let mut acc = C64::default();
                for t in 0..tdim {
                    let ft = spread(&traced_pos, t);
                    acc += self.entries[(fi | ft, fj | ft)];
                }
                out[(i, j)] = acc;
            }
        }
        let labels: Vec<&str> = keep_pos.iter().map(|&p| self.labels[p].as_str()).collect();
        if labels.is_empty() {
            return Err(Error::UnknownFactor(String::new()));
        }
        DensityMatrix::new(&labels, out)
    }
}

/// Reduces `rho` to the single factor `keep`.
pub fn partial_trace(rho: &DensityMatrix, keep: &str) -> Result<DensityMatrix> {
    rho.partial_trace(&[keep])
}

/// `1/2 * sum |eig(a - b)|`, clamped into `[0, 1]`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let diff = &a.entries - &b.entries;
    let d = 0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    // Symmetrize first so round-off in the input cannot leak into the solver.
    let herm = (m + m.adjoint()) * r(0.5);
    let mut eig: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

/// Largest entrywise deviation of `U U^dagger` from the identity.
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let id = DMatrix::<C64>::identity(u.nrows(), u.ncols());
    (u * u.adjoint() - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
