//! Alice's polarization encoding, Bob's path-encoding network (LON) and the
//! virtual-source construction used to show that Bob's register ends up in
//! the same state as Alice's regardless of what arrives from the channel.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{r, DensityMatrix, PureState, C64, EXACT_TOL};

pub const POL: &str = "pol";
pub const PATH: &str = "path";
pub const OPTICAL: [&str; 2] = [POL, PATH];
const ALICE_REG: [&str; 2] = ["a_hi", "a_lo"];
const BOB_REG: [&str; 2] = ["b_hi", "b_lo"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Rectilinear, Basis::Diagonal];
}

/// One of the four BB84 polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bb84Setting {
    pub basis: Basis,
    pub bit: bool,
}

impl Bb84Setting {
    pub const H: Self = Self::new(Basis::Rectilinear, false);
    pub const V: Self = Self::new(Basis::Rectilinear, true);
    pub const PLUS45: Self = Self::new(Basis::Diagonal, false);
    pub const MINUS45: Self = Self::new(Basis::Diagonal, true);
    /// Ordered as the virtual-source index `i = 1..4`.
    pub const ALL: [Self; 4] = [Self::H, Self::V, Self::PLUS45, Self::MINUS45];

    pub const fn new(basis: Basis, bit: bool) -> Self {
        Self { basis, bit }
    }

    /// The orthogonal state in the same basis.
    pub fn flipped(self) -> Self {
        Self::new(self.basis, !self.bit)
    }

    pub fn state(self) -> PureState {
        bb84_state(self)
    }

    pub fn index(self) -> usize {
        match (self.basis, self.bit) {
            (Basis::Rectilinear, false) => 0,
            (Basis::Rectilinear, true) => 1,
            (Basis::Diagonal, false) => 2,
            (Basis::Diagonal, true) => 3,
        }
    }
}

impl fmt::Display for Bb84Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match (self.basis, self.bit) {
            (Basis::Rectilinear, false) => "H",
            (Basis::Rectilinear, true) => "V",
            (Basis::Diagonal, false) => "45",
            (Basis::Diagonal, true) => "-45",
        };
        f.write_str(s)
    }
}

/// Polarization qubit for a BB84 setting.
pub fn bb84_state(s: Bb84Setting) -> PureState {
    let h = FRAC_1_SQRT_2;
    let amps = match (s.basis, s.bit) {
        (Basis::Rectilinear, false) => vec![r(1.0), r(0.0)],
        (Basis::Rectilinear, true) => vec![r(0.0), r(1.0)],
        (Basis::Diagonal, false) => vec![r(h), r(h)],
        (Basis::Diagonal, true) => vec![r(h), r(-h)],
    };
    PureState::new(&[POL], amps).expect("BB84 states are normalized")
}

/// Bob's switch/phase setting: path `a`, path `c`, or path `b` with phase 0 or pi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSetting {
    A,
    C,
    B0,
    BPi,
}

impl PathSetting {
    /// Ordered as the virtual-source index `i = 1..4`.
    pub const ALL: [PathSetting; 4] = [PathSetting::A, PathSetting::C, PathSetting::B0, PathSetting::BPi];

    pub fn basis(self) -> Basis {
        match self {
            PathSetting::A | PathSetting::C => Basis::Rectilinear,
            PathSetting::B0 | PathSetting::BPi => Basis::Diagonal,
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, PathSetting::C | PathSetting::BPi)
    }

    pub fn from_basis_bit(basis: Basis, bit: bool) -> Self {
        match (basis, bit) {
            (Basis::Rectilinear, false) => PathSetting::A,
            (Basis::Rectilinear, true) => PathSetting::C,
            (Basis::Diagonal, false) => PathSetting::B0,
            (Basis::Diagonal, true) => PathSetting::BPi,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PathSetting::A => 0,
            PathSetting::C => 1,
            PathSetting::B0 => 2,
            PathSetting::BPi => 3,
        }
    }
}

impl fmt::Display for PathSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PathSetting::A => "a",
            PathSetting::C => "c",
            PathSetting::B0 => "b,0",
            PathSetting::BPi => "b,pi",
        };
        f.write_str(s)
    }
}

/// Linear map from a polarization qubit into the one-photon `pol x path`
/// subspace at the BSM input ports. Column 0 is the image of `|H>`, column 1
/// the image of `|V>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LonIsometry {
    matrix: DMatrix<C64>,
}

impl LonIsometry {
    fn from_port_amplitudes(inp1: C64, inp2: C64) -> Self {
        // Output index = 2 * pol + path, polarization untouched.
        let mut m = DMatrix::zeros(4, 2);
        m[(0, 0)] = inp1;
        m[(1, 0)] = inp2;
        m[(2, 1)] = inp1;
        m[(3, 1)] = inp2;
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn apply(&self, input: &PureState) -> Result<PureState> {
        if input.labels() != [POL] {
            return Err(Error::UnknownFactor(input.labels().join(",")));
        }
        let norm = input.norm_sqr();
        if (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let v = &self.matrix * DVector::from_column_slice(input.amplitudes());
        PureState::new(&OPTICAL, v.iter().copied().collect())
    }
}

/// Isometry realised by Bob's network for one setting.
pub fn lon_isometry(p: PathSetting) -> LonIsometry {
    let h = FRAC_1_SQRT_2;
    match p {
        PathSetting::A => LonIsometry::from_port_amplitudes(r(1.0), r(0.0)),
        PathSetting::C => LonIsometry::from_port_amplitudes(r(0.0), r(1.0)),
        PathSetting::B0 => LonIsometry::from_port_amplitudes(r(h), r(h)),
        PathSetting::BPi => LonIsometry::from_port_amplitudes(r(h), r(-h)),
    }
}

pub fn apply_lon(p: PathSetting, input: &PureState) -> Result<PureState> {
    lon_isometry(p).apply(input)
}

/// The four isometries of Bob's network, one per setting.
#[derive(Debug, Clone, PartialEq)]
pub struct LonNetwork {
    isometries: [LonIsometry; 4],
}

impl Default for LonNetwork {
    fn default() -> Self {
        Self::standard()
    }
}

impl LonNetwork {
    pub fn standard() -> Self {
        Self {
            isometries: PathSetting::ALL.map(lon_isometry),
        }
    }

    /// Network whose path-`c` isometry has the wrong sign on `|V>`. Used to
    /// check that the verification suite notices a miswired network.
    pub fn with_faulty_c_path() -> Self {
        let mut net = Self::standard();
        let m = &mut net.isometries[PathSetting::C.index()].matrix;
        m[(3, 1)] = -m[(3, 1)];
        net
    }

    pub fn isometry(&self, p: PathSetting) -> &LonIsometry {
        &self.isometries[p.index()]
    }
}

/// Setting probabilities `p_i` of the virtual entangled source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VirtualSource {
    probabilities: [f64; 4],
}

impl Default for VirtualSource {
    fn default() -> Self {
        Self {
            probabilities: [0.25; 4],
        }
    }
}

impl VirtualSource {
    pub fn new(probabilities: [f64; 4]) -> Result<Self> {
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p) || !p.is_finite()) {
            return Err(Error::InvalidProbabilities(format!("{probabilities:?}")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidProbabilities(format!("sum is {sum}")));
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.probabilities
    }

    /// `|Psi>_{AA'} = sum_i sqrt(p_i) |a_i>_A |psi_i>_{A'}` with the register
    /// in the computational basis.
    pub fn joint_state(&self) -> PureState {
        let mut amps = vec![C64::default(); 8];
        for (i, s) in Bb84Setting::ALL.iter().enumerate() {
            let w = self.probabilities[i].sqrt();
            for (k, a) in bb84_state(*s).amplitudes().iter().enumerate() {
                amps[2 * i + k] += a * w;
            }
        }
        let labels = [ALICE_REG[0], ALICE_REG[1], POL];
        PureState::new(&labels, amps).expect("joint state is normalized")
    }

    /// Alice's reduced register state `rho_A`.
    pub fn rho_a(&self) -> DensityMatrix {
        self.joint_state()
            .to_density()
            .partial_trace(&ALICE_REG)
            .expect("register factors exist")
    }
}

/// Input to Bob's controlled unitary: a pure or mixed polarization qubit.
#[derive(Debug, Clone, Copy)]
pub enum QubitInput<'a> {
    Pure(&'a PureState),
    Mixed(&'a DensityMatrix),
}

impl<'a> From<&'a PureState> for QubitInput<'a> {
    fn from(s: &'a PureState) -> Self {
        QubitInput::Pure(s)
    }
}

impl<'a> From<&'a DensityMatrix> for QubitInput<'a> {
    fn from(s: &'a DensityMatrix) -> Self {
        QubitInput::Mixed(s)
    }
}

/// Bob's register state after the controlled network operation, using the
/// standard network and the computational register basis.
pub fn rho_b<'a>(sigma: impl Into<QubitInput<'a>>, source: &VirtualSource) -> Result<DensityMatrix> {
    let id = DMatrix::identity(4, 4);
    rho_b_with(sigma.into(), source, &LonNetwork::standard(), &id)
}

/// Bob's register state for an arbitrary network and register basis. The
/// columns of `register_basis` are the vectors `|b_i>`.
pub fn rho_b_with(
    sigma: QubitInput<'_>,
    source: &VirtualSource,
    network: &LonNetwork,
    register_basis: &DMatrix<C64>,
) -> Result<DensityMatrix> {
    if register_basis.nrows() != 4 || register_basis.ncols() != 4 {
        return Err(Error::DimensionMismatch {
            left: register_basis.nrows(),
            right: 4,
        });
    }
    match sigma {
        QubitInput::Pure(s) => rho_b_pure(s, source, network, register_basis),
        QubitInput::Mixed(rho) => {
            if rho.labels() != [POL] {
                return Err(Error::UnknownFactor(rho.labels().join(",")));
            }
            let eig = rho.entries().clone().symmetric_eigen();
            let mut parts = Vec::new();
            for (k, w) in eig.eigenvalues.iter().enumerate() {
                if *w <= EXACT_TOL {
                    continue;
                }
                let v = eig.eigenvectors.column(k);
                let pure = PureState::normalized(&[POL], v.iter().copied().collect())?;
                parts.push((*w, rho_b_pure(&pure, source, network, register_basis)?));
            }
            let total: f64 = parts.iter().map(|(w, _)| w).sum();
            let weighted: Vec<(f64, &DensityMatrix)> =
                parts.iter().map(|(w, m)| (w / total, m)).collect();
            DensityMatrix::mixture(&weighted)
        }
    }
}

fn rho_b_pure(
    sigma: &PureState,
    source: &VirtualSource,
    network: &LonNetwork,
    register_basis: &DMatrix<C64>,
) -> Result<DensityMatrix> {
    // |phi> = sum_i sqrt(p_i) |b_i>_B (U_i |sigma>) over B x pol x path.
    let mut amps = vec![C64::default(); 16];
    for p in PathSetting::ALL {
        let i = p.index();
        let w = source.probabilities[i].sqrt();
        if w == 0.0 {
            continue;
        }
        let out = network.isometry(p).apply(sigma)?;
        for b in 0..4 {
            let coef = register_basis[(b, i)] * w;
            for (k, a) in out.amplitudes().iter().enumerate() {
                amps[4 * b + k] += coef * a;
            }
        }
    }
    let labels = [BOB_REG[0], BOB_REG[1], POL, PATH];
    // A faulty network need not be an isometry, so renormalize before tracing.
    let phi = PureState::normalized(&labels, amps)?;
    phi.to_density().partial_trace(&BOB_REG)
}

/// Hybrid polarization-path Bell states; D1..D4 project onto these in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HybridBell {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl HybridBell {
    pub const ALL: [HybridBell; 4] = [
        HybridBell::PhiPlus,
        HybridBell::PhiMinus,
        HybridBell::PsiPlus,
        HybridBell::PsiMinus,
    ];

    /// Amplitudes over `(H,inp1), (H,inp2), (V,inp1), (V,inp2)`.
    pub fn amplitudes(self) -> [f64; 4] {
        let h = FRAC_1_SQRT_2;
        match self {
            HybridBell::PhiPlus => [h, 0.0, 0.0, h],
            HybridBell::PhiMinus => [h, 0.0, 0.0, -h],
            HybridBell::PsiPlus => [0.0, h, h, 0.0],
            HybridBell::PsiMinus => [0.0, h, -h, 0.0],
        }
    }

    pub fn state(self) -> PureState {
        PureState::new(&OPTICAL, self.amplitudes().iter().map(|&a| r(a)).collect())
            .expect("Bell states are normalized")
    }
}

/// Coefficients `<bell_k|state>` in the order phi+, phi-, psi+, psi-.
pub fn hybrid_bell_expand(state: &PureState) -> Result<[C64; 4]> {
    if state.labels() != OPTICAL {
        return Err(Error::UnknownFactor(state.labels().join(",")));
    }
    let mut out = [C64::default(); 4];
    for (k, bell) in HybridBell::ALL.iter().enumerate() {
        out[k] = bell
            .amplitudes()
            .iter()
            .zip(state.amplitudes())
            .map(|(b, a)| a * b)
            .sum();
    }
    Ok(out)
}
