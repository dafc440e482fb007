//! Two-atom model in the Dicke basis: parameters, dipole coupling, the
//! conditional Hamiltonian and the two emission channels.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix9 = SMatrix<C64, 9, 9>;
pub type Vector9 = SVector<C64, 9>;
pub type RealMatrix9 = SMatrix<f64, 9, 9>;

pub const DIM: usize = 9;

/// Dicke basis states in their fixed matrix order.
///
/// `s_jk`/`a_jk` are the symmetric/antisymmetric combinations of one atom in
/// level j and the other in level k, with the phase `i|a_jk> = (|jk> - |kj>)/sqrt 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    G = 0,
    S12 = 1,
    A12 = 2,
    S13 = 3,
    A13 = 4,
    S23 = 5,
    A23 = 6,
    E2 = 7,
    E3 = 8,
}

impl Basis {
    pub const ALL: [Basis; 9] = [
        Basis::G,
        Basis::S12,
        Basis::A12,
        Basis::S13,
        Basis::A13,
        Basis::S23,
        Basis::A23,
        Basis::E2,
        Basis::E3,
    ];

    #[inline]
    pub fn idx(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::G => "g",
            Basis::S12 => "s12",
            Basis::A12 => "a12",
            Basis::S13 => "s13",
            Basis::A13 => "a13",
            Basis::S23 => "s23",
            Basis::A23 => "a23",
            Basis::E2 => "e2",
            Basis::E3 => "e3",
        }
    }

    /// Parity under exchange of the two atoms.
    pub fn swap_parity(self) -> f64 {
        match self {
            Basis::A12 | Basis::A13 | Basis::A23 => -1.0,
            _ => 1.0,
        }
    }
}

/// Laser and decay parameters, all rates in units of `a3`.
///
/// The strong laser is on resonance and the weak transition does not decay;
/// both are fixed by the model (see [`ModelParams::DELTA3`], [`ModelParams::A2`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub a3: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub delta2: f64,
}

impl ModelParams {
    pub const DELTA3: f64 = 0.0;
    pub const A2: f64 = 0.0;

    pub fn new(a3: f64, omega2: f64, omega3: f64, delta2: f64) -> Result<Self> {
        let p = ModelParams { a3, omega2, omega3, delta2 };
        p.validate()?;
        Ok(p)
    }

    /// A3 = 1, Omega3 = 0.5, Omega2 = 0.01, Delta2 = 0.
    pub fn reference() -> Self {
        ModelParams { a3: 1.0, omega2: 0.01, omega3: 0.5, delta2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a3.is_finite() && self.a3 > 0.0) {
            return Err(Error::Domain(format!("a3 must be > 0, got {}", self.a3)));
        }
        if !(self.omega2.is_finite() && self.omega2 >= 0.0) {
            return Err(Error::Domain(format!("omega2 must be >= 0, got {}", self.omega2)));
        }
        if !(self.omega3.is_finite() && self.omega3 > 0.0) {
            return Err(Error::Domain(format!("omega3 must be > 0, got {}", self.omega3)));
        }
        if !self.delta2.is_finite() {
            return Err(Error::Domain("delta2 must be finite".into()));
        }
        Ok(())
    }

    /// Warnings for a weak drive that is not weak enough for the
    /// telegraph description (Omega2 small against Omega3 and Omega3^2/A3).
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.omega2 > 0.1 * self.omega3 {
            w.push(format!("omega2 = {} exceeds 0.1*omega3 = {}", self.omega2, 0.1 * self.omega3));
        }
        let lim = 0.1 * self.omega3 * self.omega3 / self.a3;
        if self.omega2 > lim {
            w.push(format!("omega2 = {} exceeds 0.1*omega3^2/a3 = {}", self.omega2, lim));
        }
        w
    }

    pub fn with_omega2(mut self, omega2: f64) -> Self {
        self.omega2 = omega2;
        self
    }

    pub fn with_delta2(mut self, delta2: f64) -> Self {
        self.delta2 = delta2;
        self
    }

    /// Single-atom photon emission rate in a light period,
    /// `A3 Omega3^2 / (A3^2 + 2 Omega3^2)`.
    pub fn single_atom_intensity(&self) -> f64 {
        let o2 = self.omega3 * self.omega3;
        self.a3 * o2 / (self.a3 * self.a3 + 2.0 * o2)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Pair geometry. `r` is measured in units of `lambda31`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub r: f64,
    pub theta3: f64,
    pub lambda31: f64,
}

impl Geometry {
    pub fn new(r: f64) -> Self {
        Geometry { r, theta3: PI / 2.0, lambda31: 1.0 }
    }

    pub fn with_theta(mut self, theta3: f64) -> Self {
        self.theta3 = theta3;
        self
    }
}

/// Complex dipole-dipole coupling constants (units of `a3`).
/// The weak-transition constant vanishes identically because A2 = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleCoupling {
    pub c3: C64,
}

impl DipoleCoupling {
    pub fn new(c3: C64) -> Self {
        DipoleCoupling { c3 }
    }

    pub fn none() -> Self {
        DipoleCoupling { c3: C64::new(0.0, 0.0) }
    }

    pub fn c2(&self) -> C64 {
        C64::new(0.0, 0.0)
    }

    pub fn gamma_plus(&self, a3: f64) -> f64 {
        a3 + self.c3.re
    }

    pub fn gamma_minus(&self, a3: f64) -> f64 {
        a3 - self.c3.re
    }
}

/// Dipole-dipole coupling constant of the strong transition at separation `geometry.r`.
///
/// With `x = k31 r`:
/// `C3 = (3 A3 / 2) e^{ix} [ sin^2(theta)/(ix) + (1 - 3 cos^2(theta)) (1/x^2 - 1/(i x^3)) ]`.
pub fn compute_c3(geometry: &Geometry, a3: f64) -> Result<DipoleCoupling> {
    if !(geometry.r.is_finite() && geometry.r > 0.0) {
        return Err(Error::Domain(format!("separation r must be > 0, got {}", geometry.r)));
    }
    if !(geometry.lambda31.is_finite() && geometry.lambda31 > 0.0) {
        return Err(Error::Domain("lambda31 must be > 0".into()));
    }
    if !(0.0..=PI).contains(&geometry.theta3) {
        return Err(Error::Domain(format!("theta3 must lie in [0, pi], got {}", geometry.theta3)));
    }
    let x = 2.0 * PI * geometry.r / geometry.lambda31;
    let cos2 = geometry.theta3.cos().powi(2);
    let i = C64::i();
    let far = (1.0 - cos2) / (i * x);
    let near = (C64::from(1.0 / (x * x)) - 1.0 / (i * x * x * x)) * (1.0 - 3.0 * cos2);
    let c3 = 1.5 * a3 * C64::from_polar(1.0, x) * (far + near);
    Ok(DipoleCoupling { c3 })
}

/// Conditional Hamiltonian pieces and emission channels in the Dicke basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeOperators {
    pub params: ModelParams,
    pub coupling: DipoleCoupling,
    /// Omega2-independent part of the conditional Hamiltonian (non-Hermitian).
    pub h0: Matrix9,
    /// Weak-drive part, linear in Omega2 and Hermitian.
    pub h1: Matrix9,
    pub rplus: RealMatrix9,
    pub rminus: RealMatrix9,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

fn add_hermitian_pair(m: &mut Matrix9, i: Basis, j: Basis, v: f64) {
    m[(i.idx(), j.idx())] += C64::from(v);
    m[(j.idx(), i.idx())] += C64::from(v);
}

pub fn build_operators(params: &ModelParams, coupling: &DipoleCoupling) -> Result<DickeOperators> {
    use Basis::*;
    params.validate()?;
    let a = params.a3;
    let o3 = params.omega3;
    let o2 = params.omega2;
    let d = params.delta2;
    let c = coupling.c3;
    let mi = -C64::i();

    let mut h0 = Matrix9::zeros();
    h0[(S23.idx(), S23.idx())] += mi * 0.5 * a;
    h0[(A23.idx(), A23.idx())] += mi * 0.5 * a;
    h0[(S13.idx(), S13.idx())] += mi * 0.5 * (a + c);
    h0[(A13.idx(), A13.idx())] += mi * 0.5 * (a - c);
    h0[(E3.idx(), E3.idx())] += mi * a;
    add_hermitian_pair(&mut h0, G, S13, SQRT_2 * o3 / 2.0);
    add_hermitian_pair(&mut h0, S13, E3, SQRT_2 * o3 / 2.0);
    add_hermitian_pair(&mut h0, S12, S23, o3 / 2.0);
    add_hermitian_pair(&mut h0, A12, A23, -o3 / 2.0);
    h0[(E2.idx(), E2.idx())] -= C64::from(2.0 * d);
    for k in [S12, A12, S23, A23] {
        h0[(k.idx(), k.idx())] -= C64::from(d);
    }

    let mut h1 = Matrix9::zeros();
    add_hermitian_pair(&mut h1, G, S12, SQRT_2 * o2 / 2.0);
    add_hermitian_pair(&mut h1, S12, E2, SQRT_2 * o2 / 2.0);
    add_hermitian_pair(&mut h1, S13, S23, o2 / 2.0);
    add_hermitian_pair(&mut h1, A13, A23, o2 / 2.0);

    let mut rplus = RealMatrix9::zeros();
    rplus[(G.idx(), S13.idx())] = 1.0;
    rplus[(S13.idx(), E3.idx())] = 1.0;
    rplus[(S12.idx(), S23.idx())] = FRAC_1_SQRT_2;
    rplus[(A12.idx(), A23.idx())] = -FRAC_1_SQRT_2;

    let mut rminus = RealMatrix9::zeros();
    rminus[(G.idx(), A13.idx())] = 1.0;
    rminus[(A13.idx(), E3.idx())] = 1.0;
    rminus[(S12.idx(), A23.idx())] = FRAC_1_SQRT_2;
    rminus[(A12.idx(), S23.idx())] = FRAC_1_SQRT_2;

    Ok(DickeOperators {
        params: *params,
        coupling: *coupling,
        h0,
        h1,
        rplus,
        rminus,
        gamma_plus: coupling.gamma_plus(a),
        gamma_minus: coupling.gamma_minus(a),
    })
}

impl DickeOperators {
    pub fn h_cond(&self) -> Matrix9 {
        self.h0 + self.h1
    }

    pub fn rplus_c(&self) -> Matrix9 {
        self.rplus.map(C64::from)
    }

    pub fn rminus_c(&self) -> Matrix9 {
        self.rminus.map(C64::from)
    }

    /// `gamma+ R+ rho R+^T + gamma- R- rho R-^T`.
    pub fn reset_map(&self, rho: &Matrix9) -> Matrix9 {
        let rp = self.rplus_c();
        let rm = self.rminus_c();
        (rp * rho * rp.transpose()) * C64::from(self.gamma_plus)
            + (rm * rho * rm.transpose()) * C64::from(self.gamma_minus)
    }

    /// Total photon emission rate out of `rho`.
    pub fn emission_rate(&self, rho: &Matrix9) -> f64 {
        self.reset_map(rho).trace().re
    }

    /// Both channel rates must be non-negative for a jump unraveling.
    pub fn require_valid_channels(&self) -> Result<()> {
        if self.gamma_minus < 0.0 || self.gamma_plus < 0.0 {
            return Err(Error::Regime(format!(
                "|Re C3| = {} exceeds a3 = {}; channel rates {} / {}",
                self.coupling.c3.re.abs(),
                self.params.a3,
                self.gamma_plus,
                self.gamma_minus
            )));
        }
        Ok(())
    }
}

/// Atom-exchange operator in the Dicke basis (diagonal +-1).
pub fn swap_operator() -> RealMatrix9 {
    RealMatrix9::from_diagonal(&SVector::<f64, 9>::from_fn(|i, _| Basis::ALL[i].swap_parity()))
}

pub fn basis_ket(b: Basis) -> Vector9 {
    let mut v = Vector9::zeros();
    v[b.idx()] = C64::from(1.0);
    v
}

/// Row-major text dump, one matrix row per line, entries as `re,im`.
pub fn debug_dump(m: &Matrix9) -> String {
    let mut out = String::new();
    for i in 0..DIM {
        let row: Vec<String> = (0..DIM)
            .map(|j| format!("{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_debug_dump(s: &str) -> Result<Matrix9> {
    let mut m = Matrix9::zeros();
    let rows: Vec<&str> = s.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != DIM {
        return Err(Error::Parse(format!("expected {DIM} rows, got {}", rows.len())));
    }
    for (i, line) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != DIM {
            return Err(Error::Parse(format!("row {i}: expected {DIM} entries")));
        }
        for (j, cell) in cells.iter().enumerate() {
            let (re, im) = cell
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad entry '{cell}'")))?;
            let re: f64 = re.parse().map_err(|_| Error::Parse(format!("bad number '{re}'")))?;
            let im: f64 = im.parse().map_err(|_| Error::Parse(format!("bad number '{im}'")))?;
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}
