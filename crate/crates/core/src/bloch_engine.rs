//! Bloch equation `d rho/dt = L rho` for the two-atom system, its
//! quasi-stationary subspace states and the first-order weak-drive correction.

use nalgebra::{DMatrix, DVector, Schur};
use std::f64::consts::SQRT_2;

use crate::atomic_model::{build_operators, Basis, DickeOperators, DipoleCoupling, Matrix9, ModelParams, C64, DIM};
use crate::error::{Error, Result};

pub const SUPER_DIM: usize = DIM * DIM;

/// Intensity subspaces: no atom, one atom, or both atoms cycling on the strong transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubspaceId {
    Dark,
    Inner,
    Outer,
}

impl SubspaceId {
    pub const ALL: [SubspaceId; 3] = [SubspaceId::Dark, SubspaceId::Inner, SubspaceId::Outer];

    /// Number of fluorescing atoms.
    pub fn level(self) -> u8 {
        match self {
            SubspaceId::Dark => 0,
            SubspaceId::Inner => 1,
            SubspaceId::Outer => 2,
        }
    }

    pub fn from_level(level: u8) -> Option<Self> {
        match level {
            0 => Some(SubspaceId::Dark),
            1 => Some(SubspaceId::Inner),
            2 => Some(SubspaceId::Outer),
            _ => None,
        }
    }

    pub fn states(self) -> &'static [Basis] {
        use Basis::*;
        match self {
            SubspaceId::Dark => &[E2],
            SubspaceId::Inner => &[S12, A12, S23, A23],
            SubspaceId::Outer => &[G, S13, A13, E3],
        }
    }

    pub fn of(b: Basis) -> Self {
        use Basis::*;
        match b {
            E2 => SubspaceId::Dark,
            S12 | A12 | S23 | A23 => SubspaceId::Inner,
            G | S13 | A13 | E3 => SubspaceId::Outer,
        }
    }

    pub fn population(self, rho: &Matrix9) -> f64 {
        self.states().iter().map(|b| rho[(b.idx(), b.idx())].re).sum()
    }
}

/// A validated density matrix in the Dicke basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Matrix9);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-12;
    pub const EIGEN_TOL: f64 = 1e-10;

    pub fn new(m: Matrix9) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::Domain(format!("matrix is not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr - C64::from(1.0)).norm() > Self::TRACE_TOL {
            return Err(Error::Domain(format!("trace is {tr}, expected 1")));
        }
        let h = (m + m.adjoint()) * C64::from(0.5);
        let min = h.symmetric_eigenvalues().min();
        if min < -Self::EIGEN_TOL {
            return Err(Error::Domain(format!("negative eigenvalue {min:e}")));
        }
        Ok(DensityMatrix(m))
    }

    pub fn pure(psi: &crate::atomic_model::Vector9) -> Result<Self> {
        let n = psi.norm_squared();
        if n <= 0.0 {
            return Err(Error::Domain("zero state vector".into()));
        }
        Self::new(psi * psi.adjoint() / C64::from(n))
    }

    pub fn projector(b: Basis) -> Self {
        let mut m = Matrix9::zeros();
        m[(b.idx(), b.idx())] = C64::from(1.0);
        DensityMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix9 {
        &self.0
    }

    pub fn into_inner(self) -> Matrix9 {
        self.0
    }

    pub fn population(&self, sub: SubspaceId) -> f64 {
        sub.population(&self.0)
    }
}

/// Row-major vectorisation: entry (i, j) goes to index `9 i + j`.
pub fn vectorize(m: &Matrix9) -> DVector<C64> {
    DVector::from_fn(SUPER_DIM, |k, _| m[(k / DIM, k % DIM)])
}

pub fn unvectorize(v: &DVector<C64>) -> Matrix9 {
    Matrix9::from_fn(|i, j| v[DIM * i + j])
}

fn kron9(a: &Matrix9, b: &Matrix9) -> DMatrix<C64> {
    DMatrix::from_fn(SUPER_DIM, SUPER_DIM, |r, c| a[(r / DIM, c / DIM)] * b[(r % DIM, c % DIM)])
}

/// `L rho = -i (H rho - rho H^dagger) + gamma+ R+ rho R+^T + gamma- R- rho R-^T`,
/// split as `L = L0 + L_drive` with the drive part linear in Omega2.
#[derive(Debug, Clone)]
pub struct BlochGenerator {
    pub ops: DickeOperators,
}

impl BlochGenerator {
    pub fn new(ops: DickeOperators) -> Self {
        BlochGenerator { ops }
    }

    pub fn from_params(params: &ModelParams, coupling: &DipoleCoupling) -> Result<Self> {
        Ok(Self::new(build_operators(params, coupling)?))
    }

    fn commutator_part(h: &Matrix9, rho: &Matrix9) -> Matrix9 {
        (h * rho - rho * h.adjoint()) * (-C64::i())
    }

    pub fn apply(&self, rho: &Matrix9) -> Matrix9 {
        Self::commutator_part(&self.ops.h_cond(), rho) + self.ops.reset_map(rho)
    }

    pub fn apply_l0(&self, rho: &Matrix9) -> Matrix9 {
        Self::commutator_part(&self.ops.h0, rho) + self.ops.reset_map(rho)
    }

    pub fn apply_drive(&self, rho: &Matrix9) -> Matrix9 {
        Self::commutator_part(&self.ops.h1, rho)
    }

    fn hamiltonian_super(h: &Matrix9) -> DMatrix<C64> {
        let id = Matrix9::identity();
        (kron9(h, &id) - kron9(&id, &h.conjugate())) * (-C64::i())
    }

    fn reset_super(&self) -> DMatrix<C64> {
        let rp = self.ops.rplus_c();
        let rm = self.ops.rminus_c();
        kron9(&rp, &rp) * C64::from(self.ops.gamma_plus) + kron9(&rm, &rm) * C64::from(self.ops.gamma_minus)
    }

    /// 81x81 matrix of `L0` acting on row-major vectorised density matrices.
    pub fn superoperator_l0(&self) -> DMatrix<C64> {
        Self::hamiltonian_super(&self.ops.h0) + self.reset_super()
    }

    pub fn superoperator_drive(&self) -> DMatrix<C64> {
        Self::hamiltonian_super(&self.ops.h1)
    }

    pub fn superoperator(&self) -> DMatrix<C64> {
        Self::hamiltonian_super(&self.ops.h_cond()) + self.reset_super()
    }

    /// `L0` in an orthonormal basis of Hermitian matrices. `L0` maps Hermitian
    /// matrices to Hermitian matrices, so this representation is real.
    pub fn real_representation_l0(&self) -> DMatrix<f64> {
        let basis = hermitian_basis();
        let images: Vec<Matrix9> = basis.iter().map(|b| self.apply_l0(b)).collect();
        DMatrix::from_fn(SUPER_DIM, SUPER_DIM, |k, l| (basis[k].adjoint() * images[l]).trace().re)
    }

    /// Eigenvalues of `L0`, sorted by decreasing real part.
    pub fn l0_eigenvalues(&self) -> Result<Vec<C64>> {
        let schur = Schur::try_new(self.real_representation_l0(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("Schur iteration for L0 did not converge".into()))?;
        let mut ev: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.re.total_cmp(&a.re));
        Ok(ev)
    }
}

/// Orthonormal (Frobenius) basis of 9x9 Hermitian matrices.
pub fn hermitian_basis() -> Vec<Matrix9> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(SUPER_DIM);
    for i in 0..DIM {
        let mut m = Matrix9::zeros();
        m[(i, i)] = C64::from(1.0);
        out.push(m);
        for j in i + 1..DIM {
            let mut re = Matrix9::zeros();
            re[(i, j)] = C64::from(h);
            re[(j, i)] = C64::from(h);
            out.push(re);
            let mut im = Matrix9::zeros();
            im[(i, j)] = C64::new(0.0, -h);
            im[(j, i)] = C64::new(0.0, h);
            out.push(im);
        }
    }
    out
}

/// Zeroth-order (Omega2 = 0) stationary state of a subspace, trace 1.
///
/// Inner: the state symmetric under atom exchange (one atom shelved, the other
/// in its single-atom steady state). Outer: the coupled two-atom steady state.
pub fn quasi_stationary_state(sub: SubspaceId, params: &ModelParams, coupling: &DipoleCoupling) -> Result<DensityMatrix> {
    use Basis::*;
    params.validate()?;
    let a = params.a3;
    let o = params.omega3;
    let mut m = Matrix9::zeros();
    let i = C64::i();
    let mut set = |r: Basis, c: Basis, v: C64| {
        m[(r.idx(), c.idx())] = v;
        m[(c.idx(), r.idx())] = v.conj();
    };
    match sub {
        SubspaceId::Dark => set(E2, E2, C64::from(1.0)),
        SubspaceId::Inner => {
            let d = a * a + 2.0 * o * o;
            let big = (a * a + o * o) / (2.0 * d);
            let small = o * o / (2.0 * d);
            let coh = i * (o * a / (2.0 * d));
            set(S12, S12, C64::from(big));
            set(A12, A12, C64::from(big));
            set(S23, S23, C64::from(small));
            set(A23, A23, C64::from(small));
            set(S12, S23, coh);
            set(A12, A23, -coh);
        }
        SubspaceId::Outer => {
            let c = coupling.c3;
            let (a2, o2) = (a * a, o * o);
            let gg = (a2 + o2).powi(2) + a2 * c.norm_sqr() + 2.0 * a2 * a * c.re;
            let norm = gg + o2 * (2.0 * a2 + o2) + 2.0 * o2 * o2;
            assert!(norm > 0.0, "outer-state normalisation vanished");
            set(G, G, C64::from(gg));
            set(G, S13, i * (SQRT_2 * a * o) * (a2 + o2 + a * c));
            set(G, E3, -(a * o2) * (a + c));
            set(S13, S13, C64::from(o2 * (2.0 * a2 + o2)));
            set(S13, E3, i * (SQRT_2 * a * o2 * o));
            set(A13, A13, C64::from(o2 * o2));
            set(E3, E3, C64::from(o2 * o2));
            m /= C64::from(norm);
        }
    }
    DensityMatrix::new(m)
}

/// Numerical null space of `L0` with its left/right singular vectors and a
/// group-inverse solver for `L0 x = y` on the range.
pub struct KernelSolver {
    u: DMatrix<C64>,
    v: DMatrix<C64>,
    s: DVector<f64>,
    null: Vec<usize>,
}

impl KernelSolver {
    pub const NULL_TOL: f64 = 1e-9;

    pub fn new(l0: DMatrix<C64>) -> Result<Self> {
        let svd = l0.svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
        let v = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not return V".into()))?
            .adjoint();
        let s = svd.singular_values;
        let smax = s.max();
        let null: Vec<usize> = (0..s.len()).filter(|&k| s[k] < Self::NULL_TOL * smax).collect();
        Ok(KernelSolver { u, v, s, null })
    }

    pub fn kernel_dim(&self) -> usize {
        self.null.len()
    }

    /// Right null vectors as columns.
    pub fn right_null(&self) -> DMatrix<C64> {
        DMatrix::from_fn(SUPER_DIM, self.null.len(), |r, c| self.v[(r, self.null[c])])
    }

    pub fn left_null(&self) -> DMatrix<C64> {
        DMatrix::from_fn(SUPER_DIM, self.null.len(), |r, c| self.u[(r, self.null[c])])
    }

    /// Largest component of `y` along the left null space, relative to `|y|`.
    pub fn kernel_residual(&self, y: &DVector<C64>) -> f64 {
        let n = y.norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.left_null().adjoint() * y).iter().map(|z| z.norm()).fold(0.0, f64::max) / n
    }

    /// Solution of `L0 x = y` with no component in the kernel of `L0` as seen by
    /// its left null functionals (the group inverse applied to `y`).
    pub fn solve(&self, y: &DVector<C64>) -> DVector<C64> {
        let mut x = DVector::<C64>::zeros(SUPER_DIM);
        for k in 0..self.s.len() {
            if self.null.contains(&k) {
                continue;
            }
            let coef = self.u.column(k).dotc(y) / C64::from(self.s[k]);
            x += self.v.column(k) * coef;
        }
        if self.null.is_empty() {
            return x;
        }
        let u0 = self.left_null();
        let v0 = self.right_null();
        let gram = u0.adjoint() * &v0;
        let proj = u0.adjoint() * &x;
        if let Some(c) = gram.lu().solve(&proj) {
            x -= v0 * c;
        }
        x
    }
}

/// First-order weak-drive correction `rho1 = lim (eps - L0)^{-1} L_drive rho0`
/// for a start in `sub`. Entries scale linearly in Omega2; the trace of every
/// subspace block vanishes.
pub fn perturbed_state(sub: SubspaceId, params: &ModelParams, coupling: &DipoleCoupling) -> Result<Matrix9> {
    let gen = BlochGenerator::from_params(params, coupling)?;
    let solver = KernelSolver::new(gen.superoperator_l0())?;
    perturbed_state_with(&gen, &solver, sub)
}

/// Same as [`perturbed_state`] but reusing a generator and its kernel solver.
pub fn perturbed_state_with(gen: &BlochGenerator, solver: &KernelSolver, sub: SubspaceId) -> Result<Matrix9> {
    let rho0 = quasi_stationary_state(sub, &gen.ops.params, &gen.ops.coupling)?;
    let b = vectorize(&gen.apply_drive(rho0.matrix()));
    if b.norm() == 0.0 {
        return Ok(Matrix9::zeros());
    }
    let resid = solver.kernel_residual(&b);
    if resid > 1e-8 {
        return Err(Error::Numerical(format!(
            "drive has a component {resid:e} along the kernel of L0"
        )));
    }
    let x = solver.solve(&(-b));
    Ok(unvectorize(&x))
}

/// Integration controls for [`propagate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-12, min_step: 1e-12 }
    }
}

fn hermitize(m: &Matrix9) -> Matrix9 {
    (m + m.adjoint()) * C64::from(0.5)
}

/// `exp(L t) rho` by adaptive Dormand-Prince 5(4) integration; the state is
/// re-symmetrised after every accepted step.
pub fn propagate(rho: &Matrix9, t: f64, gen: &BlochGenerator) -> Result<Matrix9> {
    propagate_with(rho, t, gen, Tolerances::default())
}

pub fn propagate_with(rho: &Matrix9, t: f64, gen: &BlochGenerator, tol: Tolerances) -> Result<Matrix9> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("propagation time must be >= 0, got {t}")));
    }
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let f = |y: &Matrix9| gen.apply(y);
    let c = |x: f64| C64::from(x);
    let mut y = *rho;
    let mut time = 0.0;
    let mut h = (0.05f64).min(t);
    let mut k1 = f(&y);
    while time < t {
        if t - time < h {
            h = t - time;
        }
        let k2 = f(&(y + k1 * c(h * A21)));
        let k3 = f(&(y + (k1 * c(A31) + k2 * c(A32)) * c(h)));
        let k4 = f(&(y + (k1 * c(A41) + k2 * c(A42) + k3 * c(A43)) * c(h)));
        let k5 = f(&(y + (k1 * c(A51) + k2 * c(A52) + k3 * c(A53) + k4 * c(A54)) * c(h)));
        let k6 = f(&(y + (k1 * c(A61) + k2 * c(A62) + k3 * c(A63) + k4 * c(A64) + k5 * c(A65)) * c(h)));
        let ynew = y + (k1 * c(B1) + k3 * c(B3) + k4 * c(B4) + k5 * c(B5) + k6 * c(B6)) * c(h);
        let k7 = f(&ynew);
        let err = (k1 * c(E1) + k3 * c(E3) + k4 * c(E4) + k5 * c(E5) + k6 * c(E6) + k7 * c(E7)) * c(h);
        let mut en = 0.0f64;
        for idx in 0..DIM * DIM {
            let sc = tol.atol + tol.rtol * y[idx].norm().max(ynew[idx].norm());
            en = en.max(err[idx].norm() / sc);
        }
        if en <= 1.0 {
            time += h;
            y = hermitize(&ynew);
            k1 = f(&y);
        }
        let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < tol.min_step && time < t {
            return Err(Error::Integration(format!("step size underflow at t = {time}")));
        }
    }
    Ok(y)
}

/// `exp(L t)` as an 81x81 matrix, useful for repeated propagation over one interval.
pub fn propagator(gen: &BlochGenerator, t: f64) -> DMatrix<C64> {
    (gen.superoperator() * C64::from(t)).exp()
}
