//! Transition rates between dark, single and double intensity periods.
//!
//! Three routes are provided: closed forms to first order in Re C3, an exact
//! solve of the 8x8 inner/outer coherence system, and population derivatives
//! of the propagated Bloch equations.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use serde::Serialize;
use std::f64::consts::SQRT_2;

use crate::atomic_model::{Basis, DipoleCoupling, ModelParams, C64};
use crate::bloch_engine::{propagate, quasi_stationary_state, BlochGenerator, SubspaceId};
use crate::error::{Error, Result};

pub type Matrix8 = SMatrix<C64, 8, 8>;
pub type Vector8 = SVector<C64, 8>;

/// Separations below this (in wavelengths) are outside the telegraph description.
pub const TRUSTED_MIN_R: f64 = 0.5;

pub fn is_trusted_distance(r: f64) -> bool {
    r >= TRUSTED_MIN_R
}

/// Density-matrix entries of the coherence vector, in solve order.
pub const COHERENCE_ENTRIES: [(Basis, Basis); 8] = [
    (Basis::S12, Basis::G),
    (Basis::S12, Basis::S13),
    (Basis::S12, Basis::E3),
    (Basis::S23, Basis::G),
    (Basis::S23, Basis::S13),
    (Basis::S23, Basis::E3),
    (Basis::A12, Basis::A13),
    (Basis::A23, Basis::A13),
];

/// Which quasi-stationary state drives the coherence system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveKind {
    /// Start in a single-intensity period.
    Inner,
    /// Start in a double-intensity period.
    Outer,
}

/// Coherence matrix at zero detuning, entered by hand from its closed form.
pub fn transcribed_matrix(a3: f64, omega3: f64, c3: C64) -> Matrix8 {
    let a = C64::from(a3);
    let o = omega3;
    let cc = c3.conj();
    let rc = c3.re;
    let i = C64::i();
    let z = C64::from(0.0);
    let r = |x: f64| C64::from(x);
    let rows: [[C64; 8]; 8] = [
        [z, -i * o / SQRT_2, z, i * o / 2.0, r(-(a3 + rc) / SQRT_2), z, z, r((rc - a3) / SQRT_2)],
        [-i * o / SQRT_2, (a + cc) / 2.0, -i * o / SQRT_2, z, i * o / 2.0, r(-(a3 + rc) / SQRT_2), z, z],
        [z, -i * o / SQRT_2, a, z, z, i * o / 2.0, z, z],
        [i * o / 2.0, z, z, a / 2.0, -i * o / SQRT_2, z, z, z],
        [z, i * o / 2.0, z, -i * o / SQRT_2, a + cc / 2.0, -i * o / SQRT_2, z, z],
        [z, z, i * o / 2.0, z, -i * o / SQRT_2, a * 1.5, z, z],
        [z, z, z, z, z, r(-(a3 - rc) / SQRT_2), (a - cc) / 2.0, -i * o / 2.0],
        [z, z, z, z, z, z, -i * o / 2.0, a - cc / 2.0],
    ];
    Matrix8::from_fn(|k, l| rows[k][l])
}

/// Drive vectors for inner (single-intensity) and outer (double-intensity) starts,
/// entered by hand from their closed forms.
pub fn transcribed_drive(params: &ModelParams, coupling: &DipoleCoupling, kind: DriveKind) -> Vector8 {
    let a = params.a3;
    let o = params.omega3;
    let o2 = params.omega2;
    let i = C64::i();
    let r = C64::from;
    match kind {
        DriveKind::Inner => {
            let d = a * a + 2.0 * o * o;
            let pre = i * (o2 * o / (4.0 * d));
            let v = [
                r(SQRT_2 * (o * o + a * a) / o),
                i * a,
                r(0.0),
                -i * (SQRT_2 * a),
                r(o),
                r(0.0),
                -i * a,
                r(o),
            ];
            Vector8::from_fn(|k, _| pre * v[k])
        }
        DriveKind::Outer => {
            let (rc, ic) = (coupling.c3.re, coupling.c3.im);
            let n = 4.0 * o.powi(4) + 4.0 * o * o * a * a + a * a * rc * rc + 2.0 * a.powi(3) * rc + a * a * ic * ic + a.powi(4);
            let pre = -i * (o2 / (SQRT_2 * n));
            let v = [
                r(o.powi(4) + 2.0 * o * o * a * a + a * a * rc * rc + 2.0 * a.powi(3) * rc + a * a * ic * ic + a.powi(4)),
                i * (o * SQRT_2 * a) * (a * a + a * rc + i * ic * a + o * o),
                -(o * o) * (a + rc + i * ic) * a,
                i * (o * a) * (-o * o - a * a - a * rc + i * ic * a),
                r(o * o * (o * o + 2.0 * a * a) / SQRT_2),
                i * (o.powi(3) * a),
                r(0.0),
                r(o.powi(4) / SQRT_2),
            ];
            Vector8::from_fn(|k, _| pre * v[k])
        }
    }
}

/// The linear system `(A - i Delta2) x = a` for the eight inner/outer coherences.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSystem {
    pub a_matrix: Matrix8,
    pub drive: Vector8,
    pub delta2: f64,
}

impl CoherenceSystem {
    pub const MAX_CONDITION: f64 = 1e8;

    pub fn transcribed(params: &ModelParams, coupling: &DipoleCoupling, kind: DriveKind) -> Self {
        CoherenceSystem {
            a_matrix: transcribed_matrix(params.a3, params.omega3, coupling.c3),
            drive: transcribed_drive(params, coupling, kind),
            delta2: params.delta2,
        }
    }

    /// Same system read off the Bloch generator and the quasi-stationary states.
    pub fn regenerated(params: &ModelParams, coupling: &DipoleCoupling, kind: DriveKind) -> Result<Self> {
        let gen = BlochGenerator::from_params(&params.with_delta2(0.0), coupling)?;
        let index = |(r, c): (Basis, Basis)| 9 * r.idx() + c.idx();
        let l0 = gen.superoperator_l0();
        let a_matrix = Matrix8::from_fn(|k, l| -l0[(index(COHERENCE_ENTRIES[k]), index(COHERENCE_ENTRIES[l]))]);
        let sub = match kind {
            DriveKind::Inner => SubspaceId::Inner,
            DriveKind::Outer => SubspaceId::Outer,
        };
        let rho0 = quasi_stationary_state(sub, params, coupling)?;
        let b = gen.apply_drive(rho0.matrix());
        let drive = Vector8::from_fn(|k, _| {
            let (r, c) = COHERENCE_ENTRIES[k];
            b[(r.idx(), c.idx())]
        });
        Ok(CoherenceSystem { a_matrix, drive, delta2: params.delta2 })
    }

    pub fn shifted_matrix(&self) -> Matrix8 {
        self.a_matrix - Matrix8::identity() * C64::new(0.0, self.delta2)
    }

    pub fn condition_number(&self) -> f64 {
        let s = self.shifted_matrix().singular_values();
        s.max() / s.min()
    }

    pub fn solve(&self) -> Result<Vector8> {
        let m = self.shifted_matrix();
        let cond = self.condition_number();
        if !(cond < Self::MAX_CONDITION) {
            return Err(Error::Regime(format!("coherence system is near-singular (condition number {cond:e})")));
        }
        let x = m
            .lu()
            .solve(&self.drive)
            .ok_or_else(|| Error::Regime("coherence system is singular".into()))?;
        let resid = (m * x - self.drive).norm();
        if resid > 1e-10 * self.drive.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!("coherence solve residual {resid:e}")));
        }
        Ok(x)
    }
}

pub fn solve_coherences(params: &ModelParams, coupling: &DipoleCoupling, kind: DriveKind) -> Result<Vector8> {
    params.validate()?;
    CoherenceSystem::transcribed(params, coupling, kind).solve()
}

/// First-order coherences `(rho1[s12,e2], rho1[s23,e2])` for a start in `initial`.
/// They do not depend on the dipole coupling.
pub fn solve_e2_coherences(params: &ModelParams, initial: SubspaceId) -> Result<(C64, C64)> {
    params.validate()?;
    let (a, o, o2, d) = (params.a3, params.omega3, params.omega2, params.delta2);
    let i = C64::i();
    let b = match initial {
        SubspaceId::Outer => return Ok((C64::from(0.0), C64::from(0.0))),
        SubspaceId::Dark => Vector2::new(-i * (o2 / SQRT_2), C64::from(0.0)),
        SubspaceId::Inner => {
            let rho0 = quasi_stationary_state(SubspaceId::Inner, params, &DipoleCoupling::none())?;
            let m = rho0.matrix();
            let s12 = Basis::S12.idx();
            Vector2::new(
                i * (o2 / SQRT_2) * m[(s12, s12)],
                i * (o2 / SQRT_2) * m[(Basis::S23.idx(), s12)],
            )
        }
    };
    let k = Matrix2::new(C64::from(d), C64::from(o / 2.0), C64::from(o / 2.0), C64::new(d, -a / 2.0));
    let x = k
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("e2 coherence system is singular".into()))?;
    Ok((-i * x[0], -i * x[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateMethod {
    FirstOrderC3,
    ExactSolve,
    Propagation,
    /// Inferred from measured period statistics.
    PeriodStatistics,
}

/// The four nonzero inter-period rates (units of a3). Direct 0<->2 transitions vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionRates {
    pub p01: f64,
    pub p10: f64,
    pub p12: f64,
    pub p21: f64,
    pub method: RateMethod,
}

impl TransitionRates {
    pub fn new(p01: f64, p10: f64, p12: f64, p21: f64, method: RateMethod) -> Self {
        TransitionRates { p01, p10, p12, p21, method }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p01, self.p10, self.p12, self.p21]
    }

    pub fn require_positive(&self) -> Result<()> {
        if self.as_array().iter().all(|&p| p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain(format!("all rates must be > 0, got {:?}", self.as_array())))
        }
    }

    /// Largest relative difference of the four rates.
    pub fn max_rel_diff(&self, other: &TransitionRates) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max)
    }
}

/// First-order rates split as `p = constant + re_c3 * slope` (p12, p21) or C3-free (p01, p10).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderCoefficients {
    pub p01: f64,
    pub p10: f64,
    pub p12: f64,
    pub p12_slope: f64,
    pub p21: f64,
    pub p21_slope: f64,
}

impl FirstOrderCoefficients {
    pub fn rates(&self, re_c3: f64) -> TransitionRates {
        TransitionRates::new(
            self.p01,
            self.p10,
            self.p12 + re_c3 * self.p12_slope,
            self.p21 + re_c3 * self.p21_slope,
            RateMethod::FirstOrderC3,
        )
    }
}

/// `(Omega3^2 - 4 Delta2^2)^2 + 4 A3^2 Delta2^2`.
pub fn pole_denominator(params: &ModelParams) -> f64 {
    let (a, o, d) = (params.a3, params.omega3, params.delta2);
    o.powi(4) - 8.0 * d * d * o * o + 4.0 * a * a * d * d + 16.0 * d.powi(4)
}

pub fn first_order_coefficients(params: &ModelParams) -> Result<FirstOrderCoefficients> {
    params.validate()?;
    let (a, o, w, d) = (params.a3, params.omega3, params.omega2, params.delta2);
    let den = pole_denominator(params);
    if den.abs() <= 1e-9 * a.powi(4) {
        return Err(Error::Pole { delta2: d });
    }
    let (a2, o2, d2) = (a * a, o * o, d * d);
    let dd = a2 + 2.0 * o2;
    let w2 = w * w;
    let p12 = w2 * a * o2 / den;
    let p12_slope = w2 * 2.0 * a2 * o2 * (o2 * o2 - 4.0 * a2 * d2 - 16.0 * d2 * d2) / (dd * den * den);
    let p10 = w2 * a * o2 * (a2 + 4.0 * d2) / (dd * den);
    let p01 = 2.0 * w2 * a * o2 / den;
    let num = a2 * a2 * o2 * o2 + 4.0 * a2 * o2.powi(3) - 12.0 * a2 * d2 * o2 * o2 - 64.0 * a2 * d2.powi(3)
        - 4.0 * a2.powi(3) * d2
        - 32.0 * a2 * a2 * d2 * d2
        - 64.0 * d2 * d2 * o2 * o2
        + 16.0 * d2 * o2.powi(3);
    let p21 = w2 * 2.0 * a * o2 * (a2 + 4.0 * d2) / (den * dd);
    let p21_slope = w2 * 4.0 * a2 * o2 * num / (dd.powi(3) * den * den);
    Ok(FirstOrderCoefficients { p01, p10, p12, p12_slope, p21, p21_slope })
}

pub fn rates_first_order(params: &ModelParams, coupling: &DipoleCoupling) -> Result<TransitionRates> {
    Ok(first_order_coefficients(params)?.rates(coupling.c3.re))
}

fn outer_flux(x: &Vector8) -> f64 {
    (x[0] * SQRT_2 + x[4] + x[7]).im
}

/// Rates from the exact solution of the coherence systems (all orders in C3,
/// second order in Omega2).
pub fn rates_exact(params: &ModelParams, coupling: &DipoleCoupling) -> Result<TransitionRates> {
    let w = params.omega2;
    let inner = solve_coherences(params, coupling, DriveKind::Inner)?;
    let outer = solve_coherences(params, coupling, DriveKind::Outer)?;
    let (e2_inner, _) = solve_e2_coherences(params, SubspaceId::Inner)?;
    let (e2_dark, _) = solve_e2_coherences(params, SubspaceId::Dark)?;
    Ok(TransitionRates::new(
        -SQRT_2 * w * e2_dark.im,
        SQRT_2 * w * e2_inner.im,
        w * outer_flux(&inner),
        -w * outer_flux(&outer),
        RateMethod::ExactSolve,
    ))
}

/// Rates from finite-difference population derivatives of the full Bloch
/// equations, started in the quasi-stationary states and sampled at `dt`.
pub fn rates_by_propagation(params: &ModelParams, coupling: &DipoleCoupling, dt: f64) -> Result<TransitionRates> {
    let h = 1.0;
    if dt <= h {
        return Err(Error::Domain(format!("propagation time {dt} must exceed {h}")));
    }
    let gen = BlochGenerator::from_params(params, coupling)?;
    // populations (dark, inner, outer) and their time derivatives at dt
    let sample = |sub: SubspaceId| -> Result<([f64; 3], [f64; 3])> {
        let rho0 = quasi_stationary_state(sub, params, coupling)?.into_inner();
        let before = propagate(&rho0, dt - h, &gen)?;
        let mid = propagate(&before, h, &gen)?;
        let after = propagate(&mid, h, &gen)?;
        let pop = SubspaceId::ALL.map(|s| s.population(&mid));
        let der = SubspaceId::ALL.map(|s| (s.population(&after) - s.population(&before)) / (2.0 * h));
        Ok((pop, der))
    };
    let (pd, dd) = sample(SubspaceId::Dark)?;
    let (pi, di) = sample(SubspaceId::Inner)?;
    let (po, dout) = sample(SubspaceId::Outer)?;
    let solve2 = |m: nalgebra::Matrix2<f64>, rhs: nalgebra::Vector2<f64>| -> Result<nalgebra::Vector2<f64>> {
        m.lu().solve(&rhs).ok_or_else(|| Error::Numerical("population system is singular".into()))
    };
    // d P_outer = p12 P_inner - p21 P_outer
    let x = solve2(
        nalgebra::Matrix2::new(pi[1], -pi[2], po[1], -po[2]),
        nalgebra::Vector2::new(di[2], dout[2]),
    )?;
    // d P_dark = p10 P_inner - p01 P_dark
    let y = solve2(
        nalgebra::Matrix2::new(pi[1], -pi[0], pd[1], -pd[0]),
        nalgebra::Vector2::new(di[0], dd[0]),
    )?;
    Ok(TransitionRates::new(y[1], y[0], x[0], x[1], RateMethod::Propagation))
}

/// Quantities whose first-order Re C3 coefficient can change sign with detuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalQuantity {
    P12,
    P21,
    DoubleJump,
    T1,
    T2,
}

impl CriticalQuantity {
    pub const ALL: [CriticalQuantity; 5] = [
        CriticalQuantity::P12,
        CriticalQuantity::P21,
        CriticalQuantity::DoubleJump,
        CriticalQuantity::T1,
        CriticalQuantity::T2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriticalQuantity::P12 => "p12",
            CriticalQuantity::P21 => "p21",
            CriticalQuantity::DoubleJump => "double_jump",
            CriticalQuantity::T1 => "t1",
            CriticalQuantity::T2 => "t2",
        }
    }
}

/// Derivative of the selected quantity with respect to Re C3 at Re C3 = 0.
///
/// The double-jump rate is taken in its short-window form, proportional to
/// `p01 p10 p12 p21 / S` with `S = p01 p21 + p21 p10 + p01 p12`; the durations are
/// the ideal `T1 = 1/(p10 + p12)` and `T2 = 1/p21`.
pub fn re_c3_coefficient(params: &ModelParams, which: CriticalQuantity) -> Result<f64> {
    let c = first_order_coefficients(&params.with_omega2(1.0))?;
    Ok(match which {
        CriticalQuantity::P12 => c.p12_slope,
        CriticalQuantity::P21 => c.p21_slope,
        CriticalQuantity::T1 => -c.p12_slope / (c.p10 + c.p12).powi(2),
        CriticalQuantity::T2 => -c.p21_slope / (c.p21 * c.p21),
        CriticalQuantity::DoubleJump => {
            let s = c.p01 * c.p21 + c.p21 * c.p10 + c.p01 * c.p12;
            let d12 = c.p21 * c.p21 * (c.p01 + c.p10) / (s * s);
            let d21 = c.p01 * c.p12 * c.p12 / (s * s);
            2.0 * c.p01 * c.p10 * (d12 * c.p12_slope + d21 * c.p21_slope)
        }
    })
}

/// Smallest `Delta2 >= 0` where the Re C3 coefficient of `which` vanishes,
/// bracketed on a grid over `[0, 2 a3]` and refined by bisection.
pub fn critical_detuning(params: &ModelParams, which: CriticalQuantity) -> Result<f64> {
    params.validate()?;
    if params.omega3 <= 0.0 || params.a3 <= 0.0 {
        return Err(Error::Domain("omega3 and a3 must be positive".into()));
    }
    let upper = 2.0 * params.a3;
    let f = |d: f64| re_c3_coefficient(&params.with_delta2(d), which);
    let steps = 2000;
    let mut lo = 0.0;
    let mut flo = f(lo)?;
    if flo == 0.0 {
        return Ok(0.0);
    }
    for k in 1..=steps {
        let hi = upper * k as f64 / steps as f64;
        let fhi = f(hi)?;
        if fhi == 0.0 {
            return Ok(hi);
        }
        if fhi.signum() != flo.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, flo);
            while b - a > 1e-13 * params.a3 {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm == 0.0 {
                    return Ok(m);
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        lo = hi;
        flo = fhi;
    }
    Err(Error::RootNotFound { quantity: which.name().to_string(), upper })
}
