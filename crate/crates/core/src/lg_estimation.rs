//! Stationary linear-Gaussian filtering and smoothing for the integrator
//! chain with `p = 2n + 2`.
//!
//! The linearized measurement is `y = C x + white noise` with
//! `C = sqrt(mu) e_n` and `mu = 4 N kappa^(p-1)`. Steady-state covariances
//! factor as `V_kl = Vt_kl * mu^-(k+l+1)/p`, where the normalized matrix `Vt`
//! depends on `p` alone. `Vt` solves
//!
//! ```text
//! Vt_{k-1,l} + Vt_{k,l-1} + d_k0 d_l0 - Vt_kn Vt_nl = 0
//! ```
//!
//! and is built here from the stable eigenvectors of the Hamiltonian matrix.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};

/// Largest exponent accepted by the eigenvector construction.
pub const MAX_EXPONENT: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LgSystem {
    pub n: usize,
    pub a: DMatrix<f64>,
    pub e: DVector<f64>,
    /// Measurement row, stored as a `1 x (n+1)` matrix.
    pub c: DMatrix<f64>,
    pub mu: f64,
    pub kappa: f64,
    pub photon_flux: f64,
}

impl LgSystem {
    pub fn p(&self) -> u32 {
        2 * self.n as u32 + 2
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// `kappa^(n + 1/2)`, mapping `x_n` to the phase.
    pub fn phase_scale(&self) -> f64 {
        self.kappa.powf(self.n as f64 + 0.5)
    }
}

fn chain_n(p: u32) -> Result<usize> {
    if p >= 2 && p.is_multiple_of(2) {
        Ok(p as usize / 2 - 1)
    } else {
        Err(Error::RequiresEvenP(p as f64))
    }
}

fn checked_p(p: u32) -> Result<usize> {
    let n = chain_n(p)?;
    if p > MAX_EXPONENT {
        return Err(Error::ConditioningLimit(p));
    }
    Ok(n)
}

/// Standard-form system for even `p`. `N = 0` is accepted and gives `C = 0`
/// (no measurement information).
pub fn build_lg_system(p: u32, kappa: f64, photon_flux: f64) -> Result<LgSystem> {
    let n = chain_n(p)?;
    ensure_positive("kappa", kappa)?;
    ensure_nonnegative("photon_flux", photon_flux)?;
    let d = n + 1;
    let a = DMatrix::from_fn(d, d, |j, k| if j == k + 1 { 1.0 } else { 0.0 });
    let e = DVector::from_fn(d, |k, _| if k == 0 { 1.0 } else { 0.0 });
    let mu = 4.0 * photon_flux * kappa.powi(2 * n as i32 + 1);
    let c = DMatrix::from_fn(1, d, |_, k| if k == n { mu.sqrt() } else { 0.0 });
    Ok(LgSystem {
        n,
        a,
        e,
        c,
        mu,
        kappa,
        photon_flux,
    })
}

/// Stable eigenvalues `lambda_k = i exp(i pi (2k-1)/p)`, `k = 1..n+1`.
pub fn stable_eigenvalues(p: u32) -> Result<Vec<Complex64>> {
    let n = chain_n(p)?;
    Ok((1..=n + 1)
        .map(|k| Complex64::i() * Complex64::from_polar(1.0, PI * (2 * k - 1) as f64 / p as f64))
        .collect())
}

/// `exp(i pi m / (2p))`, with `m` reduced exactly and the angle folded into
/// `[0, pi/4]` so that conjugate and rotated roots are bit-consistent.
fn unit_root(m: i64, p: u32) -> Complex64 {
    let p = p as i64;
    let m = m.rem_euclid(4 * p);
    let first_quadrant = |r: i64| {
        if 2 * r <= p {
            let a = PI * r as f64 / (2 * p) as f64;
            (a.cos(), a.sin())
        } else {
            let a = PI * (p - r) as f64 / (2 * p) as f64;
            (a.sin(), a.cos())
        }
    };
    let (mut c, mut s) = first_quadrant(m % p);
    for _ in 0..m / p {
        (c, s) = (-s, c);
    }
    Complex64::new(c, s)
}

/// Normalized filtered covariance `Vt_F = X Y^-1` with (1-based `j`)
/// `Y_jk = lambda_k^(j-1)` and `X_jk = (-lambda_k)^-j`.
///
/// `Y` is solved by LU with partial pivoting and one round of iterative
/// refinement. Rounding of the unit roots alone moves the result by about
/// `cond(Y)` ulps, which near `p = 20` leaves a recurrence residual above
/// 1e-9, so the real part is then polished by Newton steps on the algebraic
/// Riccati equation and projected onto bisymmetric matrices.
pub fn solve_filter_covariance(p: u32) -> Result<DMatrix<f64>> {
    let n = checked_p(p)?;
    let d = n + 1;
    // lambda_k = exp(i pi m_k / (2p)) with m_k = p + 2(2k - 1); -lambda_k adds 2p
    let m: Vec<i64> = (1..=d as i64).map(|k| p as i64 + 2 * (2 * k - 1)).collect();
    let y = DMatrix::from_fn(d, d, |j, k| unit_root(j as i64 * m[k], p));
    let x = DMatrix::from_fn(d, d, |j, k| {
        unit_root(-(j as i64 + 1) * (m[k] + 2 * p as i64), p)
    });
    // V Y = X  <=>  Y^T V^T = X^T
    let lu = y.transpose().lu();
    let mut v = lu
        .solve(&x.transpose())
        .ok_or(Error::ConditioningLimit(p))?
        .transpose();
    let r = DMatrix::from_fn(d, d, |j, k| residual_entry(&x, &v, &y, j, k));
    if let Some(delta) = lu.solve(&r.transpose()) {
        v += delta.transpose();
    }
    let residue = v.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residue > 1e-9 || !v.iter().all(|z| z.re.is_finite()) {
        return Err(Error::ConditioningLimit(p));
    }
    let mut vr = v.map(|z| z.re);
    for _ in 0..2 {
        vr = newton_step(&vr).ok_or(Error::ConditioningLimit(p))?;
    }
    Ok(bisymmetrize(&vr))
}

/// One Newton-Kleinman step for `A V + V A^T + e_0 e_0^T - V e_n e_n^T V = 0`:
/// solve `Ac D + D Ac^T = -F(V)` with `Ac = A - V e_n e_n^T`.
fn newton_step(v: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = v.nrows();
    let n = d - 1;
    let a = DMatrix::from_fn(d, d, |j, k| if j == k + 1 { 1.0 } else { 0.0 });
    let col = v.column(n).into_owned();
    // residual in twice the working precision; near the solution it is far
    // below the rounding error of a plain evaluation
    let f = DMatrix::from_fn(d, d, |k, l| {
        let mut acc = CompensatedSum::new(if k == 0 && l == 0 { 1.0 } else { 0.0 });
        if k > 0 {
            acc.add_product(v[(k - 1, l)], 1.0);
        }
        if l > 0 {
            acc.add_product(v[(k, l - 1)], 1.0);
        }
        acc.add_product(-v[(k, n)], v[(n, l)]);
        acc.value()
    });
    let mut ac = a;
    for j in 0..d {
        ac[(j, n)] -= col[j];
    }
    let eye = DMatrix::<f64>::identity(d, d);
    let k = eye.kronecker(&ac) + ac.kronecker(&eye);
    let rhs = DVector::from_iterator(d * d, f.iter().map(|x| -x));
    let sol = k.lu().solve(&rhs)?;
    let delta = DMatrix::from_column_slice(d, d, sol.as_slice());
    Some(v + (&delta + delta.transpose()) * 0.5)
}

/// Averages each entry over its orbit under transposition and rotation by
/// 180 degrees. Every member of an orbit receives the bit-identical value.
fn bisymmetrize(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows() - 1;
    DMatrix::from_fn(n + 1, n + 1, |k, l| {
        let mut orbit = [v[(k, l)], v[(l, k)], v[(n - k, n - l)], v[(n - l, n - k)]];
        orbit.sort_by(f64::total_cmp);
        (orbit[0] + orbit[1] + orbit[2] + orbit[3]) * 0.25
    })
}

/// `X_jk - sum_m V_jm Y_mk`, accumulated with error-free transformations.
fn residual_entry(
    x: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    y: &DMatrix<Complex64>,
    j: usize,
    k: usize,
) -> Complex64 {
    let d = v.ncols();
    let mut re = CompensatedSum::new(x[(j, k)].re);
    let mut im = CompensatedSum::new(x[(j, k)].im);
    for m in 0..d {
        let (a, b) = (v[(j, m)], y[(m, k)]);
        re.add_product(-a.re, b.re);
        re.add_product(a.im, b.im);
        im.add_product(-a.re, b.im);
        im.add_product(-a.im, b.re);
    }
    Complex64::new(re.value(), im.value())
}

/// Dot product accumulator in twice the working precision.
struct CompensatedSum {
    sum: f64,
    err: f64,
}

impl CompensatedSum {
    fn new(start: f64) -> Self {
        Self {
            sum: start,
            err: 0.0,
        }
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let prod = a * b;
        let prod_err = a.mul_add(b, -prod);
        let s = self.sum + prod;
        let bb = s - self.sum;
        let sum_err = (self.sum - (s - bb)) + (prod - bb);
        self.sum = s;
        self.err += sum_err + prod_err;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

/// Largest magnitude of the normalized Riccati recurrence over all entries.
pub fn riccati_residual(v: &DMatrix<f64>, n: usize) -> Result<f64> {
    let d = n + 1;
    if v.nrows() != d || v.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if v.nrows() != d { v.nrows() } else { v.ncols() },
        });
    }
    let at = |k: isize, l: isize| {
        if k < 0 || l < 0 {
            0.0
        } else {
            v[(k as usize, l as usize)]
        }
    };
    let mut worst = 0.0f64;
    for k in 0..d {
        for l in 0..d {
            let (ki, li) = (k as isize, l as isize);
            let delta = if k == 0 && l == 0 { 1.0 } else { 0.0 };
            let r = at(ki - 1, li) + at(ki, li - 1) + delta - v[(k, n)] * v[(n, l)];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

fn riccati_rhs(sys: &LgSystem, v: &DMatrix<f64>) -> DMatrix<f64> {
    let av = &sys.a * v;
    let vc = v * sys.c.transpose();
    &av + av.transpose() + &sys.e * sys.e.transpose() - &vc * vc.transpose()
}

/// Integrates the differential Riccati equation from `V = mu^(-1/p) I` with
/// classical Runge-Kutta until `||dV/dt|| < tol ||V||` (Frobenius norms).
pub fn solve_filter_covariance_ode(sys: &LgSystem, tol: f64) -> Result<DMatrix<f64>> {
    ensure_positive("tol", tol)?;
    ensure_positive("mu", sys.mu)?;
    let p = sys.p() as f64;
    let time_scale = sys.mu.powf(-1.0 / p);
    let max_steps = 2_000_000;
    let mut v = DMatrix::identity(sys.dim(), sys.dim()) * time_scale;
    for step in 0..max_steps {
        let k1 = riccati_rhs(sys, &v);
        if k1.norm() < tol * v.norm() {
            return Ok(v);
        }
        // the quadratic term relaxes at rate ~ mu |V|, fast while V is far
        // above its stationary value
        let h = (0.01 * time_scale).min(0.05 / (sys.mu * v.norm()));
        let k2 = riccati_rhs(sys, &(&v + &k1 * (0.5 * h)));
        let k3 = riccati_rhs(sys, &(&v + &k2 * (0.5 * h)));
        let k4 = riccati_rhs(sys, &(&v + &k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::RiccatiOdeStalled { steps: step + 1 });
        }
    }
    Err(Error::RiccatiOdeStalled { steps: max_steps })
}

/// `[Vt_R]_kl = (-1)^(k+l) [Vt_F]_kl`.
pub fn retro_covariance(vf: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !vf.is_square() {
        return Err(Error::DimensionMismatch {
            expected: vf.nrows(),
            found: vf.ncols(),
        });
    }
    Ok(DMatrix::from_fn(vf.nrows(), vf.ncols(), |k, l| {
        if (k + l) % 2 == 0 {
            vf[(k, l)]
        } else {
            -vf[(k, l)]
        }
    }))
}

/// `(V_F^-1 + V_R^-1)^-1`, symmetrized.
pub fn smoother_covariance(vf: &DMatrix<f64>, vr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if vf.shape() != vr.shape() || !vf.is_square() {
        return Err(Error::DimensionMismatch {
            expected: vf.nrows(),
            found: vr.nrows(),
        });
    }
    let fi = vf.clone().try_inverse().ok_or(Error::SmootherSingular)?;
    let ri = vr.clone().try_inverse().ok_or(Error::SmootherSingular)?;
    let s = (fi + ri).try_inverse().ok_or(Error::SmootherSingular)?;
    if !s.iter().all(|x| x.is_finite()) {
        return Err(Error::SmootherSingular);
    }
    Ok((&s + s.transpose()) * 0.5)
}

/// `[Vt_S]_kl = (-1)^((k-l)/2) / (p sin(pi (k+l+1)/p))` for even `k - l`,
/// zero otherwise.
pub fn smoother_covariance_closed_form(p: u32) -> Result<DMatrix<f64>> {
    let n = checked_p(p)?;
    let pf = p as f64;
    Ok(DMatrix::from_fn(n + 1, n + 1, |k, l| {
        let diff = k as isize - l as isize;
        if diff % 2 != 0 {
            return 0.0;
        }
        let sign = if (diff / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign / (pf * (PI * (k + l + 1) as f64 / pf).sin())
    }))
}

/// `V_kl = Vt_kl mu^-(k+l+1)/p`.
pub fn scale_covariance(v: &DMatrix<f64>, p: u32, mu: f64) -> Result<DMatrix<f64>> {
    chain_n(p)?;
    ensure_positive("mu", mu)?;
    let pf = p as f64;
    Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |k, l| {
        v[(k, l)] * mu.powf(-((k + l + 1) as f64) / pf)
    }))
}

/// Phase mean-square error `kappa^(2n+1) V_nn` of a physical covariance.
pub fn phase_mse(v: &DMatrix<f64>, kappa: f64) -> f64 {
    let n = v.nrows() - 1;
    kappa.powi(2 * n as i32 + 1) * v[(n, n)]
}

/// Steady-state filtered phase MSE of the LG filter,
/// `Vt_nn (4N/kappa)^-(p-1)/p`.
pub fn lg_filter_mse(p: u32, kappa: f64, photon_flux: f64) -> Result<f64> {
    let sys = build_lg_system(p, kappa, photon_flux)?;
    let vf = solve_filter_covariance(p)?;
    Ok(phase_mse(&scale_covariance(&vf, p, sys.mu)?, kappa))
}

/// Filtered, retrofiltered and smoothed covariances, normalized and physical.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub vf_tilde: DMatrix<f64>,
    pub vr_tilde: DMatrix<f64>,
    pub vs_tilde: DMatrix<f64>,
    pub vf: DMatrix<f64>,
    pub vr: DMatrix<f64>,
    pub vs: DMatrix<f64>,
}

impl CovarianceSet {
    pub fn for_system(sys: &LgSystem) -> Result<Self> {
        let p = sys.p();
        let vf_tilde = solve_filter_covariance(p)?;
        let vr_tilde = retro_covariance(&vf_tilde)?;
        let vs_tilde = smoother_covariance(&vf_tilde, &vr_tilde)?;
        let vf = scale_covariance(&vf_tilde, p, sys.mu)?;
        let vr = scale_covariance(&vr_tilde, p, sys.mu)?;
        let vs = scale_covariance(&vs_tilde, p, sys.mu)?;
        Ok(Self {
            vf_tilde,
            vr_tilde,
            vs_tilde,
            vf,
            vr,
            vs,
        })
    }
}

/// `A - V C^T C`, the drift of the stationary filter.
pub fn closed_loop_matrix(sys: &LgSystem, v: &DMatrix<f64>) -> DMatrix<f64> {
    &sys.a - v * sys.c.transpose() * &sys.c
}

/// Largest real part among the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
