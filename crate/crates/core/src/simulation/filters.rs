use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lg_estimation::LgSystem;

/// Euler step of a linear estimator `ds = F s dt + K y dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPass {
    dim: usize,
    /// Row-major.
    f: Vec<f64>,
    k: Vec<f64>,
}

impl LinearPass {
    pub fn new(f: &DMatrix<f64>, k: &DVector<f64>) -> Result<Self> {
        let dim = k.len();
        if f.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.nrows(),
            });
        }
        Ok(Self {
            dim,
            f: f.transpose().as_slice().to_vec(),
            k: k.as_slice().to_vec(),
        })
    }

    /// Forward filter: `F = A - V C^T C`, `K = V C^T`.
    pub fn filter(sys: &LgSystem, vf: &DMatrix<f64>) -> Self {
        let k: DVector<f64> = (vf * sys.c.transpose()).column(0).into_owned();
        let f = &sys.a - &k * &sys.c;
        Self::new(&f, &k).expect("shapes follow from the system")
    }

    /// Retrofilter in reverse time: `F = -A - V_R C^T C`, `K = V_R C^T`.
    pub fn retro(sys: &LgSystem, vr: &DMatrix<f64>) -> Self {
        let k: DVector<f64> = (vr * sys.c.transpose()).column(0).into_owned();
        let f = -&sys.a - &k * &sys.c;
        Self::new(&f, &k).expect("shapes follow from the system")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `s += (F s) dt + K y_dt`; `scratch` must have length `dim`.
    pub fn step(&self, s: &mut [f64], scratch: &mut [f64], y_dt: f64, dt: f64) {
        let d = self.dim;
        for (j, out) in scratch.iter_mut().enumerate().take(d) {
            let row = &self.f[j * d..(j + 1) * d];
            *out = row.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
        }
        for j in 0..d {
            s[j] += scratch[j] * dt + self.k[j] * y_dt;
        }
    }
}

/// Runs `pass` over `y` from a zero state. Entry `i` (row-major, `dim`
/// values) is the state before `y[i]` is consumed.
pub fn run_linear_pass(y: &[f64], pass: &LinearPass, dt: f64) -> Vec<f64> {
    let d = pass.dim();
    let mut out = Vec::with_capacity(y.len() * d);
    let mut s = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for &yi in y {
        out.extend_from_slice(&s);
        pass.step(&mut s, &mut scratch, yi, dt);
    }
    out
}

fn check_cov(sys: &LgSystem, v: &DMatrix<f64>) -> Result<()> {
    if v.shape() != (sys.dim(), sys.dim()) {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: v.nrows(),
        });
    }
    Ok(())
}

/// Causal filter estimates: entry `i` uses `y[..i]`.
pub fn run_filter_pass(y: &[f64], sys: &LgSystem, vf: &DMatrix<f64>, dt: f64) -> Result<Vec<f64>> {
    check_cov(sys, vf)?;
    Ok(run_linear_pass(y, &LinearPass::filter(sys, vf), dt))
}

/// Anticausal retrofilter estimates: entry `i` uses `y[i..]`. The pass
/// starts from zero after the last sample and runs backwards.
pub fn run_retrofilter_pass(
    y: &[f64],
    sys: &LgSystem,
    vr: &DMatrix<f64>,
    dt: f64,
) -> Result<Vec<f64>> {
    check_cov(sys, vr)?;
    let pass = LinearPass::retro(sys, vr);
    let d = pass.dim();
    let mut out = vec![0.0; y.len() * d];
    let mut s = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for i in (0..y.len()).rev() {
        pass.step(&mut s, &mut scratch, y[i], dt);
        out[i * d..(i + 1) * d].copy_from_slice(&s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedEstimate {
    /// Row-major; NaN outside the window.
    pub xs: Vec<f64>,
    pub vs: DMatrix<f64>,
}

/// `x_S = V_S (V_F^-1 x_F + V_R^-1 x_R)` with `V_S = (V_F^-1 + V_R^-1)^-1`,
/// evaluated on `window` only.
pub fn combine_smoothed(
    xf: &[f64],
    xr: &[f64],
    vf: &DMatrix<f64>,
    vr: &DMatrix<f64>,
    window: Range<usize>,
) -> Result<SmoothedEstimate> {
    let d = vf.nrows();
    if vr.shape() != (d, d) || !vf.is_square() {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: vr.nrows(),
        });
    }
    if xf.len() != xr.len() || !xf.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: xf.len(),
            found: xr.len(),
        });
    }
    let steps = xf.len() / d;
    if window.end > steps || window.start > window.end {
        return Err(Error::EmptyWindow(format!(
            "window {}..{} does not fit {steps} steps",
            window.start, window.end
        )));
    }
    let fi = vf.clone().try_inverse().ok_or(Error::SmootherSingular)?;
    let ri = vr.clone().try_inverse().ok_or(Error::SmootherSingular)?;
    let vs = (&fi + &ri).try_inverse().ok_or(Error::SmootherSingular)?;
    let vs = (&vs + vs.transpose()) * 0.5;
    // fold into two fixed gains: x_S = G_F x_F + G_R x_R
    let gf = &vs * fi;
    let gr = &vs * ri;
    let mut xs = vec![f64::NAN; xf.len()];
    for i in window {
        let a = DVector::from_column_slice(&xf[i * d..(i + 1) * d]);
        let b = DVector::from_column_slice(&xr[i * d..(i + 1) * d]);
        let s = &gf * a + &gr * b;
        xs[i * d..(i + 1) * d].copy_from_slice(s.as_slice());
    }
    Ok(SmoothedEstimate { xs, vs })
}
