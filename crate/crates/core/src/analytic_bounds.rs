//! Error bounds for estimating a stationary Gaussian phase from a coherent
//! beam with photon flux `N`.
//!
//! With measurement noise density `S_n = 1/(4N)`:
//!
//! ```text
//! QCRB      = (1/2pi) int [1/S(w) + 4N]^-1 dw
//! filter    = S_n (1/2pi) int ln(1 + S(w)/S_n) dw
//! smoother  = (1/2pi) int [1/S(w) + 1/S_n]^-1 dw
//! ```
//!
//! The smoother integrand is the QCRB integrand, so optimal smoothing attains
//! the bound for any spectrum.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::phase_process::PhaseModel;
use crate::quadrature::{self, Estimate, Tolerance};

/// A one-sided view of an even spectral density.
pub trait Spectrum {
    /// Density at `omega >= 0`; may be `+inf` at the origin.
    fn density(&self, omega: f64) -> f64;

    /// `(c, q)` such that `density(w) ~ c * w^-q` as `w -> inf`.
    fn tail(&self) -> (f64, f64);
}

impl Spectrum for PhaseModel {
    fn density(&self, omega: f64) -> f64 {
        PhaseModel::density(self, omega)
    }

    fn tail(&self) -> (f64, f64) {
        (self.kappa().powf(self.p() - 1.0), self.p())
    }
}

/// Spectrum sampled on a grid, interpolated linearly in log-log coordinates
/// and extended beyond the grid by the power laws through the two end
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    log_w: Vec<f64>,
    log_s: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn new(omega: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if omega.len() != density.len() {
            return Err(Error::DimensionMismatch {
                expected: omega.len(),
                found: density.len(),
            });
        }
        if omega.len() < 2 {
            return Err(Error::invalid("spectrum", "need at least two samples"));
        }
        for (&w, &s) in omega.iter().zip(&density) {
            ensure_positive("omega", w)?;
            ensure_positive("density", s)?;
        }
        if omega.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("omega", "must be strictly increasing"));
        }
        Ok(Self {
            log_w: omega.iter().map(|w| w.ln()).collect(),
            log_s: density.iter().map(|s| s.ln()).collect(),
        })
    }

    /// Reads a CSV file with header `omega,density`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Row {
            omega: f64,
            density: f64,
        }
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let mut w = Vec::new();
        let mut s = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            w.push(row.omega);
            s.push(row.density);
        }
        Self::new(w, s)
    }

    fn slope(&self, i: usize) -> f64 {
        (self.log_s[i + 1] - self.log_s[i]) / (self.log_w[i + 1] - self.log_w[i])
    }
}

impl Spectrum for TabulatedSpectrum {
    fn density(&self, omega: f64) -> f64 {
        let m = self.log_w.len();
        if omega == 0.0 {
            let s = self.slope(0);
            return if s < 0.0 {
                f64::INFINITY
            } else if s == 0.0 {
                self.log_s[0].exp()
            } else {
                0.0
            };
        }
        let lw = omega.abs().ln();
        let i = match self.log_w.partition_point(|&x| x <= lw) {
            0 => 0,
            k if k >= m => m - 2,
            k => k - 1,
        };
        (self.log_s[i] + self.slope(i) * (lw - self.log_w[i])).exp()
    }

    fn tail(&self) -> (f64, f64) {
        let m = self.log_w.len();
        let q = -self.slope(m - 2);
        (self.log_s[m - 1].exp() * self.log_w[m - 1].exp().powf(q), q)
    }
}

#[derive(Clone, Copy)]
pub struct BoundQuery<'a> {
    pub spectrum: &'a dyn Spectrum,
    pub photon_flux: f64,
}

impl<'a> BoundQuery<'a> {
    pub fn new(spectrum: &'a dyn Spectrum, photon_flux: f64) -> Self {
        Self {
            spectrum,
            photon_flux,
        }
    }

    /// `S_n = 1/(4N)`.
    pub fn noise_density(&self) -> f64 {
        1.0 / (4.0 * self.photon_flux)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Qcrb,
    Filter,
}

/// Frequency where the spectrum crosses `level`, assuming it decreases. If
/// the spectrum stays below `level` the tail-law estimate is returned.
fn crossing(s: &dyn Spectrum, level: f64) -> f64 {
    let (c, q) = s.tail();
    let guess = (c / level).powf(1.0 / q);
    let (mut lo, mut hi) = (guess, guess);
    let mut iter = 0;
    while s.density(hi) > level && iter < 200 {
        hi *= 2.0;
        iter += 1;
    }
    iter = 0;
    while s.density(lo) < level && iter < 200 {
        lo *= 0.5;
        iter += 1;
    }
    if s.density(lo) < level {
        return guess;
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if s.density(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

fn bound(q: &BoundQuery, kind: Kind) -> Result<Estimate> {
    ensure_nonnegative("photon_flux", q.photon_flux)?;
    let spec = q.spectrum;
    let (c, expo) = spec.tail();
    if expo.is_nan() || expo <= 1.0 {
        return Err(Error::BoundDivergent(format!(
            "spectrum tail decays as |omega|^-{expo}, no faster than 1/|omega|"
        )));
    }
    let tol = Tolerance::default();
    if q.photon_flux == 0.0 {
        // no measurement: every estimate is the prior mean and all three
        // quantities reduce to the prior variance
        let s0 = spec.density(0.0);
        if !s0.is_finite() {
            return Err(Error::BoundDivergent(
                "no photons and a spectrum divergent at omega = 0".into(),
            ));
        }
        let w_ref = crossing(spec, 0.5 * s0);
        let omega_max = 1e3 * w_ref;
        let body = quadrature::integrate(|w| spec.density(w), &breakpoints(w_ref), tol);
        let tail = c * omega_max.powf(1.0 - expo) / (expo - 1.0);
        return Ok(Estimate {
            value: (body.value + tail) / PI,
            error: body.error / PI,
        });
    }
    let sn = q.noise_density();
    let w_star = crossing(spec, sn);
    let omega_max = 1e3 * w_star;
    let body = match kind {
        Kind::Qcrb => quadrature::integrate(
            |w| {
                let s = spec.density(w);
                if s.is_infinite() {
                    sn
                } else {
                    s * sn / (s + sn)
                }
            },
            &breakpoints(w_star),
            tol,
        ),
        Kind::Filter => quadrature::integrate(
            |w| sn * (spec.density(w) / sn).ln_1p(),
            &breakpoints(w_star),
            tol,
        ),
    };
    // first two terms of the large-omega expansion in S/S_n
    let first = c * omega_max.powf(1.0 - expo) / (expo - 1.0);
    let second = c * c * omega_max.powf(1.0 - 2.0 * expo) / (2.0 * expo - 1.0) / sn;
    let tail = match kind {
        Kind::Qcrb => first - second,
        Kind::Filter => first - 0.5 * second,
    };
    Ok(Estimate {
        value: (body.value + tail) / PI,
        error: body.error / PI,
    })
}

fn breakpoints(w_star: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    b.extend((-4..=3).map(|k| w_star * 10f64.powi(k)));
    b
}

/// Quantum Cramér-Rao bound on the mean-square phase error.
pub fn qcrb_quadrature(q: &BoundQuery) -> Result<Estimate> {
    bound(q, Kind::Qcrb)
}

/// Mean-square error of the optimal causal (Wiener) filter.
pub fn filter_mse_quadrature(q: &BoundQuery) -> Result<Estimate> {
    bound(q, Kind::Filter)
}

/// Mean-square error of the optimal (Wiener) smoother. The integrand is
/// that of the QCRB.
pub fn smoother_mse_quadrature(q: &BoundQuery) -> Result<Estimate> {
    bound(q, Kind::Qcrb)
}

fn power_law_scale(p: f64, kappa: f64, photon_flux: f64) -> Result<f64> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::ExponentOutOfRange(p));
    }
    ensure_positive("kappa", kappa)?;
    ensure_positive("photon_flux", photon_flux)?;
    Ok((4.0 * photon_flux / kappa).powf(-(p - 1.0) / p))
}

/// `[p sin(pi/p)]^-1 (4N/kappa)^-(p-1)/p`.
pub fn qcrb_power_law(p: f64, kappa: f64, photon_flux: f64) -> Result<f64> {
    Ok(power_law_scale(p, kappa, photon_flux)? / (p * (PI / p).sin()))
}

/// `[sin(pi/p)]^-1 (4N/kappa)^-(p-1)/p`.
pub fn filter_mse_power_law(p: f64, kappa: f64, photon_flux: f64) -> Result<f64> {
    Ok(power_law_scale(p, kappa, photon_flux)? / (PI / p).sin())
}

/// Smoother MSE for a power law; equal to the QCRB.
pub fn smoother_mse_power_law(p: f64, kappa: f64, photon_flux: f64) -> Result<f64> {
    qcrb_power_law(p, kappa, photon_flux)
}

fn abc_checks(kappa: f64, chi: f64, lambda: f64) -> Result<()> {
    ensure_positive("kappa", kappa)?;
    ensure_positive("chi", chi)?;
    ensure_nonnegative("lambda", lambda)?;
    if lambda == 0.0 {
        return Err(Error::EstimatorMseDivergent);
    }
    Ok(())
}

/// Closed-form MSE of the linearized ABC estimator for `p = 4` with decay
/// `lambda` on the first chain stage, in the form
/// `kappa^3 / (2 lambda chi^3 (lambda + chi)) + 1/(2 chi)`.
pub fn abc_linearized_mse(kappa: f64, chi: f64, lambda: f64) -> Result<f64> {
    abc_checks(kappa, chi, lambda)?;
    Ok(kappa.powi(3) / (2.0 * lambda * chi.powi(3) * (lambda + chi)) + 0.5 / chi)
}

/// MSE of the same estimator derived directly from the damped spectrum for
/// photon flux `N`: lag error `kappa^3 / (2 lambda chi (lambda + chi))` plus
/// shot-noise error `chi / (8N)`.
///
/// The lag terms of the two expressions agree only at `chi = 1`, the noise
/// terms only at `N = chi^2/4`.
pub fn abc_linearized_mse_spectral(
    kappa: f64,
    chi: f64,
    lambda: f64,
    photon_flux: f64,
) -> Result<f64> {
    abc_checks(kappa, chi, lambda)?;
    ensure_positive("photon_flux", photon_flux)?;
    Ok(kappa.powi(3) / (2.0 * lambda * chi * (lambda + chi)) + chi / (8.0 * photon_flux))
}
