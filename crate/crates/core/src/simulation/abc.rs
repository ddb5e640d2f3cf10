use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{ensure_positive, Error, Result};

/// Below this `|c|` the phase of `c` is treated as undefined and `theta` is
/// held.
pub const INDETERMINATE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbcVariant {
    /// `c = a + chi b a*`, estimate from the phase of `c`.
    Exact,
    /// Exponential average of `theta + I / (2 sqrt(N))`.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcParams {
    pub chi: f64,
    pub variant: AbcVariant,
}

impl AbcParams {
    pub fn exact(chi: f64) -> Self {
        Self {
            chi,
            variant: AbcVariant::Exact,
        }
    }

    pub fn linearized(chi: f64) -> Self {
        Self {
            chi,
            variant: AbcVariant::Linearized,
        }
    }
}

/// Maps to `(-pi, pi]`.
pub(crate) fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AbcState {
    variant: AbcVariant,
    chi: f64,
    dt: f64,
    decay: f64,
    /// `(1 - e^(-chi dt)) / chi`, the kernel integrated over one step.
    weight: f64,
    inv_gain: f64,
    a: Complex64,
    b: Complex64,
    estimate: f64,
    indeterminate: usize,
}

impl AbcState {
    pub(crate) fn new(params: AbcParams, dt: f64, photon_flux: f64) -> Result<Self> {
        ensure_positive("chi", params.chi)?;
        ensure_positive("dt", dt)?;
        let inv_gain = match params.variant {
            AbcVariant::Exact => 0.0,
            AbcVariant::Linearized => {
                if !(photon_flux.is_finite() && photon_flux > 0.0) {
                    return Err(Error::invalid(
                        "photon_flux",
                        "the linearized ABC estimator divides by sqrt(N) and needs N > 0",
                    ));
                }
                0.5 / photon_flux.sqrt()
            }
        };
        Ok(Self {
            variant: params.variant,
            chi: params.chi,
            dt,
            decay: (-params.chi * dt).exp(),
            weight: -(-params.chi * dt).exp_m1() / params.chi,
            inv_gain,
            a: Complex64::new(0.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            estimate: 0.0,
            indeterminate: 0,
        })
    }

    pub(crate) fn indeterminate(&self) -> usize {
        self.indeterminate
    }

    /// Consumes the photocurrent increment `i_dt` measured with local
    /// oscillator phase `theta` and returns the next estimate.
    pub(crate) fn step(&mut self, theta: f64, i_dt: f64) -> f64 {
        match self.variant {
            AbcVariant::Exact => {
                let e1 = Complex64::from_polar(1.0, theta);
                self.a = self.a * self.decay + e1 * i_dt;
                // with the exact step weight chi b sums to -1 for constant
                // theta, so c cancels the unmeasured quadrature exactly
                self.b = self.b * self.decay - e1 * e1 * self.weight;
                let c = self.a + self.chi * self.b * self.a.conj();
                if c.norm() < INDETERMINATE_THRESHOLD {
                    self.indeterminate += 1;
                    return theta;
                }
                // the photocurrent is odd in phi - theta, which puts phi a
                // quarter turn ahead of arg c
                let raw = c.arg() + FRAC_PI_2;
                self.estimate = theta + wrap(raw - theta);
            }
            AbcVariant::Linearized => {
                let target = theta + self.inv_gain * i_dt / self.dt;
                self.estimate = self.decay * self.estimate + (1.0 - self.decay) * target;
            }
        }
        self.estimate
    }
}
