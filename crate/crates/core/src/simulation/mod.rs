//! Adaptive homodyne phase tracking.
//!
//! Each step draws the photocurrent
//!
//! ```text
//! I dt = 2 sqrt(N) sin(phi - theta) dt + dB
//! ```
//!
//! (or `phi - theta` in linearized mode), forms `y = I + 2 sqrt(N) theta`,
//! and feeds the local-oscillator phase `theta` back from either the
//! stationary LG filter or the ABC estimator. After the run the same `y`
//! record is passed backwards through the retrofilter and combined with the
//! forward filter into the smoothed estimate.

mod abc;
mod filters;
mod stats;

pub use abc::{AbcParams, AbcVariant};
pub use filters::{
    combine_smoothed, run_filter_pass, run_linear_pass, run_retrofilter_pass, LinearPass,
    SmoothedEstimate,
};
pub use stats::{
    aggregate, is_increasing, log_windows, mse_statistics, pairwise_sum, trend_increasing,
    trial_mse, window_trend, windowed_mse, ErrorMetric, MseStats,
};

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{ensure_positive, Error, Result};
use crate::lg_estimation::{CovarianceSet, LgSystem};
use crate::noise::NoiseStreams;
use crate::phase_process::{ChainStepper, PhaseModel};

/// Default `dt` in units of the filter time scale `mu^(-1/p)`.
pub const DT_FACTOR: f64 = 0.01;
/// Default burn-in in units of the filter time scale.
pub const BURN_IN_FACTOR: f64 = 20.0;
/// Default length of the interior window in units of the filter time scale.
pub const WINDOW_FACTOR: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneConfig {
    pub photon_flux: f64,
    pub dt: f64,
    pub duration: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub linearized: bool,
}

/// `mu^(-1/p)`, the slowest-to-fastest filter time scale; infinite for
/// `mu = 0`.
pub fn time_scale(sys: &LgSystem) -> f64 {
    sys.mu.powf(-1.0 / sys.p() as f64)
}

impl HomodyneConfig {
    /// `dt = 0.01 tau`, burn-in `20 tau` at both ends and a `1000 tau`
    /// interior window, with `tau = mu^(-1/p)`.
    pub fn defaults(sys: &LgSystem, seed: u64, linearized: bool) -> Self {
        let tau = time_scale(sys);
        let burn_in = BURN_IN_FACTOR * tau;
        Self {
            photon_flux: sys.photon_flux,
            dt: DT_FACTOR * tau,
            duration: 2.0 * burn_in + WINDOW_FACTOR * tau,
            burn_in,
            seed,
            linearized,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }

    /// Steps kept for filter statistics: everything after the burn-in.
    pub fn filter_window(&self) -> Range<usize> {
        self.burn_in_steps()..self.n_steps()
    }

    /// Steps where both the filter and the retrofilter have settled.
    pub fn interior_window(&self) -> Range<usize> {
        let b = self.burn_in_steps();
        b..self.n_steps().saturating_sub(b).max(b)
    }

    pub fn validate(&self, sys: &LgSystem) -> Result<()> {
        ensure_positive("dt", self.dt)?;
        ensure_positive("duration", self.duration)?;
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(Error::invalid("burn_in", "must be finite and >= 0"));
        }
        if self.photon_flux != sys.photon_flux {
            return Err(Error::invalid(
                "photon_flux",
                format!(
                    "config has {} but the LG system was built for {}",
                    self.photon_flux, sys.photon_flux
                ),
            ));
        }
        let tau = time_scale(sys);
        if tau.is_finite() {
            let slack = 1.0 + 1e-9;
            if self.dt > DT_FACTOR * tau * slack {
                return Err(Error::invalid(
                    "dt",
                    format!(
                        "{} exceeds {DT_FACTOR} mu^(-1/p) = {}",
                        self.dt,
                        DT_FACTOR * tau
                    ),
                ));
            }
            if self.burn_in * slack < BURN_IN_FACTOR * tau {
                return Err(Error::invalid(
                    "burn_in",
                    format!(
                        "{} is below {BURN_IN_FACTOR} mu^(-1/p) = {}",
                        self.burn_in,
                        BURN_IN_FACTOR * tau
                    ),
                ));
            }
        }
        if self.n_steps() <= 2 * self.burn_in_steps() {
            return Err(Error::invalid(
                "duration",
                "must exceed twice the burn-in so the smoothing window is not empty",
            ));
        }
        Ok(())
    }
}

/// Gaussian increments driving one trial: `dw` for the phase chain, `db`
/// for the shot noise. Both have variance `dt` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl Increments {
    pub fn from_seed(seed: u64, n_steps: usize, dt: f64) -> Self {
        let s = NoiseStreams::new(seed);
        Self {
            dw: s.phase_increments(n_steps, dt),
            db: s.measurement_increments(n_steps, dt),
        }
    }
}

/// What drives the local-oscillator phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Filter,
    Abc(AbcParams),
}

/// One simulated trial on the grid `t_i = i dt`, `i < n_steps`.
///
/// Estimates at index `i` use data from steps `< i` (filter, ABC) or
/// `>= i` (retrofilter). `current` and `y` hold increments `I dt` and
/// `y dt`. State trajectories are stored row-major, `dim` values per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub dt: f64,
    pub dim: usize,
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub current: Vec<f64>,
    pub y: Vec<f64>,
    /// True chain state.
    pub x: Vec<f64>,
    pub xf: Vec<f64>,
    pub xr: Vec<f64>,
    /// NaN outside `interior`.
    pub xs: Vec<f64>,
    pub phi_f: Vec<f64>,
    /// NaN outside `interior`.
    pub phi_s: Vec<f64>,
    /// NaN unless the ABC estimator ran.
    pub phi_abc: Vec<f64>,
    pub interior: Range<usize>,
    /// Steps where `|c|` was too small to define the ABC phase.
    pub abc_indeterminate: usize,
    /// Largest change of the ABC estimate between adjacent steps.
    pub abc_max_jump: f64,
}

impl SimulationRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn check_model(model: &PhaseModel, sys: &LgSystem) -> Result<()> {
    if model.p() != sys.p() as f64 {
        return Err(Error::invalid(
            "p",
            format!(
                "phase model has p = {} but the LG system has p = {}",
                model.p(),
                sys.p()
            ),
        ));
    }
    if model.kappa() != sys.kappa {
        return Err(Error::invalid(
            "kappa",
            format!(
                "phase model has kappa = {} but the LG system has {}",
                model.kappa(),
                sys.kappa
            ),
        ));
    }
    Ok(())
}

/// Nonlinear (or linearized) simulation with the LG filter in the loop.
pub fn simulate_record(
    model: &PhaseModel,
    sys: &LgSystem,
    config: &HomodyneConfig,
) -> Result<SimulationRecord> {
    simulate(model, sys, config, Feedback::Filter)
}

/// Simulation with the ABC estimator in the loop. The LG filter, retrofilter
/// and smoother still run open loop on the same `y` record.
pub fn run_abc(
    model: &PhaseModel,
    sys: &LgSystem,
    config: &HomodyneConfig,
    params: AbcParams,
) -> Result<SimulationRecord> {
    simulate(model, sys, config, Feedback::Abc(params))
}

pub fn simulate(
    model: &PhaseModel,
    sys: &LgSystem,
    config: &HomodyneConfig,
    feedback: Feedback,
) -> Result<SimulationRecord> {
    config.validate(sys)?;
    let inc = Increments::from_seed(config.seed, config.n_steps(), config.dt);
    simulate_with(model, sys, config, feedback, &inc)
}

/// As [`simulate`], with explicit increments. `config.seed` is ignored.
pub fn simulate_with(
    model: &PhaseModel,
    sys: &LgSystem,
    config: &HomodyneConfig,
    feedback: Feedback,
    inc: &Increments,
) -> Result<SimulationRecord> {
    config.validate(sys)?;
    check_model(model, sys)?;
    let steps = config.n_steps();
    if inc.dw.len() < steps || inc.db.len() < steps {
        return Err(Error::DimensionMismatch {
            expected: steps,
            found: inc.dw.len().min(inc.db.len()),
        });
    }
    let dt = config.dt;
    let dim = sys.dim();
    let n = sys.n;
    let scale = sys.phase_scale();
    let gain = 2.0 * sys.photon_flux.sqrt();
    let stepper = ChainStepper::new(model, dt)?;
    // without photons C = 0, the gains vanish and any covariance will do
    let cov = if sys.mu > 0.0 {
        Some(CovarianceSet::for_system(sys)?)
    } else {
        None
    };
    let zero = DMatrix::zeros(dim, dim);
    let (vf, vr) = cov.as_ref().map_or((&zero, &zero), |c| (&c.vf, &c.vr));
    let forward = LinearPass::filter(sys, vf);
    let mut abc = match feedback {
        Feedback::Abc(p) => Some(abc::AbcState::new(p, dt, sys.photon_flux)?),
        Feedback::Filter => None,
    };

    let mut rec = SimulationRecord {
        dt,
        dim,
        t: Vec::with_capacity(steps),
        phi: Vec::with_capacity(steps),
        theta: Vec::with_capacity(steps),
        current: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
        x: Vec::with_capacity(steps * dim),
        xf: Vec::with_capacity(steps * dim),
        xr: Vec::new(),
        xs: Vec::new(),
        phi_f: Vec::with_capacity(steps),
        phi_s: Vec::new(),
        phi_abc: Vec::with_capacity(steps),
        interior: config.interior_window(),
        abc_indeterminate: 0,
        abc_max_jump: 0.0,
    };

    let mut x = vec![0.0; dim];
    let mut xf = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut theta = 0.0;
    for i in 0..steps {
        let phi = scale * x[n];
        let phi_f = scale * xf[n];
        if abc.is_none() {
            theta = phi_f;
        }
        let err = phi - theta;
        let signal = if config.linearized { err } else { err.sin() };
        let i_dt = gain * signal * dt + inc.db[i];
        let y_dt = i_dt + gain * theta * dt;

        rec.t.push(i as f64 * dt);
        rec.phi.push(phi);
        rec.theta.push(theta);
        rec.current.push(i_dt);
        rec.y.push(y_dt);
        rec.x.extend_from_slice(&x);
        rec.xf.extend_from_slice(&xf);
        rec.phi_f.push(phi_f);
        rec.phi_abc
            .push(if abc.is_some() { theta } else { f64::NAN });

        forward.step(&mut xf, &mut scratch, y_dt, dt);
        if let Some(state) = abc.as_mut() {
            let next = state.step(theta, i_dt);
            rec.abc_max_jump = rec.abc_max_jump.max((next - theta).abs());
            theta = next;
        }
        stepper.step(&mut x, inc.dw[i], dt);
    }
    if let Some(state) = &abc {
        rec.abc_indeterminate = state.indeterminate();
    }

    rec.xr = run_retrofilter_pass(&rec.y, sys, vr, dt)?;
    rec.xs = if cov.is_some() {
        combine_smoothed(&rec.xf, &rec.xr, vf, vr, rec.interior.clone())?.xs
    } else {
        // no information: the smoothed estimate is the prior mean
        let mut xs = vec![f64::NAN; steps * dim];
        xs[rec.interior.start * dim..rec.interior.end * dim].fill(0.0);
        xs
    };
    rec.phi_s = rec.xs.chunks(dim).map(|s| scale * s[n]).collect();
    Ok(rec)
}
