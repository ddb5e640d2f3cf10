use std::fs::File;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analytic_bounds::{filter_mse_power_law, qcrb_power_law};
use crate::error::{Error, Result};
use crate::lg_estimation::{build_lg_system, lg_filter_mse, LgSystem};
use crate::noise::derive_seed;
use crate::phase_process::PhaseModel;
use crate::simulation::{
    aggregate, log_windows, run_abc, simulate_record, time_scale, trend_increasing, trial_mse,
    window_trend, AbcParams, ErrorMetric, HomodyneConfig, MseStats, SimulationRecord,
};

use super::config::{Estimator, SweepSpec, TimingSection};

pub const SWEEP_HEADER: [&str; 12] = [
    "p",
    "N_over_kappa",
    "estimator",
    "mse",
    "stderr",
    "n_trials",
    "dt",
    "duration",
    "seed",
    "lg_filter_mse",
    "qcrb",
    "wiener_filter_mse",
];

pub const RATIO_HEADER: [&str; 7] = [
    "p",
    "grid",
    "N_over_kappa",
    "estimator",
    "ratio",
    "ratio_stderr",
    "status",
];

/// `N = kappa g^(p/(p-1))` for grid value `g = (N/kappa)^((p-1)/p)`.
pub fn flux_from_grid(p: u32, kappa: f64, g: f64) -> f64 {
    let pf = p as f64;
    kappa * g.powf(pf / (pf - 1.0))
}

/// `<dir>/<stem>.ratios.csv` next to the main output.
pub fn ratios_path(output: &Path) -> PathBuf {
    output.with_extension("ratios.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Diverged,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: u32,
    pub grid: f64,
    pub n_over_kappa: f64,
    pub estimator: Estimator,
    pub stats: MseStats,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub lg_filter_mse: f64,
    pub qcrb: f64,
    pub wiener_filter_mse: f64,
    /// Unwrapped MSE over consecutive log-spaced windows.
    pub windows: Vec<MseStats>,
    pub status: RowStatus,
}

impl SweepRow {
    pub fn ratio(&self) -> f64 {
        self.stats.mse / self.lg_filter_mse
    }

    pub fn ratio_stderr(&self) -> f64 {
        self.stats.stderr / self.lg_filter_mse
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.p.to_string(),
            self.n_over_kappa.to_string(),
            self.estimator.to_string(),
            self.stats.mse.to_string(),
            self.stats.stderr.to_string(),
            self.stats.n_trials.to_string(),
            self.dt.to_string(),
            self.duration.to_string(),
            self.seed.to_string(),
            self.lg_filter_mse.to_string(),
            self.qcrb.to_string(),
            self.wiener_filter_mse.to_string(),
        ]
    }

    fn ratio_record(&self) -> Vec<String> {
        vec![
            self.p.to_string(),
            self.grid.to_string(),
            self.n_over_kappa.to_string(),
            self.estimator.to_string(),
            self.ratio().to_string(),
            self.ratio_stderr().to_string(),
            self.status.as_str().to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Simulation settings for one grid point, scaled by `mu^(-1/p)`.
pub fn homodyne_config(
    sys: &LgSystem,
    timing: &TimingSection,
    seed: u64,
    linearized: bool,
) -> HomodyneConfig {
    let tau = time_scale(sys);
    let burn_in = timing.burn_in_factor * tau;
    HomodyneConfig {
        photon_flux: sys.photon_flux,
        dt: timing.dt_factor * tau,
        duration: 2.0 * burn_in + timing.window_factor * tau,
        burn_in,
        seed,
        linearized,
    }
}

/// Phase model for the sweep: pure power law, or with the lowest chain
/// component decaying at `cutoff`.
pub fn sweep_model(p: u32, kappa: f64, cutoff: Option<f64>) -> Result<PhaseModel> {
    match cutoff {
        None => PhaseModel::power_law(p as f64, kappa),
        Some(l) => {
            let mut d = vec![0.0; p as usize / 2];
            d[0] = l;
            PhaseModel::new(p as f64, kappa, d)
        }
    }
}

/// Per-trial numbers for every requested estimator.
struct TrialOutcome {
    mse: Vec<f64>,
    windows: Vec<Vec<f64>>,
}

fn estimate_of<'a>(
    est: Estimator,
    lg: Option<&'a SimulationRecord>,
    abc: Option<&'a SimulationRecord>,
    cfg: &HomodyneConfig,
) -> (&'a SimulationRecord, &'a [f64], Range<usize>) {
    match est {
        Estimator::Filter => {
            let r = lg.expect("filter run present");
            (r, &r.phi_f, cfg.filter_window())
        }
        Estimator::Smoother => {
            let r = lg.expect("filter run present");
            (r, &r.phi_s, r.interior.clone())
        }
        Estimator::Abc => {
            let r = abc.expect("abc run present");
            (r, &r.phi_abc, cfg.filter_window())
        }
    }
}

struct PointSetup<'a> {
    spec: &'a SweepSpec,
    model: PhaseModel,
    sys: LgSystem,
    abc: Option<AbcParams>,
    metric: ErrorMetric,
}

fn run_trial(setup: &PointSetup, cfg: &HomodyneConfig) -> Result<TrialOutcome> {
    let ests = &setup.spec.sweep.estimators;
    let needs_lg = ests
        .iter()
        .any(|e| matches!(e, Estimator::Filter | Estimator::Smoother));
    let lg = if needs_lg {
        Some(simulate_record(&setup.model, &setup.sys, cfg)?)
    } else {
        None
    };
    let abc = match setup.abc {
        Some(params) => Some(run_abc(&setup.model, &setup.sys, cfg, params)?),
        None => None,
    };
    let count = setup.spec.timing.divergence_windows;
    let mut out = TrialOutcome {
        mse: Vec::with_capacity(ests.len()),
        windows: Vec::with_capacity(ests.len()),
    };
    for &e in ests {
        let (rec, est, window) = estimate_of(e, lg.as_ref(), abc.as_ref(), cfg);
        out.mse
            .push(trial_mse(&rec.phi, est, window.clone(), setup.metric)?);
        let w = log_windows(window.start.max(1), window.end, count)?
            .into_iter()
            .map(|w| trial_mse(&rec.phi, est, w, ErrorMetric::Unwrapped))
            .collect::<Result<Vec<_>>>()?;
        out.windows.push(w);
    }
    Ok(out)
}

/// All rows of one `(p, grid)` point, in estimator order.
fn run_point(spec: &SweepSpec, p: u32, grid_index: usize) -> Result<Vec<SweepRow>> {
    let s = &spec.sweep;
    let g = s.grid[grid_index];
    let kappa = s.kappa;
    let flux = flux_from_grid(p, kappa, g);
    let sys = build_lg_system(p, kappa, flux)?;
    let model = sweep_model(p, kappa, spec.abc.cutoff)?;
    let abc = s.estimators.contains(&Estimator::Abc).then(|| AbcParams {
        chi: spec.abc.chi.unwrap_or_else(|| sys.mu.powf(1.0 / p as f64)),
        variant: spec.abc.variant.into(),
    });
    let metric = if s.linearized {
        ErrorMetric::Unwrapped
    } else {
        ErrorMetric::Wrapped
    };
    let base = homodyne_config(&sys, &spec.timing, s.seed, s.linearized);
    let setup = PointSetup {
        spec,
        model,
        sys,
        abc,
        metric,
    };
    let trials: Vec<TrialOutcome> = (0..s.trials)
        .into_par_iter()
        .map(|k| {
            let cfg = HomodyneConfig {
                seed: derive_seed(s.seed, &[p as u64, grid_index as u64, k as u64]),
                ..base.clone()
            };
            run_trial(&setup, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let lg = lg_filter_mse(p, kappa, flux)?;
    let qcrb = qcrb_power_law(p as f64, kappa, flux)?;
    let wiener = filter_mse_power_law(p as f64, kappa, flux)?;
    s.estimators
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let per: Vec<f64> = trials.iter().map(|t| t.mse[j]).collect();
            let per_window: Vec<Vec<f64>> = trials.iter().map(|t| t.windows[j].clone()).collect();
            let (windows, logs) = window_trend(&per_window)?;
            let status = if trend_increasing(&windows, &logs, spec.timing.divergence_sigmas) {
                RowStatus::Diverged
            } else {
                RowStatus::Ok
            };
            Ok(SweepRow {
                p,
                grid: g,
                n_over_kappa: flux / kappa,
                estimator: e,
                stats: aggregate(&per)?,
                dt: base.dt,
                duration: base.duration,
                seed: s.seed,
                lg_filter_mse: lg,
                qcrb,
                wiener_filter_mse: wiener,
                windows,
                status,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn create_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(f))
}

/// Runs the sweep and writes `output` plus `<stem>.ratios.csv`. Rows are
/// flushed after every grid point, so an interrupted run leaves the points
/// finished so far.
pub fn run_sweep(spec: &SweepSpec, output: &Path) -> Result<SweepResult> {
    spec.validate()?;
    let mut main = create_writer(output)?;
    let mut ratios = create_writer(&ratios_path(output))?;
    main.write_record(SWEEP_HEADER).map_err(csv_err)?;
    ratios.write_record(RATIO_HEADER).map_err(csv_err)?;
    main.flush()?;
    ratios.flush()?;
    let mut rows = Vec::new();
    for &p in &spec.sweep.p {
        for gi in 0..spec.sweep.grid.len() {
            let point = run_point(spec, p, gi)?;
            for r in &point {
                main.write_record(r.record()).map_err(csv_err)?;
                ratios.write_record(r.ratio_record()).map_err(csv_err)?;
            }
            main.flush()?;
            ratios.flush()?;
            rows.extend(point);
        }
    }
    Ok(SweepResult { rows })
}
