use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::analytic_bounds::{
    filter_mse_power_law, filter_mse_quadrature, qcrb_power_law, qcrb_quadrature,
    smoother_mse_power_law, smoother_mse_quadrature, BoundQuery, Spectrum, TabulatedSpectrum,
};
use crate::error::{Error, Result};
use crate::lg_estimation::{
    build_lg_system, retro_covariance, riccati_residual, smoother_covariance,
    solve_filter_covariance,
};
use crate::phase_process::PhaseModel;
use crate::quadrature::Estimate;
use crate::simulation::{
    run_abc, simulate_record, AbcParams, AbcVariant, HomodyneConfig, SimulationRecord,
};

use super::config::{Estimator, TimingSection};
use super::sweep::{homodyne_config, sweep_model};

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSource {
    PowerLaw { p: f64, kappa: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundLine {
    pub name: &'static str,
    pub closed_form: Option<f64>,
    pub quadrature: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub photon_flux: f64,
    pub qcrb: BoundLine,
    pub filter: BoundLine,
    pub smoother: BoundLine,
}

impl BoundsReport {
    /// Filter MSE over QCRB, from the closed forms when present.
    pub fn filter_over_qcrb(&self) -> f64 {
        match (self.filter.closed_form, self.qcrb.closed_form) {
            (Some(f), Some(q)) => f / q,
            _ => self.filter.quadrature.value / self.qcrb.quadrature.value,
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl fmt::Display for BoundsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bound,closed_form,quadrature,quadrature_error")?;
        for l in [&self.qcrb, &self.filter, &self.smoother] {
            writeln!(
                f,
                "{},{},{},{}",
                l.name,
                opt(l.closed_form),
                l.quadrature.value,
                l.quadrature.error
            )?;
        }
        writeln!(f, "filter_over_qcrb,{},,", self.filter_over_qcrb())
    }
}

/// QCRB, optimal filter and optimal smoother MSE. Closed forms are given for
/// power laws; quadrature always runs.
pub fn cmd_bounds(source: &SpectrumSource, photon_flux: f64) -> Result<BoundsReport> {
    let (spectrum, closed): (Box<dyn Spectrum>, Option<(f64, f64)>) = match source {
        SpectrumSource::PowerLaw { p, kappa } => (
            Box::new(PhaseModel::power_law(*p, *kappa)?),
            Some((*p, *kappa)),
        ),
        SpectrumSource::File(path) => (Box::new(TabulatedSpectrum::from_csv(path)?), None),
    };
    let q = BoundQuery::new(spectrum.as_ref(), photon_flux);
    let cf = |g: fn(f64, f64, f64) -> Result<f64>| -> Result<Option<f64>> {
        closed.map(|(p, k)| g(p, k, photon_flux)).transpose()
    };
    Ok(BoundsReport {
        photon_flux,
        qcrb: BoundLine {
            name: "qcrb",
            closed_form: cf(qcrb_power_law)?,
            quadrature: qcrb_quadrature(&q)?,
        },
        filter: BoundLine {
            name: "filter",
            closed_form: cf(filter_mse_power_law)?,
            quadrature: filter_mse_quadrature(&q)?,
        },
        smoother: BoundLine {
            name: "smoother",
            closed_form: cf(smoother_mse_power_law)?,
            quadrature: smoother_mse_quadrature(&q)?,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiReport {
    pub p: u32,
    pub vf: DMatrix<f64>,
    pub vr: DMatrix<f64>,
    pub vs: DMatrix<f64>,
    /// Largest entry of the normalized Riccati residual.
    pub residual: f64,
}

fn write_matrix(f: &mut fmt::Formatter<'_>, name: &str, m: &DMatrix<f64>) -> fmt::Result {
    writeln!(f, "{name}")?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| format!("{:>20.12}", m[(r, c)]))
            .collect();
        writeln!(f, "{}", row.join(" "))?;
    }
    Ok(())
}

impl fmt::Display for RiccatiReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p = {}", self.p)?;
        write_matrix(f, "Vt_F (filter)", &self.vf)?;
        write_matrix(f, "Vt_R (retrofilter)", &self.vr)?;
        write_matrix(f, "Vt_S (smoother)", &self.vs)?;
        writeln!(f, "residual = {:e}", self.residual)
    }
}

pub fn cmd_riccati(p: u32) -> Result<RiccatiReport> {
    let vf = solve_filter_covariance(p)?;
    let vr = retro_covariance(&vf)?;
    let vs = smoother_covariance(&vf, &vr)?;
    let residual = riccati_residual(&vf, vf.nrows() - 1)?;
    Ok(RiccatiReport {
        p,
        vf,
        vr,
        vs,
        residual,
    })
}

/// Inputs of a single simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateArgs {
    pub p: u32,
    pub kappa: f64,
    pub photon_flux: f64,
    pub estimator: Estimator,
    pub seed: u64,
    pub linearized: bool,
    /// Defaults to `mu^(1/p)`.
    pub chi: Option<f64>,
    pub cutoff: Option<f64>,
    pub variant: AbcVariant,
    pub timing: TimingSection,
    /// Overrides of the `mu`-scaled defaults, needed when `N = 0`.
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub burn_in: Option<f64>,
}

impl SimulateArgs {
    pub fn new(p: u32, kappa: f64, photon_flux: f64, estimator: Estimator, seed: u64) -> Self {
        Self {
            p,
            kappa,
            photon_flux,
            estimator,
            seed,
            linearized: false,
            chi: None,
            cutoff: None,
            variant: AbcVariant::Exact,
            timing: TimingSection::default(),
            dt: None,
            duration: None,
            burn_in: None,
        }
    }
}

pub const SIMULATE_HEADER: [&str; 7] = ["t", "phi", "theta", "y", "phi_f", "phi_s", "phi_abc"];

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulationRecord> {
    let sys = build_lg_system(args.p, args.kappa, args.photon_flux)?;
    let model = sweep_model(args.p, args.kappa, args.cutoff)?;
    let mut cfg: HomodyneConfig = homodyne_config(&sys, &args.timing, args.seed, args.linearized);
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(b) = args.burn_in {
        cfg.burn_in = b;
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    match args.estimator {
        Estimator::Filter | Estimator::Smoother => simulate_record(&model, &sys, &cfg),
        Estimator::Abc => {
            let chi = args.chi.unwrap_or_else(|| sys.mu.powf(1.0 / args.p as f64));
            run_abc(
                &model,
                &sys,
                &cfg,
                AbcParams {
                    chi,
                    variant: args.variant,
                },
            )
        }
    }
}

fn cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Writes one row per step; NaN (undefined estimates) become empty cells.
/// `y` is the per-step increment `y dt`.
pub fn write_record_csv(rec: &SimulationRecord, output: &Path) -> Result<()> {
    let f = File::create(output).map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "{}", SIMULATE_HEADER.join(","))?;
    for i in 0..rec.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            cell(rec.t[i]),
            cell(rec.phi[i]),
            cell(rec.theta[i]),
            cell(rec.y[i]),
            cell(rec.phi_f[i]),
            cell(rec.phi_s[i]),
            cell(rec.phi_abc[i]),
        )?;
    }
    w.flush()?;
    Ok(())
}
