//! Gaussian phase with a power-law spectrum and the integrator chain that
//! realizes it for even exponents.
//!
//! For `p = 2n + 2` the phase is `phi = kappa^(n + 1/2) * x_n` where
//!
//! ```text
//! dx_0     = -lambda_0 x_0 dt + dW
//! dx_{k+1} = (x_k - lambda_{k+1} x_{k+1}) dt
//! ```
//!
//! With every `lambda_k = 0` the spectrum of `phi` is `kappa^(p-1)/|omega|^p`.

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::noise::NoiseStreams;

/// Largest `dt * max(lambda_k)` accepted by the Euler-Maruyama stepper.
pub const MAX_DAMPING_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    p: f64,
    kappa: f64,
    dampings: Vec<f64>,
}

/// Returns `n` with `p = 2n + 2` if `p` is an even integer >= 2.
pub fn chain_index(p: f64) -> Option<usize> {
    if p >= 2.0 && p.fract() == 0.0 && (p as u64).is_multiple_of(2) && p <= 1e6 {
        Some(p as usize / 2 - 1)
    } else {
        None
    }
}

impl PhaseModel {
    /// `dampings` must hold `p/2` rates when `p` is an even integer and be
    /// empty otherwise (noninteger spectra have no chain).
    pub fn new(p: f64, kappa: f64, dampings: Vec<f64>) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::ExponentOutOfRange(p));
        }
        ensure_positive("kappa", kappa)?;
        match chain_index(p) {
            Some(n) if dampings.len() != n + 1 => {
                return Err(Error::DimensionMismatch {
                    expected: n + 1,
                    found: dampings.len(),
                })
            }
            None if !dampings.is_empty() => return Err(Error::ChainRequiresEvenP(p)),
            _ => {}
        }
        for &l in &dampings {
            ensure_nonnegative("dampings", l)?;
        }
        Ok(Self { p, kappa, dampings })
    }

    /// Undamped model.
    pub fn power_law(p: f64, kappa: f64) -> Result<Self> {
        let dampings = chain_index(p).map_or_else(Vec::new, |n| vec![0.0; n + 1]);
        Self::new(p, kappa, dampings)
    }

    /// `p = 4` with decay `lambda` on `x_0` only.
    pub fn damped_p4(kappa: f64, lambda: f64) -> Result<Self> {
        Self::new(4.0, kappa, vec![lambda, 0.0])
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dampings(&self) -> &[f64] {
        &self.dampings
    }

    pub fn is_damped(&self) -> bool {
        self.dampings.iter().any(|&l| l > 0.0)
    }

    /// Chain index `n`, or an error for exponents without a chain.
    pub fn chain_n(&self) -> Result<usize> {
        chain_index(self.p).ok_or(Error::ChainRequiresEvenP(self.p))
    }

    /// `kappa^(n + 1/2)`, the factor mapping `x_n` to the phase.
    pub fn phase_scale(&self) -> Result<f64> {
        Ok(self.kappa.powf(self.chain_n()? as f64 + 0.5))
    }

    /// Spectral density at angular frequency `omega`. Infinite values are
    /// returned as errors.
    pub fn spectrum(&self, omega: f64) -> Result<f64> {
        let s = self.density(omega);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::SpectrumDivergentAtZero)
        }
    }

    /// Spectral density, `+inf` where it diverges.
    pub fn density(&self, omega: f64) -> f64 {
        let w = omega.abs();
        let pre = self.kappa.powf(self.p - 1.0);
        if self.is_damped() {
            let w2 = w * w;
            self.dampings.iter().fold(pre, |acc, &l| acc / (w2 + l * l))
        } else {
            pre / w.powf(self.p)
        }
    }

    /// Stationary autocorrelation `<phi(t) phi(t + lag)>`.
    ///
    /// Requires every rate to be positive and the rates to be distinct, so
    /// that the partial-fraction expansion of the spectrum exists.
    pub fn autocorrelation(&self, lag: f64) -> Result<f64> {
        self.chain_n()?;
        let l = &self.dampings;
        if l.iter().any(|&x| x <= 0.0) {
            return Err(Error::NonStationary(
                "autocorrelation needs every damping rate > 0".into(),
            ));
        }
        for (i, a) in l.iter().enumerate() {
            for b in &l[i + 1..] {
                if (a - b).abs() <= 1e-12 * a.max(*b) {
                    return Err(Error::NonStationary(
                        "autocorrelation needs distinct damping rates".into(),
                    ));
                }
            }
        }
        let tau = lag.abs();
        let sum: f64 = l
            .iter()
            .enumerate()
            .map(|(k, &lk)| {
                let denom: f64 = l
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &lj)| lj * lj - lk * lk)
                    .product();
                (-lk * tau).exp() / (2.0 * lk * denom)
            })
            .sum();
        Ok(self.kappa.powf(self.p - 1.0) * sum)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub t: f64,
}

impl ChainState {
    /// `phi = x_n * kappa^(n + 1/2)`.
    pub fn phase(&self, kappa: f64) -> f64 {
        let n = self.x.len() - 1;
        self.x[n] * kappa.powf(n as f64 + 0.5)
    }
}

/// Euler-Maruyama stepper for the chain. Works in place on `x`.
#[derive(Debug, Clone)]
pub struct ChainStepper {
    dampings: Vec<f64>,
}

impl ChainStepper {
    pub fn new(model: &PhaseModel, dt: f64) -> Result<Self> {
        model.chain_n()?;
        ensure_positive("dt", dt)?;
        let max_l = model.dampings.iter().cloned().fold(0.0, f64::max);
        if dt * max_l >= MAX_DAMPING_STEP {
            return Err(Error::invalid(
                "dt",
                format!(
                    "dt * max damping = {} must stay below {MAX_DAMPING_STEP}",
                    dt * max_l
                ),
            ));
        }
        Ok(Self {
            dampings: model.dampings.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dampings.len()
    }

    pub fn step(&self, x: &mut [f64], dw: f64, dt: f64) {
        let l = &self.dampings;
        // top-down so that x_{k-1} is still the old value
        for k in (1..x.len()).rev() {
            x[k] += (x[k - 1] - l[k] * x[k]) * dt;
        }
        x[0] += -l[0] * x[0] * dt + dw;
    }
}

/// Sampled chain path on a uniform grid, starting from `x = 0` at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    dt: f64,
    kappa: f64,
    states: Vec<f64>,
    increments: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Wiener increments `dW_i` that moved state `i` to state `i + 1`.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn state(&self, i: usize) -> ChainState {
        ChainState {
            x: self.states[i * self.dim..(i + 1) * self.dim].to_vec(),
            t: i as f64 * self.dt,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = ChainState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    /// Component `k` along the path.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.chunks(self.dim).map(|s| s[k]).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        let scale = self.kappa.powf(self.dim as f64 - 0.5);
        self.states
            .chunks(self.dim)
            .map(|s| s[self.dim - 1] * scale)
            .collect()
    }
}

/// Integrates the chain driven by the given increments. The result has
/// `increments.len() + 1` states.
pub fn integrate_chain(model: &PhaseModel, dt: f64, increments: &[f64]) -> Result<Trajectory> {
    let stepper = ChainStepper::new(model, dt)?;
    let dim = stepper.dim();
    let mut states = Vec::with_capacity((increments.len() + 1) * dim);
    let mut x = vec![0.0; dim];
    states.extend_from_slice(&x);
    for &dw in increments {
        stepper.step(&mut x, dw, dt);
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        dim,
        dt,
        kappa: model.kappa,
        states,
        increments: increments.to_vec(),
    })
}

/// Samples `n_steps` Euler-Maruyama steps of the chain. The increments come
/// from the phase sub-stream of `seed`, the same one the homodyne simulator
/// uses, so a simulation and a bare trajectory with equal seeds share the
/// phase path.
pub fn sample_trajectory(
    model: &PhaseModel,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    ChainStepper::new(model, dt)?;
    let dw = NoiseStreams::new(seed).phase_increments(n_steps, dt);
    integrate_chain(model, dt, &dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn spectrum_examples() {
        let m = PhaseModel::power_law(2.0, 1.0).unwrap();
        assert_relative_eq!(m.spectrum(2.0).unwrap(), 0.25);
        let d = PhaseModel::damped_p4(1.0, 1.0).unwrap();
        assert_relative_eq!(d.spectrum(1.0).unwrap(), 0.5);
        let u = PhaseModel::power_law(4.0, 1.0).unwrap();
        let w = 1e4;
        assert_relative_eq!(
            d.spectrum(w).unwrap() / u.spectrum(w).unwrap(),
            1.0,
            epsilon = 1e-7
        );
    }

    #[test]
    fn spectrum_divergence_at_zero() {
        let m = PhaseModel::power_law(2.0, 1.0).unwrap();
        assert_eq!(m.spectrum(0.0), Err(Error::SpectrumDivergentAtZero));
        let d = PhaseModel::damped_p4(1.0, 1.0).unwrap();
        assert_eq!(d.spectrum(0.0), Err(Error::SpectrumDivergentAtZero));
        let f = PhaseModel::new(4.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert_relative_eq!(f.spectrum(0.0).unwrap(), 0.25);
    }

    #[test]
    fn undamped_chain_spectrum_is_exact_power_law() {
        for p in [2.0, 4.0, 6.0] {
            let m = PhaseModel::power_law(p, 1.7).unwrap();
            for w in [1e-3f64, 1.0, 1e3] {
                let exact = 1.7f64.powf(p - 1.0) / w.powf(p);
                assert_relative_eq!(m.spectrum(w).unwrap(), exact, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(
            PhaseModel::new(1.0, 1.0, vec![]),
            Err(Error::ExponentOutOfRange(_))
        ));
        assert!(PhaseModel::new(2.0, 0.0, vec![0.0]).is_err());
        assert!(matches!(
            PhaseModel::new(4.0, 1.0, vec![0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            PhaseModel::new(3.0, 1.0, vec![0.0]),
            Err(Error::ChainRequiresEvenP(_))
        ));
        assert!(PhaseModel::new(3.0, 1.0, vec![]).is_ok());
        assert!(PhaseModel::new(2.0, 1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn sampling_preconditions() {
        let odd = PhaseModel::power_law(3.0, 1.0).unwrap();
        assert_eq!(
            sample_trajectory(&odd, 0.1, 10, 0),
            Err(Error::ChainRequiresEvenP(3.0))
        );
        let m = PhaseModel::power_law(2.0, 1.0).unwrap();
        assert!(sample_trajectory(&m, 0.0, 10, 0).is_err());
        let d = PhaseModel::new(2.0, 1.0, vec![2.0]).unwrap();
        assert!(sample_trajectory(&d, 0.05, 10, 0).is_err());
        assert!(sample_trajectory(&d, 0.049, 10, 0).is_ok());
    }

    #[test]
    fn zero_noise_keeps_zero_state() {
        let m = PhaseModel::new(6.0, 1.0, vec![0.3, 0.0, 0.1]).unwrap();
        let tr = integrate_chain(&m, 0.01, &vec![0.0; 1000]).unwrap();
        assert!(tr.states().all(|s| s.x.iter().all(|&v| v == 0.0)));
        assert_eq!(tr.len(), 1001);
    }

    #[test]
    fn wiener_increment_variance() {
        // x_0 of the undamped p = 2 chain is a Wiener process
        let m = PhaseModel::power_law(2.0, 1.0).unwrap();
        let dt = 0.01;
        let per = 50;
        let windows = 4000;
        let tr = sample_trajectory(&m, dt, per * windows, 11).unwrap();
        let x = tr.component(0);
        let d: Vec<f64> = (0..windows)
            .map(|w| x[(w + 1) * per] - x[w * per])
            .collect();
        let tau = per as f64 * dt;
        let mean_sq = d.iter().map(|v| v * v).sum::<f64>() / windows as f64;
        let var_sq =
            d.iter().map(|v| (v * v - mean_sq).powi(2)).sum::<f64>() / (windows - 1) as f64;
        let se = (var_sq / windows as f64).sqrt();
        assert!(
            (mean_sq - tau).abs() < 3.0 * se,
            "{mean_sq} vs {tau} (se {se})"
        );
    }

    #[test]
    fn ornstein_uhlenbeck_stationary_variance() {
        let lambda = 2.0;
        let m = PhaseModel::new(2.0, 1.0, vec![lambda]).unwrap();
        let dt = 0.001;
        let tr = sample_trajectory(&m, dt, 2_000_000, 5).unwrap();
        let x = tr.component(0);
        // batch means over blocks much longer than the correlation time 1/lambda
        let skip = 5000;
        let block = 10_000;
        let blocks: Vec<f64> = x[skip..]
            .chunks_exact(block)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / block as f64)
            .collect();
        let nb = blocks.len() as f64;
        let mean = blocks.iter().sum::<f64>() / nb;
        let sd = (blocks.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (nb - 1.0)).sqrt();
        let se = sd / nb.sqrt();
        let target = 1.0 / (2.0 * lambda);
        assert!(
            (mean - target).abs() < 3.0 * se,
            "{mean} vs {target} (se {se})"
        );
    }

    #[test]
    fn autocorrelation_single_pole() {
        let m = PhaseModel::new(2.0, 1.0, vec![2.0]).unwrap();
        assert_relative_eq!(m.autocorrelation(0.0).unwrap(), 0.25);
        assert_relative_eq!(m.autocorrelation(-0.5).unwrap(), 0.25 * (-1.0f64).exp());
        let u = PhaseModel::power_law(2.0, 1.0).unwrap();
        assert!(matches!(
            u.autocorrelation(0.0),
            Err(Error::NonStationary(_))
        ));
        let same = PhaseModel::new(4.0, 1.0, vec![1.0, 1.0]).unwrap();
        assert!(same.autocorrelation(0.0).is_err());
    }

    #[test]
    fn autocorrelation_matches_fourier_transform_of_spectrum() {
        // oracle: trapezoidal inverse Fourier transform of the spectrum
        let m = PhaseModel::new(4.0, 1.3, vec![1.0, 2.5]).unwrap();
        for lag in [0.0, 0.4, 1.5] {
            let h = 1e-3;
            let upper = 400.0;
            let k = (upper / h) as usize;
            let mut s = 0.5 * m.density(0.0);
            for i in 1..=k {
                let w = i as f64 * h;
                s += m.density(w) * (w * lag).cos();
            }
            let r = s * h / std::f64::consts::PI;
            assert_relative_eq!(m.autocorrelation(lag).unwrap(), r, max_relative = 1e-6);
        }
    }

    #[test]
    fn empirical_autocorrelation_of_damped_p4() {
        let m = PhaseModel::new(4.0, 1.0, vec![1.0, 0.5]).unwrap();
        let dt = 0.01;
        let n_traj = 16;
        let steps = 400_000;
        let skip = 3000;
        let lags = [0usize, 50, 100, 200, 300];
        let r0 = m.autocorrelation(0.0).unwrap();
        let mut acc = vec![0.0; lags.len()];
        let mut count = 0usize;
        for s in 0..n_traj {
            let phi = sample_trajectory(&m, dt, steps, 100 + s).unwrap().phase();
            let max_lag = *lags.last().unwrap();
            for i in (skip..steps - max_lag).step_by(7) {
                for (a, &l) in acc.iter_mut().zip(&lags) {
                    *a += phi[i] * phi[i + l];
                }
                count += 1;
            }
        }
        for (a, &l) in acc.iter().zip(&lags) {
            let theory = m.autocorrelation(l as f64 * dt).unwrap();
            if theory > 0.1 * r0 {
                let emp = a / count as f64;
                assert!(
                    ((emp - theory) / theory).abs() < 0.05,
                    "lag {l}: {emp} vs {theory}"
                );
            }
        }
    }

    #[test]
    fn trajectory_is_deterministic_and_exposes_increments() {
        let m = PhaseModel::power_law(4.0, 2.0).unwrap();
        let a = sample_trajectory(&m, 0.01, 500, 9).unwrap();
        let b = sample_trajectory(&m, 0.01, 500, 9).unwrap();
        assert_eq!(a, b);
        let c = integrate_chain(&m, 0.01, a.increments()).unwrap();
        assert_eq!(a, c);
        assert_eq!(
            a.increments(),
            NoiseStreams::new(9).phase_increments(500, 0.01).as_slice()
        );
        let s = a.state(10);
        assert_relative_eq!(s.phase(2.0), a.phase()[10]);
        assert_relative_eq!(s.t, 0.1);
    }

    proptest! {
        #[test]
        fn spectrum_is_even_and_positive(
            p in 1.05f64..8.0,
            kappa in 0.01f64..100.0,
            w in 1e-3f64..1e3,
        ) {
            let m = PhaseModel::power_law(p, kappa).unwrap();
            let a = m.spectrum(w).unwrap();
            prop_assert!(a > 0.0);
            prop_assert_eq!(a, m.spectrum(-w).unwrap());
        }

        #[test]
        fn damping_lowers_spectrum(
            n in 0usize..4,
            l in prop::collection::vec(0.0f64..5.0, 4),
            w in 1e-2f64..1e2,
        ) {
            let p = 2.0 * n as f64 + 2.0;
            let damped = PhaseModel::new(p, 1.0, l[..=n].to_vec()).unwrap();
            let undamped = PhaseModel::power_law(p, 1.0).unwrap();
            prop_assert!(damped.density(w) <= undamped.density(w) * (1.0 + 1e-15));
            prop_assert_eq!(damped.density(w), damped.density(-w));
            let tiny: Vec<f64> = l[..=n].iter().map(|x| x * 1e-9).collect();
            let near = PhaseModel::new(p, 1.0, tiny).unwrap();
            prop_assert!((near.density(w) / undamped.density(w) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn trajectories_are_bit_identical(seed in any::<u64>(), n in 0usize..3) {
            let m = PhaseModel::power_law(2.0 * n as f64 + 2.0, 1.0).unwrap();
            let a = sample_trajectory(&m, 0.01, 64, seed).unwrap();
            let b = sample_trajectory(&m, 0.01, 64, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
