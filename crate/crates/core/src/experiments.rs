//! Simulated measurements: two-tone spectroscopy, the transfer-readout Rabi
//! map, and T₁ / Hahn-echo decays under injected cavity photon noise.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, DephasingInput, FitResult};
use crate::device::{self, angular, DeviceError, TcqParams};
use crate::dynamics::{
    self, apply_instant_rotation, evolve, evolve_with, DynamicsError, EvolveOptions, Frame, LindbladSystem, Observable,
    PulseEnvelope, Transition,
};
use crate::fockspace::{self, DimensionLayout, FockError, Mode, Operator, QuantumState, C64};

/// Cavity truncation used by the decay experiments unless overridden.
pub const DEFAULT_CAVITY_DIM: usize = 6;
pub const DEFAULT_DELAY_POINTS: usize = 41;
pub const DEFAULT_RABI_POINTS: usize = 41;
/// Gaussian σ of the Rabi-map pulses, μs.
pub const DEFAULT_SIGMA: f64 = 0.016;
/// Phase responses below this (radians) count as no resolvable peak.
pub const PHASE_RESOLUTION: f64 = 1e-6;
const POSITIVITY_FLOOR: f64 = -1e-7;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{kind} fit failed: {message}")]
    FitFailed { kind: &'static str, message: String },
    #[error("density matrix lost positivity (min eigenvalue {min_eigenvalue:e})")]
    Positivity { min_eigenvalue: f64 },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(ExperimentError::InvalidGrid(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(ExperimentError::InvalidGrid(format!(
            "{name} grid has non-finite values"
        )));
    }
    Ok(())
}

fn check_increasing(name: &str, grid: &[f64]) -> Result<()> {
    check_grid(name, grid)?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ExperimentError::InvalidGrid(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

/// `n` points geometrically spaced on `[start, end]`.
pub fn geomspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            let ratio = (end / start).ln() / (n - 1) as f64;
            (0..n).map(|i| start * (ratio * i as f64).exp()).collect()
        }
    }
}

/// Default decay grid for an expected time constant `t_est` (μs).
pub fn default_delays(t_est: f64) -> Vec<f64> {
    geomspace(t_est / 50.0, 3.0 * t_est, DEFAULT_DELAY_POINTS)
}

/// Default Rabi-map angle grid on [0, 2π].
pub fn default_angles() -> Vec<f64> {
    analysis::linspace(0.0, 2.0 * PI, DEFAULT_RABI_POINTS)
}

// ---------------------------------------------------------------------------
// Spectroscopy

/// Resonant cavity drive ε (rad/μs) giving mean population `nbar`: ε = √n̄·πκ.
pub fn cavity_drive_for_nbar(nbar: f64, kappa: f64) -> f64 {
    nbar.sqrt() * 0.5 * angular(kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyResult {
    pub spec_freqs: Vec<f64>,
    /// arg⟨a⟩ at each spectroscopy frequency.
    pub cavity_phase: Vec<f64>,
    /// Phase relative to the undriven-qubit baseline.
    pub phase_shift: Vec<f64>,
    /// Centre of the phase-response line, MHz; `None` when nothing is resolved.
    pub dressed_peak: Option<f64>,
    pub peak_phase_shift: f64,
    pub chi_minus: f64,
}

impl SpectroscopyResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "spec_freq_mhz,cavity_phase_rad,phase_shift_rad")?;
        for ((f, p), s) in self.spec_freqs.iter().zip(&self.cavity_phase).zip(&self.phase_shift) {
            writeln!(out, "{f},{p},{s}")?;
        }
        Ok(())
    }
}

fn spectroscopy_system(
    params: &TcqParams,
    layout: &DimensionLayout,
    spec_freq: f64,
    cavity_drive: f64,
    spec_drive: f64,
) -> Result<LindbladSystem> {
    let h = device::build_dispersive_hamiltonian(params, layout)?;
    let frame = [(Mode::Cavity, params.f_r), (Mode::QubitMinus, spec_freq)];
    let h = h.sub(&device::frame_operator(layout, &frame))?;
    let a = fockspace::mode_annihilation(layout, Mode::Cavity)?;
    let b = fockspace::mode_annihilation(layout, Mode::QubitMinus)?;
    let h = h
        .add(&a.add(&a.dagger())?.scale_real(cavity_drive))?
        .add(&b.add(&b.dagger())?.scale_real(0.5 * spec_drive))?;
    let mut ops = dynamics::thermal_collapse_ops(params.kappa, 0.0, layout)?;
    ops.push(dynamics::relaxation_op(params.gamma1, Mode::QubitMinus, layout)?);
    Ok(LindbladSystem::new(h, ops, Frame::rotating(&frame))?)
}

fn argmax_abs(response: &[f64]) -> Option<usize> {
    response
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(k, _)| k)
}

/// Centre of the half-maximum region around the largest |response|, with
/// linear interpolation of the crossings.
fn line_center(x: &[f64], response: &[f64]) -> Option<f64> {
    let k = argmax_abs(response)?;
    let peak = response[k].abs();
    if !(peak > PHASE_RESOLUTION) {
        return None;
    }
    let half = 0.5 * peak;
    let crossing = |i: usize, j: usize| {
        let (ri, rj) = (response[i].abs(), response[j].abs());
        x[i] + (x[j] - x[i]) * (ri - half) / (ri - rj)
    };
    let mut left = x[0];
    for i in (0..k).rev() {
        if response[i].abs() < half {
            left = crossing(i + 1, i);
            break;
        }
    }
    let mut right = x[x.len() - 1];
    for i in k + 1..x.len() {
        if response[i].abs() < half {
            right = crossing(i - 1, i);
            break;
        }
    }
    Some(0.5 * (left + right))
}

/// Steady-state cavity phase while a second tone sweeps the b₋ transition.
///
/// Drives are in rad/μs; the cavity tone sits at the bare cavity frequency.
pub fn two_tone_spectroscopy(
    params: &TcqParams,
    spec_freqs: &[f64],
    cavity_drive: f64,
    spec_drive: f64,
    cavity_dim: usize,
) -> Result<SpectroscopyResult> {
    check_increasing("spectroscopy frequency", spec_freqs)?;
    params.validate()?;
    if !(params.gamma1 > 0.0) {
        return Err(ExperimentError::InvalidInput("spectroscopy needs gamma1 > 0".into()));
    }
    let layout = DimensionLayout::with_modes(&[(Mode::Cavity, cavity_dim), (Mode::QubitMinus, 2)])?;
    let a = fockspace::mode_annihilation(&layout, Mode::Cavity)?;
    let field = |f: f64, drive: f64| -> Result<C64> {
        let sys = spectroscopy_system(params, &layout, f, cavity_drive, drive)?;
        let rho = dynamics::steady_state(&sys)?;
        Ok(fockspace::expectation(&a, &rho)?)
    };
    let baseline = field(spec_freqs[0], 0.0)?;
    let fields = spec_freqs
        .par_iter()
        .map(|&f| field(f, spec_drive))
        .collect::<Result<Vec<_>>>()?;
    let cavity_phase: Vec<f64> = fields.iter().map(|z| z.arg()).collect();
    let phase_shift: Vec<f64> = fields.iter().map(|z| (z / baseline).arg()).collect();
    let dressed_peak = line_center(spec_freqs, &phase_shift);
    let peak_phase_shift = argmax_abs(&phase_shift).map_or(0.0, |k| phase_shift[k]);
    Ok(SpectroscopyResult {
        spec_freqs: spec_freqs.to_vec(),
        cavity_phase,
        phase_shift,
        dressed_peak,
        peak_phase_shift,
        chi_minus: params.chi_minus()?,
    })
}

// ---------------------------------------------------------------------------
// Readout and Rabi map

/// Cavity transmission t(χ) = (κ/2)/(κ/2 − iχ) for a drive at the bare cavity frequency.
pub fn transmission(chi: f64, kappa: f64) -> C64 {
    let half = C64::new(0.5 * kappa, 0.0);
    half / (half - C64::new(0.0, chi))
}

/// Local-oscillator phase aligning the t(χ) − t(0) contrast with the real axis.
pub fn readout_lo_phase(chi: f64, kappa: f64) -> f64 {
    -(transmission(chi, kappa) - 1.0).arg()
}

/// Σ p_s·Re[e^{iφ}(t(χ_s) − t(0))].
pub fn readout_signal(populations: &[f64], chi_per_state: &[f64], kappa: f64, lo_phase: f64) -> Result<f64> {
    if populations.len() != chi_per_state.len() {
        return Err(ExperimentError::InvalidInput(format!(
            "{} populations for {} shifts",
            populations.len(),
            chi_per_state.len()
        )));
    }
    let total: f64 = populations.iter().sum();
    if (total - 1.0).abs() > 1e-6 || populations.iter().any(|&p| p < -1e-9) {
        return Err(ExperimentError::InvalidInput(format!(
            "populations sum to {total}, expected 1"
        )));
    }
    let lo = C64::from_polar(1.0, lo_phase);
    Ok(populations
        .iter()
        .zip(chi_per_state)
        .map(|(&p, &chi)| p * (lo * (transmission(chi, kappa) - 1.0)).re)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiMap {
    pub theta1_grid: Vec<f64>,
    pub theta2_grid: Vec<f64>,
    /// `signal[i][j]` at (θ₁ᵢ, θ₂ⱼ).
    pub signal: Vec<Vec<f64>>,
    /// Final |1₋1₊⟩ population on the same grid.
    pub transferred: Vec<Vec<f64>>,
    pub chi_per_state: [f64; 3],
    pub lo_phase: f64,
}

impl RabiMap {
    pub fn max_signal(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (i, row) in self.signal.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                if s > best.2 {
                    best = (i, j, s);
                }
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "theta1_rad,theta2_rad,signal,p_11")?;
        for (i, t1) in self.theta1_grid.iter().enumerate() {
            for (j, t2) in self.theta2_grid.iter().enumerate() {
                writeln!(out, "{t1},{t2},{},{}", self.signal[i][j], self.transferred[i][j])?;
            }
        }
        Ok(())
    }
}

/// Two consecutive Gaussian pulses on the ladder |0₋0₊⟩ → |1₋0₊⟩ → |1₋1₊⟩,
/// each in the frame of its own rung, read out through the per-state
/// dispersive shifts (0, χ₋, χ₋ + χ₊).
pub fn rabi_map(params: &TcqParams, theta1_grid: &[f64], theta2_grid: &[f64], sigma: f64) -> Result<RabiMap> {
    check_grid("theta1", theta1_grid)?;
    check_grid("theta2", theta2_grid)?;
    params.validate()?;
    if !(sigma > 0.0) {
        return Err(ExperimentError::InvalidInput(format!("sigma must be > 0, got {sigma}")));
    }
    let chi_minus = params.chi_minus()?;
    let chi_per_state = [0.0, chi_minus, chi_minus + params.chi_plus()?];
    let lo_phase = readout_lo_phase(chi_per_state[2], params.kappa);

    let layout = DimensionLayout::single(Mode::Ladder, 3)?;
    let first = Transition::levels(Mode::Ladder, 0, 1).lowering(&layout)?;
    let second = Transition::levels(Mode::Ladder, 1, 2).lowering(&layout)?;
    let half_width = dynamics::GAUSSIAN_TRUNCATION * sigma;
    let frame = Frame::rotating(&[(Mode::Ladder, params.f_minus)]);
    let ground = fockspace::fock_state(&layout, &[0])?;
    let grid = [0.0, 2.0 * half_width, 4.0 * half_width];

    let point = |theta1: f64, theta2: f64| -> Result<(f64, f64)> {
        let mut sys = LindbladSystem::new(Operator::zeros(&layout), vec![], frame.clone())?;
        if theta1 != 0.0 {
            let env = PulseEnvelope::gaussian_for_angle(theta1, half_width, sigma, 0.0)?;
            sys = sys.with_drive(first.clone(), env)?;
        }
        if theta2 != 0.0 {
            let env = PulseEnvelope::gaussian_for_angle(theta2, 3.0 * half_width, sigma, 0.0)?;
            sys = sys.with_drive(second.clone(), env)?;
        }
        let traj = evolve(&sys, &ground, &grid, &[])?;
        let pops = traj.final_state.populations();
        Ok((readout_signal(&pops, &chi_per_state, params.kappa, lo_phase)?, pops[2]))
    };

    let rows = theta1_grid
        .par_iter()
        .map(|&t1| theta2_grid.iter().map(|&t2| point(t1, t2)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(RabiMap {
        theta1_grid: theta1_grid.to_vec(),
        theta2_grid: theta2_grid.to_vec(),
        signal: rows.iter().map(|r| r.iter().map(|p| p.0).collect()).collect(),
        transferred: rows.iter().map(|r| r.iter().map(|p| p.1).collect()).collect(),
        chi_per_state,
        lo_phase,
    })
}

// ---------------------------------------------------------------------------
// Decays

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    T1,
    T2Echo,
}

impl DecayKind {
    fn label(self) -> &'static str {
        match self {
            DecayKind::T1 => "T1",
            DecayKind::T2Echo => "T2 echo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub kind: DecayKind,
    pub delays: Vec<f64>,
    pub signal: Vec<f64>,
    pub extracted_t: f64,
    pub fit: FitResult,
}

impl DecayCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delay_us,signal")?;
        for (t, s) in self.delays.iter().zip(&self.signal) {
            writeln!(out, "{t},{s}")?;
        }
        Ok(())
    }
}

/// Reduced cavity ⊗ b₋ model shared by the decay experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySetup {
    /// Dispersive shift χ₋, MHz.
    pub chi: f64,
    pub kappa: f64,
    /// b₋ relaxation rate, 1/μs.
    pub gamma1: f64,
    pub n_th: f64,
    pub cavity_dim: usize,
}

impl DecaySetup {
    pub fn from_params(params: &TcqParams, n_th: f64, cavity_dim: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            chi: params.chi_minus()?,
            kappa: params.kappa,
            gamma1: params.gamma1,
            n_th,
            cavity_dim,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.n_th >= 0.0) || !(self.gamma1 >= 0.0) || !(self.kappa > 0.0) || !self.chi.is_finite() {
            return Err(ExperimentError::InvalidInput(format!("invalid decay setup {self:?}")));
        }
        if self.cavity_dim < 2 {
            return Err(ExperimentError::InvalidInput("cavity dimension must be >= 2".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Result<DimensionLayout> {
        Ok(DimensionLayout::with_modes(&[
            (Mode::Cavity, self.cavity_dim),
            (Mode::QubitMinus, 2),
        ])?)
    }

    /// H = χ(a†a − n_th)·b†b: cavity frame at f_r, qubit frame at its
    /// thermally dressed frequency f₋ + χ·n_th.
    fn system(&self, layout: &DimensionLayout) -> Result<LindbladSystem> {
        let n_c = fockspace::mode_number(layout, Mode::Cavity)?;
        let n_b = fockspace::mode_number(layout, Mode::QubitMinus)?;
        let shifted = n_c.sub(&Operator::identity(layout).scale_real(self.n_th))?;
        let h = shifted.mul(&n_b)?.scale_real(angular(self.chi));
        let mut ops = dynamics::thermal_collapse_ops(self.kappa, self.n_th, layout)?;
        if self.gamma1 > 0.0 {
            ops.push(dynamics::relaxation_op(self.gamma1, Mode::QubitMinus, layout)?);
        }
        Ok(LindbladSystem::new(h, ops, Frame::lab())?)
    }

    /// Thermal cavity ⊗ qubit ground.
    fn initial_state(&self, layout: &DimensionLayout) -> Result<QuantumState> {
        let cavity = fockspace::thermal_state(self.cavity_dim, self.n_th)?.density_matrix();
        let mut qubit = fockspace::CMatrix::zeros(2, 2);
        qubit[(0, 0)] = C64::new(1.0, 0.0);
        Ok(QuantumState::density(layout.clone(), cavity.kronecker(&qubit))?)
    }

    /// Analytic echo T₂ from the decoherence budget with no extra dephasing.
    pub fn analytic_t2(&self) -> Result<f64> {
        let rate = analysis::gamma_phi(&DephasingInput::new(self.chi, self.kappa, self.n_th)?);
        Ok(analysis::t2_from_rates(1.0 / self.gamma1, rate, 0.0)?)
    }
}

fn check_positive_delays(delays: &[f64]) -> Result<()> {
    check_increasing("delay", delays)?;
    if delays[0] < 0.0 {
        return Err(ExperimentError::InvalidGrid("delays must be >= 0".into()));
    }
    Ok(())
}

fn check_positivity(traj: &dynamics::Trajectory) -> Result<()> {
    for d in &traj.diagnostics {
        if let Some(min) = d.min_eigenvalue {
            if min < POSITIVITY_FLOOR {
                return Err(ExperimentError::Positivity { min_eigenvalue: min });
            }
        }
    }
    Ok(())
}

fn fit_decay(kind: DecayKind, delays: Vec<f64>, signal: Vec<f64>, floor: Option<f64>) -> Result<DecayCurve> {
    let fit = analysis::fit_exponential(&delays, &signal, floor)?;
    let extracted_t = fit.value("T").unwrap_or(f64::NAN);
    if !fit.converged || !(extracted_t > 0.0) {
        return Err(ExperimentError::FitFailed {
            kind: kind.label(),
            message: fit.message.clone().unwrap_or_else(|| "not converged".into()),
        });
    }
    Ok(DecayCurve {
        kind,
        delays,
        signal,
        extracted_t,
        fit,
    })
}

/// Excited b₋ population after an ideal π pulse, sampled at `delays`.
pub fn t1_signal(setup: &DecaySetup, delays: &[f64]) -> Result<Vec<f64>> {
    setup.validate()?;
    check_positive_delays(delays)?;
    let layout = setup.layout()?;
    let sys = setup.system(&layout)?;
    let excited = apply_instant_rotation(
        &setup.initial_state(&layout)?,
        Transition::qubit(Mode::QubitMinus),
        PI,
        0.0,
    )?;
    let n_b = Observable::new("nb", fockspace::mode_number(&layout, Mode::QubitMinus)?);
    let prepend = delays[0] > 0.0;
    let grid: Vec<f64> = prepend
        .then_some(0.0)
        .into_iter()
        .chain(delays.iter().copied())
        .collect();
    let options = EvolveOptions {
        check_positivity: true,
        ..Default::default()
    };
    let traj = evolve_with(&sys, &excited, &grid, &[n_b], options)?;
    check_positivity(&traj)?;
    let series = traj.series("nb").expect("observable recorded");
    Ok(series[usize::from(prepend)..].iter().map(|z| z.re).collect())
}

pub fn t1_experiment_with(setup: &DecaySetup, delays: &[f64]) -> Result<DecayCurve> {
    if !(setup.gamma1 > 0.0) {
        return Err(ExperimentError::InvalidInput("T1 experiment needs gamma1 > 0".into()));
    }
    if delays.len() < 4 {
        return Err(ExperimentError::InvalidGrid(format!(
            "T1 fit needs at least 4 delays, got {}",
            delays.len()
        )));
    }
    let signal = t1_signal(setup, delays)?;
    fit_decay(DecayKind::T1, delays.to_vec(), signal, None)
}

pub fn t1_experiment(params: &TcqParams, delays: &[f64], n_th: f64) -> Result<DecayCurve> {
    t1_experiment_with(&DecaySetup::from_params(params, n_th, DEFAULT_CAVITY_DIM)?, delays)
}

/// Excited population after π/2, τ/2, π, τ/2, π/2 (phase π) for each τ;
/// ideally 1, decaying towards ½.
pub fn echo_signal(setup: &DecaySetup, delays: &[f64]) -> Result<Vec<f64>> {
    setup.validate()?;
    check_positive_delays(delays)?;
    let layout = setup.layout()?;
    let sys = setup.system(&layout)?;
    let rho0 = setup.initial_state(&layout)?;
    let qubit = Transition::qubit(Mode::QubitMinus);
    let n_b = fockspace::mode_number(&layout, Mode::QubitMinus)?;
    let options = EvolveOptions {
        check_positivity: true,
        ..Default::default()
    };
    let free = |state: &QuantumState, span: f64| -> Result<QuantumState> {
        if span == 0.0 {
            return Ok(state.clone());
        }
        let traj = evolve_with(&sys, state, &[0.0, span], &[], options)?;
        check_positivity(&traj)?;
        Ok(traj.final_state)
    };
    delays
        .par_iter()
        .map(|&tau| {
            let state = apply_instant_rotation(&rho0, qubit, 0.5 * PI, 0.0)?;
            let state = free(&state, 0.5 * tau)?;
            let state = apply_instant_rotation(&state, qubit, PI, 0.0)?;
            let state = free(&state, 0.5 * tau)?;
            let state = apply_instant_rotation(&state, qubit, 0.5 * PI, PI)?;
            Ok(fockspace::expectation(&n_b, &state)?.re)
        })
        .collect()
}

pub fn echo_experiment_with(setup: &DecaySetup, delays: &[f64]) -> Result<DecayCurve> {
    if delays.len() < 4 {
        return Err(ExperimentError::InvalidGrid(format!(
            "echo fit needs at least 4 delays, got {}",
            delays.len()
        )));
    }
    let signal = echo_signal(setup, delays)?;
    fit_decay(DecayKind::T2Echo, delays.to_vec(), signal, Some(0.5))
}

pub fn echo_experiment(params: &TcqParams, delays: &[f64], n_th: f64) -> Result<DecayCurve> {
    echo_experiment_with(&DecaySetup::from_params(params, n_th, DEFAULT_CAVITY_DIM)?, delays)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepResult {
    pub n_th_grid: Vec<f64>,
    pub t1_us: Vec<f64>,
    pub t2_us: Vec<f64>,
    /// Decoherence-budget prediction at each point, for comparison.
    pub t2_analytic_us: Vec<f64>,
}

impl NoiseSweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n_th,t1_us,t2_us,t2_analytic_us")?;
        for i in 0..self.n_th_grid.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.n_th_grid[i], self.t1_us[i], self.t2_us[i], self.t2_analytic_us[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub delay_points: usize,
    pub cavity_dim: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            delay_points: DEFAULT_DELAY_POINTS,
            cavity_dim: DEFAULT_CAVITY_DIM,
        }
    }
}

/// T₁ and echo T₂ at each injected occupation; delay grids span three
/// expected decay times.
pub fn noise_sweep(params: &TcqParams, n_th_grid: &[f64], options: SweepOptions) -> Result<NoiseSweepResult> {
    check_increasing("n_th", n_th_grid)?;
    if n_th_grid[0] < 0.0 || n_th_grid[n_th_grid.len() - 1] > 0.2 {
        return Err(ExperimentError::InvalidGrid(
            "n_th grid must lie within [0, 0.2]".into(),
        ));
    }
    let mut result = NoiseSweepResult {
        n_th_grid: n_th_grid.to_vec(),
        t1_us: Vec::with_capacity(n_th_grid.len()),
        t2_us: Vec::with_capacity(n_th_grid.len()),
        t2_analytic_us: Vec::with_capacity(n_th_grid.len()),
    };
    for &n_th in n_th_grid {
        let setup = DecaySetup::from_params(params, n_th, options.cavity_dim)?;
        let t1_est = 1.0 / setup.gamma1;
        let t1 = t1_experiment_with(&setup, &geomspace(t1_est / 50.0, 3.0 * t1_est, options.delay_points))?;
        let t2_est = setup.analytic_t2()?;
        let t2 = echo_experiment_with(&setup, &geomspace(t2_est / 50.0, 3.0 * t2_est, options.delay_points))?;
        result.t1_us.push(t1.extracted_t);
        result.t2_us.push(t2.extracted_t);
        result.t2_analytic_us.push(t2_est);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(chi: f64, gamma1: f64, n_th: f64) -> DecaySetup {
        DecaySetup {
            chi,
            kappa: 0.25,
            gamma1,
            n_th,
            cavity_dim: 6,
        }
    }

    #[test]
    fn geometric_grid() {
        let g = geomspace(0.1, 10.0, 3);
        assert_relative_eq!(g[1], 1.0, max_relative = 1e-12);
        assert_eq!(default_delays(10.0).len(), 41);
        assert_eq!(default_angles().len(), 41);
    }

    #[test]
    fn readout_examples() {
        let kappa = 0.25;
        let chis = [0.0, 0.022, -1.2];
        let phase = readout_lo_phase(-1.2, kappa);
        assert_eq!(readout_signal(&[1.0, 0.0, 0.0], &chis, kappa, phase).unwrap(), 0.0);

        let t = transmission(-1.2, kappa);
        assert_relative_eq!(t.norm(), 0.125 / (0.125f64.powi(2) + 1.44).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(t.norm(), 0.1036, max_relative = 1e-3);
        let full = readout_signal(&[0.0, 0.0, 1.0], &chis, kappa, phase).unwrap();
        assert_relative_eq!(full, (t - 1.0).norm(), max_relative = 1e-12);

        let small = (transmission(0.022, kappa) - 1.0).norm();
        assert!(small / full < 0.2);
        let weak = readout_signal(&[0.0, 1.0, 0.0], &chis, kappa, phase).unwrap();
        assert!(weak.abs() / full < 0.2);

        assert!(readout_signal(&[0.5, 0.4, 0.0], &chis, kappa, phase).is_err());
        assert!(readout_signal(&[1.0], &chis, kappa, phase).is_err());
    }

    #[test]
    fn readout_is_affine_in_populations() {
        let chis = [0.0, 0.3, -1.2];
        let phase = 0.4;
        let p = [0.2, 0.5, 0.3];
        let q = [0.6, 0.1, 0.3];
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
        let sp = readout_signal(&p, &chis, 0.25, phase).unwrap();
        let sq = readout_signal(&q, &chis, 0.25, phase).unwrap();
        let sm = readout_signal(&mix, &chis, 0.25, phase).unwrap();
        assert!((sm - (0.3 * sp + 0.7 * sq)).abs() < 1e-14);
    }

    fn zero_chi_params() -> TcqParams {
        TcqParams {
            chi_minus_override: Some(0.0),
            ..TcqParams::canonical()
        }
    }

    #[test]
    fn rabi_map_readout_protocol() {
        let params = TcqParams {
            chi_minus_override: Some(0.022),
            ..TcqParams::canonical()
        };
        let angles = analysis::linspace(0.0, 2.0 * PI, 9);
        let map = rabi_map(&params, &angles, &angles, DEFAULT_SIGMA).unwrap();
        let (i, j, max) = map.max_signal();
        assert_eq!((angles[i], angles[j]), (PI, PI));
        assert!(map.transferred[4][4] > 0.98);
        assert!(max > 0.0);
        // nothing to transfer without the first pulse
        for &s in &map.signal[0] {
            assert!(s.abs() < 1e-9 * max);
        }
        // 2π periodicity
        for k in 0..angles.len() {
            assert!((map.signal[0][k] - map.signal[8][k]).abs() < 1e-6 * max);
            assert!((map.signal[k][0] - map.signal[k][8]).abs() < 1e-6 * max);
        }
    }

    #[test]
    fn rabi_map_without_chi_minus() {
        let angles = analysis::linspace(0.0, 2.0 * PI, 9);
        let map = rabi_map(&zero_chi_params(), &angles, &angles, DEFAULT_SIGMA).unwrap();
        let (_, _, max) = map.max_signal();
        for row in &map.signal {
            assert!(row[0].abs() < 0.02 * max);
        }
        assert!(rabi_map(&zero_chi_params(), &[], &angles, DEFAULT_SIGMA).is_err());
    }

    #[test]
    fn rabi_pulses_match_ideal_rotations() {
        let params = TcqParams::canonical();
        let map = rabi_map(&params, &[0.7], &[1.9], DEFAULT_SIGMA).unwrap();
        let expected = (0.35f64).sin().powi(2) * (0.95f64).sin().powi(2);
        assert!((map.transferred[0][0] - expected).abs() < 1e-7);
    }

    #[test]
    fn t1_is_relaxation_time() {
        let delays = default_delays(10.0);
        let curve = t1_experiment_with(&setup(1.9, 0.1, 0.0), &delays).unwrap();
        assert_eq!(curve.kind, DecayKind::T1);
        assert_relative_eq!(curve.extracted_t, 10.0, max_relative = 0.01);

        let noisy = t1_experiment_with(&setup(1.9, 0.1, 0.13), &delays).unwrap();
        assert_relative_eq!(noisy.extracted_t, 10.0, max_relative = 0.10);
        assert!(t1_experiment_with(&setup(1.9, 0.1, 0.0), &[1.0]).is_err());
        assert!(t1_experiment_with(&setup(1.9, 0.0, 0.0), &delays).is_err());
    }

    #[test]
    fn t1_from_params() {
        let params = TcqParams {
            chi_minus_override: Some(1.9),
            ..TcqParams::canonical()
        };
        let curve = t1_experiment(&params, &default_delays(10.0), 0.0).unwrap();
        assert_relative_eq!(curve.extracted_t, 1.0 / params.gamma1, max_relative = 0.01);
    }

    #[test]
    fn echo_is_flat_without_decoherence() {
        let delays = geomspace(0.1, 20.0, 6);
        for s in echo_signal(&setup(1.9, 0.0, 0.0), &delays).unwrap() {
            assert!((s - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn echo_reaches_twice_t1() {
        let gamma1 = 1.0 / 10.5;
        let curve = echo_experiment_with(&setup(1.9, gamma1, 0.0), &default_delays(21.0)).unwrap();
        assert_relative_eq!(curve.extracted_t, 21.0, max_relative = 0.05);

        let curve = echo_experiment_with(&setup(0.0, gamma1, 0.13), &default_delays(21.0)).unwrap();
        assert_relative_eq!(curve.extracted_t, 21.0, max_relative = 0.05);
    }

    #[test]
    fn echo_rejects_bad_delays() {
        let s = setup(0.5, 0.1, 0.0);
        assert!(echo_experiment_with(&s, &[1.0, 2.0]).is_err());
        assert!(echo_signal(&s, &[2.0, 1.0]).is_err());
        assert!(echo_signal(&s, &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn spectroscopy_line_centre() {
        let x = analysis::linspace(-2.0, 2.0, 41);
        let y: Vec<f64> = x.iter().map(|v| -1.0 / (1.0 + ((v - 0.5) / 0.3).powi(2))).collect();
        assert!((line_center(&x, &y).unwrap() - 0.5).abs() < 0.01);
        assert!(line_center(&x, &vec![0.0; 41]).is_none());
    }

    #[test]
    fn spectroscopy_without_chi_is_flat() {
        let params = zero_chi_params();
        let freqs = analysis::linspace(params.f_minus - 2.0, params.f_minus + 2.0, 9);
        let res = two_tone_spectroscopy(&params, &freqs, cavity_drive_for_nbar(2.3, 0.25), 0.3, 10).unwrap();
        assert!(res.phase_shift.iter().all(|p| p.abs() < PHASE_RESOLUTION));
        assert!(res.dressed_peak.is_none());
    }

    #[test]
    fn spectroscopy_phase_sign_follows_chi() {
        let mut signs = Vec::new();
        for chi in [0.2, -0.2] {
            let params = TcqParams {
                chi_minus_override: Some(chi),
                ..TcqParams::canonical()
            };
            let freqs = analysis::linspace(params.f_minus - 1.5, params.f_minus + 1.5, 13);
            let res = two_tone_spectroscopy(&params, &freqs, cavity_drive_for_nbar(1.0, 0.25), 0.3, 8).unwrap();
            assert!(res.dressed_peak.is_some());
            signs.push(res.peak_phase_shift.signum());
        }
        assert_eq!(signs[0], -signs[1]);
    }

    #[test]
    fn sweep_rejects_grid() {
        let params = TcqParams::canonical();
        assert!(noise_sweep(&params, &[0.0, 0.3], SweepOptions::default()).is_err());
        assert!(noise_sweep(&params, &[0.1, 0.05], SweepOptions::default()).is_err());
    }
}
