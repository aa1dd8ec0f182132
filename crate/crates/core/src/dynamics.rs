//! Lindblad master-equation dynamics.
//!
//! All Hamiltonians are in rad/μs and collapse operators carry the square
//! root of their rate in 1/μs, so `L ρ L†` is already a rate. Integration is
//! classical fixed-step RK4.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::device::angular;
use crate::fockspace::{self, norm_inf, trace, CMatrix, DimensionLayout, FockError, Mode, Operator, QuantumState, C64};

/// Gaussian pulses are cut at ±4σ.
pub const GAUSSIAN_TRUNCATION: f64 = 4.0;
/// Internal step is at most this fraction of the inverse fastest rate.
const STEP_SAFETY: f64 = 0.02;
const TRACE_ERROR_LIMIT: f64 = 1e-6;
const HERMITIAN_TOL: f64 = 1e-10;
const SINGULAR_PIVOT_RATIO: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("trace drifted by {drift:e} at t = {time} us; reduce the integration step")]
    IntegrationAccuracy { time: f64, drift: f64 },
    #[error("steady state is not unique (singular Liouvillian)")]
    DegenerateSteadyState,
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Gaussian,
    Square,
    /// Zero-duration pulse; `amplitude` is the rotation angle itself.
    Instant,
}

/// Drive envelope Ω(t) in rad/μs.
///
/// `width` is σ for Gaussian pulses and the full duration for square pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub shape: PulseShape,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub phase: f64,
}

fn gaussian_truncated_area() -> f64 {
    (2.0 * PI).sqrt() * erf(GAUSSIAN_TRUNCATION / 2.0_f64.sqrt())
}

impl PulseEnvelope {
    pub fn gaussian(amplitude: f64, center: f64, sigma: f64, phase: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(DynamicsError::InvalidPulse(format!(
                "gaussian width {sigma} must be > 0"
            )));
        }
        Ok(Self {
            shape: PulseShape::Gaussian,
            amplitude,
            center,
            width: sigma,
            phase,
        })
    }

    /// Gaussian whose truncated area equals `angle`.
    pub fn gaussian_for_angle(angle: f64, center: f64, sigma: f64, phase: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(DynamicsError::InvalidPulse(format!(
                "gaussian width {sigma} must be > 0"
            )));
        }
        Self::gaussian(angle / (sigma * gaussian_truncated_area()), center, sigma, phase)
    }

    pub fn square(amplitude: f64, center: f64, duration: f64, phase: f64) -> Result<Self> {
        if !(duration >= 0.0) {
            return Err(DynamicsError::InvalidPulse(format!("duration {duration} must be >= 0")));
        }
        Ok(Self {
            shape: PulseShape::Square,
            amplitude,
            center,
            width: duration,
            phase,
        })
    }

    pub fn instant(angle: f64, center: f64, phase: f64) -> Self {
        Self {
            shape: PulseShape::Instant,
            amplitude: angle,
            center,
            width: 0.0,
            phase,
        }
    }

    /// Interval outside which Ω(t) vanishes.
    pub fn support(&self) -> (f64, f64) {
        let half = match self.shape {
            PulseShape::Gaussian => GAUSSIAN_TRUNCATION * self.width,
            PulseShape::Square => 0.5 * self.width,
            PulseShape::Instant => 0.0,
        };
        (self.center - half, self.center + half)
    }

    pub fn value(&self, t: f64) -> f64 {
        let (start, end) = self.support();
        match self.shape {
            PulseShape::Gaussian if t >= start && t <= end => {
                let x = (t - self.center) / self.width;
                self.amplitude * (-0.5 * x * x).exp()
            }
            PulseShape::Square if t >= start && t < end => self.amplitude,
            _ => 0.0,
        }
    }

    /// Ω(t) on an integration segment whose midpoint is `mid`; segment
    /// boundaries never straddle a pulse edge, so the edge side is decided by `mid`.
    fn value_on_segment(&self, t: f64, mid: f64) -> f64 {
        let (start, end) = self.support();
        if !(mid >= start && mid < end) {
            return 0.0;
        }
        match self.shape {
            PulseShape::Gaussian => {
                let x = (t - self.center) / self.width;
                self.amplitude * (-0.5 * x * x).exp()
            }
            PulseShape::Square => self.amplitude,
            PulseShape::Instant => 0.0,
        }
    }

    pub fn peak(&self) -> f64 {
        match self.shape {
            PulseShape::Instant => 0.0,
            _ => self.amplitude.abs(),
        }
    }
}

/// Rotation angle ∫Ω(t)dt of an envelope, in closed form.
pub fn rabi_angle(envelope: &PulseEnvelope) -> f64 {
    match envelope.shape {
        PulseShape::Gaussian => envelope.amplitude * envelope.width * gaussian_truncated_area(),
        PulseShape::Square => envelope.amplitude * envelope.width,
        PulseShape::Instant => envelope.amplitude,
    }
}

/// Drive term Ω(t)/2 · (e^{−iφ} C + e^{iφ} C†) for a lowering-type coupling C.
#[derive(Debug, Clone)]
pub struct Drive {
    pub coupling: Operator,
    pub envelope: PulseEnvelope,
}

/// Frequencies (MHz) of the frame each mode rotates in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub rotating: Vec<(Mode, f64)>,
}

impl Frame {
    pub fn lab() -> Self {
        Self::default()
    }

    pub fn rotating(modes: &[(Mode, f64)]) -> Self {
        Self {
            rotating: modes.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LindbladSystem {
    h0: Operator,
    collapse_ops: Vec<Operator>,
    drives: Vec<Drive>,
    frame: Frame,
}

impl LindbladSystem {
    pub fn new(h0: Operator, collapse_ops: Vec<Operator>, frame: Frame) -> Result<Self> {
        let defect = h0.hermiticity_defect();
        if defect > HERMITIAN_TOL * h0.max_abs().max(1.0) {
            return Err(DynamicsError::InvalidSystem(format!(
                "Hamiltonian is not Hermitian (defect {defect:e})"
            )));
        }
        for op in &collapse_ops {
            if op.layout() != h0.layout() {
                return Err(DynamicsError::InvalidSystem(format!(
                    "collapse operator layout {} differs from Hamiltonian layout {}",
                    op.layout(),
                    h0.layout()
                )));
            }
        }
        Ok(Self {
            h0,
            collapse_ops,
            drives: Vec::new(),
            frame,
        })
    }

    pub fn with_drive(mut self, coupling: Operator, envelope: PulseEnvelope) -> Result<Self> {
        if coupling.layout() != self.h0.layout() {
            return Err(DynamicsError::InvalidSystem(format!(
                "drive layout {} differs from Hamiltonian layout {}",
                coupling.layout(),
                self.h0.layout()
            )));
        }
        if envelope.shape == PulseShape::Instant {
            return Err(DynamicsError::InvalidPulse(
                "instant pulses are applied with apply_instant_rotation, not integrated".into(),
            ));
        }
        self.drives.push(Drive { coupling, envelope });
        Ok(self)
    }

    pub fn layout(&self) -> &DimensionLayout {
        self.h0.layout()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h0
    }

    pub fn collapse_ops(&self) -> &[Operator] {
        &self.collapse_ops
    }

    pub fn drives(&self) -> &[Drive] {
        &self.drives
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }
}

/// Thermal cavity bath: √(2πκ(1+n_th))·a and, for n_th > 0, √(2πκ·n_th)·a†.
pub fn thermal_collapse_ops(kappa: f64, n_th: f64, layout: &DimensionLayout) -> Result<Vec<Operator>> {
    if !(kappa > 0.0) {
        return Err(DynamicsError::InvalidSystem(format!("kappa must be > 0, got {kappa}")));
    }
    if !(n_th >= 0.0) {
        return Err(DynamicsError::InvalidSystem(format!("n_th must be >= 0, got {n_th}")));
    }
    let a = fockspace::mode_annihilation(layout, Mode::Cavity)?;
    let rate = angular(kappa);
    let mut ops = vec![a.scale_real((rate * (1.0 + n_th)).sqrt())];
    if n_th > 0.0 {
        ops.push(a.dagger().scale_real((rate * n_th).sqrt()));
    }
    Ok(ops)
}

/// Energy relaxation √γ·b of `mode`.
pub fn relaxation_op(gamma: f64, mode: Mode, layout: &DimensionLayout) -> Result<Operator> {
    if !(gamma >= 0.0) {
        return Err(DynamicsError::InvalidSystem(format!(
            "relaxation rate must be >= 0, got {gamma}"
        )));
    }
    Ok(fockspace::mode_annihilation(layout, mode)?.scale_real(gamma.sqrt()))
}

#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub op: Operator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: Operator) -> Self {
        Self { name: name.into(), op }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDiagnostics {
    pub trace_error: f64,
    pub hermiticity_defect: f64,
    /// Only filled when positivity checks are requested.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `expectations[k][i]` is observable `k` at `times[i]`.
    pub expectations: Vec<Vec<C64>>,
    pub final_state: QuantumState,
    pub diagnostics: Vec<PointDiagnostics>,
    pub states: Option<Vec<QuantumState>>,
}

impl Trajectory {
    pub fn series(&self, name: &str) -> Option<&[C64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.expectations[k].as_slice())
    }

    /// CSV with header `t_us,obs_<name>_re,obs_<name>_im,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t_us".to_string()];
        for name in &self.names {
            header.push(format!("obs_{name}_re"));
            header.push(format!("obs_{name}_im"));
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            write!(out, "{t}")?;
            for series in &self.expectations {
                write!(out, ",{},{}", series[i].re, series[i].im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Divides the automatically chosen step; 2 halves it.
    pub step_refinement: u32,
    pub record_states: bool,
    pub check_positivity: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            step_refinement: 1,
            record_states: false,
            check_positivity: false,
        }
    }
}

/// Non-zero entries `(row, col, value)` of a sparse operator.
type Triplets = Vec<(usize, usize, C64)>;

fn triplets(m: &CMatrix) -> Triplets {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != C64::new(0.0, 0.0) {
                out.push((i, j, v));
            }
        }
    }
    out
}

enum EffectiveHamiltonian {
    Diagonal(Vec<C64>),
    Dense(CMatrix),
}

/// Precomputed right-hand side −i H_eff ρ + h.c. + Σ L ρ L†, with
/// H_eff = H − (i/2) Σ L†L.
struct Generator {
    heff: EffectiveHamiltonian,
    drives: Vec<(PulseEnvelope, CMatrix)>,
    jumps: Vec<Triplets>,
    max_rate: f64,
}

/// ‖H − cI‖∞ with c centring the diagonal; the identity part does not act on ρ.
fn centred_norm(h: &CMatrix) -> f64 {
    let diag = h.diagonal();
    let lo = diag.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let hi = diag.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let centre = 0.5 * (lo + hi);
    let mut shifted = h.clone();
    for i in 0..h.nrows() {
        shifted[(i, i)] -= centre;
    }
    norm_inf(&shifted)
}

impl Generator {
    fn new(system: &LindbladSystem) -> Self {
        let h = system.h0.matrix();
        let mut heff = h.clone();
        let mut max_rate = centred_norm(h);
        let mut jumps = Vec::with_capacity(system.collapse_ops.len());
        for op in &system.collapse_ops {
            let l = op.matrix();
            let k = l.adjoint() * l;
            max_rate = max_rate.max(norm_inf(&k));
            heff -= &k * C64::new(0.0, 0.5);
            jumps.push(triplets(l));
        }
        let drives = system
            .drives
            .iter()
            .map(|d| {
                let c = d.coupling.matrix();
                let phase = C64::from_polar(1.0, -d.envelope.phase);
                let term = (c * phase + c.adjoint() * phase.conj()) * C64::new(0.5, 0.0);
                max_rate = max_rate.max(d.envelope.peak() * norm_inf(&term));
                (d.envelope, term)
            })
            .collect();
        let diagonal =
            (0..heff.nrows()).all(|i| (0..heff.ncols()).all(|j| i == j || heff[(i, j)] == C64::new(0.0, 0.0)));
        let heff = if diagonal {
            EffectiveHamiltonian::Diagonal(heff.diagonal().iter().copied().collect())
        } else {
            EffectiveHamiltonian::Dense(heff)
        };
        Self {
            heff,
            drives,
            jumps,
            max_rate,
        }
    }

    fn apply(&self, t: f64, mid: f64, rho: &CMatrix, out: &mut CMatrix, ws: &mut Workspace) {
        let minus_i = C64::new(0.0, -1.0);
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let n = rho.nrows();
        match &self.heff {
            EffectiveHamiltonian::Diagonal(d) => {
                for j in 0..n {
                    for i in 0..n {
                        ws.x[(i, j)] = minus_i * d[i] * rho[(i, j)];
                    }
                }
            }
            EffectiveHamiltonian::Dense(h) => ws.x.gemm(minus_i, h, rho, zero),
        }
        for (env, term) in &self.drives {
            let omega = env.value_on_segment(t, mid);
            if omega != 0.0 {
                ws.x.gemm(minus_i * omega, term, rho, one);
            }
        }
        if self.jumps.is_empty() {
            for j in 0..n {
                for i in 0..n {
                    out[(i, j)] = ws.x[(i, j)] + ws.x[(j, i)].conj();
                }
            }
            return;
        }
        ws.jump.fill(zero);
        for l in &self.jumps {
            ws.tmp.fill(zero);
            for &(i, j, v) in l {
                for c in 0..n {
                    ws.tmp[(i, c)] += v * rho[(j, c)];
                }
            }
            for &(k, l_col, v) in l {
                let vc = v.conj();
                for r in 0..n {
                    ws.jump[(r, k)] += ws.tmp[(r, l_col)] * vc;
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = ws.x[(i, j)] + ws.x[(j, i)].conj() + 0.5 * (ws.jump[(i, j)] + ws.jump[(j, i)].conj());
            }
        }
    }
}

struct Workspace {
    x: CMatrix,
    tmp: CMatrix,
    jump: CMatrix,
    k: [CMatrix; 4],
    stage: CMatrix,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || CMatrix::zeros(n, n);
        Self {
            x: z(),
            tmp: z(),
            jump: z(),
            k: [z(), z(), z(), z()],
            stage: z(),
        }
    }
}

fn add_scaled(dst: &mut CMatrix, a: C64, src: &CMatrix) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += a * s;
    }
}

fn rk4_step(gen: &Generator, t: f64, h: f64, rho: &mut CMatrix, ws: &mut Workspace) {
    let mid = t + 0.5 * h;
    let mut k = std::mem::replace(
        &mut ws.k,
        [
            CMatrix::zeros(0, 0),
            CMatrix::zeros(0, 0),
            CMatrix::zeros(0, 0),
            CMatrix::zeros(0, 0),
        ],
    );
    let mut stage = std::mem::replace(&mut ws.stage, CMatrix::zeros(0, 0));
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);

    gen.apply(t, mid, rho, &mut k[0], ws);
    stage.copy_from(rho);
    add_scaled(&mut stage, half, &k[0]);
    gen.apply(t + 0.5 * h, mid, &stage, &mut k[1], ws);
    stage.copy_from(rho);
    add_scaled(&mut stage, half, &k[1]);
    gen.apply(t + 0.5 * h, mid, &stage, &mut k[2], ws);
    stage.copy_from(rho);
    add_scaled(&mut stage, full, &k[2]);
    gen.apply(t + h, mid, &stage, &mut k[3], ws);

    let w = h / 6.0;
    add_scaled(rho, C64::new(w, 0.0), &k[0]);
    add_scaled(rho, C64::new(2.0 * w, 0.0), &k[1]);
    add_scaled(rho, C64::new(2.0 * w, 0.0), &k[2]);
    add_scaled(rho, C64::new(w, 0.0), &k[3]);

    ws.k = k;
    ws.stage = stage;
}

/// Integrates the master equation from `t_grid[0]` and samples every grid point.
pub fn evolve(
    system: &LindbladSystem,
    rho0: &QuantumState,
    t_grid: &[f64],
    observables: &[Observable],
) -> Result<Trajectory> {
    evolve_with(system, rho0, t_grid, observables, EvolveOptions::default())
}

pub fn evolve_with(
    system: &LindbladSystem,
    rho0: &QuantumState,
    t_grid: &[f64],
    observables: &[Observable],
    options: EvolveOptions,
) -> Result<Trajectory> {
    if t_grid.is_empty() {
        return Err(DynamicsError::InvalidGrid("empty time grid".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::InvalidGrid(
            "time grid must be strictly increasing".into(),
        ));
    }
    let layout = system.layout().clone();
    if rho0.layout() != &layout {
        return Err(FockError::LayoutMismatch {
            left: rho0.layout().clone(),
            right: layout,
        }
        .into());
    }
    for obs in observables {
        if obs.op.layout() != &layout {
            return Err(FockError::LayoutMismatch {
                left: obs.op.layout().clone(),
                right: layout,
            }
            .into());
        }
    }
    rho0.validate(-1e-8)?;

    let gen = Generator::new(system);
    let refinement = options.step_refinement.max(1) as f64;
    let max_step = if gen.max_rate > 0.0 {
        STEP_SAFETY / gen.max_rate / refinement
    } else {
        f64::INFINITY
    };

    let n = layout.total_dim();
    let mut ws = Workspace::new(n);
    let mut rho = rho0.density_matrix();
    let mut expectations = vec![Vec::with_capacity(t_grid.len()); observables.len()];
    let mut diagnostics = Vec::with_capacity(t_grid.len());
    let mut states = options.record_states.then(Vec::new);

    let mut record = |t: f64, rho: &CMatrix| -> Result<()> {
        for (series, obs) in expectations.iter_mut().zip(observables) {
            series.push(fockspace::trace_of_product(obs.op.matrix(), rho));
        }
        let drift = (trace(rho) - C64::new(1.0, 0.0)).norm();
        if !(drift <= TRACE_ERROR_LIMIT) {
            return Err(DynamicsError::IntegrationAccuracy { time: t, drift });
        }
        let state = QuantumState::density_unchecked(layout.clone(), rho.clone());
        diagnostics.push(PointDiagnostics {
            trace_error: drift,
            hermiticity_defect: fockspace::hermiticity_defect(rho),
            min_eigenvalue: options.check_positivity.then(|| state.min_eigenvalue()),
        });
        if let Some(states) = states.as_mut() {
            states.push(state);
        }
        Ok(())
    };

    let mut breakpoints: Vec<f64> = system
        .drives
        .iter()
        .flat_map(|d| {
            let (a, b) = d.envelope.support();
            [a, b]
        })
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    record(t_grid[0], &rho)?;
    for w in t_grid.windows(2) {
        let mut edges = vec![w[0]];
        edges.extend(breakpoints.iter().copied().filter(|&b| b > w[0] && b < w[1]));
        edges.push(w[1]);
        for seg in edges.windows(2) {
            let span = seg[1] - seg[0];
            let steps = (span / max_step).ceil().max(1.0);
            let h = span / steps;
            for i in 0..steps as usize {
                rk4_step(&gen, seg[0] + i as f64 * h, h, &mut rho, &mut ws);
            }
        }
        record(w[1], &rho)?;
    }

    Ok(Trajectory {
        times: t_grid.to_vec(),
        names: observables.iter().map(|o| o.name.clone()).collect(),
        expectations,
        final_state: QuantumState::density_unchecked(system.layout().clone(), rho),
        diagnostics,
        states,
    })
}

/// Column-stacked Liouvillian superoperator (vec index `i + j·D` for ρ_ij).
pub fn liouvillian(system: &LindbladSystem) -> CMatrix {
    let h = system.h0.matrix();
    let d = h.nrows();
    let id = CMatrix::identity(d, d);
    let minus_i = C64::new(0.0, -1.0);
    let mut sup = (id.kronecker(h) - h.transpose().kronecker(&id)) * minus_i;
    for op in &system.collapse_ops {
        let l = op.matrix();
        let k = l.adjoint() * l;
        sup += l.conjugate().kronecker(l);
        sup -= id.kronecker(&k) * C64::new(0.5, 0.0);
        sup -= k.transpose().kronecker(&id) * C64::new(0.5, 0.0);
    }
    sup
}

/// Unique solution of L(ρ) = 0 with tr ρ = 1.
///
/// For `H = δ a†a + ε(a + a†)` with cavity loss this gives
/// `⟨a⟩ = −ε/(δ − iκ/2)`, κ angular.
pub fn steady_state(system: &LindbladSystem) -> Result<QuantumState> {
    if !system.drives.is_empty() {
        return Err(DynamicsError::InvalidSystem(
            "steady state needs a time-independent system; fold constant drives into h0".into(),
        ));
    }
    let d = system.layout().total_dim();
    let mut sup = liouvillian(system);
    for col in 0..d * d {
        sup[(0, col)] = C64::new(0.0, 0.0);
    }
    for i in 0..d {
        sup[(0, i + i * d)] = C64::new(1.0, 0.0);
    }
    let mut rhs = fockspace::CVector::zeros(d * d);
    rhs[0] = C64::new(1.0, 0.0);

    let lu = sup.lu();
    let pivots: Vec<f64> = lu.u().diagonal().iter().map(|z| z.norm()).collect();
    let largest = pivots.iter().copied().fold(0.0, f64::max);
    let smallest = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > SINGULAR_PIVOT_RATIO * largest) {
        return Err(DynamicsError::DegenerateSteadyState);
    }
    let x = lu.solve(&rhs).ok_or(DynamicsError::DegenerateSteadyState)?;
    let rho = DMatrix::from_fn(d, d, |i, j| x[i + j * d]);
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let rho = &rho / trace(&rho);
    Ok(QuantumState::density(system.layout().clone(), rho)?)
}

/// Two levels of one mode addressed by an instantaneous rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub mode: Mode,
    pub lower: usize,
    pub upper: usize,
}

impl Transition {
    /// The |0⟩ ↔ |1⟩ transition of `mode`.
    pub fn qubit(mode: Mode) -> Self {
        Self {
            mode,
            lower: 0,
            upper: 1,
        }
    }

    pub fn levels(mode: Mode, lower: usize, upper: usize) -> Self {
        Self { mode, lower, upper }
    }

    fn resolve(&self, layout: &DimensionLayout) -> Result<(usize, usize)> {
        let index = layout
            .position(self.mode)
            .ok_or_else(|| DynamicsError::InvalidSystem(format!("mode {} not in layout {layout}", self.mode)))?;
        let d = layout.dims()[index];
        if self.lower == self.upper || self.lower >= d || self.upper >= d {
            return Err(DynamicsError::InvalidSystem(format!(
                "levels {}↔{} outside mode {} with {d} levels",
                self.lower, self.upper, self.mode
            )));
        }
        Ok((index, d))
    }

    /// `|lower⟩⟨upper|` on the full layout; the drive coupling for this transition.
    pub fn lowering(&self, layout: &DimensionLayout) -> Result<Operator> {
        let (index, d) = self.resolve(layout)?;
        let mut m = CMatrix::zeros(d, d);
        m[(self.lower, self.upper)] = C64::new(1.0, 0.0);
        let single = Operator::from_matrix(DimensionLayout::single(Mode::Ladder, d)?, m)?;
        Ok(fockspace::embed(&single, index, layout)?)
    }

    /// exp(−i·angle/2·(cos φ X + sin φ Y)) on the transition, identity elsewhere.
    pub fn rotation(&self, layout: &DimensionLayout, angle: f64, phase: f64) -> Result<Operator> {
        let (index, d) = self.resolve(layout)?;
        let mut m = CMatrix::identity(d, d);
        let (s, c) = (0.5 * angle).sin_cos();
        let minus_i = C64::new(0.0, -1.0);
        m[(self.lower, self.lower)] = C64::new(c, 0.0);
        m[(self.upper, self.upper)] = C64::new(c, 0.0);
        m[(self.lower, self.upper)] = minus_i * s * C64::from_polar(1.0, -phase);
        m[(self.upper, self.lower)] = minus_i * s * C64::from_polar(1.0, phase);
        let single = Operator::from_matrix(DimensionLayout::single(Mode::Ladder, d)?, m)?;
        Ok(fockspace::embed(&single, index, layout)?)
    }
}

/// Applies an ideal rotation to a ket or density matrix.
pub fn apply_instant_rotation(
    state: &QuantumState,
    transition: Transition,
    angle: f64,
    phase: f64,
) -> Result<QuantumState> {
    let layout = state.layout().clone();
    let u = transition.rotation(&layout, angle, phase)?.into_matrix();
    Ok(match state {
        QuantumState::Ket { vector, .. } => QuantumState::Ket {
            layout,
            vector: &u * vector,
        },
        QuantumState::Density { matrix, .. } => {
            let rotated = &u * matrix * u.adjoint();
            let hermitian = (&rotated + rotated.adjoint()) * C64::new(0.5, 0.0);
            QuantumState::density_unchecked(layout, hermitian)
        }
    })
}
