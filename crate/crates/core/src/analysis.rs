//! Photon shot-noise dephasing, decoherence budgets and least-squares fits.
//!
//! Frequencies are MHz on input; rates come back in 1/μs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::angular;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingInput {
    pub chi: f64,
    pub kappa: f64,
    pub n_th: f64,
}

impl DephasingInput {
    pub fn new(chi: f64, kappa: f64, n_th: f64) -> Result<Self> {
        let input = Self { chi, kappa, n_th };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.chi.is_finite() {
            return Err(AnalysisError::InvalidInput(format!(
                "chi must be finite, got {}",
                self.chi
            )));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(AnalysisError::InvalidInput(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !(self.n_th >= 0.0) || !self.n_th.is_finite() {
            return Err(AnalysisError::InvalidInput(format!(
                "n_th must be >= 0, got {}",
                self.n_th
            )));
        }
        Ok(())
    }
}

/// Evaluates (κ/2)·Re[√((1+iχ/κ)² + 4iχn/κ) − 1] as (κ/2)·Re[(z−1)/(√z+1)]
/// with no domain checks.
fn gamma_phi_unchecked(chi: f64, kappa: f64, n_th: f64) -> f64 {
    if n_th == 0.0 || chi == 0.0 {
        return 0.0;
    }
    let x = chi / kappa;
    let z_minus_one = Complex64::new(-x * x, 2.0 * x * (1.0 + 2.0 * n_th));
    let z = z_minus_one + 1.0;
    assert!(z.im != 0.0 || z.re >= 0.0, "square-root argument {z} on the branch cut");
    0.5 * angular(kappa) * (z_minus_one / (z.sqrt() + 1.0)).re
}

/// Photon shot-noise dephasing rate in 1/μs.
pub fn gamma_phi(input: &DephasingInput) -> f64 {
    gamma_phi_unchecked(input.chi, input.kappa, input.n_th)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingLimits {
    pub small_chi: f64,
    pub large_chi: f64,
}

/// Weak-coupling (χ²n(1+n)/κ) and strong-coupling (κn) asymptotes, angular units.
pub fn gamma_phi_limits(input: &DephasingInput) -> DephasingLimits {
    let chi = angular(input.chi);
    let kappa = angular(input.kappa);
    DephasingLimits {
        small_chi: chi * chi * input.n_th * (1.0 + input.n_th) / kappa,
        large_chi: kappa * input.n_th,
    }
}

/// κ in MHz for which the strong-coupling asymptote gives `gamma_phi` (1/μs).
pub fn kappa_from_large_chi(gamma_phi: f64, n_th: f64) -> Result<f64> {
    if !(n_th > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("n_th must be > 0, got {n_th}")));
    }
    Ok(gamma_phi / n_th / angular(1.0))
}

/// 1/T₂ = 1/(2T₁) + Γ_φ + Γ_extra.
pub fn t2_from_rates(t1: f64, gamma_phi: f64, gamma_extra: f64) -> Result<f64> {
    if !(t1 > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("T1 must be > 0, got {t1}")));
    }
    if !(gamma_phi >= 0.0) || !(gamma_extra >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "rates must be >= 0, got gamma_phi = {gamma_phi}, gamma_extra = {gamma_extra}"
        )));
    }
    Ok(1.0 / (0.5 / t1 + gamma_phi + gamma_extra))
}

/// Γ_extra that reproduces a measured zero-noise T₂ given T₁.
pub fn gamma_extra_from_t2(t1: f64, t2_zero: f64) -> Result<f64> {
    if !(t1 > 0.0) || !(t2_zero > 0.0) || t2_zero > 2.0 * t1 {
        return Err(AnalysisError::InvalidInput(format!(
            "need 0 < T2 <= 2 T1, got T1 = {t1}, T2 = {t2_zero}"
        )));
    }
    Ok(1.0 / t2_zero - 0.5 / t1)
}

/// Purcell relaxation 2πκ(g/Δ)² in 1/μs.
pub fn purcell_rate(g: f64, delta: f64, kappa: f64) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(AnalysisError::InvalidInput(format!(
            "detuning must be nonzero, got {delta}"
        )));
    }
    let ratio = g / delta;
    Ok(angular(kappa) * ratio * ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub error: Option<f64>,
    /// Reported instead of a meaningful value when the data are consistent with zero.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub upper_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    fn flag(mut self, message: impl Into<String>) -> Self {
        self.converged = false;
        self.message = Some(message.into());
        self
    }
}

const LM_LAMBDA0: f64 = 1e-3;
const LM_MAX_ITER: usize = 200;
const LM_GRADIENT_TOL: f64 = 1e-8;
const LM_STEP_TOL: f64 = 1e-12;
const LM_DIFF_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Diagonal of s²(JᵀJ)⁻¹; `None` when singular or underdetermined.
    pub errors: Option<Vec<f64>>,
}

/// Central-difference Jacobian with step 1e-6·max(|p|, 1).
pub fn jacobian<F>(residuals: &F, p: &[f64], m: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(m, p.len());
    let mut probe = p.to_vec();
    for j in 0..p.len() {
        let h = LM_DIFF_STEP * p[j].abs().max(1.0);
        probe[j] = p[j] + h;
        let up = residuals(&probe);
        probe[j] = p[j] - h;
        let down = residuals(&probe);
        probe[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Largest cosine between the residual vector and a Jacobian column.
fn gradient_cosine(jac: &DMatrix<f64>, r: &[f64]) -> f64 {
    let rnorm = sum_sq(r).sqrt();
    if rnorm == 0.0 {
        return 0.0;
    }
    let rv = DVector::from_column_slice(r);
    (0..jac.ncols())
        .map(|j| {
            let col = jac.column(j);
            let cn = col.norm();
            if cn == 0.0 {
                0.0
            } else {
                (col.dot(&rv) / (cn * rnorm)).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Levenberg–Marquardt on `residuals`, damping λ₀ = 1e-3, ×10 on reject,
/// ÷10 on accept, at most 200 iterations.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64]) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let m = r.len();
    let n = p.len();
    let mut cost = sum_sq(&r);
    let initial_norm = cost.sqrt();
    let exact = |c: f64| c.sqrt() <= 1e-10 * initial_norm.max(1e-3) || c.sqrt() <= 1e-13 * (m as f64).sqrt();
    let mut lambda = LM_LAMBDA0;
    let mut iterations = 0;
    let mut converged = false;

    if !cost.is_finite() {
        return LmOutcome {
            params: p,
            residual_norm: cost.sqrt(),
            iterations,
            converged: false,
            errors: None,
        };
    }

    while iterations < LM_MAX_ITER {
        let jac = jacobian(&residuals, &p, m);
        if exact(cost) || gradient_cosine(&jac, &r) < LM_GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        let mut stepped = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
            let r_trial = residuals(&trial);
            let trial_cost = sum_sq(&r_trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let small_step = delta
                    .iter()
                    .zip(&p)
                    .all(|(d, x)| d.abs() <= LM_STEP_TOL * (x.abs() + LM_STEP_TOL));
                p = trial;
                r = r_trial;
                cost = trial_cost;
                lambda /= 10.0;
                stepped = !small_step;
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            let jac = jacobian(&residuals, &p, m);
            converged = exact(cost) || gradient_cosine(&jac, &r) < 1e3 * LM_GRADIENT_TOL;
            break;
        }
    }

    let jac = jacobian(&residuals, &p, m);
    let errors = (m > n)
        .then(|| {
            let s2 = cost / (m - n) as f64;
            (jac.transpose() * &jac)
                .try_inverse()
                .map(|cov| (0..n).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect())
        })
        .flatten();
    LmOutcome {
        params: p,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        errors,
    }
}

fn check_series(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "length mismatch: {} abscissae, {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_points {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least {min_points} points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite data".into()));
    }
    Ok(())
}

fn is_flat(y: &[f64]) -> bool {
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300)
}

fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn param(name: &str, value: f64, error: Option<f64>) -> FitParam {
    FitParam {
        name: name.into(),
        value,
        error,
        upper_bound: None,
    }
}

/// Fits y = A·e^(−t/T) + c; with `floor` set, c is held fixed.
pub fn fit_exponential(t: &[f64], y: &[f64], floor: Option<f64>) -> Result<FitResult> {
    check_series(t, y, 4)?;
    let span = t.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - t.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(span > 0.0) {
        return Err(AnalysisError::InvalidInput("time grid has zero span".into()));
    }

    let fixed_floor = floor.is_some();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if is_flat(y) {
        let c = floor.unwrap_or(lo);
        let mut params = vec![param("A", y[0] - c, None), param("T", f64::INFINITY, None)];
        if !fixed_floor {
            params.push(param("c", c, None));
        }
        return Ok(FitResult {
            params,
            residual_norm: 0.0,
            iterations: 0,
            converged: false,
            message: Some("constant series: decay time unidentifiable (T -> infinity)".into()),
        });
    }

    let decaying = y[0] >= y[y.len() - 1];
    let c_guess = floor.unwrap_or(if decaying {
        lo - 0.05 * (hi - lo)
    } else {
        hi + 0.05 * (hi - lo)
    });
    let sign = if y[0] >= c_guess { 1.0 } else { -1.0 };
    let (lt, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| sign * (v - c_guess) > 0.0)
        .map(|(&ti, &v)| (ti, (sign * (v - c_guess)).ln()))
        .unzip();
    let (t0, a0) = match (lt.len() >= 2).then(|| linear_regression(&lt, &ly)).flatten() {
        Some((slope, intercept)) if slope < 0.0 => (-1.0 / slope, sign * intercept.exp()),
        _ => (span, y[0] - c_guess),
    };

    let model = |p: &[f64], ti: f64| {
        let c = floor.unwrap_or_else(|| p[2]);
        p[0] * (-ti / p[1]).exp() + c
    };
    let residuals = |p: &[f64]| t.iter().zip(y).map(|(&ti, &yi)| yi - model(p, ti)).collect::<Vec<_>>();
    let p0 = if fixed_floor {
        vec![a0, t0]
    } else {
        vec![a0, t0, c_guess]
    };
    let out = levenberg_marquardt(residuals, &p0);

    let err = |k: usize| out.errors.as_ref().map(|e| e[k]);
    let mut params = vec![param("A", out.params[0], err(0)), param("T", out.params[1], err(1))];
    if !fixed_floor {
        params.push(param("c", out.params[2], err(2)));
    }
    let result = FitResult {
        params,
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged: out.converged,
        message: None,
    };
    let tau = out.params[1];
    Ok(if !(tau > 0.0) || !tau.is_finite() {
        result.flag("fitted decay time is not positive")
    } else if tau > 1e3 * span {
        result.flag("decay time far beyond the sampled span (T -> infinity)")
    } else if !result.converged {
        result.flag("Levenberg-Marquardt did not converge")
    } else {
        result
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibrationFixed {
    pub chi: f64,
    pub kappa: f64,
    pub t1: f64,
    pub gamma_extra: f64,
}

/// Model T₂(P) for a noise-power calibration n_th = βP.
pub fn t2_vs_power(fixed: &NoiseCalibrationFixed, beta: f64, power: f64) -> f64 {
    1.0 / (0.5 / fixed.t1 + gamma_phi_unchecked(fixed.chi, fixed.kappa, beta * power) + fixed.gamma_extra)
}

/// Solves gamma_phi(χ, κ, n) = target for n by bisection.
fn invert_gamma_phi(chi: f64, kappa: f64, target: f64) -> Option<f64> {
    if !(target > 0.0) || chi == 0.0 {
        return None;
    }
    let mut hi = 1.0;
    while gamma_phi_unchecked(chi, kappa, hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_phi_unchecked(chi, kappa, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn validate_budget(kappa: f64, t1: f64, gamma_extra: f64) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("kappa must be > 0, got {kappa}")));
    }
    if !(t1 > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("T1 must be > 0, got {t1}")));
    }
    if !(gamma_extra >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "gamma_extra must be >= 0, got {gamma_extra}"
        )));
    }
    Ok(())
}

/// Fits the single scale β in n_th = β·P, minimizing relative T₂ residuals.
pub fn fit_noise_calibration(powers: &[f64], t2s: &[f64], fixed: &NoiseCalibrationFixed) -> Result<FitResult> {
    check_series(powers, t2s, 3)?;
    validate_budget(fixed.kappa, fixed.t1, fixed.gamma_extra)?;
    if fixed.chi == 0.0 {
        return Err(AnalysisError::InvalidInput(
            "chi = 0 carries no noise information".into(),
        ));
    }
    if t2s.iter().any(|&v| !(v > 0.0)) {
        return Err(AnalysisError::InvalidInput("T2 values must be > 0".into()));
    }
    if is_flat(t2s) || is_flat(powers) {
        return Ok(FitResult {
            params: vec![param("beta", 0.0, None)],
            residual_norm: 0.0,
            iterations: 0,
            converged: false,
            message: Some("flat data: beta is unidentifiable".into()),
        });
    }

    let base = 0.5 / fixed.t1 + fixed.gamma_extra;
    let (num, den) = powers.iter().zip(t2s).fold((0.0, 0.0), |(num, den), (&p, &t2)| {
        match invert_gamma_phi(fixed.chi, fixed.kappa, 1.0 / t2 - base) {
            Some(n) if p > 0.0 => (num + n * p, den + p * p),
            _ => (num, den),
        }
    });
    let beta0 = if den > 0.0 && num > 0.0 { num / den } else { 1e-3 };

    let residuals = |p: &[f64]| {
        powers
            .iter()
            .zip(t2s)
            .map(|(&pw, &t2)| (t2 - t2_vs_power(fixed, p[0], pw)) / t2)
            .collect::<Vec<_>>()
    };
    let out = levenberg_marquardt(residuals, &[beta0]);
    let beta = out.params[0];
    let result = FitResult {
        params: vec![param("beta", beta, out.errors.as_ref().map(|e| e[0]))],
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged: out.converged,
        message: None,
    };
    Ok(if !(beta > 0.0) {
        result.flag("fitted beta is not positive (unphysical)")
    } else if !result.converged {
        result.flag("Levenberg-Marquardt did not converge")
    } else {
        result
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiFitFixed {
    pub kappa: f64,
    pub t1: f64,
    pub gamma_extra: f64,
}

pub fn t2_vs_nth(fixed: &ChiFitFixed, chi: f64, n_th: f64) -> f64 {
    1.0 / (0.5 / fixed.t1 + gamma_phi_unchecked(chi, fixed.kappa, n_th) + fixed.gamma_extra)
}

/// Fits |χ| (MHz) to T₂ measured against thermal occupation.
///
/// Only |χ| is identifiable. When the best fit is statistically
/// indistinguishable from χ = 0, `upper_bound` holds the 2σ limit.
pub fn fit_chi_from_t2(n_th: &[f64], t2s: &[f64], fixed: &ChiFitFixed) -> Result<FitResult> {
    check_series(n_th, t2s, 4)?;
    validate_budget(fixed.kappa, fixed.t1, fixed.gamma_extra)?;
    if n_th.iter().any(|&n| !(n >= 0.0)) {
        return Err(AnalysisError::InvalidInput("n_th values must be >= 0".into()));
    }
    if t2s.iter().any(|&v| !(v > 0.0)) {
        return Err(AnalysisError::InvalidInput("T2 values must be > 0".into()));
    }
    let n_max = n_th.iter().copied().fold(0.0, f64::max);
    let n_min = n_th.iter().copied().fold(f64::INFINITY, f64::min);
    if !(n_max > 0.0 && n_max >= 3.0 * n_min) {
        return Err(AnalysisError::InvalidInput(format!(
            "n_th grid must span a factor of 3, got [{n_min}, {n_max}]"
        )));
    }

    let base = 0.5 / fixed.t1 + fixed.gamma_extra;
    let x: Vec<f64> = n_th.iter().map(|n| n * (1.0 + n)).collect();
    let rates: Vec<f64> = t2s.iter().map(|t2| 1.0 / t2 - base).collect();
    let chi0 = match linear_regression(&x, &rates) {
        Some((slope, _)) if slope > 0.0 => (slope * angular(fixed.kappa)).sqrt() / angular(1.0),
        _ => 1e-3 * fixed.kappa,
    };

    let relative = |chi: f64| {
        n_th.iter()
            .zip(t2s)
            .map(|(&n, &t2)| (t2 - t2_vs_nth(fixed, chi, n)) / t2)
            .collect::<Vec<_>>()
    };
    let out = levenberg_marquardt(|p: &[f64]| relative(p[0].exp()), &[chi0.ln()]);
    let chi = out.params[0].exp();
    let error = out.errors.as_ref().map(|e| chi * e[0]);

    // compare against the χ = 0 hypothesis with the fit's noise estimate
    let m = n_th.len() as f64;
    let best = out.residual_norm * out.residual_norm;
    let sigma2 = best / (m - 1.0);
    let null = sum_sq(&relative(0.0));
    let mut fit_param = param("chi", chi, error);
    let mut message = None;
    if sigma2 > 0.0 && null - best < 4.0 * sigma2 {
        let limit = best + 4.0 * sigma2;
        let mut hi = chi.max(1e-6 * fixed.kappa);
        while sum_sq(&relative(hi)) < limit && hi < 1e3 * fixed.kappa {
            hi *= 2.0;
        }
        let mut lo = chi;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if sum_sq(&relative(mid)) < limit {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        fit_param.upper_bound = Some(hi);
        message = Some(format!("chi consistent with zero; 2-sigma upper bound {hi:.3e} MHz"));
    }
    let result = FitResult {
        params: vec![fit_param],
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged: out.converged,
        message,
    };
    Ok(if !result.converged {
        let note = result.message.clone();
        let flagged = result.flag("Levenberg-Marquardt did not converge");
        match note {
            Some(n) => FitResult {
                message: Some(format!("{}; {n}", flagged.message.unwrap_or_default())),
                ..flagged
            },
            None => flagged,
        }
    } else {
        result
    })
}

fn noisy(values: impl Iterator<Item = f64>, relative_noise: f64, seed: u64) -> Result<Vec<f64>> {
    if !(relative_noise >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "noise must be >= 0, got {relative_noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(values
        .map(|v| v * (1.0 + relative_noise * normal.sample(&mut rng)))
        .collect())
}

/// Seeded synthetic T₂(n_th) with multiplicative Gaussian noise.
pub fn synthetic_t2_vs_nth(
    chi: f64,
    fixed: &ChiFitFixed,
    n_th: &[f64],
    relative_noise: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    noisy(n_th.iter().map(|&n| t2_vs_nth(fixed, chi, n)), relative_noise, seed)
}

/// Seeded synthetic T₂(P) with multiplicative Gaussian noise.
pub fn synthetic_t2_vs_power(
    beta: f64,
    fixed: &NoiseCalibrationFixed,
    powers: &[f64],
    relative_noise: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    noisy(
        powers.iter().map(|&p| t2_vs_power(fixed, beta, p)),
        relative_noise,
        seed,
    )
}

/// Seeded A·e^(−t/T) + c with additive Gaussian noise of standard deviation `noise`.
pub fn synthetic_decay(t: &[f64], a: f64, tau: f64, c: f64, noise: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(t.iter()
        .map(|&ti| a * (-ti / tau).exp() + c + noise * normal.sample(&mut rng))
        .collect())
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
