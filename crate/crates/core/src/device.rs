//! Tunable-coupling qubit device model.
//!
//! Parameters are ordinary frequencies in MHz and rates in 1/μs. Hamiltonians
//! are returned in angular units (rad/μs); the factor 2π is applied here and
//! nowhere else.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fockspace::{self, DimensionLayout, FockError, Mode, Operator};

pub const TWO_PI: f64 = 2.0 * PI;

/// Denominators closer to zero than this (MHz) are treated as resonances.
const SINGULARITY_TOL: f64 = 1e-3;
/// Dressed states must overlap their bare label at least this much.
const OVERLAP_THRESHOLD: f64 = 0.5;
const DISPERSIVE_RATIO: f64 = 10.0;
/// Zero-χ tolerance, MHz (1 kHz).
pub const ZERO_CHI_TOL: f64 = 1e-3;
const BISECTION_MAX_ITER: usize = 100;
const CALIBRATION_MAX_ITER: usize = 50;
/// MHz.
const CALIBRATION_TOL: f64 = 1e-10;

/// Ordinary frequency (MHz) to angular frequency (rad/μs).
pub fn angular(f_mhz: f64) -> f64 {
    TWO_PI * f_mhz
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("resonance singularity: denominator {denominator} = {value} MHz")]
    ResonanceSingularity { denominator: &'static str, value: f64 },
    #[error("cannot track dressed state {state:?}: best overlap {overlap:.3} (dispersive regime violated?)")]
    StateTracking { state: Vec<usize>, overlap: f64 },
    #[error("no sign change of chi on [{g_lo}, {g_hi}] MHz (chi = {chi_lo}, {chi_hi} MHz)")]
    Bracket {
        g_lo: f64,
        g_hi: f64,
        chi_lo: f64,
        chi_hi: f64,
    },
    #[error("zero-chi search did not reach tolerance: best g = {best_g} MHz, chi = {chi} MHz")]
    NonConvergence { best_g: f64, chi: f64 },
    #[error("bare-frequency calibration of the exchange model did not converge")]
    Calibration,
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub type Result<T> = std::result::Result<T, DeviceError>;

/// Device parameter record; frequencies and couplings in MHz, `gamma1` in 1/μs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcqParams {
    pub f_r: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    pub g_minus: f64,
    pub g_plus: f64,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub alpha_c: f64,
    pub kappa: f64,
    pub gamma1: f64,
    /// Measured dispersive shift used for the b₊ mode instead of diagonalization.
    #[serde(default)]
    pub chi_plus_override: Option<f64>,
    /// Fixes χ₋ directly, bypassing the perturbative expression.
    #[serde(default)]
    pub chi_minus_override: Option<f64>,
}

impl TcqParams {
    /// Shipped operating point; `g_minus` and `gamma1` are free knobs.
    pub fn canonical() -> Self {
        Self {
            f_r: 7140.0,
            f_minus: 7250.0,
            f_plus: 9800.0,
            g_minus: 2.0,
            g_plus: 90.0,
            alpha_minus: 129.0,
            alpha_plus: 239.0,
            alpha_c: 358.0,
            kappa: 0.25,
            gamma1: 0.1,
            chi_plus_override: Some(-1.2),
            chi_minus_override: None,
        }
    }

    pub fn delta_minus(&self) -> f64 {
        self.f_minus - self.f_r
    }

    pub fn delta_plus(&self) -> f64 {
        self.f_plus - self.f_r
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("f_r", self.f_r),
            ("f_minus", self.f_minus),
            ("f_plus", self.f_plus),
            ("g_minus", self.g_minus),
            ("g_plus", self.g_plus),
            ("alpha_minus", self.alpha_minus),
            ("alpha_plus", self.alpha_plus),
            ("alpha_c", self.alpha_c),
            ("kappa", self.kappa),
            ("gamma1", self.gamma1),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(DeviceError::InvalidParams(format!("{name} is not finite")));
        }
        for (name, value) in [
            ("kappa", self.kappa),
            ("alpha_minus", self.alpha_minus),
            ("alpha_plus", self.alpha_plus),
            ("alpha_c", self.alpha_c),
        ] {
            if value <= 0.0 {
                return Err(DeviceError::InvalidParams(format!("{name} must be > 0, got {value}")));
            }
        }
        if self.gamma1 < 0.0 {
            return Err(DeviceError::InvalidParams(format!(
                "gamma1 must be >= 0, got {}",
                self.gamma1
            )));
        }
        Ok(())
    }

    /// `|Δ±|/g± ≥ 10` for both modes.
    pub fn dispersive_valid(&self) -> bool {
        let ok = |delta: f64, g: f64| g == 0.0 || delta.abs() / g.abs() >= DISPERSIVE_RATIO;
        ok(self.delta_minus(), self.g_minus) && ok(self.delta_plus(), self.g_plus)
    }

    /// χ₋ in MHz: the override when set, otherwise second-order perturbation theory.
    pub fn chi_minus(&self) -> Result<f64> {
        match self.chi_minus_override {
            Some(chi) => Ok(chi),
            None => Ok(chi_minus_perturbative(self)?.chi_minus),
        }
    }

    /// χ₊ in MHz: the measured override when set, otherwise exact diagonalization on `[4,4,4]`.
    pub fn chi_plus(&self) -> Result<f64> {
        match self.chi_plus_override {
            Some(chi) => Ok(chi),
            None => {
                let layout = DimensionLayout::new(&[4, 4, 4])?;
                Ok(chi_plus_numeric(self, &layout)?.chi)
            }
        }
    }

    pub fn with_g_minus(&self, g_minus: f64) -> Self {
        Self {
            g_minus,
            ..self.clone()
        }
    }
}

/// The two partial dispersive shifts and their sum, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiBreakdown {
    pub chi1: f64,
    pub chi2: f64,
    pub chi_minus: f64,
}

impl ChiBreakdown {
    pub fn new(chi1: f64, chi2: f64) -> Self {
        Self {
            chi1,
            chi2,
            chi_minus: chi1 + chi2,
        }
    }
}

fn check_denominator(name: &'static str, value: f64) -> Result<f64> {
    if value.abs() < SINGULARITY_TOL {
        Err(DeviceError::ResonanceSingularity {
            denominator: name,
            value,
        })
    } else {
        Ok(value)
    }
}

/// Second-order dispersive shift of the b₋ qubit:
/// χ₁ = 2g₋²α₋ / (Δ₋(α₋ − Δ₋)), χ₂ = g₊²α_c / (Δ₊(α_c − Δ₊)).
pub fn chi_minus_perturbative(params: &TcqParams) -> Result<ChiBreakdown> {
    let dm = check_denominator("delta_minus", params.delta_minus())?;
    let am = check_denominator("alpha_minus - delta_minus", params.alpha_minus - dm)?;
    let dp = check_denominator("delta_plus", params.delta_plus())?;
    let ap = check_denominator("alpha_c - delta_plus", params.alpha_c - dp)?;
    let chi1 = 2.0 * params.g_minus.powi(2) * params.alpha_minus / (dm * am);
    let chi2 = params.g_plus.powi(2) * params.alpha_c / (dp * ap);
    Ok(ChiBreakdown::new(chi1, chi2))
}

/// g₋ (MHz) at which the perturbative χ₋ equals `target`, keeping everything else fixed.
pub fn g_minus_for_chi(params: &TcqParams, target: f64) -> Result<f64> {
    let unit = chi_minus_perturbative(&params.with_g_minus(1.0))?;
    let g_sq = (target - unit.chi2) / unit.chi1;
    if !(g_sq >= 0.0) {
        return Err(DeviceError::InvalidParams(format!(
            "chi_minus = {target} MHz is unreachable by tuning g_minus (chi2 = {} MHz)",
            unit.chi2
        )));
    }
    Ok(g_sq.sqrt())
}

/// Explicit dispersive shifts used by [`build_dispersive_hamiltonian_with`], MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveShifts {
    pub chi_minus: f64,
    pub chi_plus: f64,
}

fn occupation(layout: &DimensionLayout, occ: &[usize], mode: Mode) -> f64 {
    layout.position(mode).map_or(0.0, |i| occ[i] as f64)
}

/// Diagonal dispersive Hamiltonian (rad/μs) with the shifts resolved from `params`.
///
/// Modes missing from `layout` are dropped together with their terms; χ₊ is
/// only resolved when both the cavity and b₊ are present.
pub fn build_dispersive_hamiltonian(params: &TcqParams, layout: &DimensionLayout) -> Result<Operator> {
    let has_cavity = layout.position(Mode::Cavity).is_some();
    let chi_minus = if has_cavity && layout.position(Mode::QubitMinus).is_some() {
        params.chi_minus()?
    } else {
        0.0
    };
    let chi_plus = if has_cavity && layout.position(Mode::QubitPlus).is_some() {
        params.chi_plus()?
    } else {
        0.0
    };
    build_dispersive_hamiltonian_with(params, layout, DispersiveShifts { chi_minus, chi_plus })
}

pub fn build_dispersive_hamiltonian_with(
    params: &TcqParams,
    layout: &DimensionLayout,
    shifts: DispersiveShifts,
) -> Result<Operator> {
    Ok(Operator::diagonal_from(layout, |occ| {
        let nc = occupation(layout, occ, Mode::Cavity);
        let nm = occupation(layout, occ, Mode::QubitMinus);
        let np = occupation(layout, occ, Mode::QubitPlus);
        let nu = params.f_r * nc
            + params.f_minus * nm
            + params.f_plus * np
            + shifts.chi_minus * nc * nm
            + shifts.chi_plus * nc * np
            - 0.5 * params.alpha_minus * nm * (nm - 1.0)
            - 0.5 * params.alpha_plus * np * (np - 1.0)
            - params.alpha_c * nm * np;
        angular(nu)
    }))
}

/// Diagonal `2π Σ f_k n_k`; subtract it to move into a frame rotating at `f_k`.
pub fn frame_operator(layout: &DimensionLayout, frame: &[(Mode, f64)]) -> Operator {
    Operator::diagonal_from(layout, |occ| {
        frame
            .iter()
            .map(|&(mode, f)| angular(f) * occupation(layout, occ, mode))
            .sum()
    })
}

/// Hamiltonian with exchange couplings g±(a†b± + a b±†) in place of the
/// dispersive terms; bare frequencies and anharmonicities are kept.
pub fn build_exchange_hamiltonian(params: &TcqParams, layout: &DimensionLayout) -> Result<Operator> {
    let mut h = build_dispersive_hamiltonian_with(
        params,
        layout,
        DispersiveShifts {
            chi_minus: 0.0,
            chi_plus: 0.0,
        },
    )?;
    if layout.position(Mode::Cavity).is_none() {
        return Ok(h);
    }
    let a = fockspace::mode_annihilation(layout, Mode::Cavity)?;
    for (mode, g) in [(Mode::QubitMinus, params.g_minus), (Mode::QubitPlus, params.g_plus)] {
        if layout.position(mode).is_none() || g == 0.0 {
            continue;
        }
        let b = fockspace::mode_annihilation(layout, mode)?;
        let hop = a.dagger().mul(&b)?;
        h = h.add(&hop.add(&hop.dagger())?.scale_real(angular(g)))?;
    }
    Ok(h)
}

/// Eigen-energies (rad/μs) of a real-symmetric Hamiltonian labelled by their
/// dominant bare Fock state.
pub struct DressedSpectrum {
    layout: DimensionLayout,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl DressedSpectrum {
    pub fn new(h: &Operator) -> Self {
        let real = h.matrix().map(|z| z.re);
        let eig = real.symmetric_eigen();
        Self {
            layout: h.layout().clone(),
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// Energy of the dressed state with maximum overlap onto `occupations`.
    pub fn energy(&self, occupations: &[usize]) -> Result<f64> {
        let k = self.layout.flatten(occupations)?;
        let (best, overlap) = (0..self.energies.len())
            .map(|j| (j, self.vectors[(k, j)].powi(2)))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if overlap < OVERLAP_THRESHOLD {
            return Err(DeviceError::StateTracking {
                state: occupations.to_vec(),
                overlap,
            });
        }
        Ok(self.energies[best])
    }
}

/// Dispersive shift from exact diagonalization, MHz, with the validity flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericChi {
    pub chi: f64,
    pub dispersive_valid: bool,
}

fn require_full_layout(layout: &DimensionLayout) -> Result<()> {
    for mode in [Mode::Cavity, Mode::QubitMinus, Mode::QubitPlus] {
        match layout.position(mode) {
            Some(i) if layout.dims()[i] >= 3 => {}
            _ => {
                return Err(DeviceError::InvalidParams(format!(
                    "numeric chi needs cavity, b- and b+ with >= 3 levels each, got {layout}"
                )))
            }
        }
    }
    Ok(())
}

/// Occupation tuple in layout order from (cavity, b₋, b₊) counts.
fn occ(layout: &DimensionLayout, nc: usize, nm: usize, np: usize) -> Vec<usize> {
    layout
        .modes()
        .iter()
        .map(|m| match m {
            Mode::Cavity => nc,
            Mode::QubitMinus => nm,
            Mode::QubitPlus => np,
            Mode::Ladder => 0,
        })
        .collect()
}

/// Bare-frequency copy of `params` whose exchange Hamiltonian has dressed
/// single-excitation frequencies equal to the configured (measured) `f_r`,
/// `f_minus` and `f_plus`.
pub fn bare_exchange_params(params: &TcqParams, layout: &DimensionLayout) -> Result<TcqParams> {
    require_full_layout(layout)?;
    let mut bare = params.clone();
    for _ in 0..CALIBRATION_MAX_ITER {
        let spectrum = DressedSpectrum::new(&build_exchange_hamiltonian(&bare, layout)?);
        let e0 = spectrum.energy(&occ(layout, 0, 0, 0))?;
        let dressed = |nc, nm, np| -> Result<f64> { Ok((spectrum.energy(&occ(layout, nc, nm, np))? - e0) / TWO_PI) };
        let corrections = [
            params.f_r - dressed(1, 0, 0)?,
            params.f_minus - dressed(0, 1, 0)?,
            params.f_plus - dressed(0, 0, 1)?,
        ];
        bare.f_r += corrections[0];
        bare.f_minus += corrections[1];
        bare.f_plus += corrections[2];
        if corrections.iter().all(|c| c.abs() < CALIBRATION_TOL) {
            return Ok(bare);
        }
    }
    Err(DeviceError::Calibration)
}

/// χ₋ = [E(1,1,0) − E(1,0,0) − E(0,1,0) + E(0,0,0)] / 2π from the exchange
/// model, calibrated so its dressed frequencies match `params`.
pub fn chi_numeric(params: &TcqParams, layout: &DimensionLayout) -> Result<NumericChi> {
    let bare = bare_exchange_params(params, layout)?;
    let spectrum = DressedSpectrum::new(&build_exchange_hamiltonian(&bare, layout)?);
    let e = |nc, nm, np| spectrum.energy(&occ(layout, nc, nm, np));
    let chi = (e(1, 1, 0)? - e(1, 0, 0)? - e(0, 1, 0)? + e(0, 0, 0)?) / TWO_PI;
    Ok(NumericChi {
        chi,
        dispersive_valid: params.dispersive_valid(),
    })
}

/// Readout shift of |1₋1₊⟩ relative to |1₋0₊⟩, calibrated like [`chi_numeric`]:
/// [E(1,1,1) − E(1,1,0) − E(0,1,1) + E(0,1,0)] / 2π.
pub fn chi_plus_numeric(params: &TcqParams, layout: &DimensionLayout) -> Result<NumericChi> {
    let bare = bare_exchange_params(params, layout)?;
    let spectrum = DressedSpectrum::new(&build_exchange_hamiltonian(&bare, layout)?);
    let e = |nc, nm, np| spectrum.energy(&occ(layout, nc, nm, np));
    let chi = (e(1, 1, 1)? - e(1, 1, 0)? - e(0, 1, 1)? + e(0, 1, 0)?) / TWO_PI;
    Ok(NumericChi {
        chi,
        dispersive_valid: params.dispersive_valid(),
    })
}

/// How χ₋ is evaluated during the zero-χ search.
#[derive(Debug, Clone, PartialEq)]
pub enum ChiMode {
    Perturbative,
    Numeric(DimensionLayout),
}

fn chi_at(params: &TcqParams, g: f64, mode: &ChiMode) -> Result<f64> {
    let p = params.with_g_minus(g);
    match mode {
        ChiMode::Perturbative => Ok(chi_minus_perturbative(&p)?.chi_minus),
        ChiMode::Numeric(layout) => Ok(chi_numeric(&p, layout)?.chi),
    }
}

/// Bisection for the g₋ (MHz) at which χ₋ vanishes.
pub fn find_zero_chi(params: &TcqParams, g_lo: f64, g_hi: f64, mode: &ChiMode) -> Result<f64> {
    let (mut lo, mut hi) = (g_lo.min(g_hi), g_lo.max(g_hi));
    let mut f_lo = chi_at(params, lo, mode)?;
    let f_hi = chi_at(params, hi, mode)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(DeviceError::Bracket {
            g_lo: lo,
            g_hi: hi,
            chi_lo: f_lo,
            chi_hi: f_hi,
        });
    }
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = chi_at(params, mid, mode)?;
    for _ in 0..BISECTION_MAX_ITER {
        if f_mid == 0.0 || hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        f_mid = chi_at(params, mid, mode)?;
    }
    if f_mid.abs() < ZERO_CHI_TOL {
        Ok(mid)
    } else {
        Err(DeviceError::NonConvergence {
            best_g: mid,
            chi: f_mid,
        })
    }
}

/// Qubit frequency shift n̄χ (MHz) from a mean cavity population.
pub fn ac_stark_shift(nbar: f64, chi: f64) -> f64 {
    debug_assert!(nbar >= 0.0);
    nbar * chi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn layout444() -> DimensionLayout {
        DimensionLayout::new(&[4, 4, 4]).unwrap()
    }

    #[test]
    fn canonical_passes_validation() {
        let p = TcqParams::canonical();
        p.validate().unwrap();
        assert!(p.dispersive_valid());
        assert_eq!(p.delta_minus(), 110.0);
        assert_eq!(p.delta_plus(), 2660.0);
    }

    #[test]
    fn validation_rejects_bad_kappa() {
        let p = TcqParams {
            kappa: 0.0,
            ..TcqParams::canonical()
        };
        assert!(matches!(p.validate(), Err(DeviceError::InvalidParams(_))));
    }

    #[test]
    fn dispersive_flag_trips_near_resonance() {
        let p = TcqParams {
            g_minus: 20.0,
            ..TcqParams::canonical()
        };
        assert!(!p.dispersive_valid());
    }

    #[test]
    fn chi_without_g_minus() {
        let b = chi_minus_perturbative(&TcqParams::canonical().with_g_minus(0.0)).unwrap();
        assert_eq!(b.chi1, 0.0);
        assert_eq!(b.chi_minus, b.chi2);
    }

    #[test]
    fn chi2_at_canonical_detuning() {
        let b = chi_minus_perturbative(&TcqParams::canonical()).unwrap();
        let expected = 90.0_f64.powi(2) * 358.0 / (2660.0 * (358.0 - 2660.0));
        assert_abs_diff_eq!(b.chi2, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(b.chi2, -0.4736, epsilon = 1e-4);
    }

    #[test]
    fn chi1_at_two_mhz() {
        let b = chi_minus_perturbative(&TcqParams::canonical().with_g_minus(2.0)).unwrap();
        assert_abs_diff_eq!(b.chi1, 1032.0 / 2090.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.chi1, 0.4938, epsilon = 1e-4);
        assert_abs_diff_eq!(b.chi_minus, 0.0202, epsilon = 1e-4);
        assert_eq!(b.chi_minus, b.chi1 + b.chi2);
    }

    #[test]
    fn singular_denominator_is_named() {
        let p = TcqParams {
            f_minus: 7140.0 + 129.0,
            ..TcqParams::canonical()
        };
        match chi_minus_perturbative(&p) {
            Err(DeviceError::ResonanceSingularity { denominator, .. }) => {
                assert_eq!(denominator, "alpha_minus - delta_minus")
            }
            other => panic!("unexpected {other:?}"),
        }
        let p = TcqParams {
            f_minus: 7140.0,
            ..TcqParams::canonical()
        };
        assert!(matches!(
            chi_minus_perturbative(&p),
            Err(DeviceError::ResonanceSingularity {
                denominator: "delta_minus",
                ..
            })
        ));
    }

    #[test]
    fn g_minus_inversion_round_trips() {
        let p = TcqParams::canonical();
        for target in [1.9, 0.022, 0.0, -0.3] {
            let g = g_minus_for_chi(&p, target).unwrap();
            let chi = chi_minus_perturbative(&p.with_g_minus(g)).unwrap().chi_minus;
            assert_abs_diff_eq!(chi, target, epsilon = 1e-12);
        }
        assert!(g_minus_for_chi(&p, -1.0).is_err());
    }

    #[test]
    fn free_oscillators_without_couplings() {
        let p = TcqParams {
            alpha_minus: 0.0,
            alpha_plus: 0.0,
            alpha_c: 0.0,
            ..TcqParams::canonical()
        };
        let layout = DimensionLayout::new(&[3, 3, 2]).unwrap();
        let h = build_dispersive_hamiltonian_with(
            &p,
            &layout,
            DispersiveShifts {
                chi_minus: 0.0,
                chi_plus: 0.0,
            },
        )
        .unwrap();
        assert!(h.is_diagonal(0.0));
        for i in 0..layout.total_dim() {
            let o = layout.unflatten(i);
            let expected = TWO_PI * (o[0] as f64 * p.f_r + o[1] as f64 * p.f_minus + o[2] as f64 * p.f_plus);
            assert_abs_diff_eq!(h.matrix()[(i, i)].re, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn dispersive_pair_energy_is_chi() {
        let p = TcqParams::canonical();
        let layout = DimensionLayout::new(&[3, 3, 3]).unwrap();
        let h = build_dispersive_hamiltonian(&p, &layout).unwrap();
        let e = |o: &[usize]| h.matrix()[(layout.flatten(o).unwrap(), layout.flatten(o).unwrap())].re;
        let shift = e(&[1, 1, 0]) - e(&[1, 0, 0]) - e(&[0, 1, 0]) + e(&[0, 0, 0]);
        assert_abs_diff_eq!(shift, TWO_PI * p.chi_minus().unwrap(), epsilon = 1e-9);
        let cross = e(&[0, 1, 1]);
        assert_abs_diff_eq!(cross, TWO_PI * (p.f_minus + p.f_plus - p.alpha_c), epsilon = 1e-9);
        let readout = e(&[1, 1, 1]) - e(&[0, 1, 1]) - e(&[1, 1, 0]) + e(&[0, 1, 0]);
        assert_abs_diff_eq!(readout, TWO_PI * -1.2, epsilon = 1e-9);
    }

    #[test]
    fn reduced_layout_drops_missing_modes() {
        let p = TcqParams {
            chi_minus_override: Some(1.9),
            ..TcqParams::canonical()
        };
        let layout = DimensionLayout::with_modes(&[(Mode::Cavity, 3), (Mode::QubitMinus, 2)]).unwrap();
        let h = build_dispersive_hamiltonian(&p, &layout).unwrap();
        let idx = layout.flatten(&[2, 1]).unwrap();
        assert_abs_diff_eq!(
            h.matrix()[(idx, idx)].re,
            TWO_PI * (2.0 * p.f_r + p.f_minus + 2.0 * 1.9),
            epsilon = 1e-9
        );
    }

    #[test]
    fn exchange_reduces_to_free_model() {
        let p = TcqParams {
            g_minus: 0.0,
            g_plus: 0.0,
            ..TcqParams::canonical()
        };
        let layout = DimensionLayout::new(&[3, 3, 3]).unwrap();
        let ex = build_exchange_hamiltonian(&p, &layout).unwrap();
        let disp = build_dispersive_hamiltonian_with(
            &p,
            &layout,
            DispersiveShifts {
                chi_minus: 0.0,
                chi_plus: 0.0,
            },
        )
        .unwrap();
        assert_eq!(ex, disp);
    }

    #[test]
    fn exchange_conserves_excitations() {
        let layout = DimensionLayout::new(&[3, 3, 3]).unwrap();
        let h = build_exchange_hamiltonian(&TcqParams::canonical(), &layout).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        let total = Operator::diagonal_from(&layout, |o| o.iter().sum::<usize>() as f64);
        assert!(h.commutator(&total).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn numeric_chi_vanishes_without_coupling() {
        let p = TcqParams {
            g_minus: 0.0,
            g_plus: 0.0,
            ..TcqParams::canonical()
        };
        assert!(chi_numeric(&p, &layout444()).unwrap().chi.abs() < 1e-9);
        assert!(chi_plus_numeric(&p, &layout444()).unwrap().chi.abs() < 1e-9);
    }

    #[test]
    fn numeric_chi_tracks_perturbation_theory() {
        let p = TcqParams::canonical().with_g_minus(2.0);
        let b = chi_minus_perturbative(&p).unwrap();
        let num = chi_numeric(&p, &layout444()).unwrap();
        assert!(num.dispersive_valid);
        assert!((num.chi - b.chi_minus).abs() <= 0.1 * b.chi1.abs().max(b.chi2.abs()));
    }

    #[test]
    fn numeric_chi_changes_sign_across_zero_point() {
        let p = TcqParams::canonical();
        let low = chi_numeric(&p.with_g_minus(1.0), &layout444()).unwrap().chi;
        let high = chi_numeric(&p.with_g_minus(3.0), &layout444()).unwrap().chi;
        assert!(low < 0.0 && high > 0.0, "{low} {high}");
        let pert_low = chi_minus_perturbative(&p.with_g_minus(1.0)).unwrap().chi_minus;
        let pert_high = chi_minus_perturbative(&p.with_g_minus(3.0)).unwrap().chi_minus;
        assert_abs_diff_eq!(pert_low, -0.350, epsilon = 1e-3);
        assert_abs_diff_eq!(pert_high, 0.638, epsilon = 1e-3);
    }

    #[test]
    fn numeric_chi_plus_is_negative() {
        let p = TcqParams::canonical();
        let chi = chi_plus_numeric(&p, &layout444()).unwrap().chi;
        assert!(chi < 0.0, "{chi}");
        assert_eq!(p.chi_plus().unwrap(), -1.2);
        let measured_free = TcqParams {
            chi_plus_override: None,
            ..p
        };
        assert_abs_diff_eq!(measured_free.chi_plus().unwrap(), chi, epsilon = 1e-12);
    }

    #[test]
    fn numeric_chi_requires_three_levels() {
        let layout = DimensionLayout::new(&[2, 4, 4]).unwrap();
        assert!(chi_numeric(&TcqParams::canonical(), &layout).is_err());
    }

    #[test]
    fn tracking_fails_outside_dispersive_regime() {
        // cavity, b₋ and b₊ degenerate with unequal couplings: no bare label dominates
        let p = TcqParams {
            f_minus: 7140.0,
            f_plus: 7140.0,
            g_minus: 5.0,
            g_plus: 9.0,
            ..TcqParams::canonical()
        };
        assert!(matches!(
            chi_numeric(&p, &layout444()),
            Err(DeviceError::StateTracking { .. })
        ));
    }

    #[test]
    fn zero_chi_perturbative_root() {
        let p = TcqParams::canonical();
        let g = find_zero_chi(&p, 0.5, 5.0, &ChiMode::Perturbative).unwrap();
        let exact = (0.4736_f64 * 110.0 * 19.0 / (2.0 * 129.0)).sqrt();
        assert_abs_diff_eq!(g, 1.96, epsilon = 0.01);
        assert_abs_diff_eq!(g, exact, epsilon = 1e-3);
        assert!(chi_minus_perturbative(&p.with_g_minus(g)).unwrap().chi_minus.abs() < ZERO_CHI_TOL);
    }

    #[test]
    fn zero_chi_needs_cancellation() {
        let p = TcqParams {
            g_plus: 0.0,
            ..TcqParams::canonical()
        };
        assert!(matches!(
            find_zero_chi(&p, 0.5, 5.0, &ChiMode::Perturbative),
            Err(DeviceError::Bracket { .. })
        ));
    }

    #[test]
    fn zero_chi_numeric_matches_perturbative() {
        let p = TcqParams::canonical();
        let pert = find_zero_chi(&p, 0.5, 5.0, &ChiMode::Perturbative).unwrap();
        let num = find_zero_chi(&p, 0.5, 5.0, &ChiMode::Numeric(layout444())).unwrap();
        assert!((pert - num).abs() < 0.15, "{pert} {num}");
    }

    #[test]
    fn zero_chi_invariant_under_bracket_halving() {
        let p = TcqParams::canonical();
        let wide = find_zero_chi(&p, 0.5, 5.0, &ChiMode::Perturbative).unwrap();
        let narrow = find_zero_chi(&p, 0.5 * (0.5 + wide), 0.5 * (wide + 5.0), &ChiMode::Perturbative).unwrap();
        let slope = 2.0 * 0.4736 / wide;
        assert!((wide - narrow).abs() * slope < ZERO_CHI_TOL);
    }

    #[test]
    fn stark_shift() {
        assert_eq!(ac_stark_shift(0.0, 3.0), 0.0);
        assert_abs_diff_eq!(ac_stark_shift(2.3, 0.5), 1.15, epsilon = 1e-12);
        assert_abs_diff_eq!(ac_stark_shift(2.3, -0.5), -1.15, epsilon = 1e-12);
    }

    #[test]
    fn canonical_json_round_trip() {
        let json = serde_json::to_string(&TcqParams::canonical()).unwrap();
        let back: TcqParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, TcqParams::canonical());
        assert!(serde_json::from_str::<TcqParams>(r#"{"f_r": 1.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn chi_is_even_in_couplings(g_m in 0.0..10.0f64, g_p in 0.0..150.0f64) {
            let p = TcqParams { g_minus: g_m, g_plus: g_p, ..TcqParams::canonical() };
            let q = TcqParams { g_minus: -g_m, g_plus: -g_p, ..TcqParams::canonical() };
            prop_assert_eq!(chi_minus_perturbative(&p).unwrap(), chi_minus_perturbative(&q).unwrap());
        }

        #[test]
        fn straddling_signs(
            frac in 0.05..0.95f64,
            alpha_m in 50.0..300.0f64,
            excess in 10.0..3000.0f64,
            alpha_c in 50.0..500.0f64,
            g_m in 0.1..10.0f64,
            g_p in 1.0..150.0f64,
        ) {
            let p = TcqParams {
                f_minus: 7140.0 + frac * alpha_m,
                alpha_minus: alpha_m,
                f_plus: 7140.0 + alpha_c + excess,
                alpha_c,
                g_minus: g_m,
                g_plus: g_p,
                ..TcqParams::canonical()
            };
            let b = chi_minus_perturbative(&p).unwrap();
            prop_assert!(b.chi1 > 0.0);
            prop_assert!(b.chi2 < 0.0);
        }
    }

    #[test]
    fn numeric_scaling_law_in_g_minus() {
        // χ_num(s·g) − χ₂ ∝ s² for s ∈ [0.5, 1].
        let base = TcqParams::canonical().with_g_minus(2.0);
        let chi2 = chi_numeric(&base.with_g_minus(0.0), &layout444()).unwrap().chi;
        let reference = chi_numeric(&base, &layout444()).unwrap().chi - chi2;
        for s in [0.5, 0.625, 0.75, 0.875, 1.0] {
            let scaled = chi_numeric(&base.with_g_minus(2.0 * s), &layout444()).unwrap().chi - chi2;
            let ratio = scaled / (reference * s * s);
            assert!((ratio - 1.0).abs() < 0.05, "s = {s}: ratio {ratio}");
        }
    }
}
