//! Truncated Fock-space algebra for tensor products of bosonic modes.
//!
//! Multi-indices `(n_0, n_1, ...)` are flattened with subsystem 0 varying
//! slowest, so for layout `[3, 2, 2]` the occupation `(1, 0, 1)` lives at
//! index `1*4 + 0*2 + 1 = 5`. The device model uses the convention
//! cavity = 0, b₋ = 1, b₊ = 2; reduced models record which modes they keep.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const STATE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = -1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("invalid truncation dimension {0}; every mode needs at least 2 levels")]
    InvalidDimension(usize),
    #[error("layout mismatch: {left} vs {right}")]
    LayoutMismatch {
        left: DimensionLayout,
        right: DimensionLayout,
    },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, FockError>;

/// Physical role of one tensor factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cavity,
    QubitMinus,
    QubitPlus,
    /// A bare ladder of levels with no fixed physical role.
    Ladder,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Cavity => "a",
            Mode::QubitMinus => "b-",
            Mode::QubitPlus => "b+",
            Mode::Ladder => "ladder",
        };
        f.write_str(s)
    }
}

const DEFAULT_MODES: [Mode; 3] = [Mode::Cavity, Mode::QubitMinus, Mode::QubitPlus];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimensionLayout {
    dims: Vec<usize>,
    modes: Vec<Mode>,
}

impl fmt::Display for DimensionLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (d, m)) in self.dims.iter().zip(&self.modes).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{m}:{d}")?;
        }
        f.write_str("]")
    }
}

impl DimensionLayout {
    /// Layout in the default mode order (cavity, b₋, b₊), truncated to `dims.len()` modes.
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > DEFAULT_MODES.len() {
            return Err(FockError::InvalidParameter(format!(
                "default layouts hold 1 to 3 modes, got {}",
                dims.len()
            )));
        }
        let modes: Vec<(Mode, usize)> = DEFAULT_MODES.iter().copied().zip(dims.iter().copied()).collect();
        Self::with_modes(&modes)
    }

    /// Layout with explicit mode labels, e.g. a reduced cavity ⊗ b₋ model.
    pub fn with_modes(modes: &[(Mode, usize)]) -> Result<Self> {
        if modes.is_empty() {
            return Err(FockError::InvalidParameter("empty layout".into()));
        }
        for (i, (m, d)) in modes.iter().enumerate() {
            if *d < 2 {
                return Err(FockError::InvalidDimension(*d));
            }
            if modes[..i].iter().any(|(other, _)| other == m && *m != Mode::Ladder) {
                return Err(FockError::InvalidParameter(format!("mode {m} listed twice")));
            }
        }
        Ok(Self {
            dims: modes.iter().map(|(_, d)| *d).collect(),
            modes: modes.iter().map(|(m, _)| *m).collect(),
        })
    }

    pub fn single(mode: Mode, d: usize) -> Result<Self> {
        Self::with_modes(&[(mode, d)])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, mode: Mode) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    /// Same dimensions, different labels.
    pub fn relabeled(&self, modes: &[Mode]) -> Result<Self> {
        if modes.len() != self.dims.len() {
            return Err(FockError::InvalidParameter(
                "label count differs from mode count".into(),
            ));
        }
        let pairs: Vec<(Mode, usize)> = modes.iter().copied().zip(self.dims.iter().copied()).collect();
        Self::with_modes(&pairs)
    }

    pub fn flatten(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.dims.len() {
            return Err(FockError::InvalidState(format!(
                "{} occupations for {} modes",
                occupations.len(),
                self.dims.len()
            )));
        }
        let mut index = 0;
        for (&n, &d) in occupations.iter().zip(&self.dims) {
            if n >= d {
                return Err(FockError::InvalidState(format!(
                    "occupation {n} exceeds truncation {d}"
                )));
            }
            index = index * d + n;
        }
        Ok(index)
    }

    pub fn unflatten(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.dims.len()];
        for (slot, &d) in occ.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        occ
    }

    fn ensure_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(FockError::LayoutMismatch {
                left: self.clone(),
                right: other.clone(),
            })
        }
    }
}

/// Dense complex operator on a tensor-product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    layout: DimensionLayout,
    matrix: CMatrix,
}

impl Operator {
    pub fn from_matrix(layout: DimensionLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(FockError::InvalidParameter(format!(
                "matrix is {}x{}, layout {layout} needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn identity(layout: &DimensionLayout) -> Self {
        let n = layout.total_dim();
        Self {
            layout: layout.clone(),
            matrix: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(layout: &DimensionLayout) -> Self {
        let n = layout.total_dim();
        Self {
            layout: layout.clone(),
            matrix: CMatrix::zeros(n, n),
        }
    }

    /// Diagonal operator whose entry at each basis state is `f(occupations)`.
    pub fn diagonal_from(layout: &DimensionLayout, f: impl Fn(&[usize]) -> f64) -> Self {
        let n = layout.total_dim();
        let mut matrix = CMatrix::zeros(n, n);
        for i in 0..n {
            matrix[(i, i)] = C64::new(f(&layout.unflatten(i)), 0.0);
        }
        Self {
            layout: layout.clone(),
            matrix,
        }
    }

    pub fn layout(&self) -> &DimensionLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: &self.matrix * factor,
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of |M − M†|.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)].norm() <= tol))
    }

    /// Max absolute row sum; bounds the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.matrix)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }
}

pub(crate) fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn norm_inf(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Single-mode annihilation operator truncated to `d` levels.
pub fn annihilation(d: usize) -> Result<Operator> {
    let layout = DimensionLayout::single(Mode::Ladder, d)?;
    let mut m = CMatrix::zeros(d, d);
    for n in 0..d - 1 {
        m[(n, n + 1)] = C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    Operator::from_matrix(layout, m)
}

pub fn creation(d: usize) -> Result<Operator> {
    Ok(annihilation(d)?.dagger())
}

pub fn number(d: usize) -> Result<Operator> {
    let a = annihilation(d)?;
    a.dagger().mul(&a)
}

pub fn identity(d: usize) -> Result<Operator> {
    Ok(Operator::identity(&DimensionLayout::single(Mode::Ladder, d)?))
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` at subsystem `index`.
pub fn embed(op: &Operator, index: usize, layout: &DimensionLayout) -> Result<Operator> {
    let dims = layout.dims();
    if index >= dims.len() {
        return Err(FockError::InvalidParameter(format!(
            "subsystem {index} outside layout {layout}"
        )));
    }
    if op.dim() != dims[index] {
        return Err(FockError::LayoutMismatch {
            left: op.layout.clone(),
            right: layout.clone(),
        });
    }
    let before: usize = dims[..index].iter().product();
    let after: usize = dims[index + 1..].iter().product();
    let left = CMatrix::identity(before, before);
    let right = CMatrix::identity(after, after);
    let matrix = left.kronecker(&op.matrix).kronecker(&right);
    Operator::from_matrix(layout.clone(), matrix)
}

/// Annihilation operator of `mode` acting on the full layout.
pub fn mode_annihilation(layout: &DimensionLayout, mode: Mode) -> Result<Operator> {
    let index = layout
        .position(mode)
        .ok_or_else(|| FockError::InvalidParameter(format!("mode {mode} not in layout {layout}")))?;
    embed(&annihilation(layout.dims()[index])?, index, layout)
}

pub fn mode_number(layout: &DimensionLayout, mode: Mode) -> Result<Operator> {
    let a = mode_annihilation(layout, mode)?;
    a.dagger().mul(&a)
}

/// A pure (`Ket`) or mixed (`Density`) state on a layout.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Ket { layout: DimensionLayout, vector: CVector },
    Density { layout: DimensionLayout, matrix: CMatrix },
}

impl QuantumState {
    pub fn ket(layout: DimensionLayout, vector: CVector) -> Result<Self> {
        if vector.len() != layout.total_dim() {
            return Err(FockError::InvalidState(format!(
                "ket length {} does not match layout {layout}",
                vector.len()
            )));
        }
        let norm = vector.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(FockError::InvalidState(format!("ket norm {norm} is not 1")));
        }
        Ok(Self::Ket { layout, vector })
    }

    pub fn density(layout: DimensionLayout, matrix: CMatrix) -> Result<Self> {
        let state = Self::Density { layout, matrix };
        state.validate(POSITIVITY_TOL)?;
        Ok(state)
    }

    /// Wraps a matrix without the positivity check; used by integrators that
    /// report their own diagnostics.
    pub(crate) fn density_unchecked(layout: DimensionLayout, matrix: CMatrix) -> Self {
        Self::Density { layout, matrix }
    }

    pub fn layout(&self) -> &DimensionLayout {
        match self {
            Self::Ket { layout, .. } | Self::Density { layout, .. } => layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().total_dim()
    }

    pub fn is_ket(&self) -> bool {
        matches!(self, Self::Ket { .. })
    }

    pub fn density_matrix(&self) -> CMatrix {
        match self {
            Self::Ket { vector, .. } => vector * vector.adjoint(),
            Self::Density { matrix, .. } => matrix.clone(),
        }
    }

    pub fn to_density(&self) -> Self {
        Self::Density {
            layout: self.layout().clone(),
            matrix: self.density_matrix(),
        }
    }

    /// Reinterprets the state on a layout with the same dimensions.
    pub fn with_layout(self, layout: DimensionLayout) -> Result<Self> {
        if layout.dims() != self.layout().dims() {
            return Err(FockError::LayoutMismatch {
                left: self.layout().clone(),
                right: layout,
            });
        }
        Ok(match self {
            Self::Ket { vector, .. } => Self::Ket { layout, vector },
            Self::Density { matrix, .. } => Self::Density { layout, matrix },
        })
    }

    pub fn purity(&self) -> f64 {
        match self {
            Self::Ket { .. } => 1.0,
            Self::Density { matrix, .. } => trace(&(matrix * matrix)).re,
        }
    }

    /// Diagonal of the density matrix in the Fock basis.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            Self::Ket { vector, .. } => vector.iter().map(|z| z.norm_sqr()).collect(),
            Self::Density { matrix, .. } => matrix.diagonal().iter().map(|z| z.re).collect(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Self::Ket { .. } => 0.0,
            Self::Density { matrix, .. } => {
                let herm = (matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
                herm.symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Checks normalization, Hermiticity and positivity down to `min_eigenvalue`.
    pub fn validate(&self, min_eigenvalue: f64) -> Result<()> {
        match self {
            Self::Ket { vector, .. } => {
                let norm = vector.norm();
                if (norm - 1.0).abs() > STATE_TOL {
                    return Err(FockError::InvalidState(format!("ket norm {norm} is not 1")));
                }
            }
            Self::Density { layout, matrix } => {
                let n = layout.total_dim();
                if matrix.nrows() != n || matrix.ncols() != n {
                    return Err(FockError::InvalidState(format!(
                        "density shape does not match {layout}"
                    )));
                }
                let defect = hermiticity_defect(matrix);
                if defect > STATE_TOL {
                    return Err(FockError::InvalidState(format!(
                        "density not Hermitian (defect {defect:e})"
                    )));
                }
                let tr = trace(matrix);
                if (tr - C64::new(1.0, 0.0)).norm() > STATE_TOL {
                    return Err(FockError::InvalidState(format!("density trace {tr} is not 1")));
                }
                let lowest = self.min_eigenvalue();
                if lowest < min_eigenvalue {
                    return Err(FockError::InvalidState(format!("density has eigenvalue {lowest:e}")));
                }
            }
        }
        Ok(())
    }
}

/// Basis ket `|n_0, n_1, …⟩`.
pub fn fock_state(layout: &DimensionLayout, occupations: &[usize]) -> Result<QuantumState> {
    let index = layout.flatten(occupations)?;
    let mut vector = CVector::zeros(layout.total_dim());
    vector[index] = C64::new(1.0, 0.0);
    QuantumState::ket(layout.clone(), vector)
}

/// Bose thermal state truncated to `d` levels and renormalized to unit trace.
pub fn thermal_state(d: usize, n_th: f64) -> Result<QuantumState> {
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return Err(FockError::InvalidParameter(format!(
            "thermal occupation {n_th} must be >= 0"
        )));
    }
    let layout = DimensionLayout::single(Mode::Ladder, d)?;
    let ratio = n_th / (1.0 + n_th);
    let weights: Vec<f64> = (0..d).map(|n| ratio.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut matrix = CMatrix::zeros(d, d);
    for (n, w) in weights.iter().enumerate() {
        matrix[(n, n)] = C64::new(w / total, 0.0);
    }
    Ok(QuantumState::Density { layout, matrix })
}

/// `⟨ψ|M|ψ⟩` or `tr(Mρ)`.
pub fn expectation(op: &Operator, state: &QuantumState) -> Result<C64> {
    op.layout.ensure_same(state.layout())?;
    Ok(match state {
        QuantumState::Ket { vector, .. } => (vector.adjoint() * &op.matrix * vector)[(0, 0)],
        QuantumState::Density { matrix, .. } => trace_of_product(&op.matrix, matrix),
    })
}

/// `tr(A·B)` without forming the product.
pub(crate) fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
