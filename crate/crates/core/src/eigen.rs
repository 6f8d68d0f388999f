//! One- and two-excitation decay matrices and their eigendecompositions.

use crate::model::EmitterArray;
use crate::{Error, Result, C64};
use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

/// Eigenvalue pairs closer than this (in units of Γ) count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Residual bound for `M·P − P·D` (relative to `‖M‖_max`) and `P·P⁻¹ − I`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Bound on `‖P⁻¹‖_max` (columns of `P` are unit vectors) for a degenerate spectrum.
pub const CONDITION_LIMIT: f64 = 1e8;
/// Largest phase offset applied when lifting a degeneracy.
pub const PERTURBATION: f64 = 1e-9;

/// `M = P·diag(values)·P⁻¹`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub matrix: Mat<C64>,
    pub values: Vec<C64>,
    pub right_vectors: Mat<C64>,
    pub inverse_vectors: Mat<C64>,
    /// Smallest distance between two eigenvalues.
    pub min_gap: f64,
}

/// Two-excitation analogue; rows and columns follow `pair_index`.
#[derive(Clone, Debug)]
pub struct TwoExcEigenSystem {
    pub pair_index: Vec<(usize, usize)>,
    pub system: EigenSystem,
}

fn theta(x: f64) -> C64 {
    C64::from_polar(1.0, x.abs())
}

/// `M_ij = Γ·e^{i|φ_i − φ_j|}`.
pub fn one_excitation_matrix(phases: &[f64], gamma: f64) -> Mat<C64> {
    Mat::from_fn(phases.len(), phases.len(), |i, j| theta(phases[i] - phases[j]) * gamma)
}

/// Lexicographic list of pairs `(l, m)`, `l < m`, zero-based.
pub fn pair_index(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|l| (l + 1..n).map(move |m| (l, m))).collect()
}

/// Position of `(l, m)` (`l < m`) in [`pair_index`].
pub fn pair_position(n: usize, l: usize, m: usize) -> usize {
    debug_assert!(l < m && m < n);
    l * (2 * n - l - 1) / 2 + (m - l - 1)
}

/// `⟨lm|Γ̂|rs⟩ = Γ(θ_ls δ_mr + θ_lr δ_ms + θ_ms δ_lr + θ_mr δ_ls)`.
pub fn two_excitation_matrix(phases: &[f64], gamma: f64) -> (Mat<C64>, Vec<(usize, usize)>) {
    let pairs = pair_index(phases.len());
    let th = |a: usize, b: usize| theta(phases[a] - phases[b]);
    let m = Mat::from_fn(pairs.len(), pairs.len(), |a, b| {
        let (l, m) = pairs[a];
        let (r, s) = pairs[b];
        let mut v = C64::new(0.0, 0.0);
        if m == r {
            v += th(l, s);
        }
        if m == s {
            v += th(l, r);
        }
        if l == r {
            v += th(m, s);
        }
        if l == s {
            v += th(m, r);
        }
        v * gamma
    });
    (m, pairs)
}

fn max_abs(m: &Mat<C64>) -> f64 {
    let mut x = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            x = x.max(m[(i, j)].norm());
        }
    }
    x
}

/// Eigenvalues sorted by real part (ties by imaginary part), unit-norm eigenvectors,
/// `P⁻¹` by LU inversion, residuals checked.
///
/// Degenerate spectra are accepted when both residuals stay below [`RESIDUAL_TOL`]
/// and the eigenvectors are well conditioned.
pub fn diagonalize(matrix: &Mat<C64>) -> Result<EigenSystem> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::Diagonalization("matrix is not square".into()));
    }
    if n == 0 {
        return Ok(EigenSystem {
            matrix: matrix.clone(),
            values: Vec::new(),
            right_vectors: Mat::zeros(0, 0),
            inverse_vectors: Mat::zeros(0, 0),
            min_gap: f64::INFINITY,
        });
    }
    if (0..n).any(|j| (0..n).any(|i| !matrix[(i, j)].re.is_finite() || !matrix[(i, j)].im.is_finite())) {
        return Err(Error::Diagonalization("non-finite matrix entry".into()));
    }
    let evd = matrix
        .eigen()
        .map_err(|e| Error::Diagonalization(format!("{e:?}")))?;
    let u = evd.U();
    let s = evd.S();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re).then(s[a].im.total_cmp(&s[b].im)));
    let values: Vec<C64> = order.iter().map(|&k| s[k]).collect();
    let mut p = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    for j in 0..n {
        let nrm = (0..n).map(|i| p[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for i in 0..n {
                p[(i, j)] /= nrm;
            }
        }
    }
    let pinv = p.partial_piv_lu().inverse();

    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            min_gap = min_gap.min((values[a] - values[b]).norm());
        }
    }

    let scale = max_abs(matrix).max(f64::MIN_POSITIVE);
    let mp = matrix * &p;
    let res = Mat::from_fn(n, n, |i, j| mp[(i, j)] - p[(i, j)] * values[j]);
    let r1 = max_abs(&res) / scale;
    let mut id = &p * &pinv;
    for i in 0..n {
        id[(i, i)] -= 1.0;
    }
    let r2 = max_abs(&id);
    let ill = min_gap < DEGENERACY_TOL * scale && max_abs(&pinv) > CONDITION_LIMIT;
    if ill || !(r1 <= RESIDUAL_TOL && r2 <= RESIDUAL_TOL) {
        if min_gap < DEGENERACY_TOL * scale {
            return Err(Error::Degenerate { gap: min_gap });
        }
        return Err(Error::Diagonalization(format!(
            "residuals too large: eigen {r1:.2e}, inverse {r2:.2e}"
        )));
    }
    Ok(EigenSystem {
        matrix: matrix.clone(),
        values,
        right_vectors: p,
        inverse_vectors: pinv,
        min_gap,
    })
}

impl EigenSystem {
    pub fn new(phases: &[f64], gamma: f64) -> Result<Self> {
        diagonalize(&one_excitation_matrix(phases, gamma))
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `‖M·P − P·D‖_max / ‖M‖_max`.
    pub fn eigen_residual(&self) -> f64 {
        let n = self.dim();
        let mp = &self.matrix * &self.right_vectors;
        let res = Mat::from_fn(n, n, |i, j| mp[(i, j)] - self.right_vectors[(i, j)] * self.values[j]);
        max_abs(&res) / max_abs(&self.matrix)
    }

    /// `‖P·P⁻¹ − I‖_max`.
    pub fn inverse_residual(&self) -> f64 {
        let mut id = &self.right_vectors * &self.inverse_vectors;
        for i in 0..self.dim() {
            id[(i, i)] -= 1.0;
        }
        max_abs(&id)
    }

    /// `P·e^{−D t}·P⁻¹`.
    pub fn exp_neg(&self, t: f64) -> Mat<C64> {
        let n = self.dim();
        let scaled = Mat::from_fn(n, n, |i, j| self.right_vectors[(i, j)] * (-self.values[j] * t).exp());
        &scaled * &self.inverse_vectors
    }
}

impl TwoExcEigenSystem {
    pub fn new(phases: &[f64], gamma: f64) -> Result<Self> {
        let (m, pair_index) = two_excitation_matrix(phases, gamma);
        Ok(Self {
            pair_index,
            system: diagonalize(&m)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.pair_index.len()
    }
}

/// Both eigensystems of an array, plus the phase perturbation used to obtain them (if any).
#[derive(Clone, Debug)]
pub struct ArrayEigen {
    pub phases: Vec<f64>,
    pub one: EigenSystem,
    pub two: TwoExcEigenSystem,
    pub shift: Option<f64>,
}

fn perturbed(phases: &[f64]) -> Vec<f64> {
    // deterministic offsets in [−PERTURBATION, PERTURBATION] from a fixed counter
    phases
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let frac = ((k as f64 + 1.0) * 0.618_033_988_749_894_9).fract();
            x + PERTURBATION * (2.0 * frac - 1.0)
        })
        .collect()
}

/// Diagonalizes both excitation sectors; on a degeneracy failure retries once with
/// deterministically perturbed phases.
pub fn diagonalize_phases(phases: &[f64], gamma: f64) -> Result<ArrayEigen> {
    let attempt = |x: &[f64]| -> Result<(EigenSystem, TwoExcEigenSystem)> {
        Ok((EigenSystem::new(x, gamma)?, TwoExcEigenSystem::new(x, gamma)?))
    };
    match attempt(phases) {
        Ok((one, two)) => Ok(ArrayEigen {
            phases: phases.to_vec(),
            one,
            two,
            shift: None,
        }),
        Err(Error::Degenerate { .. }) => {
            let x = perturbed(phases);
            let (one, two) = attempt(&x)?;
            Ok(ArrayEigen {
                phases: x,
                one,
                two,
                shift: Some(PERTURBATION),
            })
        }
        Err(e) => Err(e),
    }
}

pub fn diagonalize_array(array: &EmitterArray) -> Result<ArrayEigen> {
    diagonalize_phases(array.phases(), array.gamma())
}
