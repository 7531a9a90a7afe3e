//! Dense complex operators and the spectral data of a system Hamiltonian.
//!
//! Every operator in the crate (Hamiltonians, coupling operators, jump
//! operators, density matrices) is a dense `D×D` complex matrix. Target
//! dimensions are small (the Hubbard sector has `D = 6`, oscillator
//! truncations a few dozen), so nothing here is sparse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex square matrix, indexed `(row, col)`.
pub type Operator = DMatrix<C64>;

/// Complex state vector.
pub type StateVector = DVector<C64>;

/// Tolerance for accepting an input as Hermitian, relative to `max(1, ‖A‖)`.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

pub fn zeros(dim: usize) -> Operator {
    Operator::zeros(dim, dim)
}

/// `|q⟩⟨k|`
pub fn ketbra(dim: usize, q: usize, k: usize) -> Operator {
    let mut m = zeros(dim);
    m[(q, k)] = c(1.0);
    m
}

pub fn dagger(a: &Operator) -> Operator {
    a.adjoint()
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

pub fn anticommutator(a: &Operator, b: &Operator) -> Operator {
    a * b + b * a
}

pub fn trace(a: &Operator) -> C64 {
    a.trace()
}

/// Squared Frobenius norm `tr(A A†) = Σ |A_ij|²`.
pub fn frobenius_norm_sq(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `tr(A B†)`, the Frobenius inner product.
pub fn frobenius_inner(a: &Operator, b: &Operator) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// `max_ij |A_ij − conj(A_ji)|`
pub fn hermiticity_residual(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A†)/2`
pub fn hermitize(a: &Operator) -> Operator {
    (a + a.adjoint()) * c(0.5)
}

pub fn max_abs_diff(a: &Operator, b: &Operator) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `‖A − B‖_F / max(‖B‖_F, floor)`
pub fn rel_residual(a: &Operator, b: &Operator, floor: f64) -> f64 {
    frobenius_norm_sq(&(a - b)).sqrt() / frobenius_norm_sq(b).sqrt().max(floor)
}

pub(crate) fn check_square(a: &Operator) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidParameter {
            name: "operator",
            reason: format!("expected a nonempty square matrix, got {}x{}", a.nrows(), a.ncols()),
        });
    }
    Ok(a.nrows())
}

pub(crate) fn check_same_dim(a: &Operator, b: &Operator) -> Result<usize> {
    let d = check_square(a)?;
    let e = check_square(b)?;
    if d != e {
        return Err(Error::DimensionMismatch { expected: d, got: e });
    }
    Ok(d)
}

pub fn check_hermitian(a: &Operator) -> Result<()> {
    let scale = frobenius_norm_sq(a).sqrt().max(1.0);
    let asym = hermiticity_residual(a);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

/// GKSL superoperator `𝒟(A)[ρ] = AρA† − ½{A†A, ρ}`.
pub fn gksl_dissipator(a: &Operator, rho: &Operator) -> Result<Operator> {
    check_same_dim(a, rho)?;
    Ok(gksl_apply(a, rho))
}

pub(crate) fn gksl_apply(a: &Operator, rho: &Operator) -> Operator {
    let ad = a.adjoint();
    let ada = &ad * a;
    a * rho * &ad - anticommutator(&ada, rho) * c(0.5)
}

/// Matrix of a linear superoperator in the column-stacking convention:
/// `vec(ρ)_{i + D j} = ρ_ij`.
pub fn superoperator_matrix<F>(dim: usize, mut f: F) -> Operator
where
    F: FnMut(&Operator) -> Operator,
{
    let n = dim * dim;
    let mut m = Operator::zeros(n, n);
    for j in 0..dim {
        for i in 0..dim {
            let out = f(&ketbra(dim, i, j));
            let col = i + dim * j;
            for b in 0..dim {
                for a in 0..dim {
                    m[(a + dim * b, col)] = out[(a, b)];
                }
            }
        }
    }
    m
}

pub fn vectorize(rho: &Operator) -> StateVector {
    StateVector::from_iterator(rho.len(), rho.iter().copied())
}

pub fn unvectorize(v: &StateVector, dim: usize) -> Operator {
    Operator::from_iterator(dim, dim, v.iter().copied())
}

/// Eigen-decomposition of a Hermitian system Hamiltonian together with the
/// level-splitting table `Δ_qk = E_q − E_k`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    energies: Vec<f64>,
    vectors: Operator,
    splittings: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Ascending eigenvalues.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Unitary matrix whose columns are the eigenvectors.
    pub fn vectors(&self) -> &Operator {
        &self.vectors
    }

    pub fn splittings(&self) -> &DMatrix<f64> {
        &self.splittings
    }

    pub fn splitting(&self, q: usize, k: usize) -> f64 {
        self.splittings[(q, k)]
    }

    /// Basis from given energies with the identity as eigenvector matrix, for
    /// Hamiltonians already diagonal.
    pub fn from_energies(energies: &[f64]) -> Self {
        let d = energies.len();
        Self::assemble(energies.to_vec(), identity(d))
    }

    fn assemble(energies: Vec<f64>, vectors: Operator) -> Self {
        let d = energies.len();
        let splittings = DMatrix::from_fn(d, d, |q, k| energies[q] - energies[k]);
        Self {
            energies,
            vectors,
            splittings,
        }
    }

    /// `V† A V`: lattice/computational basis → energy basis.
    pub fn to_energy_basis(&self, a: &Operator) -> Operator {
        self.vectors.adjoint() * a * &self.vectors
    }

    /// `V A V†`: energy basis → lattice/computational basis.
    pub fn from_energy_basis(&self, a: &Operator) -> Operator {
        &self.vectors * a * self.vectors.adjoint()
    }

    /// The Hamiltonian `diag(E)` in its own eigenbasis.
    pub fn diagonal_hamiltonian(&self) -> Operator {
        Operator::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.energies.iter().map(|&e| c(e)),
        ))
    }
}

/// Diagonalize a Hermitian operator.
///
/// Eigenvalues come out ascending. Each eigenvector is phase-fixed so that
/// its largest-modulus entry (first one on ties) is real and positive, and
/// eigenvectors inside a degenerate cluster are ordered lexicographically by
/// their entries, so the splitting table is reproducible run to run.
pub fn eigendecompose(h: &Operator) -> Result<SpectralBasis> {
    let d = check_square(h)?;
    check_hermitian(h)?;
    let eig = SymmetricEigen::new(hermitize(h));

    let mut cols: Vec<(f64, StateVector)> = (0..d)
        .map(|j| {
            let mut v = eig.eigenvectors.column(j).into_owned();
            fix_phase(&mut v);
            (eig.eigenvalues[j], v)
        })
        .collect();

    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let tol = 1e-10 * scale;
    cols.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Re-sort inside degenerate clusters by eigenvector entries.
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && cols[end].0 - cols[end - 1].0 <= tol {
            end += 1;
        }
        if end - start > 1 {
            cols[start..end].sort_by(|a, b| lex_cmp(&a.1, &b.1));
        }
        start = end;
    }

    let energies: Vec<f64> = cols.iter().map(|(e, _)| *e).collect();
    let mut vectors = zeros(d);
    for (j, (_, v)) in cols.iter().enumerate() {
        vectors.set_column(j, v);
    }
    Ok(SpectralBasis::assemble(energies, vectors))
}

fn fix_phase(v: &mut StateVector) {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    let phase = v[pivot] / v[pivot].norm();
    *v *= phase.conj();
    v[pivot] = c(v[pivot].re);
}

fn lex_cmp(a: &StateVector, b: &StateVector) -> std::cmp::Ordering {
    const EPS: f64 = 1e-9;
    for (x, y) in a.iter().zip(b.iter()) {
        for (p, q) in [(x.re, y.re), (x.im, y.im)] {
            if (p - q).abs() > EPS {
                // Larger entries first.
                return q.total_cmp(&p);
            }
        }
    }
    std::cmp::Ordering::Equal
}

/// Truncated bosonic ladder operators `(a, a†)` on `D` Fock levels:
/// `a_{n,n+1} = √(n+1)`.
pub fn truncated_boson_ops(dim: usize) -> Result<(Operator, Operator)> {
    if dim < 2 {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: format!("boson truncation needs at least 2 levels, got {dim}"),
        });
    }
    let mut a = zeros(dim);
    for n in 0..dim - 1 {
        a[(n, n + 1)] = c(((n + 1) as f64).sqrt());
    }
    let ad = a.adjoint();
    Ok((a, ad))
}
