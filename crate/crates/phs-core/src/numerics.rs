//! Dense numerical kernels: nonsymmetric eigenvalues, symmetric tridiagonal
//! definiteness, and Lyapunov solves (Bartels–Stewart on the real Schur form).
//!
//! These are the only places the crate touches factorization internals; the
//! stability and LQ layers consume them through small, contract-checked
//! wrappers.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::Error;
use crate::Result;

/// Eigenvalues of a real square matrix with the spectral abscissa.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// All eigenvalues (count equals the matrix dimension).
    pub eigenvalues: Vec<Complex<f64>>,
    /// `max Re λ`.
    pub abscissa: f64,
}

/// QR iteration budget per matrix dimension.
const EIG_MAX_ITER_PER_DIM: usize = 100;

fn schur_of(a: &DMatrix<f64>) -> Result<Schur<f64, nalgebra::Dyn>> {
    let dim = a.nrows();
    let max_iter = EIG_MAX_ITER_PER_DIM * dim.max(1);
    Schur::try_new(a.clone(), f64::EPSILON, max_iter)
        .ok_or(Error::EigNoConvergence { dim, max_iter })
}

/// Eigenvalues via reduction to real Schur form (Hessenberg + shifted QR).
pub fn eig_general(a: &DMatrix<f64>) -> Result<Spectrum> {
    assert_eq!(a.nrows(), a.ncols(), "eig_general needs a square matrix");
    let schur = schur_of(a)?;
    let eigs = schur.complex_eigenvalues();
    let eigenvalues: Vec<Complex<f64>> = eigs.iter().map(|z| Complex::new(z.re, z.im)).collect();
    let abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum { eigenvalues, abscissa })
}

/// Worst backward error `min σ(A − λI)/‖A‖` over the spectrum (on-demand
/// verification; the eigensolver contract is `<= 1e-8`).
pub fn max_backward_error(a: &DMatrix<f64>, spectrum: &Spectrum) -> f64 {
    let m = a.nrows();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for lam in &spectrum.eigenvalues {
        let shifted = DMatrix::from_fn(m, m, |i, j| {
            let v = Complex::new(a[(i, j)], 0.0);
            if i == j {
                v - lam
            } else {
                v
            }
        });
        let sv = shifted.svd(false, false).singular_values;
        worst = worst.max(sv.min() / scale);
    }
    worst
}

/// Symmetric tridiagonal matrix stored as diagonal and off-diagonal.
#[derive(Clone, Debug)]
pub struct SymTridiag {
    /// Main diagonal, length `N`.
    pub diag: DVector<f64>,
    /// Off-diagonal, length `N − 1`.
    pub off: DVector<f64>,
}

impl SymTridiag {
    pub fn new(diag: DVector<f64>, off: DVector<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal must have length N-1");
        Self { diag, off }
    }

    /// Dense realization (for oracles and cross-checks).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut t = DMatrix::zeros(n, n);
        for k in 0..n {
            t[(k, k)] = self.diag[k];
            if k + 1 < n {
                t[(k, k + 1)] = self.off[k];
                t[(k + 1, k)] = self.off[k];
            }
        }
        t
    }

    /// Scale used for the borderline threshold (max absolute entry).
    fn norm_scale(&self) -> f64 {
        let d = self.diag.amax();
        let o = if self.off.is_empty() { 0.0 } else { self.off.amax() };
        d.max(o).max(f64::MIN_POSITIVE)
    }
}

/// Outcome of the leading-principal-minor positivity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    /// A pivot came within `1e-14·‖T‖` of zero: not certified positive.
    Borderline,
    NotPositiveDefinite,
}

impl Definiteness {
    /// True only for a certified positive-definite matrix.
    pub fn is_positive(self) -> bool {
        matches!(self, Definiteness::PositiveDefinite)
    }
}

/// Positive-definiteness of a symmetric tridiagonal matrix by the LDLᵀ pivot
/// recurrence `p_k = a_k − b_{k−1}²/p_{k−1}` (Sturm-type, O(N)).
pub fn tridiag_is_pd(t: &SymTridiag) -> Definiteness {
    let n = t.diag.len();
    let tol = 1e-14 * t.norm_scale();
    let mut pivot = t.diag[0];
    let mut verdict = Definiteness::PositiveDefinite;
    for k in 0..n {
        if k > 0 {
            pivot = t.diag[k] - t.off[k - 1] * t.off[k - 1] / pivot;
        }
        if pivot <= 0.0 {
            return Definiteness::NotPositiveDefinite;
        }
        if pivot <= tol {
            verdict = Definiteness::Borderline;
        }
    }
    verdict
}

/// Block sizes (1 or 2) of the diagonal of a real quasi-triangular matrix.
fn quasi_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let m = t.nrows();
    let tiny = 1e-300;
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < m {
        let size = if k + 1 < m && t[(k + 1, k)].abs() > tiny { 2 } else { 1 };
        blocks.push((k, size));
        k += size;
    }
    blocks
}

/// Solves the small Sylvester system `Pᵀ Y + Y R = C` for blocks of size ≤ 2
/// via the Kronecker form.
fn solve_small_sylvester(
    p: &DMatrix<f64>,
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let (bi, bj) = (c.nrows(), c.ncols());
    let mut k = DMatrix::zeros(bi * bj, bi * bj);
    // vec(PᵀY) = (I ⊗ Pᵀ)vec(Y); vec(Y R) = (Rᵀ ⊗ I)vec(Y); column-major vec.
    for col in 0..bj {
        for row in 0..bi {
            let eq = col * bi + row;
            for rr in 0..bi {
                k[(eq, col * bi + rr)] += p[(rr, row)];
            }
            for cc in 0..bj {
                k[(eq, cc * bi + row)] += r[(cc, col)];
            }
        }
    }
    let rhs = DVector::from_iterator(bi * bj, c.iter().copied());
    let sol = k.lu().solve(&rhs)?;
    Some(DMatrix::from_iterator(bi, bj, sol.iter().copied()))
}

/// Solves `Aᵀ X + X A + W = 0` for symmetric `W` and Hurwitz `A`
/// (Bartels–Stewart: real Schur reduction plus quasi-triangular block
/// substitution).
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    assert_eq!(a.ncols(), m, "A must be square");
    assert_eq!((w.nrows(), w.ncols()), (m, m), "W must match A");
    let schur = schur_of(a)?;
    let abscissa =
        schur.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }
    let (q, t) = schur.unpack();

    // TᵀY + YT = C with C = −QᵀWQ; then X = QYQᵀ.
    let c = -(q.transpose() * w * &q);
    let blocks = quasi_blocks(&t);
    let mut y = DMatrix::zeros(m, m);
    for &(j0, bj) in &blocks {
        for &(i0, bi) in &blocks {
            let mut rhs = c.view((i0, j0), (bi, bj)).clone_owned();
            // Contributions of already-solved block rows above (TᵀY term)...
            if i0 > 0 {
                let t_above = t.view((0, i0), (i0, bi));
                let y_above = y.view((0, j0), (i0, bj));
                rhs -= t_above.transpose() * y_above;
            }
            // ...and of block columns to the left (YT term).
            if j0 > 0 {
                let y_left = y.view((i0, 0), (bi, j0));
                let t_left = t.view((0, j0), (j0, bj));
                rhs -= y_left * t_left;
            }
            let t_ii = t.view((i0, i0), (bi, bi)).clone_owned();
            let t_jj = t.view((j0, j0), (bj, bj)).clone_owned();
            let y_ij = solve_small_sylvester(&t_ii, &t_jj, &rhs)
                .ok_or(Error::SingularMatrix { context: "Sylvester block" })?;
            y.view_mut((i0, j0), (bi, bj)).copy_from(&y_ij);
        }
    }
    let x = &q * y * q.transpose();
    Ok((&x + x.transpose()) * 0.5)
}

/// Residual norm `‖AᵀX + XA + W‖_F` of a Lyapunov solve.
pub fn lyapunov_residual(a: &DMatrix<f64>, w: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    (a.transpose() * x + x * a + w).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eig_rotation_and_diagonal_examples() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let s = eig_general(&rot).unwrap();
        assert!(s.abscissa.abs() < 1e-12);
        let mut ims: Vec<f64> = s.eigenvalues.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert_relative_eq!(ims[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(ims[1], 1.0, epsilon = 1e-12);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        assert_relative_eq!(eig_general(&d).unwrap().abscissa, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_sum_matches_trace_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let s = eig_general(&a).unwrap();
            let sum: Complex<f64> = s.eigenvalues.iter().sum();
            assert_relative_eq!(sum.re, a.trace(), max_relative = 1e-10);
            assert!(sum.im.abs() < 1e-10);
        }
    }

    #[test]
    fn eig_matches_hand_characteristic_polynomial() {
        // [[0, a], [-b, -c]] has λ² + cλ + ab = 0.
        let (a, b, c) = (2.0, 3.0, 0.4);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, a, -b, -c]);
        let s = eig_general(&m).unwrap();
        let disc = Complex::new(c * c - 4.0 * a * b, 0.0).sqrt();
        let lam1 = (Complex::new(-c, 0.0) + disc) / 2.0;
        for z in &s.eigenvalues {
            let p = z * z + c * z + a * b;
            assert!(p.norm() < 1e-10, "char poly residual {p}");
        }
        assert!(s.eigenvalues.iter().any(|z| (z - lam1).norm() < 1e-10));
    }

    #[test]
    fn backward_error_is_small_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(12, 12, |_, _| rng.gen_range(-1.0..1.0));
        let s = eig_general(&a).unwrap();
        assert!(max_backward_error(&a, &s) <= 1e-8);
    }

    #[test]
    fn tridiag_examples() {
        let eye = SymTridiag::new(DVector::from_element(4, 1.0), DVector::zeros(3));
        assert_eq!(tridiag_is_pd(&eye), Definiteness::PositiveDefinite);

        let singular =
            SymTridiag::new(DVector::from_element(2, 1.0), DVector::from_element(1, 1.0));
        assert_ne!(tridiag_is_pd(&singular), Definiteness::PositiveDefinite);

        // (1-c)Λ̃ − O for θ = [1,2,3], c = 0.99: diag (0.01, 0.02, 0.03),
        // off (0.5, 2); det of the leading 2x2 already negative.
        let c = 0.99;
        let t = SymTridiag::new(
            DVector::from_vec(vec![(1.0 - c) * 1.0, (1.0 - c) * 2.0, (1.0 - c) * 3.0]),
            DVector::from_vec(vec![0.5, 2.0]),
        );
        assert_eq!(tridiag_is_pd(&t), Definiteness::NotPositiveDefinite);
    }

    #[test]
    fn tridiag_agrees_with_dense_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..1000 {
            let n = rng.gen_range(2..9);
            let diag = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..2.0));
            let off = DVector::from_fn(n - 1, |_, _| rng.gen_range(-1.0..1.0));
            let t = SymTridiag::new(diag, off);
            let verdict = tridiag_is_pd(&t);
            if verdict == Definiteness::Borderline {
                continue; // deliberately unresolved by contract
            }
            let chol_ok = t.to_dense().cholesky().is_some();
            assert_eq!(verdict.is_positive(), chol_ok);
            checked += 1;
        }
        assert!(checked > 900);
    }

    #[test]
    fn lyapunov_scalar_and_diagonal_examples() {
        let x = solve_lyapunov(
            &DMatrix::from_element(1, 1, -1.0),
            &DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, epsilon = 1e-12);

        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let x = solve_lyapunov(&a, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(x[(1, 1)], 0.25, epsilon = 1e-12);
        assert!(x[(0, 1)].abs() < 1e-13);
    }

    #[test]
    fn lyapunov_residual_contract_on_random_stable_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(2..9);
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            // Shift to guarantee a Hurwitz matrix.
            let shift = eig_general(&a).unwrap().abscissa + 0.5;
            for k in 0..n {
                a[(k, k)] -= shift;
            }
            let w0 = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let w = &w0 + w0.transpose();
            let x = solve_lyapunov(&a, &w).unwrap();
            assert!((&x - x.transpose()).norm() <= 1e-12 * x.norm().max(1.0));
            let res = lyapunov_residual(&a, &w, &x);
            let budget = 1e-9 * (a.norm() * x.norm() + w.norm());
            assert!(res <= budget, "residual {res} > {budget}");
        }
    }

    #[test]
    fn lyapunov_rejects_non_hurwitz() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let err = solve_lyapunov(&a, &DMatrix::identity(1, 1)).unwrap_err();
        assert!(matches!(err, Error::NotHurwitz { .. }), "{err}");
    }

    #[test]
    fn lossless_mfem_spectrum_is_purely_imaginary() {
        use crate::assembly::assemble_mfem;
        use crate::model::{make_wave_preset, Mesh};
        let spec = make_wave_preset(1.0, 1.0, 0.0).unwrap();
        for n_elems in [4usize, 16] {
            let mesh = Mesh::for_spec(&spec, n_elems).unwrap();
            let model = assemble_mfem(&spec, &mesh).unwrap();
            let s = eig_general(&model.system_matrix().unwrap()).unwrap();
            let worst = s.eigenvalues.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-8, "N = {n_elems}: max |Re| = {worst}");
        }
    }
}
