//! Independent verification suite.
//!
//! Every load-bearing algebraic identity behind the scheme — basis-function
//! inner products, Kronecker commutation identities, the `W̄` norm bound, the
//! tridiagonal inner-product identities and the multiplier rate formula — is
//! checked here against a brute-force oracle: composite Simpson quadrature
//! for integrals, dense matrix arithmetic for identities, and random sampling
//! for inequalities. The oracles deliberately share no code with the
//! assembly paths they validate (quadrature excepted, which is pinned in
//! [`crate::quad`]).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_mfem, build_primitives, DiscreteModel};
use crate::model::Mesh;
use crate::quad::simpson;
use crate::Result;

/// Outcome of one verification check.
#[derive(Clone, Debug)]
pub struct CheckReport {
    /// Stable identifier, e.g. `basis-inner-products`.
    pub check_id: &'static str,
    /// Human-readable parameter summary (sizes, trials, seed).
    pub params: String,
    /// Worst error observed (absolute or relative, per check).
    pub worst_error: f64,
    /// Tolerance the worst error is held against.
    pub tol: f64,
    /// Verdict.
    pub passed: bool,
}

impl CheckReport {
    fn new(check_id: &'static str, params: String, worst_error: f64, tol: f64) -> Self {
        let passed = worst_error <= tol;
        Self { check_id, params, worst_error, tol, passed }
    }
}

/// Simpson panels per mesh cell for basis-function integrals (kinks of the
/// integrands sit on cell boundaries, so per-cell panels keep the rule
/// high-order; the total across the domain stays ≥ 10⁴).
fn panels_per_cell(n_elems: usize) -> usize {
    (10_000 / n_elems + 2).next_multiple_of(2)
}

/// Hat function `ψ_k` on the uniform `N`-cell mesh of `[0, 1]`.
fn psi(k: usize, n: usize, x: f64) -> f64 {
    let h = 1.0 / n as f64;
    let xk = k as f64 * h;
    if x < xk - h || x > xk + h {
        0.0
    } else if x < xk {
        (x - (xk - h)) / h
    } else {
        ((xk + h) - x) / h
    }
}

/// Derivative `ψ′_k` (piecewise constant; value at kinks is irrelevant for
/// the integrals).
fn dpsi(k: usize, n: usize, x: f64) -> f64 {
    let h = 1.0 / n as f64;
    let xk = k as f64 * h;
    if x < xk - h || x > xk + h {
        0.0
    } else if x < xk {
        1.0 / h
    } else {
        -1.0 / h
    }
}

/// Indicator test function `ω_k = 1/h` on `[x_{k−1}, x_k)`, `k ∈ 1..N`.
fn omega(k: usize, n: usize, x: f64) -> f64 {
    let h = 1.0 / n as f64;
    if x >= (k - 1) as f64 * h && x < k as f64 * h {
        1.0 / h
    } else {
        0.0
    }
}

/// Integrates `f` over `[0, 1]` cell by cell so integrand kinks align with
/// panel boundaries. Quadrature nodes are nudged into the cell interior so
/// the half-open indicators `ω_k` take their interior value at cell
/// boundaries (the integral is insensitive to values on a null set, but
/// Simpson samples the boundary points directly).
fn integrate_cells<F: Fn(f64) -> f64>(f: F, n_elems: usize) -> f64 {
    let h = 1.0 / n_elems as f64;
    let panels = panels_per_cell(n_elems);
    (0..n_elems)
        .map(|c| {
            let (a, b) = (c as f64 * h, (c + 1) as f64 * h);
            let eps = h * 1e-9;
            simpson(|x| f(x.clamp(a + eps, b - eps)), a, b, panels)
        })
        .sum()
}

/// Basis-function identities (a)–(e): pointwise product collapses and the
/// inner-product tables for `ψ_k`, `ψ′_k` and the modulated hats
/// `ν_k = (Σ_l a_l h ω_l)ψ_k` with random coefficients `a_l`.
pub fn check_basis_identities(n_elems: usize, seed: u64) -> CheckReport {
    assert!(n_elems >= 3, "need at least 3 cells");
    let n = n_elems;
    let h = 1.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..=n + 1).map(|_| rng.gen_range(-2.0..2.0)).collect(); // a[1..=n] used
    let mut worst: f64 = 0.0;

    // (a) pointwise on a dense grid: hω_iω_j = ω_iδ_ij and hω_iψ_N = ψ_Nδ_iN.
    let grid_points = 100_000;
    for g in 0..grid_points {
        let x = (g as f64 + 0.5) / grid_points as f64;
        for i in 1..=n {
            for j in [i.saturating_sub(1).max(1), i, (i + 1).min(n)] {
                let lhs = h * omega(i, n, x) * omega(j, n, x);
                let rhs = if i == j { omega(i, n, x) } else { 0.0 };
                worst = worst.max((lhs - rhs).abs());
            }
            let lhs = h * omega(i, n, x) * psi(n, n, x);
            let rhs = if i == n { psi(n, n, x) } else { 0.0 };
            worst = worst.max((lhs - rhs).abs());
        }
    }

    for j in 1..=n {
        // (b) ⟨ω_j, ψ_k⟩ = ½ iff j ∈ {k, k+1}; (c) ⟨ω_j, ψ′_k⟩ = ±1/h.
        for k in 0..=n {
            let ip = integrate_cells(|x| omega(j, n, x) * psi(k, n, x), n);
            let expect_b = if j == k || j == k + 1 { 0.5 } else { 0.0 };
            worst = worst.max((ip - expect_b).abs());

            let ipd = integrate_cells(|x| omega(j, n, x) * dpsi(k, n, x), n);
            let expect_c = if j == k {
                1.0 / h
            } else if j == k + 1 {
                -1.0 / h
            } else {
                0.0
            };
            worst = worst.max((ipd - expect_c).abs() * h); // scale-free
        }
        // (d) ⟨ω_j, ν_k⟩ = a_j/2 iff j ∈ {k, k+1}; (e) ⟨ω_j, ν′_k⟩ = ±a_k/h.
        for k in 1..n {
            let nu = |x: f64| {
                let modulator: f64 =
                    (1..=n).map(|l| a[l] * h * omega(l, n, x)).sum();
                modulator * psi(k, n, x)
            };
            let ip = integrate_cells(|x| omega(j, n, x) * nu(x), n);
            let expect_d = if j == k || j == k + 1 { a[j] / 2.0 } else { 0.0 };
            worst = worst.max((ip - expect_d).abs());

            // ν′_k contains Dirac terms; use the distributional reduction
            // ⟨ω_j, ν′_k⟩ = (a_{k+1}−a_k)·ω_j(x_k)
            //             + ⟨ω_j·(a_k h ω_k + a_{k+1} h ω_{k+1}), ψ′_k⟩,
            // whose second term is an ordinary integral.
            let point_term = (a[k + 1] - a[k]) * omega(j, n, k as f64 * h);
            let smooth_term = integrate_cells(
                |x| {
                    omega(j, n, x)
                        * (a[k] * h * omega(k, n, x) + a[k + 1] * h * omega(k + 1, n, x))
                        * dpsi(k, n, x)
                },
                n,
            );
            let ip_e = point_term + smooth_term;
            let expect_e = if j == k {
                a[k] / h
            } else if j == k + 1 {
                -a[k] / h
            } else {
                0.0
            };
            worst = worst.max((ip_e - expect_e).abs() * h);
        }
    }
    CheckReport::new(
        "basis-inner-products",
        format!("N={n_elems}, seed={seed}, panels/cell={}", panels_per_cell(n_elems)),
        worst,
        1e-8,
    )
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Kronecker commutation identities B1–B7 plus the boundary-matrix
/// factorizations `B̄₁ = (I⊗t_r)(A⁻ᵀK/2)(I⊗t_rᵀ)` and
/// `B̄₂ = (I⊗t_r)K(I⊗t_rᵀ)`.
pub fn check_matrix_identities(n: usize, n_elems: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    // Diagonal dominance keeps A safely invertible.
    for i in 0..n {
        a[(i, i)] += 3.0;
    }
    let k_diag = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.1..2.0)));
    let prim = build_primitives(n_elems)?;
    let eye_n = DMatrix::<f64>::identity(n, n);
    let a_bar = a.kronecker(&DMatrix::identity(n_elems, n_elems));
    let d_bar = eye_n.kronecker(&prim.d);
    let m_bar = eye_n.kronecker(&prim.m);
    let m_bar_inv = m_bar.clone().try_inverse().expect("M is unit upper triangular");
    let a_bar_inv_t =
        a_bar.transpose().try_inverse().expect("A is diagonally dominant");

    let mut worst: f64 = 0.0;
    // B1: M̄ᵀD̄ = D̄M̄ᵀ.
    worst = worst.max(rel_err(&(m_bar.transpose() * &d_bar), &(&d_bar * m_bar.transpose())));
    // B2: M̄⁻¹D̄ᵀ = D̄ᵀM̄⁻¹.
    worst =
        worst.max(rel_err(&(&m_bar_inv * d_bar.transpose()), &(d_bar.transpose() * &m_bar_inv)));
    // B3: ½D̄ᵀ + M̄ = I.
    worst = worst.max(rel_err(
        &(d_bar.transpose() * 0.5 + &m_bar),
        &DMatrix::identity(n * n_elems, n * n_elems),
    ));
    // B4: Ā⁻ᵀM̄⁻¹ = M̄⁻¹Ā⁻ᵀ.
    worst = worst.max(rel_err(&(&a_bar_inv_t * &m_bar_inv), &(&m_bar_inv * &a_bar_inv_t)));
    // B5: ĀD̄ = D̄Ā.
    worst = worst.max(rel_err(&(&a_bar * &d_bar), &(&d_bar * &a_bar)));
    // B6: ĀᵀM̄⁻¹ = M̄⁻¹Āᵀ.
    worst =
        worst.max(rel_err(&(a_bar.transpose() * &m_bar_inv), &(&m_bar_inv * a_bar.transpose())));
    // B7: ĀᵀD̄ᵀM̄⁻¹ = M̄⁻¹D̄ᵀĀᵀ.
    worst = worst.max(rel_err(
        &(a_bar.transpose() * d_bar.transpose() * &m_bar_inv),
        &(&m_bar_inv * d_bar.transpose() * a_bar.transpose()),
    ));
    // Boundary factorizations.
    let i_tr = eye_n.kronecker(&DMatrix::from_column_slice(n_elems, 1, prim.t_r.as_slice()));
    let b2_bar = k_diag.kronecker(&(&prim.t_r * prim.t_r.transpose()));
    let b2_alt = &i_tr * &k_diag * i_tr.transpose();
    worst = worst.max(rel_err(&b2_alt, &b2_bar));
    let a_inv_t = a.transpose().try_inverse().unwrap();
    let b1_bar = (&a_inv_t * &k_diag * 0.5).kronecker(&(&prim.t_r * prim.t_r.transpose()));
    let b1_alt = &i_tr * (&a_inv_t * &k_diag * 0.5) * i_tr.transpose();
    worst = worst.max(rel_err(&b1_alt, &b1_bar));

    Ok(CheckReport::new(
        "matrix-identities-B1-B7",
        format!("n={n}, N={n_elems}, seed={seed}"),
        worst,
        1e-12,
    ))
}

/// `W̄` norm bound `‖W̄g‖² = ‖W̄ᵀg‖² ≤ ℓ²‖g‖²` on random trials, and the
/// block eigenvalue identity `max eig([[0,Ā],[Āᵀ,0]]⁻²) = max eig(P₁⁻²)`.
pub fn check_w_bound(n: usize, n_elems: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    for i in 0..n {
        a[(i, i)] += 3.0;
    }
    let prim = build_primitives(n_elems)?;
    let h = 1.0 / n_elems as f64;
    let ell = 1.0; // unit domain: ℓ = N·h
    let eye_n = DMatrix::<f64>::identity(n, n);
    // W̄ = −h·D̄⁻ᵀC̄ᵀM̄ with the exact inverse of D (lower triangle of ones).
    let d_inv_t = DMatrix::from_fn(n_elems, n_elems, |i, j| if j >= i { 1.0 } else { 0.0 });
    let w_small = -(&d_inv_t * prim.c.transpose() * &prim.m) * h;
    let w_bar = eye_n.kronecker(&w_small);

    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let g = DVector::from_fn(n * n_elems, |_, _| rng.gen_range(-1.0..1.0));
        let wg = (&w_bar * &g).norm_squared();
        let wtg = (w_bar.transpose() * &g).norm_squared();
        let gg = g.norm_squared().max(f64::MIN_POSITIVE);
        worst = worst.max((wg - wtg).abs() / gg); // norm equality, relative
        worst = worst.max((wg / (ell * ell * gg) - 1.0).max(0.0)); // bound
    }

    // Eigenvalue identity: both block matrices are symmetric with spectrum
    // ±σ(A), so compare the largest eigenvalue of the inverse squares.
    let mut big = DMatrix::zeros(2 * n * n_elems, 2 * n * n_elems);
    let a_bar = a.kronecker(&DMatrix::identity(n_elems, n_elems));
    big.view_mut((0, n * n_elems), (n * n_elems, n * n_elems)).copy_from(&a_bar);
    big.view_mut((n * n_elems, 0), (n * n_elems, n * n_elems))
        .copy_from(&a_bar.transpose());
    let mut p1 = DMatrix::zeros(2 * n, 2 * n);
    p1.view_mut((0, n), (n, n)).copy_from(&a);
    p1.view_mut((n, 0), (n, n)).copy_from(&a.transpose());
    let max_inv_sq = |m: DMatrix<f64>| {
        let eigs = m.symmetric_eigen().eigenvalues;
        eigs.iter().map(|l| 1.0 / (l * l)).fold(0.0_f64, f64::max)
    };
    let lhs = max_inv_sq(big);
    let rhs = max_inv_sq(p1);
    worst = worst.max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE));

    Ok(CheckReport::new(
        "w-bound-and-p1-eigs",
        format!("n={n}, N={n_elems}, trials={trials}, seed={seed}"),
        worst,
        1e-10,
    ))
}

/// Inner-product identities on the tridiagonal comparison matrix: the exact
/// identity (both sides to 10⁻¹² relative) and the inequality (sampled, no
/// violations allowed).
pub fn check_inner_identities(n_elems: usize, seed: u64) -> Result<CheckReport> {
    let n = n_elems;
    let h = 1.0 / n as f64;
    let ell = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prim = build_primitives(n)?;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let theta = DVector::from_fn(n, |_, _| rng.gen_range(0.2..3.0));
        let f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let lam = DMatrix::from_diagonal(&theta);
        let lam_inv = DMatrix::from_diagonal(&theta.map(|t| 1.0 / t));
        let o = crate::assembly::build_o(&theta)?;
        let trt = &prim.t_r * prim.t_r.transpose();

        // Exact identity:
        // −(1/h)⟨DᵀΛ̃Df, Cf⟩ = −(1/2h)fᵀDᵀ(Λ̃−O)Df − (Nθ_N/2h)fᵀDᵀt_rt_rᵀDf.
        let lhs2 = -(1.0 / h) * (prim.d.transpose() * &lam * &prim.d * &f).dot(&(&prim.c * &f));
        let df = &prim.d * &f;
        let term_a = -(0.5 / h) * df.dot(&((&lam - &o) * &df));
        let term_b = -(n as f64 * theta[n - 1] / (2.0 * h)) * df.dot(&(&trt * &df));
        let rhs2 = term_a + term_b;
        // Both sides can nearly cancel, so measure the error against the
        // magnitude of the constituent terms (a backward-error scale).
        let scale2 = lhs2.abs().max(term_a.abs() + term_b.abs()).max(1e-6);
        worst = worst.max((lhs2 - rhs2).abs() / scale2);

        // Inequality:
        // h⟨MΛ̃⁻¹Mᵀf, Cf⟩ ≤ −(h/2)fᵀMΛ̃⁻¹(Λ̃−O)Λ̃⁻¹Mᵀf + (ℓ/(2θ_N))fᵀt_rt_rᵀf.
        let mtf = prim.m.transpose() * &f;
        let lhs1 = h * (&prim.m * &lam_inv * &mtf).dot(&(&prim.c * &f));
        let rhs1 = -(h / 2.0) * mtf.dot(&(&lam_inv * (&lam - &o) * &lam_inv * &mtf))
            + (ell / (2.0 * theta[n - 1])) * f.dot(&(&trt * &f));
        let scale = lhs1.abs().max(rhs1.abs()).max(1e-6);
        worst = worst.max((lhs1 - rhs1) / scale); // positive only on violation
    }
    Ok(CheckReport::new(
        "inner-product-identities",
        format!("N={n_elems}, trials=10000, seed={seed}"),
        worst,
        1e-12,
    ))
}

/// Multiplier rate formula: on random free states, `V̇_ε` computed by the
/// chain rule through the semi-discrete dynamics must match the closed-form
/// expression in the transformed variables
/// `[D̄/h·u; Λ̄_p⁻¹M̄ᵀ·v] = S_d·e`:
/// `V̇_ε = h⟨M̄Λ̄_p⁻¹M̄ᵀv, C̄v⟩ − (1/h)⟨D̄ᵀΛ̄_qD̄u, C̄u⟩ − 2⟨C̄u, B̄₁v⟩`.
pub fn check_dve_formula(model: &DiscreteModel, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nn = model.dof.n * model.dof.n_elems;
    let h = model.mesh.h();
    let g = model.multiplier_matrix()?;
    let f_mat = model.f_matrix();
    let gl = &model.globals;
    let lam_q = DMatrix::from_diagonal(&gl.lambda_q);
    let lam_p_inv = DMatrix::from_diagonal(&gl.lambda_p.map(|v| 1.0 / v));
    let d_lu = gl.d_bar.clone().lu();
    let mt_lu = gl.m_bar.transpose().lu();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let e = DVector::from_fn(2 * nn, |_, _| rng.gen_range(-1.0..1.0));
        let y = &model.s_d * &e;
        let y_q = y.rows(0, nn).clone_owned();
        let y_p = y.rows(nn, nn).clone_owned();
        // Invert the transformation: u = h·D̄⁻¹y_q, v = M̄⁻ᵀΛ̄_p y_p.
        let u = d_lu.solve(&(&y_q * h)).expect("D is unit lower bidiagonal");
        let v = mt_lu
            .solve(&DVector::from_fn(nn, |i, _| gl.lambda_p[i] * y_p[i]))
            .expect("M is unit upper triangular");

        // Chain rule: V_ε = −(h/2)(S_d e)ᵀG(S_d e), ė from the free dynamics.
        let e_dot_rhs = &f_mat * &e;
        let e_dot = model
            .s_d
            .clone()
            .lu()
            .solve(&e_dot_rhs)
            .expect("S_d is invertible by assembly");
        let chain = -h * (&model.s_d * &e_dot).dot(&(&g * &y));

        let term1 = h * (&gl.m_bar * &lam_p_inv * gl.m_bar.transpose() * &v)
            .dot(&(&gl.c_bar * &v));
        let term2 = (1.0 / h)
            * (gl.d_bar.transpose() * &lam_q * &gl.d_bar * &u).dot(&(&gl.c_bar * &u));
        let term3 = 2.0 * (&gl.c_bar * &u).dot(&(&gl.b1_bar * &v));
        let formula = term1 - term2 - term3;
        worst = worst.max((chain - formula).abs() / formula.abs().max(1e-8));
    }
    Ok(CheckReport::new(
        "dVe-rate-formula",
        format!(
            "n={}, N={}, seed={seed}, trials=20",
            model.dof.n, model.dof.n_elems
        ),
        worst,
        1e-9,
    ))
}

/// Runs the whole suite at the default sizes. Deterministic under `seed`.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>> {
    let mut reports = vec![
        check_basis_identities(16, seed),
        check_matrix_identities(3, 5, seed.wrapping_add(1))?,
        check_w_bound(2, 32, 10_000, seed.wrapping_add(2))?,
        check_inner_identities(17, seed.wrapping_add(3))?,
    ];
    let wave = crate::model::make_wave_preset(1.0, 1.0, 0.5)?;
    let mesh = Mesh::for_spec(&wave, 8)?;
    reports.push(check_dve_formula(&assemble_mfem(&wave, &mesh)?, seed.wrapping_add(4))?);
    let piezo = crate::model::make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 0.8, 0.3)?;
    let mesh = Mesh::for_spec(&piezo, 8)?;
    reports.push(check_dve_formula(&assemble_mfem(&piezo, &mesh)?, seed.wrapping_add(5))?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_identities_hold() {
        let r = check_basis_identities(8, 42);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn matrix_identities_hold() {
        let r = check_matrix_identities(3, 5, 1).unwrap();
        assert!(r.passed, "{r:?}");
        let r = check_matrix_identities(1, 4, 2).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn w_bound_holds() {
        let r = check_w_bound(2, 16, 2000, 3).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn inner_identities_hold() {
        let r = check_inner_identities(9, 4).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn dve_formula_matches_chain_rule() {
        let wave = crate::model::make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&wave, 8).unwrap();
        let model = assemble_mfem(&wave, &mesh).unwrap();
        let r = check_dve_formula(&model, 7).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn suite_is_deterministic_under_seed() {
        let a = run_all(11).unwrap();
        let b = run_all(11).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.check_id, y.check_id);
            assert_eq!(x.worst_error.to_bits(), y.worst_error.to_bits());
            assert!(x.passed, "{x:?}");
        }
    }
}
