//! Matrix assembly: primitive element matrices, Kronecker-structured global
//! matrices, the mixed finite-element (MFEM) model and a standard Galerkin
//! FEM comparator.
//!
//! ## MFEM discretization
//!
//! The scheme combines piecewise-linear bases `ψ_k` with piecewise-constant
//! test functions `ω_k` on a uniform mesh. After eliminating the boundary
//! conditions (`e^p_{i,0} = 0`, `Aᵀe^q(x_r) = −K e^p(x_r)`), the semi-discrete
//! model is the descriptor system
//!
//! ```text
//! S_d ė = (J_d − R_d) Q_d e + B_d u,    H_d = ½⟨S_d e, Q_d e⟩,
//! ```
//!
//! with `J_d` skew-symmetric and `R_d ⪰ 0` carrying only the boundary
//! dissipation — the structure that makes the discrete energy balance exact
//! and the decay rate uniform in the mesh size.
//!
//! ## DOF layout
//!
//! States stack as `[e^q; e^p]`. For variable `i ∈ 0..n`: `e^q_i` holds nodes
//! `x_0..x_{N−1}` at rows `i·N..(i+1)·N`, and `e^p_i` holds nodes `x_1..x_N`
//! at rows `nN + i·N..nN + (i+1)·N`. The missing endpoints are exactly the
//! eliminated boundary values.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::model::{sample_params, Mesh, SystemSpec};
use crate::quad::simpson;
use crate::Result;

/// Subintervals per mesh cell used by the input-map quadrature.
pub const INPUT_QUAD_PANELS: usize = 64;

/// Element-level matrices shared by every variable.
///
/// `L` is the subdiagonal shift, `D = I − L`, `M = ½(I + Lᵀ)`,
/// `t_r = (0,…,0,1)ᵀ`, and `C` is the tridiagonal multiplier matrix
/// (first row `(0, 1, 0, …)`, row `j` of `2C` equal to `(−j, 0, j)` on the
/// off-diagonals for `2 ≤ j ≤ N−1`, last row ending `(−2N, 2N)`).
#[derive(Clone, Debug)]
pub struct PrimitiveMatrices {
    pub l: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub t_r: DVector<f64>,
}

/// Builds the primitive matrices for `N >= 2` elements.
///
/// All entries are halves of integers, so the construction is exact in
/// floating point.
pub fn build_primitives(n_elems: usize) -> Result<PrimitiveMatrices> {
    if n_elems < 2 {
        return Err(Error::Assembly(format!("need N >= 2 elements, got {n_elems}")));
    }
    let n = n_elems;
    let mut l = DMatrix::zeros(n, n);
    for j in 1..n {
        l[(j, j - 1)] = 1.0;
    }
    let d = DMatrix::identity(n, n) - &l;
    let m = (DMatrix::identity(n, n) + l.transpose()) * 0.5;
    let mut c = DMatrix::zeros(n, n);
    c[(0, 1)] = 0.5;
    for row in 2..n {
        // 1-based row index `row` in 2..N-1 has entries ∓row/2 beside the diagonal.
        c[(row - 1, row - 2)] = -(row as f64) / 2.0;
        c[(row - 1, row)] = row as f64 / 2.0;
    }
    c[(n - 1, n - 2)] = -(n as f64);
    c[(n - 1, n - 1)] = n as f64;
    let mut t_r = DVector::zeros(n);
    t_r[n - 1] = 1.0;
    Ok(PrimitiveMatrices { l, m, d, c, t_r })
}

/// Symmetric tridiagonal matrix `O` with zero diagonal and off-diagonal
/// entries `O_{k,k+1} = k(θ_{k+1} − θ_k)/2` (1-based `k`).
pub fn build_o(theta_samples: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = theta_samples.len();
    if n < 2 {
        return Err(Error::Assembly(format!("build_o needs at least 2 samples, got {n}")));
    }
    let mut o = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        let v = (k + 1) as f64 * (theta_samples[k + 1] - theta_samples[k]) / 2.0;
        o[(k, k + 1)] = v;
        o[(k + 1, k)] = v;
    }
    Ok(o)
}

/// Global Kronecker-structured matrices for one `(spec, mesh)` pair.
#[derive(Clone, Debug)]
pub struct GlobalMatrices {
    /// `Ā = A ⊗ I_N`.
    pub a_bar: DMatrix<f64>,
    /// `D̄ = I_n ⊗ D`.
    pub d_bar: DMatrix<f64>,
    /// `M̄ = I_n ⊗ M`.
    pub m_bar: DMatrix<f64>,
    /// `C̄ = I_n ⊗ C`.
    pub c_bar: DMatrix<f64>,
    /// `W̄ = −h·D̄⁻ᵀ C̄ᵀ M̄`.
    pub w_bar: DMatrix<f64>,
    /// `B̄₁ = ½ Ā⁻ᵀ B̄₂ = ½ (A⁻ᵀK) ⊗ t_r t_rᵀ`.
    pub b1_bar: DMatrix<f64>,
    /// `B̄₂ = K ⊗ t_r t_rᵀ`.
    pub b2_bar: DMatrix<f64>,
    /// Diagonal of `Λ̄_q = blockdiag(Λ_{q1}, …, Λ_{qn})`.
    pub lambda_q: DVector<f64>,
    /// Diagonal of `Λ̄_p`.
    pub lambda_p: DVector<f64>,
    /// Input quadrature `B̄_q` (`nN × l`).
    pub b_q_bar: DMatrix<f64>,
    /// Input quadrature `B̄_p` (`nN × l`).
    pub b_p_bar: DMatrix<f64>,
}

/// Explicit inverse of `D = I − L`: the lower triangle of ones.
///
/// Using the exact inverse avoids a factorization; `D̄⁻ᵀ` is its transpose
/// tensored with `I_n`.
fn d_inverse(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i >= j { 1.0 } else { 0.0 })
}

/// Quadrature of the input maps against the test functions:
/// entry `(j, k)` of each per-variable block is `(1/h)∫_{cell j} [B_z]_{i,k}`.
///
/// Returns the stacked `(B̄_q, B̄_p)`, each `nN × l`.
pub fn input_quadrature(spec: &SystemSpec, mesh: &Mesh) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = spec.n;
    let n_elems = mesh.n_elems();
    let l = spec.input_dim;
    let h = mesh.h();
    let quad = |bmap: &crate::model::ProfileMatrix| -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(n * n_elems, l);
        for i in 0..n {
            for col in 0..l {
                for j in 0..n_elems {
                    let (a, b) = (mesh.node(j), mesh.node(j + 1));
                    let val = simpson(|x| bmap.entry(i, col, x), a, b, INPUT_QUAD_PANELS) / h;
                    if !val.is_finite() {
                        return Err(Error::NonFiniteIntegrand { cell: j + 1, x: 0.5 * (a + b) });
                    }
                    out[(i * n_elems + j, col)] = val;
                }
            }
        }
        Ok(out)
    };
    Ok((quad(&spec.b_q)?, quad(&spec.b_p)?))
}

/// Maps `(variable family, variable index, node index)` to global rows.
#[derive(Clone, Copy, Debug)]
pub struct DofLayout {
    pub n: usize,
    pub n_elems: usize,
}

impl DofLayout {
    /// Row of `e^q_{i,k}` for `i ∈ 0..n`, node `k ∈ 0..N−1`.
    pub fn q_index(&self, i: usize, k: usize) -> usize {
        debug_assert!(k < self.n_elems);
        i * self.n_elems + k
    }

    /// Row of `e^p_{i,k}` for `i ∈ 0..n`, node `k ∈ 1..=N`.
    pub fn p_index(&self, i: usize, k: usize) -> usize {
        debug_assert!((1..=self.n_elems).contains(&k));
        self.n * self.n_elems + i * self.n_elems + (k - 1)
    }

    /// Total state dimension `2nN`.
    pub fn dim(&self) -> usize {
        2 * self.n * self.n_elems
    }

    /// Human-readable description of the layout.
    pub fn description(&self) -> String {
        format!(
            "states [e^q; e^p], n = {n}, N = {ne}: e^q_i at rows i*N..(i+1)*N \
             holding nodes x_0..x_(N-1); e^p_i at rows nN + i*N.. holding nodes \
             x_1..x_N (boundary values e^p_(i,0) and e^q_(i,N) eliminated)",
            n = self.n,
            ne = self.n_elems
        )
    }
}

/// The assembled mixed finite-element model.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    pub spec: SystemSpec,
    pub mesh: Mesh,
    pub globals: GlobalMatrices,
    pub dof: DofLayout,
    /// Descriptor matrix `S_d = blockdiag(Λ̄_q⁻¹, Λ̄_p⁻¹)·[[M̄, −B̄₁], [0, M̄ᵀ]]`.
    pub s_d: DMatrix<f64>,
    /// Weight matrix `Q_d = h·[[M̄, −B̄₁], [0, M̄ᵀ]]`.
    pub q_d: DMatrix<f64>,
    /// Skew interconnection `J_d`.
    pub j_d: DMatrix<f64>,
    /// PSD dissipation `R_d` (boundary block only).
    pub r_d: DMatrix<f64>,
    /// Input matrix `B_d = [B̄_q; B̄_p]`.
    pub b_d: DMatrix<f64>,
    /// 2-norm condition estimate of `S_d`, logged per assembly.
    pub s_cond: f64,
}

impl DiscreteModel {
    /// State dimension `2nN`.
    pub fn dim(&self) -> usize {
        self.dof.dim()
    }

    /// Right-hand-side matrix `F = (J_d − R_d) Q_d`.
    pub fn f_matrix(&self) -> DMatrix<f64> {
        (&self.j_d - &self.r_d) * &self.q_d
    }

    /// Standard-form system matrix `S_d⁻¹ (J_d − R_d) Q_d`.
    pub fn system_matrix(&self) -> Result<DMatrix<f64>> {
        let lu = self.s_d.clone().lu();
        lu.solve(&self.f_matrix()).ok_or(Error::SingularMatrix { context: "S_d" })
    }

    /// Discrete energy `H_d(e) = ½⟨S_d e, Q_d e⟩`.
    pub fn energy(&self, e: &DVector<f64>) -> f64 {
        0.5 * (&self.s_d * e).dot(&(&self.q_d * e))
    }

    /// Dissipation quadratic form `Q_dᵀ R_d Q_d` (so `Ḣ_d = −eᵀ · this · e`
    /// for `u = 0`).
    pub fn dissipation_matrix(&self) -> DMatrix<f64> {
        self.q_d.transpose() * &self.r_d * &self.q_d
    }

    /// Symmetric multiplier kernel `G` with
    /// `V_ε(e) = −(h/2)·(S_d e)ᵀ G (S_d e)`:
    /// `G = [[0, Ā⁻ᵀW̄], [Ā⁻¹W̄ᵀ, 0]]`, i.e. `P̄₁⁻¹·blockdiag(W̄ᵀ, W̄)`.
    pub fn multiplier_matrix(&self) -> Result<DMatrix<f64>> {
        let nn = self.dof.n * self.dof.n_elems;
        let a_lu = self.globals.a_bar.clone().lu();
        let at_lu = self.globals.a_bar.transpose().lu();
        let top = at_lu
            .solve(&self.globals.w_bar)
            .ok_or(Error::SingularMatrix { context: "A_bar^T" })?;
        let bottom = a_lu
            .solve(&self.globals.w_bar.transpose())
            .ok_or(Error::SingularMatrix { context: "A_bar" })?;
        let mut g = DMatrix::zeros(2 * nn, 2 * nn);
        g.view_mut((0, nn), (nn, nn)).copy_from(&top);
        g.view_mut((nn, 0), (nn, nn)).copy_from(&bottom);
        Ok(g)
    }

    /// Multiplier functional `V_ε(e)`.
    pub fn multiplier_functional(&self, g: &DMatrix<f64>, e: &DVector<f64>) -> f64 {
        let y = &self.s_d * e;
        -0.5 * self.mesh.h() * y.dot(&(g * &y))
    }
}

/// Assembles the mixed finite-element model.
///
/// Requires a diagonal `K`: the boundary elimination underlying the scheme is
/// stated for diagonal dissipation matrices.
pub fn assemble_mfem(spec: &SystemSpec, mesh: &Mesh) -> Result<DiscreteModel> {
    if !spec.k_is_diagonal() {
        return Err(Error::Assembly(
            "non-diagonal K is not supported: the boundary elimination assumes K = diag(κ_i)"
                .into(),
        ));
    }
    let n = spec.n;
    let n_elems = mesh.n_elems();
    let nn = n * n_elems;
    let h = mesh.h();
    let prim = build_primitives(n_elems)?;
    let samples = sample_params(spec, mesh)?;

    let eye_n = DMatrix::<f64>::identity(n, n);
    let a_bar = spec.a.kronecker(&DMatrix::identity(n_elems, n_elems));
    let d_bar = eye_n.kronecker(&prim.d);
    let m_bar = eye_n.kronecker(&prim.m);
    let c_bar = eye_n.kronecker(&prim.c);
    let trtr = &prim.t_r * prim.t_r.transpose();
    let b2_bar = spec.k.kronecker(&trtr);
    let a_inv_t_k = spec
        .a
        .transpose()
        .lu()
        .solve(&spec.k)
        .ok_or(Error::SingularMatrix { context: "A^T" })?;
    let b1_bar = (a_inv_t_k * 0.5).kronecker(&trtr);
    let dinv = d_inverse(n_elems);
    let w_block = -(dinv.transpose() * prim.c.transpose() * &prim.m) * h;
    let w_bar = eye_n.kronecker(&w_block);

    let mut lambda_q = DVector::zeros(nn);
    let mut lambda_p = DVector::zeros(nn);
    for i in 0..n {
        lambda_q.rows_mut(i * n_elems, n_elems).copy_from(&samples.theta_q[i]);
        lambda_p.rows_mut(i * n_elems, n_elems).copy_from(&samples.theta_p[i]);
    }

    let (b_q_bar, b_p_bar) = input_quadrature(spec, mesh)?;

    // Block [[M̄, −B̄₁], [0, M̄ᵀ]] shared by S_d and Q_d.
    let mut blk = DMatrix::zeros(2 * nn, 2 * nn);
    blk.view_mut((0, 0), (nn, nn)).copy_from(&m_bar);
    blk.view_mut((0, nn), (nn, nn)).copy_from(&(-&b1_bar));
    blk.view_mut((nn, nn), (nn, nn)).copy_from(&m_bar.transpose());
    let q_d = &blk * h;
    let mut s_d = blk;
    for r in 0..nn {
        let wq = 1.0 / lambda_q[r];
        let wp = 1.0 / lambda_p[r];
        for cidx in 0..2 * nn {
            s_d[(r, cidx)] *= wq;
            s_d[(nn + r, cidx)] *= wp;
        }
    }

    let m_inv =
        prim.m.clone().try_inverse().ok_or(Error::SingularMatrix { context: "M" })?;
    let m_bar_inv = eye_n.kronecker(&m_inv);
    let ad_minv_t = &a_bar * &d_bar * m_bar_inv.transpose();
    let mut j_d = DMatrix::zeros(2 * nn, 2 * nn);
    j_d.view_mut((0, nn), (nn, nn)).copy_from(&(&ad_minv_t / (h * h)));
    j_d.view_mut((nn, 0), (nn, nn)).copy_from(&(-ad_minv_t.transpose() / (h * h)));
    let mut r_d = DMatrix::zeros(2 * nn, 2 * nn);
    let r_block = (&m_bar_inv * &b2_bar * m_bar_inv.transpose()) / (h * h);
    r_d.view_mut((nn, nn), (nn, nn)).copy_from(&r_block);

    let mut b_d = DMatrix::zeros(2 * nn, spec.input_dim);
    b_d.view_mut((0, 0), (nn, spec.input_dim)).copy_from(&b_q_bar);
    b_d.view_mut((nn, 0), (nn, spec.input_dim)).copy_from(&b_p_bar);

    let sv = s_d.clone().svd(false, false).singular_values;
    let s_cond = sv.max() / sv.min();

    Ok(DiscreteModel {
        spec: spec.clone(),
        mesh: mesh.clone(),
        globals: GlobalMatrices {
            a_bar,
            d_bar,
            m_bar,
            c_bar,
            w_bar,
            b1_bar,
            b2_bar,
            lambda_q,
            lambda_p,
            b_q_bar,
            b_p_bar,
        },
        dof: DofLayout { n, n_elems },
        s_d,
        q_d,
        j_d,
        r_d,
        b_d,
        s_cond,
    })
}

/// Standard Galerkin FEM comparator in second-order form.
///
/// The baseline discretizes the displacement form of the same system,
/// `Λ_p⁻¹ ẅ = Aᵀ ∂x(Λ_q A ∂x w) + B_p u` with `w(x_l) = 0` and the boundary
/// damper `AᵀΛ_q(x_r)A ∂x w(x_r) = −K ẇ(x_r)`, using P1 elements and a
/// consistent mass matrix. State `x = [w; v]` (`v = ẇ`), nodes `x_1..x_N`
/// per variable:
///
/// ```text
/// E ẋ = A_fe x + B_fe u,   E = blockdiag(I, M_ρ),
/// A_fe = [[0, I], [−S_T, −K at the boundary node]],
/// H = ½(wᵀ S_T w + vᵀ M_ρ v).
/// ```
///
/// This is the classical scheme whose spectral abscissa degenerates to zero
/// under mesh refinement, which is exactly the comparison the sweep commands
/// reproduce.
#[derive(Clone, Debug)]
pub struct FemModel {
    pub mesh: Mesh,
    pub n: usize,
    /// Descriptor matrix `E = blockdiag(I_{nN}, M_ρ)`.
    pub e_mat: DMatrix<f64>,
    /// System matrix (stiffness, coupling and boundary damping).
    pub a_fe: DMatrix<f64>,
    /// Input matrix (`2nN × l`).
    pub b_fe: DMatrix<f64>,
    /// Consistent mass matrix weighted by `Λ_p⁻¹`.
    pub mass_p: DMatrix<f64>,
    /// Stiffness matrix weighted by `AᵀΛ_q(x)A`.
    pub stiff: DMatrix<f64>,
}

impl FemModel {
    /// State dimension `2nN`.
    pub fn dim(&self) -> usize {
        self.e_mat.nrows()
    }

    /// Discrete energy `½(wᵀ S_T w + vᵀ M_ρ v)`.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let nn = self.dim() / 2;
        let w = x.rows(0, nn);
        let v = x.rows(nn, nn);
        0.5 * (w.dot(&(&self.stiff * w)) + v.dot(&(&self.mass_p * v)))
    }

    /// Standard-form system matrix `E⁻¹ A_fe`.
    pub fn system_matrix(&self) -> Result<DMatrix<f64>> {
        self.e_mat
            .clone()
            .lu()
            .solve(&self.a_fe)
            .ok_or(Error::SingularMatrix { context: "E" })
    }
}

/// P1 hat function on `mesh` for node `k`, restricted to cell `c`
/// (`c <= k <= c+1` assumed), evaluated at `x`.
fn hat(mesh: &Mesh, k: usize, c: usize, x: f64) -> f64 {
    let h = mesh.h();
    if k == c {
        (mesh.node(c + 1) - x) / h
    } else {
        (x - mesh.node(c)) / h
    }
}

/// Assembles the Galerkin FEM comparator.
///
/// Requires `b_q ≡ 0` (the second-order form has no input port on the `q`
/// family) and diagonal `K`, mirroring the MFEM assembly restrictions.
pub fn assemble_fem(spec: &SystemSpec, mesh: &Mesh) -> Result<FemModel> {
    if !spec.k_is_diagonal() {
        return Err(Error::Assembly(
            "non-diagonal K is not supported by the FEM comparator".into(),
        ));
    }
    if !spec.b_q.is_zero_on(spec.x_l, spec.x_r, 1001) {
        return Err(Error::Assembly(
            "the FEM comparator requires b_q = 0 (input on the p family only)".into(),
        ));
    }
    let n = spec.n;
    let n_elems = mesh.n_elems();
    let nn = n * n_elems;
    let h = mesh.h();
    let l = spec.input_dim;

    // Pointwise coefficient matrices of the second-order form.
    let g_at = |x: f64| {
        let lam_q = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            spec.theta_q.iter().map(|p| p.eval(x)),
        ));
        spec.a.transpose() * lam_q * &spec.a
    };

    let mut mass_p = DMatrix::zeros(nn, nn);
    let mut stiff = DMatrix::zeros(nn, nn);
    let mut b_rows = DMatrix::zeros(nn, l);
    // Kept nodes are x_1..x_N; global index for (variable i, node k) is
    // i*N + (k-1).
    for c in 0..n_elems {
        let (xa, xb) = (mesh.node(c), mesh.node(c + 1));
        for j in [c, c + 1] {
            if j == 0 {
                continue; // Dirichlet node x_0 eliminated.
            }
            let dj = if j == c { -1.0 / h } else { 1.0 / h };
            for k in [c, c + 1] {
                if k == 0 {
                    continue;
                }
                let dk = if k == c { -1.0 / h } else { 1.0 / h };
                for i in 0..n {
                    // Mass: ⟨ψ_j, ψ_k / θ^p_i⟩ (Λ_p is diagonal, no coupling).
                    let mval = simpson(
                        |x| hat(mesh, j, c, x) * hat(mesh, k, c, x) / spec.theta_p[i].eval(x),
                        xa,
                        xb,
                        INPUT_QUAD_PANELS,
                    );
                    mass_p[(i * n_elems + j - 1, i * n_elems + k - 1)] += mval;
                    // Stiffness: ⟨ψ'_j, [AᵀΛ_qA]_{i,iv} ψ'_k⟩ couples variables.
                    for iv in 0..n {
                        let sval =
                            simpson(|x| dj * dk * g_at(x)[(i, iv)], xa, xb, INPUT_QUAD_PANELS);
                        stiff[(i * n_elems + j - 1, iv * n_elems + k - 1)] += sval;
                    }
                }
            }
            for i in 0..n {
                for col in 0..l {
                    let bval = simpson(
                        |x| hat(mesh, j, c, x) * spec.b_p.entry(i, col, x),
                        xa,
                        xb,
                        INPUT_QUAD_PANELS,
                    );
                    b_rows[(i * n_elems + j - 1, col)] += bval;
                }
            }
        }
    }

    let mut e_mat = DMatrix::zeros(2 * nn, 2 * nn);
    e_mat.view_mut((0, 0), (nn, nn)).copy_from(&DMatrix::identity(nn, nn));
    e_mat.view_mut((nn, nn), (nn, nn)).copy_from(&mass_p);

    let mut a_fe = DMatrix::zeros(2 * nn, 2 * nn);
    a_fe.view_mut((0, nn), (nn, nn)).copy_from(&DMatrix::identity(nn, nn));
    a_fe.view_mut((nn, 0), (nn, nn)).copy_from(&(-&stiff));
    for i in 0..n {
        let last = i * n_elems + n_elems - 1;
        a_fe[(nn + last, nn + last)] -= spec.k[(i, i)];
    }

    let mut b_fe = DMatrix::zeros(2 * nn, l);
    b_fe.view_mut((nn, 0), (nn, l)).copy_from(&b_rows);

    Ok(FemModel { mesh: mesh.clone(), n, e_mat, a_fe, b_fe, mass_p, stiff })
}
