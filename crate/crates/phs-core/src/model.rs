//! Continuous system descriptions: parameter profiles, presets, meshes and
//! nodal parameter samples.
//!
//! A [`SystemSpec`] describes the boundary-damped anisotropic port-Hamiltonian
//! system in co-energy variables on `[x_l, x_r]`:
//!
//! ```text
//! Λ⁻¹(x) ∂t [e^q; e^p] = P₁ ∂x [e^q; e^p] + [B_q(x); B_p(x)] u(t)
//! e^p(x_l, t) = 0,      Aᵀ e^q(x_r, t) = −K e^p(x_r, t)
//! ```
//!
//! with `P₁ = [[0, A], [Aᵀ, 0]]` and `Λ(x) = diag(θ^q_i(x), θ^p_i(x))`.
//! All types are immutable after construction and safe to share across
//! threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Shared positive scalar function of the spatial coordinate.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of probe points used when validating profile positivity.
pub const PROFILE_PROBE_POINTS: usize = 2001;

/// One spatially varying physical parameter `θ(x)`.
///
/// The derivative is optional; when absent, [`ParamProfile::deriv`] falls back
/// to central finite differences with a caller-supplied step (the domain
/// length times `1e-6` by convention).
#[derive(Clone)]
pub struct ParamProfile {
    label: String,
    f: ScalarFn,
    df: Option<ScalarFn>,
}

impl fmt::Debug for ParamProfile {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ParamProfile")
            .field("label", &self.label)
            .field("analytic_derivative", &self.df.is_some())
            .finish()
    }
}

impl ParamProfile {
    /// Creates a profile from a sampler without an analytic derivative.
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { label: label.into(), f: Arc::new(f), df: None }
    }

    /// Attaches an analytic derivative.
    pub fn with_derivative<F>(mut self, df: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.df = Some(Arc::new(df));
        self
    }

    /// Constant profile.
    pub fn constant(label: impl Into<String>, value: f64) -> Self {
        Self::new(label, move |_| value).with_derivative(|_| 0.0)
    }

    /// Profile label (used in diagnostics).
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Evaluates `θ(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// Evaluates `θ'(x)`, analytically when available, otherwise by central
    /// differences with step `fd_step`.
    pub fn deriv(&self, x: f64, fd_step: f64) -> f64 {
        match &self.df {
            Some(df) => df(x),
            None => ((self.f)(x + fd_step) - (self.f)(x - fd_step)) / (2.0 * fd_step),
        }
    }

    /// Checks strict positivity on a uniform probe grid over `[x_l, x_r]`.
    pub fn validate_positive(&self, x_l: f64, x_r: f64, points: usize) -> Result<()> {
        let m = points.max(PROFILE_PROBE_POINTS);
        for j in 0..m {
            let x = x_l + (x_r - x_l) * j as f64 / (m - 1) as f64;
            let v = self.eval(x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveProfile { label: self.label.clone(), x, value: v });
            }
        }
        Ok(())
    }
}

/// Matrix-valued function of `x`, stored entry by entry (row-major).
///
/// Used for the input maps `B_q(x)` and `B_p(x)`; only pointwise evaluation is
/// ever needed because assembly integrates each entry against the piecewise
/// constant test functions.
#[derive(Clone)]
pub struct ProfileMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<ScalarFn>,
}

impl fmt::Debug for ProfileMatrix {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ProfileMatrix")
            .field("nrows", &self.nrows)
            .field("ncols", &self.ncols)
            .finish()
    }
}

impl ProfileMatrix {
    /// All-zero map of the given shape (`ncols` may be 0 for autonomous systems).
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        let zero: ScalarFn = Arc::new(|_| 0.0);
        Self { nrows, ncols, entries: vec![zero; nrows * ncols] }
    }

    /// Builds the map from a per-entry generator `(i, j) -> f(x)`.
    pub fn from_fn<G>(nrows: usize, ncols: usize, mut gen: G) -> Self
    where
        G: FnMut(usize, usize) -> ScalarFn,
    {
        let mut entries = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                entries.push(gen(i, j));
            }
        }
        Self { nrows, ncols, entries }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Evaluates entry `(i, j)` at `x`.
    pub fn entry(&self, i: usize, j: usize, x: f64) -> f64 {
        (self.entries[i * self.ncols + j])(x)
    }

    /// Evaluates the full matrix at `x`.
    pub fn eval(&self, x: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |i, j| self.entry(i, j, x))
    }

    /// True when every entry is identically zero on a probe grid.
    pub fn is_zero_on(&self, x_l: f64, x_r: f64, points: usize) -> bool {
        let m = points.max(2);
        (0..m).all(|k| {
            let x = x_l + (x_r - x_l) * k as f64 / (m - 1) as f64;
            (0..self.nrows).all(|i| (0..self.ncols).all(|j| self.entry(i, j, x) == 0.0))
        })
    }
}

/// Continuous port-Hamiltonian system specification.
///
/// `K` must be symmetric positive semidefinite; strict definiteness is only
/// required by the decay-rate certificate (a zero `K` describes the lossless
/// system used for conservation checks).
#[derive(Clone, Debug)]
pub struct SystemSpec {
    /// Number of (q, p) variable pairs.
    pub n: usize,
    /// Left domain end.
    pub x_l: f64,
    /// Right domain end.
    pub x_r: f64,
    /// Interconnection matrix `A` (invertible).
    pub a: DMatrix<f64>,
    /// Boundary dissipation matrix `K` (symmetric PSD, diagonal for assembly).
    pub k: DMatrix<f64>,
    /// Profiles `θ^q_i(x)`, one per variable.
    pub theta_q: Vec<ParamProfile>,
    /// Profiles `θ^p_i(x)`, one per variable.
    pub theta_p: Vec<ParamProfile>,
    /// Input map `B_q(x)` (`n × l`).
    pub b_q: ProfileMatrix,
    /// Input map `B_p(x)` (`n × l`).
    pub b_p: ProfileMatrix,
    /// Number of inputs `l`.
    pub input_dim: usize,
}

impl SystemSpec {
    /// Validates and constructs a spec.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        x_l: f64,
        x_r: f64,
        a: DMatrix<f64>,
        k: DMatrix<f64>,
        theta_q: Vec<ParamProfile>,
        theta_p: Vec<ParamProfile>,
        b_q: ProfileMatrix,
        b_p: ProfileMatrix,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("n must be >= 1".into()));
        }
        if !(x_l < x_r) {
            return Err(Error::InvalidSpec(format!("domain invalid: x_l = {x_l}, x_r = {x_r}")));
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::InvalidSpec(format!(
                "A must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let rcond = reciprocal_condition(&a);
        if !(rcond >= 1e-12) {
            return Err(Error::SingularA { rcond });
        }
        if k.nrows() != n || k.ncols() != n {
            return Err(Error::InvalidK(format!("K must be {n}x{n}")));
        }
        let k_scale = k.norm().max(1.0);
        if (&k - k.transpose()).norm() > 1e-12 * k_scale {
            return Err(Error::InvalidK("K is not symmetric".into()));
        }
        let k_min = k.clone().symmetric_eigen().eigenvalues.min();
        if k_min < -1e-12 * k_scale {
            return Err(Error::InvalidK(format!("K has a negative eigenvalue ({k_min:.3e})")));
        }
        if theta_q.len() != n || theta_p.len() != n {
            return Err(Error::InvalidSpec("need exactly n theta_q and n theta_p profiles".into()));
        }
        for prof in theta_q.iter().chain(theta_p.iter()) {
            prof.validate_positive(x_l, x_r, PROFILE_PROBE_POINTS)?;
        }
        if b_q.nrows() != n || b_p.nrows() != n || b_q.ncols() != b_p.ncols() {
            return Err(Error::InvalidSpec("input maps must be n x l with matching l".into()));
        }
        let input_dim = b_q.ncols();
        Ok(Self { n, x_l, x_r, a, k, theta_q, theta_p, b_q, b_p, input_dim })
    }

    /// Domain length `ℓ = x_r − x_l`.
    pub fn ell(&self) -> f64 {
        self.x_r - self.x_l
    }

    /// The symmetric interconnection matrix `P₁ = [[0, A], [Aᵀ, 0]]`.
    pub fn p1(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut p1 = DMatrix::zeros(2 * n, 2 * n);
        p1.view_mut((0, n), (n, n)).copy_from(&self.a);
        p1.view_mut((n, 0), (n, n)).copy_from(&self.a.transpose());
        p1
    }

    /// Diagonal of `Λ(x) = diag(θ^q_1..θ^q_n, θ^p_1..θ^p_n)`.
    pub fn lambda_diag(&self, x: f64) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.n,
            self.theta_q.iter().map(|p| p.eval(x)).chain(self.theta_p.iter().map(|p| p.eval(x))),
        )
    }

    /// Finite-difference step used for profiles without analytic derivatives.
    pub fn fd_step(&self) -> f64 {
        self.ell() * 1e-6
    }

    /// True when `K` is diagonal (required by the boundary elimination).
    pub fn k_is_diagonal(&self) -> bool {
        let scale = self.k.norm().max(1.0);
        (0..self.n)
            .all(|i| (0..self.n).all(|j| i == j || self.k[(i, j)].abs() <= 1e-14 * scale))
    }
}

/// Reciprocal condition number `σ_min / σ_max` from an SVD.
fn reciprocal_condition(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 {
        0.0
    } else {
        smin / smax
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

/// The reference spatial profile `θ(x) = (10 − x)/10` shared by both presets.
fn reference_theta() -> (impl Fn(f64) -> f64 + Copy, impl Fn(f64) -> f64 + Copy) {
    (|x: f64| (10.0 - x) / 10.0, |_x: f64| -0.1)
}

/// Piezoelectric beam preset on `[0, 1]` (`n = 2`, autonomous).
///
/// `A = [[1, 0], [−γ, 1]]`, `K = diag(k1, k2)`, and graded parameters
/// `θ^q₁ = α₀ θ(x)`, `θ^q₂ = θ(x)/τ₀`, `θ^p₁ = 1/(ρ₀ θ(x))`,
/// `θ^p₂ = 1/(μ₀ θ(x))` with `θ(x) = (10 − x)/10`.
pub fn make_piezo_preset(
    rho0: f64,
    alpha0: f64,
    gamma: f64,
    mu0: f64,
    tau0: f64,
    k1: f64,
    k2: f64,
) -> Result<SystemSpec> {
    require_positive("rho0", rho0)?;
    require_positive("alpha0", alpha0)?;
    require_positive("mu0", mu0)?;
    require_positive("tau0", tau0)?;
    require_nonnegative("gamma", gamma)?;
    require_nonnegative("k1", k1)?;
    require_nonnegative("k2", k2)?;

    let (th, dth) = reference_theta();
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -gamma, 1.0]);
    let k = DMatrix::from_diagonal(&DVector::from_vec(vec![k1, k2]));
    let theta_q = vec![
        ParamProfile::new("theta_q1 = alpha0*(10-x)/10", move |x| alpha0 * th(x))
            .with_derivative(move |x| alpha0 * dth(x)),
        ParamProfile::new("theta_q2 = (10-x)/(10*tau0)", move |x| th(x) / tau0)
            .with_derivative(move |x| dth(x) / tau0),
    ];
    let theta_p = vec![
        ParamProfile::new("theta_p1 = 10/((10-x)*rho0)", move |x| 1.0 / (rho0 * th(x)))
            .with_derivative(move |x| -dth(x) / (rho0 * th(x) * th(x))),
        ParamProfile::new("theta_p2 = 10/((10-x)*mu0)", move |x| 1.0 / (mu0 * th(x)))
            .with_derivative(move |x| -dth(x) / (mu0 * th(x) * th(x))),
    ];
    SystemSpec::new(
        2,
        0.0,
        1.0,
        a,
        k,
        theta_q,
        theta_p,
        ProfileMatrix::zeros(2, 0),
        ProfileMatrix::zeros(2, 0),
    )
}

/// Distributed input shape of the wave preset:
/// `b(x) = 3·10⁴ x²(x − 0.1)²` on `[0, 0.1]`, zero elsewhere.
pub fn wave_input_shape(x: f64) -> f64 {
    if (0.0..=0.1).contains(&x) {
        3.0e4 * x * x * (x - 0.1) * (x - 0.1)
    } else {
        0.0
    }
}

/// Boundary-damped anisotropic wave preset on `[0, 1]` (`n = 1`, one input).
///
/// `θ^q = τ₀ θ(x)`, `θ^p = 1/(ρ₀ θ(x))` with `θ(x) = (10 − x)/10`;
/// the input acts on the `p` family through [`wave_input_shape`].
/// `kappa1 = 0` is allowed and yields the lossless system.
pub fn make_wave_preset(rho0: f64, tau0: f64, kappa1: f64) -> Result<SystemSpec> {
    require_positive("rho0", rho0)?;
    require_positive("tau0", tau0)?;
    require_nonnegative("kappa1", kappa1)?;

    let (th, dth) = reference_theta();
    let theta_q = vec![ParamProfile::new("theta_q = tau0*(10-x)/10", move |x| tau0 * th(x))
        .with_derivative(move |x| tau0 * dth(x))];
    let theta_p = vec![ParamProfile::new("theta_p = 10/((10-x)*rho0)", move |x| {
        1.0 / (rho0 * th(x))
    })
    .with_derivative(move |x| -dth(x) / (rho0 * th(x) * th(x)))];
    let b_p = ProfileMatrix::from_fn(1, 1, |_, _| Arc::new(wave_input_shape) as ScalarFn);
    SystemSpec::new(
        1,
        0.0,
        1.0,
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, kappa1),
        theta_q,
        theta_p,
        ProfileMatrix::zeros(1, 1),
        b_p,
    )
}

/// Uniform mesh of `[x_l, x_r]` into `N >= 2` elements.
#[derive(Clone, Debug)]
pub struct Mesh {
    n_elems: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh {
    /// Builds the uniform mesh with nodes `x_k = x_l + k·h`, `k = 0..N`.
    pub fn new(x_l: f64, x_r: f64, n_elems: usize) -> Result<Self> {
        if n_elems < 2 {
            return Err(Error::InvalidMesh(format!("element count must be >= 2, got {n_elems}")));
        }
        if !(x_l < x_r) {
            return Err(Error::InvalidMesh(format!("domain invalid: [{x_l}, {x_r}]")));
        }
        let h = (x_r - x_l) / n_elems as f64;
        let nodes: Vec<f64> = (0..=n_elems).map(|k| x_l + k as f64 * h).collect();
        debug_assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        debug_assert!((h * n_elems as f64 - (x_r - x_l)).abs() <= 4.0 * f64::EPSILON * (x_r - x_l));
        Ok(Self { n_elems, h, nodes })
    }

    /// Mesh for the domain of `spec`.
    pub fn for_spec(spec: &SystemSpec, n_elems: usize) -> Result<Self> {
        Self::new(spec.x_l, spec.x_r, n_elems)
    }

    /// Number of elements `N`.
    pub fn n_elems(&self) -> usize {
        self.n_elems
    }

    /// Element length `h`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Node `x_k`, `k = 0..=N`.
    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// All nodes `x_0..x_N`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Parameters sampled at the interior-plus-right nodes `x_1..x_N`.
///
/// The left node `x_0` is deliberately excluded: the diagonal blocks
/// `Λ_{zi} = diag(θ^z_i(x_1), …, θ^z_i(x_N))` of the discrete model use
/// exactly these samples.
#[derive(Clone, Debug)]
pub struct SampledParams {
    /// `θ^q_i(x_k)`, `k = 1..N`, one vector per variable.
    pub theta_q: Vec<DVector<f64>>,
    /// `θ^p_i(x_k)`.
    pub theta_p: Vec<DVector<f64>>,
    /// Elementwise inverses of `theta_q`.
    pub inv_q: Vec<DVector<f64>>,
    /// Elementwise inverses of `theta_p`.
    pub inv_p: Vec<DVector<f64>>,
}

/// Samples all `2n` parameter profiles of `spec` on `mesh`.
pub fn sample_params(spec: &SystemSpec, mesh: &Mesh) -> Result<SampledParams> {
    let sample = |profiles: &[ParamProfile], z: char| -> Result<Vec<DVector<f64>>> {
        profiles
            .iter()
            .enumerate()
            .map(|(i, prof)| {
                let mut v = DVector::zeros(mesh.n_elems());
                for k in 1..=mesh.n_elems() {
                    let value = prof.eval(mesh.node(k));
                    if !(value > 0.0) || !value.is_finite() {
                        return Err(Error::NonPositiveSample { z, i: i + 1, k, value });
                    }
                    v[k - 1] = value;
                }
                Ok(v)
            })
            .collect()
    };
    let theta_q = sample(&spec.theta_q, 'q')?;
    let theta_p = sample(&spec.theta_p, 'p')?;
    let inv_q: Vec<_> = theta_q.iter().map(|v| v.map(|t| 1.0 / t)).collect();
    let inv_p: Vec<_> = theta_p.iter().map(|v| v.map(|t| 1.0 / t)).collect();
    Ok(SampledParams { theta_q, theta_p, inv_q, inv_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn piezo_preset_matches_hand_values() {
        let spec = make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(spec.n, 2);
        assert_eq!(spec.a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, 1.0]));
        // theta_p1 at x = 0 with rho0 = 1: 1/((10-0)/10) = 1.
        assert_relative_eq!(spec.theta_p[0].eval(0.0), 1.0);
        assert_eq!(spec.input_dim, 0);
    }

    #[test]
    fn piezo_without_coupling_has_identity_a() {
        let spec = make_piezo_preset(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(spec.a, DMatrix::identity(2, 2));
    }

    #[test]
    fn wave_preset_matches_hand_values() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(spec.b_p.entry(0, 0, 0.05), 0.1875, epsilon = 1e-15);
        assert_eq!(spec.b_p.entry(0, 0, 0.2), 0.0);
        assert_relative_eq!(spec.theta_q[0].eval(1.0), 0.9);
        assert!(spec.b_q.is_zero_on(0.0, 1.0, 101));
    }

    #[test]
    fn nonpositive_constants_are_rejected_by_name() {
        let err = make_wave_preset(-1.0, 1.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("rho0"), "{err}");
        let err = make_piezo_preset(1.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("alpha0"), "{err}");
    }

    #[test]
    fn lossless_wave_preset_is_allowed() {
        let spec = make_wave_preset(1.0, 1.0, 0.0).unwrap();
        assert_eq!(spec.k[(0, 0)], 0.0);
    }

    #[test]
    fn nonpositive_profile_is_rejected() {
        let profile = vec![ParamProfile::new("bad", |x| 0.5 - x)];
        let err = SystemSpec::new(
            1,
            0.0,
            1.0,
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            profile,
            vec![ParamProfile::constant("one", 1.0)],
            ProfileMatrix::zeros(1, 0),
            ProfileMatrix::zeros(1, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveProfile { .. }), "{err}");
    }

    #[test]
    fn singular_a_is_rejected() {
        let err = SystemSpec::new(
            1,
            0.0,
            1.0,
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            vec![ParamProfile::constant("one", 1.0)],
            vec![ParamProfile::constant("one", 1.0)],
            ProfileMatrix::zeros(1, 0),
            ProfileMatrix::zeros(1, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularA { .. }), "{err}");
    }

    #[test]
    fn mesh_requires_two_elements() {
        assert!(Mesh::new(0.0, 1.0, 1).is_err());
        let mesh = Mesh::new(0.0, 1.0, 4).unwrap();
        assert_eq!(mesh.nodes().len(), 5);
        assert_relative_eq!(mesh.h(), 0.25);
    }

    #[test]
    fn piezo_samples_match_node_formula() {
        // theta_q2 with tau0 = 1 samples to (10N - k)/(10N) exactly.
        let spec = make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        let n_elems = 10;
        let mesh = Mesh::for_spec(&spec, n_elems).unwrap();
        let samples = sample_params(&spec, &mesh).unwrap();
        for k in 1..=n_elems {
            let expected = (10 * n_elems - k) as f64 / (10 * n_elems) as f64;
            assert_relative_eq!(samples.theta_q[1][k - 1], expected, epsilon = 1e-15);
        }
        // Spot value from the node formula at k = N.
        assert_relative_eq!(samples.theta_q[1][n_elems - 1], 0.9);
    }

    #[test]
    fn sampling_excludes_left_node_and_inverts() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 2).unwrap();
        let samples = sample_params(&spec, &mesh).unwrap();
        let tq = &samples.theta_q[0];
        assert_eq!(tq.len(), 2);
        assert_relative_eq!(tq[0], 0.95);
        assert_relative_eq!(tq[1], 0.90);
        for k in 0..2 {
            assert_relative_eq!(samples.inv_q[0][k] * tq[k], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_profile_samples_to_ones() {
        let spec = SystemSpec::new(
            1,
            0.0,
            1.0,
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![ParamProfile::constant("one", 1.0)],
            vec![ParamProfile::constant("one", 1.0)],
            ProfileMatrix::zeros(1, 0),
            ProfileMatrix::zeros(1, 0),
        )
        .unwrap();
        let mesh = Mesh::for_spec(&spec, 5).unwrap();
        let samples = sample_params(&spec, &mesh).unwrap();
        assert!(samples.theta_q[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sampling_is_bit_deterministic() {
        let run = || {
            let spec = make_piezo_preset(1.3, 0.7, 0.25, 2.0, 1.1, 0.4, 0.9).unwrap();
            let mesh = Mesh::for_spec(&spec, 37).unwrap();
            let s = sample_params(&spec, &mesh).unwrap();
            (s.theta_q, s.theta_p, s.inv_q, s.inv_p)
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_difference_derivative_fallback_is_accurate() {
        let prof = ParamProfile::new("sin", f64::sin);
        let step = 1e-6;
        assert_relative_eq!(prof.deriv(0.3, step), 0.3f64.cos(), epsilon = 1e-9);
        let with = ParamProfile::new("sin", f64::sin).with_derivative(f64::cos);
        assert_eq!(with.deriv(0.3, step), 0.3f64.cos());
    }
}
