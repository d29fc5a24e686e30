//! Exponential-stability certificates for the continuous system and its mixed
//! finite-element discretization, plus spectral-abscissa sweeps over the mesh
//! size.
//!
//! The certificate chain is: a grid test of the continuous damping margin
//! `δ^c`, a mesh-uniform discrete margin obtained from the scale-free
//! condition (D1) on the parameter samples (with a per-parameter bisection on
//! the tridiagonal pencil as fallback), and the decay-rate bound
//! `α = δ·ε·ε₀/(ε+ε₀)` assembled from the boundary and medium constants.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{assemble_fem, assemble_mfem, DiscreteModel, FemModel};
use crate::error::Error;
use crate::model::{sample_params, Mesh, SampledParams, SystemSpec};
use crate::numerics::{eig_general, tridiag_is_pd, Spectrum, SymTridiag};
use crate::Result;

/// Number of probe points for continuous grid tests.
pub const CERT_GRID_POINTS: usize = 2001;

/// Absolute bisection tolerance on the discrete margin `δ^d`.
pub const DELTA_BISECTION_TOL: f64 = 1e-8;

/// How a stability certificate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertMethod {
    /// Continuous damping-margin grid test.
    Assumption1Grid,
    /// Per-parameter bisection with the tridiagonal positive-definiteness test.
    BisectionPd,
    /// Mesh-uniform margin verified through condition (D1).
    ConditionD1,
    /// Condition (D2) (advisory only).
    ConditionD2,
    /// Large-`N` doubling search fallback.
    LargeNFallback,
}

impl CertMethod {
    /// Stable identifier used in reports and CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            CertMethod::Assumption1Grid => "assumption1-grid",
            CertMethod::BisectionPd => "bisection-pd",
            CertMethod::ConditionD1 => "condition-D1",
            CertMethod::ConditionD2 => "condition-D2",
            CertMethod::LargeNFallback => "large-N-fallback",
        }
    }
}

/// Per-parameter margin record (`z ∈ {q, p}`, variable index `i`, worst
/// probe location, margin value).
#[derive(Clone, Debug)]
pub struct ParamMargin {
    /// Parameter label, e.g. `theta_p[2]`.
    pub label: String,
    /// Probe location: `x` for grid tests, sample index for discrete tests.
    pub at: f64,
    /// Margin value (δ contribution of this parameter).
    pub value: f64,
}

/// A damping margin together with its per-parameter breakdown.
#[derive(Clone, Debug)]
pub struct DeltaReport {
    /// The margin (infimum over parameters).
    pub delta: f64,
    /// One record per parameter, ordered `θ^q_1..θ^q_n, θ^p_1..θ^p_n`.
    pub margins: Vec<ParamMargin>,
}

/// Full exponential-stability certificate.
#[derive(Clone, Debug)]
pub struct StabilityCertificate {
    /// Damping margin (`δ^c` or `δ^d`), in `(0, 1]`.
    pub delta: f64,
    /// `ε₀ = η_Λ/(ℓ·μ_{P₁})`.
    pub epsilon0: f64,
    /// `ε₁ = 2η_K/(ℓ·μ_Ψ)`.
    pub epsilon1: f64,
    /// `ε = min(ε₀, ε₁)`.
    pub epsilon_used: f64,
    /// Decay-rate bound `α = δ·ε·ε₀/(ε + ε₀)`.
    pub alpha: f64,
    /// How `delta` was certified.
    pub method: CertMethod,
    /// Per-parameter margins backing `delta`.
    pub details: Vec<ParamMargin>,
}

impl StabilityCertificate {
    /// Spectral bound implied by the energy decay rate: eigenvalue real
    /// parts are bounded by `−α/2` (the energy is quadratic in the state).
    pub fn sigma_bound(&self) -> f64 {
        -self.alpha / 2.0
    }

    /// Strict multiplier constant `ε·(1−10⁻⁹)` used when a strict sandwich
    /// inequality is required.
    pub fn strict_epsilon(&self) -> f64 {
        self.epsilon_used * (1.0 - 1e-9)
    }
}

fn for_each_profile<'a>(
    spec: &'a SystemSpec,
) -> impl Iterator<Item = (String, &'a crate::model::ParamProfile)> {
    spec.theta_q
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("theta_q[{}]", i + 1), p))
        .chain(spec.theta_p.iter().enumerate().map(|(i, p)| (format!("theta_p[{}]", i + 1), p)))
}

/// Continuous damping margin `δ^c = inf_x min_θ (θ − m·θ′)/θ` with
/// `m(x) = x − x_l`, probed on a uniform grid (`grid_points ≥ 10³`).
///
/// A nonpositive result means the damping assumption fails on the grid; this
/// is reported in the value, not as an error.
pub fn continuous_delta(spec: &SystemSpec, grid_points: usize) -> Result<DeltaReport> {
    let points = grid_points.max(1000);
    let step = spec.ell() / (points - 1) as f64;
    let fd = spec.fd_step();
    let mut margins = Vec::with_capacity(2 * spec.n);
    for (label, prof) in for_each_profile(spec) {
        let mut worst = f64::INFINITY;
        let mut worst_x = spec.x_l;
        for j in 0..points {
            let x = spec.x_l + j as f64 * step;
            let theta = prof.eval(x);
            if !(theta > 0.0) || !theta.is_finite() {
                return Err(Error::NonPositiveProfile { label, x, value: theta });
            }
            let m = x - spec.x_l;
            let value = (theta - m * prof.deriv(x, fd)) / theta;
            if value < worst {
                worst = value;
                worst_x = x;
            }
        }
        margins.push(ParamMargin { label, at: worst_x, value: worst });
    }
    let delta = margins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
    Ok(DeltaReport { delta, margins })
}

/// Mesh-uniform discrete margin candidate `1 − sup_x m(x)·|θ′(x)|/θ(x)`,
/// probed on a uniform grid. Unlike [`continuous_delta`] this uses `|θ′|`, so
/// it bounds the margin of every parameter family closed under `θ ↦ γθ` and
/// `θ ↦ γ/θ` and is independent of the mesh size.
pub fn uniform_delta_candidate(spec: &SystemSpec, grid_points: usize) -> Result<f64> {
    let points = grid_points.max(1000);
    let step = spec.ell() / (points - 1) as f64;
    let fd = spec.fd_step();
    let mut sup: f64 = 0.0;
    for (label, prof) in for_each_profile(spec) {
        for j in 0..points {
            let x = spec.x_l + j as f64 * step;
            let theta = prof.eval(x);
            if !(theta > 0.0) || !theta.is_finite() {
                return Err(Error::NonPositiveProfile { label, x, value: theta });
            }
            sup = sup.max((x - spec.x_l) * prof.deriv(x, fd).abs() / theta);
        }
    }
    Ok(1.0 - sup)
}

/// Whether `(1−c)·diag(θ) − O(θ)` is positive definite, where `O` is the
/// tridiagonal comparison matrix of the sample vector.
fn pencil_is_pd(theta: &DVector<f64>, c: f64) -> bool {
    let n = theta.len();
    let diag = theta.map(|t| (1.0 - c) * t);
    let off = DVector::from_fn(n - 1, |k, _| -((k + 1) as f64) * (theta[k + 1] - theta[k]) / 2.0);
    tridiag_is_pd(&SymTridiag::new(diag, off)).is_positive()
}

/// Supremum `c* ∈ [0, 1)` with `(1−c)·diag(θ) − O(θ) ≻ 0`, by bisection to
/// absolute tolerance [`DELTA_BISECTION_TOL`]. Returns `0` when no positive
/// `c` certifies.
pub fn pencil_sup_c(theta: &DVector<f64>) -> f64 {
    if !pencil_is_pd(theta, 0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > DELTA_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if pencil_is_pd(theta, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Discrete damping margin `δ^d = min over parameters of c*`, each `c*`
/// located by bisection on the tridiagonal pencil.
pub fn discrete_delta(samples: &SampledParams) -> DeltaReport {
    let mut margins = Vec::with_capacity(samples.theta_q.len() + samples.theta_p.len());
    for (family, vecs) in [("theta_q", &samples.theta_q), ("theta_p", &samples.theta_p)] {
        for (i, theta) in vecs.iter().enumerate() {
            let c_star = pencil_sup_c(theta);
            margins.push(ParamMargin {
                label: format!("{family}[{}]", i + 1),
                at: f64::NAN,
                value: c_star,
            });
        }
    }
    let delta = margins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
    DeltaReport { delta, margins }
}

/// Condition (D1): `i²(θ_{i+1}−θ_i)²/((1−c)²θ_{i+1}θ_i) < 1/cos²(π/(N+1))`
/// for every `i ∈ {1, …, N−1}`. Returns the verdict, the maximizing index
/// (1-based) and the worst left-hand side.
pub fn check_d1(theta: &DVector<f64>, c: f64) -> (bool, usize, f64) {
    assert!((0.0..1.0).contains(&c), "check_d1 requires 0 <= c < 1");
    let n = theta.len();
    let rhs = 1.0 / (std::f64::consts::PI / (n as f64 + 1.0)).cos().powi(2);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_i = 1;
    for k in 0..n - 1 {
        let i = (k + 1) as f64;
        let diff = theta[k + 1] - theta[k];
        let lhs = i * i * diff * diff / ((1.0 - c).powi(2) * theta[k + 1] * theta[k]);
        if lhs > worst {
            worst = lhs;
            worst_i = k + 1;
        }
    }
    (worst < rhs, worst_i, worst)
}

/// Condition (D2), evaluated verbatim as printed:
/// `8/(N(N−1))·min_{i odd}{(1−c)θ_i}·min_{i even}{(1−c)θ_i}
///  − Σ_{i<k}(1−c)²(θ_i−θ_k)² < Σ_{i=1}^{N−1} i²(θ_{i+1}−θ_i)²`.
///
/// The printed inequality direction is inconsistent with a sufficient
/// condition, so the verdict is advisory only; (D1) is the load-bearing test.
/// Returns `(verdict, lhs, rhs)`.
pub fn check_d2(theta: &DVector<f64>, c: f64) -> (bool, f64, f64) {
    let n = theta.len();
    let scaled = |k: usize| (1.0 - c) * theta[k];
    let min_odd =
        (0..n).step_by(2).map(scaled).fold(f64::INFINITY, f64::min); // 1-based odd i
    let min_even = (1..n).step_by(2).map(scaled).fold(f64::INFINITY, f64::min);
    let mut pair_sum = 0.0;
    for i in 0..n {
        for k in i + 1..n {
            pair_sum += (1.0 - c).powi(2) * (theta[i] - theta[k]).powi(2);
        }
    }
    let lhs = 8.0 / (n as f64 * (n as f64 - 1.0)) * min_odd * min_even - pair_sum;
    let mut rhs = 0.0;
    for k in 0..n - 1 {
        let i = (k + 1) as f64;
        rhs += i * i * (theta[k + 1] - theta[k]).powi(2);
    }
    (lhs < rhs, lhs, rhs)
}

/// Builds the decay-rate certificate for a given damping margin:
/// `η_Λ = min_x min eig Λ(x)` (grid probe), `μ_{P₁} = √(max eig P₁⁻²)`,
/// `η_K = min eig K`, `Ψ = [A⁻ᵀK; I]ᵀΛ⁻¹(x_r)[A⁻ᵀK; I]`, `μ_Ψ = max eig Ψ`,
/// `ε₀ = η_Λ/(ℓμ_{P₁})`, `ε₁ = 2η_K/(ℓμ_Ψ)`, `ε = min(ε₀, ε₁)` and
/// `α = δ·ε·ε₀/(ε + ε₀)`.
pub fn decay_bound(
    spec: &SystemSpec,
    delta: f64,
    method: CertMethod,
    details: Vec<ParamMargin>,
) -> Result<StabilityCertificate> {
    assert!(delta > 0.0 && delta <= 1.0, "decay_bound requires delta in (0, 1]");
    let ell = spec.ell();
    let points = CERT_GRID_POINTS;
    let step = ell / (points - 1) as f64;
    let mut eta_lambda = f64::INFINITY;
    for j in 0..points {
        let x = spec.x_l + j as f64 * step;
        eta_lambda = eta_lambda.min(spec.lambda_diag(x).min());
    }

    // μ_{P₁} = 1/σ_min(P₁): the largest eigenvalue magnitude of P₁⁻¹.
    let p1 = spec.p1();
    let sv = p1.svd(false, false).singular_values;
    let sigma_min = sv.min();
    if sigma_min <= 0.0 {
        return Err(Error::Certificate("P1 is singular".into()));
    }
    let mu_p1 = 1.0 / sigma_min;
    let epsilon0 = eta_lambda / (ell * mu_p1);

    let lambda_r = spec.lambda_diag(spec.x_r);
    if lambda_r.min() <= 0.0 {
        return Err(Error::Certificate("Lambda(x_r) is singular".into()));
    }
    let a_inv_t = spec
        .a
        .transpose()
        .try_inverse()
        .ok_or(Error::SingularMatrix { context: "A^T in decay_bound" })?;
    let n = spec.n;
    let mut stack = DMatrix::zeros(2 * n, n);
    stack.view_mut((0, 0), (n, n)).copy_from(&(&a_inv_t * &spec.k));
    stack.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let lambda_inv_r = DMatrix::from_diagonal(&lambda_r.map(|v| 1.0 / v));
    let psi = stack.transpose() * lambda_inv_r * &stack;
    let mu_psi = psi.clone().symmetric_eigen().eigenvalues.max();
    let eta_k = spec.k.clone().symmetric_eigen().eigenvalues.min();
    let epsilon1 = 2.0 * eta_k / (ell * mu_psi);

    let epsilon_used = epsilon0.min(epsilon1);
    let alpha = if epsilon_used + epsilon0 > 0.0 {
        delta * epsilon_used * epsilon0 / (epsilon_used + epsilon0)
    } else {
        0.0
    };
    Ok(StabilityCertificate { delta, epsilon0, epsilon1, epsilon_used, alpha, method, details })
}

/// Full discrete certificate for `spec` on `mesh`.
///
/// Tries the mesh-uniform margin first: if condition (D1) verifies it on the
/// actual samples the certificate carries the `N`-independent value (method
/// `condition-D1`); otherwise it falls back to the per-parameter bisection
/// margin (method `bisection-pd`, sharper but mesh-dependent).
pub fn discrete_certificate(spec: &SystemSpec, mesh: &Mesh) -> Result<StabilityCertificate> {
    let samples = sample_params(spec, mesh)?;
    let uniform = uniform_delta_candidate(spec, CERT_GRID_POINTS)?;
    if uniform > 0.0 {
        let all_profiles = samples.theta_q.iter().chain(samples.theta_p.iter());
        let mut ok = true;
        let mut details = Vec::new();
        for (idx, theta) in all_profiles.enumerate() {
            let (holds, worst_i, worst) = check_d1(theta, uniform);
            ok &= holds;
            let family = if idx < samples.theta_q.len() { "theta_q" } else { "theta_p" };
            let i = idx % samples.theta_q.len() + 1;
            details.push(ParamMargin {
                label: format!("{family}[{i}]"),
                at: worst_i as f64,
                value: worst,
            });
        }
        if ok {
            return decay_bound(spec, uniform, CertMethod::ConditionD1, details);
        }
    }
    let report = discrete_delta(&samples);
    if report.delta <= 0.0 {
        return Err(Error::Certificate(format!(
            "no positive discrete margin certifies (delta = {})",
            report.delta
        )));
    }
    decay_bound(spec, report.delta, CertMethod::BisectionPd, report.margins)
}

/// Continuous certificate (Assumption-1 grid margin plus the decay bound).
pub fn continuous_certificate(spec: &SystemSpec) -> Result<StabilityCertificate> {
    let report = continuous_delta(spec, CERT_GRID_POINTS)?;
    if report.delta <= 0.0 {
        return Err(Error::Certificate(format!(
            "continuous damping margin is nonpositive ({})",
            report.delta
        )));
    }
    decay_bound(spec, report.delta, CertMethod::Assumption1Grid, report.margins)
}

/// Eigenvalues of the mixed-scheme state matrix `S_d⁻¹(J_d − R_d)Q_d`,
/// optionally in closed loop with a state-feedback gain (`u = −K_d e`).
pub fn spectral_abscissa(model: &DiscreteModel, gain: Option<&DMatrix<f64>>) -> Result<Spectrum> {
    let mut f = model.f_matrix();
    if let Some(k_d) = gain {
        f -= &model.b_d * k_d;
    }
    let a = model
        .s_d
        .clone()
        .lu()
        .solve(&f)
        .ok_or(Error::SingularMatrix { context: "descriptor S_d" })?;
    eig_general(&a)
}

/// Eigenvalues of the Galerkin comparator `E⁻¹A_fe`, optionally closed-loop.
pub fn spectral_abscissa_fem(model: &FemModel, gain: Option<&DMatrix<f64>>) -> Result<Spectrum> {
    let mut a_mat = model.a_fe.clone();
    if let Some(k_d) = gain {
        a_mat -= &model.b_fe * k_d;
    }
    let a = model
        .e_mat
        .clone()
        .lu()
        .solve(&a_mat)
        .ok_or(Error::SingularMatrix { context: "descriptor E" })?;
    eig_general(&a)
}

/// Discretization scheme selector for sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Mfem,
    Fem,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mfem => "mfem",
            Scheme::Fem => "fem",
        }
    }
}

/// One row of a spectral-abscissa sweep.
#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Number of elements `N`.
    pub n_elems: usize,
    /// Open-loop spectral abscissa.
    pub sigma_max_open: f64,
    /// Closed-loop abscissa, when a gain was supplied for this `N`.
    pub sigma_max_closed: Option<f64>,
    /// Certified decay bound `α^d` (same for both schemes; it is a property
    /// of the parameter samples).
    pub alpha_bound: f64,
    /// Certified discrete margin `δ^d`.
    pub delta_d: f64,
    /// Row wall-clock time in seconds.
    pub wallclock: f64,
}

/// Spectral-abscissa sweep over `n_list` (ascending). When `gains` is
/// supplied it must be parallel to `n_list`; each entry closes the loop for
/// the corresponding row. Rows are computed concurrently and returned in
/// order.
pub fn stability_sweep(
    spec: &SystemSpec,
    n_list: &[usize],
    scheme: Scheme,
    gains: Option<&[DMatrix<f64>]>,
) -> Result<Vec<SweepResult>> {
    assert!(!n_list.is_empty(), "n_list must be nonempty");
    assert!(n_list.windows(2).all(|w| w[0] < w[1]), "n_list must be ascending");
    if let Some(g) = gains {
        assert_eq!(g.len(), n_list.len(), "gains must be parallel to n_list");
    }
    n_list
        .par_iter()
        .enumerate()
        .map(|(row, &n_elems)| {
            let start = Instant::now();
            let mesh = Mesh::for_spec(spec, n_elems)?;
            let cert = discrete_certificate(spec, &mesh)?;
            let gain = gains.map(|g| &g[row]);
            let (open, closed) = match scheme {
                Scheme::Mfem => {
                    let model = assemble_mfem(spec, &mesh)?;
                    let open = spectral_abscissa(&model, None)?.abscissa;
                    let closed = gain
                        .map(|k| spectral_abscissa(&model, Some(k)).map(|s| s.abscissa))
                        .transpose()?;
                    (open, closed)
                }
                Scheme::Fem => {
                    let model = assemble_fem(spec, &mesh)?;
                    let open = spectral_abscissa_fem(&model, None)?.abscissa;
                    let closed = gain
                        .map(|k| spectral_abscissa_fem(&model, Some(k)).map(|s| s.abscissa))
                        .transpose()?;
                    (open, closed)
                }
            };
            Ok(SweepResult {
                n_elems,
                sigma_max_open: open,
                sigma_max_closed: closed,
                alpha_bound: cert.alpha,
                delta_d: cert.delta,
                wallclock: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Result of the large-`N` doubling search.
#[derive(Clone, Debug)]
pub struct LargeNReport {
    /// First doubling `N` whose bisection margin reaches the target, if any.
    pub n_star: Option<usize>,
    /// `(N, δ^d)` probes in search order.
    pub probes: Vec<(usize, f64)>,
}

/// Doubling search `N = 2, 4, …, 2^max_exp` for the first mesh whose
/// bisection margin satisfies `δ^d ≥ δ^c·(1−10⁻³)`.
pub fn large_n_search(spec: &SystemSpec, delta_c: f64, max_exp: u32) -> Result<LargeNReport> {
    let target = delta_c * (1.0 - 1e-3);
    let mut probes = Vec::new();
    let mut n_star = None;
    let mut n_elems = 2usize;
    while n_elems <= 1usize << max_exp {
        let mesh = Mesh::for_spec(spec, n_elems)?;
        let samples = sample_params(spec, &mesh)?;
        let report = discrete_delta(&samples);
        probes.push((n_elems, report.delta));
        if report.delta >= target {
            n_star = Some(n_elems);
            break;
        }
        n_elems *= 2;
    }
    Ok(LargeNReport { n_star, probes })
}
