//! Energy-conserving time integration of the semi-discrete models.
//!
//! The integrator is the implicit midpoint rule, which exactly preserves the
//! quadratic energy of the lossless part of the flow, so any observed decay
//! is the boundary damping itself and not numerical dissipation. Trajectories
//! carry the discrete energy, the multiplier functional `V_ε`, and the
//! boundary dissipation, and a post-processor checks the Lyapunov conditions
//! C1/C2 along the trajectory by time differencing.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{DiscreteModel, FemModel};
use crate::error::Error;
use crate::stability::StabilityCertificate;
use crate::Result;

/// Input signal: maps time to the `l`-dimensional input vector.
pub type InputSignal<'a> = &'a dyn Fn(f64) -> DVector<f64>;

/// Prefactored implicit-midpoint stepper for `S ė = F e + B u`:
/// `(S − (Δt/2)F) e⁺ = (S + (Δt/2)F) e + Δt·B·u_mid`.
pub struct MidpointStepper {
    lhs: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rhs: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
}

impl MidpointStepper {
    /// Prefactors the step matrix; fails when `S − (Δt/2)F` is singular.
    pub fn new(s: &DMatrix<f64>, f: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> Result<Self> {
        assert!(dt > 0.0, "dt must be positive");
        let lhs_mat = s - f * (dt / 2.0);
        let rhs = s + f * (dt / 2.0);
        let lhs = lhs_mat.lu();
        if !lhs.is_invertible() {
            return Err(Error::Simulate(format!("step matrix singular at dt = {dt}")));
        }
        Ok(Self { lhs, rhs, b: b.clone(), dt })
    }

    /// One midpoint step with the (time-centered) input value `u_mid`.
    pub fn step(&self, e: &DVector<f64>, u_mid: Option<&DVector<f64>>) -> DVector<f64> {
        let mut rhs = &self.rhs * e;
        if let Some(u) = u_mid {
            rhs += &self.b * u * self.dt;
        }
        self.lhs.solve(&rhs).expect("prefactored LU is invertible")
    }
}

/// A simulated trajectory on a uniform time grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Time instants `t_0 = 0, Δt, …, T`.
    pub times: Vec<f64>,
    /// Co-energy state per instant.
    pub states: Vec<DVector<f64>>,
    /// Discrete energy `H_d = ½⟨S_d e, Q_d e⟩` per instant.
    pub h_d: Vec<f64>,
    /// Multiplier functional `V_ε` per instant (empty for the Galerkin
    /// comparator, which has no multiplier structure).
    pub v_eps: Vec<f64>,
    /// Boundary dissipation `eᵀQ_dᵀR_dQ_d e` per instant.
    pub dissipation: Vec<f64>,
}

impl Trajectory {
    /// Time step of the uniform grid.
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

/// Default time step `h/(2·ĉ)` with the wave-speed estimate
/// `ĉ = max_x ‖A‖₂·√(max_i θ^q_i(x)·max_i θ^p_i(x))`.
pub fn default_dt(model: &DiscreteModel) -> f64 {
    let spec = &model.spec;
    let points = 2001;
    let step = spec.ell() / (points - 1) as f64;
    let a_norm = spec.a.clone().svd(false, false).singular_values.max();
    let mut speed: f64 = 0.0;
    for j in 0..points {
        let x = spec.x_l + j as f64 * step;
        let tq = spec.theta_q.iter().map(|p| p.eval(x)).fold(0.0, f64::max);
        let tp = spec.theta_p.iter().map(|p| p.eval(x)).fold(0.0, f64::max);
        speed = speed.max(a_norm * (tq * tp).sqrt());
    }
    model.mesh.h() / (2.0 * speed.max(f64::MIN_POSITIVE))
}

fn run(
    stepper: &MidpointStepper,
    e0: &DVector<f64>,
    u_of_t: Option<InputSignal>,
    t_final: f64,
    dt: f64,
    mut observe: impl FnMut(&DVector<f64>),
) -> (Vec<f64>, Vec<DVector<f64>>) {
    let steps = (t_final / dt).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut e = e0.clone();
    observe(&e);
    times.push(0.0);
    states.push(e.clone());
    for m in 0..steps {
        let t_mid = (m as f64 + 0.5) * dt;
        let u_mid = u_of_t.map(|u| u(t_mid));
        e = stepper.step(&e, u_mid.as_ref());
        observe(&e);
        times.push((m + 1) as f64 * dt);
        states.push(e.clone());
    }
    (times, states)
}

/// Simulates the mixed-scheme model from `e0` up to `t_final` with step `dt`
/// (use [`default_dt`] unless a specific resolution is needed).
pub fn simulate(
    model: &DiscreteModel,
    e0: &DVector<f64>,
    u_of_t: Option<InputSignal>,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    if t_final < dt {
        return Err(Error::Simulate(format!("horizon {t_final} shorter than dt {dt}")));
    }
    let stepper = MidpointStepper::new(&model.s_d, &model.f_matrix(), &model.b_d, dt)?;
    let g = model.multiplier_matrix()?;
    let diss = model.dissipation_matrix();
    let mut h_d = Vec::new();
    let mut v_eps = Vec::new();
    let mut dissipation = Vec::new();
    let (times, states) = run(&stepper, e0, u_of_t, t_final, dt, |e| {
        h_d.push(model.energy(e));
        v_eps.push(model.multiplier_functional(&g, e));
        dissipation.push(e.dot(&(&diss * e)));
    });
    Ok(Trajectory { times, states, h_d, v_eps, dissipation })
}

/// Simulates the Galerkin comparator (no multiplier trace).
pub fn simulate_fem(
    model: &FemModel,
    x0: &DVector<f64>,
    u_of_t: Option<InputSignal>,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    if t_final < dt {
        return Err(Error::Simulate(format!("horizon {t_final} shorter than dt {dt}")));
    }
    let stepper = MidpointStepper::new(&model.e_mat, &model.a_fe, &model.b_fe, dt)?;
    let mut h_d = Vec::new();
    let (times, states) = run(&stepper, x0, u_of_t, t_final, dt, |x| {
        h_d.push(model.energy(x));
    });
    let n_steps = times.len();
    Ok(Trajectory { times, states, h_d, v_eps: Vec::new(), dissipation: vec![0.0; n_steps] })
}

/// C1/C2 verification report for a free trajectory.
#[derive(Clone, Debug)]
pub struct MultiplierReport {
    /// Max over the trajectory of `|V_ε| − H_d/ε₀` relative to `H_d(0)`
    /// (condition C1; must be ≤ 0 up to rounding).
    pub c1_max_violation: f64,
    /// Max over interior instants of the relative violation of
    /// `V̇_ε ≤ −δH_d − Ḣ_d/ε₁` (condition C2, time-differenced).
    pub c2_max_violation: f64,
    /// Relative slack granted to C2 for the differencing error.
    pub c2_slack: f64,
    /// Whether both conditions hold within their tolerances.
    pub passed: bool,
    /// Set when the estimated time-differencing error exceeds the C2 slack,
    /// meaning the verdict is unreliable at this `dt`.
    pub dt_too_coarse: bool,
}

/// Relative slack for the time-differenced C2 check.
pub const C2_RELATIVE_SLACK: f64 = 1e-2;

/// Checks the multiplier conditions C1 (`|V_ε| ≤ H_d/ε₀`) and C2
/// (`V̇_ε ≤ −δH_d − Ḣ_d/ε₁`) along a free trajectory, with `V̇_ε` and `Ḣ_d`
/// approximated by central differences. Deliberately independent of the
/// closed-form rate identity, which the oracle verifies separately.
pub fn multiplier_trace(
    traj: &Trajectory,
    cert: &StabilityCertificate,
) -> Result<MultiplierReport> {
    let m = traj.times.len();
    if m < 3 || traj.v_eps.len() != m {
        return Err(Error::Simulate(
            "multiplier trace needs a mixed-scheme trajectory with >= 3 instants".into(),
        ));
    }
    let dt = traj.dt();
    let h0 = traj.h_d[0].max(f64::MIN_POSITIVE);

    let mut c1_max = f64::NEG_INFINITY;
    for k in 0..m {
        c1_max = c1_max.max((traj.v_eps[k].abs() - traj.h_d[k] / cert.epsilon0) / h0);
    }

    let mut c2_max = f64::NEG_INFINITY;
    let mut diff_err_max: f64 = 0.0;
    for k in 1..m - 1 {
        let v_dot = (traj.v_eps[k + 1] - traj.v_eps[k - 1]) / (2.0 * dt);
        let h_dot = (traj.h_d[k + 1] - traj.h_d[k - 1]) / (2.0 * dt);
        let bound = -cert.delta * traj.h_d[k] - h_dot / cert.epsilon1;
        let scale = (cert.delta * traj.h_d[k])
            .abs()
            .max(h_dot.abs() / cert.epsilon1)
            .max(v_dot.abs())
            .max(f64::MIN_POSITIVE);
        c2_max = c2_max.max((v_dot - bound) / scale);
        // The exact energy rate is −(dissipation at t_k); its deviation from
        // the central difference estimates the differencing error.
        let h_dot_exact = -traj.dissipation[k];
        diff_err_max = diff_err_max.max((h_dot - h_dot_exact).abs() / scale / cert.epsilon1);
    }
    let dt_too_coarse = diff_err_max > C2_RELATIVE_SLACK;
    let passed = c1_max <= 1e-12 && c2_max <= C2_RELATIVE_SLACK && !dt_too_coarse;
    Ok(MultiplierReport {
        c1_max_violation: c1_max,
        c2_max_violation: c2_max,
        c2_slack: C2_RELATIVE_SLACK,
        passed,
        dt_too_coarse,
    })
}

/// Least-squares slope of `ln H_d` over `t ≥ t_start`; the returned value is
/// the fitted exponential decay rate (positive for decaying energy).
pub fn fit_decay_rate(traj: &Trajectory, t_start: f64) -> f64 {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.h_d)
        .filter(|&(&t, &h)| t >= t_start && h > 0.0)
        .map(|(&t, &h)| (t, h.ln()))
        .collect();
    assert!(pts.len() >= 2, "not enough points for a decay fit");
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (sxx, sxy): (f64, f64) =
        pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t * t, b + t * y));
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -slope
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_mfem;
    use crate::model::{make_piezo_preset, make_wave_preset, Mesh};
    use crate::stability::discrete_certificate;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_initial_state(model: &DiscreteModel) -> DVector<f64> {
        // Smooth, boundary-compatible field: e^q = cos(πx/2), e^p = sin(πx)
        // sampled on the scheme's node sets.
        let n_elems = model.mesh.n_elems();
        let n = model.spec.n;
        let mut e = DVector::zeros(2 * n * n_elems);
        for i in 0..n {
            for k in 1..=n_elems {
                let x = model.mesh.node(k);
                e[model.dof.q_index(i, k - 1)] = (std::f64::consts::FRAC_PI_2 * x).cos();
                e[model.dof.p_index(i, k)] = (std::f64::consts::PI * x).sin();
            }
        }
        e
    }

    #[test]
    fn scalar_midpoint_decay_factor() {
        let s = DMatrix::from_element(1, 1, 1.0);
        let f = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::zeros(1, 1);
        let stepper = MidpointStepper::new(&s, &f, &b, 0.1).unwrap();
        let e1 = stepper.step(&DVector::from_element(1, 1.0), None);
        assert_relative_eq!(e1[0], (1.0 - 0.05) / (1.0 + 0.05), epsilon = 1e-15);
    }

    #[test]
    fn lossless_energy_is_conserved_per_step() {
        let spec = make_wave_preset(1.0, 1.0, 0.0).unwrap();
        let mesh = Mesh::for_spec(&spec, 16).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let e0 = smooth_initial_state(&model);
        let traj = simulate(&model, &e0, None, 5.0, default_dt(&model)).unwrap();
        let h0 = traj.h_d[0];
        for w in traj.h_d.windows(2) {
            assert!((w[1] - w[0]).abs() <= 1e-12 * h0, "drift {} per step", w[1] - w[0]);
        }
    }

    #[test]
    fn richardson_ratio_shows_third_order_local_error() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 8).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let e0 = smooth_initial_state(&model);
        let local_err = |dt: f64| {
            let full = MidpointStepper::new(&model.s_d, &model.f_matrix(), &model.b_d, dt)
                .unwrap()
                .step(&e0, None);
            let half = MidpointStepper::new(&model.s_d, &model.f_matrix(), &model.b_d, dt / 2.0)
                .unwrap();
            let two = half.step(&half.step(&e0, None), None);
            (full - two).norm()
        };
        // dt small enough that dt·λ_max ≪ 1 (asymptotic regime), large
        // enough that the O(dt³) defect dominates rounding.
        let ratio = local_err(2e-3) / local_err(1e-3);
        assert!((ratio - 8.0).abs() < 2.0, "Richardson ratio {ratio}");
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 8).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let traj =
            simulate(&model, &DVector::zeros(model.dim()), None, 1.0, 0.01).unwrap();
        for e in &traj.states {
            assert_eq!(e.norm(), 0.0);
        }
    }

    #[test]
    fn per_step_energy_balance_matches_midpoint_dissipation() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 20).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let e0 = smooth_initial_state(&model);
        let dt = default_dt(&model);
        let traj = simulate(&model, &e0, None, 2.0, dt).unwrap();
        let diss = model.dissipation_matrix();
        let h0 = traj.h_d[0];
        for m in 0..traj.states.len() - 1 {
            let e_mid = (&traj.states[m] + &traj.states[m + 1]) * 0.5;
            let balance = traj.h_d[m + 1] - traj.h_d[m] + dt * e_mid.dot(&(&diss * &e_mid));
            assert!(balance.abs() <= 1e-9 * h0, "step {m}: balance {balance}");
        }
    }

    #[test]
    fn energy_is_nonincreasing_without_input() {
        let spec = make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 0.8, 0.3).unwrap();
        let mesh = Mesh::for_spec(&spec, 12).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e0 = DVector::from_fn(model.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let traj = simulate(&model, &e0, None, 3.0, default_dt(&model)).unwrap();
        let h0 = traj.h_d[0];
        for w in traj.h_d.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * h0);
        }
    }

    #[test]
    fn decay_fit_beats_certificate_rate() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 40).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let cert = discrete_certificate(&spec, &mesh).unwrap();
        let e0 = smooth_initial_state(&model);
        let traj = simulate(&model, &e0, None, 20.0, default_dt(&model)).unwrap();
        let rate = fit_decay_rate(&traj, 10.0);
        assert!(
            rate >= 0.95 * cert.alpha,
            "fitted rate {rate} vs certificate {}",
            cert.alpha
        );
    }

    #[test]
    fn multiplier_conditions_hold_along_wave_trajectory() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 40).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let cert = discrete_certificate(&spec, &mesh).unwrap();
        let e0 = smooth_initial_state(&model);
        // Finer than the default step so the central-difference error stays
        // below the C2 slack.
        let traj = simulate(&model, &e0, None, 5.0, default_dt(&model) / 4.0).unwrap();
        let report = multiplier_trace(&traj, &cert).unwrap();
        assert!(report.c1_max_violation <= 1e-12, "C1 violation {}", report.c1_max_violation);
        assert!(report.c2_max_violation <= report.c2_slack, "C2 {}", report.c2_max_violation);
        assert!(!report.dt_too_coarse);
        assert!(report.passed);
    }

    #[test]
    fn multiplier_conditions_hold_along_piezo_trajectory() {
        let spec = make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 0.8, 0.3).unwrap();
        let mesh = Mesh::for_spec(&spec, 20).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let cert = discrete_certificate(&spec, &mesh).unwrap();
        let e0 = smooth_initial_state(&model);
        let traj = simulate(&model, &e0, None, 5.0, default_dt(&model) / 8.0).unwrap();
        let report = multiplier_trace(&traj, &cert).unwrap();
        assert!(report.passed, "report: {report:?}");
    }

    #[test]
    fn zero_trajectory_satisfies_conditions_trivially() {
        let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        let mesh = Mesh::for_spec(&spec, 8).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let cert = discrete_certificate(&spec, &mesh).unwrap();
        let traj =
            simulate(&model, &DVector::zeros(model.dim()), None, 1.0, 0.01).unwrap();
        let report = multiplier_trace(&traj, &cert).unwrap();
        assert!(report.c1_max_violation <= 0.0);
        assert!(report.passed);
    }

    #[test]
    fn forced_lossless_system_gains_energy_through_input() {
        let spec = make_wave_preset(1.0, 1.0, 0.0).unwrap();
        let mesh = Mesh::for_spec(&spec, 16).unwrap();
        let model = assemble_mfem(&spec, &mesh).unwrap();
        let u = |_t: f64| DVector::from_element(1, 1.0);
        let traj = simulate(
            &model,
            &DVector::zeros(model.dim()),
            Some(&u),
            2.0,
            default_dt(&model),
        )
        .unwrap();
        assert!(*traj.h_d.last().unwrap() > 0.0);
    }
}
