//! Acceptance suite: one test per acceptance criterion, each printing a
//! single `ACCEPTANCE n: PASS/FAIL` verdict line with pinned tolerances.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use phs_core::assembly::{assemble_fem, assemble_mfem};
use phs_core::lqr::{gain_sweep, lqr_design, lqr_design_fem, solve_care, StateSpace};
use phs_core::model::{
    make_piezo_preset, make_wave_preset, ParamProfile, ProfileMatrix, SystemSpec,
};
use phs_core::oracle;
use phs_core::simulate::{default_dt, fit_decay_rate, multiplier_trace, simulate};
use phs_core::stability::{
    continuous_certificate, discrete_certificate, large_n_search, stability_sweep, Scheme,
};
use phs_core::Mesh;

fn verdict(criterion: u32, pass: bool, detail: &str) {
    println!("ACCEPTANCE {criterion}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion}: {detail}");
}

/// Wave-like anisotropic 3-variable system used to exercise n = 3 paths.
fn three_variable_spec() -> SystemSpec {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.1, 2.0, 0.2, 0.0, 0.4, 2.0]);
    let k = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, 1.0, 1.5]));
    let base = |x: f64| (10.0 - x) / 10.0;
    let theta_q: Vec<ParamProfile> = (0..3)
        .map(|i| {
            let s = 1.0 + 0.5 * i as f64;
            ParamProfile::new(format!("theta_q[{}]", i + 1), move |x| s * base(x))
        })
        .collect();
    let theta_p: Vec<ParamProfile> = (0..3)
        .map(|i| {
            let s = 1.0 + 0.25 * i as f64;
            ParamProfile::new(format!("theta_p[{}]", i + 1), move |x| s / base(x))
        })
        .collect();
    SystemSpec::new(
        3,
        0.0,
        1.0,
        a,
        k,
        theta_q,
        theta_p,
        ProfileMatrix::zeros(3, 0),
        ProfileMatrix::zeros(3, 0),
    )
    .expect("valid spec")
}

#[test]
fn acceptance_1_piezo_certificates() {
    let start = Instant::now();
    let spec = make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 0.8, 0.3).unwrap();
    let target = 8.0 / 9.0;
    let cont = continuous_certificate(&spec).unwrap();
    let mut pass = (cont.delta - target).abs() <= 1e-6;
    let mut detail = format!("delta_c = {:.9}", cont.delta);
    for n_elems in [10usize, 100, 1000] {
        let mesh = Mesh::for_spec(&spec, n_elems).unwrap();
        let disc = discrete_certificate(&spec, &mesh).unwrap();
        pass &= (disc.delta - target).abs() <= 1e-6;
        detail.push_str(&format!(", delta_d(N={n_elems}) = {:.9}", disc.delta));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 10.0;
    detail.push_str(&format!(", {elapsed:.2}s (limit 10s)"));
    verdict(1, pass, &detail);
}

#[test]
fn acceptance_2_lemma_suites() {
    let start = Instant::now();
    let n_list = [3usize, 5, 17, 64];
    let mut pass = true;
    let mut detail = String::new();
    let mut note = |p: bool, what: &str| {
        if !p {
            detail.push_str(what);
            detail.push_str("; ");
        }
        pass &= p;
    };
    for &n_elems in &n_list {
        let r = oracle::check_basis_identities(n_elems, 2024 + n_elems as u64);
        note(r.passed, &format!("basis N={n_elems} worst={:.2e}", r.worst_error));
        let r = oracle::check_inner_identities(n_elems, 99 + n_elems as u64).unwrap();
        note(r.passed, &format!("inner N={n_elems} worst={:.2e}", r.worst_error));
        for n in 1..=3usize {
            let r = oracle::check_matrix_identities(n, n_elems, 7 * n as u64).unwrap();
            note(r.passed, &format!("matrix n={n} N={n_elems} worst={:.2e}", r.worst_error));
            let r = oracle::check_w_bound(n, n_elems, 10_000, 13 * n as u64).unwrap();
            note(r.passed, &format!("w-bound n={n} N={n_elems} worst={:.2e}", r.worst_error));
        }
    }
    // Rate-formula check on assembled models covering n = 1, 2, 3.
    let specs: Vec<SystemSpec> = vec![
        make_wave_preset(1.0, 1.0, 0.5).unwrap(),
        make_piezo_preset(1.0, 1.0, 0.5, 1.0, 1.0, 0.8, 0.3).unwrap(),
        three_variable_spec(),
    ];
    for spec in &specs {
        for &n_elems in &n_list {
            let mesh = Mesh::for_spec(spec, n_elems).unwrap();
            let model = assemble_mfem(spec, &mesh).unwrap();
            let r = oracle::check_dve_formula(&model, 5 + n_elems as u64).unwrap();
            note(r.passed, &format!("dVe n={} N={n_elems} worst={:.2e}", spec.n, r.worst_error));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    note(elapsed < 60.0, &format!("suite took {elapsed:.1}s (limit 60s)"));
    verdict(2, pass, &detail);
}

#[test]
fn acceptance_3_mfem_uniform_stability() {
    let start = Instant::now();
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let n_list = [10usize, 20, 40, 80, 160, 320];
    let rows = stability_sweep(&spec, &n_list, Scheme::Mfem, None).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for r in &rows {
        let ok = r.sigma_max_open <= -r.alpha_bound / 2.0 + 1e-6;
        pass &= ok;
        detail.push_str(&format!(
            "N={}: sigma={:.6e} vs bound {:.6e}{}; ",
            r.n_elems,
            r.sigma_max_open,
            -r.alpha_bound / 2.0,
            if ok { "" } else { " VIOLATION" }
        ));
    }
    let sigma10 = rows[0].sigma_max_open.abs();
    let sup = rows.iter().map(|r| r.sigma_max_open).fold(f64::NEG_INFINITY, f64::max);
    let uniform = sup <= -0.9 * sigma10;
    pass &= uniform;
    detail.push_str(&format!("sup sigma = {sup:.6e}, -0.9|sigma(10)| = {:.6e}", -0.9 * sigma10));
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    detail.push_str(&format!(", {elapsed:.1}s (limit 300s)"));
    verdict(3, pass, &detail);
}

#[test]
fn acceptance_4_fem_degeneration() {
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let n_list = [10usize, 20, 40, 80, 160, 320];
    let rows = stability_sweep(&spec, &n_list, Scheme::Fem, None).unwrap();
    let mags: Vec<f64> = rows.iter().map(|r| r.sigma_max_open.abs()).collect();
    let decreasing = mags.windows(2).all(|w| w[1] < w[0]);
    let halved = mags[5] < 0.5 * mags[0];
    let detail = format!("|sigma| = {mags:?}, decreasing = {decreasing}, halved = {halved}");
    verdict(4, decreasing && halved, &detail);
}

fn initial_state(model: &phs_core::DiscreteModel) -> DVector<f64> {
    let dof = &model.dof;
    let mesh = &model.mesh;
    let ell = model.spec.ell();
    let mut e0 = DVector::zeros(2 * dof.n * dof.n_elems);
    for i in 0..dof.n {
        for k in 0..dof.n_elems {
            let xq = (mesh.node(k) - model.spec.x_l) / ell;
            e0[dof.q_index(i, k)] = (std::f64::consts::FRAC_PI_2 * xq).cos();
            let xp = (mesh.node(k + 1) - model.spec.x_l) / ell;
            e0[dof.p_index(i, k + 1)] = (std::f64::consts::PI * xp).sin();
        }
    }
    e0
}

#[test]
fn acceptance_5_energy_decay_and_conservation() {
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let mesh = Mesh::for_spec(&spec, 40).unwrap();
    let model = assemble_mfem(&spec, &mesh).unwrap();
    let cert = discrete_certificate(&spec, &mesh).unwrap();
    let dt = default_dt(&model);
    let traj = simulate(&model, &initial_state(&model), None, 20.0, dt).unwrap();
    let h0 = traj.h_d[0];
    let monotone = traj.h_d.windows(2).all(|w| w[1] <= w[0] + 1e-12 * h0);
    let rate = fit_decay_rate(&traj, 10.0);
    let rate_ok = rate >= 0.95 * cert.alpha;

    // Lossless comparison run: boundary damping off, 10^4 steps.
    let lossless = make_wave_preset(1.0, 1.0, 0.0).unwrap();
    let model0 = assemble_mfem(&lossless, &mesh).unwrap();
    let dt0 = default_dt(&model0);
    let traj0 =
        simulate(&model0, &initial_state(&model0), None, 10_000.0 * dt0, dt0).unwrap();
    let h00 = traj0.h_d[0];
    let drift =
        traj0.h_d.iter().map(|&h| (h - h00).abs() / h00).fold(0.0_f64, f64::max);
    let conserved = traj0.h_d.len() > 10_000 && drift <= 1e-10;

    let detail = format!(
        "fit rate = {rate:.6} vs 0.95*alpha = {:.6}, monotone = {monotone}, \
         lossless drift = {drift:.2e} over {} steps",
        0.95 * cert.alpha,
        traj0.h_d.len() - 1
    );
    verdict(5, rate_ok && monotone && conserved, &detail);
}

#[test]
fn acceptance_6_multiplier_conditions() {
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let mesh = Mesh::for_spec(&spec, 40).unwrap();
    let model = assemble_mfem(&spec, &mesh).unwrap();
    let cert = discrete_certificate(&spec, &mesh).unwrap();
    let dt = default_dt(&model);
    let traj = simulate(&model, &initial_state(&model), None, 20.0, dt).unwrap();
    let report = multiplier_trace(&traj, &cert).unwrap();
    let c1_ok = report.c1_max_violation <= 1e-12;
    let c2_ok = report.c2_max_violation <= report.c2_slack;
    let detail = format!(
        "C1 margin = {:.3e} (zero violations required), C2 margin = {:.3e} (slack {:.0e}), \
         dt_too_coarse = {}",
        report.c1_max_violation, report.c2_max_violation, report.c2_slack, report.dt_too_coarse
    );
    verdict(6, c1_ok && c2_ok, &detail);
}

#[test]
fn acceptance_7_care_correctness() {
    // Scalar analytic case: a = −1, b = w = r = 1 gives Π = √2 − 1.
    let ss = StateSpace {
        a: DMatrix::from_element(1, 1, -1.0),
        b: DMatrix::from_element(1, 1, 1.0),
        w: DMatrix::from_element(1, 1, 1.0),
        r: DMatrix::from_element(1, 1, 1.0),
    };
    let sol = solve_care(&ss, None).unwrap();
    let analytic = 2.0_f64.sqrt() - 1.0;
    let scalar_ok = (sol.pi[(0, 0)] - analytic).abs() <= 1e-10;

    // Every produced design: residual and closed-loop stability contracts.
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let mesh = Mesh::for_spec(&spec, 20).unwrap();
    let mfem = lqr_design(&assemble_mfem(&spec, &mesh).unwrap()).unwrap();
    let fem = lqr_design_fem(&assemble_fem(&spec, &mesh).unwrap()).unwrap();
    let designs_ok = [&mfem, &fem]
        .iter()
        .all(|d| d.residual <= 1e-8 && d.closed_loop_abscissa < 0.0);

    let detail = format!(
        "scalar |Pi - (sqrt2-1)| = {:.2e}, residuals = ({:.2e}, {:.2e}), \
         closed abscissas = ({:.3e}, {:.3e})",
        (sol.pi[(0, 0)] - analytic).abs(),
        mfem.residual,
        fem.residual,
        mfem.closed_loop_abscissa,
        fem.closed_loop_abscissa
    );
    verdict(7, scalar_ok && designs_ok, &detail);
}

#[test]
fn acceptance_8_gain_convergence() {
    let start = Instant::now();
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let n_list = [20usize, 40, 80, 160];

    let mfem = gain_sweep(&spec, &n_list, Scheme::Mfem).unwrap();
    let diffs: Vec<f64> = mfem.rows.iter().filter_map(|r| r.diff_from_prev).collect();
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let last = mfem.rows.last().unwrap();
    let final_rel = diffs.last().unwrap() / last.sup_norm;
    let converged = final_rel <= 0.1;

    let fem = gain_sweep(&spec, &n_list, Scheme::Fem).unwrap();
    let sups: Vec<f64> = fem.rows.iter().map(|r| r.sup_norm).collect();
    let diverging = sups.windows(2).all(|w| w[1] > w[0]);

    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!(
        "mfem diffs = {diffs:?} (decreasing = {decreasing}), final rel diff = {final_rel:.5} \
         (<= 0.1 required), fem sup norms = {sups:?} (growing = {diverging}), \
         {elapsed:.1}s (limit 600s)",
    );
    verdict(8, decreasing && converged && diverging && elapsed < 600.0, &detail);
}

#[test]
fn acceptance_9_large_n_margin_recovery() {
    // θ(x) = x + 1 on [0, 1]: δ^c = 1 − sup x/(x+1) = 1/2.
    let spec = SystemSpec::new(
        1,
        0.0,
        1.0,
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        vec![ParamProfile::new("theta_q[1]", |x| x + 1.0).with_derivative(|_| 1.0)],
        vec![ParamProfile::new("theta_p[1]", |x| x + 1.0).with_derivative(|_| 1.0)],
        ProfileMatrix::zeros(1, 0),
        ProfileMatrix::zeros(1, 0),
    )
    .unwrap();
    let cont = continuous_certificate(&spec).unwrap();
    let delta_ok = (cont.delta - 0.5).abs() <= 1e-9;
    let report = large_n_search(&spec, cont.delta, 14).unwrap();
    let found = report.n_star.is_some();
    let last = report.probes.last().unwrap();
    let detail = format!(
        "delta_c = {:.9}, probes = {:?}, N* = {:?} (needs delta_d >= {:.6})",
        cont.delta,
        report.probes,
        report.n_star,
        0.5 * (1.0 - 1e-3)
    );
    verdict(9, delta_ok && found && last.1 >= 0.5 * (1.0 - 1e-3), &detail);
}
