//! Command implementations. Each returns the process exit code: `0` iff
//! every contract of the command holds.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};

use phs_core::assembly::{assemble_fem, assemble_mfem, DiscreteModel};
use phs_core::lqr::gain_sweep;
use phs_core::model::Mesh;
use phs_core::oracle;
use phs_core::simulate::{default_dt, fit_decay_rate, multiplier_trace, simulate, simulate_fem};
use phs_core::stability::{
    continuous_certificate, discrete_certificate, stability_sweep, Scheme, StabilityCertificate,
};

use crate::config::RunConfig;
use crate::output::{emit_svg, write_csv, Cell, Series};

fn out_path(cfg: &RunConfig, stem: &str, ext: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(format!("{stem}_{}.{ext}", cfg.hash)))
}

fn print_certificate(kind: &str, cert: &StabilityCertificate) {
    println!(
        "{kind} certificate: delta = {:.12}, eps0 = {:.6}, eps1 = {:.6}, alpha = {:.6}, \
         sigma bound = {:.6} ({})",
        cert.delta,
        cert.epsilon0,
        cert.epsilon1,
        cert.alpha,
        cert.sigma_bound(),
        cert.method.as_str()
    );
}

/// `verify`: run the full oracle suite; exit 0 iff every check passes.
pub fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let reports = oracle::run_all(cfg.seed)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for r in &reports {
        println!(
            "{:<28} worst = {:>12.4e}  tol = {:>8.1e}  {}  [{}]",
            r.check_id,
            r.worst_error,
            r.tol,
            if r.passed { "PASS" } else { "FAIL" },
            r.params
        );
        ok &= r.passed;
        rows.push(vec![
            Cell::Text(r.check_id.to_string()),
            Cell::Float(r.worst_error),
            Cell::Float(r.tol),
            Cell::Int(r.passed as i64),
            Cell::Text(r.params.clone()),
        ]);
    }
    if cfg.emit_csv {
        let path = out_path(cfg, "verify", "csv")?;
        write_csv(&path, &["check_id", "worst_error", "tol", "passed", "params"], &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(if ok { 0 } else { 1 })
}

/// `stability`: certificates plus a spectral-abscissa sweep over `n_list`.
/// Exit 0 iff all open-loop abscissas are negative and, for the mixed
/// scheme, within the certified bound.
pub fn cmd_stability(cfg: &RunConfig) -> Result<i32> {
    let cont = continuous_certificate(&cfg.spec)?;
    print_certificate("continuous", &cont);
    let results = stability_sweep(&cfg.spec, &cfg.n_list, cfg.scheme, None)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for r in &results {
        let bound_ok = match cfg.scheme {
            Scheme::Mfem => r.sigma_max_open <= -r.alpha_bound / 2.0 + 1e-6,
            Scheme::Fem => r.sigma_max_open < 0.0,
        };
        ok &= bound_ok;
        println!(
            "N = {:>5}: sigma_max = {:>14.6e}, alpha^d = {:.6}, delta^d = {:.9}, {:.2}s {}",
            r.n_elems,
            r.sigma_max_open,
            r.alpha_bound,
            r.delta_d,
            r.wallclock,
            if bound_ok { "OK" } else { "VIOLATION" }
        );
        rows.push(vec![
            Cell::Int(r.n_elems as i64),
            Cell::Float(r.sigma_max_open),
            r.sigma_max_closed.map_or(Cell::Empty, Cell::Float),
            Cell::Float(r.alpha_bound),
            Cell::Float(r.delta_d),
            Cell::Float(r.wallclock),
        ]);
    }
    if cfg.emit_csv {
        let path = out_path(cfg, &format!("stability_{}", cfg.scheme.as_str()), "csv")?;
        write_csv(
            &path,
            &["n_elems", "sigma_max_open", "sigma_max_closed", "alpha_bound", "delta_d", "wallclock"],
            &rows,
        )?;
        println!("wrote {}", path.display());
    }
    if cfg.emit_svg {
        let pts: Vec<(f64, f64)> =
            results.iter().map(|r| (r.n_elems as f64, r.sigma_max_open)).collect();
        let bound: Vec<(f64, f64)> =
            results.iter().map(|r| (r.n_elems as f64, -r.alpha_bound / 2.0)).collect();
        let path = out_path(cfg, &format!("stability_{}", cfg.scheme.as_str()), "svg")?;
        emit_svg(
            &path,
            &format!("open-loop spectral abscissa ({})", cfg.scheme.as_str()),
            "N",
            "sigma_max",
            &[
                Series { label: "sigma_max(N)", points: &pts },
                Series { label: "-alpha^d/2", points: &bound },
            ],
        )?;
        println!("wrote {}", path.display());
    }
    Ok(if ok { 0 } else { 1 })
}

/// `lqr`: gain-convergence sweep; exit 0 iff every design satisfies the
/// Riccati residual tolerance and closes the loop stably.
pub fn cmd_lqr(cfg: &RunConfig) -> Result<i32> {
    let sweep = gain_sweep(&cfg.spec, &cfg.n_list, cfg.scheme)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for r in &sweep.rows {
        let row_ok = r.residual <= 1e-8 && r.closed_loop_abscissa < 0.0;
        ok &= row_ok;
        println!(
            "N = {:>5}: sup|k| = {:>12.4e}, diff = {}, residual = {:.2e}, closed sigma = {:>12.4e} {}",
            r.n_elems,
            r.sup_norm,
            r.diff_from_prev.map_or("      -".into(), |d| format!("{d:.4e}")),
            r.residual,
            r.closed_loop_abscissa,
            if row_ok { "OK" } else { "VIOLATION" }
        );
        rows.push(vec![
            Cell::Int(r.n_elems as i64),
            Cell::Float(r.sup_norm),
            r.diff_from_prev.map_or(Cell::Empty, Cell::Float),
            Cell::Float(r.residual),
            Cell::Float(r.closed_loop_abscissa),
        ]);
    }
    if cfg.emit_csv {
        let path = out_path(cfg, &format!("gains_{}", cfg.scheme.as_str()), "csv")?;
        write_csv(
            &path,
            &["n_elems", "sup_norm", "diff_from_prev", "residual", "closed_loop_abscissa"],
            &rows,
        )?;
        println!("wrote {}", path.display());
    }
    if cfg.emit_svg {
        // Interpolated profiles of the finest design, one chart per family.
        if let Some(last) = sweep.rows.last() {
            for (family, grids) in [("kq", &last.k_q_grid), ("kp", &last.k_p_grid)] {
                let pts: Vec<Vec<(f64, f64)>> = grids
                    .iter()
                    .map(|g| sweep.grid.iter().copied().zip(g.iter().copied()).collect())
                    .collect();
                let labels: Vec<String> =
                    (0..pts.len()).map(|i| format!("{family}[{i}]")).collect();
                let series: Vec<Series<'_>> = pts
                    .iter()
                    .zip(&labels)
                    .map(|(p, l)| Series { label: l, points: p })
                    .collect();
                let path =
                    out_path(cfg, &format!("profile_{family}_{}", cfg.scheme.as_str()), "svg")?;
                emit_svg(
                    &path,
                    &format!("{family} profile, N = {} ({})", last.n_elems, cfg.scheme.as_str()),
                    "x",
                    family,
                    &series,
                )?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(if ok { 0 } else { 1 })
}

/// Smooth compatible initial state on the mixed-scheme node layout:
/// `e^q_i(x) = cos(π x̂ / 2)` and `e^p_i(x) = sin(π x̂)` with `x̂` the
/// normalized coordinate (so `e^p(x_l) = 0` matches the clamped end).
fn initial_state_mfem(model: &DiscreteModel) -> DVector<f64> {
    let spec = &model.spec;
    let mesh = &model.mesh;
    let nn = model.dof.n * model.dof.n_elems;
    let mut e0 = DVector::zeros(2 * nn);
    let norm = |x: f64| (x - spec.x_l) / spec.ell();
    for i in 0..model.dof.n {
        for k in 0..model.dof.n_elems {
            let xq = norm(mesh.node(k));
            e0[model.dof.q_index(i, k)] = (std::f64::consts::FRAC_PI_2 * xq).cos();
            let xp = norm(mesh.node(k + 1));
            e0[model.dof.p_index(i, k + 1)] = (std::f64::consts::PI * xp).sin();
        }
    }
    e0
}

/// Same shapes on the Galerkin layout (both families at `x_1..x_N`).
fn initial_state_fem(n: usize, mesh: &Mesh, x_l: f64, ell: f64) -> DVector<f64> {
    let nn = n * mesh.n_elems();
    let mut x0 = DVector::zeros(2 * nn);
    for i in 0..n {
        for k in 1..=mesh.n_elems() {
            let xh = (mesh.node(k) - x_l) / ell;
            x0[i * mesh.n_elems() + k - 1] = (std::f64::consts::FRAC_PI_2 * xh).cos();
            x0[nn + i * mesh.n_elems() + k - 1] = (std::f64::consts::PI * xh).sin();
        }
    }
    x0
}

/// `simulate`: free evolution from a smooth initial state; emits the
/// trajectory CSV and the energy chart. For the mixed scheme the multiplier
/// conditions and the fitted decay rate are checked against the
/// certificate; exit 0 iff energy is nonincreasing and (mixed scheme) the
/// multiplier conditions hold.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let mesh = Mesh::for_spec(&cfg.spec, cfg.n_elems)?;
    let (traj, mfem_checks) = match cfg.scheme {
        Scheme::Mfem => {
            let model = assemble_mfem(&cfg.spec, &mesh)?;
            let dt = cfg.dt.unwrap_or_else(|| default_dt(&model) / 4.0);
            let traj = simulate(&model, &initial_state_mfem(&model), None, cfg.t_final, dt)?;
            let cert = discrete_certificate(&cfg.spec, &mesh)?;
            print_certificate("discrete", &cert);
            let report = multiplier_trace(&traj, &cert)?;
            println!(
                "multiplier check: C1 margin = {:.3e}, C2 margin = {:.3e} (slack {:.0e}){} -> {}",
                report.c1_max_violation,
                report.c2_max_violation,
                report.c2_slack,
                if report.dt_too_coarse { ", dt too coarse" } else { "" },
                if report.passed { "PASS" } else { "FAIL" }
            );
            let rate = fit_decay_rate(&traj, cfg.t_final / 2.0);
            println!("fitted decay rate = {:.6} (certified alpha = {:.6})", rate, cert.alpha);
            (traj, Some(report.passed))
        }
        Scheme::Fem => {
            let model = assemble_fem(&cfg.spec, &mesh)?;
            let dt = cfg.dt.unwrap_or(mesh.h() / 8.0);
            let x0 = initial_state_fem(cfg.spec.n, &mesh, cfg.spec.x_l, cfg.spec.ell());
            (simulate_fem(&model, &x0, None, cfg.t_final, dt)?, None)
        }
    };
    let h0 = traj.h_d[0].max(f64::MIN_POSITIVE);
    let monotone = traj.h_d.windows(2).all(|w| w[1] <= w[0] + 1e-10 * h0);
    println!(
        "H(0) = {:.6e}, H(T) = {:.6e}, energy nonincreasing: {}",
        traj.h_d[0],
        traj.h_d.last().unwrap(),
        monotone
    );

    if cfg.emit_csv {
        let rows: Vec<Vec<Cell>> = (0..traj.times.len())
            .map(|k| {
                vec![
                    Cell::Float(traj.times[k]),
                    Cell::Float(traj.h_d[k]),
                    traj.v_eps.get(k).map_or(Cell::Empty, |&v| Cell::Float(v)),
                    Cell::Float(traj.dissipation[k]),
                ]
            })
            .collect();
        let path = out_path(cfg, &format!("trajectory_{}", cfg.scheme.as_str()), "csv")?;
        write_csv(&path, &["t", "h_d", "v_eps", "dissipation"], &rows)?;
        println!("wrote {}", path.display());
    }
    if cfg.emit_svg {
        let energy: Vec<(f64, f64)> =
            traj.times.iter().copied().zip(traj.h_d.iter().copied()).collect();
        let path = out_path(cfg, &format!("energy_{}", cfg.scheme.as_str()), "svg")?;
        emit_svg(
            &path,
            &format!("discrete energy ({})", cfg.scheme.as_str()),
            "t",
            "H_d",
            &[Series { label: "H_d(t)", points: &energy }],
        )?;
        println!("wrote {}", path.display());
    }
    Ok(if monotone && mfem_checks.unwrap_or(true) { 0 } else { 1 })
}

/// `sweep`: open- and closed-loop abscissa table for both schemes (the
/// closed loop uses the per-`N` LQ gain). Exit 0 iff all closed loops are
/// stable.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    let mut rows = Vec::new();
    let mut ok = true;
    for scheme in [Scheme::Mfem, Scheme::Fem] {
        let designs: Vec<phs_core::LqrDesign> = cfg
            .n_list
            .iter()
            .map(|&n_elems| {
                let mesh = Mesh::for_spec(&cfg.spec, n_elems)?;
                Ok(match scheme {
                    Scheme::Mfem => phs_core::lqr::lqr_design(&assemble_mfem(&cfg.spec, &mesh)?)?,
                    Scheme::Fem => {
                        phs_core::lqr::lqr_design_fem(&assemble_fem(&cfg.spec, &mesh)?)?
                    }
                })
            })
            .collect::<phs_core::Result<_>>()?;
        let k_mats: Vec<DMatrix<f64>> = designs.iter().map(|d| d.k_d.clone()).collect();
        let results = stability_sweep(&cfg.spec, &cfg.n_list, scheme, Some(&k_mats))?;
        for r in &results {
            let closed = r.sigma_max_closed.expect("gains were supplied");
            ok &= closed < 0.0;
            println!(
                "{:<4} N = {:>5}: open = {:>14.6e}, closed = {:>14.6e}",
                scheme.as_str(),
                r.n_elems,
                r.sigma_max_open,
                closed
            );
            rows.push(vec![
                Cell::Text(scheme.as_str().to_string()),
                Cell::Int(r.n_elems as i64),
                Cell::Float(r.sigma_max_open),
                Cell::Float(closed),
                Cell::Float(r.alpha_bound),
                Cell::Float(r.delta_d),
            ]);
        }
    }
    if cfg.emit_csv {
        let path = out_path(cfg, "sweep", "csv")?;
        write_csv(
            &path,
            &["scheme", "n_elems", "sigma_max_open", "sigma_max_closed", "alpha_bound", "delta_d"],
            &rows,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(if ok { 0 } else { 1 })
}
