//! Strict TOML run configuration.
//!
//! Unknown keys are fatal (`deny_unknown_fields`) so a typo never silently
//! changes an experiment. Parameter profiles of custom systems are
//! arithmetic expressions over `x` (see [`crate::expr`]).

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Deserialize;

use phs_core::model::{
    make_piezo_preset, make_wave_preset, ParamProfile, ProfileMatrix, ScalarFn,
};
use phs_core::stability::Scheme;
use phs_core::SystemSpec;

use crate::expr;

/// `[system]` section: a preset by name or a fully custom definition.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// `"wave"`, `"piezo"`, or absent for a custom system.
    pub preset: Option<String>,
    // Preset constants (each optional, preset-specific defaults apply).
    pub rho0: Option<f64>,
    pub tau0: Option<f64>,
    pub kappa1: Option<f64>,
    pub alpha0: Option<f64>,
    pub gamma: Option<f64>,
    pub mu0: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    // Custom definition.
    pub n: Option<usize>,
    pub x_l: Option<f64>,
    pub x_r: Option<f64>,
    /// `A` by rows.
    pub a: Option<Vec<Vec<f64>>>,
    /// Diagonal of `K`.
    pub k: Option<Vec<f64>>,
    /// One expression in `x` per variable.
    pub theta_q: Option<Vec<String>>,
    pub theta_p: Option<Vec<String>>,
    /// Input shape expressions, `n × l` by rows (default: no input).
    pub b_q: Option<Vec<Vec<String>>>,
    pub b_p: Option<Vec<Vec<String>>>,
}

/// `[run]` section: experiment parameters shared by all commands.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_list: Vec<usize>,
    pub scheme: String,
    pub seed: u64,
    pub t_final: f64,
    /// `0` selects the CFL-based default step divided by 4 (fine enough for
    /// the time-differenced multiplier checks).
    pub dt: f64,
    /// Mesh size for `simulate`.
    pub n_elems: usize,
    pub out_dir: String,
    pub formats: Vec<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_list: vec![10, 20, 40, 80, 160],
            scheme: "mfem".into(),
            seed: 0,
            t_final: 20.0,
            dt: 0.0,
            n_elems: 40,
            out_dir: "out".into(),
            formats: vec!["csv".into(), "svg".into()],
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    system: SystemSection,
    run: RunSection,
}

/// Fully validated run configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub spec: SystemSpec,
    pub system_name: String,
    pub n_list: Vec<usize>,
    pub scheme: Scheme,
    pub seed: u64,
    pub t_final: f64,
    /// `None` → default step / 4.
    pub dt: Option<f64>,
    pub n_elems: usize,
    pub out_dir: PathBuf,
    pub emit_csv: bool,
    pub emit_svg: bool,
    /// Short hash of the config text, used in artifact filenames.
    pub hash: String,
}

/// Parses and validates a config document. TOML syntax and unknown-key
/// errors carry line/column information from the parser.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).context("config parse error")?;
    let (spec, system_name) = build_spec(&file.system)?;
    let run = file.run;
    if run.n_list.is_empty() {
        bail!("run.n_list must be nonempty");
    }
    if !run.n_list.windows(2).all(|w| w[0] < w[1]) {
        bail!("run.n_list must be strictly ascending");
    }
    let scheme = parse_scheme(&run.scheme)?;
    if !(run.t_final > 0.0) {
        bail!("run.t_final must be positive");
    }
    if run.dt < 0.0 || !run.dt.is_finite() {
        bail!("run.dt must be a nonnegative finite number (0 = automatic)");
    }
    if run.n_elems < 2 {
        bail!("run.n_elems must be >= 2");
    }
    let mut emit_csv = false;
    let mut emit_svg = false;
    for f in &run.formats {
        match f.as_str() {
            "csv" => emit_csv = true,
            "svg" => emit_svg = true,
            other => bail!("unknown format `{other}` (expected csv or svg)"),
        }
    }
    Ok(RunConfig {
        spec,
        system_name,
        n_list: run.n_list,
        scheme,
        seed: run.seed,
        t_final: run.t_final,
        dt: (run.dt > 0.0).then_some(run.dt),
        n_elems: run.n_elems,
        out_dir: PathBuf::from(run.out_dir),
        emit_csv,
        emit_svg,
        hash: crate::output::short_hash(text),
    })
}

/// Parses `mfem`/`fem`.
pub fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "mfem" => Ok(Scheme::Mfem),
        "fem" => Ok(Scheme::Fem),
        other => bail!("unknown scheme `{other}` (expected mfem or fem)"),
    }
}

fn require_unused(section: &SystemSection, preset: &str, fields: &[(&str, bool)]) -> Result<()> {
    for (name, set) in fields {
        if *set {
            bail!("key `{name}` does not apply to preset `{preset}`");
        }
    }
    let _ = section;
    Ok(())
}

fn build_spec(sys: &SystemSection) -> Result<(SystemSpec, String)> {
    match sys.preset.as_deref() {
        None if sys.n.is_some() => build_custom(sys).map(|s| (s, "custom".into())),
        Some("wave") | None => {
            require_unused(
                sys,
                "wave",
                &[
                    ("alpha0", sys.alpha0.is_some()),
                    ("gamma", sys.gamma.is_some()),
                    ("mu0", sys.mu0.is_some()),
                    ("k1", sys.k1.is_some()),
                    ("k2", sys.k2.is_some()),
                    ("n", sys.n.is_some()),
                    ("a", sys.a.is_some()),
                    ("k", sys.k.is_some()),
                    ("theta_q", sys.theta_q.is_some()),
                    ("theta_p", sys.theta_p.is_some()),
                ],
            )?;
            let kappa1 = sys.kappa1.unwrap_or(0.5);
            if kappa1 < 0.0 {
                bail!("K must be positive definite (kappa1 = {kappa1})");
            }
            let spec = make_wave_preset(sys.rho0.unwrap_or(1.0), sys.tau0.unwrap_or(1.0), kappa1)?;
            Ok((spec, "wave".into()))
        }
        Some("piezo") => {
            require_unused(
                sys,
                "piezo",
                &[
                    ("kappa1", sys.kappa1.is_some()),
                    ("n", sys.n.is_some()),
                    ("a", sys.a.is_some()),
                    ("k", sys.k.is_some()),
                    ("theta_q", sys.theta_q.is_some()),
                    ("theta_p", sys.theta_p.is_some()),
                ],
            )?;
            let (k1, k2) = (sys.k1.unwrap_or(0.8), sys.k2.unwrap_or(0.3));
            if k1 <= 0.0 || k2 <= 0.0 {
                bail!("K must be positive definite (k1 = {k1}, k2 = {k2})");
            }
            let spec = make_piezo_preset(
                sys.rho0.unwrap_or(1.0),
                sys.alpha0.unwrap_or(1.0),
                sys.gamma.unwrap_or(0.5),
                sys.mu0.unwrap_or(1.0),
                sys.tau0.unwrap_or(1.0),
                k1,
                k2,
            )?;
            Ok((spec, "piezo".into()))
        }
        Some(other) => bail!("unknown preset `{other}` (expected wave or piezo)"),
    }
}

fn compile_profiles(label: &str, exprs: &[String]) -> Result<Vec<ParamProfile>> {
    exprs
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let e = expr::parse(src).with_context(|| format!("{label}[{i}]"))?;
            Ok(ParamProfile::new(format!("{label}[{i}] = {src}"), move |x| e.eval(x)))
        })
        .collect()
}

fn compile_input(
    label: &str,
    rows: Option<&Vec<Vec<String>>>,
    n: usize,
    l: usize,
) -> Result<ProfileMatrix> {
    let Some(rows) = rows else {
        return Ok(ProfileMatrix::zeros(n, l));
    };
    if rows.len() != n || rows.iter().any(|r| r.len() != l) {
        bail!("{label} must be {n} rows × {l} columns of expressions");
    }
    let mut compiled = Vec::with_capacity(n * l);
    for (i, row) in rows.iter().enumerate() {
        for (j, src) in row.iter().enumerate() {
            let e = expr::parse(src).with_context(|| format!("{label}[{i}][{j}]"))?;
            compiled.push(Arc::new(move |x| e.eval(x)) as ScalarFn);
        }
    }
    let mut it = compiled.into_iter();
    Ok(ProfileMatrix::from_fn(n, l, |_, _| it.next().expect("sized above")))
}

fn build_custom(sys: &SystemSection) -> Result<SystemSpec> {
    let n = sys.n.context("custom system needs `n`")?;
    let a_rows = sys.a.as_ref().context("custom system needs `a` (rows of A)")?;
    let k_diag = sys.k.as_ref().context("custom system needs `k` (diagonal of K)")?;
    let theta_q = sys.theta_q.as_ref().context("custom system needs `theta_q`")?;
    let theta_p = sys.theta_p.as_ref().context("custom system needs `theta_p`")?;
    if a_rows.len() != n || a_rows.iter().any(|r| r.len() != n) {
        bail!("`a` must be an {n}×{n} matrix given by rows");
    }
    if k_diag.len() != n {
        bail!("`k` must list the {n} diagonal entries of K");
    }
    if k_diag.iter().any(|&v| v < 0.0) {
        bail!("K must be positive definite (diagonal {k_diag:?})");
    }
    if theta_q.len() != n || theta_p.len() != n {
        bail!("theta_q and theta_p must each list {n} expressions");
    }
    let a = DMatrix::from_fn(n, n, |i, j| a_rows[i][j]);
    let k = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(k_diag));
    let l = sys
        .b_q
        .as_ref()
        .or(sys.b_p.as_ref())
        .map_or(0, |rows| rows.first().map_or(0, Vec::len));
    let spec = SystemSpec::new(
        n,
        sys.x_l.unwrap_or(0.0),
        sys.x_r.unwrap_or(1.0),
        a,
        k,
        compile_profiles("theta_q", theta_q)?,
        compile_profiles("theta_p", theta_p)?,
        compile_input("b_q", sys.b_q.as_ref(), n, l)?,
        compile_input("b_p", sys.b_p.as_ref(), n, l)?,
    )?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_wave_config_fills_defaults() {
        let cfg = parse_config("[system]\npreset = \"wave\"\n").unwrap();
        assert_eq!(cfg.system_name, "wave");
        assert_eq!(cfg.spec.n, 1);
        assert_eq!(cfg.n_list, vec![10, 20, 40, 80, 160]);
        assert!(matches!(cfg.scheme, Scheme::Mfem));
        assert!(cfg.emit_csv && cfg.emit_svg);
        assert_eq!(cfg.hash.len(), 12);
    }

    #[test]
    fn empty_config_is_the_wave_preset() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.system_name, "wave");
    }

    #[test]
    fn negative_kappa_rejected() {
        let err = parse_config("[system]\npreset = \"wave\"\nkappa1 = -1\n").unwrap_err();
        assert!(err.to_string().contains("K must be positive definite"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let err = parse_config("[system]\npreset = \"wave\"\n\n[run]\nshceme = \"fem\"\n")
            .unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("shceme"), "{msg}");
        assert!(msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn custom_expression_matches_preset_profile() {
        let text = r#"
[system]
n = 1
a = [[1.0]]
k = [0.5]
theta_q = ["(10 - x)/10"]
theta_p = ["10/(10 - x)"]
"#;
        let cfg = parse_config(text).unwrap();
        let preset = make_wave_preset(1.0, 1.0, 0.5).unwrap();
        for g in 0..=1000 {
            let x = g as f64 / 1000.0;
            assert!(
                (cfg.spec.theta_q[0].eval(x) - preset.theta_q[0].eval(x)).abs() <= 1e-15
            );
            assert!(
                (cfg.spec.theta_p[0].eval(x) - preset.theta_p[0].eval(x)).abs() <= 1e-14
            );
        }
    }

    #[test]
    fn preset_rejects_foreign_constants() {
        let err = parse_config("[system]\npreset = \"wave\"\ngamma = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("does not apply"), "{err}");
    }
}
