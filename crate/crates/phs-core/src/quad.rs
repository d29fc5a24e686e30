//! Composite Simpson quadrature.
//!
//! A single fixed quadrature rule is used everywhere an integral is needed
//! (input-map assembly and the verification oracle) so that a disagreement
//! between analytic values and quadrature indicts the analytic code, not the
//! integrator.

/// Integrates `f` over `[a, b]` with composite Simpson on `panels`
/// subintervals. `panels` is rounded up to the next even number.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels.max(2).next_multiple_of(2);
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for j in 1..m {
        let x = a + j as f64 * h;
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(x);
    }
    acc * h / 3.0
}
