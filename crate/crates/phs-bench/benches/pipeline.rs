//! Criterion benchmarks for the hot paths of the pipeline: assembly,
//! spectral-abscissa computation and the Riccati solve.

use criterion::{criterion_group, criterion_main, Criterion};

use phs_core::assembly::assemble_mfem;
use phs_core::lqr::lqr_design;
use phs_core::model::make_wave_preset;
use phs_core::stability::spectral_abscissa;
use phs_core::Mesh;

fn bench_assemble(c: &mut Criterion) {
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let mesh = Mesh::for_spec(&spec, 128).unwrap();
    c.bench_function("assemble_mfem N=128", |b| {
        b.iter(|| assemble_mfem(&spec, &mesh).unwrap())
    });
}

fn bench_abscissa(c: &mut Criterion) {
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let mesh = Mesh::for_spec(&spec, 128).unwrap();
    let model = assemble_mfem(&spec, &mesh).unwrap();
    c.bench_function("spectral_abscissa N=128", |b| {
        b.iter(|| spectral_abscissa(&model, None).unwrap())
    });
}

fn bench_lqr(c: &mut Criterion) {
    let spec = make_wave_preset(1.0, 1.0, 0.5).unwrap();
    let mesh = Mesh::for_spec(&spec, 40).unwrap();
    let model = assemble_mfem(&spec, &mesh).unwrap();
    c.bench_function("lqr_design N=40", |b| b.iter(|| lqr_design(&model).unwrap()));
}

criterion_group! {
    name = pipeline;
    config = Criterion::default().sample_size(10);
    targets = bench_assemble, bench_abscissa, bench_lqr
}
criterion_main!(pipeline);
