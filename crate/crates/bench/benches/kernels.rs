use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nagumo_core::experiments::{Example, NAGUMO_A};
use nagumo_core::schemes::{SchemeConfig, SimulationState, TimeStepper};
use nagumo_core::{
    d_acute, generate_structured_mesh, Assembler, Lumping, Mesh, ReactionFunction, StructuredMeshKind,
    StructuredVariant, Treatment,
};

fn ex2_mesh(n: usize) -> Mesh {
    let kind = StructuredMeshKind::new(StructuredVariant::Right135, n, n, Example::Ex2.rect());
    generate_structured_mesh(&kind).unwrap()
}

fn assembly(c: &mut Criterion) {
    let mesh = ex2_mesh(80);
    let field = Example::Ex2.diffusion();
    let asm = Assembler::new(&mesh);
    let rf = ReactionFunction::nagumo(NAGUMO_A).unwrap();
    let u: Vec<f64> = (0..mesh.n_vertices()).map(|i| (i % 7) as f64 / 7.0).collect();
    c.bench_function("stiffness 80x80", |b| {
        b.iter(|| asm.stiffness(&mesh, black_box(&field)).unwrap())
    });
    c.bench_function("reaction IM consistent 80x80", |b| {
        b.iter(|| {
            asm.reaction(black_box(&u), &rf, Treatment::Im, Lumping::Consistent)
                .unwrap()
        })
    });
    c.bench_function("d_acute 80x80", |b| {
        b.iter(|| d_acute(black_box(&mesh), &field).unwrap())
    });
}

fn stepping(c: &mut Criterion) {
    let mesh = ex2_mesh(80);
    let problem = Example::Ex2.problem(1.0);
    let cfg = SchemeConfig::new(Treatment::Em, Lumping::Consistent, problem.reaction.clone(), 0.1);
    let stepper = TimeStepper::new(&mesh, &problem.field, cfg).unwrap();
    let start = SimulationState::from_initial(&mesh, problem.initial.as_ref(), 0.0);
    c.bench_function("EM step 80x80", |b| {
        b.iter_batched(
            || start.clone(),
            |mut s| stepper.step(&mut s, problem.boundary.as_ref(), 0.1).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, assembly, stepping);
criterion_main!(benches);
