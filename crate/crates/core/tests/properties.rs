use std::sync::Arc;

use nagumo_core::assembly::{Lumping, ReactionFunction, Treatment};
use nagumo_core::experiments::{builtin_diffusion, scaled_l2_error, Example, NAGUMO_A};
use nagumo_core::geometry::{d_acute, max_euclidean_angle, DiffusionField};
use nagumo_core::mesh::{
    generate_structured_mesh, load_mesh, reorder_interior_first, save_mesh, Mesh, Rect, StructuredMeshKind,
    StructuredVariant,
};
use nagumo_core::problem::ProblemSpec;
use nagumo_core::schemes::{
    boundedness_window, nonnegativity_window, run_simulation, Enforcement, SchemeConfig, SimulationState, TimeStepper,
};
use nagumo_core::{exact_solution_ex1, Error};
use proptest::prelude::*;

fn mesh(variant: StructuredVariant, n: usize, rect: Rect) -> Mesh {
    generate_structured_mesh(&StructuredMeshKind::new(variant, n, n, rect)).unwrap()
}

fn unit() -> Rect {
    Rect::new(0.0, 1.0, 0.0, 1.0)
}

fn nagumo() -> ReactionFunction {
    ReactionFunction::nagumo(NAGUMO_A).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shuffled_meshes_reorder_to_interior_first(seed in any::<u64>(), n in 2usize..6) {
        let m = mesh(StructuredVariant::Right135, n, unit());
        let nv = m.n_vertices();
        let mut perm: Vec<usize> = (0..nv).collect();
        let mut s = seed;
        for i in (1..nv).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = m.permute_vertices(&perm).unwrap();
        let (r, _) = reorder_interior_first(&shuffled);
        prop_assert!(r.is_interior_first());
        prop_assert_eq!(r.n_interior(), (n - 1) * (n - 1));
        let (again, p2) = reorder_interior_first(&r);
        prop_assert!(p2.iter().enumerate().all(|(i, &p)| i == p));
        prop_assert_eq!(again.coords(), r.coords());
        prop_assert!((r.domain_measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structured_meshes_cover_the_rectangle(
        x0 in -10.0f64..0.0, w in 0.5f64..5.0, h in 0.5f64..5.0, n in 1usize..8, v in 0usize..3,
    ) {
        let variant = [StructuredVariant::Right45, StructuredVariant::Right135, StructuredVariant::Acute8][v];
        let h = if variant == StructuredVariant::Acute8 { w / 2.0 } else { h };
        let rect = Rect::new(x0, x0 + w, -h, h);
        let kind = StructuredMeshKind::new(variant, n, n, rect);
        let m = generate_structured_mesh(&kind).unwrap();
        prop_assert_eq!(m.n_elements(), kind.n_elements());
        prop_assert!((m.domain_measure() - rect.area()).abs() < 1e-10 * rect.area());
        prop_assert!((0..m.n_elements()).all(|k| m.element_volume(k) > 0.0));
    }
}

#[test]
fn save_load_roundtrip() {
    let m = mesh(StructuredVariant::Acute8, 3, Rect::new(-1.0, 2.0, 0.0, 3.0));
    let mut buf = Vec::new();
    save_mesh(&m, &mut buf).unwrap();
    let back = load_mesh(buf.as_slice()).unwrap();
    assert_eq!(back.connectivity(), m.connectivity());
    assert_eq!(back.coords(), m.coords());
    assert_eq!(back.boundary_flags(), m.boundary_flags());
}

#[test]
fn malformed_mesh_reports_line() {
    let text = "mesh 2 3 1\n0 0 1\n1 0 1\nfoo 1 1\n0 1 2\n";
    match load_mesh(text.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn acute_generator_is_acute_under_identity() {
    for n in [1, 5, 10] {
        let m = mesh(StructuredVariant::Acute8, n, unit());
        assert!(max_euclidean_angle(&m) < 90.0);
        let r = d_acute(&m, &DiffusionField::identity(2)).unwrap();
        assert!(r.aaac && r.d_acute > 0.0);
    }
}

#[test]
fn right_meshes_are_nonobtuse_only() {
    for v in [StructuredVariant::Right45, StructuredVariant::Right135] {
        let r = d_acute(&mesh(v, 8, unit()), &DiffusionField::identity(2)).unwrap();
        assert!(r.d_acute.abs() < 1e-12);
        assert!(r.anoac && !r.aaac);
    }
}

#[test]
fn steady_states_are_fixed_points() {
    let m = mesh(StructuredVariant::Right135, 6, unit());
    let field = DiffusionField::constant(builtin_diffusion(Example::Ex2, 0.0, 0.0)).unwrap();
    for t in Treatment::ALL {
        for l in [Lumping::Consistent, Lumping::Lumped] {
            for c in [0.0, 1.0] {
                let cfg = SchemeConfig::new(t, l, nagumo(), 0.3);
                let stepper = TimeStepper::new(&m, &field, cfg).unwrap();
                let mut s = SimulationState::new(vec![c; m.n_vertices()], 0.0);
                for _ in 0..3 {
                    stepper.step(&mut s, &|_, _| c, 0.3).unwrap();
                }
                let err = s.u.iter().map(|u| (u - c).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9, "{t} {l} c={c}: {err}");
            }
        }
    }
}

#[test]
fn zero_final_time_reports_initial_data() {
    let m = mesh(StructuredVariant::Right45, 10, Example::Ex1.rect());
    let cfg = SchemeConfig::new(Treatment::Em, Lumping::Consistent, nagumo(), 0.1);
    let (state, summary) = run_simulation(&Example::Ex1.problem(0.0), &m, &cfg, 0.0).unwrap();
    assert_eq!(summary.steps, 0);
    assert_eq!(state.u.len(), m.n_vertices());
    assert_eq!(summary.u_min, summary.initial_u_min);
    assert_eq!(summary.final_u_max, summary.initial_u_max);
}

#[test]
fn strict_enforcement_aborts_before_stepping() {
    let m = mesh(StructuredVariant::Right45, 10, Example::Ex2.rect());
    let cfg =
        SchemeConfig::new(Treatment::Em, Lumping::Consistent, nagumo(), 0.1).with_enforcement(Enforcement::Strict);
    match run_simulation(&Example::Ex2.problem(1.0), &m, &cfg, 1.0) {
        Err(Error::ConditionViolated { step, .. }) => assert_eq!(step, 1),
        other => panic!("expected violation, got {other:?}"),
    }
}

#[test]
fn warn_enforcement_records_violations() {
    let m = mesh(StructuredVariant::Right45, 10, Example::Ex2.rect());
    let cfg = SchemeConfig::new(Treatment::Em, Lumping::Consistent, nagumo(), 0.1).with_enforcement(Enforcement::Warn);
    let (_, summary) = run_simulation(&Example::Ex2.problem(0.3), &m, &cfg, 0.3).unwrap();
    assert_eq!(summary.violations.len(), 3);
}

#[test]
fn treatments_agree_to_second_order() {
    let m = mesh(StructuredVariant::Right45, 12, Rect::new(-5.0, 5.0, -5.0, 5.0));
    let field = DiffusionField::identity(2);
    let u0: Vec<f64> = (0..m.n_vertices())
        .map(|i| exact_solution_ex1(m.vertex(i)[0], m.vertex(i)[1], 0.0))
        .collect();
    let g = |x: &[f64], t: f64| exact_solution_ex1(x[0], x[1], t);
    let diff = |dt: f64| {
        let one = |t: Treatment| {
            let stepper =
                TimeStepper::new(&m, &field, SchemeConfig::new(t, Lumping::Consistent, nagumo(), dt)).unwrap();
            let mut s = SimulationState::new(u0.clone(), 0.0);
            stepper.step(&mut s, &g, dt).unwrap();
            s.u
        };
        let (a, b) = (one(Treatment::Em), one(Treatment::Im));
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let (d1, d2) = (diff(0.02), diff(0.01));
    let ratio = d1 / d2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn window_values_for_nagumo() {
    let m = mesh(StructuredVariant::Acute8, 4, unit());
    let field = DiffusionField::identity(2);
    let u = vec![0.5; m.n_vertices()];
    let upper = |t: Treatment| {
        let cfg = SchemeConfig::new(t, Lumping::Consistent, nagumo(), 0.1).with_window_range(0.0, 1.0);
        nonnegativity_window(&m, &field, &u, &cfg).unwrap().dt_upper
    };
    assert_eq!(upper(Treatment::Em), 10.0);
    assert!((upper(Treatment::Im) - 300.0 / 91.0).abs() < 1e-9);
    assert!((upper(Treatment::Heim1) - 1.0 / 0.2025).abs() < 1e-9);
    assert!(upper(Treatment::Heim2).is_infinite());
    let cfg = SchemeConfig::new(Treatment::Em, Lumping::Consistent, nagumo(), 0.1).with_window_range(0.0, 1.0);
    let b = boundedness_window(&m, &field, &u, &cfg).unwrap();
    assert!((b.dt_upper - 1.0 / 0.9).abs() < 1e-6);
}

#[test]
fn boundedness_requires_nagumo() {
    let m = mesh(StructuredVariant::Acute8, 2, unit());
    let rf = ReactionFunction::custom("cubic", |u: f64| -u * u * u, |u: f64| -3.0 * u * u).unwrap();
    let cfg = SchemeConfig::new(Treatment::Em, Lumping::Consistent, rf, 0.1);
    let r = boundedness_window(&m, &DiffusionField::identity(2), &vec![0.5; m.n_vertices()], &cfg);
    assert!(matches!(r, Err(Error::UnsupportedAnalysis(_))));
}

#[test]
fn exact_solution_satisfies_the_equation() {
    let mut s = 12345u64;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let h = 1e-3;
    for _ in 0..100 {
        let (x, y, t) = (next() * 20.0 - 10.0, next() * 20.0 - 10.0, next() * 10.0);
        let u = |x: f64, y: f64, t: f64| exact_solution_ex1(x, y, t);
        let c = u(x, y, t);
        let ut = (u(x, y, t + h) - u(x, y, t - h)) / (2.0 * h);
        let lap = (u(x + h, y, t) + u(x - h, y, t) + u(x, y + h, t) + u(x, y - h, t) - 4.0 * c) / (h * h);
        let res = ut - lap - c * (1.0 - c) * (c - 0.1);
        assert!(res.abs() < 1e-6, "residual {res}");
    }
}

#[test]
fn rotating_tensor_has_fixed_spectrum() {
    for k in 0..50 {
        let a = k as f64 * 0.37;
        let (x, y) = (50.0 * a.cos(), 30.0 * a.sin());
        let d = builtin_diffusion(Example::Ex3, x, y);
        let mut ev: Vec<f64> = d.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-10 && (ev[1] - 200.0).abs() < 1e-9);
        assert!((d[(0, 1)] - d[(1, 0)]).abs() < 1e-12);
    }
}

#[test]
fn scaled_error_examples() {
    let m = mesh(StructuredVariant::Right45, 4, unit());
    let c = vec![-0.3; m.n_vertices()];
    assert!((scaled_l2_error(&m, &c, &|_| 0.0).unwrap() - 0.3).abs() < 1e-12);
    let zero = vec![0.0; m.n_vertices()];
    assert!((scaled_l2_error(&m, &zero, &|x| x[0]).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    let lin: Vec<f64> = (0..m.n_vertices())
        .map(|i| 2.0 * m.vertex(i)[0] - m.vertex(i)[1])
        .collect();
    assert!(scaled_l2_error(&m, &lin, &|x| 2.0 * x[0] - x[1]).unwrap() < 1e-12);
}

/// `x² - y²` is harmonic, so with `f ≡ 0` it is a steady state of the
/// continuous problem; on a right mesh the discrete Laplacian is exact for it.
#[test]
fn harmonic_quadratic_is_stationary() {
    let m = mesh(StructuredVariant::Right45, 8, unit());
    let exact = Arc::new(|x: &[f64], _t: f64| x[0] * x[0] - x[1] * x[1]);
    let problem = ProblemSpec {
        name: "harmonic".into(),
        rect: unit(),
        field: DiffusionField::identity(2),
        reaction: ReactionFunction::zero(),
        boundary: exact.clone(),
        initial: Arc::new(|x: &[f64]| x[0] * x[0] - x[1] * x[1]),
        t_final: 1.0,
        exact: Some(exact),
    };
    for l in [Lumping::Consistent, Lumping::Lumped] {
        let cfg = SchemeConfig::new(Treatment::Em, l, ReactionFunction::zero(), 0.25);
        let (state, _) = run_simulation(&problem, &m, &cfg, 1.0).unwrap();
        for i in 0..m.n_vertices() {
            let p = m.vertex(i);
            assert!((state.u[i] - (p[0] * p[0] - p[1] * p[1])).abs() < 1e-9);
        }
    }
}

/// Linear data with `f ≡ 0` is reproduced at every step size.
#[test]
fn linear_steady_state_is_exact() {
    let m = mesh(StructuredVariant::Right135, 6, unit());
    let exact = Arc::new(|x: &[f64], _t: f64| 1.0 + x[0] + 2.0 * x[1]);
    let problem = ProblemSpec {
        name: "linear".into(),
        rect: unit(),
        field: DiffusionField::identity(2),
        reaction: ReactionFunction::zero(),
        boundary: exact.clone(),
        initial: Arc::new(|x: &[f64]| 1.0 + x[0] + 2.0 * x[1]),
        t_final: 1.0,
        exact: Some(exact),
    };
    for dt in [0.5, 0.25, 0.1] {
        let cfg = SchemeConfig::new(Treatment::Em, Lumping::Consistent, ReactionFunction::zero(), dt);
        let (state, _) = run_simulation(&problem, &m, &cfg, 1.0).unwrap();
        let err = scaled_l2_error(&m, &state.u, &|x| 1.0 + x[0] + 2.0 * x[1]).unwrap();
        assert!(err < 1e-9);
    }
}
