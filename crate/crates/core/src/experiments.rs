//! Built-in test problems, exact-solution error measurement and
//! convergence studies.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{Lumping, ReactionFunction, Treatment};
use crate::error::{Error, Result};
use crate::geometry::DiffusionField;
use crate::mesh::{generate_structured_mesh, Mesh, Rect, StructuredMeshKind, StructuredVariant};
use crate::problem::ProblemSpec;
use crate::schemes::{run_simulation, SchemeConfig};

/// Nagumo parameter shared by the built-in examples.
pub const NAGUMO_A: f64 = 0.1;

/// Travelling-front solution `e^z/(e^z + 2)`, `z = 0.5(x + y) + 0.4t`, of
/// the isotropic Nagumo equation with `a = 0.1`.
pub fn exact_solution_ex1(x: f64, y: f64, t: f64) -> f64 {
    let z = 0.5 * (x + y) + 0.4 * t;
    if z >= 0.0 {
        1.0 / (1.0 + 2.0 * (-z).exp())
    } else {
        let e = z.exp();
        e / (e + 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    Ex1,
    Ex2,
    Ex3,
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" | "1" => Ok(Example::Ex1),
            "ex2" | "2" => Ok(Example::Ex2),
            "ex3" | "3" => Ok(Example::Ex3),
            _ => Err(Error::Config(format!(
                "unknown example '{s}' (expected ex1, ex2 or ex3)"
            ))),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Example::Ex1 => "ex1",
            Example::Ex2 => "ex2",
            Example::Ex3 => "ex3",
        })
    }
}

impl Example {
    pub fn rect(self) -> Rect {
        match self {
            Example::Ex2 => Rect::new(-100.0, 100.0, -170.0, 170.0),
            _ => Rect::new(-100.0, 100.0, -100.0, 100.0),
        }
    }

    pub fn diffusion(self) -> DiffusionField {
        match self {
            Example::Ex1 => DiffusionField::identity(2),
            Example::Ex2 => DiffusionField::constant(builtin_diffusion(self, 0.0, 0.0)).expect("SPD tensor"),
            Example::Ex3 => DiffusionField::from_fn(2, |x| builtin_diffusion(Example::Ex3, x[0], x[1])),
        }
    }

    /// Problem with the Nagumo reaction and initial/boundary data sampled
    /// from [`exact_solution_ex1`]. Only `Ex1` carries an exact solution.
    pub fn problem(self, t_final: f64) -> ProblemSpec {
        let exact: crate::problem::SpaceTimeFn = Arc::new(|x: &[f64], t: f64| exact_solution_ex1(x[0], x[1], t));
        ProblemSpec {
            name: self.to_string(),
            rect: self.rect(),
            field: self.diffusion(),
            reaction: ReactionFunction::nagumo(NAGUMO_A).expect("valid parameter"),
            boundary: exact.clone(),
            initial: Arc::new(|x: &[f64]| exact_solution_ex1(x[0], x[1], 0.0)),
            t_final,
            exact: (self == Example::Ex1).then_some(exact),
        }
    }
}

/// Diffusion tensors of the built-in examples.
///
/// `Ex3` follows circles around the origin with principal values 200
/// (tangential) and 1 (radial); at the origin the angle is fixed to `π/2`.
pub fn builtin_diffusion(example: Example, x: f64, y: f64) -> DMatrix<f64> {
    match example {
        Example::Ex1 => DMatrix::identity(2, 2),
        Example::Ex2 => {
            let r3 = 3f64.sqrt();
            DMatrix::from_row_slice(2, 2, &[203.0, 199.0 * r3, 199.0 * r3, 601.0]) / 4.0
        }
        Example::Ex3 => {
            let theta = if x == 0.0 && y == 0.0 {
                FRAC_PI_2
            } else {
                y.atan2(x) + FRAC_PI_2
            };
            let (s, c) = theta.sin_cos();
            let (l1, l2) = (200.0, 1.0);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    l1 * c * c + l2 * s * s,
                    (l1 - l2) * c * s,
                    (l1 - l2) * c * s,
                    l1 * s * s + l2 * c * c,
                ],
            )
        }
    }
}

/// Degree-5, 7-point triangle rule: barycentric points and weights summing
/// to one.
pub const TRIANGLE_RULE_7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// `(Σ_K ∫_K (u_h - u)² dx / |Ω|)^{1/2}` with the 7-point rule per
/// triangle.
pub fn scaled_l2_error(mesh: &Mesh, u_h: &[f64], exact: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<f64> {
    if mesh.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: mesh.dim(),
        });
    }
    if u_h.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_vertices(),
            actual: u_h.len(),
        });
    }
    let per_element: Vec<(f64, f64)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let el = mesh.element(k);
            let vol = mesh.element_volume(k);
            let p: Vec<&[f64]> = el.iter().map(|&v| mesh.vertex(v)).collect();
            let s: f64 = TRIANGLE_RULE_7
                .iter()
                .map(|(l, w)| {
                    let x = [
                        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                    ];
                    let uh = l[0] * u_h[el[0]] + l[1] * u_h[el[1]] + l[2] * u_h[el[2]];
                    let e = uh - exact(&x);
                    w * e * e
                })
                .sum();
            (vol * s, vol)
        })
        .collect();
    let (err2, area) = per_element
        .iter()
        .fold((0.0, 0.0), |(e, a), &(de, da)| (e + de, a + da));
    Ok((err2 / area).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMode {
    /// Fixed mesh, halved time steps.
    Time,
    /// Fixed time step, halved mesh spacing.
    Space,
}

impl FromStr for StudyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "time" => Ok(StudyMode::Time),
            "space" => Ok(StudyMode::Space),
            _ => Err(Error::Config(format!(
                "unknown study mode '{s}' (expected time or space)"
            ))),
        }
    }
}

/// What the time-mode errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorReference {
    /// The exact solution. Includes the spatial error of the mesh.
    Exact,
    /// A run on the same mesh with a time step 8 times smaller than the
    /// finest level, which removes the spatial error from the comparison.
    Reference,
}

impl FromStr for ErrorReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(ErrorReference::Exact),
            "reference" | "ref" => Ok(ErrorReference::Reference),
            _ => Err(Error::Config(format!(
                "unknown error reference '{s}' (expected exact or reference)"
            ))),
        }
    }
}

/// Ratio between the finest study time step and the reference time step.
pub const REFERENCE_REFINEMENT: f64 = 8.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    pub mode: StudyMode,
    pub variant: StructuredVariant,
    /// Subdivisions per side on the coarsest (space) or only (time) mesh.
    pub n: usize,
    /// Time step of the first level (time) or of every level (space).
    pub dt: f64,
    pub levels: usize,
    pub t_final: f64,
    pub treatment: Treatment,
    pub lumping: Lumping,
    /// Only consulted in time mode; space errors always use the exact
    /// solution.
    pub reference: ErrorReference,
}

impl ConvergenceSpec {
    /// Time study on a 100×100 `Right45` mesh, `dt = 0.5 … 0.0625`, `T = 10`.
    pub fn time_default() -> Self {
        ConvergenceSpec {
            mode: StudyMode::Time,
            variant: StructuredVariant::Right45,
            n: 100,
            dt: 0.5,
            levels: 4,
            t_final: 10.0,
            treatment: Treatment::Em,
            lumping: Lumping::Consistent,
            reference: ErrorReference::Reference,
        }
    }

    /// Space study on `Right45` meshes with 25…200 subdivisions,
    /// `dt = 1e-3`, `T = 0.25`.
    pub fn space_default() -> Self {
        ConvergenceSpec {
            mode: StudyMode::Space,
            variant: StructuredVariant::Right45,
            n: 25,
            dt: 1e-3,
            levels: 4,
            t_final: 0.25,
            treatment: Treatment::Em,
            lumping: Lumping::Consistent,
            reference: ErrorReference::Exact,
        }
    }

    fn level(&self, k: usize) -> (usize, f64) {
        match self.mode {
            StudyMode::Time => (self.n, self.dt / (1u64 << k) as f64),
            StudyMode::Space => (self.n << k, self.dt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    /// `dt` (time mode) or mesh spacing `h` along x (space mode).
    pub parameter: f64,
    pub n_elements: usize,
    pub dt: f64,
    /// Error used for the rate.
    pub error: f64,
    /// Error against the exact solution.
    pub exact_error: f64,
    /// `log2(e_{k-1}/e_k)`; absent on the first row.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub mode: StudyMode,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn final_rate(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate)
    }
}

/// Runs the levels of `spec` concurrently and measures the scaled L² error
/// at `spec.t_final`.
pub fn convergence_study(problem: &ProblemSpec, spec: &ConvergenceSpec) -> Result<ConvergenceTable> {
    if spec.levels < 2 {
        return Err(Error::Config("need ≥ 2 levels".into()));
    }
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::Config(format!("problem {} has no exact solution", problem.name)))?;
    let use_reference = spec.mode == StudyMode::Time && spec.reference == ErrorReference::Reference;
    let run = |n: usize, dt: f64| -> Result<(Mesh, Vec<f64>, f64)> {
        let kind = StructuredMeshKind::new(spec.variant, n, n, problem.rect);
        let mesh = generate_structured_mesh(&kind)?;
        let cfg = SchemeConfig::new(spec.treatment, spec.lumping, problem.reaction.clone(), dt);
        let (state, _) = run_simulation(problem, &mesh, &cfg, spec.t_final)?;
        Ok((mesh, state.u, state.t))
    };
    let mut jobs: Vec<(usize, f64)> = (0..spec.levels).map(|k| spec.level(k)).collect();
    if use_reference {
        let finest = jobs.last().expect("at least two levels").1;
        jobs.push((spec.n, finest / REFERENCE_REFINEMENT));
    }
    let runs: Vec<(Mesh, Vec<f64>, f64)> = jobs.par_iter().map(|&(n, dt)| run(n, dt)).collect::<Result<_>>()?;
    let mut errors = Vec::with_capacity(spec.levels);
    for (mesh, u, t) in &runs[..spec.levels] {
        let t = *t;
        let exact_error = scaled_l2_error(mesh, u, &|x: &[f64]| exact(x, t))?;
        let error = if use_reference {
            let (_, u_ref, _) = runs.last().expect("reference run");
            let diff: Vec<f64> = u.iter().zip(u_ref).map(|(a, b)| a - b).collect();
            discrete_l2(mesh, &diff)
        } else {
            exact_error
        };
        errors.push((mesh.n_elements(), error, exact_error));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(spec.levels);
    for (k, &(n_elements, error, exact_error)) in errors.iter().enumerate() {
        let (n, dt) = jobs[k];
        let parameter = match spec.mode {
            StudyMode::Time => dt,
            StudyMode::Space => (problem.rect.x1 - problem.rect.x0) / n as f64,
        };
        let rate = (k > 0).then(|| (errors[k - 1].1 / error).log2());
        rows.push(ConvergenceRow {
            parameter,
            n_elements,
            dt,
            error,
            exact_error,
            rate,
        });
    }
    Ok(ConvergenceTable { mode: spec.mode, rows })
}

/// `(∫ e_h² / |Ω|)^{1/2}` for a piecewise linear `e_h` vanishing on the
/// boundary, using the consistent mass matrix.
fn discrete_l2(mesh: &Mesh, e: &[f64]) -> f64 {
    let m = crate::assembly::Assembler::new(mesh).mass();
    let me = m.matvec(e);
    let s: f64 = e.iter().zip(&me).map(|(a, b)| a * b).sum();
    (s.max(0.0) / mesh.domain_measure()).sqrt()
}

/// Angle (radians) of the principal eigenvector of a symmetric 2×2 tensor.
pub fn principal_direction(d: &DMatrix<f64>) -> f64 {
    let theta = 0.5 * (2.0 * d[(0, 1)]).atan2(d[(0, 0)] - d[(1, 1)]);
    theta.rem_euclid(PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        assert!((exact_solution_ex1(0.0, 0.0, 0.0) - 1.0 / 3.0).abs() < 1e-16);
        let far = exact_solution_ex1(100.0, 100.0, 0.0);
        assert!(far.is_finite() && far <= 1.0 && 1.0 - far <= 2.0 * (-100f64).exp());
        let low = exact_solution_ex1(-100.0, -100.0, 0.0);
        assert!((low / ((-100f64).exp() / 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ex2_eigenstructure() {
        let d = builtin_diffusion(Example::Ex2, 0.0, 0.0);
        let eig = d.clone().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 200.0).abs() < 1e-12);
        assert!((principal_direction(&d).to_degrees() - 60.0).abs() < 1e-10);
    }

    #[test]
    fn ex3_axes() {
        let d = builtin_diffusion(Example::Ex3, 1.0, 0.0);
        assert!((d[(0, 0)] - 1.0).abs() < 1e-12 && (d[(1, 1)] - 200.0).abs() < 1e-12 && d[(0, 1)].abs() < 1e-12);
        let o = builtin_diffusion(Example::Ex3, 0.0, 0.0);
        assert!((o[(0, 0)] - 1.0).abs() < 1e-12 && (o[(1, 1)] - 200.0).abs() < 1e-12);
    }

    #[test]
    fn rule_weights_sum_to_one() {
        let s: f64 = TRIANGLE_RULE_7.iter().map(|r| r.1).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_level_rejected() {
        let mut spec = ConvergenceSpec::time_default();
        spec.levels = 1;
        let err = convergence_study(&Example::Ex1.problem(1.0), &spec).unwrap_err();
        assert!(err.to_string().contains("need ≥ 2 levels"));
    }
}
