//! Per-element geometry: edge matrices, q-vectors (basis gradients),
//! heights, dihedral angles in the Euclidean and `D⁻¹` metrics, and the
//! mesh-level `D_acute` indicator.
//!
//! All formulas are written for a general dimension `d ∈ {1, 2, 3}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{factorial, Mesh};

/// Determinant of the edge matrix `[x_1 - x_0, ..., x_d - x_0]`.
pub fn simplex_det(pts: &[&[f64]]) -> f64 {
    let d = pts.len() - 1;
    let e = |i: usize, j: usize| pts[j + 1][i] - pts[0][i];
    match d {
        1 => e(0, 0),
        2 => e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0),
        3 => {
            e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
                + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
        }
        _ => panic!("simplex_det: unsupported dimension {d}"),
    }
}

/// Cofactor matrix of a d×d matrix (d <= 3), so that `E⁻ᵀ = cof(E) / det(E)`.
fn cofactor(e: &DMatrix<f64>) -> DMatrix<f64> {
    let d = e.nrows();
    match d {
        1 => DMatrix::from_element(1, 1, 1.0),
        2 => DMatrix::from_row_slice(2, 2, &[e[(1, 1)], -e[(1, 0)], -e[(0, 1)], e[(0, 0)]]),
        3 => DMatrix::from_fn(3, 3, |i, j| {
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            e[(r0, c0)] * e[(r1, c1)] - e[(r0, c1)] * e[(r1, c0)]
        }),
        _ => panic!("cofactor: unsupported dimension {d}"),
    }
}

#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Edge matrix `E = [x_1 - x_0, ..., x_d - x_0]`.
    pub edge_matrix: DMatrix<f64>,
    /// `q_0, ..., q_d`; `q_i = ∇φ_i` on the element.
    pub grads: Vec<DVector<f64>>,
    pub volume: f64,
    /// Euclidean heights `h_i = 1/‖q_i‖`.
    pub heights: Vec<f64>,
    /// Heights in the metric `D_K⁻¹`, `1/‖q_i‖_{D_K}`, when a field was supplied.
    pub metric_heights: Option<Vec<f64>>,
    /// `D_K` used for `metric_heights`.
    pub tensor: Option<DMatrix<f64>>,
}

impl ElementGeometry {
    pub fn dim(&self) -> usize {
        self.edge_matrix.nrows()
    }
}

/// Computes the geometry of element `k`. When `field` is given, `D_K` and
/// the metric heights are filled in as well.
pub fn element_geometry(mesh: &Mesh, k: usize, field: Option<&DiffusionField>) -> Result<ElementGeometry> {
    let d = mesh.dim();
    let verts = mesh.element(k);
    let x0 = mesh.vertex(verts[0]);
    let edge_matrix = DMatrix::from_fn(d, d, |i, j| mesh.vertex(verts[j + 1])[i] - x0[i]);
    let pts: Vec<&[f64]> = verts.iter().map(|&v| mesh.vertex(v)).collect();
    let det = simplex_det(&pts);
    if det == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateElement { element: k, det });
    }
    let inv_t = cofactor(&edge_matrix) / det;
    let mut grads = Vec::with_capacity(d + 1);
    let mut q0 = DVector::zeros(d);
    for i in 0..d {
        q0 -= inv_t.column(i);
    }
    grads.push(q0);
    for i in 0..d {
        grads.push(inv_t.column(i).into_owned());
    }
    let heights = grads.iter().map(|q| 1.0 / q.norm()).collect();
    let (metric_heights, tensor) = match field {
        Some(f) => {
            let dk = f.element_tensor(mesh, k)?;
            let h = grads.iter().map(|q| 1.0 / q.dot(&(&dk * q)).sqrt()).collect();
            (Some(h), Some(dk))
        }
        None => (None, None),
    };
    Ok(ElementGeometry {
        edge_matrix,
        grads,
        volume: det.abs() / factorial(d),
        heights,
        metric_heights,
        tensor,
    })
}

fn check_spd(m: &DMatrix<f64>) -> std::result::Result<(), String> {
    if !m.is_square() {
        return Err(format!("tensor is {}x{}, not square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err("tensor has non-finite entries".into());
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(format!("tensor is not symmetric ({i},{j})"));
            }
        }
    }
    if m.clone().cholesky().is_none() {
        return Err("tensor is not positive definite".into());
    }
    Ok(())
}

/// `(i≠j)` table of `cos α_ij = -q_iᵀ M q_j / (‖q_i‖_M ‖q_j‖_M)`.
///
/// `metric` is the tensor applied to the gradients: `D_K` gives the dihedral
/// angles in the metric `D_K⁻¹`, `None` gives the Euclidean angles. The
/// diagonal holds -1 (the formula with i = j) and carries no angle.
pub fn dihedral_cosines(geom: &ElementGeometry, metric: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let n = geom.grads.len();
    let mq: Vec<DVector<f64>> = match metric {
        Some(m) => {
            check_spd(m).map_err(Error::InvalidMetric)?;
            if m.nrows() != geom.dim() {
                return Err(Error::DimensionMismatch {
                    expected: geom.dim(),
                    actual: m.nrows(),
                });
            }
            geom.grads.iter().map(|q| m * q).collect()
        }
        None => geom.grads.clone(),
    };
    let norms: Vec<f64> = geom.grads.iter().zip(&mq).map(|(q, m)| q.dot(m).sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let c = -geom.grads[i].dot(&mq[j]) / (norms[i] * norms[j]);
        c.clamp(-1.0, 1.0)
    }))
}

/// How `D_K` is obtained from a spatially varying field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementAveraging {
    /// Value at the element centroid.
    #[default]
    Centroid,
    /// Arithmetic mean of the vertex values.
    Vertex,
    /// Mean over the element by the degree-2, `d+1`-point simplex rule.
    Quadrature,
}

type TensorFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

#[derive(Clone)]
enum FieldSource {
    Constant(DMatrix<f64>),
    Function(Arc<TensorFn>),
}

/// Symmetric positive definite diffusion tensor field `D(x)`.
#[derive(Clone)]
pub struct DiffusionField {
    dim: usize,
    source: FieldSource,
    averaging: ElementAveraging,
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("DiffusionField");
        s.field("dim", &self.dim);
        match &self.source {
            FieldSource::Constant(m) => s.field("constant", m),
            FieldSource::Function(_) => s.field("function", &"<fn>"),
        };
        s.field("averaging", &self.averaging).finish()
    }
}

impl DiffusionField {
    /// Constant tensor; must be symmetric positive definite.
    pub fn constant(tensor: DMatrix<f64>) -> Result<Self> {
        check_spd(&tensor).map_err(Error::InvalidField)?;
        Ok(DiffusionField {
            dim: tensor.nrows(),
            source: FieldSource::Constant(tensor),
            averaging: ElementAveraging::Centroid,
        })
    }

    /// Constant tensor from `dim * dim` row-major entries.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        Self::constant(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    /// Spatially varying tensor. SPD-ness is checked wherever the field is
    /// sampled for an element.
    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        DiffusionField {
            dim,
            source: FieldSource::Function(Arc::new(f)),
            averaging: ElementAveraging::Centroid,
        }
    }

    pub fn with_averaging(mut self, averaging: ElementAveraging) -> Self {
        self.averaging = averaging;
        self
    }

    pub fn averaging(&self) -> ElementAveraging {
        self.averaging
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.source, FieldSource::Constant(_))
    }

    /// The field multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let source = match &self.source {
            FieldSource::Constant(m) => FieldSource::Constant(m * c),
            FieldSource::Function(f) => {
                let f = Arc::clone(f);
                FieldSource::Function(Arc::new(move |x: &[f64]| f(x) * c))
            }
        };
        DiffusionField {
            dim: self.dim,
            source,
            averaging: self.averaging,
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.source {
            FieldSource::Constant(m) => m.clone(),
            FieldSource::Function(f) => f(x),
        }
    }

    /// `D_K` for element `k`, checked for symmetry and positive definiteness.
    pub fn element_tensor(&self, mesh: &Mesh, k: usize) -> Result<DMatrix<f64>> {
        if mesh.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: mesh.dim(),
                actual: self.dim,
            });
        }
        let f = match &self.source {
            FieldSource::Constant(m) => return Ok(m.clone()),
            FieldSource::Function(f) => f,
        };
        let verts = mesh.element(k);
        let d = mesh.dim();
        let tensor = match self.averaging {
            ElementAveraging::Centroid => {
                let mut c = vec![0.0; d];
                for &v in verts {
                    for (ci, xi) in c.iter_mut().zip(mesh.vertex(v)) {
                        *ci += xi;
                    }
                }
                c.iter_mut().for_each(|ci| *ci /= verts.len() as f64);
                f(&c)
            }
            ElementAveraging::Vertex => {
                let mut acc = DMatrix::zeros(d, d);
                for &v in verts {
                    acc += f(mesh.vertex(v));
                }
                acc / verts.len() as f64
            }
            ElementAveraging::Quadrature => {
                let n = verts.len() as f64;
                let beta = (n + 1.0 - (n + 1.0).sqrt()) / (n * (n + 1.0));
                let alpha = 1.0 - (n - 1.0) * beta;
                let mut acc = DMatrix::zeros(d, d);
                for q in 0..verts.len() {
                    let mut x = vec![0.0; d];
                    for (j, &v) in verts.iter().enumerate() {
                        let w = if j == q { alpha } else { beta };
                        for (xi, vi) in x.iter_mut().zip(mesh.vertex(v)) {
                            *xi += w * vi;
                        }
                    }
                    acc += f(&x);
                }
                acc / n
            }
        };
        check_spd(&tensor).map_err(|e| Error::InvalidField(format!("element {k}: {e}")))?;
        Ok(tensor)
    }
}

/// Element and vertex pair attaining the minimum in `D_acute`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstPair {
    pub index: usize,
    /// Global vertex indices of the pair.
    pub pair: (usize, usize),
    /// Unscaled `-(∇φ_i)ᵀ D_K ∇φ_j`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleConditionReport {
    pub d_acute: f64,
    pub d_acute_ave: f64,
    /// `D_acute >= 0` (anisotropic nonobtuse angle condition).
    pub anoac: bool,
    /// `D_acute > 0` (anisotropic acute angle condition).
    pub aaac: bool,
    pub worst_element: WorstPair,
    /// Round-off band used to decide `anoac`/`aaac`.
    pub tolerance: f64,
}

/// Squared average element size `(|Ω|/N_e)^{2/d}`.
pub fn size_factor(mesh: &Mesh) -> f64 {
    (mesh.domain_measure() / mesh.n_elements() as f64).powf(2.0 / mesh.dim() as f64)
}

/// Evaluates the `D_acute` indicator and its per-element average.
///
/// Values within `1e-12` (relative to the largest scaled diagonal term
/// `|q_i|²_{D_K}`) of zero count as zero when deciding ANOAC/AAAC.
pub fn d_acute(mesh: &Mesh, field: &DiffusionField) -> Result<AngleConditionReport> {
    if mesh.n_elements() == 0 {
        return Err(Error::InvalidDomain("mesh has no elements".into()));
    }
    let scale = size_factor(mesh);
    let mut worst = WorstPair {
        index: 0,
        pair: (0, 0),
        value: f64::INFINITY,
    };
    let mut sum = 0.0;
    let mut max_diag: f64 = 0.0;
    for k in 0..mesh.n_elements() {
        let geom = element_geometry(mesh, k, Some(field))?;
        let dk = geom.tensor.as_ref().expect("tensor requested");
        let dq: Vec<DVector<f64>> = geom.grads.iter().map(|q| dk * q).collect();
        let verts = mesh.element(k);
        let mut elem_min = f64::INFINITY;
        let mut elem_pair = (0, 0);
        for i in 0..geom.grads.len() {
            max_diag = max_diag.max(geom.grads[i].dot(&dq[i]));
            for j in (i + 1)..geom.grads.len() {
                let v = -geom.grads[i].dot(&dq[j]);
                if v < elem_min {
                    elem_min = v;
                    elem_pair = (verts[i], verts[j]);
                }
            }
        }
        sum += elem_min;
        if elem_min < worst.value {
            worst = WorstPair {
                index: k,
                pair: elem_pair,
                value: elem_min,
            };
        }
    }
    // `+ 0.0` turns a negative zero from `-(qᵢᵀD qⱼ)` into `0.0`.
    worst.value += 0.0;
    let d_acute = scale * worst.value + 0.0;
    let tolerance = 1e-12 * scale * max_diag;
    Ok(AngleConditionReport {
        d_acute,
        d_acute_ave: scale * sum / mesh.n_elements() as f64 + 0.0,
        anoac: d_acute >= -tolerance,
        aaac: d_acute > tolerance,
        worst_element: worst,
        tolerance,
    })
}

/// Largest Euclidean angle (degrees) over all elements and vertex pairs.
pub fn max_euclidean_angle(mesh: &Mesh) -> f64 {
    let mut min_cos: f64 = 1.0;
    for k in 0..mesh.n_elements() {
        let geom = element_geometry(mesh, k, None).expect("mesh elements are non-degenerate");
        let cos = dihedral_cosines(&geom, None).expect("euclidean metric");
        for i in 0..cos.nrows() {
            for j in (i + 1)..cos.ncols() {
                min_cos = min_cos.min(cos[(i, j)]);
            }
        }
    }
    min_cos.acos().to_degrees()
}
