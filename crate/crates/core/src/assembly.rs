//! Mass, stiffness and reaction matrices of the backward Euler system, and
//! the Dirichlet boundary vector.
//!
//! Every matrix built by an [`Assembler`] shares one sparsity pattern (the
//! full vertex connectivity, boundary rows included), so the linear
//! combinations formed at each time step are plain elementwise updates.
//! Rows of boundary vertices are zero in `M`, `B`, `C` and identity rows in
//! `A`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{element_geometry, DiffusionField};
use crate::mesh::{factorial, Mesh};
use crate::sparse::{CsrMatrix, TripletBuilder};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Reaction nonlinearity `f` in `u_t - ∇·(D∇u) = u f(u)` together with `f'`.
#[derive(Clone)]
pub struct ReactionFunction {
    f: ScalarFn,
    df: ScalarFn,
    nagumo: Option<f64>,
    name: String,
}

impl fmt::Debug for ReactionFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ReactionFunction").field("name", &self.name).finish()
    }
}

impl ReactionFunction {
    /// `f(u) = (1 - u)(u - a)`.
    pub fn nagumo(a: f64) -> Result<Self> {
        if !a.is_finite() || a <= 0.0 || a >= 1.0 {
            return Err(Error::InvalidReaction(format!(
                "Nagumo parameter a = {a} must lie in (0, 1)"
            )));
        }
        Ok(ReactionFunction {
            f: Arc::new(move |u| (1.0 - u) * (u - a)),
            df: Arc::new(move |u| 1.0 + a - 2.0 * u),
            nagumo: Some(a),
            name: format!("nagumo(a={a})"),
        })
    }

    /// `f ≡ 0` (pure diffusion).
    pub fn zero() -> Self {
        ReactionFunction {
            f: Arc::new(|_| 0.0),
            df: Arc::new(|_| 0.0),
            nagumo: None,
            name: "zero".into(),
        }
    }

    /// A user-supplied pair `(f, f')`. The derivative is checked against
    /// central differences of `f` on `[-2, 2]`.
    pub fn custom<F, G>(name: &str, f: F, df: G) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let h = 1e-5;
        for k in 0..=80 {
            let u = -2.0 + 0.05 * k as f64;
            let fd = (f(u + h) - f(u - h)) / (2.0 * h);
            let exact = df(u);
            if !exact.is_finite() || (fd - exact).abs() > 1e-6 * (1.0 + exact.abs()) {
                return Err(Error::InvalidReaction(format!(
                    "f' disagrees with finite differences of f at u = {u}: {exact} vs {fd}"
                )));
            }
        }
        Ok(ReactionFunction {
            f: Arc::new(f),
            df: Arc::new(df),
            nagumo: None,
            name: name.to_string(),
        })
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn df(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    /// The parameter `a` when this is the Nagumo preset.
    pub fn nagumo_parameter(&self) -> Option<f64> {
        self.nagumo
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// How the reaction term `u f(u)` is evaluated at the new time level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Treatment {
    /// Explicit: `u^n f(u^n)`.
    Em,
    /// Linearized implicit: `u^{n+1}(f + u f')(u^n) - (u^n)² f'(u^n)`.
    Im,
    /// `u^{n+1} f(u^n)`.
    Heim1,
    /// `u^{n+1} f⁻(u^n) + u^n f⁺(u^n)`.
    Heim2,
}

impl Treatment {
    pub const ALL: [Treatment; 4] = [Treatment::Em, Treatment::Im, Treatment::Heim1, Treatment::Heim2];

    /// Per-vertex weights of the implicit (`B`) and explicit (`C`) reaction
    /// matrices at the value `u`.
    pub fn weights(self, rf: &ReactionFunction, u: f64) -> (Option<f64>, Option<f64>) {
        match self {
            Treatment::Em => (None, Some(rf.f(u))),
            Treatment::Im => {
                let (f, df) = (rf.f(u), rf.df(u));
                (Some(f + u * df), Some(-u * df))
            }
            Treatment::Heim1 => (Some(rf.f(u)), None),
            Treatment::Heim2 => {
                let f = rf.f(u);
                (Some(f.min(0.0)), Some(f.max(0.0)))
            }
        }
    }

    pub fn has_b(self) -> bool {
        !matches!(self, Treatment::Em)
    }

    pub fn has_c(self) -> bool {
        !matches!(self, Treatment::Heim1)
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "em" => Ok(Treatment::Em),
            "im" => Ok(Treatment::Im),
            "heim1" | "heimi" => Ok(Treatment::Heim1),
            "heim2" | "heimii" => Ok(Treatment::Heim2),
            _ => Err(Error::Config(format!(
                "unknown treatment '{s}' (expected em, im, heim1 or heim2)"
            ))),
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Treatment::Em => "EM",
            Treatment::Im => "IM",
            Treatment::Heim1 => "HEIM1",
            Treatment::Heim2 => "HEIM2",
        })
    }
}

/// Consistent (exact integrals) or lumped (nodal quadrature) mass and
/// reaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lumping {
    Consistent,
    Lumped,
}

impl FromStr for Lumping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "consistent" | "none" | "off" => Ok(Lumping::Consistent),
            "lumped" | "lumping" | "on" => Ok(Lumping::Lumped),
            _ => Err(Error::Config(format!(
                "unknown lumping mode '{s}' (expected consistent or lumped)"
            ))),
        }
    }
}

impl fmt::Display for Lumping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lumping::Consistent => "consistent",
            Lumping::Lumped => "lumped",
        })
    }
}

/// `∫_K Π φ_i^{α_i} dx = |K| d! Π α_i! / (d + Σα_i)!` for a d-simplex of
/// measure `volume`; `alpha` lists the exponents of the barycentric
/// coordinates.
pub fn simplex_integral(d: usize, volume: f64, alpha: &[usize]) -> f64 {
    let num: f64 = alpha.iter().map(|&k| factorial(k)).product();
    let total: usize = alpha.iter().sum();
    volume * factorial(d) * num / factorial(d + total)
}

/// `∫_K φ_a φ_b φ_c / |K|` indexed `(a·n + b)·n + c`.
fn cubic_table(d: usize) -> Vec<f64> {
    let n = d + 1;
    let mut t = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut alpha = vec![0usize; n];
                alpha[a] += 1;
                alpha[b] += 1;
                alpha[c] += 1;
                t[(a * n + b) * n + c] = simplex_integral(d, 1.0, &alpha);
            }
        }
    }
    t
}

/// Shared sparsity pattern plus per-element bookkeeping for fast repeated
/// assembly on a fixed mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    dim: usize,
    boundary: Vec<bool>,
    connectivity: Vec<usize>,
    pattern: CsrMatrix,
    /// `(d+1)²` CSR slots per element, local row-major.
    slots: Vec<usize>,
    volumes: Vec<f64>,
    /// `|ω_i|`.
    patch_measure: Vec<f64>,
    diag_slots: Vec<usize>,
    cubic: Vec<f64>,
}

impl Assembler {
    pub fn new(mesh: &Mesh) -> Self {
        let d = mesh.dim();
        let n = d + 1;
        let nv = mesh.n_vertices();
        let mut t = TripletBuilder::with_capacity(nv, nv, mesh.n_elements() * n * n + nv);
        for el in mesh.elements() {
            for &i in el {
                for &j in el {
                    t.push(i, j, 0.0);
                }
            }
        }
        // Isolated vertices still get a diagonal slot.
        for i in 0..nv {
            t.push(i, i, 0.0);
        }
        let pattern = t.to_csr();
        let mut slots = Vec::with_capacity(mesh.n_elements() * n * n);
        for el in mesh.elements() {
            for &i in el {
                for &j in el {
                    slots.push(pattern.slot(i, j).expect("pattern covers element pairs"));
                }
            }
        }
        let volumes: Vec<f64> = (0..mesh.n_elements()).map(|k| mesh.element_volume(k)).collect();
        let mut patch_measure = vec![0.0; nv];
        for (el, vol) in mesh.elements().zip(&volumes) {
            for &i in el {
                patch_measure[i] += vol;
            }
        }
        let diag_slots = (0..nv).map(|i| pattern.slot(i, i).expect("diagonal present")).collect();
        Assembler {
            dim: d,
            boundary: mesh.boundary_flags().to_vec(),
            connectivity: mesh.connectivity().to_vec(),
            pattern,
            slots,
            volumes,
            patch_measure,
            diag_slots,
            cubic: cubic_table(d),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    /// All-zero matrix with the shared pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// `|ω_i|`, the measure of the patch of vertex `i`.
    pub fn patch_measure(&self) -> &[f64] {
        &self.patch_measure
    }

    fn local(&self, k: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.connectivity[k * n..(k + 1) * n]
    }

    /// Consistent mass matrix: `∫ φ_i φ_j` on interior rows, zero rows on
    /// the boundary.
    pub fn mass(&self) -> CsrMatrix {
        let n = self.dim + 1;
        let mut pair = vec![0usize; n];
        pair[0] = 1;
        pair[1] = 1;
        let off = simplex_integral(self.dim, 1.0, &pair);
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for (k, vol) in self.volumes.iter().enumerate() {
            let el = self.local(k);
            for a in 0..n {
                if self.boundary[el[a]] {
                    continue;
                }
                for b in 0..n {
                    let c = if a == b { 2.0 * off } else { off };
                    vals[self.slots[k * n * n + a * n + b]] += c * vol;
                }
            }
        }
        m
    }

    /// Diagonal of the lumped mass matrix: `|ω_i|/(d+1)` on interior
    /// vertices, zero on the boundary.
    pub fn lumped_mass_diagonal(&self) -> Vec<f64> {
        let n = (self.dim + 1) as f64;
        self.patch_measure
            .iter()
            .zip(&self.boundary)
            .map(|(&w, &b)| if b { 0.0 } else { w / n })
            .collect()
    }

    /// Lumped mass as a matrix on the shared pattern.
    pub fn lumped_mass(&self) -> CsrMatrix {
        self.diagonal_on_pattern(&self.lumped_mass_diagonal())
    }

    fn diagonal_on_pattern(&self, diag: &[f64]) -> CsrMatrix {
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for (&s, &v) in self.diag_slots.iter().zip(diag) {
            vals[s] = v;
        }
        m
    }

    /// Stiffness matrix `Σ_K |K| (∇φ_i)ᵀ D_K ∇φ_j` on interior rows, identity
    /// rows on the boundary.
    pub fn stiffness(&self, mesh: &Mesh, field: &DiffusionField) -> Result<CsrMatrix> {
        let n = self.dim + 1;
        let locals: Vec<Vec<f64>> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|k| {
                let geom = element_geometry(mesh, k, Some(field))?;
                let dk = geom.tensor.as_ref().expect("tensor requested");
                let dq: Vec<_> = geom.grads.iter().map(|q| dk * q).collect();
                let mut loc = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        loc[a * n + b] = geom.volume * geom.grads[a].dot(&dq[b]);
                    }
                }
                Ok(loc)
            })
            .collect::<Result<_>>()?;
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for (k, loc) in locals.iter().enumerate() {
            let el = self.local(k);
            for a in 0..n {
                if self.boundary[el[a]] {
                    continue;
                }
                for b in 0..n {
                    vals[self.slots[k * n * n + a * n + b]] += loc[a * n + b];
                }
            }
        }
        for (i, &b) in self.boundary.iter().enumerate() {
            if b {
                vals[self.diag_slots[i]] = 1.0;
            }
        }
        Ok(m)
    }

    /// Reaction matrix with per-vertex weight `w`.
    ///
    /// Consistent: `∫ w_h φ_j φ_i` with `w_h` the nodal interpolant of `w`,
    /// integrated exactly. Lumped: diagonal `|ω_i|/(d+1) w_i`. Boundary rows
    /// are zero in both cases.
    pub fn reaction_matrix(&self, weights: &[f64], lumping: Lumping) -> CsrMatrix {
        assert_eq!(weights.len(), self.n_vertices(), "one weight per vertex");
        match lumping {
            Lumping::Lumped => {
                let diag: Vec<f64> = self
                    .lumped_mass_diagonal()
                    .iter()
                    .zip(weights)
                    .map(|(m, w)| m * w)
                    .collect();
                self.diagonal_on_pattern(&diag)
            }
            Lumping::Consistent => {
                let n = self.dim + 1;
                let mut m = self.pattern.clone();
                let vals = m.values_mut();
                let mut wl = vec![0.0; n];
                for (k, vol) in self.volumes.iter().enumerate() {
                    let el = self.local(k);
                    for (c, &v) in el.iter().enumerate() {
                        wl[c] = weights[v];
                    }
                    for a in 0..n {
                        if self.boundary[el[a]] {
                            continue;
                        }
                        for b in 0..n {
                            let coef = &self.cubic[(a * n + b) * n..(a * n + b + 1) * n];
                            let s: f64 = coef.iter().zip(&wl).map(|(c, w)| c * w).sum();
                            vals[self.slots[k * n * n + a * n + b]] += vol * s;
                        }
                    }
                }
                m
            }
        }
    }

    /// Reaction matrices `(B, C)` of `treatment` at the state `u`.
    pub fn reaction(
        &self,
        u: &[f64],
        rf: &ReactionFunction,
        treatment: Treatment,
        lumping: Lumping,
    ) -> Result<ReactionMatrices> {
        if u.len() != self.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: self.n_vertices(),
                actual: u.len(),
            });
        }
        let w: Vec<(Option<f64>, Option<f64>)> = u.iter().map(|&ui| treatment.weights(rf, ui)).collect();
        let b = treatment.has_b().then(|| {
            let wb: Vec<f64> = w.iter().map(|p| p.0.unwrap_or(0.0)).collect();
            self.reaction_matrix(&wb, lumping)
        });
        let c = treatment.has_c().then(|| {
            let wc: Vec<f64> = w.iter().map(|p| p.1.unwrap_or(0.0)).collect();
            self.reaction_matrix(&wc, lumping)
        });
        Ok(ReactionMatrices { b, c })
    }
}

/// Implicit (`B`) and explicit (`C`) reaction matrices of one step.
#[derive(Debug, Clone)]
pub struct ReactionMatrices {
    pub b: Option<CsrMatrix>,
    pub c: Option<CsrMatrix>,
}

pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    Assembler::new(mesh).mass()
}

pub fn assemble_lumped_mass(mesh: &Mesh) -> Vec<f64> {
    Assembler::new(mesh).lumped_mass_diagonal()
}

pub fn assemble_stiffness(mesh: &Mesh, field: &DiffusionField) -> Result<CsrMatrix> {
    Assembler::new(mesh).stiffness(mesh, field)
}

pub fn assemble_reaction(
    mesh: &Mesh,
    u: &[f64],
    rf: &ReactionFunction,
    treatment: Treatment,
    lumping: Lumping,
) -> Result<ReactionMatrices> {
    Assembler::new(mesh).reaction(u, rf, treatment, lumping)
}

/// `g_i = g(x_i, t)` on boundary vertices, zero on interior ones.
pub fn boundary_vector(mesh: &Mesh, g: &(dyn Fn(&[f64], f64) -> f64 + Sync), t: f64) -> Vec<f64> {
    (0..mesh.n_vertices())
        .map(|i| if mesh.is_boundary(i) { g(mesh.vertex(i), t) } else { 0.0 })
        .collect()
}
