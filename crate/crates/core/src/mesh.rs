//! Simplicial meshes with interior-first vertex ordering.
//!
//! A [`Mesh`] stores vertex coordinates and element connectivity in flat
//! arrays. Boundary vertices are detected from the topology: a vertex is on
//! the boundary iff it belongs to a facet shared by exactly one element.
//! Meshes produced by [`generate_structured_mesh`] and [`load_mesh`] are
//! always ordered so that the first [`Mesh::n_interior`] vertices are the
//! interior ones.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::simplex_det;

/// Facet key: sorted vertex indices padded with `usize::MAX` (d <= 3).
type FacetKey = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    elements: Vec<usize>,
    boundary: Vec<bool>,
    n_interior: usize,
    patches: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds a mesh from flat coordinate and connectivity arrays.
    ///
    /// Every element must be non-degenerate and positively oriented
    /// (`det(E) > 0`). The vertex order is kept as given; use
    /// [`reorder_interior_first`] to obtain the interior-first ordering.
    pub fn new(dim: usize, coords: Vec<f64>, elements: Vec<usize>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDomain(format!("unsupported dimension {dim}")));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim * (coords.len() / dim + 1),
                actual: coords.len(),
            });
        }
        let nv = coords.len() / dim;
        let npe = dim + 1;
        if !elements.len().is_multiple_of(npe) {
            return Err(Error::DimensionMismatch {
                expected: npe * (elements.len() / npe + 1),
                actual: elements.len(),
            });
        }
        if let Some(&index) = elements.iter().find(|&&v| v >= nv) {
            return Err(Error::IndexOutOfRange { index, n_vertices: nv });
        }

        let mut mesh = Mesh {
            dim,
            coords,
            elements,
            boundary: vec![false; nv],
            n_interior: 0,
            patches: vec![Vec::new(); nv],
        };
        for k in 0..mesh.n_elements() {
            mesh.check_element(k)?;
        }
        mesh.detect_boundary();
        mesh.build_patches();
        Ok(mesh)
    }

    fn check_element(&self, k: usize) -> Result<()> {
        let pts: Vec<&[f64]> = self.element(k).iter().map(|&v| self.vertex(v)).collect();
        let det = simplex_det(&pts);
        let scale = pts[1..]
            .iter()
            .map(|p| p.iter().zip(pts[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
            .powi(self.dim as i32);
        if det.abs() <= 1e-13 * scale || !det.is_finite() {
            return Err(Error::DegenerateElement { element: k, det });
        }
        if det < 0.0 {
            return Err(Error::Orientation { element: k, det });
        }
        Ok(())
    }

    fn detect_boundary(&mut self) {
        let npe = self.dim + 1;
        let mut counts: HashMap<FacetKey, u32> = HashMap::with_capacity(self.n_elements() * npe);
        for elem in self.elements.chunks_exact(npe) {
            for skip in 0..npe {
                *counts.entry(facet_key(elem, skip)).or_insert(0) += 1;
            }
        }
        for (key, count) in counts {
            if count == 1 {
                for &v in key.iter().take(self.dim) {
                    self.boundary[v] = true;
                }
            }
        }
        self.n_interior = self.boundary.iter().filter(|&&b| !b).count();
    }

    fn build_patches(&mut self) {
        let npe = self.dim + 1;
        for (k, elem) in self.elements.chunks_exact(npe).enumerate() {
            for &v in elem {
                self.patches[v].push(k);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    /// Number of interior vertices `N_vi`.
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Vertex indices of element `k`.
    pub fn element(&self, k: usize) -> &[usize] {
        let npe = self.dim + 1;
        &self.elements[k * npe..(k + 1) * npe]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[usize]> {
        self.elements.chunks_exact(self.dim + 1)
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.elements
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Elements incident to vertex `i` (the patch ω_i).
    pub fn patch(&self, i: usize) -> &[usize] {
        &self.patches[i]
    }

    /// True when all interior vertices precede all boundary vertices.
    pub fn is_interior_first(&self) -> bool {
        self.boundary[..self.n_interior].iter().all(|&b| !b)
    }

    /// Volume (area in 2D) of element `k`.
    pub fn element_volume(&self, k: usize) -> f64 {
        let pts: Vec<&[f64]> = self.element(k).iter().map(|&v| self.vertex(v)).collect();
        simplex_det(&pts).abs() / factorial(self.dim)
    }

    /// Measure of the meshed domain, Σ_K |K|.
    pub fn domain_measure(&self) -> f64 {
        (0..self.n_elements()).map(|k| self.element_volume(k)).sum()
    }

    /// Relabels vertices: vertex `old` becomes `perm[old]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Mesh> {
        let nv = self.n_vertices();
        if perm.len() != nv {
            return Err(Error::DimensionMismatch {
                expected: nv,
                actual: perm.len(),
            });
        }
        let mut seen = vec![false; nv];
        for &p in perm {
            if p >= nv || seen[p] {
                return Err(Error::Config("vertex permutation is not a bijection".into()));
            }
            seen[p] = true;
        }
        let mut coords = vec![0.0; self.coords.len()];
        for (old, &new) in perm.iter().enumerate() {
            coords[new * self.dim..(new + 1) * self.dim].copy_from_slice(self.vertex(old));
        }
        let elements = self.elements.iter().map(|&v| perm[v]).collect();
        Mesh::new(self.dim, coords, elements)
    }
}

fn facet_key(elem: &[usize], skip: usize) -> FacetKey {
    let mut key = [usize::MAX; 3];
    let mut n = 0;
    for (j, &v) in elem.iter().enumerate() {
        if j != skip {
            key[n] = v;
            n += 1;
        }
    }
    key[..n].sort_unstable();
    key
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

/// Moves interior vertices ahead of boundary vertices, preserving relative
/// order within each group. Returns the reordered mesh and the permutation
/// mapping old indices to new ones.
pub fn reorder_interior_first(mesh: &Mesh) -> (Mesh, Vec<usize>) {
    let nv = mesh.n_vertices();
    let mut perm = vec![0; nv];
    let mut next = 0;
    for (i, slot) in perm.iter_mut().enumerate() {
        if !mesh.is_boundary(i) {
            *slot = next;
            next += 1;
        }
    }
    for (i, slot) in perm.iter_mut().enumerate() {
        if mesh.is_boundary(i) {
            *slot = next;
            next += 1;
        }
    }
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return (mesh.clone(), perm);
    }
    let reordered = mesh
        .permute_vertices(&perm)
        .expect("interior-first permutation is a bijection of a valid mesh");
    (reordered, perm)
}

/// Axis-aligned rectangle `(x0, x1) × (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl FromStr for Rect {
    type Err = Error;

    /// Parses `x0,x1,y0,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad rectangle '{s}': {e}")))?;
        match vals[..] {
            [x0, x1, y0, y1] => Ok(Rect { x0, x1, y0, y1 }),
            _ => Err(Error::Config(format!(
                "rectangle '{s}' needs four comma-separated values x0,x1,y0,y1"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructuredVariant {
    /// Two right triangles per cell, hypotenuse from lower-left to upper-right.
    Right45,
    /// Two right triangles per cell, hypotenuse from lower-right to upper-left.
    Right135,
    /// Eight acute triangles per cell.
    Acute8,
}

impl StructuredVariant {
    pub fn elements_per_cell(self) -> usize {
        match self {
            StructuredVariant::Right45 | StructuredVariant::Right135 => 2,
            StructuredVariant::Acute8 => 8,
        }
    }
}

impl FromStr for StructuredVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "right45" | "mesh45" => Ok(StructuredVariant::Right45),
            "right135" | "mesh135" => Ok(StructuredVariant::Right135),
            "acute8" | "acute" | "meshacute" => Ok(StructuredVariant::Acute8),
            other => Err(Error::Config(format!("unknown mesh kind '{other}'"))),
        }
    }
}

impl fmt::Display for StructuredVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructuredVariant::Right45 => "right45",
            StructuredVariant::Right135 => "right135",
            StructuredVariant::Acute8 => "acute8",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredMeshKind {
    pub variant: StructuredVariant,
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
}

impl StructuredMeshKind {
    pub fn new(variant: StructuredVariant, nx: usize, ny: usize, rect: Rect) -> Self {
        StructuredMeshKind { variant, nx, ny, rect }
    }

    pub fn n_elements(&self) -> usize {
        self.variant.elements_per_cell() * self.nx * self.ny
    }

    fn validate(&self) -> Result<()> {
        let r = &self.rect;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidDomain(format!(
                "cell counts must be positive (nx = {}, ny = {})",
                self.nx, self.ny
            )));
        }
        if !(r.x1 > r.x0 && r.y1 > r.y0) || !r.area().is_finite() {
            return Err(Error::InvalidDomain(format!(
                "degenerate rectangle ({}, {}) x ({}, {})",
                r.x0, r.x1, r.y0, r.y1
            )));
        }
        Ok(())
    }
}

/// Acute split of the unit cell: corners, left/right edge midpoints and two
/// interior points on the line x = 3/16. Every angle is below 85.61 degrees
/// on a square cell.
const ACUTE_INTERIOR_X: f64 = 0.1875;
const ACUTE_INTERIOR_DY: f64 = 0.0625;

/// Largest Euclidean angle (degrees) the acute split attains on a square cell.
pub const ACUTE8_MAX_ANGLE_DEG: f64 = 85.61;

/// Builds a structured triangulation of `kind.rect`, already in
/// interior-first order.
///
/// `Acute8` cells are validated after generation; cells whose aspect ratio
/// destroys acuteness (outside roughly 0.9..1.1) are rejected.
pub fn generate_structured_mesh(kind: &StructuredMeshKind) -> Result<Mesh> {
    kind.validate()?;
    let (coords, elements) = match kind.variant {
        StructuredVariant::Right45 | StructuredVariant::Right135 => right_split(kind),
        StructuredVariant::Acute8 => acute_split(kind),
    };
    let mesh = Mesh::new(2, coords, elements)?;
    let (mesh, _) = reorder_interior_first(&mesh);
    if kind.variant == StructuredVariant::Acute8 {
        let max_angle = crate::geometry::max_euclidean_angle(&mesh);
        if max_angle >= 90.0 {
            return Err(Error::InvalidDomain(format!(
                "acute8 cells of size {} x {} are not acute (max angle {max_angle:.3} deg); use near-square cells",
                (kind.rect.x1 - kind.rect.x0) / kind.nx as f64,
                (kind.rect.y1 - kind.rect.y0) / kind.ny as f64
            )));
        }
    }
    Ok(mesh)
}

fn grid_x(kind: &StructuredMeshKind, i: usize) -> f64 {
    let r = &kind.rect;
    if i == kind.nx {
        r.x1
    } else {
        r.x0 + (r.x1 - r.x0) * i as f64 / kind.nx as f64
    }
}

fn grid_y(kind: &StructuredMeshKind, j: usize) -> f64 {
    let r = &kind.rect;
    if j == kind.ny {
        r.y1
    } else {
        r.y0 + (r.y1 - r.y0) * j as f64 / kind.ny as f64
    }
}

fn right_split(kind: &StructuredMeshKind) -> (Vec<f64>, Vec<usize>) {
    let (nx, ny) = (kind.nx, kind.ny);
    let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = grid_y(kind, j);
        for i in 0..=nx {
            coords.push(grid_x(kind, i));
            coords.push(y);
        }
    }
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (sw, se, ne, nw) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
            match kind.variant {
                StructuredVariant::Right45 => elements.extend_from_slice(&[sw, se, ne, sw, ne, nw]),
                _ => elements.extend_from_slice(&[sw, se, nw, se, ne, nw]),
            }
        }
    }
    (coords, elements)
}

fn acute_split(kind: &StructuredMeshKind) -> (Vec<f64>, Vec<usize>) {
    let (nx, ny) = (kind.nx, kind.ny);
    let n_corner = (nx + 1) * (ny + 1);
    let n_mid = (nx + 1) * ny;
    let mut coords = Vec::with_capacity(2 * (n_corner + n_mid + 2 * nx * ny));
    for j in 0..=ny {
        let y = grid_y(kind, j);
        for i in 0..=nx {
            coords.push(grid_x(kind, i));
            coords.push(y);
        }
    }
    for j in 0..ny {
        let y = 0.5 * (grid_y(kind, j) + grid_y(kind, j + 1));
        for i in 0..=nx {
            coords.push(grid_x(kind, i));
            coords.push(y);
        }
    }
    let corner = |i: usize, j: usize| j * (nx + 1) + i;
    let mid = |i: usize, j: usize| n_corner + j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(24 * nx * ny);
    for j in 0..ny {
        let (ya, yb) = (grid_y(kind, j), grid_y(kind, j + 1));
        for i in 0..nx {
            let (xa, xb) = (grid_x(kind, i), grid_x(kind, i + 1));
            let px = xa + ACUTE_INTERIOR_X * (xb - xa);
            let p = coords.len() / 2;
            coords.extend_from_slice(&[px, ya + (0.5 + ACUTE_INTERIOR_DY) * (yb - ya)]);
            let q = p + 1;
            coords.extend_from_slice(&[px, ya + (0.5 - ACUTE_INTERIOR_DY) * (yb - ya)]);
            let (sw, se, ne, nw) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
            let (l, r) = (mid(i, j), mid(i + 1, j));
            #[rustfmt::skip]
            elements.extend_from_slice(&[
                sw, se, q,
                se, r, q,
                q, r, p,
                p, r, ne,
                nw, p, ne,
                l, p, nw,
                l, q, p,
                sw, q, l,
            ]);
        }
    }
    (coords, elements)
}

/// Writes the plain-text mesh format: a `mesh <dim> <N_v> <N_e>` header,
/// one `coords... flag` line per vertex and one connectivity line per element.
pub fn save_mesh<W: Write>(mesh: &Mesh, mut sink: W) -> Result<()> {
    writeln!(sink, "mesh {} {} {}", mesh.dim(), mesh.n_vertices(), mesh.n_elements())?;
    for i in 0..mesh.n_vertices() {
        for x in mesh.vertex(i) {
            write!(sink, "{x:.16e} ")?;
        }
        writeln!(sink, "{}", u8::from(mesh.is_boundary(i)))?;
    }
    for elem in mesh.elements() {
        let line: Vec<String> = elem.iter().map(|v| v.to_string()).collect();
        writeln!(sink, "{}", line.join(" "))?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads the plain-text mesh format. Lines are numbered from 1 in errors.
///
/// The stored boundary flags must agree with the boundary detected from the
/// connectivity. The result is put in interior-first order if needed.
pub fn load_mesh<R: BufRead>(source: R) -> Result<Mesh> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l))
        .filter_map(|(n, l)| match l {
            Ok(text) => {
                let body = text.split('#').next().unwrap_or("").trim().to_string();
                (!body.is_empty()).then_some(Ok((n, body)))
            }
            Err(e) => Some(Err(Error::Io(e))),
        });

    let (hline, header) = lines.next().transpose()?.ok_or(Error::Parse {
        line: 1,
        message: "empty mesh file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "mesh" {
        return Err(Error::Parse {
            line: hline,
            message: format!("malformed header '{header}', expected 'mesh <dim> <N_v> <N_e>'"),
        });
    }
    let parse_count = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: hline,
            message: format!("malformed header: bad {what} '{s}'"),
        })
    };
    let dim = parse_count(fields[1], "dimension")?;
    let nv = parse_count(fields[2], "vertex count")?;
    let ne = parse_count(fields[3], "element count")?;
    if !(1..=3).contains(&dim) {
        return Err(Error::Parse {
            line: hline,
            message: format!("unsupported dimension {dim}"),
        });
    }

    let mut coords = Vec::with_capacity(nv * dim);
    let mut flags = Vec::with_capacity(nv);
    let mut vertex_lines = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, text) = lines.next().transpose()?.ok_or(Error::Parse {
            line: hline,
            message: format!("expected {nv} vertex lines, file ended early"),
        })?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != dim + 1 {
            return Err(Error::Parse {
                line: n,
                message: format!(
                    "expected {} fields (coordinates and boundary flag), got {}",
                    dim + 1,
                    toks.len()
                ),
            });
        }
        for t in &toks[..dim] {
            let x = t.parse::<f64>().map_err(|_| Error::Parse {
                line: n,
                message: format!("bad coordinate '{t}'"),
            })?;
            coords.push(x);
        }
        flags.push(match toks[dim] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line: n,
                    message: format!("boundary flag must be 0 or 1, got '{other}'"),
                })
            }
        });
        vertex_lines.push(n);
    }

    let mut elements = Vec::with_capacity(ne * (dim + 1));
    let mut element_lines = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (n, text) = lines.next().transpose()?.ok_or(Error::Parse {
            line: hline,
            message: format!("expected {ne} element lines, file ended early"),
        })?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != dim + 1 {
            return Err(Error::Parse {
                line: n,
                message: format!("expected {} vertex indices, got {}", dim + 1, toks.len()),
            });
        }
        for t in toks {
            let v = t.parse::<usize>().map_err(|_| Error::Parse {
                line: n,
                message: format!("bad vertex index '{t}'"),
            })?;
            if v >= nv {
                return Err(Error::Parse {
                    line: n,
                    message: format!("index out of range: {v} (mesh has {nv} vertices)"),
                });
            }
            elements.push(v);
        }
        element_lines.push(n);
    }
    if let Some((n, text)) = lines.next().transpose()? {
        return Err(Error::Parse {
            line: n,
            message: format!("unexpected trailing content '{text}'"),
        });
    }

    let mesh = Mesh::new(dim, coords, elements).map_err(|e| match e {
        Error::DegenerateElement { element, det } => Error::Parse {
            line: element_lines[element],
            message: format!("degenerate element (det = {det:e})"),
        },
        Error::Orientation { element, det } => Error::Parse {
            line: element_lines[element],
            message: format!("non-positive element orientation (det = {det:e})"),
        },
        other => other,
    })?;
    if let Some(i) = (0..nv).find(|&i| mesh.is_boundary(i) != flags[i]) {
        return Err(Error::Parse {
            line: vertex_lines[i],
            message: format!(
                "boundary flag {} disagrees with mesh topology for vertex {i}",
                u8::from(flags[i])
            ),
        });
    }
    Ok(reorder_interior_first(&mesh).0)
}
