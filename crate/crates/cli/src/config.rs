//! Run configuration read from a TOML file, with sections `[problem]`,
//! `[mesh]`, `[scheme]` and `[output]`. Every key is optional; command-line
//! flags take precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nagumo_core::experiments::{Example, NAGUMO_A};
use nagumo_core::mesh::{Rect, StructuredMeshKind, StructuredVariant};
use nagumo_core::{DiffusionField, Mesh, ReactionFunction};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// `ex1`, `ex2` or `ex3`.
    pub name: Option<String>,
    /// Nagumo parameter `a`.
    pub a: Option<f64>,
    /// Constant tensor `[d11, d12, d22]` replacing the example's diffusion.
    pub diffusion: Option<[f64; 3]>,
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub kind: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// `[x0, x1, y0, y1]`; defaults to the problem's domain.
    pub rect: Option<[f64; 4]>,
    pub import: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub treatment: Option<String>,
    pub lumping: Option<String>,
    pub dt: Option<f64>,
    pub enforcement: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// `[lo, hi]` range used for the step windows instead of the current
    /// solution range.
    pub window_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Any of `csv`, `json`, `svg`, `ppm`.
    pub formats: Option<Vec<String>>,
    /// Log level (`error`, `warn`, `info`, `debug`) unless `-v` is given.
    pub verbosity: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Where the mesh comes from. Exactly one source is allowed.
#[derive(Debug, Clone)]
pub enum MeshSource {
    Generate(StructuredMeshKind),
    Import(PathBuf),
}

impl MeshSource {
    pub fn resolve(section: &MeshSection, default_rect: Rect) -> Result<Self> {
        let generated = section.kind.is_some() || section.nx.is_some() || section.ny.is_some();
        match (&section.import, generated) {
            (Some(_), true) => bail!("give either a mesh import path or generator settings, not both"),
            (Some(p), false) => Ok(MeshSource::Import(p.clone())),
            (None, _) => {
                let variant: StructuredVariant = section.kind.as_deref().unwrap_or("right45").parse()?;
                let nx = section.nx.unwrap_or(20);
                let ny = section.ny.unwrap_or(nx);
                let rect = section
                    .rect
                    .map(|[a, b, c, d]| Rect::new(a, b, c, d))
                    .unwrap_or(default_rect);
                Ok(MeshSource::Generate(StructuredMeshKind::new(variant, nx, ny, rect)))
            }
        }
    }

    pub fn build(&self) -> nagumo_core::Result<Mesh> {
        match self {
            MeshSource::Generate(kind) => nagumo_core::generate_structured_mesh(kind),
            MeshSource::Import(path) => {
                let file = std::fs::File::open(path)?;
                nagumo_core::load_mesh(std::io::BufReader::new(file))
            }
        }
    }
}

pub fn parse_rect(s: &str) -> Result<[f64; 4]> {
    let v = parse_floats(s)?;
    match v.as_slice() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        _ => bail!("expected x0,x1,y0,y1, got '{s}'"),
    }
}

pub fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("'{p}' is not a number"))
        })
        .collect()
}

/// `ex1`/`ex2`/`ex3`, `identity`, or a constant tensor `d11,d12,d22`.
pub fn diffusion_from_name(s: &str) -> Result<DiffusionField> {
    if s.eq_ignore_ascii_case("identity") || s.eq_ignore_ascii_case("i") {
        return Ok(DiffusionField::identity(2));
    }
    if let Ok(ex) = s.parse::<Example>() {
        return Ok(ex.diffusion());
    }
    match parse_floats(s)?.as_slice() {
        &[d11, d12, d22] => constant_tensor([d11, d12, d22]),
        _ => bail!("unknown diffusion '{s}' (expected ex1, ex2, ex3, identity or d11,d12,d22)"),
    }
}

pub fn constant_tensor([d11, d12, d22]: [f64; 3]) -> Result<DiffusionField> {
    Ok(DiffusionField::from_row_major(2, &[d11, d12, d12, d22])?)
}

pub fn reaction(a: Option<f64>) -> Result<ReactionFunction> {
    Ok(ReactionFunction::nagumo(a.unwrap_or(NAGUMO_A))?)
}
