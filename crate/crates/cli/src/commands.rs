use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use nagumo_core::experiments::{convergence_study, ConvergenceSpec, ErrorReference, Example, StudyMode};
use nagumo_core::geometry::max_euclidean_angle;
use nagumo_core::mesh::{Rect, StructuredVariant};
use nagumo_core::output::{write_convergence_csv, write_point_cloud, write_ppm, write_step_csv, write_svg};
use nagumo_core::{
    d_acute, run_simulation, save_mesh, ElementAveraging, Enforcement, Error, Lumping, Mesh, RunSummary, SchemeConfig,
    Treatment,
};
use serde_json::json;

use crate::config::{self, MeshSection, MeshSource, RunConfig};
use crate::{ConvergeArgs, DiagnoseArgs, MeshArgs, MeshSourceArgs, ReportArgs, SolveArgs};

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_MESH: u8 = 2;
pub const EXIT_NONOBTUSE_ONLY: u8 = 3;
pub const EXIT_NO_ANGLE_CONDITION: u8 = 4;
pub const EXIT_CONDITION_VIOLATED: u8 = 5;

/// Invalid mesh input, tagged so it maps to its own exit status.
#[derive(Debug)]
struct MeshError(Error);

impl std::fmt::Display for MeshError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid mesh: {}", self.0)
    }
}

impl std::error::Error for MeshError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<MeshError>().is_some() {
        return EXIT_MESH;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::ConditionViolated { .. }) => EXIT_CONDITION_VIOLATED,
        _ => EXIT_ERROR,
    }
}

fn mesh_section(args: &MeshSourceArgs, base: MeshSection) -> Result<MeshSection> {
    let mut s = base;
    if args.import.is_some() {
        s.import = args.import.clone();
        s.kind = None;
        s.nx = None;
        s.ny = None;
    }
    if args.kind.is_some() || args.nx.is_some() || args.ny.is_some() {
        s.import = None;
    }
    s.kind = args.kind.clone().or(s.kind);
    s.nx = args.nx.or(s.nx);
    s.ny = args.ny.or(s.ny);
    if let Some(r) = &args.rect {
        s.rect = Some(config::parse_rect(r)?);
    }
    Ok(s)
}

fn build_mesh(source: &MeshSource) -> Result<Mesh> {
    source.build().map_err(|e| match e {
        Error::Io(_) => anyhow::Error::new(e).context("reading mesh"),
        other => MeshError(other).into(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn mesh(args: &MeshArgs) -> Result<u8> {
    let section = mesh_section(&args.source, MeshSection::default())?;
    let source = MeshSource::resolve(&section, Example::Ex1.rect())?;
    let mesh = build_mesh(&source)?;
    let path = match &args.out {
        Some(p) => p.clone(),
        None => {
            create_dir(&args.output_dir)?;
            args.output_dir.join("mesh.txt")
        }
    };
    save_mesh(&mesh, create_file(&path)?)?;
    println!("N_v = {}", mesh.n_vertices());
    println!("N_e = {}", mesh.n_elements());
    println!("N_vi = {}", mesh.n_interior());
    if matches!(&source, MeshSource::Generate(k) if k.variant == StructuredVariant::Acute8) {
        let report = d_acute(&mesh, &nagumo_core::DiffusionField::identity(2))?;
        println!("max angle = {:.2} deg", max_euclidean_angle(&mesh));
        println!("d_acute (D = I) = {:.6e}, acute: {}", report.d_acute, report.aaac);
    }
    println!("written {}", path.display());
    Ok(0)
}

fn parse_averaging(s: &str) -> Result<ElementAveraging> {
    match s.to_ascii_lowercase().as_str() {
        "centroid" => Ok(ElementAveraging::Centroid),
        "vertex" => Ok(ElementAveraging::Vertex),
        "quadrature" => Ok(ElementAveraging::Quadrature),
        _ => bail!("unknown averaging '{s}' (expected centroid, vertex or quadrature)"),
    }
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<u8> {
    let field = config::diffusion_from_name(&args.diffusion)?.with_averaging(parse_averaging(&args.averaging)?);
    let rect = args
        .diffusion
        .parse::<Example>()
        .map(Example::rect)
        .unwrap_or(Example::Ex1.rect());
    let section = mesh_section(&args.source, MeshSection::default())?;
    let mesh = build_mesh(&MeshSource::resolve(&section, rect)?)?;
    let report = d_acute(&mesh, &field)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.aaac {
        0
    } else if report.anoac {
        EXIT_NONOBTUSE_ONLY
    } else {
        EXIT_NO_ANGLE_CONDITION
    })
}

/// Fully resolved settings of a `solve` run.
struct SolvePlan {
    example: Example,
    config: SchemeConfig,
    diffusion: Option<[f64; 3]>,
    t_final: f64,
    mesh: MeshSource,
    output_dir: PathBuf,
    formats: Vec<String>,
}

fn plan(args: &SolveArgs) -> Result<SolvePlan> {
    let file = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let example: Example = args
        .problem
        .as_deref()
        .or(file.problem.name.as_deref())
        .unwrap_or("ex1")
        .parse()?;
    let reaction = config::reaction(args.a.or(file.problem.a))?;
    let diffusion = match &args.diffusion {
        Some(s) => match config::parse_floats(s)?.as_slice() {
            &[a, b, c] => Some([a, b, c]),
            _ => bail!("--diffusion expects d11,d12,d22"),
        },
        None => file.problem.diffusion,
    };
    let t_final = args.t_final.or(file.problem.t_final).unwrap_or(1.0);
    let treatment: Treatment = args
        .treatment
        .as_deref()
        .or(file.scheme.treatment.as_deref())
        .unwrap_or("em")
        .parse()?;
    let lumping: Lumping = args
        .lumping
        .as_deref()
        .or(file.scheme.lumping.as_deref())
        .unwrap_or("consistent")
        .parse()?;
    let enforcement: Enforcement = args
        .enforcement
        .as_deref()
        .or(file.scheme.enforcement.as_deref())
        .unwrap_or("off")
        .parse()?;
    let dt = args.dt.or(file.scheme.dt).unwrap_or(0.1);
    let mut cfg = SchemeConfig::new(treatment, lumping, reaction, dt).with_enforcement(enforcement);
    if let Some(tol) = args.tol.or(file.scheme.tol) {
        cfg.solver.tol = tol;
    }
    if let Some(m) = file.scheme.max_iter {
        cfg.solver.max_iter = m;
    }
    let range = match &args.window_range {
        Some(s) => match config::parse_floats(s)?.as_slice() {
            &[lo, hi] => Some([lo, hi]),
            _ => bail!("--window-range expects lo,hi"),
        },
        None => file.scheme.window_range,
    };
    if let Some([lo, hi]) = range {
        cfg = cfg.with_window_range(lo, hi);
    }
    cfg.validate()?;
    let section = mesh_section(&args.mesh, file.mesh.clone())?;
    let mesh = MeshSource::resolve(&section, example.rect())?;
    let output_dir = args
        .output_dir
        .clone()
        .or(file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let formats = match &args.formats {
        Some(s) => s.split(',').map(|f| f.trim().to_ascii_lowercase()).collect(),
        None => file
            .output
            .formats
            .clone()
            .unwrap_or_else(|| vec!["csv".into(), "json".into()]),
    };
    for f in &formats {
        if !["csv", "json", "svg", "ppm"].contains(&f.as_str()) {
            bail!("unknown output format '{f}' (expected csv, json, svg or ppm)");
        }
    }
    Ok(SolvePlan {
        example,
        config: cfg,
        diffusion,
        t_final,
        mesh,
        output_dir,
        formats,
    })
}

fn rect_json(r: Rect) -> serde_json::Value {
    json!([r.x0, r.x1, r.y0, r.y1])
}

pub fn solve(args: &SolveArgs) -> Result<u8> {
    let plan = plan(args)?;
    let mesh = build_mesh(&plan.mesh)?;
    let mut problem = plan.example.problem(plan.t_final);
    if let Some(d) = plan.diffusion {
        problem.field = config::constant_tensor(d)?;
    }
    problem.reaction = plan.config.reaction.clone();
    info!(
        "solving {} on {} elements with {} {} dt={}",
        problem.name,
        mesh.n_elements(),
        plan.config.treatment,
        plan.config.lumping,
        plan.config.dt
    );
    let (state, summary) = run_simulation(&problem, &mesh, &plan.config, plan.t_final)?;
    create_dir(&plan.output_dir)?;
    let dir = &plan.output_dir;
    let wants = |f: &str| plan.formats.iter().any(|x| x == f);
    if wants("csv") {
        write_step_csv(&state.history, create_file(&dir.join("steps.csv"))?)?;
        write_point_cloud(&mesh, &state.u, create_file(&dir.join("solution.csv"))?)?;
    }
    if wants("json") {
        let mut metadata = serde_json::Map::new();
        if plan.example == Example::Ex3 && plan.diffusion.is_none() {
            metadata.insert(
                "ex3_origin_convention".into(),
                json!("tensor angle fixed to pi/2 at the origin, giving diag(1, 200)"),
            );
        }
        let doc = json!({
            "summary": summary,
            "config": {
                "problem": problem.name,
                "a": plan.config.reaction.nagumo_parameter(),
                "treatment": plan.config.treatment.to_string(),
                "lumping": plan.config.lumping.to_string(),
                "enforcement": plan.config.enforcement.to_string(),
                "dt": plan.config.dt,
                "t_final": plan.t_final,
                "rect": rect_json(problem.rect),
            },
            "metadata": metadata,
        });
        let mut w = create_file(&dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        std::io::Write::write_all(&mut w, b"\n")?;
    }
    if wants("svg") {
        write_svg(&mesh, &state.u, 800, create_file(&dir.join("solution.svg"))?)?;
    }
    if wants("ppm") {
        write_ppm(&mesh, &state.u, 400, 400, create_file(&dir.join("solution.ppm"))?)?;
    }
    print_summary(&summary);
    Ok(0)
}

fn print_summary(s: &RunSummary) {
    println!(
        "{} {} {} dt={} T={} steps={}",
        s.problem, s.treatment, s.lumping, s.dt, s.t_final, s.steps
    );
    println!("final u_min = {:.6e}, u_max = {:.6}", s.final_u_min, s.final_u_max);
    println!("all steps u_min = {:.6e}, u_max = {:.6}", s.u_min, s.u_max);
    println!(
        "initial window: dt in [{:.4e}, {:.4e}{}, mesh_ok = {}",
        s.initial_window.dt_lower,
        s.initial_window.dt_upper,
        if s.initial_window.upper_inclusive { "]" } else { ")" },
        s.initial_window.mesh_ok
    );
    if !s.violations.is_empty() {
        println!("window violations: {}", s.violations.len());
    }
}

pub fn converge(args: &ConvergeArgs) -> Result<u8> {
    let mode: StudyMode = args.mode.parse()?;
    let mut spec = match mode {
        StudyMode::Time => ConvergenceSpec::time_default(),
        StudyMode::Space => ConvergenceSpec::space_default(),
    };
    if let Some(l) = args.levels {
        spec.levels = l;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(dt) = args.dt {
        spec.dt = dt;
    }
    if let Some(t) = args.t_final {
        spec.t_final = t;
    }
    if let Some(k) = &args.kind {
        spec.variant = k.parse()?;
    }
    if let Some(t) = &args.treatment {
        spec.treatment = t.parse()?;
    }
    if let Some(l) = &args.lumping {
        spec.lumping = l.parse()?;
    }
    if let Some(r) = &args.reference {
        spec.reference = r.parse::<ErrorReference>()?;
    }
    let table = convergence_study(&Example::Ex1.problem(spec.t_final), &spec)?;
    create_dir(&args.output_dir)?;
    write_convergence_csv(&table, create_file(&args.output_dir.join("convergence.csv"))?)?;
    let mut w = create_file(&args.output_dir.join("convergence.json"))?;
    serde_json::to_writer_pretty(&mut w, &json!({ "spec": spec, "table": table }))?;
    println!(
        "{:>12} {:>10} {:>12} {:>12} {:>8}",
        "parameter", "N_e", "error", "exact", "rate"
    );
    for r in &table.rows {
        let rate = r.rate.map(|x| format!("{x:.3}")).unwrap_or_default();
        println!(
            "{:>12.5e} {:>10} {:>12.4e} {:>12.4e} {:>8}",
            r.parameter, r.n_elements, r.error, r.exact_error, rate
        );
    }
    Ok(0)
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<u8> {
    let mut files = Vec::new();
    find_summaries(&args.dir, &mut files)?;
    if files.is_empty() {
        bail!("no summary.json found under {}", args.dir.display());
    }
    println!("| run | problem | treatment | lumping | dt | T | u_min | u_max | violations |");
    println!("|---|---|---|---|---|---|---|---|---|");
    for f in files {
        let doc: serde_json::Value =
            serde_json::from_reader(File::open(&f)?).with_context(|| format!("parsing {}", f.display()))?;
        let s: RunSummary = serde_json::from_value(doc["summary"].clone())
            .with_context(|| format!("{} has no run summary", f.display()))?;
        let run = f
            .parent()
            .and_then(|p| p.strip_prefix(&args.dir).ok())
            .map(|p| p.display().to_string())
            .filter(|p| !p.is_empty())
            .unwrap_or_else(|| ".".into());
        println!(
            "| {run} | {} | {} | {} | {} | {} | {:.4e} | {:.6} | {} |",
            s.problem,
            s.treatment,
            s.lumping,
            s.dt,
            s.t_final,
            s.final_u_min,
            s.final_u_max,
            s.violations.len()
        );
    }
    Ok(0)
}
