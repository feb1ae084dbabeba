//! Backward Euler time stepping with the four reaction treatments and the
//! time-step windows under which the discrete solution stays nonnegative
//! (and, for the Nagumo reaction, bounded by one).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{boundary_vector, Assembler, Lumping, ReactionFunction, Treatment};
use crate::error::{Error, Result};
use crate::geometry::{d_acute, size_factor, AngleConditionReport, DiffusionField};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::sparse::{solve_linear_from, CsrMatrix, SolverOptions};

/// What to do when the current time step lies outside the sufficient
/// nonnegativity window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enforcement {
    #[default]
    Off,
    Warn,
    Strict,
}

impl FromStr for Enforcement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(Enforcement::Off),
            "warn" => Ok(Enforcement::Warn),
            "strict" => Ok(Enforcement::Strict),
            _ => Err(Error::Config(format!(
                "unknown enforcement '{s}' (expected off, warn or strict)"
            ))),
        }
    }
}

impl fmt::Display for Enforcement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Enforcement::Off => "off",
            Enforcement::Warn => "warn",
            Enforcement::Strict => "strict",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub treatment: Treatment,
    pub lumping: Lumping,
    pub reaction: ReactionFunction,
    pub dt: f64,
    pub enforcement: Enforcement,
    pub solver: SolverOptions,
    /// A-priori value range used in place of the range of `u^n` when
    /// evaluating the windows.
    pub window_range: Option<(f64, f64)>,
}

impl SchemeConfig {
    pub fn new(treatment: Treatment, lumping: Lumping, reaction: ReactionFunction, dt: f64) -> Self {
        SchemeConfig {
            treatment,
            lumping,
            reaction,
            dt,
            enforcement: Enforcement::Off,
            solver: SolverOptions::default(),
            window_range: None,
        }
    }

    pub fn with_enforcement(mut self, enforcement: Enforcement) -> Self {
        self.enforcement = enforcement;
        self
    }

    pub fn with_window_range(mut self, lo: f64, hi: f64) -> Self {
        self.window_range = Some((lo, hi));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if let Some((lo, hi)) = self.window_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("invalid window range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Admissible time steps `dt_lower <= dt <= dt_upper` (upper end open when
/// `upper_inclusive` is false) together with the mesh requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionWindow {
    pub dt_lower: f64,
    pub dt_upper: f64,
    pub upper_inclusive: bool,
    pub mesh_ok: bool,
    /// Intermediate quantities entering the bounds.
    pub details: BTreeMap<String, f64>,
}

impl ConditionWindow {
    pub fn contains(&self, dt: f64) -> bool {
        let upper_ok = if self.upper_inclusive {
            dt <= self.dt_upper
        } else {
            dt < self.dt_upper
        };
        self.mesh_ok && dt >= self.dt_lower && upper_ok
    }

    /// True when some time step satisfies the window.
    pub fn is_feasible(&self) -> bool {
        self.mesh_ok && (self.dt_lower < self.dt_upper || (self.upper_inclusive && self.dt_lower == self.dt_upper))
    }
}

/// Mesh quantities entering the windows; computed once per mesh and field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshConditions {
    pub dim: usize,
    /// `(|Ω|/N_e)^{2/d}`.
    pub size_factor: f64,
    pub angle: AngleConditionReport,
}

impl MeshConditions {
    pub fn new(mesh: &Mesh, field: &DiffusionField) -> Result<Self> {
        Ok(MeshConditions {
            dim: mesh.dim(),
            size_factor: size_factor(mesh),
            angle: d_acute(mesh, field)?,
        })
    }

    /// `D_acute` with round-off noise snapped to zero.
    fn d_acute(&self) -> f64 {
        let d = self.angle.d_acute;
        if d.abs() <= self.angle.tolerance {
            0.0
        } else {
            d
        }
    }

    /// `s / ((d+1)(d+2) D_acute - s·adj)`, infinite when the denominator is
    /// not positive.
    fn lower_bound(&self, adj: f64) -> (f64, f64) {
        let d = self.dim as f64;
        let denom = (d + 1.0) * (d + 2.0) * self.d_acute() - self.size_factor * adj;
        let lower = if denom > 0.0 {
            self.size_factor / denom
        } else {
            f64::INFINITY
        };
        (lower, denom)
    }
}

/// Values over which the `max_x` expressions in the windows are taken.
enum Values<'a> {
    Interval(f64, f64),
    Nodes(&'a [f64]),
}

const RANGE_SAMPLES: usize = 4096;

/// Maximum of `expr` over the value set. On intervals a dense sample is
/// followed by golden-section refinement around the best sample.
fn max_over(values: &Values<'_>, expr: impl Fn(f64) -> f64) -> f64 {
    match *values {
        Values::Nodes(u) => u.iter().map(|&x| expr(x)).fold(f64::NEG_INFINITY, f64::max),
        Values::Interval(lo, hi) => {
            if hi <= lo {
                return expr(lo);
            }
            let h = (hi - lo) / RANGE_SAMPLES as f64;
            let mut best = (lo, expr(lo));
            for k in 1..=RANGE_SAMPLES {
                let x = if k == RANGE_SAMPLES { hi } else { lo + h * k as f64 };
                let v = expr(x);
                if v > best.1 {
                    best = (x, v);
                }
            }
            let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - r * (b - a);
            let mut d = a + r * (b - a);
            let (mut fc, mut fd) = (expr(c), expr(d));
            for _ in 0..80 {
                if fc > fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - r * (b - a);
                    fc = expr(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + r * (b - a);
                    fd = expr(d);
                }
            }
            best.1.max(fc).max(fd)
        }
    }
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn neg_abs(x: f64) -> f64 {
    (-x).max(0.0)
}

fn recip(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / x
    } else {
        f64::INFINITY
    }
}

fn value_set<'a>(u: &'a [f64], cfg: &SchemeConfig) -> Values<'a> {
    match (cfg.window_range, cfg.lumping) {
        (Some((lo, hi)), _) => Values::Interval(lo, hi),
        (None, Lumping::Lumped) => Values::Nodes(u),
        (None, Lumping::Consistent) => {
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Values::Interval(lo, hi)
        }
    }
}

/// Nonnegativity window for the state `u` from precomputed mesh data.
pub fn nonnegativity_window_with(conds: &MeshConditions, u: &[f64], cfg: &SchemeConfig) -> ConditionWindow {
    let rf = &cfg.reaction;
    let vals = value_set(u, cfg);
    let mut details = BTreeMap::new();
    details.insert("d_acute".to_string(), conds.angle.d_acute);
    details.insert("size_factor".to_string(), conds.size_factor);

    let max_f_neg = max_over(&vals, |x| neg_abs(rf.f(x)));
    let max_f_pos = max_over(&vals, |x| pos(rf.f(x)));
    let max_im_neg = max_over(&vals, |x| neg_abs(rf.f(x) + x * rf.df(x)));
    let max_im_pos = max_over(&vals, |x| pos(rf.f(x) + x * rf.df(x)));
    let max_ufp_pos = max_over(&vals, |x| pos(x * rf.df(x)));
    details.insert("max_abs_f_neg".to_string(), max_f_neg);
    details.insert("max_f_pos".to_string(), max_f_pos);
    details.insert("max_abs_f_plus_uf_prime_neg".to_string(), max_im_neg);
    details.insert("max_f_plus_uf_prime_pos".to_string(), max_im_pos);
    details.insert("max_uf_prime_pos".to_string(), max_ufp_pos);

    match cfg.lumping {
        Lumping::Lumped => {
            let (dt_upper, upper_inclusive) = match cfg.treatment {
                Treatment::Em => (recip(max_f_neg), true),
                Treatment::Im => (recip(max_im_pos.max(max_ufp_pos)), true),
                Treatment::Heim1 => (recip(max_f_pos), false),
                Treatment::Heim2 => (f64::INFINITY, true),
            };
            ConditionWindow {
                dt_lower: 0.0,
                dt_upper,
                upper_inclusive,
                mesh_ok: conds.angle.anoac,
                details,
            }
        }
        Lumping::Consistent => {
            let adj = match cfg.treatment {
                Treatment::Em => 0.0,
                Treatment::Im => max_im_neg,
                Treatment::Heim1 | Treatment::Heim2 => max_f_neg,
            };
            let (dt_lower, denom) = conds.lower_bound(adj);
            details.insert("lower_denominator".to_string(), denom);
            let mesh_ok = match cfg.treatment {
                Treatment::Em => conds.angle.anoac,
                _ => denom > 0.0,
            };
            let (dt_upper, upper_inclusive) = match cfg.treatment {
                Treatment::Em => (recip(max_f_neg), true),
                Treatment::Im => (recip(max_im_pos.max(max_ufp_pos)), false),
                Treatment::Heim1 => (recip(max_f_pos), false),
                Treatment::Heim2 => (f64::INFINITY, true),
            };
            ConditionWindow {
                dt_lower,
                dt_upper,
                upper_inclusive,
                mesh_ok,
                details,
            }
        }
    }
}

/// Combined nonnegativity and boundedness (`u <= 1`) window for the Nagumo
/// reaction, consistent mass only.
pub fn boundedness_window_with(conds: &MeshConditions, u: &[f64], cfg: &SchemeConfig) -> Result<ConditionWindow> {
    let a = cfg.reaction.nagumo_parameter().ok_or_else(|| {
        Error::UnsupportedAnalysis(format!(
            "boundedness windows are available for the Nagumo reaction only, not {}",
            cfg.reaction.name()
        ))
    })?;
    if cfg.lumping == Lumping::Lumped {
        return Err(Error::UnsupportedAnalysis(
            "boundedness windows are available for consistent mass only".into(),
        ));
    }
    let mut w = nonnegativity_window_with(conds, u, cfg);
    let rf = &cfg.reaction;
    let vals = value_set(u, cfg);
    let d = w.details.clone();
    let (upper, inclusive) = match cfg.treatment {
        Treatment::Em => {
            let extra = max_over(&vals, |x| neg_abs(x * (a - x)));
            w.details.insert("max_abs_u_a_minus_u_neg".to_string(), extra);
            (recip(d["max_abs_f_neg"].max(extra)), true)
        }
        Treatment::Im => {
            let extra = max_over(&vals, |x| pos(x - a + x * rf.df(x)));
            let m = d["max_uf_prime_pos"].max(d["max_f_plus_uf_prime_pos"]).max(extra);
            w.details.insert("max_u_minus_a_plus_uf_prime_pos".to_string(), extra);
            (recip(m), false)
        }
        Treatment::Heim1 => {
            let extra = max_over(&vals, |x| pos(x - a));
            let m = d["max_f_pos"].max(extra);
            w.details.insert("max_u_minus_a_pos".to_string(), extra);
            (recip(m), false)
        }
        Treatment::Heim2 => {
            let extra = max_over(&vals, |x| pos(-neg_abs(x - a) + x * pos(x - a)));
            w.details.insert("max_heim2_bound_term".to_string(), extra);
            (recip(extra), true)
        }
    };
    w.dt_upper = upper;
    w.upper_inclusive = inclusive;
    Ok(w)
}

/// Nonnegativity window for `u_n` on `mesh` with diffusion `field`.
pub fn nonnegativity_window(
    mesh: &Mesh,
    field: &DiffusionField,
    u_n: &[f64],
    cfg: &SchemeConfig,
) -> Result<ConditionWindow> {
    check_len(mesh, u_n)?;
    Ok(nonnegativity_window_with(&MeshConditions::new(mesh, field)?, u_n, cfg))
}

/// Nonnegativity-and-boundedness window for `u_n` (Nagumo reaction only).
pub fn boundedness_window(
    mesh: &Mesh,
    field: &DiffusionField,
    u_n: &[f64],
    cfg: &SchemeConfig,
) -> Result<ConditionWindow> {
    check_len(mesh, u_n)?;
    boundedness_window_with(&MeshConditions::new(mesh, field)?, u_n, cfg)
}

fn check_len(mesh: &Mesh, u: &[f64]) -> Result<()> {
    if u.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_vertices(),
            actual: u.len(),
        });
    }
    Ok(())
}

/// Record of one completed step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Window evaluated from the state at the start of the step.
    pub window: ConditionWindow,
    pub solver_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub dt_lower: f64,
    pub dt_upper: f64,
    pub mesh_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationState {
    pub u: Vec<f64>,
    pub t: f64,
    pub step_count: usize,
    pub history: Vec<StepRecord>,
    pub violations: Vec<Violation>,
}

impl SimulationState {
    pub fn new(u: Vec<f64>, t: f64) -> Self {
        SimulationState {
            u,
            t,
            step_count: 0,
            history: Vec::new(),
            violations: Vec::new(),
        }
    }

    /// State sampled from `u0` at the mesh vertices.
    pub fn from_initial(mesh: &Mesh, u0: &(dyn Fn(&[f64]) -> f64 + Sync), t: f64) -> Self {
        let u = (0..mesh.n_vertices()).map(|i| u0(mesh.vertex(i))).collect();
        Self::new(u, t)
    }
}

/// Left- and right-hand matrices of one step, with boundary rows scaled to
/// identity rows on the left and zero rows on the right.
#[derive(Debug, Clone)]
pub struct StepSystem {
    pub lhs: CsrMatrix,
    pub rhs: CsrMatrix,
}

/// Precomputed matrices for stepping a fixed mesh and diffusion field.
pub struct TimeStepper<'m> {
    mesh: &'m Mesh,
    cfg: SchemeConfig,
    assembler: Assembler,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    conditions: MeshConditions,
}

impl<'m> TimeStepper<'m> {
    pub fn new(mesh: &'m Mesh, field: &DiffusionField, cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let assembler = Assembler::new(mesh);
        let mass = match cfg.lumping {
            Lumping::Consistent => assembler.mass(),
            Lumping::Lumped => assembler.lumped_mass(),
        };
        let stiffness = assembler.stiffness(mesh, field)?;
        let conditions = MeshConditions::new(mesh, field)?;
        Ok(TimeStepper {
            mesh,
            cfg,
            assembler,
            mass,
            stiffness,
            conditions,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn conditions(&self) -> &MeshConditions {
        &self.conditions
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn window(&self, u: &[f64]) -> ConditionWindow {
        nonnegativity_window_with(&self.conditions, u, &self.cfg)
    }

    pub fn boundedness_window(&self, u: &[f64]) -> Result<ConditionWindow> {
        boundedness_window_with(&self.conditions, u, &self.cfg)
    }

    /// `lhs = M - dt B + dt A`, `rhs = M + dt C` for the state `u`.
    pub fn system(&self, u: &[f64], dt: f64) -> Result<StepSystem> {
        check_len(self.mesh, u)?;
        let r = self
            .assembler
            .reaction(u, &self.cfg.reaction, self.cfg.treatment, self.cfg.lumping)?;
        let mut lhs = self.mass.clone();
        {
            let lv = lhs.values_mut();
            for (l, a) in lv.iter_mut().zip(self.stiffness.values()) {
                *l += dt * a;
            }
            if let Some(b) = &r.b {
                for (l, bv) in lv.iter_mut().zip(b.values()) {
                    *l -= dt * bv;
                }
            }
        }
        // Boundary rows read dt·u_i = dt·g_i; rescale them to u_i = g_i.
        let row_ptr = lhs.row_ptr().to_vec();
        let lv = lhs.values_mut();
        for i in 0..self.mesh.n_vertices() {
            if self.mesh.is_boundary(i) {
                lv[row_ptr[i]..row_ptr[i + 1]].iter_mut().for_each(|v| *v /= dt);
            }
        }
        let mut rhs = self.mass.clone();
        if let Some(c) = &r.c {
            for (m, cv) in rhs.values_mut().iter_mut().zip(c.values()) {
                *m += dt * cv;
            }
        }
        Ok(StepSystem { lhs, rhs })
    }

    /// Advances `state` by `dt` with boundary data `g`.
    pub fn step(
        &self,
        state: &mut SimulationState,
        g: &(dyn Fn(&[f64], f64) -> f64 + Sync),
        dt: f64,
    ) -> Result<StepRecord> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let step = state.step_count + 1;
        let window = self.window(&state.u);
        if !window.contains(dt) {
            match self.cfg.enforcement {
                Enforcement::Off => {}
                Enforcement::Warn => {
                    if state.violations.is_empty() {
                        log::warn!(
                            "step {step}: dt = {dt} outside window [{}, {}] (mesh_ok = {}); further violations logged at debug level",
                            window.dt_lower,
                            window.dt_upper,
                            window.mesh_ok
                        );
                    } else {
                        log::debug!("step {step}: dt = {dt} outside window");
                    }
                }
                Enforcement::Strict => {
                    return Err(Error::ConditionViolated {
                        step,
                        dt,
                        lower: window.dt_lower,
                        upper: window.dt_upper,
                        mesh_ok: window.mesh_ok,
                    })
                }
            }
            if self.cfg.enforcement != Enforcement::Off {
                state.violations.push(Violation {
                    step,
                    t: state.t,
                    dt,
                    dt_lower: window.dt_lower,
                    dt_upper: window.dt_upper,
                    mesh_ok: window.mesh_ok,
                });
            }
        }
        let t_new = state.t + dt;
        let sys = self.system(&state.u, dt)?;
        let gvec = boundary_vector(self.mesh, g, t_new);
        let mut b = sys.rhs.matvec(&state.u);
        let mut guess = state.u.clone();
        for i in 0..b.len() {
            if self.mesh.is_boundary(i) {
                b[i] = gvec[i];
                guess[i] = gvec[i];
            }
        }
        let sol = solve_linear_from(&sys.lhs, &b, Some(&guess), &self.cfg.solver)?;
        let mut u = sol.x;
        for i in 0..u.len() {
            if self.mesh.is_boundary(i) {
                u[i] = gvec[i];
            }
        }
        let (u_min, u_max) = min_max(&u);
        state.u = u;
        state.t = t_new;
        state.step_count = step;
        let record = StepRecord {
            step,
            t: t_new,
            dt,
            u_min,
            u_max,
            window,
            solver_iters: sol.iterations,
            residual: sol.residual,
        };
        state.history.push(record.clone());
        Ok(record)
    }
}

/// One step of the scheme, assembling everything from scratch. Use
/// [`TimeStepper`] for repeated steps.
pub fn step(
    state: &mut SimulationState,
    mesh: &Mesh,
    field: &DiffusionField,
    g: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    cfg: &SchemeConfig,
) -> Result<StepRecord> {
    TimeStepper::new(mesh, field, cfg.clone())?.step(state, g, cfg.dt)
}

pub fn min_max(u: &[f64]) -> (f64, f64) {
    u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub treatment: Treatment,
    pub lumping: Lumping,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub n_vertices: usize,
    pub n_elements: usize,
    /// Extremes over all time levels (initial state included) and vertices.
    pub u_min: f64,
    pub u_max: f64,
    pub initial_u_min: f64,
    pub initial_u_max: f64,
    pub final_u_min: f64,
    pub final_u_max: f64,
    pub d_acute: f64,
    /// Window at the initial state.
    pub initial_window: ConditionWindow,
    pub total_solver_iters: usize,
    pub wall_time_s: f64,
    pub violations: Vec<Violation>,
}

/// Integrates `problem` on `mesh` from `t = 0` to `t_final` with uniform
/// steps `cfg.dt`; the last step is shortened to land on `t_final`.
pub fn run_simulation(
    problem: &ProblemSpec,
    mesh: &Mesh,
    cfg: &SchemeConfig,
    t_final: f64,
) -> Result<(SimulationState, RunSummary)> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::Config(format!("final time must be nonnegative, got {t_final}")));
    }
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.reaction = problem.reaction.clone();
    let stepper = TimeStepper::new(mesh, &problem.field, cfg.clone())?;
    let mut state = SimulationState::from_initial(mesh, problem.initial.as_ref(), 0.0);
    let (init_min, init_max) = min_max(&state.u);
    let initial_window = stepper.window(&state.u);
    let (mut lo, mut hi) = (init_min, init_max);
    let mut iters = 0;
    let eps = 1e-9 * cfg.dt;
    while state.t < t_final - eps {
        let dt = cfg.dt.min(t_final - state.t);
        let rec = stepper.step(&mut state, problem.boundary.as_ref(), dt)?;
        lo = lo.min(rec.u_min);
        hi = hi.max(rec.u_max);
        iters += rec.solver_iters;
    }
    let (final_min, final_max) = min_max(&state.u);
    let summary = RunSummary {
        problem: problem.name.clone(),
        treatment: cfg.treatment,
        lumping: cfg.lumping,
        dt: cfg.dt,
        t_final,
        steps: state.step_count,
        n_vertices: mesh.n_vertices(),
        n_elements: mesh.n_elements(),
        u_min: lo,
        u_max: hi,
        initial_u_min: init_min,
        initial_u_max: init_max,
        final_u_min: final_min,
        final_u_max: final_max,
        d_acute: stepper.conditions().angle.d_acute,
        initial_window,
        total_solver_iters: iters,
        wall_time_s: start.elapsed().as_secs_f64(),
        violations: state.violations.clone(),
    };
    Ok((state, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conds_with(d_acute: f64) -> MeshConditions {
        MeshConditions {
            dim: 2,
            size_factor: 1.0,
            angle: AngleConditionReport {
                d_acute,
                d_acute_ave: d_acute,
                anoac: d_acute >= 0.0,
                aaac: d_acute > 0.0,
                worst_element: crate::geometry::WorstPair {
                    index: 0,
                    pair: (0, 1),
                    value: d_acute,
                },
                tolerance: 1e-15,
            },
        }
    }

    fn cfg(t: Treatment, l: Lumping) -> SchemeConfig {
        SchemeConfig::new(t, l, ReactionFunction::nagumo(0.1).unwrap(), 0.1).with_window_range(0.0, 1.0)
    }

    #[test]
    fn upper_bounds_on_unit_range() {
        let c = conds_with(1.0);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Em, Lumping::Consistent));
        assert!((w.dt_upper - 10.0).abs() < 1e-12);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Im, Lumping::Consistent));
        // max of f + u f' = -3u² + 2.2u - 0.1 is 91/300 at u = 11/30.
        assert!((w.dt_upper - 300.0 / 91.0).abs() < 1e-12);
        assert!(!w.upper_inclusive);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Heim1, Lumping::Consistent));
        assert!((w.dt_upper - 1.0 / 0.2025).abs() < 1e-9);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Heim2, Lumping::Consistent));
        assert!(w.dt_upper.is_infinite());
    }

    #[test]
    fn lower_bound_formula() {
        let c = conds_with(0.5);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Em, Lumping::Consistent));
        assert!((w.dt_lower - 1.0 / 6.0).abs() < 1e-15);
        assert!(w.mesh_ok);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Heim1, Lumping::Consistent));
        assert!((w.dt_lower - 1.0 / (6.0 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn right_angles_give_unbounded_lower() {
        let c = conds_with(0.0);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Em, Lumping::Consistent));
        assert!(w.mesh_ok && w.dt_lower.is_infinite());
        assert!(!w.is_feasible());
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Heim2, Lumping::Consistent));
        assert!(!w.mesh_ok);
        let w = nonnegativity_window_with(&c, &[], &cfg(Treatment::Heim2, Lumping::Lumped));
        assert!(w.mesh_ok && w.contains(1e6));
    }

    #[test]
    fn boundedness_needs_nagumo() {
        let c = conds_with(1.0);
        let mut k = cfg(Treatment::Em, Lumping::Consistent);
        let w = boundedness_window_with(&c, &[], &k).unwrap();
        assert!((w.dt_upper - 1.0 / 0.9).abs() < 1e-9);
        k.reaction = ReactionFunction::zero();
        assert!(matches!(
            boundedness_window_with(&c, &[], &k),
            Err(Error::UnsupportedAnalysis(_))
        ));
    }

    #[test]
    fn interval_max_refines() {
        let v = max_over(&Values::Interval(0.0, 1.0), |x| -(x - 0.123456789).powi(2) + 2.0);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
