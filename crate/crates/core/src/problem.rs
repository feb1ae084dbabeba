use std::fmt;
use std::sync::Arc;

use crate::assembly::ReactionFunction;
use crate::geometry::DiffusionField;
use crate::mesh::Rect;

/// `g(x, t)` on the boundary (also used for exact solutions).
pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// `u_0(x)`.
pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A complete initial-boundary value problem
/// `u_t - ∇·(D∇u) = u f(u)` on a rectangle with Dirichlet data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub rect: Rect,
    pub field: DiffusionField,
    pub reaction: ReactionFunction,
    pub boundary: SpaceTimeFn,
    pub initial: SpaceFn,
    pub t_final: f64,
    /// Exact solution, when known.
    pub exact: Option<SpaceTimeFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("rect", &self.rect)
            .field("field", &self.field)
            .field("reaction", &self.reaction)
            .field("t_final", &self.t_final)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}
