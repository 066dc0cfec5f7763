use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NodeLimit,
    TimeLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::TimeLimit => "time-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiqpSolution {
    pub status: SolveStatus,
    /// Empty when no feasible point is known.
    pub values: Vec<f64>,
    /// `+inf` when no feasible point is known.
    pub objective: f64,
    /// Best proven lower bound on the optimum.
    pub bound: f64,
    pub nodes: usize,
    /// Largest scaled primal violation of the returned point.
    pub primal_residual: f64,
    /// Set when infeasibility was certified by the QP engine itself.
    pub infeasibility_certificate: bool,
    /// Set when a supplied warm start was repaired into a feasible incumbent.
    pub warm_start_used: bool,
}

impl MiqpSolution {
    pub fn infeasible(certificate: bool) -> Self {
        MiqpSolution {
            status: SolveStatus::Infeasible,
            values: Vec::new(),
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            nodes: 0,
            primal_residual: f64::NAN,
            infeasibility_certificate: certificate,
            warm_start_used: false,
        }
    }

    pub fn has_point(&self) -> bool {
        !self.values.is_empty()
    }

    /// Absolute gap between incumbent and bound.
    pub fn gap(&self) -> f64 {
        if self.objective.is_finite() && self.bound.is_finite() {
            (self.objective - self.bound).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Search budget and tolerances for branch-and-bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveLimits {
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    /// A node is pruned once its bound is within `rel_gap·(1+|incumbent|)` of the incumbent.
    pub rel_gap: f64,
    pub integrality_tol: f64,
    /// Run the rounding heuristic on every n-th processed node (0 disables, root always runs).
    pub heuristic_every: usize,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            max_nodes: 100_000,
            time_limit: None,
            rel_gap: 1e-6,
            integrality_tol: 1e-6,
            heuristic_every: 16,
        }
    }
}

impl SolveLimits {
    pub fn with_rel_gap(mut self, gap: f64) -> Self {
        self.rel_gap = gap;
        self
    }

    pub fn with_max_nodes(mut self, nodes: usize) -> Self {
        self.max_nodes = nodes;
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }
}
