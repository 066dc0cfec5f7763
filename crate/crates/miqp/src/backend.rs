//! Pluggable solver backends.
//!
//! Every backend receives the same [`MiqpProblem`] and must honor the
//! [`MiqpSolution`] contract. The bundled branch-and-bound is registered under
//! [`BUNDLED`] and is the default.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::bnb::solve_miqp;
use crate::error::SolverError;
use crate::problem::MiqpProblem;
use crate::solution::{MiqpSolution, SolveLimits};

pub const BUNDLED: &str = "bundled";

pub trait MiqpBackend: Send + Sync {
    fn name(&self) -> &str;

    fn solve(
        &self,
        problem: &MiqpProblem,
        limits: &SolveLimits,
        warm_start: Option<&[f64]>,
    ) -> Result<MiqpSolution, SolverError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BundledBackend;

impl MiqpBackend for BundledBackend {
    fn name(&self) -> &str {
        BUNDLED
    }

    fn solve(
        &self,
        problem: &MiqpProblem,
        limits: &SolveLimits,
        warm_start: Option<&[f64]>,
    ) -> Result<MiqpSolution, SolverError> {
        solve_miqp(problem, limits, warm_start)
    }
}

/// Name-indexed set of backends.
#[derive(Clone)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn MiqpBackend>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry { backends: BTreeMap::new() };
        r.register(Arc::new(BundledBackend));
        r
    }
}

impl fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.backends.keys()).finish()
    }
}

impl BackendRegistry {
    /// Adds or replaces a backend under its own name.
    pub fn register(&mut self, backend: Arc<dyn MiqpBackend>) {
        self.backends.insert(backend.name().to_string(), backend);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn MiqpBackend>, SolverError> {
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| SolverError::BackendUnavailable(name.to_string()))
    }

    pub fn default_backend(&self) -> Arc<dyn MiqpBackend> {
        self.get(BUNDLED).expect("bundled backend is always registered")
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}
