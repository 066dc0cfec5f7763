//! Canonical problem form shared by every backend.
//!
//! ```text
//! minimize    offset + Σ_j (cost_j·x_j + quad_j·x_j²)
//! subject to  Σ_j a_ij·x_j  {≤,=,≥}  rhs_i
//!             lower_j ≤ x_j ≤ upper_j
//!             x_j ∈ ℤ  for integer-marked j
//! ```
//!
//! `quad_j` multiplies `x_j²` directly (there is no implicit ½).

use crate::error::SolverError;

/// One decision variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
    pub quad: f64,
}

impl Variable {
    pub fn continuous(lower: f64, upper: f64) -> Self {
        Variable { lower, upper, integer: false, cost: 0.0, quad: 0.0 }
    }

    pub fn binary() -> Self {
        Variable { lower: 0.0, upper: 1.0, integer: true, cost: 0.0, quad: 0.0 }
    }

    pub fn free() -> Self {
        Self::continuous(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// A sparse linear row `Σ coeffs · x  sense  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Constraint { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Violation scaled by the magnitude of the terms in the row.
    pub fn scaled_violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        let raw = match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        };
        let magnitude: f64 = self.coeffs.iter().map(|&(j, a)| (a * x[j]).abs()).sum();
        raw / (1.0 + self.rhs.abs() + magnitude)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiqpProblem {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective_offset: f64,
    /// Optional variable names, used only for text dumps.
    pub names: Vec<String>,
}

impl MiqpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, var: Variable) -> usize {
        self.variables.push(var);
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint::new(coeffs, sense, rhs));
        self.constraints.len() - 1
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn integer_indices(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integer)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn num_integers(&self) -> usize {
        self.variables.iter().filter(|v| v.integer).count()
    }

    /// Same problem with every integrality mark dropped.
    pub fn relaxed(&self) -> MiqpProblem {
        let mut p = self.clone();
        for v in &mut p.variables {
            v.integer = false;
        }
        p
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.objective_offset
            + self
                .variables
                .iter()
                .zip(x)
                .map(|(v, &xj)| v.cost * xj + v.quad * xj * xj)
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.variables.len();
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() || !v.quad.is_finite() {
                return Err(SolverError::InvalidProblem(format!("variable {j} has non-finite data")));
            }
            if v.quad < 0.0 {
                return Err(SolverError::InvalidProblem(format!(
                    "variable {j} has negative quadratic cost {} (non-convex)",
                    v.quad
                )));
            }
            if v.integer && !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(SolverError::InvalidProblem(format!(
                    "integer variable {j} must have finite bounds"
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SolverError::InvalidProblem(format!("constraint {i} has non-finite rhs")));
            }
            for &(j, a) in &c.coeffs {
                if j >= n {
                    return Err(SolverError::InvalidProblem(format!(
                        "constraint {i} references variable {j} but only {n} exist"
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::InvalidProblem(format!(
                        "constraint {i} has a non-finite coefficient"
                    )));
                }
            }
        }
        if !self.names.is_empty() && self.names.len() != n {
            return Err(SolverError::InvalidProblem(format!(
                "{} names for {n} variables",
                self.names.len()
            )));
        }
        Ok(())
    }

    /// Largest scaled row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.scaled_violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xj)| {
                let raw = (v.lower - xj).max(xj - v.upper).max(0.0);
                raw / (1.0 + xj.abs())
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| v.integer)
            .map(|(_, &xj)| (xj - xj.round()).abs())
            .fold(0.0, f64::max)
    }

    pub fn variable_name(&self, j: usize) -> String {
        self.names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
    }
}
