//! Branch-and-bound over the QP relaxation.
//!
//! Branching picks the most fractional integer variable (lowest index on
//! ties). Until a first incumbent exists the search dives depth-first along
//! the rounding direction; afterwards it always expands the open node with the
//! lowest bound (lowest creation id on ties).

use std::time::Instant;

use crate::error::SolverError;
use crate::problem::MiqpProblem;
use crate::qp::{solve_with_bounds, Relaxation};
use crate::solution::{MiqpSolution, SolveLimits, SolveStatus};

struct Node {
    id: u64,
    depth: usize,
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

struct Incumbent {
    x: Vec<f64>,
    objective: f64,
    residual: f64,
}

struct Search<'a> {
    problem: &'a MiqpProblem,
    limits: &'a SolveLimits,
    integers: Vec<usize>,
    incumbent: Option<Incumbent>,
    /// Lowest bound among nodes discarded by the gap test.
    pruned_bound: f64,
}

impl<'a> Search<'a> {
    fn prune_tol(&self) -> f64 {
        match &self.incumbent {
            Some(inc) => self.limits.rel_gap * (1.0 + inc.objective.abs()),
            None => 0.0,
        }
    }

    fn dominated(&mut self, bound: f64) -> bool {
        let hit = match &self.incumbent {
            Some(inc) => bound >= inc.objective - self.prune_tol(),
            None => false,
        };
        if hit {
            self.pruned_bound = self.pruned_bound.min(bound);
        }
        hit
    }

    fn offer(&mut self, x: Vec<f64>, objective: f64, residual: f64) {
        let better = self.incumbent.as_ref().is_none_or(|inc| objective < inc.objective);
        if better {
            self.incumbent = Some(Incumbent { x, objective, residual });
        }
    }

    /// Most fractional integer variable, or `None` when `x` is integral.
    fn branching_variable(&self, x: &[f64]) -> Option<(usize, f64)> {
        let tol = self.limits.integrality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for &j in &self.integers {
            let frac = x[j] - x[j].floor();
            let dist = frac.min(1.0 - frac);
            if dist <= tol {
                continue;
            }
            // Strictly larger distance wins, so the lowest index is kept on ties.
            if best.is_none_or(|(_, _, d)| dist > d + 1e-12) {
                best = Some((j, x[j], dist));
            }
        }
        best.map(|(j, v, _)| (j, v))
    }

    fn relax(&mut self, lower: &[f64], upper: &[f64]) -> Result<Relaxation, SolverError> {
        solve_with_bounds(self.problem, lower, upper)
    }

    /// Rounds every integer variable of `x`, fixes them, and re-solves the
    /// continuous part. Two roundings are tried: to the nearest integer, and
    /// upward for any fractional part above the integrality tolerance.
    fn try_rounding(&mut self, x: &[f64], lower: &[f64], upper: &[f64]) -> Result<(), SolverError> {
        let tol = self.limits.integrality_tol;
        let mut tried: Vec<Vec<f64>> = Vec::with_capacity(2);
        for threshold in [0.5, tol] {
            let rounded: Vec<f64> = self
                .integers
                .iter()
                .map(|&j| {
                    let fl = x[j].floor();
                    let r = if x[j] - fl > threshold { fl + 1.0 } else { fl };
                    r.clamp(lower[j], upper[j])
                })
                .collect();
            if tried.contains(&rounded) {
                continue;
            }
            let mut lo = lower.to_vec();
            let mut hi = upper.to_vec();
            for (k, &j) in self.integers.iter().enumerate() {
                lo[j] = rounded[k];
                hi[j] = rounded[k];
            }
            if let Relaxation::Optimal { x, objective, residual } = self.relax(&lo, &hi)? {
                self.offer(x, objective, residual);
            }
            tried.push(rounded);
        }
        Ok(())
    }
}

/// Solves `problem` to the requested gap, optionally seeded with a warm-start point
/// whose integer part is rounded and repaired by a continuous re-solve.
pub fn solve_miqp(
    problem: &MiqpProblem,
    limits: &SolveLimits,
    warm_start: Option<&[f64]>,
) -> Result<MiqpSolution, SolverError> {
    problem.validate()?;
    let started = Instant::now();
    let mut search = Search {
        problem,
        limits,
        integers: problem.integer_indices(),
        incumbent: None,
        pruned_bound: f64::INFINITY,
    };
    let lower: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();

    if let Some(w) = warm_start {
        if w.len() != problem.num_variables() {
            return Err(SolverError::InvalidProblem(format!(
                "warm start has {} entries for {} variables",
                w.len(),
                problem.num_variables()
            )));
        }
        search.try_rounding(w, &lower, &upper)?;
    }
    let warm_start_used = search.incumbent.is_some();

    let root = match search.relax(&lower, &upper)? {
        Relaxation::Infeasible { certificate } => {
            let mut s = MiqpSolution::infeasible(certificate);
            s.nodes = 1;
            s.warm_start_used = warm_start_used;
            return Ok(s);
        }
        Relaxation::Optimal { x, objective, .. } => {
            // Interior-point round-off can put the relaxation a hair above a
            // feasible warm-start incumbent; the incumbent caps the bound.
            let bound = search.incumbent.as_ref().map_or(objective, |inc| objective.min(inc.objective));
            Node { id: 0, depth: 0, bound, lower, upper, x }
        }
    };
    let root_bound = root.bound;

    let mut open: Vec<Node> = Vec::new();
    let mut next_id = 1u64;
    let mut processed = 0usize;
    let mut status = SolveStatus::Optimal;

    // The root is processed like any other node.
    let mut pending = Some(root);
    loop {
        let node = match pending.take() {
            Some(n) => n,
            None => {
                open.retain(|n| !search.dominated(n.bound));
                let Some(idx) = select(&open, search.incumbent.is_some()) else {
                    break;
                };
                open.swap_remove(idx)
            }
        };
        if search.dominated(node.bound) {
            continue;
        }
        if processed >= limits.max_nodes {
            open.push(node);
            status = SolveStatus::NodeLimit;
            break;
        }
        if limits.time_limit.is_some_and(|t| started.elapsed() >= t) {
            open.push(node);
            status = SolveStatus::TimeLimit;
            break;
        }
        processed += 1;

        let Some((j, value)) = search.branching_variable(&node.x) else {
            let residual = problem.max_violation(&node.x);
            search.offer(node.x, node.bound, residual);
            continue;
        };

        let run_heuristic = node.depth == 0
            || (limits.heuristic_every > 0 && processed.is_multiple_of(limits.heuristic_every));
        if run_heuristic {
            search.try_rounding(&node.x, &node.lower, &node.upper)?;
        }

        let down_first = value - value.floor() < 0.5;
        let mut children = Vec::with_capacity(2);
        for go_down in [true, false] {
            let mut lo = node.lower.clone();
            let mut hi = node.upper.clone();
            if go_down {
                hi[j] = value.floor();
            } else {
                lo[j] = value.ceil();
            }
            match search.relax(&lo, &hi)? {
                Relaxation::Infeasible { .. } => {}
                Relaxation::Optimal { x, objective, residual } => {
                    if search.dominated(objective) {
                        continue;
                    }
                    if search.branching_variable(&x).is_none() {
                        search.offer(x, objective, residual);
                        continue;
                    }
                    let child = Node {
                        id: 0,
                        depth: node.depth + 1,
                        bound: objective.max(node.bound),
                        lower: lo,
                        upper: hi,
                        x,
                    };
                    children.push((go_down == down_first, child));
                }
            }
        }
        // The preferred (rounding-direction) child is pushed last so the dive takes it next.
        children.sort_by_key(|(preferred, _)| *preferred);
        for (_, mut child) in children {
            child.id = next_id;
            next_id += 1;
            open.push(child);
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let bound = open_bound.min(search.pruned_bound).max(root_bound);
    let Some(inc) = search.incumbent else {
        if status == SolveStatus::Optimal {
            let mut s = MiqpSolution::infeasible(false);
            s.nodes = processed;
            return Ok(s);
        }
        return Ok(MiqpSolution {
            status,
            values: Vec::new(),
            objective: f64::INFINITY,
            bound,
            nodes: processed,
            primal_residual: f64::NAN,
            infeasibility_certificate: false,
            warm_start_used,
        });
    };
    Ok(MiqpSolution {
        status,
        bound: bound.min(inc.objective),
        values: inc.x,
        objective: inc.objective,
        nodes: processed,
        primal_residual: inc.residual,
        infeasibility_certificate: false,
        warm_start_used,
    })
}

fn select(open: &[Node], have_incumbent: bool) -> Option<usize> {
    if open.is_empty() {
        return None;
    }
    if !have_incumbent {
        // Depth-first: the most recently created node.
        return open
            .iter()
            .enumerate()
            .max_by_key(|(_, n)| (n.depth, n.id))
            .map(|(i, _)| i);
    }
    let mut best = 0;
    for (i, n) in open.iter().enumerate().skip(1) {
        let b = &open[best];
        if n.bound < b.bound || (n.bound == b.bound && n.id < b.id) {
            best = i;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Sense, Variable};

    #[test]
    fn knapsack_pair_picks_one() {
        let mut p = MiqpProblem::new();
        let x = p.add_variable(Variable::binary().with_cost(-1.0));
        let y = p.add_variable(Variable::binary().with_cost(-1.0));
        p.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-7);
        let ones = s.values.iter().filter(|v| (**v - 1.0).abs() < 1e-6).count();
        assert_eq!(ones, 1);
        assert!(p.max_integrality_violation(&s.values) <= 1e-6);
    }

    #[test]
    fn infeasible_integer_set() {
        let mut p = MiqpProblem::new();
        let x = p.add_variable(Variable::binary());
        p.add_constraint(vec![(x, 2.0)], Sense::Eq, 1.0);
        let s = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn node_limit_returns_incumbent_and_bound() {
        let mut p = MiqpProblem::new();
        let vars: Vec<usize> = (0..10)
            .map(|i| p.add_variable(Variable::binary().with_cost(-(1.0 + 0.1 * i as f64))))
            .collect();
        p.add_constraint(vars.iter().map(|&v| (v, 2.0)).collect(), Sense::Le, 9.0);
        let s = solve_miqp(&p, &SolveLimits::default().with_max_nodes(1), None).unwrap();
        assert_eq!(s.status, SolveStatus::NodeLimit);
        assert!(s.bound <= s.objective);
    }

    #[test]
    fn warm_start_with_wrong_length_is_rejected() {
        let mut p = MiqpProblem::new();
        p.add_variable(Variable::binary());
        assert!(solve_miqp(&p, &SolveLimits::default(), Some(&[0.0, 1.0])).is_err());
    }
}
