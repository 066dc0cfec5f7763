//! Continuous QP relaxation, solved with the Clarabel interior-point engine.
//!
//! Variables whose bounds coincide are substituted out before the problem
//! reaches the engine, so branch-and-bound nodes with many fixed binaries
//! shrink as the tree deepens.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::SolverError;
use crate::problem::{MiqpProblem, Sense};
use crate::solution::{MiqpSolution, SolveStatus};

/// Maximum scaled primal violation accepted from the engine.
pub const FEASIBILITY_TOL: f64 = 1e-7;
const FIXED_TOL: f64 = 1e-12;
const MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Clone)]
pub(crate) enum Relaxation {
    Optimal { x: Vec<f64>, objective: f64, residual: f64 },
    Infeasible { certificate: bool },
}

/// Solves the continuous relaxation of `problem` (integrality marks ignored).
pub fn solve_qp(problem: &MiqpProblem) -> Result<MiqpSolution, SolverError> {
    problem.validate()?;
    let lower: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();
    Ok(match solve_with_bounds(problem, &lower, &upper)? {
        Relaxation::Optimal { x, objective, residual } => MiqpSolution {
            status: SolveStatus::Optimal,
            values: x,
            objective,
            bound: objective,
            nodes: 1,
            primal_residual: residual,
            infeasibility_certificate: false,
            warm_start_used: false,
        },
        Relaxation::Infeasible { certificate } => {
            let mut s = MiqpSolution::infeasible(certificate);
            s.nodes = 1;
            s
        }
    })
}

struct Reduced {
    /// Original index of each engine column.
    columns: Vec<usize>,
    fixed_values: Vec<f64>,
    p: CscMatrix<f64>,
    q: Vec<f64>,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    offset: f64,
}

enum Reduction {
    Ready(Reduced),
    Infeasible,
}

fn reduce(problem: &MiqpProblem, lower: &[f64], upper: &[f64]) -> Reduction {
    let n = problem.variables.len();
    let mut col_of = vec![usize::MAX; n];
    let mut columns = Vec::new();
    let mut fixed_values = vec![0.0; n];
    for j in 0..n {
        let (lo, hi) = (lower[j], upper[j]);
        if lo > hi + FIXED_TOL * (1.0 + lo.abs()) {
            return Reduction::Infeasible;
        }
        if lo.is_finite() && hi.is_finite() && (hi - lo).abs() <= FIXED_TOL * (1.0 + lo.abs()) {
            fixed_values[j] = lo;
        } else {
            col_of[j] = columns.len();
            columns.push(j);
        }
    }
    let nf = columns.len();

    let mut offset = problem.objective_offset;
    let mut q = vec![0.0; nf];
    let mut p_diag = vec![0.0; nf];
    for (j, v) in problem.variables.iter().enumerate() {
        if col_of[j] == usize::MAX {
            let x = fixed_values[j];
            offset += v.cost * x + v.quad * x * x;
        } else {
            q[col_of[j]] = v.cost;
            p_diag[col_of[j]] = 2.0 * v.quad;
        }
    }

    // Rows as (sense, entries, rhs) after substitution; equalities first for the zero cone.
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut le_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for c in &problem.constraints {
        let mut rhs = c.rhs;
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(c.coeffs.len());
        let mut magnitude = c.rhs.abs();
        for &(j, a) in &c.coeffs {
            if a == 0.0 {
                continue;
            }
            if col_of[j] == usize::MAX {
                rhs -= a * fixed_values[j];
                magnitude += (a * fixed_values[j]).abs();
            } else {
                entries.push((col_of[j], a));
            }
        }
        if entries.is_empty() {
            let tol = FEASIBILITY_TOL * (1.0 + magnitude);
            let ok = match c.sense {
                Sense::Le => rhs >= -tol,
                Sense::Ge => rhs <= tol,
                Sense::Eq => rhs.abs() <= tol,
            };
            if !ok {
                return Reduction::Infeasible;
            }
            continue;
        }
        match c.sense {
            Sense::Eq => eq_rows.push((entries, rhs)),
            Sense::Le => le_rows.push((entries, rhs)),
            Sense::Ge => le_rows.push((entries.into_iter().map(|(k, a)| (k, -a)).collect(), -rhs)),
        }
    }
    for (k, &j) in columns.iter().enumerate() {
        if upper[j].is_finite() {
            le_rows.push((vec![(k, 1.0)], upper[j]));
        }
        if lower[j].is_finite() {
            le_rows.push((vec![(k, -1.0)], -lower[j]));
        }
    }
    if le_rows.is_empty() && eq_rows.is_empty() {
        le_rows.push((Vec::new(), 1.0));
    }

    let m = eq_rows.len() + le_rows.len();
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nf];
    let mut b = Vec::with_capacity(m);
    for (i, (entries, rhs)) in eq_rows.iter().chain(le_rows.iter()).enumerate() {
        for &(k, a) in entries {
            by_col[k].push((i, a));
        }
        b.push(*rhs);
    }
    let mut colptr = Vec::with_capacity(nf + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut by_col {
        col.sort_by_key(|&(i, _)| i);
        let mut last: Option<usize> = None;
        for &(i, a) in col.iter() {
            if last == Some(i) {
                *nzval.last_mut().unwrap() += a;
            } else {
                rowval.push(i);
                nzval.push(a);
                last = Some(i);
            }
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(m, nf, colptr, rowval, nzval);

    let mut pcol = Vec::with_capacity(nf + 1);
    let mut prow = Vec::new();
    let mut pval = Vec::new();
    pcol.push(0);
    for (k, &d) in p_diag.iter().enumerate() {
        if d > 0.0 {
            prow.push(k);
            pval.push(d);
        }
        pcol.push(prow.len());
    }
    let p = CscMatrix::new(nf, nf, pcol, prow, pval);

    let mut cones = Vec::new();
    if !eq_rows.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(eq_rows.len()));
    }
    if !le_rows.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(le_rows.len()));
    }

    Reduction::Ready(Reduced { columns, fixed_values, p, q, a, b, cones, offset })
}

fn settings_for_attempt(attempt: usize) -> DefaultSettings<f64> {
    let mut s = DefaultSettings::<f64> { verbose: false, max_iter: 200, ..Default::default() };
    s.tol_gap_abs = 1e-9;
    s.tol_gap_rel = 1e-9;
    s.tol_feas = 1e-9;
    match attempt {
        0 => {}
        1 => {
            s.iterative_refinement_max_iter = 50;
            s.iterative_refinement_reltol = 1e-14;
            s.iterative_refinement_abstol = 1e-14;
            s.max_iter = 400;
        }
        _ => {
            s.equilibrate_enable = false;
            s.static_regularization_constant = 1e-7;
            s.max_iter = 600;
        }
    }
    s
}

/// Solves the relaxation with the given bound vectors overriding the problem's own bounds.
pub(crate) fn solve_with_bounds(
    problem: &MiqpProblem,
    lower: &[f64],
    upper: &[f64],
) -> Result<Relaxation, SolverError> {
    let red = match reduce(problem, lower, upper) {
        Reduction::Infeasible => return Ok(Relaxation::Infeasible { certificate: false }),
        Reduction::Ready(r) => r,
    };
    let n = problem.variables.len();
    let assemble = |engine_x: &[f64]| -> Vec<f64> {
        let mut x = red.fixed_values.clone();
        for (k, &j) in red.columns.iter().enumerate() {
            x[j] = engine_x[k].clamp(lower[j], upper[j]);
        }
        x
    };

    if red.columns.is_empty() {
        let x = assemble(&[]);
        let residual = problem.max_violation(&x);
        return Ok(if residual <= FEASIBILITY_TOL {
            Relaxation::Optimal { objective: problem.objective(&x), x, residual }
        } else {
            Relaxation::Infeasible { certificate: false }
        });
    }
    debug_assert_eq!(n, red.fixed_values.len());

    let mut last_detail = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let mut engine = DefaultSolver::new(
            &red.p,
            &red.q,
            &red.a,
            &red.b,
            &red.cones,
            settings_for_attempt(attempt),
        )
        .map_err(|e| SolverError::InvalidProblem(format!("engine rejected problem: {e:?}")))?;
        engine.solve();
        let sol = &engine.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = assemble(&sol.x);
                let residual = problem.max_violation(&x);
                if residual <= FEASIBILITY_TOL {
                    let objective = problem.objective(&x);
                    debug_assert!(
                        (objective - (sol.obj_val + red.offset)).abs()
                            <= 1e-5 * (1.0 + objective.abs() + red.offset.abs())
                    );
                    return Ok(Relaxation::Optimal { x, objective, residual });
                }
                last_detail = format!("primal residual {residual:.3e} after {:?}", sol.status);
            }
            SolverStatus::PrimalInfeasible => {
                return Ok(Relaxation::Infeasible { certificate: true });
            }
            SolverStatus::AlmostPrimalInfeasible if attempt + 1 == MAX_ATTEMPTS => {
                return Ok(Relaxation::Infeasible { certificate: true });
            }
            SolverStatus::DualInfeasible => return Err(SolverError::Unbounded),
            other => last_detail = format!("engine status {other:?}"),
        }
    }
    Err(SolverError::NumericalFailure { attempts: MAX_ATTEMPTS, detail: last_detail })
}
