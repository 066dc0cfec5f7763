//! Plain-text dump in CPLEX LP syntax, for debugging and hand-off to external solvers.

use std::fmt::Write;

use crate::problem::MiqpProblem;

fn term(out: &mut String, coeff: f64, name: &str, first: bool) {
    if coeff < 0.0 {
        let _ = write!(out, " - {} {name}", -coeff);
    } else if first {
        let _ = write!(out, " {coeff} {name}");
    } else {
        let _ = write!(out, " + {coeff} {name}");
    }
}

pub fn to_lp_string(problem: &MiqpProblem) -> String {
    let name = |j: usize| sanitize(&problem.variable_name(j));
    let mut out = String::new();
    out.push_str("\\ objective constant: ");
    let _ = writeln!(out, "{}", problem.objective_offset);
    out.push_str("Minimize\n obj:");
    let mut first = true;
    for (j, v) in problem.variables.iter().enumerate() {
        if v.cost != 0.0 {
            term(&mut out, v.cost, &name(j), first);
            first = false;
        }
    }
    let quads: Vec<(usize, f64)> = problem
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.quad != 0.0)
        .map(|(j, v)| (j, v.quad))
        .collect();
    if !quads.is_empty() {
        // LP syntax halves the bracket, so store 2·quad inside it.
        out.push_str(if first { " [" } else { " + [" });
        for (k, (j, q)) in quads.iter().enumerate() {
            term(&mut out, 2.0 * q, &format!("{} ^ 2", name(*j)), k == 0);
        }
        out.push_str(" ] / 2");
        first = false;
    }
    if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, c) in problem.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        if c.coeffs.is_empty() {
            out.push_str(" 0");
        }
        for (k, &(j, a)) in c.coeffs.iter().enumerate() {
            term(&mut out, a, &name(j), k == 0);
        }
        let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, v) in problem.variables.iter().enumerate() {
        let n = name(j);
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {n} = {}", v.lower);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {n} <= {}", v.lower, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {n} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {n} <= {}", v.upper);
            }
            (false, false) => {
                let _ = writeln!(out, " {n} free");
            }
        }
    }
    let ints: Vec<usize> = problem.integer_indices();
    if !ints.is_empty() {
        out.push_str("General\n");
        for j in ints {
            let _ = writeln!(out, " {}", name(j));
        }
    }
    out.push_str("End\n");
    out
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_[]".contains(c) { c } else { '_' })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Sense, Variable};

    #[test]
    fn dump_contains_every_section() {
        let mut p = MiqpProblem::new();
        let x = p.add_variable(Variable { quad: 0.5, ..Variable::binary().with_cost(-2.0) });
        let y = p.add_variable(Variable::continuous(0.0, 3.0));
        p.add_constraint(vec![(x, 1.0), (y, -1.0)], Sense::Le, 0.0);
        p.names = vec!["x[g1,0]".into(), "flow a-b".into()];
        let text = to_lp_string(&p);
        assert!(text.contains("Minimize\n obj: - 2 x[g1_0] + [ 1 x[g1_0] ^ 2 ] / 2"));
        assert!(text.contains(" c0: 1 x[g1_0] - 1 flow_a_b <= 0"));
        assert!(text.contains(" 0 <= flow_a_b <= 3"));
        assert!(text.contains("General\n x[g1_0]\nEnd"));
    }
}
