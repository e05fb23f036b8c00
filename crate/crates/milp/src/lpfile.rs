//! CPLEX LP text format writer.

use std::fmt::Write as _;
use std::io;

use crate::problem::{Problem, VarId};

const WRAP: usize = 100;
const ZERO_VAR: &str = "ZERO__";

fn push_terms(out: &mut String, terms: &[(VarId, i64)], p: &Problem) {
    let mut line_len = 0;
    for &(v, a) in terms {
        let sign = if a < 0 { '-' } else { '+' };
        let term = format!(" {sign} {} {}", a.unsigned_abs(), p.var(v).name);
        if line_len + term.len() > WRAP {
            out.push_str("\n   ");
            line_len = 0;
        }
        line_len += term.len();
        out.push_str(&term);
    }
}

/// Renders `p` in LP format. Output is a pure function of the problem.
pub fn to_lp_string(p: &Problem) -> String {
    let mut out = String::new();
    if !p.name.is_empty() {
        let _ = writeln!(out, "\\ {}", p.name);
    }
    let needs_zero = p.num_vars() == 0 || p.constraints().iter().any(|c| c.terms.is_empty());

    out.push_str("Minimize\n obj:");
    let objective: Vec<(VarId, i64)> = p
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.cost != 0)
        .map(|(j, v)| (VarId(j), v.cost))
        .collect();
    if objective.is_empty() {
        match p.vars().first() {
            Some(v) => {
                let _ = write!(out, " 0 {}", v.name);
            }
            None => {
                let _ = write!(out, " 0 {ZERO_VAR}");
            }
        }
    } else {
        push_terms(&mut out, &objective, p);
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for c in p.constraints() {
        let _ = write!(out, " {}:", c.name);
        if c.terms.is_empty() {
            let _ = write!(out, " 0 {ZERO_VAR}");
        } else {
            push_terms(&mut out, &c.terms, p);
        }
        let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
    }

    out.push_str("Bounds\n");
    for v in p.vars() {
        match v.upper {
            Some(u) if u == v.lower => {
                let _ = writeln!(out, " {} = {}", v.name, u);
            }
            Some(u) => {
                let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, u);
            }
            None => {
                let _ = writeln!(out, " {} >= {}", v.name, v.lower);
            }
        }
    }
    if needs_zero {
        let _ = writeln!(out, " {ZERO_VAR} = 0");
    }

    let ints: Vec<&str> = p.vars().iter().filter(|v| v.integer).map(|v| v.name.as_str()).collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for chunk in ints.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(p: &Problem, w: &mut impl io::Write) -> io::Result<()> {
    w.write_all(to_lp_string(p).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;

    #[test]
    fn renders_all_sections() {
        let mut p = Problem::new("demo");
        let x = p.add_int_var("x", 0, Some(4), 3);
        let y = p.add_int_var("y", 1, None, -2);
        let z = p.add_int_var("z", 2, Some(2), 0);
        p.add_constraint("c1", [(x, 1), (y, -1)], Sense::Le, 5);
        p.add_constraint("c2", [(y, 1), (z, 2)], Sense::Eq, 7);
        let lp = to_lp_string(&p);
        assert_eq!(
            lp,
            "\\ demo\nMinimize\n obj: + 3 x - 2 y\nSubject To\n c1: + 1 x - 1 y <= 5\n c2: + 1 y + 2 z = 7\n\
             Bounds\n 0 <= x <= 4\n y >= 1\n z = 2\nGeneral\n x y z\nEnd\n"
        );
    }

    #[test]
    fn empty_rows_use_a_pinned_placeholder() {
        let mut p = Problem::new("");
        p.add_constraint("never", [], Sense::Eq, 3);
        let lp = to_lp_string(&p);
        assert!(lp.contains(" never: 0 ZERO__ = 3\n"));
        assert!(lp.contains(" ZERO__ = 0\n"));
    }

    #[test]
    fn long_rows_wrap() {
        let mut p = Problem::new("");
        let vars: Vec<_> = (0..40).map(|i| p.add_int_var(format!("var_{i:03}"), 0, None, 1)).collect();
        p.add_constraint("wide", vars.iter().map(|&v| (v, 1)), Sense::Ge, 1);
        let lp = to_lp_string(&p);
        assert!(lp.lines().all(|l| l.len() <= WRAP + 20));
    }
}
