//! Exact integer presolve.
//!
//! Every reduction here is valid for the integer problem, so a problem found
//! infeasible during presolve is proven infeasible.

use crate::problem::{Problem, Sense};

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub terms: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

/// The problem left after presolve, over reduced column indices.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    /// reduced column -> original variable
    pub cols: Vec<usize>,
    pub lower: Vec<i64>,
    pub upper: Vec<Option<i64>>,
    pub cost: Vec<i64>,
    pub integer: Vec<bool>,
    pub rows: Vec<Row>,
    /// original variable -> value fixed by presolve
    pub fixed: Vec<Option<i64>>,
    pub obj_offset: i128,
}

impl Reduced {
    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    /// Expands reduced column values into a full assignment.
    pub fn expand(&self, values: &[i64]) -> Vec<i64> {
        let mut full: Vec<i64> = self.fixed.iter().map(|f| f.unwrap_or(0)).collect();
        for (j, &orig) in self.cols.iter().enumerate() {
            full[orig] = values[j];
        }
        full
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Presolved {
    Reduced(Reduced),
    Infeasible(#[allow(dead_code)] String),
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

struct Work<'a> {
    names: Vec<&'a str>,
    terms: Vec<Vec<(usize, i64)>>,
    sense: Vec<Sense>,
    rhs: Vec<i128>,
    active: Vec<bool>,
    lower: Vec<i128>,
    upper: Vec<Option<i128>>,
    integer: Vec<bool>,
}

impl Work<'_> {
    fn is_fixed(&self, v: usize) -> bool {
        self.upper[v] == Some(self.lower[v])
    }

    fn tighten_lower(&mut self, v: usize, l: i128) -> bool {
        if l > self.lower[v] {
            self.lower[v] = l;
            true
        } else {
            false
        }
    }

    fn tighten_upper(&mut self, v: usize, u: i128) -> bool {
        if self.upper[v].map_or(true, |cur| u < cur) {
            self.upper[v] = Some(u);
            true
        } else {
            false
        }
    }

    /// (min activity, max activity); `None` means unbounded in that direction.
    fn activity_range(&self, r: usize) -> (Option<i128>, Option<i128>) {
        let mut lo = Some(0i128);
        let mut hi = Some(0i128);
        for &(v, a) in &self.terms[r] {
            let a = a as i128;
            let (at_l, at_u) = (a * self.lower[v], self.upper[v].map(|u| a * u));
            if a > 0 {
                lo = lo.map(|s| s + at_l);
                hi = hi.zip(at_u).map(|(s, x)| s + x);
            } else {
                lo = lo.zip(at_u).map(|(s, x)| s + x);
                hi = hi.map(|s| s + at_l);
            }
        }
        (lo, hi)
    }
}

pub(crate) fn presolve(p: &Problem) -> Presolved {
    let n = p.num_vars();
    let mut w = Work {
        names: p.constraints().iter().map(|c| c.name.as_str()).collect(),
        terms: p
            .constraints()
            .iter()
            .map(|c| c.terms.iter().map(|&(v, a)| (v.0, a)).collect())
            .collect(),
        sense: p.constraints().iter().map(|c| c.sense).collect(),
        rhs: p.constraints().iter().map(|c| c.rhs as i128).collect(),
        active: vec![true; p.num_constraints()],
        lower: p.vars().iter().map(|v| v.lower as i128).collect(),
        upper: p.vars().iter().map(|v| v.upper.map(|u| u as i128)).collect(),
        integer: p.vars().iter().map(|v| v.integer).collect(),
    };

    for (j, v) in p.vars().iter().enumerate() {
        if w.upper[j].is_some_and(|u| u < w.lower[j]) {
            return Presolved::Infeasible(format!("{}: empty bound interval", v.name));
        }
    }

    loop {
        let mut changed = false;
        for r in 0..w.terms.len() {
            if !w.active[r] {
                continue;
            }
            let mut terms = std::mem::take(&mut w.terms[r]);
            let before = terms.len();
            let mut shift = 0i128;
            terms.retain(|&(v, a)| {
                if w.is_fixed(v) {
                    shift += a as i128 * w.lower[v];
                    false
                } else {
                    true
                }
            });
            w.rhs[r] -= shift;
            changed |= terms.len() != before;
            w.terms[r] = terms;

            let (lo, hi) = w.activity_range(r);
            let rhs = w.rhs[r];
            let infeasible = match w.sense[r] {
                Sense::Le => lo.is_some_and(|l| l > rhs),
                Sense::Ge => hi.is_some_and(|h| h < rhs),
                Sense::Eq => lo.is_some_and(|l| l > rhs) || hi.is_some_and(|h| h < rhs),
            };
            if infeasible {
                return Presolved::Infeasible(format!("{}: activity range excludes rhs", w.names[r]));
            }
            let redundant = match w.sense[r] {
                Sense::Le => hi.is_some_and(|h| h <= rhs),
                Sense::Ge => lo.is_some_and(|l| l >= rhs),
                Sense::Eq => lo == Some(rhs) && hi == Some(rhs),
            };
            if redundant {
                w.active[r] = false;
                changed = true;
                continue;
            }

            if w.terms[r].len() == 1 && w.integer[w.terms[r][0].0] {
                let (v, a) = w.terms[r][0];
                let (a, sense, rhs) = if a > 0 {
                    (a as i128, w.sense[r], rhs)
                } else {
                    let flipped = match w.sense[r] {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    };
                    (-(a as i128), flipped, -rhs)
                };
                match sense {
                    Sense::Le => {
                        w.tighten_upper(v, div_floor(rhs, a));
                    }
                    Sense::Ge => {
                        w.tighten_lower(v, div_ceil(rhs, a));
                    }
                    Sense::Eq => {
                        if rhs % a != 0 {
                            return Presolved::Infeasible(format!("{}: no integral solution", w.names[r]));
                        }
                        w.tighten_lower(v, rhs / a);
                        w.tighten_upper(v, rhs / a);
                    }
                }
                if w.upper[v].is_some_and(|u| u < w.lower[v]) {
                    return Presolved::Infeasible(format!("{}: bounds cross", w.names[r]));
                }
                w.active[r] = false;
                changed = true;
            }
        }

        // columns that no active row references sit at their cheapest bound
        let mut referenced = vec![false; n];
        for r in (0..w.terms.len()).filter(|&r| w.active[r]) {
            for &(v, _) in &w.terms[r] {
                referenced[v] = true;
            }
        }
        for (j, var) in p.vars().iter().enumerate() {
            if referenced[j] || w.is_fixed(j) {
                continue;
            }
            if var.cost >= 0 {
                w.upper[j] = Some(w.lower[j]);
                changed = true;
            } else if let Some(u) = w.upper[j] {
                w.lower[j] = u;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let to_i64 = |x: i128| i64::try_from(x).expect("presolve bound overflow");
    let mut col_of = vec![usize::MAX; n];
    let mut red = Reduced {
        cols: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        cost: Vec::new(),
        integer: Vec::new(),
        rows: Vec::new(),
        fixed: vec![None; n],
        obj_offset: 0,
    };
    for (j, var) in p.vars().iter().enumerate() {
        if w.is_fixed(j) {
            red.fixed[j] = Some(to_i64(w.lower[j]));
            red.obj_offset += var.cost as i128 * w.lower[j];
        } else {
            col_of[j] = red.cols.len();
            red.cols.push(j);
            red.lower.push(to_i64(w.lower[j]));
            red.upper.push(w.upper[j].map(to_i64));
            red.cost.push(var.cost);
            red.integer.push(var.integer);
        }
    }
    for r in (0..w.terms.len()).filter(|&r| w.active[r]) {
        red.rows.push(Row {
            terms: w.terms[r].iter().map(|&(v, a)| (col_of[v], a)).collect(),
            sense: w.sense[r],
            rhs: to_i64(w.rhs[r]),
        });
    }
    Presolved::Reduced(red)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;

    fn reduced(p: &Problem) -> Reduced {
        match presolve(p) {
            Presolved::Reduced(r) => r,
            Presolved::Infeasible(why) => panic!("unexpected infeasible: {why}"),
        }
    }

    #[test]
    fn integer_division_helpers() {
        assert_eq!(div_floor(7, 2), 3);
        assert_eq!(div_floor(-7, 2), -4);
        assert_eq!(div_ceil(7, 2), 4);
        assert_eq!(div_ceil(-7, 2), -3);
    }

    #[test]
    fn singleton_rows_become_bounds_and_fix_chains() {
        let mut p = Problem::new("t");
        let x = p.add_int_var("x", 0, None, 1);
        let y = p.add_int_var("y", 0, None, 1);
        let z = p.add_int_var("z", 0, Some(9), 1);
        p.add_constraint("fix_x", [(x, 2)], Sense::Eq, 6);
        p.add_constraint("link", [(x, 1), (y, 1)], Sense::Eq, 5);
        p.add_constraint("cap", [(z, 3)], Sense::Le, 10);
        let r = reduced(&p);
        assert_eq!(r.fixed[x.0], Some(3));
        assert_eq!(r.fixed[y.0], Some(2));
        // z is unreferenced after its row turns into a bound, so it sits at 0
        assert_eq!(r.fixed[z.0], Some(0));
        assert!(r.cols.is_empty());
        assert_eq!(r.obj_offset, 5);
    }

    #[test]
    fn detects_parity_infeasibility() {
        let mut p = Problem::new("t");
        let x = p.add_int_var("x", 0, None, 0);
        p.add_constraint("odd", [(x, 2)], Sense::Eq, 3);
        assert!(matches!(presolve(&p), Presolved::Infeasible(_)));
    }

    #[test]
    fn detects_empty_row_infeasibility() {
        let mut p = Problem::new("t");
        p.add_constraint("impossible", [], Sense::Eq, 4);
        assert!(matches!(presolve(&p), Presolved::Infeasible(ref s) if s.starts_with("impossible")));
    }

    #[test]
    fn drops_redundant_rows() {
        let mut p = Problem::new("t");
        let x = p.add_int_var("x", 0, Some(2), -1);
        let y = p.add_int_var("y", 0, Some(2), -1);
        let z = p.add_int_var("z", 0, Some(2), -1);
        p.add_constraint("loose", [(x, 1), (y, 1)], Sense::Le, 10);
        p.add_constraint("tight", [(x, 1), (y, 1), (z, 1)], Sense::Le, 5);
        let r = reduced(&p);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.cols.len(), 3);
    }
}
