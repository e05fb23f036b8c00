//! Dense-tableau, bounded-variable primal simplex.
//!
//! Columns are laid out as `[structural | logical | artificial]`. Row `i`
//! reads `a_i x + s_i = b_i`, with the logical `s_i` bounded to `[0, inf)`
//! for `<=`, `(-inf, 0]` for `>=` and `[0, 0]` for `=`. The logical columns
//! start as the identity, so the tableau block under them is always `B^-1`:
//! it yields the row duals and lets basic values be recomputed from scratch.

use std::time::Instant;

use crate::presolve::Reduced;
use crate::problem::Sense;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome<S> {
    Optimal {
        x: Vec<S>,
        objective: S,
        /// `y = c_B B^-1`, one per row
        duals: Vec<S>,
    },
    /// Phase-one duals; see `certify::farkas_certifies`.
    Infeasible { farkas: Vec<S> },
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpError {
    Timeout,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

enum Step {
    Optimal,
    Unbounded,
}

/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

struct Tableau<S> {
    m: usize,
    n: usize,
    rows: Vec<Vec<S>>,
    d: Vec<S>,
    lb: Vec<Option<S>>,
    ub: Vec<Option<S>>,
    status: Vec<Status>,
    basis: Vec<usize>,
    beta: Vec<S>,
    art_row: Vec<usize>,
    art_sign: Vec<i64>,
    pivots: usize,
}

fn is_structural_zero<S: Scalar>(v: &S) -> bool {
    if S::EXACT {
        v.is_zero()
    } else {
        v.to_f64() == 0.0
    }
}

impl<S: Scalar> Tableau<S> {
    fn build(red: &Reduced, lower: &[i64], upper: &[Option<i64>]) -> Self {
        let n = red.num_cols();
        let m = red.rows.len();

        let mut lb: Vec<Option<S>> = lower.iter().map(|&l| Some(S::from_i64(l))).collect();
        let mut ub: Vec<Option<S>> = upper.iter().map(|u| u.map(S::from_i64)).collect();
        let mut status = vec![Status::AtLower; n];
        for row in &red.rows {
            let (l, u) = match row.sense {
                Sense::Le => (Some(S::zero()), None),
                Sense::Ge => (None, Some(S::zero())),
                Sense::Eq => (Some(S::zero()), Some(S::zero())),
            };
            lb.push(l);
            ub.push(u);
            status.push(Status::Basic);
        }

        // residuals with every structural column at its lower bound
        let resid: Vec<i128> = red
            .rows
            .iter()
            .map(|r| {
                r.rhs as i128
                    - r.terms
                        .iter()
                        .map(|&(j, a)| a as i128 * lower[j] as i128)
                        .sum::<i128>()
            })
            .collect();

        let mut art_row = Vec::new();
        let mut art_sign = Vec::new();
        let mut basis = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        for (i, row) in red.rows.iter().enumerate() {
            let r = resid[i];
            let feasible = match row.sense {
                Sense::Le => r >= 0,
                Sense::Ge => r <= 0,
                Sense::Eq => r == 0,
            };
            if feasible {
                basis.push(n + i);
                beta.push(S::from_i64(r as i64));
            } else {
                // logical parks at 0; an artificial absorbs the residual
                status[n + i] = match row.sense {
                    Sense::Ge => Status::AtUpper,
                    _ => Status::AtLower,
                };
                art_row.push(i);
                art_sign.push(if r > 0 { 1 } else { -1 });
                basis.push(n + m + art_row.len() - 1);
                beta.push(S::from_i64(r.abs() as i64));
            }
        }
        for _ in 0..art_row.len() {
            lb.push(Some(S::zero()));
            ub.push(None);
            status.push(Status::Basic);
        }

        let ncols = n + m + art_row.len();
        let mut rows = vec![vec![S::zero(); ncols]; m];
        for (i, row) in red.rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                rows[i][j] = S::from_i64(a);
            }
            rows[i][n + i] = S::one();
        }
        for (k, (&i, &sign)) in art_row.iter().zip(&art_sign).enumerate() {
            rows[i][n + m + k] = S::from_i64(sign);
            if sign < 0 {
                // scale the row so the artificial reads +1 in the basis
                for v in rows[i].iter_mut() {
                    if !is_structural_zero(v) {
                        *v = v.neg();
                    }
                }
            }
        }

        Tableau {
            m,
            n,
            rows,
            d: vec![S::zero(); ncols],
            lb,
            ub,
            status,
            basis,
            beta,
            art_row,
            art_sign,
            pivots: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.lb.len()
    }

    fn nonbasic_value(&self, j: usize) -> S {
        match self.status[j] {
            Status::AtLower => self.lb[j].clone().expect("nonbasic at missing lower bound"),
            Status::AtUpper => self.ub[j].clone().expect("nonbasic at missing upper bound"),
            Status::Basic => unreachable!("basic column has no bound value"),
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        match (&self.lb[j], &self.ub[j]) {
            (Some(l), Some(u)) => l.cmp(u).is_eq(),
            _ => false,
        }
    }

    fn reset_costs(&mut self, cost: &[S]) {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = &cost[self.basis[i]];
            if is_structural_zero(cb) {
                continue;
            }
            for (dj, tij) in d.iter_mut().zip(&self.rows[i]) {
                if !is_structural_zero(tij) {
                    *dj = dj.sub(&cb.mul(tij)).clean();
                }
            }
        }
        for (j, dj) in d.iter_mut().enumerate() {
            if self.status[j] == Status::Basic {
                *dj = S::zero();
            }
        }
        self.d = d;
    }

    /// Recomputes `beta = B^-1 (b - N x_N)` from the original rows.
    fn refresh_beta(&mut self, red: &Reduced) {
        let (m, n) = (self.m, self.n);
        let mut rhs: Vec<S> = red.rows.iter().map(|r| S::from_i64(r.rhs)).collect();
        for (i, row) in red.rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                if self.status[j] != Status::Basic {
                    rhs[i] = rhs[i].sub(&S::from_i64(a).mul(&self.nonbasic_value(j)));
                }
            }
            if self.status[n + i] != Status::Basic {
                rhs[i] = rhs[i].sub(&self.nonbasic_value(n + i));
            }
        }
        for (k, (&i, &sign)) in self.art_row.iter().zip(&self.art_sign).enumerate() {
            let col = n + m + k;
            if self.status[col] != Status::Basic {
                let v = self.nonbasic_value(col);
                rhs[i] = rhs[i].sub(&S::from_i64(sign).mul(&v));
            }
        }
        for i in 0..m {
            let mut acc = S::zero();
            for (k, rk) in rhs.iter().enumerate() {
                let t = &self.rows[i][n + k];
                if !is_structural_zero(t) {
                    acc = acc.add(&t.mul(rk));
                }
            }
            self.beta[i] = acc;
        }
    }

    fn value(&self, j: usize) -> S {
        match self.status[j] {
            Status::Basic => {
                let r = self.basis.iter().position(|&b| b == j).expect("basic column not in basis");
                self.beta[r].clone()
            }
            _ => self.nonbasic_value(j),
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let piv = self.rows[r][q].clone();
        let mut nz: Vec<(usize, S)> = Vec::new();
        for (k, v) in self.rows[r].iter_mut().enumerate() {
            if is_structural_zero(v) {
                continue;
            }
            *v = v.div(&piv).clean();
            if !is_structural_zero(v) {
                nz.push((k, v.clone()));
            }
        }
        self.rows[r][q] = S::one();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.rows[i][q].clone();
            if is_structural_zero(&f) {
                continue;
            }
            let row = &mut self.rows[i];
            for (k, v) in &nz {
                row[*k] = row[*k].sub(&f.mul(v)).clean();
            }
            row[q] = S::zero();
        }
        let f = self.d[q].clone();
        if !is_structural_zero(&f) {
            for (k, v) in &nz {
                self.d[*k] = self.d[*k].sub(&f.mul(v)).clean();
            }
        }
        self.d[q] = S::zero();
        self.pivots += 1;
    }

    fn iterate(&mut self, deadline: Option<Instant>, cap: usize) -> Result<Step, LpError> {
        let mut degenerate = 0usize;
        for iter in 1.. {
            if iter > cap {
                return Err(LpError::IterationLimit);
            }
            if iter % 64 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(LpError::Timeout);
            }
            let bland = degenerate >= DEGENERATE_SWITCH;

            let Some(q) = self.price(bland) else {
                return Ok(Step::Optimal);
            };
            let dir_up = self.status[q] == Status::AtLower;
            let flip = match (&self.lb[q], &self.ub[q]) {
                (Some(l), Some(u)) => Some(u.sub(l)),
                _ => None,
            };
            let leave = self.ratio_test(q, dir_up, bland);

            let use_flip = match (&flip, &leave) {
                (Some(f), Some((_, r))) => f.cmp(r).is_le(),
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => return Ok(Step::Unbounded),
            };
            let theta = if use_flip {
                flip.expect("flip distance")
            } else {
                leave.as_ref().expect("leaving row").1.clone()
            };
            if theta.is_zero() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            let step = if dir_up { theta.clone() } else { theta.neg() };
            if !is_structural_zero(&step) {
                for i in 0..self.m {
                    let a = &self.rows[i][q];
                    if !is_structural_zero(a) {
                        self.beta[i] = self.beta[i].sub(&a.mul(&step)).clean();
                    }
                }
            }

            if use_flip {
                self.status[q] = if dir_up { Status::AtUpper } else { Status::AtLower };
                continue;
            }

            let (r, _) = leave.expect("leaving row");
            let entering_value = self.nonbasic_value(q).add(&step);
            let leaving = self.basis[r];
            let alpha = if dir_up { self.rows[r][q].clone() } else { self.rows[r][q].neg() };
            // a positive alpha drives the leaving variable down to its lower bound
            let mut st = if alpha.is_pos() { Status::AtLower } else { Status::AtUpper };
            if st == Status::AtLower && self.lb[leaving].is_none() {
                st = Status::AtUpper;
            }
            if st == Status::AtUpper && self.ub[leaving].is_none() {
                st = Status::AtLower;
            }
            self.status[leaving] = st;
            self.pivot(r, q);
            self.basis[r] = q;
            self.status[q] = Status::Basic;
            self.beta[r] = entering_value;
        }
        unreachable!()
    }

    /// Dantzig pricing, or the lowest improving index under Bland's rule.
    fn price(&self, bland: bool) -> Option<usize> {
        let mut enter: Option<(usize, S)> = None;
        for j in 0..self.ncols() {
            let st = self.status[j];
            if st == Status::Basic || self.is_fixed(j) {
                continue;
            }
            let dj = &self.d[j];
            let improving = (st == Status::AtLower && dj.is_neg()) || (st == Status::AtUpper && dj.is_pos());
            if !improving {
                continue;
            }
            if bland {
                return Some(j);
            }
            let mag = if dj.is_neg() { dj.neg() } else { dj.clone() };
            if enter.as_ref().map_or(true, |(_, best)| mag.cmp(best).is_gt()) {
                enter = Some((j, mag));
            }
        }
        enter.map(|(j, _)| j)
    }

    /// Returns the blocking row and step length, if any row blocks.
    fn ratio_test(&self, q: usize, dir_up: bool, bland: bool) -> Option<(usize, S)> {
        let mut leave: Option<(usize, S, S)> = None;
        for i in 0..self.m {
            let raw = &self.rows[i][q];
            if raw.is_zero() {
                continue;
            }
            let alpha = if dir_up { raw.clone() } else { raw.neg() };
            let b = self.basis[i];
            let ratio = if alpha.is_pos() {
                match &self.lb[b] {
                    Some(l) => self.beta[i].sub(l).div(&alpha),
                    None => continue,
                }
            } else {
                match &self.ub[b] {
                    Some(u) => u.sub(&self.beta[i]).div(&alpha.neg()),
                    None => continue,
                }
            };
            let ratio = if ratio.to_f64() < 0.0 { S::zero() } else { ratio };
            let mag = if alpha.is_neg() { alpha.neg() } else { alpha };
            let better = match &leave {
                None => true,
                Some((r0, best, best_mag)) => {
                    let tie = if S::EXACT {
                        ratio.cmp(best).is_eq()
                    } else {
                        ratio.sub(best).is_zero()
                    };
                    if !tie {
                        ratio.cmp(best).is_lt()
                    } else if bland || S::EXACT {
                        self.basis[i] < self.basis[*r0]
                    } else {
                        mag.cmp(best_mag).is_gt()
                    }
                }
            };
            if better {
                leave = Some((i, ratio, mag));
            }
        }
        leave.map(|(r, ratio, _)| (r, ratio))
    }
}

/// Solves the LP relaxation of `red` under the given column bounds.
///
/// Returns the outcome together with the number of pivots spent.
pub(crate) fn solve_lp<S: Scalar>(
    red: &Reduced,
    lower: &[i64],
    upper: &[Option<i64>],
    deadline: Option<Instant>,
) -> Result<(LpOutcome<S>, usize), LpError> {
    let mut t = Tableau::<S>::build(red, lower, upper);
    let (n, m) = (t.n, t.m);
    let ncols = t.ncols();
    let cap = 50 * (ncols + m) + 1000;

    if !t.art_row.is_empty() {
        let mut c1 = vec![S::zero(); ncols];
        for c in c1.iter_mut().skip(n + m) {
            *c = S::one();
        }
        t.reset_costs(&c1);
        if let Step::Unbounded = t.iterate(deadline, cap)? {
            unreachable!("phase one is bounded below by zero");
        }
        t.refresh_beta(red);
        let infeasibility = (0..m)
            .filter(|&i| t.basis[i] >= n + m)
            .fold(S::zero(), |acc, i| acc.add(&t.beta[i]));
        if infeasibility.is_pos() {
            let farkas = (0..m).map(|i| t.d[n + i].neg()).collect();
            return Ok((LpOutcome::Infeasible { farkas }, t.pivots));
        }
        for a in n + m..ncols {
            t.ub[a] = Some(S::zero());
            if t.status[a] == Status::AtUpper {
                t.status[a] = Status::AtLower;
            }
        }
    }

    let mut c2 = vec![S::zero(); ncols];
    for (j, &c) in red.cost.iter().enumerate() {
        c2[j] = S::from_i64(c);
    }
    t.reset_costs(&c2);
    if let Step::Unbounded = t.iterate(deadline, cap)? {
        return Ok((LpOutcome::Unbounded, t.pivots));
    }
    t.refresh_beta(red);
    let x: Vec<S> = (0..n).map(|j| t.value(j)).collect();
    let objective = x
        .iter()
        .zip(&red.cost)
        .fold(S::zero(), |acc, (xj, &c)| acc.add(&xj.mul(&S::from_i64(c))));
    let duals = (0..m).map(|i| t.d[n + i].neg()).collect();
    Ok((LpOutcome::Optimal { x, objective, duals }, t.pivots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presolve::Row;
    use crate::scalar::Rational;

    fn reduced(
        cost: Vec<i64>,
        lower: Vec<i64>,
        upper: Vec<Option<i64>>,
        rows: Vec<(Vec<(usize, i64)>, Sense, i64)>,
    ) -> Reduced {
        let n = cost.len();
        Reduced {
            cols: (0..n).collect(),
            lower,
            upper,
            integer: vec![false; n],
            cost,
            rows: rows
                .into_iter()
                .map(|(terms, sense, rhs)| Row { terms, sense, rhs })
                .collect(),
            fixed: vec![None; n],
            obj_offset: 0,
        }
    }

    fn run<S: Scalar>(r: &Reduced) -> LpOutcome<S> {
        solve_lp::<S>(r, &r.lower, &r.upper, None).unwrap().0
    }

    #[test]
    fn textbook_max_problem() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let r = reduced(
            vec![-3, -5],
            vec![0, 0],
            vec![None, None],
            vec![
                (vec![(0, 1)], Sense::Le, 4),
                (vec![(1, 2)], Sense::Le, 12),
                (vec![(0, 3), (1, 2)], Sense::Le, 18),
            ],
        );
        match run::<Rational>(&r) {
            LpOutcome::Optimal { x, objective, .. } => {
                assert_eq!(x, vec![Rational::from_i64(2), Rational::from_i64(6)]);
                assert_eq!(objective, Rational::from_i64(-36));
            }
            other => panic!("{other:?}"),
        }
        match run::<f64>(&r) {
            LpOutcome::Optimal { x, objective, duals } => {
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
                assert!((objective + 36.0).abs() < 1e-9);
                // shadow prices of the binding rows: 0, -3/2, -1
                assert!((duals[0]).abs() < 1e-9);
                assert!((duals[1] + 1.5).abs() < 1e-9);
                assert!((duals[2] + 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equality_and_ge_rows_need_phase_one() {
        // min x + 2y s.t. x + y = 4, x - y >= 1, x <= 3
        let r = reduced(
            vec![1, 2],
            vec![0, 0],
            vec![Some(3), None],
            vec![(vec![(0, 1), (1, 1)], Sense::Eq, 4), (vec![(0, 1), (1, -1)], Sense::Ge, 1)],
        );
        match run::<Rational>(&r) {
            LpOutcome::Optimal { x, objective, .. } => {
                assert_eq!(x, vec![Rational::from_i64(3), Rational::from_i64(1)]);
                assert_eq!(objective, Rational::from_i64(5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let infeasible = reduced(
            vec![0],
            vec![0],
            vec![Some(1)],
            vec![(vec![(0, 1)], Sense::Eq, 2)],
        );
        assert!(matches!(run::<f64>(&infeasible), LpOutcome::Infeasible { .. }));
        assert!(matches!(run::<Rational>(&infeasible), LpOutcome::Infeasible { .. }));

        let unbounded = reduced(
            vec![-1, 0],
            vec![0, 0],
            vec![None, None],
            vec![(vec![(0, 1), (1, -1)], Sense::Le, 2)],
        );
        assert!(matches!(run::<f64>(&unbounded), LpOutcome::Unbounded));
    }

    #[test]
    fn fractional_vertex() {
        // min -x - y s.t. 2x + 2y <= 3  -> objective -3/2
        let r = reduced(
            vec![-1, -1],
            vec![0, 0],
            vec![None, None],
            vec![(vec![(0, 2), (1, 2)], Sense::Le, 3)],
        );
        match run::<Rational>(&r) {
            LpOutcome::Optimal { objective, .. } => {
                assert_eq!(objective, Rational::from_i64(-3).div(&Rational::from_i64(2)))
            }
            other => panic!("{other:?}"),
        }
    }
}
