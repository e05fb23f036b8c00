//! Depth-first branch and bound.
//!
//! Every node either closes with a proof (presolve, exact LP, or an integer
//! certificate checked against a floating-point LP) or is branched. When a
//! floating-point node cannot be certified it is re-solved in rational
//! arithmetic, so the returned status never rests on a tolerance.

use std::time::{Duration, Instant};

use crate::certify::{farkas_certifies, safe_lower_bound};
use crate::presolve::{presolve, Presolved, Reduced};
use crate::problem::Problem;
use crate::scalar::{Rational, Scalar};
use crate::simplex::{solve_lp, LpError, LpOutcome};
use crate::SolveError;

/// How node relaxations are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arithmetic {
    /// Rational tableau throughout. Slow; meant for small models.
    Exact,
    /// `f64` tableau with integer-checked certificates and rational fallback.
    #[default]
    Certified,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub arithmetic: Arithmetic,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            arithmetic: Arithmetic::Certified,
            time_limit: None,
            node_limit: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub nodes: usize,
    pub pivots: usize,
    pub exact_fallbacks: usize,
    pub presolved_cols: usize,
    pub presolved_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub status: Status,
    /// One value per problem variable; empty unless optimal.
    pub values: Vec<i64>,
    pub objective: i64,
    pub stats: SolveStats,
}

impl Solution {
    pub fn infeasible(stats: SolveStats) -> Self {
        Self {
            status: Status::Infeasible,
            values: Vec::new(),
            objective: 0,
            stats,
        }
    }
}

struct Node {
    lower: Vec<i64>,
    upper: Vec<Option<i64>>,
}

enum NodeResult {
    Infeasible,
    Unbounded,
    Solved {
        /// nearest integer, already integral?, approximate value
        values: Vec<(i64, bool, f64)>,
        /// no integer point in the node scores below this
        bound: i128,
    },
}

struct Search<'a> {
    red: &'a Reduced,
    deadline: Option<Instant>,
    stats: SolveStats,
}

fn map_lp_err(e: LpError, limit: Option<Duration>) -> SolveError {
    match e {
        LpError::Timeout => SolveError::Timeout(limit.unwrap_or_default()),
        LpError::IterationLimit => SolveError::Numerical("simplex iteration limit".into()),
    }
}

impl Search<'_> {
    fn exact(&mut self, node: &Node) -> Result<NodeResult, LpError> {
        self.stats.exact_fallbacks += 1;
        let (out, pivots) = solve_lp::<Rational>(self.red, &node.lower, &node.upper, self.deadline)?;
        self.stats.pivots += pivots;
        Ok(match out {
            LpOutcome::Infeasible { .. } => NodeResult::Infeasible,
            LpOutcome::Unbounded => NodeResult::Unbounded,
            LpOutcome::Optimal { x, objective, .. } => NodeResult::Solved {
                values: x
                    .iter()
                    .map(|v| {
                        let (r, is_int) = v.nearest_int();
                        (r, is_int, Scalar::to_f64(v))
                    })
                    .collect(),
                bound: {
                    let (r, is_int) = objective.nearest_int();
                    if is_int {
                        r as i128
                    } else {
                        objective.floor_i64() as i128 + 1
                    }
                },
            },
        })
    }

    fn certified(&mut self, node: &Node) -> Result<NodeResult, LpError> {
        let (out, pivots) = solve_lp::<f64>(self.red, &node.lower, &node.upper, self.deadline)?;
        self.stats.pivots += pivots;
        match out {
            LpOutcome::Infeasible { farkas } => {
                if farkas_certifies(self.red, &node.lower, &node.upper, &farkas) {
                    Ok(NodeResult::Infeasible)
                } else {
                    self.exact(node)
                }
            }
            LpOutcome::Unbounded => self.exact(node),
            LpOutcome::Optimal { x, objective, duals } => {
                let Some(bound) = safe_lower_bound(self.red, &node.lower, &node.upper, &duals) else {
                    return self.exact(node);
                };
                let bound = bound.ceil_int();
                // a bound far below the LP value means the duals were poor
                if (bound as f64) < objective - 0.5 {
                    return self.exact(node);
                }
                Ok(NodeResult::Solved {
                    values: x
                        .iter()
                        .map(|v| {
                            let (r, is_int) = v.nearest_int();
                            (r, is_int, *v)
                        })
                        .collect(),
                    bound,
                })
            }
        }
    }

    fn integral_point_ok(&self, node: &Node, point: &[i64]) -> bool {
        point.iter().enumerate().all(|(j, &v)| {
            v >= node.lower[j] && node.upper[j].map_or(true, |u| v <= u)
        }) && self.red.rows.iter().all(|row| {
            let act: i128 = row.terms.iter().map(|&(j, a)| a as i128 * point[j] as i128).sum();
            row.sense.holds(act, row.rhs as i128)
        })
    }

    fn objective(&self, point: &[i64]) -> i128 {
        point.iter().zip(&self.red.cost).map(|(&x, &c)| x as i128 * c as i128).sum()
    }
}

/// Solves `p` to proven optimality or proven infeasibility.
pub fn solve(p: &Problem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    let red = match presolve(p) {
        Presolved::Infeasible(_) => return Ok(Solution::infeasible(SolveStats::default())),
        Presolved::Reduced(r) => r,
    };
    let mut search = Search {
        red: &red,
        deadline,
        stats: SolveStats {
            presolved_cols: red.num_cols(),
            presolved_rows: red.rows.len(),
            ..SolveStats::default()
        },
    };

    let mut incumbent: Option<(Vec<i64>, i128)> = None;
    let mut stack = vec![Node {
        lower: red.lower.clone(),
        upper: red.upper.clone(),
    }];

    while let Some(node) = stack.pop() {
        search.stats.nodes += 1;
        if search.stats.nodes > opts.node_limit {
            return Err(SolveError::NodeLimit(opts.node_limit));
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(SolveError::Timeout(opts.time_limit.unwrap_or_default()));
        }

        let mut result = match opts.arithmetic {
            Arithmetic::Exact => search.exact(&node),
            Arithmetic::Certified => search.certified(&node),
        }
        .map_err(|e| map_lp_err(e, opts.time_limit))?;

        // An integral LP point whose value the certificate cannot pin down
        // gets one exact re-solve.
        if let (Arithmetic::Certified, NodeResult::Solved { values, bound }) = (opts.arithmetic, &result) {
            if values.iter().zip(&red.integer).all(|((_, is_int, _), &int)| *is_int || !int) {
                let point: Vec<i64> = values.iter().map(|v| v.0).collect();
                let pinned = search.integral_point_ok(&node, &point) && search.objective(&point) == *bound;
                if !pinned {
                    result = search.exact(&node).map_err(|e| map_lp_err(e, opts.time_limit))?;
                }
            }
        }

        let (values, bound) = match result {
            NodeResult::Infeasible => continue,
            NodeResult::Unbounded => return Err(SolveError::Unbounded),
            NodeResult::Solved { values, bound } => (values, bound),
        };
        if incumbent.as_ref().is_some_and(|(_, best)| bound >= *best) {
            continue;
        }

        // most fractional integer column, lowest index on ties
        let branch = values
            .iter()
            .enumerate()
            .filter(|&(j, v)| red.integer[j] && !v.1)
            .map(|(j, v)| (j, (v.2 - v.2.floor() - 0.5).abs(), v.2))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

        match branch {
            None => {
                let point: Vec<i64> = values.iter().map(|v| v.0).collect();
                if !search.integral_point_ok(&node, &point) {
                    return Err(SolveError::Numerical("integral relaxation point fails exact check".into()));
                }
                let obj = search.objective(&point);
                if incumbent.as_ref().map_or(true, |(_, best)| obj < *best) {
                    incumbent = Some((point, obj));
                }
            }
            Some((j, _, v)) => {
                let down = v.floor() as i64;
                let mut lo = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                };
                lo.upper[j] = Some(down);
                let mut hi = node;
                hi.lower[j] = down + 1;
                // explore the nearer side first
                if v - down as f64 >= 0.5 {
                    stack.push(lo);
                    stack.push(hi);
                } else {
                    stack.push(hi);
                    stack.push(lo);
                }
            }
        }
    }

    let stats = search.stats;
    let Some((point, obj)) = incumbent else {
        return Ok(Solution::infeasible(stats));
    };
    let values = red.expand(&point);
    let violations = p.violations(&values);
    if !violations.is_empty() {
        return Err(SolveError::Numerical(format!("solution violates {}", violations[0])));
    }
    let objective = i64::try_from(obj + red.obj_offset).map_err(|_| SolveError::Numerical("objective overflow".into()))?;
    debug_assert_eq!(objective as i128, p.objective(&values));
    Ok(Solution {
        status: Status::Optimal,
        values,
        objective,
        stats,
    })
}
