//! Exact certificates for floating-point LP results.
//!
//! Duals from the `f64` tableau are rounded to multiples of `2^-SCALE`. Any
//! dual vector gives a valid bound once it has the correct sign per row, so
//! the rounding never costs soundness; everything after it is integer
//! arithmetic over the original integral data.

use crate::presolve::Reduced;
use crate::problem::Sense;

const SCALE: u32 = 40;

/// A lower bound on the reduced objective, scaled by `2^SCALE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct ScaledBound(pub i128);

impl ScaledBound {
    /// Smallest integer objective value the bound admits.
    pub fn ceil_int(self) -> i128 {
        let unit = 1i128 << SCALE;
        let q = self.0.div_euclid(unit);
        if self.0.rem_euclid(unit) == 0 {
            q
        } else {
            q + 1
        }
    }
}

/// Rounds and sign-corrects the duals. `None` if a dual is out of range.
fn scaled_duals(red: &Reduced, y: &[f64]) -> Option<Vec<i128>> {
    let unit = (1u64 << SCALE) as f64;
    red.rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            if !yi.is_finite() || yi.abs() > 1e12 {
                return None;
            }
            let v = (yi * unit).round() as i128;
            Some(match row.sense {
                Sense::Le => v.min(0),
                Sense::Ge => v.max(0),
                Sense::Eq => v,
            })
        })
        .collect()
}

/// `(A^T Y)_j` and `Y^T b` for scaled duals.
fn aggregate(red: &Reduced, y: &[i128]) -> Option<(Vec<i128>, i128)> {
    let mut g = vec![0i128; red.num_cols()];
    let mut yb = 0i128;
    for (row, &yi) in red.rows.iter().zip(y) {
        if yi == 0 {
            continue;
        }
        yb = yb.checked_add(yi.checked_mul(row.rhs as i128)?)?;
        for &(j, a) in &row.terms {
            g[j] = g[j].checked_add(yi.checked_mul(a as i128)?)?;
        }
    }
    Some((g, yb))
}

/// Lagrangian lower bound `y^T b + sum_j min_{x_j in box} (c_j - (A^T y)_j) x_j`.
///
/// Returns `None` when a reduced cost points at an infinite bound.
pub(crate) fn safe_lower_bound(red: &Reduced, lower: &[i64], upper: &[Option<i64>], y: &[f64]) -> Option<ScaledBound> {
    let y = scaled_duals(red, y)?;
    let (g, yb) = aggregate(red, &y)?;
    let mut total = yb;
    for j in 0..red.num_cols() {
        let dj = ((red.cost[j] as i128) << SCALE).checked_sub(g[j])?;
        let term = if dj > 0 {
            dj.checked_mul(lower[j] as i128)?
        } else if dj < 0 {
            dj.checked_mul(upper[j]? as i128)?
        } else {
            0
        };
        total = total.checked_add(term)?;
    }
    Some(ScaledBound(total))
}

/// True when `y` proves that no point in the box satisfies the rows.
///
/// Checks `y^T b > max_{box} y^T (A x + s)` and the mirrored inequality.
pub(crate) fn farkas_certifies(red: &Reduced, lower: &[i64], upper: &[Option<i64>], y: &[f64]) -> bool {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let certifies = |cand: &[f64]| {
        let Some(ys) = scaled_duals(red, cand) else {
            return false;
        };
        let Some((g, yb)) = aggregate(red, &ys) else {
            return false;
        };
        let mut max_act = 0i128;
        for j in 0..red.num_cols() {
            let term = if g[j] > 0 {
                match upper[j] {
                    Some(u) => g[j].checked_mul(u as i128),
                    None => return false,
                }
            } else {
                g[j].checked_mul(lower[j] as i128)
            };
            match term.and_then(|t| max_act.checked_add(t)) {
                Some(v) => max_act = v,
                None => return false,
            }
        }
        yb > max_act
    };
    certifies(y) || certifies(&neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presolve::Row;

    fn single_row(sense: Sense, rhs: i64, upper: Option<i64>) -> Reduced {
        Reduced {
            cols: vec![0],
            lower: vec![0],
            upper: vec![upper],
            cost: vec![1],
            integer: vec![true],
            rows: vec![Row {
                terms: vec![(0, 1)],
                sense,
                rhs,
            }],
            fixed: vec![None],
            obj_offset: 0,
        }
    }

    #[test]
    fn ceil_of_scaled_bound() {
        let unit = 1i128 << SCALE;
        assert_eq!(ScaledBound(3 * unit).ceil_int(), 3);
        assert_eq!(ScaledBound(3 * unit + 1).ceil_int(), 4);
        assert_eq!(ScaledBound(-unit / 2).ceil_int(), 0);
    }

    #[test]
    fn bound_from_ge_row() {
        // min x s.t. x >= 3: dual 1 gives bound exactly 3
        let red = single_row(Sense::Ge, 3, Some(10));
        let b = safe_lower_bound(&red, &[0], &[Some(10)], &[1.0]).unwrap();
        assert_eq!(b.ceil_int(), 3);
        // a wrong-signed dual is clamped and still yields a valid (weak) bound
        let b = safe_lower_bound(&red, &[0], &[Some(10)], &[-5.0]).unwrap();
        assert_eq!(b.ceil_int(), 0);
    }

    #[test]
    fn farkas_for_out_of_box_equality() {
        let red = single_row(Sense::Eq, 5, Some(2));
        assert!(farkas_certifies(&red, &[0], &[Some(2)], &[1.0]));
        assert!(farkas_certifies(&red, &[0], &[Some(2)], &[-1.0]));
        assert!(!farkas_certifies(&red, &[0], &[Some(7)], &[1.0]));
    }
}
