//! Compact revised simplex for the small equality-form programs the chain
//! oracle produces: `min c'x  s.t.  Ax = b, x >= 0`, columns sparse, with a
//! caller-supplied starting basis of signed unit columns.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex iteration limit exceeded")]
    IterationLimit,
    #[error("LP is unbounded below")]
    Unbounded,
    #[error("invalid starting basis")]
    BadBasis,
}

pub struct LinearProgram {
    pub nrows: usize,
    /// Sparse columns of A.
    pub cols: Vec<Vec<(usize, f64)>>,
    pub costs: Vec<f64>,
    pub rhs: Vec<f64>,
}

pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

const TOL: f64 = 1e-9;

impl LinearProgram {
    /// Primal simplex from `basis` (one column index per row, forming a
    /// signed permutation). Dantzig pricing with a Bland fallback after
    /// stalls keeps it finite.
    pub fn solve(&self, basis: &[usize]) -> Result<LpSolution, LpError> {
        let m = self.nrows;
        let ncols = self.cols.len();
        if basis.len() != m {
            return Err(LpError::BadBasis);
        }
        let mut basic: Vec<usize> = basis.to_vec();
        let mut in_basis = vec![false; ncols];
        for &j in &basic {
            in_basis[j] = true;
        }

        // Dense basis inverse, seeded from the signed unit starting basis.
        let mut binv = vec![0.0f64; m * m];
        for (r, &j) in basic.iter().enumerate() {
            let col = &self.cols[j];
            if col.len() != 1 || col[0].0 != r || col[0].1.abs() != 1.0 {
                return Err(LpError::BadBasis);
            }
            binv[r * m + r] = col[0].1;
        }

        let mut xb: Vec<f64> = (0..m)
            .map(|r| (0..m).map(|c| binv[r * m + c] * self.rhs[c]).sum())
            .collect();

        let max_iter = 40 * (m + ncols).max(200);
        let mut stall = 0usize;
        for _ in 0..max_iter {
            // Simplex multipliers y = c_B B^{-1}.
            let mut y = vec![0.0f64; m];
            for (r, &j) in basic.iter().enumerate() {
                let cb = self.costs[j];
                if cb != 0.0 {
                    for c in 0..m {
                        y[c] += cb * binv[r * m + c];
                    }
                }
            }
            // Pricing.
            let mut entering = None;
            let mut best = -TOL;
            let bland = stall > 2 * m;
            for j in 0..ncols {
                if in_basis[j] {
                    continue;
                }
                let mut red = self.costs[j];
                for &(r, v) in &self.cols[j] {
                    red -= y[r] * v;
                }
                if red < -TOL {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if red < best {
                        best = red;
                        entering = Some(j);
                    }
                }
            }
            let Some(j) = entering else {
                let value = basic
                    .iter()
                    .zip(&xb)
                    .map(|(&j, &v)| self.costs[j] * v)
                    .sum();
                let mut x = vec![0.0; ncols];
                for (r, &jj) in basic.iter().enumerate() {
                    x[jj] = xb[r];
                }
                return Ok(LpSolution { value, x });
            };

            // Direction d = B^{-1} a_j.
            let mut d = vec![0.0f64; m];
            for &(r, v) in &self.cols[j] {
                for row in 0..m {
                    d[row] += binv[row * m + r] * v;
                }
            }
            // Ratio test; Bland-style lowest-index tie breaking.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if d[r] > TOL {
                    let ratio = xb[r].max(0.0) / d[r];
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => {
                            ratio < lv - TOL || (ratio < lv + TOL && basic[r] < basic[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, step)) = leave else {
                return Err(LpError::Unbounded);
            };
            if step < TOL {
                stall += 1;
            } else {
                stall = 0;
            }

            // Pivot: update basis inverse and basic solution.
            let piv = d[r];
            for c in 0..m {
                binv[r * m + c] /= piv;
            }
            xb[r] /= piv;
            for row in 0..m {
                if row != r && d[row].abs() > 0.0 {
                    let f = d[row];
                    for c in 0..m {
                        binv[row * m + c] -= f * binv[r * m + c];
                    }
                    xb[row] -= f * xb[r];
                }
            }
            in_basis[basic[r]] = false;
            in_basis[j] = true;
            basic[r] = j;
        }
        Err(LpError::IterationLimit)
    }
}

/// Weighted l1 minimization over an affine lattice of chains:
/// `min sum_f w_f |r_f + (B eta)_f|` over free `eta`.
///
/// Returns the optimal value and the minimizing coefficient vector `y`.
pub fn min_weighted_l1(
    weights: &[f64],
    reference: &[f64],
    basis_cols: &[Vec<(usize, f64)>],
) -> Result<(f64, Vec<f64>), LpError> {
    let m = weights.len();
    // Columns: t+ (m), t- (m), then eta+/eta- pairs.
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(2 * m + 2 * basis_cols.len());
    let mut costs = Vec::with_capacity(cols.capacity());
    for r in 0..m {
        cols.push(vec![(r, 1.0)]);
        costs.push(weights[r].max(0.0));
    }
    for r in 0..m {
        cols.push(vec![(r, -1.0)]);
        costs.push(weights[r].max(0.0));
    }
    for col in basis_cols {
        cols.push(col.iter().map(|&(r, v)| (r, -v)).collect());
        costs.push(0.0);
        cols.push(col.clone());
        costs.push(0.0);
    }
    let basis: Vec<usize> = (0..m)
        .map(|r| if reference[r] >= 0.0 { r } else { m + r })
        .collect();
    let lp = LinearProgram {
        nrows: m,
        cols,
        costs,
        rhs: reference.to_vec(),
    };
    let sol = lp.solve(&basis)?;
    let y: Vec<f64> = (0..m).map(|r| sol.x[r] - sol.x[m + r]).collect();
    Ok((sol.value, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_l1_without_lattice() {
        let (v, y) = min_weighted_l1(&[2.0, 1.0], &[1.0, -3.0], &[]).unwrap();
        assert!((v - 5.0).abs() < 1e-9);
        assert!((y[0] - 1.0).abs() < 1e-9 && (y[1] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn lattice_direction_reduces_cost() {
        // y = r + t*(1,1): min |1 + t| + |-1 + t| = 2 at any t in [-1, 1].
        let (v, y) = min_weighted_l1(&[1.0, 1.0], &[1.0, -1.0], &[vec![(0, 1.0), (1, 1.0)]])
            .unwrap();
        assert!((v - 2.0).abs() < 1e-9);
        assert!((y[0] - y[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_shift_to_cheap_row() {
        // Shifting mass to the zero-weight row should zero the cost
        // where possible: y = (1,0) + t(-1,1): w = (1, 0):
        // min |1 - t| -> 0 at t = 1.
        let (v, _) = min_weighted_l1(&[1.0, 0.0], &[1.0, 0.0], &[vec![(0, -1.0), (1, 1.0)]])
            .unwrap();
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn matches_grid_enumeration() {
        // Brute-force the lattice over integer multiples for a 3-row case.
        let w = [1.0, 2.0, 0.5];
        let r = [2.0, -1.0, 0.0];
        let col = vec![(0, 1.0), (1, 1.0), (2, -2.0)];
        let (v, _) = min_weighted_l1(&w, &r, &[col.clone()]).unwrap();
        let mut best = f64::INFINITY;
        let dense = [1.0, 1.0, -2.0];
        for i in -400..=400 {
            let t = i as f64 / 100.0;
            let cost: f64 = (0..3)
                .map(|j| w[j] * (r[j] + t * dense[j]).abs())
                .sum();
            best = best.min(cost);
        }
        assert!(v <= best + 1e-6, "{v} vs {best}");
        assert!(v >= best - 1e-2);
    }
}
