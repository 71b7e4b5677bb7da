//! Sparse integer Smith normal form, diagonal only.
//!
//! Cubical boundary matrices almost always reduce with unit pivots; the
//! Bezout stage below only runs on whatever small block survives them.
//! Coefficients use i128 with checked arithmetic so silent overflow cannot
//! corrupt torsion.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnfError {
    #[error("integer overflow during Smith reduction")]
    Overflow,
}

/// Sparse integer matrix, row-major entry lists plus column occupancy.
pub struct SparseInt {
    pub nrows: usize,
    pub ncols: usize,
    rows: Vec<BTreeMap<usize, i128>>,
    cols: Vec<BTreeMap<usize, i128>>,
}

impl SparseInt {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseInt {
            nrows,
            ncols,
            rows: vec![BTreeMap::new(); nrows],
            cols: vec![BTreeMap::new(); ncols],
        }
    }

    pub fn set(&mut self, r: usize, c: usize, v: i128) {
        if v == 0 {
            self.rows[r].remove(&c);
            self.cols[c].remove(&r);
        } else {
            self.rows[r].insert(c, v);
            self.cols[c].insert(r, v);
        }
    }

    pub fn get(&self, r: usize, c: usize) -> i128 {
        *self.rows[r].get(&c).unwrap_or(&0)
    }

    fn add_row(&mut self, src: usize, dst: usize, factor: i128) -> Result<(), SnfError> {
        // dst += factor * src
        let src_row: Vec<(usize, i128)> = self.rows[src].iter().map(|(&c, &v)| (c, v)).collect();
        for (c, v) in src_row {
            let add = v.checked_mul(factor).ok_or(SnfError::Overflow)?;
            let new = self.get(dst, c).checked_add(add).ok_or(SnfError::Overflow)?;
            self.set(dst, c, new);
        }
        Ok(())
    }

    fn add_col(&mut self, src: usize, dst: usize, factor: i128) -> Result<(), SnfError> {
        let src_col: Vec<(usize, i128)> = self.cols[src].iter().map(|(&r, &v)| (r, v)).collect();
        for (r, v) in src_col {
            let add = v.checked_mul(factor).ok_or(SnfError::Overflow)?;
            let new = self.get(r, dst).checked_add(add).ok_or(SnfError::Overflow)?;
            self.set(r, dst, new);
        }
        Ok(())
    }
}

/// Diagonal of the Smith normal form: `rank` and the invariant factors
/// (positive, in divisibility order; entries > 1 are the torsion part).
pub struct SnfDiagonal {
    pub rank: usize,
    pub factors: Vec<i128>,
}

impl SnfDiagonal {
    pub fn torsion(&self) -> Vec<i128> {
        self.factors.iter().copied().filter(|&d| d > 1).collect()
    }
}

/// Reduce a sparse matrix to Smith diagonal form in place.
pub fn smith_diagonal(mut a: SparseInt) -> Result<SnfDiagonal, SnfError> {
    let mut factors: Vec<i128> = Vec::new();
    let mut live_rows: Vec<bool> = vec![true; a.nrows];
    let mut live_cols: Vec<bool> = vec![true; a.ncols];

    loop {
        // Pivot with the smallest |value|, min fill-in on ties; deterministic.
        let mut pivot: Option<(usize, usize, i128, usize)> = None;
        for r in 0..a.nrows {
            if !live_rows[r] {
                continue;
            }
            for (&c, &v) in a.rows[r].iter() {
                if !live_cols[c] {
                    continue;
                }
                let fill = a.rows[r].len() * a.cols[c].len();
                let cand = (v.abs(), fill);
                let better = match pivot {
                    None => true,
                    Some((_, _, pv, pf)) => cand < (pv.abs(), pf),
                };
                if better {
                    pivot = Some((r, c, v, fill));
                }
            }
            if matches!(pivot, Some((_, _, v, f)) if v.abs() == 1 && f <= 4) {
                break;
            }
        }
        let Some((pr, pc, _, _)) = pivot else {
            break;
        };

        // Clear the pivot row and column by Euclidean steps until the pivot
        // divides everything it meets.
        loop {
            let pv = a.get(pr, pc);
            debug_assert!(pv != 0);
            let col_other = a.cols[pc]
                .iter()
                .find(|(&r, _)| r != pr && live_rows[r])
                .map(|(&r, &v)| (r, v));
            if let Some((r, v)) = col_other {
                let q = v.div_euclid(pv);
                a.add_row(pr, r, -q)?;
                if a.get(r, pc) != 0 {
                    // Remainder became the new, smaller pivot.
                    a.add_row(r, pr, 1)?;
                    a.add_row(pr, r, -1)?;
                }
                continue;
            }
            let row_other = a.rows[pr]
                .iter()
                .find(|(&c, _)| c != pc && live_cols[c])
                .map(|(&c, &v)| (c, v));
            if let Some((c, v)) = row_other {
                let q = v.div_euclid(pv);
                a.add_col(pc, c, -q)?;
                if a.get(pr, c) != 0 {
                    a.add_col(c, pc, 1)?;
                    a.add_col(pc, c, -1)?;
                }
                continue;
            }
            break;
        }

        factors.push(a.get(pr, pc).abs());
        live_rows[pr] = false;
        live_cols[pc] = false;
    }

    // Invariant-factor form: pairwise gcd/lcm fix-up of the non-unit tail.
    factors.sort_unstable();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..factors.len().saturating_sub(1) {
            let (a1, b1) = (factors[i], factors[i + 1]);
            if b1 % a1 != 0 {
                let g = gcd(a1, b1);
                factors[i] = g;
                factors[i + 1] = a1 / g * b1;
                changed = true;
            }
        }
        factors.sort_unstable();
    }

    Ok(SnfDiagonal {
        rank: factors.len(),
        factors,
    })
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_dense(rows: &[&[i128]]) -> SparseInt {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = SparseInt::new(nrows, ncols);
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        m
    }

    #[test]
    fn identity_has_unit_factors() {
        let m = from_dense(&[&[1, 0], &[0, 1]]);
        let d = smith_diagonal(m).unwrap();
        assert_eq!(d.rank, 2);
        assert!(d.torsion().is_empty());
    }

    #[test]
    fn detects_torsion() {
        // diag(2, 6) ~ invariant factors (2, 6); a classic Z/2 + Z/6 block.
        let m = from_dense(&[&[2, 0], &[0, 6]]);
        let d = smith_diagonal(m).unwrap();
        assert_eq!(d.factors, vec![2, 6]);
        // Off-diagonal mixing must still find factors (1, 12)? No:
        // [[2,4],[4,2]] has det -12, gcd 2 => factors (2, 6).
        let m = from_dense(&[&[2, 4], &[4, 2]]);
        let d = smith_diagonal(m).unwrap();
        assert_eq!(d.factors, vec![2, 6]);
    }

    #[test]
    fn rank_of_rectangular() {
        let m = from_dense(&[&[1, 2, 3], &[2, 4, 6]]);
        let d = smith_diagonal(m).unwrap();
        assert_eq!(d.rank, 1);
    }

    #[test]
    fn klein_bottle_style_matrix() {
        // Column space relation x + x = 0 -> torsion 2.
        let m = from_dense(&[&[1, 1], &[1, -1]]);
        let d = smith_diagonal(m).unwrap();
        assert_eq!(d.factors, vec![1, 2]);
    }
}
