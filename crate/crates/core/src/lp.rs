//! Exact rational linear programming, sized for the fractional-cover problems
//! this crate needs (minimum weight over maximal independent sets covering
//! every vertex).
//!
//! Two-phase primal simplex with Bland's rule on `BigRational` tableaus: no
//! floating point anywhere, bounded cycling-free pivoting, deterministic
//! output.

use crate::bitset::BitSet;
use crate::error::{Error, Result};
use num::{BigRational, One, Signed, Zero};

/// min c'x subject to Ax = b, x >= 0, with b >= 0 componentwise.
struct StandardLp {
    a: Vec<Vec<BigRational>>,
    b: Vec<BigRational>,
    c: Vec<BigRational>,
}

struct Tableau {
    rows: Vec<Vec<BigRational>>, // m x (n + m artificials)
    rhs: Vec<BigRational>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(lp: &StandardLp) -> Tableau {
        let m = lp.b.len();
        let n = lp.c.len();
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = lp.a[i].clone();
            row.extend((0..m).map(|j| {
                if i == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            rows.push(row);
        }
        Tableau {
            rows,
            rhs: lp.b.clone(),
            basis: (n..n + m).collect(),
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col].clone();
        for x in self.rows[row].iter_mut() {
            *x /= &piv;
        }
        self.rhs[row] /= &piv;
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col].clone();
            if factor.is_zero() {
                continue;
            }
            for j in 0..self.rows[i].len() {
                let delta = &self.rows[row][j] * &factor;
                self.rows[i][j] -= delta;
            }
            let delta = &self.rhs[row] * &factor;
            self.rhs[i] -= delta;
        }
        self.basis[row] = col;
    }

    /// Runs simplex to optimality for the cost vector `cost` (indexed over
    /// all columns), restricting entering variables to `0..col_limit`.
    fn optimize(&mut self, cost: &[BigRational], col_limit: usize) -> Result<()> {
        loop {
            let cb: Vec<&BigRational> = self.basis.iter().map(|&j| &cost[j]).collect();
            // Bland: smallest column index with negative reduced cost
            let mut entering = None;
            'cols: for j in 0..col_limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j].clone();
                for (i, cbi) in cb.iter().enumerate() {
                    if !cbi.is_zero() {
                        reduced -= *cbi * &self.rows[i][j];
                    }
                }
                if reduced.is_negative() {
                    entering = Some(j);
                    break 'cols;
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            // ratio test, ties broken by smallest basis variable (Bland)
            let mut leave: Option<(usize, BigRational)> = None;
            for i in 0..self.rows.len() {
                if self.rows[i][col].is_positive() {
                    let ratio = &self.rhs[i] / &self.rows[i][col];
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::validation("unbounded linear program"));
            };
            self.pivot(row, col);
        }
    }

    fn objective(&self, cost: &[BigRational]) -> BigRational {
        self.basis
            .iter()
            .zip(&self.rhs)
            .map(|(&j, b)| &cost[j] * b)
            .sum()
    }
}

fn solve(lp: &StandardLp) -> Result<(BigRational, Vec<BigRational>)> {
    let m = lp.b.len();
    let n = lp.c.len();
    let mut t = Tableau::new(lp);

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![BigRational::zero(); n + m];
    for c in phase1.iter_mut().skip(n) {
        *c = BigRational::one();
    }
    t.optimize(&phase1, n + m)?;
    if !t.objective(&phase1).is_zero() {
        return Err(Error::validation("infeasible linear program"));
    }
    // Drive any degenerate artificials out of the basis.
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                t.pivot(i, col);
            }
        }
    }

    // Phase 2 over structural columns only.
    let mut phase2 = lp.c.clone();
    phase2.extend(vec![BigRational::zero(); m]);
    t.optimize(&phase2, n)?;

    let mut x = vec![BigRational::zero(); n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.rhs[i].clone();
        }
    }
    Ok((t.objective(&phase2), x))
}

/// Minimum total weight over the given vertex sets such that every one of
/// the `rows` vertices is covered with weight at least one. With the sets
/// being the maximal independent sets of a graph this is the fractional
/// chromatic number.
pub fn fractional_cover(columns: &[BitSet], rows: usize) -> Result<(BigRational, Vec<BigRational>)> {
    if rows == 0 {
        return Ok((BigRational::zero(), vec![]));
    }
    if columns.is_empty() {
        return Err(Error::validation("no covering sets supplied"));
    }
    let n_sets = columns.len();
    // Σ_I [v ∈ I] w_I - s_v = 1 per vertex v.
    let mut a = Vec::with_capacity(rows);
    for v in 0..rows {
        let mut row = Vec::with_capacity(n_sets + rows);
        for col in columns {
            row.push(if col.contains(v) {
                BigRational::one()
            } else {
                BigRational::zero()
            });
        }
        for s in 0..rows {
            row.push(if s == v {
                -BigRational::one()
            } else {
                BigRational::zero()
            });
        }
        a.push(row);
    }
    let mut c = vec![BigRational::one(); n_sets];
    c.extend(vec![BigRational::zero(); rows]);
    let lp = StandardLp {
        a,
        b: vec![BigRational::one(); rows],
        c,
    };
    let (obj, x) = solve(&lp)?;
    Ok((obj, x[..n_sets].to_vec()))
}
