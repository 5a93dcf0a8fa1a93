//! Dense revised simplex for `min c'x, Ax = b, x >= 0` started from a given
//! feasible basis.

use thiserror::Error;

pub const FEAS_TOL: f64 = 1e-7;
pub const OPT_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("LP is unbounded")]
    Unbounded,
    #[error("basis matrix is singular")]
    Singular,
    #[error("starting basis is not primal feasible")]
    InfeasibleStart,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis has {got} columns, expected {expected}")]
    BasisSize { got: usize, expected: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseColumn {
    pub cost: f64,
    pub entries: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    pub rhs: Vec<f64>,
    pub columns: Vec<SparseColumn>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Row duals `y = c_B' B^-1`.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub basis: Vec<usize>,
    pub iterations: usize,
}

impl LpProblem {
    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn reduced_cost(&self, j: usize, duals: &[f64]) -> f64 {
        let c = &self.columns[j];
        c.cost - c.entries.iter().map(|&(r, a)| duals[r] * a).sum::<f64>()
    }
}

/// Row-major dense inverse of the basis.
struct Inverse {
    m: usize,
    a: Vec<f64>,
}

impl Inverse {
    fn factor(p: &LpProblem, basis: &[usize]) -> Result<Self, LpError> {
        let m = p.n_rows();
        // augmented [B | I], Gauss-Jordan with partial pivoting
        let w = 2 * m;
        let mut t = vec![0.0; m * w];
        for (col, &j) in basis.iter().enumerate() {
            for &(r, v) in &p.columns[j].entries {
                t[r * w + col] += v;
            }
        }
        for i in 0..m {
            t[i * w + m + i] = 1.0;
        }
        for col in 0..m {
            let piv =
                (col..m).max_by(|&a, &b| t[a * w + col].abs().total_cmp(&t[b * w + col].abs())).expect("non-empty");
            if t[piv * w + col].abs() < PIVOT_TOL {
                return Err(LpError::Singular);
            }
            if piv != col {
                for k in 0..w {
                    t.swap(piv * w + k, col * w + k);
                }
            }
            let d = t[col * w + col];
            for k in 0..w {
                t[col * w + k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = t[r * w + col];
                    if f != 0.0 {
                        for k in 0..w {
                            t[r * w + k] -= f * t[col * w + k];
                        }
                    }
                }
            }
        }
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            a[i * m..(i + 1) * m].copy_from_slice(&t[i * w + m..(i + 1) * w]);
        }
        Ok(Self { m, a })
    }

    fn times_dense(&self, v: &[f64]) -> Vec<f64> {
        (0..self.m).map(|i| self.a[i * self.m..(i + 1) * self.m].iter().zip(v).map(|(x, y)| x * y).sum()).collect()
    }

    fn times_sparse(&self, col: &SparseColumn) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for &(r, v) in &col.entries {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.a[i * m + r] * v;
            }
        }
        out
    }

    fn left_times(&self, c: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &ci) in c.iter().enumerate() {
            if ci != 0.0 {
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj += ci * self.a[i * m + j];
                }
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, w: &[f64]) {
        let m = self.m;
        let piv = w[r];
        for k in 0..m {
            self.a[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && w[i] != 0.0 {
                let f = w[i];
                for k in 0..m {
                    self.a[i * m + k] -= f * self.a[r * m + k];
                }
            }
        }
    }
}

/// Solves from `basis`, which must be nonsingular and primal feasible.
pub fn solve(p: &LpProblem, basis: &[usize], max_iterations: usize) -> Result<LpSolution, LpError> {
    let m = p.n_rows();
    if basis.len() != m {
        return Err(LpError::BasisSize { got: basis.len(), expected: m });
    }
    let n = p.columns.len();
    let mut basis = basis.to_vec();
    let mut inv = Inverse::factor(p, &basis)?;
    let mut xb = inv.times_dense(&p.rhs);
    if xb.iter().any(|&v| v < -FEAS_TOL) {
        return Err(LpError::InfeasibleStart);
    }
    let mut is_basic = vec![false; n];
    for &j in &basis {
        is_basic[j] = true;
    }
    let mut since_refactor = 0;
    let mut degenerate = 0;
    let mut iterations = 0;
    loop {
        if since_refactor >= REFACTOR_EVERY {
            inv = Inverse::factor(p, &basis)?;
            xb = inv.times_dense(&p.rhs);
            since_refactor = 0;
        }
        let cb: Vec<f64> = basis.iter().map(|&j| p.columns[j].cost).collect();
        let y = inv.left_times(&cb);
        let bland = degenerate >= DEGENERATE_LIMIT;
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..n {
            if is_basic[j] {
                continue;
            }
            let d = p.reduced_cost(j, &y);
            if d < -OPT_TOL * (1.0 + p.columns[j].cost.abs().min(1.0)) {
                match entering {
                    None => entering = Some((j, d)),
                    Some((_, best)) if !bland && d < best => entering = Some((j, d)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
        }
        let Some((j, _)) = entering else {
            let mut x = vec![0.0; n];
            for (i, &b) in basis.iter().enumerate() {
                x[b] = xb[i].max(0.0);
            }
            let objective = x.iter().zip(&p.columns).map(|(v, c)| v * c.cost).sum();
            return Ok(LpSolution { x, duals: y, objective, basis, iterations });
        };
        if iterations >= max_iterations {
            return Err(LpError::IterationLimit(max_iterations));
        }
        let w = inv.times_sparse(&p.columns[j]);
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if w[i] > PIVOT_TOL {
                let ratio = xb[i].max(0.0) / w[i];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        let better = if bland {
                            ratio < best && !tie || tie && basis[i] < basis[r]
                        } else {
                            ratio < best && !tie || tie && w[i] > w[r]
                        };
                        if better {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((r, theta)) = leave else { return Err(LpError::Unbounded) };
        if theta <= 1e-12 {
            degenerate += 1;
        } else {
            degenerate = 0;
        }
        for i in 0..m {
            if i != r {
                xb[i] -= theta * w[i];
            }
        }
        xb[r] = theta;
        inv.pivot(r, &w);
        is_basic[basis[r]] = false;
        is_basic[j] = true;
        basis[r] = j;
        since_refactor += 1;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn col(cost: f64, entries: &[(usize, f64)]) -> SparseColumn {
        SparseColumn { cost, entries: entries.to_vec() }
    }

    #[test]
    fn two_by_two_by_hand() {
        // min -x1 - 2x2  s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6
        // optimum x1 = 3, x2 = 1, objective -5, duals (-0.5, -0.5)
        let p = LpProblem {
            rhs: vec![4.0, 6.0],
            columns: vec![
                col(0.0, &[(0, 1.0)]),
                col(0.0, &[(1, 1.0)]),
                col(-1.0, &[(0, 1.0), (1, 1.0)]),
                col(-2.0, &[(0, 1.0), (1, 3.0)]),
            ],
        };
        let s = solve(&p, &[0, 1], 100).unwrap();
        assert_abs_diff_eq!(s.objective, -5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[2], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[3], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.duals[0], -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.duals[1], -0.5, epsilon = 1e-9);
        for j in 0..4 {
            assert!(p.reduced_cost(j, &s.duals) >= -1e-9);
        }
    }

    #[test]
    fn unbounded_detected() {
        let p = LpProblem { rhs: vec![1.0], columns: vec![col(0.0, &[(0, 1.0)]), col(-1.0, &[(0, -1.0)])] };
        assert_eq!(solve(&p, &[0], 10), Err(LpError::Unbounded));
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = LpProblem { rhs: vec![-1.0], columns: vec![col(0.0, &[(0, 1.0)])] };
        assert_eq!(solve(&p, &[0], 10), Err(LpError::InfeasibleStart));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // several columns tied at a degenerate vertex
        let mut columns = vec![col(0.0, &[(0, 1.0)]), col(0.0, &[(1, 1.0)]), col(0.0, &[(2, 1.0)])];
        for k in 0..20 {
            let a = 1.0 + (k % 3) as f64;
            columns.push(col(-1.0, &[(0, a), (1, 1.0), (2, 4.0 - a)]));
        }
        let p = LpProblem { rhs: vec![0.0, 0.0, 1.0], columns };
        let s = solve(&p, &[0, 1, 2], 1000).unwrap();
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn warm_start_from_optimal_basis_needs_no_pivots() {
        let p = LpProblem {
            rhs: vec![4.0, 6.0],
            columns: vec![
                col(0.0, &[(0, 1.0)]),
                col(0.0, &[(1, 1.0)]),
                col(-1.0, &[(0, 1.0), (1, 1.0)]),
                col(-2.0, &[(0, 1.0), (1, 3.0)]),
            ],
        };
        let s = solve(&p, &[0, 1], 100).unwrap();
        let again = solve(&p, &s.basis, 100).unwrap();
        assert_eq!(again.iterations, 0);
        assert_abs_diff_eq!(again.objective, s.objective, epsilon = 1e-12);
    }
}
