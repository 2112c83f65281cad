//! Dense two-phase simplex for `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
//!
//! Pivoting follows the most negative reduced cost and falls back to
//! Bland's rule after a run of degenerate pivots, which rules out cycling.
//! The final basis is re-solved against the original data to polish the
//! primal and dual solutions.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEASIBILITY_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Dual multipliers, one per equality row; `Aᵀy ≤ c` at optimality.
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Row-major dense constraint matrix.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.t[row * w + col];
        for v in &mut self.t[row * w..(row + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        for r in 0..=self.m {
            if r == row {
                continue;
            }
            let f = self.t[r * w + col];
            if f == 0.0 {
                continue;
            }
            for (v, &pv) in self.t[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.t[r * w + col] = 0.0;
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Minimizes the objective stored in row `m` over columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let rhs = self.width - 1;
        let mut degenerate = 0;
        loop {
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::Lp(format!("no convergence after {MAX_ITERATIONS} pivots")));
            }
            let obj = self.m;
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -PIVOT_TOL;
            for c in 0..allowed {
                let rc = self.at(obj, c);
                if rc < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, rhs) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Lp("objective is unbounded below".into()));
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
    }
}

/// Solves `M z = r` by Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<f64>, mut r: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))
            .expect("non-empty");
        if m[p * n + k].abs() < 1e-14 {
            return Err(Error::Lp("singular basis matrix".into()));
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            r.swap(k, p);
        }
        for i in k + 1..n {
            let f = m[i * n + k] / m[k * n + k];
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                m[i * n + c] -= f * m[k * n + c];
            }
            r[i] -= f * r[k];
        }
    }
    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| m[k * n + c] * z[c]).sum();
        z[k] = (r[k] - s) / m[k * n + k];
    }
    Ok(z)
}

impl DenseLp {
    pub fn new(rows: usize, cols: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.len() != rows * cols || b.len() != rows || c.len() != cols {
            return Err(Error::Shape(format!(
                "LP data sizes a={}, b={}, c={} do not match {rows}x{cols}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        Ok(Self { rows, cols, a, b, c })
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let (m, n) = (self.rows, self.cols);
        let width = n + m + 1;
        let mut t = vec![0.0; (m + 1) * width];
        let mut sign = vec![1.0; m];
        for r in 0..m {
            if self.b[r] < 0.0 {
                sign[r] = -1.0;
            }
            for c in 0..n {
                t[r * width + c] = sign[r] * self.a[r * n + c];
            }
            t[r * width + n + r] = 1.0;
            t[r * width + width - 1] = sign[r] * self.b[r];
        }
        // phase-one objective: Σ artificials, expressed in non-basic columns
        for r in 0..m {
            for c in 0..n {
                t[m * width + c] -= t[r * width + c];
            }
            t[m * width + width - 1] -= t[r * width + width - 1];
        }
        let mut tab = Tableau {
            m,
            width,
            t,
            basis: (n..n + m).collect(),
            iterations: 0,
        };
        tab.optimize(n)?;
        let infeasibility = -tab.at(m, width - 1);
        let scale = self.b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if infeasibility > FEASIBILITY_TOL * scale {
            return Err(Error::Lp(format!("infeasible (phase-one residual {infeasibility:.3e})")));
        }
        // drive zero-level artificials out; rows where that fails are redundant
        let mut redundant = vec![false; m];
        for r in 0..m {
            if tab.basis[r] >= n {
                match (0..n).find(|&c| tab.at(r, c).abs() > 1e-9) {
                    Some(c) => tab.pivot(r, c),
                    None => {
                        redundant[r] = true;
                        for c in 0..n {
                            tab.t[r * width + c] = 0.0;
                        }
                    }
                }
            }
        }
        // phase two
        for c in 0..width {
            tab.t[m * width + c] = 0.0;
        }
        for c in 0..n {
            tab.t[m * width + c] = self.c[c];
        }
        for r in 0..m {
            let bc = tab.basis[r];
            if bc < n && !redundant[r] {
                let f = self.c[bc];
                if f != 0.0 {
                    for c in 0..width {
                        tab.t[m * width + c] -= f * tab.t[r * width + c];
                    }
                }
            }
        }
        tab.optimize(n)?;

        // polish against the original rows
        let rows: Vec<usize> = (0..m).filter(|&r| !redundant[r]).collect();
        let cols: Vec<usize> = rows.iter().map(|&r| tab.basis[r]).collect();
        let k = rows.len();
        let mut bmat = vec![0.0; k * k];
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                bmat[i * k + j] = self.a[r * n + c];
            }
        }
        let rhs: Vec<f64> = rows.iter().map(|&r| self.b[r]).collect();
        let xb = solve_dense(bmat.clone(), rhs, k)?;
        let mut bt = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                bt[i * k + j] = bmat[j * k + i];
            }
        }
        let cb: Vec<f64> = cols.iter().map(|&c| self.c[c]).collect();
        let yr = solve_dense(bt, cb, k)?;
        let mut x = vec![0.0; n];
        for (j, &c) in cols.iter().enumerate() {
            x[c] = xb[j].max(0.0);
        }
        let mut y = vec![0.0; m];
        for (i, &r) in rows.iter().enumerate() {
            y[r] = yr[i];
        }
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            y,
            objective,
            iterations: tab.iterations,
        })
    }

    /// `max_j (Aᵀy − c)_j`; nonpositive when `y` is dual feasible.
    pub fn dual_violation(&self, y: &[f64]) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.a[i * self.cols + j] * y[i]).sum::<f64>() - self.c[j])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_i |(Ax − b)_i|`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| ((0..self.cols).map(|j| self.a[i * self.cols + j] * x[j]).sum::<f64>() - self.b[i]).abs())
            .fold(0.0, f64::max)
    }
}
