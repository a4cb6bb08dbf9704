//! Dense simplex for `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! Condensed tableau, Dantzig pricing. Degeneracy is handled by solving with a
//! small deterministic perturbation of `b`, then repairing the basis against the
//! original `b` with dual simplex pivots.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;
const FEAS_TOL: f64 = 1e-11;
const PERTURB: f64 = 1e-7;

pub(crate) struct Problem {
    pub n_vars: usize,
    /// Sparse rows `(coefficients, rhs)`.
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
    pub objective: Vec<(usize, f64)>,
}

pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals, non-negative at optimum.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    m: usize,
    n: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    rhs_orig: Vec<f64>,
    obj: Vec<f64>,
    // Variable ids: structural 0..n, slack of row i is n + i.
    row_var: Vec<usize>,
    col_var: Vec<usize>,
    pivots: usize,
    scratch: Vec<f64>,
    nz: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let n = self.n;
        let p = self.a[r * n + c];
        let row = &mut self.scratch;
        row.copy_from_slice(&self.a[r * n..(r + 1) * n]);
        for v in row.iter_mut() {
            *v /= p;
        }
        row[c] = 1.0 / p;
        self.nz.clear();
        self.nz.extend((0..n).filter(|&j| row[j] != 0.0));
        let (rr, ro) = (self.rhs[r] / p, self.rhs_orig[r] / p);

        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * n + c];
            if f == 0.0 {
                continue;
            }
            let line = &mut self.a[i * n..(i + 1) * n];
            line[c] = 0.0;
            for &j in &self.nz {
                let v = line[j] - f * row[j];
                line[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            self.rhs[i] -= f * rr;
            self.rhs_orig[i] -= f * ro;
        }
        let f = self.obj[c];
        if f != 0.0 {
            self.obj[c] = 0.0;
            for &j in &self.nz {
                self.obj[j] -= f * row[j];
            }
        }
        self.a[r * n..(r + 1) * n].copy_from_slice(row);
        self.rhs[r] = rr;
        self.rhs_orig[r] = ro;
        std::mem::swap(&mut self.row_var[r], &mut self.col_var[c]);
        self.pivots += 1;
    }

    fn entering(&self) -> Option<usize> {
        let mut best = None;
        let mut best_v = -PRICE_TOL;
        for (j, &d) in self.obj.iter().enumerate() {
            if d < best_v {
                best_v = d;
                best = Some(j);
            }
        }
        best
    }

    fn leaving(&self, c: usize, use_orig: bool) -> Option<usize> {
        let n = self.n;
        let rhs = if use_orig { &self.rhs_orig } else { &self.rhs };
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let t = self.a[i * n + c];
            if t <= PIVOT_TOL {
                continue;
            }
            let ratio = rhs[i].max(0.0) / t;
            best = match best {
                None => Some((i, ratio, t)),
                Some((bi, br, bt)) => {
                    if ratio < br - 1e-15 || (ratio <= br + 1e-15 && t > bt) {
                        Some((i, ratio, t))
                    } else {
                        Some((bi, br, bt))
                    }
                }
            };
        }
        best.map(|b| b.0)
    }

    fn primal(&mut self, use_orig: bool, limit: usize) -> Result<()> {
        while let Some(c) = self.entering() {
            let Some(r) = self.leaving(c, use_orig) else {
                return Err(Error::Lp("objective is unbounded".into()));
            };
            self.pivot(r, c);
            if self.pivots > limit {
                return Err(Error::Lp(format!("no convergence after {limit} pivots")));
            }
        }
        Ok(())
    }

    /// Restores primal feasibility of the original right-hand side while
    /// keeping dual feasibility.
    fn dual(&mut self, limit: usize) -> Result<bool> {
        let n = self.n;
        let mut moved = false;
        loop {
            let mut r = None;
            let mut worst = -FEAS_TOL;
            for (i, &v) in self.rhs_orig.iter().enumerate() {
                if v < worst {
                    worst = v;
                    r = Some(i);
                }
            }
            let Some(r) = r else { return Ok(moved) };
            let mut c = None;
            let mut best = f64::INFINITY;
            for j in 0..n {
                let t = self.a[r * n + j];
                if t < -PIVOT_TOL {
                    let ratio = self.obj[j].max(0.0) / -t;
                    if ratio < best {
                        best = ratio;
                        c = Some(j);
                    }
                }
            }
            let Some(c) = c else {
                return Err(Error::Lp("primal infeasible during cleanup".into()));
            };
            self.pivot(r, c);
            moved = true;
            if self.pivots > limit {
                return Err(Error::Lp(format!("no convergence after {limit} pivots")));
            }
        }
    }
}

pub(crate) fn maximize(problem: &Problem) -> Result<Solution> {
    let m = problem.rows.len();
    let n = problem.n_vars;
    let mut a = vec![0.0; m * n];
    let mut rhs = Vec::with_capacity(m);
    for (i, (coefs, b)) in problem.rows.iter().enumerate() {
        if *b < 0.0 {
            return Err(Error::Lp("negative right-hand side".into()));
        }
        for &(j, v) in coefs {
            a[i * n + j] += v;
        }
        rhs.push(*b);
    }
    let mut obj = vec![0.0; n];
    for &(j, v) in &problem.objective {
        obj[j] -= v;
    }
    let rhs_orig = rhs.clone();
    let rhs = rhs
        .iter()
        .enumerate()
        .map(|(i, b)| b + PERTURB * (1.0 + ((i as u64 * 7919) % 1009) as f64 / 1009.0))
        .collect();
    let mut t = Tableau {
        m,
        n,
        a,
        rhs,
        rhs_orig,
        obj,
        row_var: (n..n + m).collect(),
        col_var: (0..n).collect(),
        pivots: 0,
        scratch: vec![0.0; n],
        nz: Vec::with_capacity(n),
    };
    let limit = 50 * (m + n) + 1000;
    t.primal(false, limit)?;
    // Alternate cleanup phases until both feasibility conditions hold on the
    // original right-hand side.
    for _ in 0..20 {
        let moved = t.dual(limit)?;
        if t.entering().is_none() && !moved {
            break;
        }
        t.primal(true, limit)?;
    }

    let mut x = vec![0.0; n];
    for (i, &v) in t.row_var.iter().enumerate() {
        if v < n {
            x[v] = t.rhs_orig[i].max(0.0);
        }
    }
    let mut duals = vec![0.0; m];
    for (j, &v) in t.col_var.iter().enumerate() {
        if v >= n {
            duals[v - n] = t.obj[j].max(0.0);
        }
    }
    let objective = problem.objective.iter().map(|&(j, c)| c * x[j]).sum();
    Ok(Solution {
        x,
        objective,
        duals,
        pivots: t.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
        let p = Problem {
            n_vars: 2,
            rows: vec![
                (vec![(0, 1.0)], 4.0),
                (vec![(1, 2.0)], 12.0),
                (vec![(0, 3.0), (1, 2.0)], 18.0),
            ],
            objective: vec![(0, 3.0), (1, 5.0)],
        };
        let s = maximize(&p).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        let dual_obj: f64 = s.duals.iter().zip(&p.rows).map(|(y, r)| y * r.1).sum();
        assert!((dual_obj - 36.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Many constraints through the origin.
        let mut rows = Vec::new();
        for k in 1..30 {
            rows.push((vec![(0, 1.0), (1, -(k as f64))], 0.0));
        }
        rows.push((vec![(0, 1.0), (1, 1.0)], 1.0));
        let p = Problem {
            n_vars: 2,
            rows,
            objective: vec![(0, 1.0)],
        };
        let s = maximize(&p).unwrap();
        assert!((s.objective - 0.5).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn unbounded_is_reported() {
        let p = Problem {
            n_vars: 2,
            rows: vec![(vec![(0, 1.0), (1, -1.0)], 1.0)],
            objective: vec![(1, 1.0)],
        };
        assert!(maximize(&p).is_err());
    }
}
