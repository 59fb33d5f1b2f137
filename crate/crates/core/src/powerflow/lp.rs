//! Dense bounded-variable primal simplex.
//!
//! Two phases, Bland's rule for both the entering and the leaving choice, so
//! the pivot sequence is deterministic and cycling cannot occur. Sized for the
//! island-level dispatch problems in this crate (tens of variables, ~100 rows).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LpTolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub pivot: f64,
    pub max_iterations: usize,
}

impl Default for LpTolerances {
    fn default() -> Self {
        LpTolerances { feasibility: 1e-7, optimality: 1e-7, pivot: 1e-9, max_iterations: 100_000 }
    }
}

/// `minimize cost·x` subject to dense rows and `lower <= x <= upper`.
/// Every lower bound must be finite; upper bounds may be infinite.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram { cost: vec![0.0; n], lower: vec![0.0; n], upper: vec![f64::INFINITY; n], rows: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.cost[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(lower.is_finite(), "lower bounds must be finite");
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.n_vars());
        self.rows.push((coeffs, rel, rhs));
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.solve_with(&LpTolerances::default())
    }

    pub fn solve_with(&self, tol: &LpTolerances) -> Result<LpOutcome> {
        let n = self.n_vars();
        for j in 0..n {
            if self.upper[j] < self.lower[j] - tol.feasibility {
                return Ok(LpOutcome::Infeasible);
            }
        }
        let m = self.rows.len();
        let n_slack = self.rows.iter().filter(|r| r.1 != Relation::Eq).count();

        // shifted rows: a·y (rel) b - a·l, with Ge turned into Le
        let mut a_rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut has_slack = Vec::with_capacity(m);
        for (coeffs, rel, b) in &self.rows {
            let shift: f64 = coeffs.iter().zip(&self.lower).map(|(a, l)| a * l).sum();
            let (sign, slack) = match rel {
                Relation::Le => (1.0, true),
                Relation::Ge => (-1.0, true),
                Relation::Eq => (1.0, false),
            };
            a_rows.push(coeffs.iter().map(|a| sign * a).collect::<Vec<f64>>());
            rhs.push(sign * (b - shift));
            has_slack.push(slack);
        }

        // column layout: structurals, slacks, artificials
        let mut n_art = 0;
        let needs_art: Vec<bool> = (0..m).map(|i| !(has_slack[i] && rhs[i] >= 0.0)).collect();
        for &na in &needs_art {
            if na {
                n_art += 1;
            }
        }
        let n_cols = n + n_slack + n_art;
        let mut upper = vec![f64::INFINITY; n_cols];
        for j in 0..n {
            upper[j] = (self.upper[j] - self.lower[j]).max(0.0);
        }
        let mut t = vec![vec![0.0; n_cols]; m];
        let mut basis = vec![0usize; m];
        let mut value = vec![0.0; n_cols];
        let mut slack_col = n;
        let mut art_col = n + n_slack;
        for i in 0..m {
            let flip = if needs_art[i] && rhs[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[i][j] = flip * a_rows[i][j];
            }
            if has_slack[i] {
                t[i][slack_col] = flip;
                if !needs_art[i] {
                    basis[i] = slack_col;
                    value[slack_col] = rhs[i];
                }
                slack_col += 1;
            }
            if needs_art[i] {
                t[i][art_col] = 1.0;
                basis[i] = art_col;
                value[art_col] = flip * rhs[i];
                art_col += 1;
            }
        }

        let mut tab = Tableau { t, basis, value, upper, at_upper: vec![false; n_cols], n_cols };

        if n_art > 0 {
            let mut c1 = vec![0.0; n_cols];
            for c in c1.iter_mut().skip(n + n_slack) {
                *c = 1.0;
            }
            match tab.optimize(&c1, tol, n_cols)? {
                Phase::Optimal => {}
                Phase::Unbounded => return Err(Error::Lp("phase one reported unbounded".into())),
            }
            let infeasibility: f64 = (n + n_slack..n_cols).map(|j| tab.value[j]).sum();
            let scale = 1.0 + rhs.iter().map(|r| r.abs()).fold(0.0, f64::max);
            if infeasibility > tol.feasibility * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // pin artificials at zero for phase two
            for j in n + n_slack..n_cols {
                tab.upper[j] = 0.0;
                tab.value[j] = 0.0;
            }
            tab.drive_out_artificials(n + n_slack, tol);
        }

        let mut c2 = vec![0.0; n_cols];
        c2[..n].copy_from_slice(&self.cost);
        match tab.optimize(&c2, tol, n + n_slack)? {
            Phase::Optimal => {}
            Phase::Unbounded => return Ok(LpOutcome::Unbounded),
        }
        let x: Vec<f64> = (0..n)
            .map(|j| (self.lower[j] + tab.value[j]).clamp(self.lower[j], self.upper[j]))
            .collect();
        let objective = x.iter().zip(&self.cost).map(|(x, c)| x * c).sum();
        Ok(LpOutcome::Optimal { x, objective })
    }
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    /// B^-1 A, one row per constraint.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Current value of every column variable (shifted space, lower bound 0).
    value: Vec<f64>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    n_cols: usize,
}

impl Tableau {
    /// Runs primal simplex iterations for cost vector `c`. Only columns
    /// below `eligible` may enter the basis.
    fn optimize(&mut self, c: &[f64], tol: &LpTolerances, eligible: usize) -> Result<Phase> {
        let m = self.t.len();
        let mut is_basic = vec![false; self.n_cols];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        // reduced costs d_j = c_j - c_B^T t_j
        let mut d = c.to_vec();
        for i in 0..m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(&self.t[i]) {
                    *dj -= cb * tij;
                }
            }
        }

        for _ in 0..tol.max_iterations {
            // Bland: lowest-index improving column
            let entering = (0..eligible).find(|&j| {
                !is_basic[j]
                    && self.upper[j] > 0.0
                    && ((!self.at_upper[j] && d[j] < -tol.optimality) || (self.at_upper[j] && d[j] > tol.optimality))
            });
            let Some(j) = entering else {
                return Ok(Phase::Optimal);
            };
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            // ratio test; ties broken by the smallest basic column index
            let flip = self.upper[j];
            let mut best: Option<(f64, usize, usize, bool)> = None; // (limit, column, row, to_upper)
            for i in 0..m {
                let rate = -dir * self.t[i][j]; // d(x_Bi)/d(theta)
                let b = self.basis[i];
                let (limit, to_upper) = if rate < -tol.pivot {
                    (self.value[b].max(0.0) / -rate, false)
                } else if rate > tol.pivot && self.upper[b].is_finite() {
                    ((self.upper[b] - self.value[b]).max(0.0) / rate, true)
                } else {
                    continue;
                };
                let replace = match best {
                    None => true,
                    Some((bl, bc, _, _)) => limit < bl - 1e-12 || (limit <= bl + 1e-12 && b < bc),
                };
                if replace {
                    best = Some((limit, b, i, to_upper));
                }
            }
            let (theta, leave) = match best {
                Some((limit, _, row, to_upper)) if limit < flip - 1e-12 => (limit, Some((row, to_upper))),
                _ => (flip, None),
            };
            if theta.is_infinite() {
                return Ok(Phase::Unbounded);
            }

            // move along the edge
            self.value[j] += dir * theta;
            for i in 0..m {
                let b = self.basis[i];
                self.value[b] -= dir * theta * self.t[i][j];
            }

            match leave {
                None => {
                    // bound flip
                    self.at_upper[j] = !self.at_upper[j];
                    self.value[j] = if self.at_upper[j] { self.upper[j] } else { 0.0 };
                }
                Some((r, to_upper)) => {
                    let old = self.basis[r];
                    self.value[old] = if to_upper { self.upper[old] } else { 0.0 };
                    self.at_upper[old] = to_upper;
                    is_basic[old] = false;
                    self.pivot(r, j);
                    is_basic[j] = true;
                    self.at_upper[j] = false;
                    let dj = d[j];
                    if dj != 0.0 {
                        for (dk, tk) in d.iter_mut().zip(&self.t[r]) {
                            *dk -= dj * tk;
                        }
                    }
                }
            }
        }
        Err(Error::Lp("iteration limit reached".into()))
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
        self.basis[r] = j;
    }

    /// Replaces basic artificials (all at zero after phase one) with
    /// structural or slack columns wherever a usable pivot exists.
    fn drive_out_artificials(&mut self, first_art: usize, tol: &LpTolerances) {
        let m = self.t.len();
        for r in 0..m {
            if self.basis[r] < first_art {
                continue;
            }
            let mut is_basic = vec![false; self.n_cols];
            for &b in &self.basis {
                is_basic[b] = true;
            }
            if let Some(j) = (0..first_art).find(|&j| !is_basic[j] && self.t[r][j].abs() > 1e3 * tol.pivot) {
                // degenerate pivot: the artificial is at zero so values are unchanged
                self.pivot(r, j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -3.0);
        lp.set_cost(1, -5.0);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Relation::Le, 18.0);
        let (x, obj) = optimum(&lp);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((obj + 36.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_bounds() {
        // min x + 2y st x + y = 10, 0 <= x <= 4, y >= 1
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.set_cost(1, 2.0);
        lp.set_bounds(0, 0.0, 4.0);
        lp.set_bounds(1, 1.0, f64::INFINITY);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 10.0);
        let (x, obj) = optimum(&lp);
        assert!((x[0] - 4.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((obj - 16.0).abs() < 1e-9);
    }

    #[test]
    fn ge_rows_and_negative_rhs() {
        // min x + y st x + 2y >= 4, 3x + y >= 6, x - y <= -1
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.set_cost(1, 1.0);
        lp.add_row(vec![1.0, 2.0], Relation::Ge, 4.0);
        lp.add_row(vec![3.0, 1.0], Relation::Ge, 6.0);
        lp.add_row(vec![1.0, -1.0], Relation::Le, -1.0);
        let (x, obj) = optimum(&lp);
        assert!(x[0] - x[1] <= -1.0 + 1e-9);
        assert!(x[0] + 2.0 * x[1] >= 4.0 - 1e-9);
        assert!(3.0 * x[0] + x[1] >= 6.0 - 1e-9);
        // vertex (1.25, 2.25)
        assert!((obj - 3.5).abs() < 1e-9, "obj {obj}");
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 0.0, 1.0);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.add_row(vec![2.0, 2.0], Relation::Eq, 4.0);
        let (x, obj) = optimum(&lp);
        assert!((x[1] - 2.0).abs() < 1e-9);
        assert!(obj.abs() < 1e-9);
    }
}
