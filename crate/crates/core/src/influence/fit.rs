//! Simplex-constrained least squares for the influence weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::CascadeSample;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once an iteration lowers the objective by less than this.
    pub tolerance: f64,
    /// ... and moves no weight by more than this.
    pub step_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tolerance: 1e-10, step_tolerance: 1e-9, max_iterations: 10_000 }
    }
}

/// Outcome of one simplex least-squares subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexFit {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-row diagnostics of a fitted weight matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Rows that hit the iteration cap; their best iterate is kept.
    pub not_converged: Vec<usize>,
}

/// `f(w) = (w'Gw - 2 b'w + c) / scale` over the probability simplex, built
/// from accumulated observations `(x, y)` with residual `y - w'x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexLeastSquares {
    gram: Matrix,
    linear: Vec<f64>,
    constant: f64,
    scale: f64,
}

impl SimplexLeastSquares {
    pub fn new(dim: usize, scale: f64) -> Self {
        SimplexLeastSquares { gram: Matrix::zeros(dim, dim), linear: vec![0.0; dim], constant: 0.0, scale }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn observe(&mut self, x: &[f64], y: f64) {
        let n = self.dim();
        for a in 0..n {
            if x[a] == 0.0 {
                continue;
            }
            let row = self.gram.row_mut(a);
            for b in 0..n {
                row[b] += x[a] * x[b];
            }
            self.linear[a] += y * x[a];
        }
        self.constant += y * y;
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let n = self.dim();
        let mut quad = 0.0;
        for a in 0..n {
            let gw: f64 = self.gram.row(a).iter().zip(w).map(|(g, x)| g * x).sum();
            quad += w[a] * gw;
        }
        let lin: f64 = self.linear.iter().zip(w).map(|(b, x)| b * x).sum();
        ((quad - 2.0 * lin + self.constant) / self.scale).max(0.0)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| {
                let gw: f64 = self.gram.row(a).iter().zip(w).map(|(g, x)| g * x).sum();
                2.0 * (gw - self.linear[a]) / self.scale
            })
            .collect()
    }

    /// Largest eigenvalue of the Hessian, by power iteration.
    fn lipschitz(&self) -> f64 {
        let n = self.dim();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..100 {
            let gv: Vec<f64> = (0..n).map(|a| self.gram.row(a).iter().zip(&v).map(|(g, x)| g * x).sum()).collect();
            let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = gv.into_iter().map(|x| x / norm).collect();
            if (next - lambda).abs() <= 1e-9 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        2.0 * lambda / self.scale
    }

    /// Projected gradient descent from `init` (projected first). Each step
    /// backtracks until the objective does not increase, so the iterates are
    /// monotone.
    pub fn solve(&self, init: &[f64], opts: &FitOptions) -> SimplexFit {
        self.solve_traced(init, opts, |_| {})
    }

    pub fn solve_traced(&self, init: &[f64], opts: &FitOptions, mut trace: impl FnMut(f64)) -> SimplexFit {
        let mut w = project_simplex(init);
        let mut f = self.objective(&w);
        trace(f);
        let lip = self.lipschitz();
        if lip == 0.0 || self.dim() <= 1 {
            return SimplexFit { weights: w, objective: f, iterations: 0, converged: true };
        }
        // a little above 1/L; backtracking covers the difference
        let mut step = 1.5 / lip;
        for iteration in 1..=opts.max_iterations {
            let g = self.gradient(&w);
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = w.iter().zip(&g).map(|(x, d)| x - step * d).collect();
                let candidate = project_simplex(&trial);
                let fc = self.objective(&candidate);
                if fc <= f {
                    accepted = Some((candidate, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((next, fn_)) = accepted else {
                return SimplexFit { weights: w, objective: f, iterations: iteration, converged: true };
            };
            let decrease = f - fn_;
            let moved = w.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            w = next;
            f = fn_;
            trace(f);
            if decrease < opts.tolerance && moved < opts.step_tolerance {
                return SimplexFit { weights: w, objective: f, iterations: iteration, converged: true };
            }
            step = (step * 1.25).min(1e3 / lip);
        }
        SimplexFit { weights: w, objective: f, iterations: opts.max_iterations, converged: false }
    }
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Healthy probability features of every link for one influenced entity.
fn features(p11: &Matrix, p01: &Matrix, entity: usize, state: &[bool], out: &mut [f64]) {
    for (j, x) in out.iter_mut().enumerate() {
        *x = if state[j] { p11[(j, entity)] } else { p01[(j, entity)] };
    }
}

/// Fits the link weight matrix. Row `i` holds the weights of every link's
/// influence on link `i` and lies on the simplex. Residuals for link `i`
/// run over the steps before it fails; each row starts from pure self
/// influence.
pub fn fit_d(samples: &[&CascadeSample], a11: &Matrix, a01: &Matrix, opts: &FitOptions) -> (Matrix, FitDiagnostics) {
    let n = a11.rows();
    let k = samples.len().max(1) as f64;
    let rows: Vec<SimplexFit> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut problem = SimplexLeastSquares::new(n, k);
            let mut x = vec![0.0; n];
            for sample in samples {
                let tau = sample.tau(i);
                for t in 1..tau {
                    features(a11, a01, i, &sample.states[t - 1], &mut x);
                    problem.observe(&x, sample.states[t][i] as u8 as f64);
                }
            }
            let mut init = vec![0.0; n];
            init[i] = 1.0;
            problem.solve(&init, opts)
        })
        .collect();
    assemble(rows)
}

/// Fits the link-to-bus weight matrix (`N x N_br`, rows on the simplex)
/// over every step of every sample, starting from uniform weights.
pub fn fit_e(samples: &[&CascadeSample], b11: &Matrix, b01: &Matrix, opts: &FitOptions) -> (Matrix, FitDiagnostics) {
    let n_br = b11.rows();
    let n_bus = b11.cols();
    let k = samples.len().max(1) as f64;
    let rows: Vec<SimplexFit> = (0..n_bus)
        .into_par_iter()
        .map(|i| {
            let mut problem = SimplexLeastSquares::new(n_br, k);
            let mut x = vec![0.0; n_br];
            for sample in samples {
                for (s, l) in sample.states.iter().zip(&sample.load_served) {
                    features(b11, b01, i, s, &mut x);
                    problem.observe(&x, l[i] as u8 as f64);
                }
            }
            problem.solve(&vec![1.0 / n_br as f64; n_br], opts)
        })
        .collect();
    assemble(rows)
}

fn assemble(rows: Vec<SimplexFit>) -> (Matrix, FitDiagnostics) {
    let cols = rows.first().map_or(0, |r| r.weights.len());
    let mut m = Matrix::zeros(rows.len(), cols);
    let mut diag = FitDiagnostics::default();
    for (r, fit) in rows.into_iter().enumerate() {
        m.row_mut(r).copy_from_slice(&fit.weights);
        if !fit.converged {
            log::warn!("weight row {r} hit the iteration cap");
            diag.not_converged.push(r);
        }
        diag.objective.push(fit.objective);
        diag.iterations.push(fit.iterations);
    }
    (m, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_basics() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_predictor_is_forced() {
        let mut p = SimplexLeastSquares::new(1, 1.0);
        p.observe(&[0.3], 1.0);
        let fit = p.solve(&[0.0], &FitOptions::default());
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn interior_unconstrained_optimum_is_recovered() {
        // y = 0.3 x0 + 0.7 x1 exactly
        let mut p = SimplexLeastSquares::new(2, 1.0);
        for &(a, b) in &[(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.2)] {
            p.observe(&[a, b], 0.3 * a + 0.7 * b);
        }
        let fit = p.solve(&[1.0, 0.0], &FitOptions::default());
        assert!((fit.weights[0] - 0.3).abs() < 1e-6);
        assert!(fit.objective < 1e-10);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn objective_never_increases(
            obs in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 4), 0.0f64..1.0), 1..30),
        ) {
            let mut p = SimplexLeastSquares::new(4, obs.len() as f64);
            for (x, y) in &obs {
                p.observe(x, *y);
            }
            let mut history = Vec::new();
            let fit = p.solve_traced(&[1.0, 0.0, 0.0, 0.0], &FitOptions::default(), |f| history.push(f));
            prop_assert!(history.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }
}
