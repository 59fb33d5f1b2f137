//! Monte Carlo estimates of the pairwise conditional transition matrices.

use crate::cascade::CascadeSample;
use crate::matrix::Matrix;

/// Default for a "stays healthy given j healthy" entry with no observations.
pub const DEFAULT_P11: f64 = 1.0;
/// Default for a "stays healthy given j failed" entry with no observations.
pub const DEFAULT_P01: f64 = 0.5;

/// Link-on-link transition estimates `(A11, A01)`, both `N_br x N_br` and
/// indexed `[j][i]`: the probability that link `i` is healthy at `t + 1`
/// given link `j` healthy (resp. failed) at `t`.
///
/// For each sample only the steps up to the failure time of `i` count
/// (`t + 1 <= tau_i`), since a failed link stays failed.
pub fn estimate_a(samples: &[&CascadeSample]) -> (Matrix, Matrix) {
    let n = samples.first().map_or(0, |s| s.n_branches());
    let mut c1 = Matrix::zeros(n, n);
    let mut c11 = Matrix::zeros(n, n);
    let mut c0 = Matrix::zeros(n, n);
    let mut c01 = Matrix::zeros(n, n);
    for sample in samples {
        let states = &sample.states;
        let steps = states.len();
        // alive_before[j][m]: number of t in 1..=m with s_j[t] = 1
        let mut alive_before = vec![vec![0usize; steps + 1]; n];
        for (j, counts) in alive_before.iter_mut().enumerate() {
            for t in 0..steps {
                counts[t + 1] = counts[t] + states[t][j] as usize;
            }
        }
        for i in 0..n {
            let tau = sample.tau(i);
            if tau < 2 {
                continue;
            }
            let pairs = tau - 1;
            // s_i[t + 1] = 1 for every counted t except possibly the last one
            let last_ok = states[tau - 1][i];
            for j in 0..n {
                let ones = alive_before[j][pairs];
                let zeros = pairs - ones;
                let ones_early = alive_before[j][pairs - 1];
                let zeros_early = (pairs - 1) - ones_early;
                let j_last = states[pairs - 1][j];
                c1[(j, i)] += ones as f64;
                c0[(j, i)] += zeros as f64;
                c11[(j, i)] += (ones_early + (last_ok && j_last) as usize) as f64;
                c01[(j, i)] += (zeros_early + (last_ok && !j_last) as usize) as f64;
            }
        }
    }
    (ratio(&c11, &c1, DEFAULT_P11), ratio(&c01, &c0, DEFAULT_P01))
}

/// Link-on-bus service estimates `(B11, B01)`, both `N_br x N` and indexed
/// `[j][i]`: the probability that bus `i` is served in full at step `t`
/// given link `j` healthy (resp. failed) at `t`, over every step of every
/// sample.
pub fn estimate_b(samples: &[&CascadeSample]) -> (Matrix, Matrix) {
    let n_br = samples.first().map_or(0, |s| s.n_branches());
    let n_bus = samples.first().map_or(0, |s| s.n_buses());
    let mut f1 = vec![0usize; n_br];
    let mut f0 = vec![0usize; n_br];
    let mut f11 = Matrix::zeros(n_br, n_bus);
    let mut f01 = Matrix::zeros(n_br, n_bus);
    for sample in samples {
        for (s, l) in sample.states.iter().zip(&sample.load_served) {
            for j in 0..n_br {
                let (count, table) = if s[j] { (&mut f1[j], &mut f11) } else { (&mut f0[j], &mut f01) };
                *count += 1;
                for (i, &served) in l.iter().enumerate() {
                    if served {
                        table[(j, i)] += 1.0;
                    }
                }
            }
        }
    }
    let spread = |f: &[usize]| {
        let mut m = Matrix::zeros(n_br, n_bus);
        for j in 0..n_br {
            m.row_mut(j).fill(f[j] as f64);
        }
        m
    };
    (ratio(&f11, &spread(&f1), DEFAULT_P11), ratio(&f01, &spread(&f0), DEFAULT_P01))
}

fn ratio(num: &Matrix, den: &Matrix, default: f64) -> Matrix {
    let mut out = Matrix::filled(num.rows(), num.cols(), default);
    for r in 0..num.rows() {
        for c in 0..num.cols() {
            if den[(r, c)] > 0.0 {
                out[(r, c)] = num[(r, c)] / den[(r, c)];
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cascade::Policy;

    pub(crate) fn sample_from(states: &[&str], served: &[&str]) -> CascadeSample {
        let bits = |s: &&str| s.chars().map(|c| c == '1').collect::<Vec<bool>>();
        let states: Vec<Vec<bool>> = states.iter().map(bits).collect();
        let dead: Vec<usize> = (0..states[0].len()).filter(|&i| !states[0][i]).collect();
        let load_served: Vec<Vec<bool>> = served.iter().map(bits).collect();
        let shed_mw = load_served.iter().map(|l| l.iter().map(|&x| if x { 0.0 } else { 1.0 }).collect()).collect();
        CascadeSample {
            sample_id: 0,
            loading_c: 1.0,
            initial_failures: [dead[0], *dead.get(1).unwrap_or(&dead[0])],
            termination_time: states.len(),
            states,
            load_served,
            shed_mw,
            policy: Policy::None,
            seed: 0,
        }
    }

    #[test]
    fn never_failing_pair() {
        // links: 0 initial, 1 = j, 2 = i
        let s = sample_from(&["011", "011", "011"], &["1", "1", "1"]);
        let (a11, _) = estimate_a(&[&s]);
        assert_eq!(a11[(1, 2)], 1.0);
    }

    #[test]
    fn immediate_conditional_failure() {
        // j = 0 dead from t = 1; i = 2 fails at t = 2
        let s = sample_from(&["001", "000"], &["1", "1"]);
        let (_, a01) = estimate_a(&[&s]);
        assert_eq!(a01[(0, 2)], 0.0);
    }

    #[test]
    fn unobserved_entries_default() {
        let s = sample_from(&["011"], &["0"]);
        let (a11, a01) = estimate_a(&[&s]);
        assert_eq!(a11[(1, 2)], DEFAULT_P11);
        assert_eq!(a01[(0, 2)], DEFAULT_P01);
        let (b11, b01) = estimate_b(&[&s]);
        assert_eq!(b11[(1, 0)], 0.0);
        assert_eq!(b01[(1, 0)], DEFAULT_P01);
    }

    #[test]
    fn b_counts_every_step() {
        let s = sample_from(&["0011", "0001"], &["10", "00"]);
        let (b11, b01) = estimate_b(&[&s]);
        // link 2 alive at t = 1 only: bus 0 served then
        assert_eq!(b11[(2, 0)], 1.0);
        assert_eq!(b01[(2, 0)], 0.0);
        assert_eq!(b11[(3, 0)], 0.5);
        assert_eq!(b11[(3, 1)], 0.0);
    }
}
