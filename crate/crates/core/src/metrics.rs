//! Time-discounted losses, criticality scores and prediction accuracy.

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeSample;
use crate::error::{Error, Result};
use crate::influence::{InfluenceModelD, InfluenceModelE};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    /// Per-step exponential discount rate.
    pub discount: f64,
    /// Charge the exogenous initial failures (at step 1).
    pub include_initial: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions { discount: 0.2, include_initial: true }
    }
}

/// `sum_b C(b) exp(-r t_b)` over branches that fail in `states`, with
/// `t_b` the first step at which `b` is out.
pub fn link_fail_loss_states(states: &[Vec<bool>], cost_weight: &[f64], opts: &LossOptions) -> f64 {
    let Some(first) = states.first() else { return 0.0 };
    (0..first.len())
        .filter_map(|b| states.iter().position(|s| !s[b]).map(|p| (b, p + 1)))
        .filter(|&(_, t)| opts.include_initial || t > 1)
        .map(|(b, t)| cost_weight[b] * (-opts.discount * t as f64).exp())
        .sum()
}

pub fn link_fail_loss(sample: &CascadeSample, cost_weight: &[f64], opts: &LossOptions) -> f64 {
    link_fail_loss_states(&sample.states, cost_weight, opts)
}

/// `sum_l sum_t C(l) LS_l(t) exp(-r t)` with `shed_mw[t - 1]` the shed at
/// step `t`.
pub fn load_shed_loss_mw(shed_mw: &[Vec<f64>], priority: &[f64], discount: f64) -> f64 {
    shed_mw
        .iter()
        .enumerate()
        .map(|(k, shed)| {
            let w = (-discount * (k + 1) as f64).exp();
            shed.iter().zip(priority).map(|(mw, c)| c * mw).sum::<f64>() * w
        })
        .sum()
}

pub fn load_shed_loss(sample: &CascadeSample, priority: &[f64], opts: &LossOptions) -> f64 {
    load_shed_loss_mw(&sample.shed_mw, priority, opts.discount)
}

/// `sum_{n1,n2} D[n1][n2] K(n1, n2)`.
pub fn local_influence_loss(d: &Matrix, k: &Matrix) -> Result<f64> {
    if d.rows() != k.rows() || d.cols() != k.cols() {
        return Err(Error::Dimension(format!(
            "influence matrix is {}x{}, distance matrix {}x{}",
            d.rows(),
            d.cols(),
            k.rows(),
            k.cols()
        )));
    }
    Ok(d.as_slice().iter().zip(k.as_slice()).map(|(a, b)| a * b).sum())
}

/// Per-link criticality scores; rankings list 0-based link indices, most
/// critical first (ties broken by index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub cd: Vec<f64>,
    pub ce: Vec<f64>,
    pub rank_cd: Vec<usize>,
    pub rank_ce: Vec<usize>,
}

/// `sum_i W[i][j] (P11[j][i] - P01[j][i])` for each link `j`.
fn weighted_difference(w: &Matrix, p11: &Matrix, p01: &Matrix) -> Vec<f64> {
    (0..p11.rows())
        .map(|j| (0..w.rows()).map(|i| w[(i, j)] * (p11[(j, i)] - p01[(j, i)])).sum())
        .collect()
}

fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn criticality(link: &InfluenceModelD, shed: &InfluenceModelE) -> CriticalityReport {
    let cd = weighted_difference(&link.d, &link.a11, &link.a01);
    let ce = weighted_difference(&shed.e, &shed.b11, &shed.b01);
    CriticalityReport { rank_cd: ranking(&cd), rank_ce: ranking(&ce), cd, ce }
}

fn agreement(a: &[bool], b: &[bool]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// Fraction of links whose final predicted state matches the oracle.
pub fn link_accuracy(predicted_final: &[bool], actual_final: &[bool]) -> f64 {
    agreement(predicted_final, actual_final)
}

/// `1 - |overall - overall_hat|_1 / N` over "ever shed" bus indicators.
pub fn shed_accuracy(predicted_overall: &[bool], actual_overall: &[bool]) -> f64 {
    agreement(predicted_overall, actual_overall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLoss {
    pub sample_id: usize,
    pub link_fail_loss: f64,
    pub load_shed_loss: f64,
}

/// Pool-mean losses with their per-sample breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub link_fail_loss: f64,
    pub load_shed_loss: f64,
    pub local_influence_loss: Option<f64>,
    pub per_sample: Vec<SampleLoss>,
}

impl LossReport {
    pub fn of(samples: &[&CascadeSample], cost_weight: &[f64], priority: &[f64], opts: &LossOptions) -> Self {
        let per_sample: Vec<SampleLoss> = samples
            .iter()
            .map(|s| SampleLoss {
                sample_id: s.sample_id,
                link_fail_loss: link_fail_loss(s, cost_weight, opts),
                load_shed_loss: load_shed_loss(s, priority, opts),
            })
            .collect();
        let mean = |f: fn(&SampleLoss) -> f64| {
            if per_sample.is_empty() {
                0.0
            } else {
                per_sample.iter().map(f).sum::<f64>() / per_sample.len() as f64
            }
        };
        LossReport {
            link_fail_loss: mean(|s| s.link_fail_loss),
            load_shed_loss: mean(|s| s.load_shed_loss),
            local_influence_loss: None,
            per_sample,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::ThresholdPool;

    #[test]
    fn single_failure_at_step_one() {
        let states = vec![vec![false]];
        let l = link_fail_loss_states(&states, &[1.0], &LossOptions::default());
        assert!((l - (-0.2f64).exp()).abs() < 1e-15);
        let excl = LossOptions { include_initial: false, ..Default::default() };
        assert_eq!(link_fail_loss_states(&states, &[1.0], &excl), 0.0);
        assert_eq!(link_fail_loss_states(&[vec![true, true]], &[1.0, 1.0], &LossOptions::default()), 0.0);
    }

    #[test]
    fn shed_at_step_two() {
        let shed = vec![vec![0.0], vec![10.0]];
        let l = load_shed_loss_mw(&shed, &[1.0], 0.2);
        assert!((l - 6.703200460356393).abs() < 1e-12);
    }

    #[test]
    fn local_influence_cases() {
        let k = Matrix::from_rows(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]).unwrap();
        assert_eq!(local_influence_loss(&Matrix::identity(3), &k).unwrap(), 0.0);
        let uniform = Matrix::filled(3, 3, 1.0 / 3.0);
        assert!((local_influence_loss(&uniform, &k).unwrap() - 3.0 * k.mean()).abs() < 1e-12);
        assert!(matches!(local_influence_loss(&Matrix::identity(2), &k), Err(Error::Dimension(_))));
    }

    #[test]
    fn criticality_two_links() {
        let a11 = Matrix::from_rows(vec![vec![0.9, 0.8], vec![1.0, 0.7]]).unwrap();
        let a01 = Matrix::from_rows(vec![vec![0.4, 0.2], vec![0.5, 0.6]]).unwrap();
        let d = Matrix::from_rows(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let link = InfluenceModelD::new(a11, a01, d, ThresholdPool::default(), 0.9);
        let shed = InfluenceModelE::new(
            Matrix::filled(2, 1, 1.0),
            Matrix::filled(2, 1, 1.0),
            Matrix::filled(1, 2, 0.5),
            ThresholdPool::default(),
            0.9,
        );
        let r = criticality(&link, &shed);
        // j = 0: d00 (0.9 - 0.4) + d10 (0.8 - 0.2) = 0.25
        // j = 1: d01 (1.0 - 0.5) + d11 (0.7 - 0.6) = 0.35
        assert!((r.cd[0] - 0.25).abs() < 1e-12);
        assert!((r.cd[1] - 0.35).abs() < 1e-12);
        assert_eq!(r.rank_cd, vec![1, 0]);
        assert_eq!(r.ce, vec![0.0, 0.0]);
    }

    #[test]
    fn accuracy_bounds() {
        let a = [true, false, true];
        assert_eq!(link_accuracy(&a, &a), 1.0);
        assert_eq!(link_accuracy(&a, &[false, true, false]), 0.0);
        let mut b = vec![false; 30];
        let mut c = b.clone();
        c[4] = true;
        assert!((shed_accuracy(&b, &c) - 29.0 / 30.0).abs() < 1e-15);
        b[4] = true;
        assert_eq!(shed_accuracy(&b, &c), 1.0);
    }
}
