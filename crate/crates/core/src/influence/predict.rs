//! Flow-free rollouts of the trained influence models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{InfluenceModelD, InfluenceModelE, ThresholdSelection};
use crate::cascade::bit_rows;
use crate::error::{Error, Result};

/// Predicted link cascade. `states[0]` is the given initial state and
/// `probs[t]` the healthy probabilities that `states[t]` was cut from
/// (`probs[0]` is the initial state itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedCascade {
    #[serde(with = "bit_rows")]
    pub states: Vec<Vec<bool>>,
    pub probs: Vec<Vec<f64>>,
    pub termination_time: usize,
    pub selection: ThresholdSelection,
}

impl PredictedCascade {
    pub fn final_state(&self) -> &[bool] {
        &self.states[self.states.len() - 1]
    }
}

/// Which branch states drive the load-shed prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Predicted cascade states, as available to an operator.
    Advisory,
    /// Observed states from the oracle, keeping both models' errors apart.
    Eval,
}

impl PredictionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionMode::Advisory => "advisory",
            PredictionMode::Eval => "eval",
        }
    }
}

impl fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "advisory" => Ok(PredictionMode::Advisory),
            "eval" => Ok(PredictionMode::Eval),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedLoadShed {
    #[serde(with = "bit_rows")]
    pub served: Vec<Vec<bool>>,
    pub probs: Vec<Vec<f64>>,
    pub mode: PredictionMode,
    pub selection: ThresholdSelection,
}

impl PredictedLoadShed {
    /// Per bus: whether load is predicted to be shed at any step.
    pub fn ever_shed(&self) -> Vec<bool> {
        let n = self.served.first().map_or(0, Vec::len);
        (0..n).map(|i| self.served.iter().any(|l| !l[i])).collect()
    }
}

/// Rolls the link model forward from `initial_state`, feeding each binary
/// prediction back in. Dead links stay dead; the rollout stops at the first
/// repeated state or after `N_br` steps.
pub fn predict_cascade(model: &InfluenceModelD, initial_state: &[bool], loading_c: f64) -> Result<PredictedCascade> {
    let n = model.n_branches();
    if initial_state.len() != n {
        return Err(Error::Dimension(format!("initial state has {} links, model has {n}", initial_state.len())));
    }
    let selection = model.threshold_pool.select(loading_c, initial_state)?;
    let eps = &selection.thresholds;
    let mut states = vec![initial_state.to_vec()];
    let mut probs = vec![initial_state.iter().map(|&a| a as u8 as f64).collect::<Vec<_>>()];
    for _ in 0..n {
        let current = &states[states.len() - 1];
        if current.iter().all(|&a| !a) {
            break;
        }
        let p = model.step(current);
        let next: Vec<bool> = (0..n).map(|i| current[i] && p[i] >= eps[i]).collect();
        if &next == current {
            break;
        }
        states.push(next);
        probs.push(p);
    }
    Ok(PredictedCascade { termination_time: states.len(), states, probs, selection })
}

/// Full-service prediction for every bus along a branch state sequence.
pub fn predict_load_shed(
    model: &InfluenceModelE,
    states: &[Vec<bool>],
    loading_c: f64,
    mode: PredictionMode,
) -> Result<PredictedLoadShed> {
    let first = states.first().ok_or_else(|| Error::Dimension("empty state sequence".into()))?;
    let n_br = model.b11.rows();
    if states.iter().any(|s| s.len() != n_br) {
        return Err(Error::Dimension(format!("state sequence must have {n_br} links per step")));
    }
    let selection = model.threshold_pool.select(loading_c, first)?;
    let delta = &selection.thresholds;
    let probs: Vec<Vec<f64>> = states.iter().map(|s| model.service(s)).collect();
    let served = probs.iter().map(|p| p.iter().zip(delta).map(|(x, d)| x >= d).collect()).collect();
    Ok(PredictedLoadShed { served, probs, mode, selection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::{ThresholdEntry, ThresholdPool};
    use crate::matrix::Matrix;

    fn pool(n: usize, eps: f64) -> ThresholdPool {
        ThresholdPool::new(vec![ThresholdEntry { loading_c: 1.0, initial_failures: vec![0], thresholds: vec![eps; n] }])
    }

    fn chain_model() -> InfluenceModelD {
        // link i follows link i - 1; link 0 follows itself
        let n = 4;
        let mut d = Matrix::zeros(n, n);
        d[(0, 0)] = 1.0;
        for i in 1..n {
            d[(i, i - 1)] = 1.0;
        }
        InfluenceModelD::new(Matrix::filled(n, n, 1.0), Matrix::filled(n, n, 0.0), d, pool(n, 0.5), 0.9)
    }

    #[test]
    fn healthy_state_is_absorbing() {
        let mut m = chain_model();
        m.threshold_pool = pool(4, 1.0);
        let p = predict_cascade(&m, &[true; 4], 1.0).unwrap();
        assert_eq!(p.termination_time, 1);
    }

    #[test]
    fn failure_walks_down_the_chain() {
        let p = predict_cascade(&chain_model(), &[false, true, true, true], 1.0).unwrap();
        assert_eq!(p.termination_time, 4);
        assert_eq!(p.final_state(), &[false; 4]);
        for w in p.states.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| *a || !*b));
        }
    }

    #[test]
    fn shed_single_step() {
        let e = InfluenceModelE::new(
            Matrix::filled(2, 3, 1.0),
            Matrix::filled(2, 3, 0.0),
            Matrix::filled(3, 2, 0.5),
            pool(3, 0.9),
            0.9,
        );
        let out = predict_load_shed(&e, &[vec![true, true]], 1.0, PredictionMode::Eval).unwrap();
        assert_eq!(out.served, vec![vec![true; 3]]);
        let out = predict_load_shed(&e, &[vec![true, false]], 1.0, PredictionMode::Eval).unwrap();
        assert_eq!(out.ever_shed(), vec![true; 3]);
    }
}
