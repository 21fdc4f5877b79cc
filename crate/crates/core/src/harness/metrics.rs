use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;
use crate::protocols::{Scheme, Trajectory};

/// Mean squared error.
pub fn metric_mse(pred: &Vector, truth: &Vector) -> Result<f64> {
    check_dim("metric_mse", truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::InvalidInput("mse of an empty vector".into()));
    }
    Ok((pred - truth).norm_squared() / truth.len() as f64)
}

/// MSE of the zero predictor.
pub fn zero_mse(truth: &Vector) -> f64 {
    if truth.is_empty() {
        0.0
    } else {
        truth.norm_squared() / truth.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDirection {
    Increasing,
    Decreasing,
    Flat,
}

/// The longest monotone suffix of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailAnnotation {
    /// First index of the suffix.
    pub start: usize,
    pub direction: TailDirection,
}

/// Relative step below which two consecutive values count as equal.
const TAIL_RTOL: f64 = 1e-12;

pub fn monotone_tail(values: &[f64]) -> Option<TailAnnotation> {
    if values.is_empty() {
        return None;
    }
    let step = |i: usize| {
        let (a, b) = (values[i - 1], values[i]);
        let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        if (b - a).abs() <= TAIL_RTOL * scale {
            0
        } else if b > a {
            1
        } else {
            -1
        }
    };
    let mut dir = 0;
    let mut start = values.len() - 1;
    while start > 0 {
        let s = step(start);
        if s != 0 && dir != 0 && s != dir {
            break;
        }
        if s != 0 {
            dir = s;
        }
        start -= 1;
    }
    let direction = match dir {
        1 => TailDirection::Increasing,
        -1 => TailDirection::Decreasing,
        _ => TailDirection::Flat,
    };
    Some(TailAnnotation { start, direction })
}

/// A metric indexed by round (AvgKD/PKD) or passing (AKD) or series term (EKD).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    /// Protocol name or reference (`centralized`, `local`, `zero`).
    pub scheme: String,
    pub agent: String,
    pub eval_set: String,
    pub values: Vec<f64>,
    pub tail: Option<TailAnnotation>,
}

impl MetricSeries {
    pub fn new(scheme: impl Into<String>, agent: impl Into<String>, eval_set: impl Into<String>, values: Vec<f64>) -> Self {
        let tail = monotone_tail(&values);
        MetricSeries {
            scheme: scheme.into(),
            agent: agent.into(),
            eval_set: eval_set.into(),
            values,
            tail,
        }
    }

    /// A reference value repeated over `len` rounds.
    pub fn constant(scheme: &str, agent: &str, eval_set: &str, value: f64, len: usize) -> Self {
        Self::new(scheme, agent, eval_set, vec![value; len])
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.scheme, self.agent)
    }
}

pub fn agent_label(i: usize) -> String {
    format!("agent{}", i + 1)
}

/// Test MSE per step of a run on the named eval set. AKD records hold one
/// model each, so `agent` only selects a model for AvgKD/PKD.
pub fn degradation_curve(traj: &Trajectory, eval_set: &str, truth: &Vector, agent: usize) -> Result<MetricSeries> {
    let e = traj.eval_index(eval_set)?;
    let values = traj
        .records
        .iter()
        .map(|r| {
            let fit = match traj.scheme {
                Scheme::Akd | Scheme::Ekd => r.fits.first(),
                _ => r.fit_of(agent),
            }
            .ok_or_else(|| Error::InvalidInput(format!("no model for agent {} in round {}", agent + 1, r.round)))?;
            metric_mse(&fit.on_eval[e], truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let label = match traj.scheme {
        Scheme::Akd | Scheme::Ekd => format!("from-{}", agent_label(traj.start_agent)),
        _ => agent_label(agent),
    };
    Ok(MetricSeries::new(traj.scheme.name(), label, eval_set, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_matches_hand_value() {
        let p = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let t = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((metric_mse(&p, &t).unwrap() - 13.0 / 3.0).abs() < 1e-15);
        assert!(metric_mse(&p, &Vector::zeros(2)).is_err());
        assert!((zero_mse(&t) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tail_detection() {
        let t = monotone_tail(&[5.0, 1.0, 2.0, 3.0, 3.0]).unwrap();
        assert_eq!((t.start, t.direction), (1, TailDirection::Increasing));
        let t = monotone_tail(&[1.0, 2.0, 1.5, 1.0]).unwrap();
        assert_eq!((t.start, t.direction), (1, TailDirection::Decreasing));
        let t = monotone_tail(&[2.0, 2.0]).unwrap();
        assert_eq!((t.start, t.direction), (0, TailDirection::Flat));
        let t = monotone_tail(&[4.0]).unwrap();
        assert_eq!(t.start, 0);
        assert!(monotone_tail(&[]).is_none());
    }
}
