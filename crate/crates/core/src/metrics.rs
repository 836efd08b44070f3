//! Episode metrics, generic over the scalar type.
//!
//! `CR = C / N`, `EE = CR / A`, `CE = CR / T`; `SR` is 1 only when every
//! node is completed. EE and CE are undefined (`None`) when `A` or `T` is
//! zero.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Scalars metrics can be computed in.
pub trait Scalar: Num + Clone + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for Ratio<u64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(n)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count fits in i64"))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Raw episode counters: completed nodes `C`, total nodes `N`, executed
/// actions `A` and model tokens `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeCounts {
    pub completed: u64,
    pub total: u64,
    pub actions: u64,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsOf<S> {
    pub success: bool,
    pub completion_ratio: S,
    pub execution_efficiency: Option<S>,
    pub cost_efficiency: Option<S>,
}

impl<S: Scalar> MetricsOf<S> {
    pub fn compute(counts: EpisodeCounts) -> Self {
        let completion_ratio = if counts.total == 0 {
            S::zero()
        } else {
            S::from_count(counts.completed) / S::from_count(counts.total)
        };
        let per = |d: u64| (d > 0).then(|| completion_ratio.clone() / S::from_count(d));
        MetricsOf {
            success: counts.total > 0 && counts.completed == counts.total,
            execution_efficiency: per(counts.actions),
            cost_efficiency: per(counts.tokens),
            completion_ratio,
        }
    }

    pub fn success_rate(&self) -> S {
        if self.success {
            S::one()
        } else {
            S::zero()
        }
    }

    pub fn to_f64(&self) -> MetricsOf<f64> {
        MetricsOf {
            success: self.success,
            completion_ratio: self.completion_ratio.to_f64(),
            execution_efficiency: self.execution_efficiency.as_ref().map(Scalar::to_f64),
            cost_efficiency: self.cost_efficiency.as_ref().map(Scalar::to_f64),
        }
    }
}
