use crate::scalar::{from_usize, Real};

use super::EvalError;

/// Field-agreement metrics over one point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics<T> {
    pub l2: T,
    pub rmse: T,
    pub mae: T,
    /// `None` when the truth is constant or there is a single point.
    pub r2: Option<T>,
    pub count: usize,
}

/// Overall metrics plus one entry per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<T> {
    pub overall: Metrics<T>,
    pub per_time: Vec<(T, Metrics<T>)>,
}

/// L2 norm, RMSE, MAE and coefficient of determination of `pred` against
/// `truth`.
pub fn metrics<T: Real>(pred: &[T], truth: &[T]) -> Result<Metrics<T>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch { expected: truth.len(), found: pred.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = from_usize::<T>(truth.len());
    let mean = truth.iter().copied().sum::<T>() / n;
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    let mut abs = T::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = p - t;
        ss_res = ss_res + e * e;
        abs = abs + e.abs();
        ss_tot = ss_tot + (t - mean) * (t - mean);
    }
    let r2 = (truth.len() > 1 && ss_tot > T::zero()).then(|| T::one() - ss_res / ss_tot);
    Ok(Metrics { l2: ss_res.sqrt(), rmse: (ss_res / n).sqrt(), mae: abs / n, r2, count: truth.len() })
}

/// Metrics of a time series of grids, optionally restricted to `mask`
/// (true = include).
pub fn metrics_series<T: Real>(
    times: &[T],
    pred: &[Vec<T>],
    truth: &[Vec<T>],
    mask: Option<&[bool]>,
) -> Result<MetricsReport<T>, EvalError> {
    if pred.len() != truth.len() || times.len() != truth.len() {
        return Err(EvalError::ShapeMismatch { expected: truth.len(), found: pred.len() });
    }
    let select = |v: &[T]| -> Result<Vec<T>, EvalError> {
        match mask {
            None => Ok(v.to_vec()),
            Some(m) if m.len() == v.len() => {
                Ok(v.iter().zip(m).filter(|(_, &keep)| keep).map(|(&x, _)| x).collect())
            }
            Some(m) => Err(EvalError::ShapeMismatch { expected: v.len(), found: m.len() }),
        }
    };
    let mut all_p = Vec::new();
    let mut all_t = Vec::new();
    let mut per_time = Vec::with_capacity(times.len());
    for ((&t, p), q) in times.iter().zip(pred).zip(truth) {
        let (p, q) = (select(p)?, select(q)?);
        per_time.push((t, metrics(&p, &q)?));
        all_p.extend(p);
        all_t.extend(q);
    }
    Ok(MetricsReport { overall: metrics(&all_p, &all_t)?, per_time })
}
