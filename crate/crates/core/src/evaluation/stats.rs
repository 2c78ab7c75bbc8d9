use std::io::{self, Write};

use crate::scalar::{from_usize, Real};

use super::metrics::metrics;
use super::EvalError;

/// Largest relative change of the total density over `fluid` nodes with
/// respect to the first grid of the series.
pub fn mass_audit<T: Real>(series: &[&[T]], fluid: &[bool]) -> Result<T, EvalError> {
    if series.len() < 2 {
        return Err(EvalError::Empty);
    }
    let total = |g: &[T]| -> Result<T, EvalError> {
        if g.len() != fluid.len() {
            return Err(EvalError::ShapeMismatch { expected: fluid.len(), found: g.len() });
        }
        Ok(g.iter().zip(fluid).filter(|(_, &f)| f).map(|(&v, _)| v).sum())
    };
    let m0 = total(series[0])?;
    let mut worst = T::zero();
    for g in &series[1..] {
        worst = worst.max(((total(g)? - m0) / m0).abs());
    }
    Ok(worst)
}

/// Fixed histogram binning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec<T> {
    pub min: T,
    pub max: T,
    pub bins: usize,
}

impl<T: Real> HistogramSpec<T> {
    /// Bins symmetric about zero covering `[-half_width, half_width]`; an odd
    /// bin count keeps zero at the centre of a bin.
    pub fn symmetric(half_width: T, bins: usize) -> Self {
        let bins = if bins % 2 == 0 { bins + 1 } else { bins };
        Self { min: -half_width, max: half_width, bins }
    }

    pub fn width(&self) -> T {
        (self.max - self.min) / from_usize(self.bins)
    }

    pub fn centers(&self) -> Vec<T> {
        let w = self.width();
        (0..self.bins).map(|k| self.min + w * (from_usize::<T>(k) + T::from_f64(0.5).unwrap())).collect()
    }
}

/// Counts of `pred - truth`; values outside the range land in the end bins.
pub fn error_histogram<T: Real>(pred: &[T], truth: &[T], spec: &HistogramSpec<T>) -> Result<Vec<(T, usize)>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch { expected: truth.len(), found: pred.len() });
    }
    if spec.bins == 0 || !(spec.max > spec.min) {
        return Err(EvalError::InvalidBins);
    }
    let mut counts = vec![0usize; spec.bins];
    let w = spec.width();
    for (&p, &t) in pred.iter().zip(truth) {
        let k = ((p - t - spec.min) / w).floor();
        let k = if k < T::zero() { 0 } else { k.to_usize().unwrap_or(usize::MAX).min(spec.bins - 1) };
        counts[k] += 1;
    }
    Ok(spec.centers().into_iter().zip(counts).collect())
}

fn fmt<T: Real>(v: T) -> String {
    format!("{:.8e}", v)
}

pub fn write_histogram_csv<T: Real>(out: &mut impl Write, hist: &[(T, usize)]) -> io::Result<()> {
    writeln!(out, "bin_center,count")?;
    for (c, n) in hist {
        writeln!(out, "{},{}", fmt(*c), n)?;
    }
    Ok(())
}

pub fn write_scatter_csv<T: Real>(out: &mut impl Write, pred: &[T], truth: &[T]) -> io::Result<()> {
    writeln!(out, "truth,pred")?;
    for (t, p) in truth.iter().zip(pred) {
        writeln!(out, "{},{}", fmt(*t), fmt(*p))?;
    }
    Ok(())
}

/// RMSE per time level.
pub fn temporal_rmse<T: Real>(times: &[T], pred: &[Vec<T>], truth: &[Vec<T>]) -> Result<Vec<(T, T)>, EvalError> {
    if times.len() != pred.len() || pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch { expected: times.len(), found: pred.len() });
    }
    times
        .iter()
        .zip(pred.iter().zip(truth))
        .map(|(&t, (p, q))| Ok((t, metrics(p, q)?.rmse)))
        .collect()
}

pub fn write_temporal_csv<T: Real>(out: &mut impl Write, series: &[(T, T)]) -> io::Result<()> {
    writeln!(out, "t,rmse")?;
    for (t, e) in series {
        writeln!(out, "{},{}", fmt(*t), fmt(*e))?;
    }
    Ok(())
}
