//! Diagnostics of a trained prior: how much of the reward variance the first
//! days explain, prediction error against held-out traces, and covariance
//! export.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Deserialize;

use crate::belief::{condition_on_group, format_real, project_reward, GaussianBelief, PriorModel};
use crate::error::{Error, Result};
use crate::output::atomic_write;
use crate::stats;
use crate::training::ShowHistory;

/// Fraction of the variance of `wᵀx` explained by the first `t` coordinates,
/// for `t = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    pub explained: Vec<f64>,
}

impl VarianceCurve {
    /// First `t` at which the explained fraction reaches `level`.
    pub fn first_reaching(&self, level: f64) -> Option<usize> {
        self.explained.iter().position(|&v| v >= level)
    }
}

/// Variance-explained curve of `cov` along `weights`.
///
/// `explained[t] = 1 − w[t:]ᵀ C̃_t w[t:] / wᵀCw` with `C̃_t` the Schur
/// complement of the leading `t × t` block. The complements are built by
/// eliminating one pivot at a time; a pivot that is zero up to rounding
/// means the coordinate is already determined by the earlier ones and is
/// skipped, so singular covariances need no jitter.
pub fn variance_explained(cov: &DMatrix<f64>, weights: &DVector<f64>) -> Result<VarianceCurve> {
    let k = weights.len();
    if cov.nrows() != k || cov.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: cov.nrows(),
        });
    }
    let total = weights.dot(&(cov * weights));
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let scale = (0..k).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-14 * scale;

    let mut c = cov.clone();
    let mut explained = Vec::with_capacity(k + 1);
    explained.push(0.0);
    for t in 0..k {
        let pivot = c[(t, t)];
        if pivot > tol {
            let col: DVector<f64> = c.view((t + 1, t), (k - t - 1, 1)).column(0).into_owned();
            let mut rest = c.view_mut((t + 1, t + 1), (k - t - 1, k - t - 1));
            rest.ger(-1.0 / pivot, &col, &col, 1.0);
        }
        let w_rest = weights.rows(t + 1, k - t - 1);
        let block = c.view((t + 1, t + 1), (k - t - 1, k - t - 1));
        let remaining = w_rest.dot(&(block * w_rest));
        explained.push(((total - remaining) / total).clamp(0.0, 1.0));
    }
    explained[k] = 1.0;
    Ok(VarianceCurve { explained })
}

/// Variance-explained curve with all correlations removed.
pub fn uncorrelated_baseline(cov: &DMatrix<f64>, weights: &DVector<f64>) -> Result<VarianceCurve> {
    variance_explained(&DMatrix::from_diagonal(&cov.diagonal()), weights)
}

/// Mean and standard error over shows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Number of leading trace elements visible `days` after discovery.
pub fn observed_len_after(delays: &[u32], days: u32) -> usize {
    delays.iter().take_while(|&&d| d <= days).count()
}

struct ShowSplit {
    /// Element-wise mean of the first `M` traces.
    head_mean: Vec<f64>,
    holdout_stickiness: f64,
}

fn split_show(show: &ShowHistory, m: usize, k: usize) -> Result<ShowSplit> {
    let n = show.traces.len();
    if n < m + 1 {
        return Err(Error::InsufficientTraces {
            show_id: show.show_id.clone(),
            needed: m + 1,
            found: n,
        });
    }
    let mut head_mean = vec![0.0; k];
    for t in &show.traces[..m] {
        if t.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: t.len(),
            });
        }
        for (acc, v) in head_mean.iter_mut().zip(t.observed()) {
            *acc += v;
        }
    }
    for v in &mut head_mean {
        *v /= m as f64;
    }
    let holdout = &show.traces[m..];
    let holdout_stickiness =
        holdout.iter().map(|t| t.observed().iter().sum::<f64>()).sum::<f64>() / holdout.len() as f64;
    Ok(ShowSplit {
        head_mean,
        holdout_stickiness,
    })
}

fn show_errors(prior: &PriorModel, split: &ShowSplit, m: usize, days: &[u32]) -> Result<Vec<f64>> {
    let ones = DVector::from_element(prior.dim(), 1.0);
    let start = GaussianBelief::from_prior(prior);
    days.iter()
        .map(|&t| {
            let l = observed_len_after(prior.delays(), t);
            let belief = if m == 0 || l == 0 {
                start.clone()
            } else {
                condition_on_group(&start, prior, &split.head_mean, l, m)?
            };
            let rb = project_reward(&belief, &ones)?;
            Ok((rb.mean - split.holdout_stickiness).abs())
        })
        .collect()
}

/// Mean absolute error of the stickiness prediction from the first `m`
/// traces of each show, observed for `days` days, against the empirical
/// stickiness of the show's remaining traces.
pub fn mae_eval(prior: &PriorModel, shows: &[ShowHistory], m: usize, days: u32) -> Result<MaeEstimate> {
    let grid = mae_grid(prior, shows, &[m], &[days])?;
    Ok(grid[0].estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeCell {
    pub m: usize,
    pub days: u32,
    pub estimate: MaeEstimate,
}

/// [`mae_eval`] over every combination of `ms` and `days`, ordered by `m`
/// then `days`.
pub fn mae_grid(prior: &PriorModel, shows: &[ShowHistory], ms: &[usize], days: &[u32]) -> Result<Vec<MaeCell>> {
    if shows.is_empty() {
        return Err(Error::InvalidSpec("MAE needs at least one show".into()));
    }
    let k = prior.dim();
    let mut cells = Vec::with_capacity(ms.len() * days.len());
    for &m in ms {
        let per_show: Vec<Vec<f64>> = shows
            .par_iter()
            .map(|show| {
                let split = split_show(show, m, k)?;
                show_errors(prior, &split, m, days)
            })
            .collect::<Result<_>>()?;
        for (j, &t) in days.iter().enumerate() {
            let errs: Vec<f64> = per_show.iter().map(|e| e[j]).collect();
            cells.push(MaeCell {
                m,
                days: t,
                estimate: MaeEstimate {
                    value: stats::mean(&errs),
                    stderr: stats::std_error(&errs),
                },
            });
        }
    }
    Ok(cells)
}

pub fn write_curve_csv<W: Write>(out: W, curve: &VarianceCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "value", "stderr"])?;
    for (t, v) in curve.explained.iter().enumerate() {
        w.write_record([t.to_string(), format_real(*v), format_real(0.0)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CurveRow {
    t: usize,
    value: f64,
    #[allow(dead_code)]
    stderr: f64,
}

pub fn read_curve_csv<R: Read>(input: R) -> Result<VarianceCurve> {
    let mut r = csv::Reader::from_reader(input);
    let mut explained = Vec::new();
    for (i, row) in r.deserialize::<CurveRow>().enumerate() {
        let row = row?;
        if row.t != i {
            return Err(Error::InvalidSpec(format!("curve row {i} has t = {}", row.t)));
        }
        explained.push(row.value);
    }
    Ok(VarianceCurve { explained })
}

pub fn write_mae_csv<W: Write>(out: W, cells: &[MaeCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "t", "value", "stderr"])?;
    for c in cells {
        w.write_record([
            c.m.to_string(),
            c.days.to_string(),
            format_real(c.estimate.value),
            format_real(c.estimate.stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct MaeRow {
    m: usize,
    t: u32,
    value: f64,
    stderr: f64,
}

pub fn read_mae_csv<R: Read>(input: R) -> Result<Vec<MaeCell>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<MaeRow>()
        .map(|row| {
            let row = row?;
            Ok(MaeCell {
                m: row.m,
                days: row.t,
                estimate: MaeEstimate {
                    value: row.value,
                    stderr: row.stderr,
                },
            })
        })
        .collect()
}

/// Dense matrix as CSV with header `d1,…,dK`, one row per matrix row.
pub fn write_matrix_csv<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=m.ncols()).map(|j| format!("d{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| format_real(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let k = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("`{field}` is not a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: rows,
        });
    }
    Ok(DMatrix::from_row_slice(rows, k, &data))
}

/// Writes `sigma.csv` and `v_noise.csv` into `dir`.
pub fn export_covariances(prior: &PriorModel, dir: &Path) -> Result<()> {
    atomic_write(&dir.join("sigma.csv"), |w| write_matrix_csv(w, prior.sigma()))?;
    atomic_write(&dir.join("v_noise.csv"), |w| write_matrix_csv(w, prior.v_noise()))?;
    Ok(())
}
