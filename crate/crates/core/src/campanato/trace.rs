//! Dyadic traces `h -> a_I(x0, r / 2^h)` and their limits `v_I(x0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Campanato;
use crate::approx::{extract_ai, extract_word, ApproxResult};
use crate::error::{Error, Result};
use crate::hpoly::basis_indices;
use crate::poly::MultiIndex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLevel {
    pub h: usize,
    pub radius: f64,
    /// `a_I` aligned with [`DyadicTrace::indices`]; empty when the level is empty.
    pub values: Vec<f64>,
    pub residual: f64,
    pub nodes: usize,
    pub quad_error: f64,
    pub empty: bool,
    #[serde(skip)]
    pub fit: Option<ApproxResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicTrace {
    pub x0: Vec<f64>,
    pub r: f64,
    pub indices: Vec<MultiIndex>,
    pub levels: Vec<TraceLevel>,
}

impl DyadicTrace {
    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|j| j == idx)
    }

    /// `(h, a_I)` over the nonempty levels.
    pub fn series(&self, idx: &MultiIndex) -> Vec<(usize, f64)> {
        let Some(pos) = self.position(idx) else {
            return Vec::new();
        };
        self.levels
            .iter()
            .filter(|l| !l.empty)
            .map(|l| (l.h, l.values[pos]))
            .collect()
    }

    pub fn deepest(&self) -> Option<&TraceLevel> {
        self.levels.iter().rev().find(|l| !l.empty)
    }

    /// Ordered-word derivative `[X_{w_1} ... X_{w_m} P](x0)` at the deepest level.
    pub fn deepest_word(&self, g: &crate::group::CarnotGroup, word: &[usize]) -> Result<f64> {
        let fit = self
            .deepest()
            .and_then(|l| l.fit.as_ref())
            .ok_or(Error::AllLevelsEmpty)?;
        extract_word(fit, g, word)
    }
}

/// Convergence rate of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    /// Every increment is below tolerance.
    Exact,
    Fitted(f64),
    /// Too few nonzero increments to fit.
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VIEstimate {
    pub index: MultiIndex,
    pub v: f64,
    pub rate: Rate,
    pub theoretical_rate: f64,
    /// `|a_I(x0, r/2^h) - v_I| ~ c_fit (r / 2^h)^rate`.
    pub c_fit: Option<f64>,
    /// Increments grow instead of shrinking.
    pub convergence_suspect: bool,
    pub increments: Vec<f64>,
}

impl Campanato<'_> {
    /// `a_I(x0, r/2^h)` for `h = 0..=depth` and every `|I|_G <= k`.
    pub fn dyadic_trace(&self, x0: &[f64], r: f64, depth: usize) -> Result<DyadicTrace> {
        if depth < 2 {
            return Err(Error::Precondition(format!("trace depth must be at least 2, got {depth}")));
        }
        if !(r > 0.0) {
            return Err(Error::NonPositiveScale(r));
        }
        let g = self.group();
        let indices = basis_indices(g, self.params.k);
        let levels: Vec<Result<TraceLevel>> = (0..=depth)
            .into_par_iter()
            .map(|h| {
                let radius = r / 2f64.powi(h as i32);
                match self.local(x0, radius) {
                    Ok(lf) => {
                        let values = indices
                            .iter()
                            .map(|j| extract_ai(&lf.fit, g, j))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(TraceLevel {
                            h,
                            radius,
                            values,
                            residual: lf.fit.residual,
                            nodes: lf.nodes.len(),
                            quad_error: lf.nodes.quad_error,
                            empty: false,
                            fit: Some(lf.fit),
                        })
                    }
                    Err(Error::EmptyIntersection { .. }) | Err(Error::RankDeficient { .. }) => Ok(TraceLevel {
                        h,
                        radius,
                        values: Vec::new(),
                        residual: f64::NAN,
                        nodes: 0,
                        quad_error: f64::NAN,
                        empty: true,
                        fit: None,
                    }),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let levels = levels.into_iter().collect::<Result<Vec<_>>>()?;
        if levels.iter().all(|l| l.empty) {
            return Err(Error::AllLevelsEmpty);
        }
        Ok(DyadicTrace {
            x0: x0.to_vec(),
            r,
            indices,
            levels,
        })
    }

    /// `v_I` as the deepest trace value, with the observed convergence rate.
    pub fn estimate_vi(&self, trace: &DyadicTrace, idx: &MultiIndex) -> Result<VIEstimate> {
        let g = self.group();
        let deg = idx.weighted(g.degrees());
        let q = self.q();
        let floor = q as f64 + self.params.p * deg as f64;
        if self.params.lambda <= floor {
            return Err(Error::Precondition(format!(
                "lambda = {} must exceed Q + p|I|_G = {floor}",
                self.params.lambda
            )));
        }
        let series = trace.series(idx);
        if series.is_empty() {
            return Err(Error::AllLevelsEmpty);
        }
        let v = series.last().unwrap().1;
        let scale = series.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
        let tol = 1e-9 * (1.0 + scale);
        let increments: Vec<f64> = series.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
        let theoretical_rate = self.params.rate_for(q, deg);
        let exact = increments.iter().all(|&d| d <= tol);
        // distance to the limit, excluding the deepest level itself
        let pts: Vec<(f64, f64)> = series[..series.len() - 1]
            .iter()
            .map(|&(h, a)| (h as f64, (a - v).abs()))
            .filter(|&(_, d)| d > tol)
            .map(|(h, d)| (h, d.log2()))
            .collect();
        let (rate, c_fit) = if exact {
            (Rate::Exact, None)
        } else if pts.len() >= 2 {
            let (slope, intercept) = least_squares(&pts);
            let rate = -slope;
            // log2 d = intercept - rate h  and  d = C (r 2^{-h})^rate
            let c = 2f64.powf(intercept) / trace.r.powf(rate);
            (Rate::Fitted(rate), Some(c))
        } else {
            (Rate::Undetermined, None)
        };
        let convergence_suspect = !exact && {
            let n = increments.len();
            n >= 2 && increments[n - 1] > increments[0].max(tol)
        };
        Ok(VIEstimate {
            index: idx.clone(),
            v,
            rate,
            theoretical_rate,
            c_fit,
            convergence_suspect,
            increments,
        })
    }

    /// `v_I(x0)` from a trace of the given depth started at `r`.
    pub fn v_at(&self, x0: &[f64], r: f64, depth: usize, idx: &MultiIndex) -> Result<f64> {
        let tr = self.dyadic_trace(x0, r, depth)?;
        let pos = tr
            .position(idx)
            .ok_or_else(|| Error::DegreeOverflow {
                degree: idx.weighted(self.group().degrees()),
                k: self.params.k,
            })?;
        Ok(tr.deepest().ok_or(Error::AllLevelsEmpty)?.values[pos])
    }
}

/// Ordinary least squares line `y = a x + b`; returns `(a, b)`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (a, my - a * mx)
}
