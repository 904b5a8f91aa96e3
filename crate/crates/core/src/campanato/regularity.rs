//! Regularity of the limit fields `v_I`: Hölder probe, derivative identity,
//! reconstruction of `u` from `v_0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::least_squares;
use super::Campanato;
use crate::error::{Error, Result};
use crate::hpoly::basis_indices;
use crate::poly::MultiIndex;

/// Largest accepted `|X_i v_I - limit|` in the derivative identity.
pub const DERIVATIVE_TOL: f64 = 1e-3;

/// Relative step of the central difference along the flow of `X_i`.
pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderBin {
    /// Upper end of the distance bin `(delta/2, delta]`.
    pub delta: f64,
    /// Largest `|v_I(x) - v_I(y)|` in the bin.
    pub omega: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub index: MultiIndex,
    /// Log-log slope of the binned modulus of continuity; `None` when flat.
    pub alpha_est: Option<f64>,
    pub flat: bool,
    pub alpha_theory: f64,
    /// `max |v_I(x) - v_I(y)| / ([u] d(x, y)^alpha)`.
    pub theta_emp: f64,
    pub seminorm: f64,
    pub points: usize,
    pub pairs: usize,
    pub bins: Vec<HolderBin>,
    /// Base points whose trace looked non-convergent.
    pub suspect: usize,
    /// `(ln d, ln |v_I(x) - v_I(y)|)` for every pair with a nonzero difference.
    pub scatter: Vec<(f64, f64)>,
    /// `(x, v_I(x))` on the sample grid.
    pub field: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRecord {
    pub x0: Vec<f64>,
    pub index: MultiIndex,
    /// 1-based field index.
    pub i: usize,
    pub step: f64,
    /// Central difference of `v_I` along `t -> x0 exp(t e_i)`.
    pub fd: f64,
    /// `[X_i X^I P](x0)` at the deepest trace level.
    pub target: f64,
    /// `v_{I + e_i}(x0)`.
    pub canonical: f64,
    /// `target - canonical`; nonzero when `X_i` does not commute past `X^I`.
    pub commutator: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub points: usize,
    pub depth: usize,
    /// `max_x0 |a_0(x0, r/2^h) - u(x0)|` for each level.
    pub gaps: Vec<f64>,
    pub sup_gap: f64,
    pub tol: f64,
    pub monotone_tail: bool,
    pub pass: bool,
    /// Discrete `C^{k,alpha}` seminorm of the fields `v_I`, `|I|_G = k`.
    pub holder_seminorm: f64,
    pub alpha: f64,
}

impl Campanato<'_> {
    fn require_holder_regime(&self) -> Result<f64> {
        self.params.alpha(self.q()).ok_or_else(|| {
            Error::Precondition(format!(
                "lambda = {} must exceed Q + pk = {}",
                self.params.lambda,
                self.params.threshold(self.q())
            ))
        })
    }

    /// `v_I` at each point from a trace started at `r`; also flags suspect traces.
    pub fn v_field(&self, points: &[Vec<f64>], r: f64, depth: usize, idx: &MultiIndex) -> Result<Vec<(f64, bool)>> {
        points
            .par_iter()
            .map(|x| {
                let tr = self.dyadic_trace(x, r, depth)?;
                let est = self.estimate_vi(&tr, idx)?;
                Ok((est.v, est.convergence_suspect))
            })
            .collect()
    }

    /// Hölder modulus of `v_I` on a vertex grid with `per_axis` cells per axis.
    pub fn holder_probe(&self, idx: &MultiIndex, per_axis: usize, r: f64, depth: usize, seminorm: f64) -> Result<HolderReport> {
        let alpha = self.require_holder_regime()?;
        let g = self.group();
        let k = self.params.k;
        if idx.weighted(g.degrees()) != k {
            return Err(Error::Precondition(format!("holder probe needs |I|_G = k = {k}, got {idx}")));
        }
        let points = self.vertex_points(per_axis);
        if points.len() < 2 {
            return Err(Error::NoSamples);
        }
        let vals = self.v_field(&points, r, depth, idx)?;
        let suspect = vals.iter().filter(|v| v.1).count();
        let diam = self.diameter();
        let half = diam / 2.0;
        let scale = vals.iter().map(|v| v.0.abs()).fold(0.0, f64::max);
        let tol = 1e-8 * (1.0 + scale);

        let mut diffs = Vec::new();
        let mut buf = vec![0.0; g.dim()];
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                let d = self.metric.distance_with(&points[a], &points[b], &mut buf);
                if d > 0.0 && d <= half * (1.0 + 1e-9) {
                    diffs.push((d, (vals[a].0 - vals[b].0).abs()));
                }
            }
        }
        if diffs.is_empty() {
            return Err(Error::NoSamples);
        }
        let dmin = diffs.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
        // grid distances that equal a bin edge up to rounding belong to the lower bin
        let edge = 1.0 + 1e-9;
        let mut bins = Vec::new();
        let mut delta = half;
        while delta * edge >= dmin {
            let inside: Vec<f64> = diffs
                .iter()
                .filter(|(d, _)| *d > delta / 2.0 * edge && *d <= delta * edge)
                .map(|x| x.1)
                .collect();
            if !inside.is_empty() {
                bins.push(HolderBin {
                    delta,
                    omega: inside.iter().copied().fold(0.0, f64::max),
                    pairs: inside.len(),
                });
            }
            delta /= 2.0;
        }
        let flat = diffs.iter().all(|d| d.1 <= tol);
        let pts: Vec<(f64, f64)> = bins
            .iter()
            .filter(|b| b.omega > tol)
            .map(|b| (b.delta.ln(), b.omega.ln()))
            .collect();
        let alpha_est = (!flat && pts.len() >= 2).then(|| least_squares(&pts).0);
        let theta_emp = if seminorm > 0.0 {
            diffs.iter().map(|(d, v)| v / (seminorm * d.powf(alpha))).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        let scatter = diffs
            .iter()
            .filter(|d| d.1 > 0.0)
            .map(|(d, v)| (d.ln(), v.ln()))
            .collect();
        Ok(HolderReport {
            index: idx.clone(),
            alpha_est,
            flat,
            alpha_theory: alpha,
            theta_emp: if flat { 0.0 } else { theta_emp },
            seminorm,
            points: points.len(),
            pairs: diffs.len(),
            bins,
            suspect,
            scatter,
            field: points.into_iter().zip(vals.into_iter().map(|v| v.0)).collect(),
        })
    }

    /// `X_i v_I(x0)` by central differences against the limit of `X_i X^I P(x0)`.
    ///
    /// `i` is 0-based. Admissible when `lambda > Q + pk` and either `k >= d_N`,
    /// `|I|_G <= k - d_N`, or `X_i` is horizontal and `|I|_G <= k - 1`.
    pub fn derivative_identity_check(
        &self,
        x0: &[f64],
        idx: &MultiIndex,
        i: usize,
        r: f64,
        depth: usize,
    ) -> Result<DerivativeRecord> {
        self.require_holder_regime()?;
        let g = self.group();
        let n = g.dim();
        if i >= n {
            return Err(Error::Precondition(format!("field index {} out of range 1..={n}", i + 1)));
        }
        Error::check_dim(n, idx.len())?;
        let k = self.params.k;
        let dn = g.max_degree();
        let deg = idx.weighted(g.degrees());
        let general = k >= dn && deg + dn <= k;
        let horizontal = g.degrees()[i] == 1 && deg < k;
        if !(general || horizontal) {
            return Err(Error::Precondition(format!(
                "derivative identity needs k >= d_N = {dn} and |I|_G <= k - d_N, or a horizontal X_i and |I|_G <= k - 1 (k = {k}, |I|_G = {deg}, d_i = {})",
                g.degrees()[i]
            )));
        }
        let step = FD_STEP * self.diameter();
        let plus = g.flow(x0, i, step);
        let minus = g.flow(x0, i, -step);
        let vp = self.v_at(&plus, r, depth, idx)?;
        let vm = self.v_at(&minus, r, depth, idx)?;
        let fd = (vp - vm) / (2.0 * step);
        let tr = self.dyadic_trace(x0, r, depth)?;
        let mut word = vec![i];
        word.extend(idx.word());
        let target = tr.deepest_word(g, &word)?;
        let up = idx.plus_unit(i);
        let canonical = tr.deepest_word(g, &up.word())?;
        let gap = (fd - target).abs();
        Ok(DerivativeRecord {
            x0: x0.to_vec(),
            index: idx.clone(),
            i: i + 1,
            step,
            fd,
            target,
            canonical,
            commutator: target - canonical,
            gap,
            rel_gap: gap / (1.0 + target.abs()),
            pass: gap <= DERIVATIVE_TOL,
        })
    }

    /// `|a_0(x0, r/2^h) - u(x0)|` over the sample points, level by level.
    pub fn reconstruction_check(&self, points: &[Vec<f64>], r: f64, depth: usize, tol: f64) -> Result<ReconstructionReport> {
        let alpha = self.require_holder_regime()?;
        if points.is_empty() {
            return Err(Error::NoSamples);
        }
        let g = self.group();
        let n = g.dim();
        let zero = MultiIndex::zeros(n);
        let top: Vec<MultiIndex> = basis_indices(g, self.params.k)
            .into_iter()
            .filter(|j| j.weighted(g.degrees()) == self.params.k)
            .collect();
        let traces = points
            .par_iter()
            .map(|x| self.dyadic_trace(x, r, depth))
            .collect::<Result<Vec<_>>>()?;
        let mut gaps = vec![0.0f64; depth + 1];
        for (x, tr) in points.iter().zip(&traces) {
            let ux = self.u.eval(x);
            let pos = tr.position(&zero).ok_or(Error::AllLevelsEmpty)?;
            for lvl in &tr.levels {
                let gap = if lvl.empty { f64::NAN } else { (lvl.values[pos] - ux).abs() };
                gaps[lvl.h] = if gap.is_nan() || gaps[lvl.h].is_nan() { f64::NAN } else { gaps[lvl.h].max(gap) };
            }
        }
        let sup_gap = gaps[depth];
        let tail = &gaps[depth.saturating_sub(3)..];
        // roundoff slack on the monotone tail
        let slack = 1e-12 * (1.0 + gaps.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max));
        let monotone_tail = tail.windows(2).all(|w| w[1] <= w[0] + slack);

        let mut holder: f64 = 0.0;
        let half = self.diameter() / 2.0;
        let mut buf = vec![0.0; n];
        for idx in &top {
            let vals: Vec<f64> = traces
                .iter()
                .map(|tr| {
                    let pos = tr.position(idx).expect("basis index");
                    tr.deepest().map(|l| l.values[pos]).unwrap_or(f64::NAN)
                })
                .collect();
            for a in 0..points.len() {
                for b in a + 1..points.len() {
                    let d = self.metric.distance_with(&points[a], &points[b], &mut buf);
                    if d > 0.0 && d <= half {
                        holder = holder.max((vals[a] - vals[b]).abs() / d.powf(alpha));
                    }
                }
            }
        }
        Ok(ReconstructionReport {
            points: points.len(),
            depth,
            sup_gap,
            tol,
            monotone_tail,
            pass: sup_gap <= tol && monotone_tail,
            gaps,
            holder_seminorm: holder,
            alpha,
        })
    }
}
