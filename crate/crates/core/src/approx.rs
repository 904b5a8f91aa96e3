//! Best `L^p` approximation by polynomials of homogeneous degree at most `k`.
//!
//! The minimizer is searched in the scaled translated frame
//! `y = delta_{1/r}(x0^{-1} x)` with basis `y^J / J!`, which keeps the design
//! matrix well conditioned at every radius.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::CarnotGroup;
use crate::hpoly::{apply_word_poly, basis_indices, HPolynomial};
use crate::parallel::map_sum_fixed;
use crate::poly::{MultiIndex, Poly};
use crate::quadrature::NodeSet;

/// Solver tolerance on the coefficient step.
pub const SOLVER_TOL: f64 = 1e-10;
const MAX_ITER: usize = 500;
const WEIGHT_FLOOR: f64 = 1e-12;
const COND_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_step: f64,
    pub nonunique: bool,
    pub cond: f64,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub k: u32,
    pub p: f64,
    pub x0: Vec<f64>,
    pub r: f64,
    pub indices: Vec<MultiIndex>,
    /// Coefficients of `y^J / J!` with `y = delta_{1/r}(x0^{-1} x)`.
    pub scaled: Vec<f64>,
    /// Coefficients of `(x0^{-1} x)^J / J!`.
    pub coefficients: Vec<f64>,
    /// `(sum_i w_i |u_i - P(x_i)|^p)^{1/p}`.
    pub residual: f64,
    pub nodes: usize,
    pub diagnostics: Diagnostics,
}

impl ApproxResult {
    /// `T(y) = sum_J scaled_J y^J / J!`.
    pub fn scaled_poly(&self) -> Poly<f64> {
        let n = self.x0.len();
        Poly::from_terms(
            n,
            self.indices
                .iter()
                .zip(&self.scaled)
                .map(|(j, c)| (j.clone(), c / j.factorial() as f64)),
        )
    }

    pub fn polynomial(&self) -> HPolynomial<f64> {
        HPolynomial::translated(self.scaled_poly(), self.x0.clone(), self.r)
    }

    /// `P(x)` given a scratch buffer of length `N`.
    pub fn eval_with(&self, g: &CarnotGroup, x: &[f64], scratch: &mut [f64]) -> f64 {
        g.between(&self.x0, x, scratch);
        g.dilate_in_place(1.0 / self.r, scratch);
        self.indices
            .iter()
            .zip(&self.scaled)
            .map(|(j, c)| c * monomial(scratch, j))
            .sum()
    }
}

fn monomial(y: &[f64], j: &MultiIndex) -> f64 {
    let mut v = 1.0 / j.factorial() as f64;
    for (yi, &e) in y.iter().zip(&j.0) {
        if e > 0 {
            v *= yi.powi(e as i32);
        }
    }
    v
}

/// Rows `y(x_i)^J / J!` for every node.
pub fn design_matrix(g: &CarnotGroup, ns: &NodeSet, x0: &[f64], r: f64, indices: &[MultiIndex]) -> DMatrix<f64> {
    let m = indices.len();
    let rows: Vec<f64> = (0..ns.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut y = vec![0.0; ns.dim];
            g.between(x0, ns.point(i), &mut y);
            g.dilate_in_place(1.0 / r, &mut y);
            indices.iter().map(move |j| monomial(&y, j)).collect::<Vec<_>>()
        })
        .collect();
    DMatrix::from_row_slice(ns.len(), m, &rows)
}

fn objective(a: &DMatrix<f64>, u: &[f64], w: &[f64], c: &DVector<f64>, p: f64) -> f64 {
    let fit = a * c;
    map_sum_fixed(u.len(), |i| w[i] * (u[i] - fit[i]).abs().powf(p))
}

/// Weighted least squares through QR of `diag(sqrt(w)) A`; returns coefficients and `cond(R)`.
fn weighted_ls(a: &DMatrix<f64>, u: &[f64], w: &[f64]) -> Result<(DVector<f64>, f64)> {
    let (rows, cols) = a.shape();
    let wmax = w.iter().copied().fold(0.0, f64::max);
    if rows < cols || wmax <= 0.0 {
        return Err(Error::RankDeficient {
            cond: f64::INFINITY,
            nodes: rows,
            basis: cols,
        });
    }
    let sw: Vec<f64> = w.iter().map(|x| (x / wmax).sqrt()).collect();
    let mut aw = a.clone();
    for (i, s) in sw.iter().enumerate() {
        aw.row_mut(i).scale_mut(*s);
    }
    let bw = DVector::from_iterator(rows, u.iter().zip(&sw).map(|(v, s)| v * s));
    let qr = aw.qr();
    let rmat = qr.r();
    let sv = rmat.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= COND_LIMIT) {
        return Err(Error::RankDeficient {
            cond,
            nodes: rows,
            basis: cols,
        });
    }
    let qtb = qr.q().transpose() * bw;
    let c = rmat.solve_upper_triangular(&qtb).ok_or(Error::RankDeficient {
        cond,
        nodes: rows,
        basis: cols,
    })?;
    Ok((c, cond))
}

/// Best approximation of `u` sampled on `ns`.
#[allow(clippy::too_many_arguments)]
pub fn best_poly<F: Fn(&[f64]) -> f64 + Sync>(
    g: &CarnotGroup,
    u: F,
    ns: &NodeSet,
    x0: &[f64],
    r: f64,
    k: u32,
    p: f64,
) -> Result<ApproxResult> {
    let values = ns.values(u)?;
    best_poly_values(g, &values, ns, x0, r, k, p)
}

/// Best approximation from precomputed node values.
pub fn best_poly_values(
    g: &CarnotGroup,
    values: &[f64],
    ns: &NodeSet,
    x0: &[f64],
    r: f64,
    k: u32,
    p: f64,
) -> Result<ApproxResult> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Precondition(format!("p must be a finite real >= 1, got {p}")));
    }
    if !(r > 0.0) {
        return Err(Error::NonPositiveScale(r));
    }
    Error::check_dim(g.dim(), x0.len())?;
    Error::check_dim(ns.len(), values.len())?;
    if ns.is_empty() {
        return Err(Error::EmptyIntersection { x0: x0.to_vec(), r });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let indices = basis_indices(g, k);
    let a = design_matrix(g, ns, x0, r, &indices);
    let w = &ns.weights;
    let (c0, cond) = weighted_ls(&a, values, w)?;

    let finish = |c: DVector<f64>, diag: Diagnostics| {
        let obj = objective(&a, values, w, &c, p);
        let scaled: Vec<f64> = c.iter().copied().collect();
        let coefficients = indices
            .iter()
            .zip(&scaled)
            .map(|(j, s)| s * r.powi(-(j.weighted(g.degrees()) as i32)))
            .collect();
        ApproxResult {
            k,
            p,
            x0: x0.to_vec(),
            r,
            indices: indices.clone(),
            scaled,
            coefficients,
            residual: obj.powf(1.0 / p),
            nodes: ns.len(),
            diagnostics: diag,
        }
    };

    if p == 2.0 {
        return Ok(finish(
            c0,
            Diagnostics {
                iterations: 1,
                final_step: 0.0,
                nonunique: false,
                cond,
                method: "qr".into(),
            },
        ));
    }

    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut state = Irls {
        a: &a,
        u: values,
        w,
        p,
        c: c0.clone(),
        f: objective(&a, values, w, &c0, p),
        iterations: 0,
        last_step: f64::INFINITY,
    };

    if p > 1.0 {
        let converged = state.run(WEIGHT_FLOOR * scale, MAX_ITER)?;
        let diag = Diagnostics {
            iterations: state.iterations,
            final_step: state.last_step,
            nonunique: false,
            cond,
            method: "irls".into(),
        };
        if !converged {
            return Err(Error::NoConvergence {
                iterations: state.iterations,
                best: Box::new(finish(state.c, diag)),
            });
        }
        return Ok(finish(state.c, diag));
    }

    // p = 1: annealed smoothing, then a vertex polish and tie breaking.
    for stage in 0..10 {
        let eps = 1e-3 * (1e-9f64).powf(stage as f64 / 9.0) * scale;
        state.run(eps, MAX_ITER / 10)?;
    }
    state.polish();
    let nonunique = state.break_ties(scale);
    let diag = Diagnostics {
        iterations: state.iterations,
        final_step: state.last_step,
        nonunique,
        cond,
        method: "irls-l1".into(),
    };
    Ok(finish(state.c, diag))
}

struct Irls<'a> {
    a: &'a DMatrix<f64>,
    u: &'a [f64],
    w: &'a [f64],
    p: f64,
    c: DVector<f64>,
    f: f64,
    iterations: usize,
    last_step: f64,
}

impl Irls<'_> {
    fn obj(&self, c: &DVector<f64>) -> f64 {
        objective(self.a, self.u, self.w, c, self.p)
    }

    /// Damped Newton iterations with floored weights; `true` once the step falls below tolerance.
    fn run(&mut self, eps: f64, cap: usize) -> Result<bool> {
        for _ in 0..cap {
            self.iterations += 1;
            let fit = self.a * &self.c;
            let omega: Vec<f64> = (0..self.u.len())
                .map(|i| self.w[i] * (self.u[i] - fit[i]).abs().max(eps).powf(self.p - 2.0))
                .collect();
            let (target, _) = weighted_ls(self.a, self.u, &omega)?;
            // Newton step on sum w |r|^p: the reweighted step divided by p - 1
            let newton = if self.p > 1.0 { 1.0 / (self.p - 1.0) } else { 1.0 };
            let step = (target - &self.c) * newton;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = &self.c + &step * t;
                let fc = self.obj(&cand);
                if fc <= self.f {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            let size = step.norm() * t;
            match accepted {
                Some((cand, fc)) => {
                    self.c = cand;
                    self.f = fc;
                    self.last_step = size;
                }
                None => {
                    self.last_step = 0.0;
                    return Ok(true);
                }
            }
            if size <= SOLVER_TOL * (1.0 + self.c.norm()) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Interpolate on the `m` nodes of smallest residual; keep it when no worse.
    fn polish(&mut self) {
        let m = self.a.ncols();
        let fit = self.a * &self.c;
        let mut order: Vec<usize> = (0..self.u.len()).collect();
        order.sort_by(|&i, &j| {
            (self.u[i] - fit[i])
                .abs()
                .total_cmp(&(self.u[j] - fit[j]).abs())
                .then(i.cmp(&j))
        });
        let pick = &order[..m.min(order.len())];
        if pick.len() < m {
            return;
        }
        let sub = DMatrix::from_fn(m, m, |r, c| self.a[(pick[r], c)]);
        let rhs = DVector::from_iterator(m, pick.iter().map(|&i| self.u[i]));
        if let Some(c) = sub.lu().solve(&rhs) {
            if c.iter().all(|v| v.is_finite()) {
                let f = self.obj(&c);
                if f <= self.f {
                    self.c = c;
                    self.f = f;
                }
            }
        }
    }

    /// Directional derivative of the L1 objective at `c` along `d`.
    fn slope(&self, d: &DVector<f64>, zero: f64) -> f64 {
        let fit = self.a * &self.c;
        let ad = self.a * d;
        (0..self.u.len())
            .map(|i| {
                let r = self.u[i] - fit[i];
                if r.abs() > zero {
                    -r.signum() * ad[i] * self.w[i]
                } else {
                    ad[i].abs() * self.w[i]
                }
            })
            .sum()
    }

    /// Move along flat directions toward smaller coefficient norm.
    fn break_ties(&mut self, scale: f64) -> bool {
        let total_w: f64 = self.w.iter().sum();
        let ftol = 1e-12 * (self.f + total_w * scale);
        let zero = 1e-12 * scale;
        let mut moved = false;
        for _ in 0..4 {
            let mut dirs: Vec<(DVector<f64>, f64)> = Vec::new();
            if self.c.norm() > 0.0 {
                dirs.push((-self.c.clone(), 1.0));
            }
            for j in 0..self.c.len() {
                if self.c[j] != 0.0 {
                    let mut d = DVector::zeros(self.c.len());
                    d[j] = -self.c[j].signum();
                    dirs.push((d, self.c[j].abs()));
                }
            }
            let mut any = false;
            for (d, tmax) in dirs {
                if self.slope(&d, zero) > ftol {
                    continue;
                }
                let ok = |t: f64| self.obj(&(&self.c + &d * t)) <= self.f + ftol;
                let t = if ok(tmax) {
                    tmax
                } else {
                    let (mut lo, mut hi) = (0.0, tmax);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if ok(mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                };
                if t * d.norm() > 1e-12 * (1.0 + self.c.norm()) {
                    self.c = &self.c + &d * t;
                    self.f = self.obj(&self.c);
                    moved = true;
                    any = true;
                }
            }
            if !any {
                break;
            }
        }
        // a remaining flat direction of either sign also means the minimizer is not unique
        let probe = 1e-6 * (1.0 + self.c.norm());
        let flat = (0..self.c.len()).any(|j| {
            [1.0, -1.0].iter().any(|&s| {
                let mut d = DVector::zeros(self.c.len());
                d[j] = s;
                self.slope(&d, zero) <= ftol && self.obj(&(&self.c + &d * probe)) <= self.f + ftol
            })
        });
        moved || flat
    }
}

/// `a_I(x0, r) = [X^I P](x0)`.
///
/// By left invariance and dilation homogeneity this is `r^{-|I|_G} [X^I T](0)` for
/// the scaled-frame polynomial `T`.
pub fn extract_ai(res: &ApproxResult, g: &CarnotGroup, idx: &MultiIndex) -> Result<f64> {
    Error::check_dim(g.dim(), idx.len())?;
    extract_word(res, g, &idx.word())
}

/// `[X_{w_1} ... X_{w_m} P](x0)` for an ordered word of field indices.
pub fn extract_word(res: &ApproxResult, g: &CarnotGroup, word: &[usize]) -> Result<f64> {
    let degree: u32 = word.iter().map(|&i| g.degrees()[i]).sum();
    if degree > res.k {
        return Err(Error::DegreeOverflow { degree, k: res.k });
    }
    let t = res.scaled_poly();
    let d = apply_word_poly(&t, word, &g.fields_as::<f64>());
    Ok(d.constant_term() * res.r.powi(-(degree as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpoly::apply_x_multi;
    use crate::metric::{Domain, GaugeKind, HomDistance};
    use crate::quadrature::{build_nodes, Provenance, QuadScheme};
    use std::sync::Arc;

    fn hand_nodes(points: Vec<f64>, weights: Vec<f64>) -> NodeSet {
        NodeSet {
            dim: 1,
            total_weight: weights.iter().sum(),
            points,
            weights,
            provenance: Provenance {
                scheme: QuadScheme::Grid { res: 1 },
                x0: vec![0.0],
                r: 1.0,
            },
            quad_error: 0.0,
        }
    }

    #[test]
    fn weighted_median_constant() {
        let g = CarnotGroup::builtin("euclidean:1").unwrap();
        let ns = hand_nodes(vec![-0.5, 0.0, 0.5], vec![1.0; 3]);
        let res = best_poly_values(&g, &[0.0, 0.0, 1.0], &ns, &[0.0], 1.0, 0, 1.0).unwrap();
        assert!(res.scaled[0].abs() < 1e-12, "{:?}", res.scaled);
        assert!(!res.diagnostics.nonunique);
    }

    #[test]
    fn l1_tie_prefers_small_norm() {
        let g = CarnotGroup::builtin("euclidean:1").unwrap();
        let ns = hand_nodes(vec![-0.5, 0.5], vec![1.0; 2]);
        let res = best_poly_values(&g, &[1.0, 3.0], &ns, &[0.0], 1.0, 0, 1.0).unwrap();
        assert!((res.scaled[0] - 1.0).abs() < 1e-9, "{:?}", res.scaled);
        assert!(res.diagnostics.nonunique);
        assert!((res.residual - 2.0).abs() < 1e-9);
    }

    #[test]
    fn polynomial_is_recovered() {
        let g = Arc::new(CarnotGroup::builtin("heisenberg:1").unwrap());
        let m = HomDistance::new(g.clone(), GaugeKind::Koranyi);
        let dom = Domain::unit_ball(3);
        let x0 = [0.1, -0.2, 0.05];
        let ns = build_nodes(&dom, &m, &x0, 0.5, &QuadScheme::Grid { res: 16 }).unwrap();
        let u = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] * x[0] + 0.5 * x[2];
        for p in [2.0, 1.5, 3.0] {
            let res = best_poly(&g, u, &ns, &x0, 0.5, 2, p).unwrap();
            assert!(res.residual < 1e-10, "p={p}: {}", res.residual);
            let mut buf = [0.0; 3];
            for (pt, _) in ns.iter().take(50) {
                assert!((res.eval_with(&g, pt, &mut buf) - u(pt)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let g = CarnotGroup::builtin("euclidean:1").unwrap();
        let ns = hand_nodes(vec![0.1, 0.1, 0.1], vec![1.0; 3]);
        let err = best_poly_values(&g, &[1.0, 2.0, 3.0], &ns, &[0.0], 1.0, 1, 2.0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn extract_matches_full_expansion() {
        let g = Arc::new(CarnotGroup::builtin("heisenberg:1").unwrap());
        let m = HomDistance::new(g.clone(), GaugeKind::Koranyi);
        let dom = Domain::unit_ball(3);
        let x0 = [0.2, 0.1, -0.03];
        let r = 0.4;
        let ns = build_nodes(&dom, &m, &x0, r, &QuadScheme::Grid { res: 14 }).unwrap();
        let u = |x: &[f64]| (x[0] + 0.3 * x[2]).exp() * (1.0 + x[1] * x[1]);
        let res = best_poly(&g, u, &ns, &x0, r, 3, 2.0).unwrap();
        let full = res.polynomial().to_absolute(&g);
        for idx in basis_indices(&g, 3) {
            let direct = apply_x_multi(&full, &idx, &g).poly.eval(&x0);
            let fast = extract_ai(&res, &g, &idx).unwrap();
            assert!((direct - fast).abs() < 1e-8 * (1.0 + direct.abs()), "{idx}: {direct} vs {fast}");
        }
        let too_high = MultiIndex(vec![0, 0, 2]);
        assert!(matches!(
            extract_ai(&res, &g, &too_high),
            Err(Error::DegreeOverflow { degree: 4, k: 3 })
        ));
    }

    #[test]
    fn euclidean_coefficients_are_scaled_derivatives() {
        let g = CarnotGroup::builtin("euclidean:2").unwrap();
        let m = HomDistance::new(Arc::new(g.clone()), GaugeKind::Max);
        let dom = Domain::cube(2, 1.0);
        let ns = build_nodes(&dom, &m, &[0.0, 0.0], 0.5, &QuadScheme::Grid { res: 30 }).unwrap();
        let res = best_poly(&g, |x| x[0].sin() + x[1] * x[1] * x[0], &ns, &[0.0, 0.0], 0.5, 2, 2.0).unwrap();
        for (j, c) in res.indices.iter().zip(&res.coefficients) {
            let a = extract_ai(&res, &g, j).unwrap();
            assert!((a - c).abs() < 1e-10);
        }
    }
}
