//! Weighted node clouds on `Omega(x0, r) = Omega ∩ B(x0, r)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Domain, HomDistance};
use crate::parallel::{chunk_seed, map_sum_fixed, CHUNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum QuadScheme {
    /// `res` cells per axis on the bounding box, centre membership, cell-volume weights.
    Grid { res: usize },
    /// `count` uniform samples on the bounding box.
    Mc { count: usize, seed: u64 },
}

impl QuadScheme {
    /// Master seed; grids are deterministic and report 0.
    pub fn seed(&self) -> u64 {
        match self {
            QuadScheme::Mc { seed, .. } => *seed,
            QuadScheme::Grid { .. } => 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            QuadScheme::Mc { count, .. } => QuadScheme::Mc { count, seed },
            other => other,
        }
    }
}

impl FromStr for QuadScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("quadrature `{s}` (expected grid:<res> or mc:<count>)"));
        let (kind, n) = s.trim().split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind {
            "grid" => Ok(QuadScheme::Grid { res: n }),
            "mc" => Ok(QuadScheme::Mc { count: n, seed: 0 }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for QuadScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadScheme::Grid { res } => write!(f, "grid:{res}"),
            QuadScheme::Mc { count, .. } => write!(f, "mc:{count}"),
        }
    }
}

/// Where a node set came from; enough to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scheme: QuadScheme,
    pub x0: Vec<f64>,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    pub dim: usize,
    /// Flat row-major coordinates.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
    pub total_weight: f64,
    /// Relative error estimate of the measure.
    pub quad_error: f64,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks(self.dim).zip(self.weights.iter().copied())
    }

    /// Function values at the nodes, failing on the first non-finite one.
    pub fn values<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Result<Vec<f64>> {
        let v: Vec<f64> = (0..self.len()).into_par_iter().map(|i| f(self.point(i))).collect();
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(v)
    }

    /// Keep the nodes accepted by `keep`, preserving order and weights.
    pub fn filter(&self, keep: impl Fn(&[f64]) -> bool) -> NodeSet {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (p, w) in self.iter() {
            if keep(p) {
                points.extend_from_slice(p);
                weights.push(w);
            }
        }
        let total_weight = map_sum_fixed(weights.len(), |i| weights[i]);
        NodeSet {
            dim: self.dim,
            points,
            weights,
            provenance: self.provenance.clone(),
            total_weight,
            quad_error: self.quad_error,
        }
    }
}

fn intersect(a: (Vec<f64>, Vec<f64>), b: (Vec<f64>, Vec<f64>)) -> Option<(Vec<f64>, Vec<f64>)> {
    let lo: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| x.max(*y)).collect();
    let hi: Vec<f64> = a.1.iter().zip(&b.1).map(|(x, y)| x.min(*y)).collect();
    if lo.iter().zip(&hi).all(|(l, h)| l < h) {
        Some((lo, hi))
    } else {
        None
    }
}

/// Nodes for `Omega ∩ B(x0, r)`.
///
/// Samples either the Euclidean bounding box of the ball (clipped to the domain box)
/// or the left-translated frame `x = x0 * y`, `y` in the box of `B(0, r)`, whichever box is
/// smaller. Left translation has unit Jacobian, so weights are cell volumes in both cases.
pub fn build_nodes(omega: &Domain, m: &HomDistance, x0: &[f64], r: f64, scheme: &QuadScheme) -> Result<NodeSet> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveScale(r));
    }
    Error::check_dim(m.group().dim(), x0.len())?;
    let empty = || Error::EmptyIntersection { x0: x0.to_vec(), r };
    let bbox = intersect(m.ball_bbox(x0, r), omega.bbox(m)).ok_or_else(empty)?;
    let n = x0.len();
    let prov = Provenance {
        scheme: *scheme,
        x0: x0.to_vec(),
        r,
    };
    let key = chunk_seed(scheme.seed(), &[x0, &[r]].concat());
    let half = m.unit_box(r);
    let ns = if volume(&bbox) <= half.iter().map(|h| 2.0 * h).product() {
        let member = |p: &[f64], x: &mut [f64], buf: &mut [f64]| {
            x.copy_from_slice(p);
            m.distance_with(x0, p, buf) < r && omega.contains(p, m)
        };
        sample_region(n, &bbox, scheme, key, member, prov)
    } else {
        let g = m.group();
        let frame = (half.iter().map(|h| -h).collect(), half);
        let member = |y: &[f64], x: &mut [f64], _: &mut [f64]| {
            m.norm(y) < r && {
                g.multiply_into(x0, y, x);
                omega.contains(x, m)
            }
        };
        sample_region(n, &frame, scheme, key, member, prov)
    };
    if ns.is_empty() {
        return Err(empty());
    }
    Ok(ns)
}

/// Nodes for a whole domain.
///
/// Scaled domains `base * delta_r(shape)` are sampled in the frame of `shape` when that box
/// is smaller than the Euclidean bounding box.
pub fn build_domain_nodes(omega: &Domain, m: &HomDistance, scheme: &QuadScheme) -> Result<NodeSet> {
    let n = m.group().dim();
    let bbox = omega.bbox(m);
    let prov = Provenance {
        scheme: *scheme,
        x0: vec![0.0; n],
        r: f64::INFINITY,
    };
    let key = chunk_seed(scheme.seed(), &bbox.0);
    let framed = match omega {
        Domain::Scaled { base, r, shape } => {
            let (lo, hi) = shape.bbox(m);
            let dil = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .zip(m.group().degrees())
                    .map(|(c, &d)| c * r.powi(d as i32))
                    .collect()
            };
            let frame = (dil(&lo), dil(&hi));
            (volume(&frame) < volume(&bbox)).then_some((base, frame))
        }
        _ => None,
    };
    let ns = match framed {
        Some((base, frame)) => {
            let g = m.group();
            let member = |y: &[f64], x: &mut [f64], _: &mut [f64]| {
                g.multiply_into(base, y, x);
                omega.contains(x, m)
            };
            sample_region(n, &frame, scheme, key, member, prov)
        }
        None => {
            let member = |p: &[f64], x: &mut [f64], _: &mut [f64]| {
                x.copy_from_slice(p);
                omega.contains(p, m)
            };
            sample_region(n, &bbox, scheme, key, member, prov)
        }
    };
    if ns.is_empty() {
        return Err(Error::EmptyIntersection {
            x0: vec![0.0; n],
            r: f64::INFINITY,
        });
    }
    Ok(ns)
}

fn volume(bbox: &(Vec<f64>, Vec<f64>)) -> f64 {
    bbox.0.iter().zip(&bbox.1).map(|(a, b)| b - a).product()
}

/// `member(p, x, scratch)` decides membership of the sample `p` and writes the node `x` it maps to.
fn sample_region<M>(
    n: usize,
    bbox: &(Vec<f64>, Vec<f64>),
    scheme: &QuadScheme,
    key: u64,
    member: M,
    provenance: Provenance,
) -> NodeSet
where
    M: Fn(&[f64], &mut [f64], &mut [f64]) -> bool + Sync,
{
    let (lo, hi) = bbox;
    let box_vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    match *scheme {
        QuadScheme::Grid { res } => {
            let (points, count) = grid_members(n, lo, hi, res, &member, true);
            let cell = box_vol / (res as f64).powi(n as i32);
            let total = count as f64 * cell;
            let quad_error = if res >= 2 {
                let coarse = res / 2;
                let (_, c2) = grid_members(n, lo, hi, coarse, &member, false);
                let t2 = c2 as f64 * box_vol / (coarse as f64).powi(n as i32);
                if total > 0.0 {
                    (total - t2).abs() / total
                } else {
                    1.0
                }
            } else {
                1.0
            };
            NodeSet {
                dim: n,
                weights: vec![cell; count],
                points,
                provenance,
                total_weight: total,
                quad_error,
            }
        }
        QuadScheme::Mc { count, .. } => {
            let chunks = count.div_ceil(CHUNK);
            let parts: Vec<Vec<f64>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(key);
                    rng.set_stream(c as u64);
                    let len = CHUNK.min(count - c * CHUNK);
                    let mut out = Vec::new();
                    let mut p = vec![0.0; n];
                    let mut x = vec![0.0; n];
                    let mut buf = vec![0.0; n];
                    for _ in 0..len {
                        for (v, (a, b)) in p.iter_mut().zip(lo.iter().zip(hi)) {
                            *v = rng.gen_range(*a..*b);
                        }
                        if member(&p, &mut x, &mut buf) {
                            out.extend_from_slice(&x);
                        }
                    }
                    out
                })
                .collect();
            let points: Vec<f64> = parts.concat();
            let accepted = points.len() / n.max(1);
            let w = box_vol / count as f64;
            let frac = accepted as f64 / count as f64;
            let quad_error = if accepted > 0 {
                ((1.0 - frac) / (frac * count as f64)).sqrt()
            } else {
                1.0
            };
            NodeSet {
                dim: n,
                weights: vec![w; accepted],
                points,
                provenance,
                total_weight: w * accepted as f64,
                quad_error,
            }
        }
    }
}

/// Cell centres of a `res^n` grid that pass `member`, in lexicographic order.
fn grid_members<M>(n: usize, lo: &[f64], hi: &[f64], res: usize, member: &M, keep: bool) -> (Vec<f64>, usize)
where
    M: Fn(&[f64], &mut [f64], &mut [f64]) -> bool + Sync,
{
    let total = res.pow(n as u32);
    let step: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / res as f64).collect();
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<(Vec<f64>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            let mut count = 0;
            let mut p = vec![0.0; n];
            let mut x = vec![0.0; n];
            let mut buf = vec![0.0; n];
            for lin in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut rem = lin;
                for i in (0..n).rev() {
                    let ci = rem % res;
                    rem /= res;
                    p[i] = lo[i] + (ci as f64 + 0.5) * step[i];
                }
                if member(&p, &mut x, &mut buf) {
                    count += 1;
                    if keep {
                        out.extend_from_slice(&x);
                    }
                }
            }
            (out, count)
        })
        .collect();
    let count = parts.iter().map(|p| p.1).sum();
    let points = parts.into_iter().flat_map(|p| p.0).collect();
    (points, count)
}

/// `sum_i w_i f(x_i)`.
pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(f: F, ns: &NodeSet) -> Result<f64> {
    let v = ns.values(f)?;
    Ok(weighted_sum(&v, ns))
}

/// `sum_i w_i v_i` for precomputed node values.
pub fn weighted_sum(values: &[f64], ns: &NodeSet) -> f64 {
    map_sum_fixed(values.len(), |i| ns.weights[i] * values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::CarnotGroup;
    use crate::metric::GaugeKind;
    use std::sync::Arc;

    fn line() -> HomDistance {
        HomDistance::new(Arc::new(CarnotGroup::builtin("euclidean:1").unwrap()), GaugeKind::Max)
    }

    #[test]
    fn interval_measure_within_one_cell() {
        let m = line();
        let dom = Domain::Box { lo: vec![-1.0], hi: vec![1.0] };
        let ns = build_nodes(&dom, &m, &[0.0], 0.5, &QuadScheme::Grid { res: 1000 }).unwrap();
        assert!((ns.total_weight - 1.0).abs() <= 1e-3 + 1e-12);
        let odd = integrate(|x| x[0], &ns).unwrap();
        assert!(odd.abs() < 1e-12);
        assert!((integrate(|_| 1.0, &ns).unwrap() - ns.total_weight).abs() < 1e-14);
    }

    #[test]
    fn square_integral() {
        let m = line();
        let dom = Domain::Box { lo: vec![0.0], hi: vec![1.0] };
        let ns = build_domain_nodes(&dom, &m, &QuadScheme::Grid { res: 10_000 }).unwrap();
        let v = integrate(|x| x[0] * x[0], &ns).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn exterior_point_is_empty() {
        let m = line();
        let dom = Domain::Box { lo: vec![-1.0], hi: vec![1.0] };
        let err = build_nodes(&dom, &m, &[3.0], 0.5, &QuadScheme::Grid { res: 100 }).unwrap_err();
        assert!(matches!(err, Error::EmptyIntersection { .. }));
    }

    #[test]
    fn non_finite_values_are_reported() {
        let m = line();
        let dom = Domain::Box { lo: vec![-1.0], hi: vec![1.0] };
        let ns = build_nodes(&dom, &m, &[0.0], 1.0, &QuadScheme::Grid { res: 10 }).unwrap();
        let err = integrate(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 }, &ns).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 8 }));
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("grid:32".parse::<QuadScheme>().unwrap(), QuadScheme::Grid { res: 32 });
        assert_eq!(
            "mc:1000".parse::<QuadScheme>().unwrap().with_seed(5),
            QuadScheme::Mc { count: 1000, seed: 5 }
        );
        assert!("grid".parse::<QuadScheme>().is_err());
        assert!("grid:0".parse::<QuadScheme>().is_err());
        assert!("sobol:8".parse::<QuadScheme>().is_err());
    }

    #[test]
    fn mc_is_reproducible() {
        let m = HomDistance::new(Arc::new(CarnotGroup::builtin("heisenberg:1").unwrap()), GaugeKind::Koranyi);
        let dom = Domain::unit_ball(3);
        let s = QuadScheme::Mc { count: 20_000, seed: 11 };
        let a = build_nodes(&dom, &m, &[0.1, 0.0, 0.0], 0.6, &s).unwrap();
        let b = build_nodes(&dom, &m, &[0.1, 0.0, 0.0], 0.6, &s).unwrap();
        assert_eq!(a, b);
    }
}
