//! Homogeneous gauges, left-invariant distances and bounded domains.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::CarnotGroup;
use crate::parallel::{chunk_seed, sum_fixed};
use crate::poly::Poly;
use crate::quadrature::{build_nodes, QuadScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeKind {
    /// `max_i |x_i|^{1/d_i}`.
    Max,
    /// `(sum_j (eps_j |x^{(j)}|)^{2L/j})^{1/2L}`, `L = lcm(1..s)`.
    Koranyi,
}

impl FromStr for GaugeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(GaugeKind::Max),
            "koranyi" => Ok(GaugeKind::Koranyi),
            other => Err(Error::Parse(format!("unknown gauge `{other}` (expected koranyi|max)"))),
        }
    }
}

impl fmt::Display for GaugeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GaugeKind::Max => "max",
            GaugeKind::Koranyi => "koranyi",
        })
    }
}

/// Left-invariant homogeneous distance `d(x, y) = |x^{-1} y|`.
#[derive(Clone, Debug)]
pub struct HomDistance {
    group: Arc<CarnotGroup>,
    kind: GaugeKind,
    /// per-stratum weights `eps_j`
    eps: Vec<f64>,
    lcm: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Heisenberg-type: step two with a one-dimensional centre.
fn heisenberg_like(g: &CarnotGroup) -> bool {
    g.step() == 2 && g.strata_dims()[1] == 1 && g.strata_dims()[0] % 2 == 0
}

impl HomDistance {
    pub fn new(group: Arc<CarnotGroup>, kind: GaugeKind) -> Self {
        let s = group.step() as u32;
        let lcm = (1..=s).fold(1, |acc, j| acc / gcd(acc, j) * j);
        let eps = (1..=s)
            .map(|j| if kind == GaugeKind::Koranyi && s == 2 && j == 2 { 4.0 } else { 1.0 })
            .collect();
        HomDistance { group, kind, eps, lcm }
    }

    /// Korányi on Heisenberg-type groups, max gauge elsewhere.
    pub fn default_for(group: Arc<CarnotGroup>) -> Self {
        let kind = if heisenberg_like(&group) {
            GaugeKind::Koranyi
        } else {
            GaugeKind::Max
        };
        Self::new(group, kind)
    }

    pub fn group(&self) -> &CarnotGroup {
        &self.group
    }

    pub fn group_arc(&self) -> &Arc<CarnotGroup> {
        &self.group
    }

    pub fn kind(&self) -> GaugeKind {
        self.kind
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        let d = self.group.degrees();
        match self.kind {
            GaugeKind::Max => x
                .iter()
                .zip(d)
                .map(|(v, &di)| if di == 1 { v.abs() } else { v.abs().powf(1.0 / di as f64) })
                .fold(0.0, f64::max),
            GaugeKind::Koranyi => {
                let l = self.lcm as f64;
                let mut sq = vec![0.0; self.group.step()];
                for (v, &di) in x.iter().zip(d) {
                    sq[di as usize - 1] += v * v;
                }
                let total: f64 = sq
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| {
                        let e = self.eps[j];
                        (e * e * s).powf(l / (j + 1) as f64)
                    })
                    .sum();
                total.powf(1.0 / (2.0 * l))
            }
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Error::check_dim(self.group.dim(), x.len())?;
        Error::check_dim(self.group.dim(), y.len())?;
        let mut buf = vec![0.0; x.len()];
        Ok(self.distance_with(x, y, &mut buf))
    }

    /// Unchecked distance reusing a scratch buffer.
    pub fn distance_with(&self, x: &[f64], y: &[f64], scratch: &mut [f64]) -> f64 {
        self.group.between(x, y, scratch);
        self.norm(scratch)
    }

    /// Coordinate bounds of `B(0, r)`: `|x_i| <= r^{d_i} / eps_{d_i}`.
    pub fn unit_box(&self, r: f64) -> Vec<f64> {
        self.group
            .degrees()
            .iter()
            .map(|&d| r.powi(d as i32) / self.eps[d as usize - 1])
            .collect()
    }

    /// Axis-aligned box containing `B(x0, r)`.
    pub fn ball_bbox(&self, x0: &[f64], r: f64) -> (Vec<f64>, Vec<f64>) {
        let half = self.unit_box(r);
        let lo: Vec<f64> = half.iter().map(|h| -h).collect();
        image_bbox(&self.group, x0, &lo, &half)
    }

    /// Lebesgue measure of the unit ball when a closed form is known.
    pub fn unit_ball_volume(&self) -> Option<f64> {
        let g = &self.group;
        match self.kind {
            GaugeKind::Max => Some(2f64.powi(g.dim() as i32)),
            GaugeKind::Koranyi if g.step() == 1 => {
                let n = g.dim() as f64;
                Some(std::f64::consts::PI.powf(n / 2.0) / libm::tgamma(n / 2.0 + 1.0))
            }
            GaugeKind::Koranyi if heisenberg_like(g) => {
                let n = (g.strata_dims()[0] / 2) as f64;
                let beta = libm::tgamma(n / 2.0) * libm::tgamma(1.5) / libm::tgamma(n / 2.0 + 1.5);
                Some(std::f64::consts::PI.powf(n) * beta / (4.0 * libm::tgamma(n)))
            }
            GaugeKind::Koranyi => None,
        }
    }
}

/// Interval enclosure of a polynomial over the box `[lo, hi]`.
pub fn poly_range(p: &Poly<f64>, lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    for (j, &c) in p.terms() {
        let (mut tl, mut th) = (c, c);
        for (i, &e) in j.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let (pl, ph) = pow_interval(lo[i], hi[i], e as i32);
            let cands = [tl * pl, tl * ph, th * pl, th * ph];
            tl = cands.iter().copied().fold(f64::INFINITY, f64::min);
            th = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        a += tl;
        b += th;
    }
    (a, b)
}

fn pow_interval(lo: f64, hi: f64, e: i32) -> (f64, f64) {
    let (a, b) = (lo.powi(e), hi.powi(e));
    if e % 2 == 0 && lo < 0.0 && hi > 0.0 {
        (0.0, a.max(b))
    } else {
        (a.min(b), a.max(b))
    }
}

/// Box containing `{x0 y : y in [lo, hi]}`.
pub fn image_bbox(g: &CarnotGroup, x0: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    image_bbox_padded(g, x0, lo, hi, true)
}

fn image_bbox_padded(g: &CarnotGroup, x0: &[f64], lo: &[f64], hi: &[f64], padded: bool) -> (Vec<f64>, Vec<f64>) {
    let tr = g.left_translation_f64(x0);
    let mut out_lo = Vec::with_capacity(tr.len());
    let mut out_hi = Vec::with_capacity(tr.len());
    for p in &tr {
        let (a, b) = poly_range(p, lo, hi);
        // widen by a few ulps so rounding never excludes a boundary point
        let pad = if padded { 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1e-300) } else { 0.0 };
        out_lo.push(a - pad);
        out_hi.push(b + pad);
    }
    (out_lo, out_hi)
}

/// Bounded region given by a membership predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    GaugeBall {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// The half of a box where coordinate `axis` (1-based) is at least its midpoint.
    Halfbox {
        lo: Vec<f64>,
        hi: Vec<f64>,
        axis: usize,
    },
    Difference {
        outer: Box<Domain>,
        inner: Box<Domain>,
    },
    /// `{x : delta_{1/r}(base^{-1} x) in shape}`.
    Scaled {
        base: Vec<f64>,
        r: f64,
        shape: Box<Domain>,
    },
}

impl Domain {
    pub fn unit_ball(n: usize) -> Domain {
        Domain::GaugeBall {
            center: vec![0.0; n],
            radius: 1.0,
        }
    }

    pub fn cube(n: usize, h: f64) -> Domain {
        Domain::Box {
            lo: vec![-h; n],
            hi: vec![h; n],
        }
    }

    /// Parse a JSON spec, a path to one, or the shorthands `ball`, `ball:<r>`, `cube:<h>`.
    pub fn parse(text: &str, n: usize) -> Result<Domain> {
        let t = text.trim();
        let dom = if t.starts_with('{') {
            serde_json::from_str(t)?
        } else if t == "ball" {
            Domain::unit_ball(n)
        } else if let Some(r) = t.strip_prefix("ball:") {
            Domain::GaugeBall {
                center: vec![0.0; n],
                radius: r.parse().map_err(|e| Error::Parse(format!("domain `{t}`: {e}")))?,
            }
        } else if let Some(h) = t.strip_prefix("cube:") {
            Domain::cube(n, h.parse().map_err(|e| Error::Parse(format!("domain `{t}`: {e}")))?)
        } else {
            let body = std::fs::read_to_string(t)
                .map_err(|e| Error::Parse(format!("domain `{t}` is neither a built-in nor a readable file: {e}")))?;
            serde_json::from_str(&body)?
        };
        dom.check(n)?;
        Ok(dom)
    }

    pub fn check(&self, n: usize) -> Result<()> {
        match self {
            Domain::GaugeBall { center, radius } => {
                Error::check_dim(n, center.len())?;
                if !(*radius > 0.0) {
                    return Err(Error::NonPositiveScale(*radius));
                }
            }
            Domain::Box { lo, hi } => {
                Error::check_dim(n, lo.len())?;
                Error::check_dim(n, hi.len())?;
            }
            Domain::Halfbox { lo, hi, axis } => {
                Error::check_dim(n, lo.len())?;
                Error::check_dim(n, hi.len())?;
                if *axis == 0 || *axis > n {
                    return Err(Error::Parse(format!("halfbox axis {axis} out of range 1..={n}")));
                }
            }
            Domain::Difference { outer, inner } => {
                outer.check(n)?;
                inner.check(n)?;
            }
            Domain::Scaled { base, r, shape } => {
                Error::check_dim(n, base.len())?;
                if !(*r > 0.0) {
                    return Err(Error::NonPositiveScale(*r));
                }
                shape.check(n)?;
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], m: &HomDistance) -> bool {
        self.member(x, m, false)
    }

    /// Membership in the closure (boundary included).
    pub fn contains_closed(&self, x: &[f64], m: &HomDistance) -> bool {
        self.member(x, m, true)
    }

    fn member(&self, x: &[f64], m: &HomDistance, closed: bool) -> bool {
        let within = |v: f64, a: f64, b: f64| if closed { a <= v && v <= b } else { a < v && v < b };
        match self {
            Domain::GaugeBall { center, radius } => {
                let mut buf = vec![0.0; x.len()];
                let d = m.distance_with(center, x, &mut buf);
                if closed {
                    d <= *radius
                } else {
                    d < *radius
                }
            }
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(&v, (&a, &b))| within(v, a, b)),
            Domain::Halfbox { lo, hi, axis } => {
                let a = axis - 1;
                let mid = 0.5 * (lo[a] + hi[a]);
                x.iter().zip(lo.iter().zip(hi)).all(|(&v, (&a, &b))| within(v, a, b)) && x[a] >= mid
            }
            Domain::Difference { outer, inner } => {
                outer.member(x, m, closed) && !inner.member(x, m, !closed)
            }
            Domain::Scaled { base, r, shape } => {
                let g = m.group();
                let mut y = vec![0.0; x.len()];
                g.between(base, x, &mut y);
                g.dilate_in_place(1.0 / r, &mut y);
                shape.member(&y, m, closed)
            }
        }
    }

    pub fn bbox(&self, m: &HomDistance) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::GaugeBall { center, radius } => m.ball_bbox(center, *radius),
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Halfbox { lo, hi, axis } => {
                let mut lo = lo.clone();
                lo[axis - 1] = 0.5 * (lo[axis - 1] + hi[axis - 1]);
                (lo, hi.clone())
            }
            Domain::Difference { outer, .. } => outer.bbox(m),
            Domain::Scaled { base, r, shape } => {
                let g = m.group();
                let (mut lo, mut hi) = shape.bbox(m);
                for ((a, b), &d) in lo.iter_mut().zip(hi.iter_mut()).zip(g.degrees()) {
                    let s = r.powi(d as i32);
                    *a *= s;
                    *b *= s;
                }
                image_bbox(g, base, &lo, &hi)
            }
        }
    }

    /// Like [`Domain::bbox`] without the rounding pad, so grid vertices land on the boundary.
    pub fn closure_bbox(&self, m: &HomDistance) -> (Vec<f64>, Vec<f64>) {
        let g = m.group();
        match self {
            Domain::GaugeBall { center, radius } => {
                let half = m.unit_box(*radius);
                let lo: Vec<f64> = half.iter().map(|h| -h).collect();
                image_bbox_padded(g, center, &lo, &half, false)
            }
            Domain::Difference { outer, .. } => outer.closure_bbox(m),
            Domain::Scaled { base, r, shape } => {
                let (mut lo, mut hi) = shape.closure_bbox(m);
                for ((a, b), &d) in lo.iter_mut().zip(hi.iter_mut()).zip(g.degrees()) {
                    let s = r.powi(d as i32);
                    *a *= s;
                    *b *= s;
                }
                image_bbox_padded(g, base, &lo, &hi, false)
            }
            _ => self.bbox(m),
        }
    }

    /// Closed-form Lebesgue measure where available.
    pub fn analytic_volume(&self, m: &HomDistance) -> Option<f64> {
        let q = m.group().homogeneous_dimension() as i32;
        match self {
            Domain::GaugeBall { radius, .. } => m.unit_ball_volume().map(|v| v * radius.powi(q)),
            Domain::Box { lo, hi } => Some(lo.iter().zip(hi).map(|(a, b)| (b - a).max(0.0)).product()),
            Domain::Halfbox { lo, hi, .. } => Some(0.5 * lo.iter().zip(hi).map(|(a, b)| (b - a).max(0.0)).product::<f64>()),
            Domain::Difference { outer, inner } => {
                let (olo, ohi) = outer.bbox(m);
                let (ilo, ihi) = inner.bbox(m);
                let inside = matches!(**outer, Domain::Box { .. })
                    && ilo.iter().zip(&olo).all(|(i, o)| i >= o)
                    && ihi.iter().zip(&ohi).all(|(i, o)| i <= o);
                if inside {
                    Some(outer.analytic_volume(m)? - inner.analytic_volume(m)?)
                } else {
                    None
                }
            }
            Domain::Scaled { r, shape, .. } => shape.analytic_volume(m).map(|v| v * r.powi(q)),
        }
    }

    /// Diameter estimate from a vertex grid on the bounding box, restricted to the closure.
    pub fn diameter(&self, m: &HomDistance) -> f64 {
        let n = m.group().dim();
        let per_axis: usize = match n {
            0..=3 => 9,
            4 => 7,
            _ => 3,
        };
        let (lo, hi) = self.closure_bbox(m);
        let total = per_axis.pow(n as u32);
        let mut pts = Vec::new();
        let mut all = Vec::new();
        for lin in 0..total {
            let mut rem = lin;
            let p: Vec<f64> = (0..n)
                .map(|i| {
                    let c = rem % per_axis;
                    rem /= per_axis;
                    lo[i] + (hi[i] - lo[i]) * c as f64 / (per_axis - 1) as f64
                })
                .collect();
            if self.contains_closed(&p, m) {
                pts.push(p.clone());
            }
            all.push(p);
        }
        if pts.len() < 2 {
            pts = all;
        }
        let best = pts
            .par_iter()
            .enumerate()
            .map(|(a, x)| {
                let mut buf = vec![0.0; n];
                pts[a + 1..]
                    .iter()
                    .map(|y| m.distance_with(x, y, &mut buf))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        best
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

const MC_CHUNK: usize = 1 << 14;

/// Lebesgue measure of `B(0, r)` by uniform sampling of its bounding box.
pub fn ball_measure(m: &HomDistance, r: f64, samples: usize, seed: u64) -> Result<Estimate> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveScale(r));
    }
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    let half = m.unit_box(r);
    let n = half.len();
    let vol: f64 = half.iter().map(|h| 2.0 * h).product();
    let chunks = samples.div_ceil(MC_CHUNK);
    let key = chunk_seed(seed, &[r]);
    let hits: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut x = vec![0.0; n];
            let mut hit = 0u64;
            for _ in 0..count {
                for (v, h) in x.iter_mut().zip(&half) {
                    *v = rng.gen_range(-*h..*h);
                }
                if m.norm(&x) < r {
                    hit += 1;
                }
            }
            hit as f64
        })
        .collect();
    let frac = sum_fixed(&hits) / samples as f64;
    Ok(Estimate {
        value: vol * frac,
        stderr: vol * (frac * (1.0 - frac) / samples as f64).sqrt(),
    })
}

/// Finite sample plan of base points and radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub points: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessReport {
    pub a_est: f64,
    pub worst_x0: Vec<f64>,
    pub worst_r: f64,
    pub pairs: usize,
}

/// `A_est = min |Omega(x0, r)| / r^Q` over the plan.
pub fn thickness_estimate(
    omega: &Domain,
    m: &HomDistance,
    plan: &SamplePlan,
    scheme: &QuadScheme,
) -> Result<ThicknessReport> {
    if plan.points.is_empty() || plan.radii.is_empty() {
        return Err(Error::NoSamples);
    }
    let q = m.group().homogeneous_dimension() as i32;
    let pairs: Vec<(&Vec<f64>, f64)> = plan
        .points
        .iter()
        .flat_map(|x| plan.radii.iter().map(move |&r| (x, r)))
        .collect();
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(x0, r)| {
            let measure = match build_nodes(omega, m, x0, *r, scheme) {
                Ok(ns) => ns.total_weight,
                Err(Error::EmptyIntersection { .. }) => 0.0,
                Err(e) => return Err(e),
            };
            if measure == 0.0 && omega.contains(x0, m) {
                return Err(Error::QuadratureFailure {
                    x0: x0.to_vec(),
                    r: *r,
                });
            }
            Ok(measure / r.powi(q))
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in ratios.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let (i, a) = best.expect("nonempty plan");
    Ok(ThicknessReport {
        a_est: a,
        worst_x0: pairs[i].0.clone(),
        worst_r: pairs[i].1,
        pairs: pairs.len(),
    })
}

/// `max d(x, z) / (d(x, y) + d(y, z))` over random triples in `[-h, h]^N`.
pub fn quasi_triangle_constant(m: &HomDistance, triples: usize, h: f64, seed: u64) -> f64 {
    let n = m.group().dim();
    let chunks = triples.div_ceil(MC_CHUNK);
    let worst: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(triples - c * MC_CHUNK);
            let mut buf = vec![0.0; n];
            let mut best: f64 = 0.0;
            for _ in 0..count {
                let mut draw = || (0..n).map(|_| rng.gen_range(-h..h)).collect::<Vec<f64>>();
                let (x, y, z) = (draw(), draw(), draw());
                let den = m.distance_with(&x, &y, &mut buf) + m.distance_with(&y, &z, &mut buf);
                if den > 0.0 {
                    best = best.max(m.distance_with(&x, &z, &mut buf) / den);
                }
            }
            best
        })
        .collect();
    worst.into_iter().fold(0.0, f64::max)
}
