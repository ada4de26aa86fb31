//! Zeros of holomorphic functions of the parameter: argument-principle
//! counts on boxes, subdivision, and Newton polishing with exact
//! derivatives.
//!
//! Functions are handed over as [`ScaledJet`]s, i.e. value and derivative
//! times a positive factor `e^{log_scale}`. The factor never changes the
//! phase or the Newton step, so long words cannot overflow.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{FamilySpec, Window};
use crate::potential::{constant_commutator, constant_trace};
use crate::words::Word;

type C = Complex64;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MIN_SIDE_SAMPLES: usize = 8;
const MAX_SIDE_SAMPLES: usize = 1 << 14;
const MAX_ATTEMPTS: u32 = 8;
const NEWTON_ITERS: usize = 100;
const CENTROID_MAX_NODES: usize = 4096;

/// Default cluster threshold, relative to the root box diameter.
pub const CLUSTER_RELATIVE: f64 = 1e-7;

/// `f = value * e^{log_scale}`, `f' = deriv * e^{log_scale}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledJet {
    pub value: C,
    pub deriv: C,
    pub log_scale: f64,
}

impl ScaledJet {
    pub fn new(value: C, deriv: C) -> Self {
        ScaledJet { value, deriv, log_scale: 0.0 }
    }

    /// `|f|`, saturating to infinity.
    pub fn residual(&self) -> f64 {
        let n = self.value.norm();
        if n == 0.0 {
            0.0
        } else {
            (n.ln() + self.log_scale).exp()
        }
    }
}

/// Axis-parallel rectangle `center +- (half_width, half_height)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroBox {
    pub center: C,
    pub half_width: f64,
    pub half_height: f64,
}

impl ZeroBox {
    pub fn new(center: C, half_width: f64, half_height: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_height > 0.0 && half_width.is_finite() && half_height.is_finite()) {
            return Err(Error::InvalidArgument("box must have positive size".into()));
        }
        Ok(ZeroBox { center, half_width, half_height })
    }

    /// `[x0, x1] x [y0, y1]`.
    pub fn from_corners(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        ZeroBox::new(C::new(0.5 * (x0 + x1), 0.5 * (y0 + y1)), 0.5 * (x1 - x0), 0.5 * (y1 - y0))
    }

    /// The window shrunk by `margin` on every side.
    pub fn from_window(w: &Window, margin: f64) -> Result<Self> {
        ZeroBox::new(w.center_c(), 0.5 * w.width - margin, 0.5 * w.height - margin)
    }

    pub fn window(&self) -> Window {
        Window::new(self.center, 2.0 * self.half_width, 2.0 * self.half_height)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.half_width.hypot(self.half_height)
    }

    pub fn contains(&self, z: C) -> bool {
        (z.re - self.center.re).abs() <= self.half_width && (z.im - self.center.im).abs() <= self.half_height
    }

    pub fn scaled(&self, factor: f64) -> ZeroBox {
        ZeroBox { center: self.center, half_width: self.half_width * factor, half_height: self.half_height * factor }
    }

    /// Corners in counter-clockwise order from the lower left.
    fn corners(&self) -> [C; 4] {
        let (c, w, h) = (self.center, self.half_width, self.half_height);
        [c + C::new(-w, -h), c + C::new(w, -h), c + C::new(w, h), c + C::new(-w, h)]
    }

    /// Four children cut at relative positions `fx`, `fy` in `(0, 1)`.
    fn split(&self, fx: f64, fy: f64) -> [ZeroBox; 4] {
        let x0 = self.center.re - self.half_width;
        let x1 = self.center.re + self.half_width;
        let y0 = self.center.im - self.half_height;
        let y1 = self.center.im + self.half_height;
        let xm = x0 + fx * (x1 - x0);
        let ym = y0 + fy * (y1 - y0);
        let mk = |a: f64, b: f64, c: f64, d: f64| ZeroBox {
            center: C::new(0.5 * (a + b), 0.5 * (c + d)),
            half_width: 0.5 * (b - a),
            half_height: 0.5 * (d - c),
        };
        [mk(x0, xm, y0, ym), mk(xm, x1, y0, ym), mk(x0, xm, ym, y1), mk(xm, x1, ym, y1)]
    }
}

/// A located zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroPoint {
    pub re: f64,
    pub im: f64,
    pub mult: u32,
    pub residual: f64,
}

impl ZeroPoint {
    pub fn lambda(&self) -> C {
        C::new(self.re, self.im)
    }
}

/// Zeros with multiplicities, sorted by real then imaginary part.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointCloud {
    pub points: Vec<ZeroPoint>,
}

impl PointCloud {
    pub fn new(mut points: Vec<ZeroPoint>) -> Self {
        points.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        PointCloud { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.points.iter().map(|p| p.mult as u64).sum()
    }

    /// Each zero repeated by its multiplicity.
    pub fn expanded(&self) -> Vec<C> {
        self.points.iter().flat_map(|p| std::iter::repeat_n(p.lambda(), p.mult as usize)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Wrapped phase change from `a` to `b` if it is below `pi/2`.
fn phase_step(a: C, b: C) -> Option<f64> {
    let q = b * a.conj();
    (q.re > 0.0).then(|| q.im.atan2(q.re))
}

/// Phase change of `f` along the segment `a -> b`, or `None` when a sample
/// hits a zero or the phase cannot be resolved within `2^14` steps.
///
/// Starting from 8 pieces, a piece is halved until the wrapped phase step
/// is below `pi/2` and the logarithmic derivative predicts a change of at
/// most `1/2` from either end. The second condition stops a multiple zero
/// just off the segment from aliasing to a small step.
fn segment_phase<F>(f: &F, a: C, b: C) -> Option<f64>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    let at = |s: f64| a + (b - a) * s;
    let sample = |s: f64| -> Option<(C, C)> {
        let j = f(at(s));
        let ok = j.value.re.is_finite() && j.value.im.is_finite() && j.value != C::new(0.0, 0.0);
        let dlog = j.deriv / j.value;
        (ok && dlog.re.is_finite() && dlog.im.is_finite()).then_some((j.value, dlog))
    };
    let min_piece = 1.0 / MAX_SIDE_SAMPLES as f64;
    let len = (b - a).norm();
    let mut total = 0.0;
    for k in 0..MIN_SIDE_SAMPLES {
        let s0 = k as f64 / MIN_SIDE_SAMPLES as f64;
        let s1 = (k + 1) as f64 / MIN_SIDE_SAMPLES as f64;
        let mut stack = vec![(s1, sample(s1)?)];
        let mut left = (s0, sample(s0)?);
        while let Some(right) = stack.last().copied() {
            let (t0, (v0, d0)) = left;
            let (t1, (v1, d1)) = right;
            let h = (t1 - t0) * len;
            let cap = 0.25 / (h * h);
            let step = (d0.norm_sqr() <= cap && d1.norm_sqr() <= cap).then(|| phase_step(v0, v1)).flatten();
            if let Some(step) = step {
                total += step;
                left = right;
                stack.pop();
            } else {
                if t1 - t0 <= min_piece {
                    return None;
                }
                let tm = 0.5 * (t0 + t1);
                stack.push((tm, sample(tm)?));
            }
        }
    }
    Some(total)
}

/// Winding number of `f` around the box boundary, `None` if unresolved.
fn winding<F>(f: &F, bx: &ZeroBox) -> Option<u32>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    let c = bx.corners();
    let mut total = 0.0;
    for k in 0..4 {
        total += segment_phase(f, c[k], c[(k + 1) % 4])?;
    }
    let w = total / TAU;
    let r = w.round();
    ((w - r).abs() < 0.25 && r >= 0.0).then_some(r as u32)
}

fn jiggle_factor(attempt: u32) -> f64 {
    1.0 + 2f64.powi(-(attempt as i32)) * 0.01 * (attempt as f64 * GOLDEN).fract()
}

fn count_with_jiggle<F>(f: &F, bx: &ZeroBox) -> Result<(u32, ZeroBox)>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    for attempt in 0..=MAX_ATTEMPTS {
        let b = if attempt == 0 { *bx } else { bx.scaled(jiggle_factor(attempt)) };
        if let Some(n) = winding(f, &b) {
            return Ok((n, b));
        }
    }
    Err(Error::BoundaryZero { attempts: MAX_ATTEMPTS })
}

/// Number of zeros of `f` inside the box, with multiplicity. When a zero
/// sits on the boundary the box is enlarged slightly and the count refers
/// to the enlarged box.
pub fn count_zeros_box<F>(f: &F, bx: &ZeroBox) -> Result<u32>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    count_with_jiggle(f, bx).map(|(n, _)| n)
}

/// Newton with step `mult * f / f'`; returns the limit if it settles.
fn newton<F>(f: &F, start: C, mult: u32, tol: f64) -> Option<C>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    let mut z = start;
    let mut small = 0;
    for _ in 0..NEWTON_ITERS {
        let j = f(z);
        if j.value == C::new(0.0, 0.0) {
            return Some(z);
        }
        let step = j.value / j.deriv * mult as f64;
        if !(step.re.is_finite() && step.im.is_finite()) {
            return None;
        }
        z -= step;
        let s = step.norm();
        if s <= 16.0 * f64::EPSILON * z.norm().max(1.0) {
            return Some(z);
        }
        if s <= tol {
            small += 1;
            if small >= 3 {
                return Some(z);
            }
        }
    }
    None
}

/// `(1/m) (1/2 pi i) \oint (lambda - z) f'/f` over the circle of radius
/// `rho` about `z`, by the trapezoid rule with doubling until stable. `None`
/// unless the same integral without the factor rounds to `m`.
fn centroid_offset<F>(f: &F, z: C, rho: f64, m: u32) -> Option<C>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    let moments = |k: usize| -> Option<(C, C)> {
        let (mut s0, mut s1) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
        for i in 0..k {
            let u = C::from_polar(rho, TAU * (i as f64 + 0.5) / k as f64);
            let j = f(z + u);
            let dlog = j.deriv / j.value;
            if !(dlog.re.is_finite() && dlog.im.is_finite()) {
                return None;
            }
            s0 += u * dlog;
            s1 += u * u * dlog;
        }
        Some((s0 / k as f64, s1 / k as f64))
    };
    let mut k = 64;
    let mut prev = moments(k)?;
    while k < CENTROID_MAX_NODES {
        k *= 2;
        let next = moments(k)?;
        let settled = (next.0 - prev.0).norm() < 1e-9 && (next.1 - prev.1).norm() < 1e-9 * rho;
        prev = next;
        if settled {
            let (s0, s1) = prev;
            return ((s0.re - m as f64).abs() < 1e-3 && s0.im.abs() < 1e-3).then(|| s1 / m as f64);
        }
    }
    None
}

/// Newton on `f / prod (z - r_k)`.
fn deflated_newton<F>(f: &F, start: C, roots: &[C], tol: f64) -> Option<C>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    let mut z = start;
    let mut small = 0;
    for _ in 0..NEWTON_ITERS {
        let j = f(z);
        if j.value == C::new(0.0, 0.0) {
            return Some(z);
        }
        let dlog = j.deriv / j.value - roots.iter().map(|r| (z - r).inv()).sum::<C>();
        let step = dlog.inv();
        if !(step.re.is_finite() && step.im.is_finite()) {
            return None;
        }
        z -= step;
        let s = step.norm();
        if s <= 16.0 * f64::EPSILON * z.norm().max(1.0) {
            return Some(z);
        }
        if s <= tol {
            small += 1;
            if small >= 3 {
                return Some(z);
            }
        }
    }
    None
}

fn point<F>(f: &F, z: C, mult: u32) -> ZeroPoint
where
    F: Fn(C) -> ScaledJet + Sync,
{
    ZeroPoint { re: z.re, im: z.im, mult, residual: f(z).residual() }
}

struct Locator<'a, F> {
    f: &'a F,
    tol: f64,
    cluster: f64,
}

impl<F> Locator<'_, F>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    /// One point of multiplicity `m` for the `m` zeros of `bx`, if they
    /// form a cluster. The point is their centroid, a contour integral of
    /// `lambda f'/f` over the inscribed circle. The smallest box around it
    /// whose winding can be resolved, starting from the cluster size, must
    /// hold all `m` zeros.
    fn cluster(&self, bx: &ZeroBox, m: u32) -> Option<C> {
        let rho = bx.half_width.min(bx.half_height);
        let c = bx.center + centroid_offset(self.f, bx.center, rho, m)?;
        let mut half = 0.25 * self.cluster;
        while half < 0.25 * rho {
            match winding(self.f, &ZeroBox { center: c, half_width: half, half_height: half }) {
                Some(k) if k == m => return Some(c),
                Some(_) => return None,
                None => half *= 4.0,
            }
        }
        None
    }

    /// All `n` zeros of the box without subdivision: Newton with implicit
    /// deflation from a few starts, then disjoint probe boxes around the
    /// limits whose windings must add up to `n`.
    fn isolate(&self, bx: &ZeroBox, n: u32) -> Option<Vec<ZeroPoint>> {
        let mut found: Vec<C> = Vec::new();
        for attempt in 0..2 * n + 2 {
            if found.len() == n as usize {
                break;
            }
            let a = attempt as f64 * GOLDEN * TAU;
            let r = if attempt == 0 { 0.0 } else { 0.5 };
            let start = bx.center + C::new(r * bx.half_width * a.cos(), r * bx.half_height * a.sin());
            let Some(z) = deflated_newton(self.f, start, &found, self.tol) else { continue };
            if bx.contains(z) && found.iter().all(|w| (z - *w).norm() >= self.cluster) {
                found.push(z);
            }
        }
        let edge = 0.25 * bx.half_width.min(bx.half_height);
        let mut points = Vec::with_capacity(found.len());
        let mut total = 0;
        for (k, &z) in found.iter().enumerate() {
            let gap = found.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, w)| (z - *w).norm()).fold(f64::INFINITY, f64::min);
            let inside = (bx.half_width - (z.re - bx.center.re).abs()).min(bx.half_height - (z.im - bx.center.im).abs());
            let half = (0.25 * gap).min(edge).min(0.5 * inside);
            if !(half >= 0.25 * self.cluster) {
                return None;
            }
            let probe = ZeroBox { center: z, half_width: half, half_height: half };
            let m = winding(self.f, &probe)?;
            match m {
                0 => return None,
                1 => points.push(point(self.f, z, 1)),
                _ => points.push(point(self.f, self.cluster(&probe, m)?, m)),
            }
            total += m;
        }
        (total == n).then_some(points)
    }

    fn run(&self, bx: ZeroBox, n: u32, out: &mut Vec<ZeroPoint>, depth: u32) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if n == 1 {
            if let Some(z) = newton(self.f, bx.center, 1, self.tol) {
                if bx.contains(z) {
                    out.push(point(self.f, z, 1));
                    return Ok(());
                }
            }
        }
        if n >= 2 {
            if let Some(points) = self.isolate(&bx, n) {
                out.extend(points);
                return Ok(());
            }
            if let Some(z) = self.cluster(&bx, n) {
                out.push(point(self.f, z, n));
                return Ok(());
            }
        }
        if bx.diameter() < self.cluster {
            let z = newton(self.f, bx.center, n, self.tol).filter(|z| bx.scaled(2.0).contains(*z)).unwrap_or(bx.center);
            out.push(point(self.f, z, n));
            return Ok(());
        }
        for attempt in 0..MAX_ATTEMPTS {
            let jitter = |s: f64| 0.5 + 0.04 * ((attempt as f64 + s) * GOLDEN + 0.3 * depth as f64).fract() - 0.02;
            let kids = bx.split(jitter(0.37), jitter(0.71));
            let counts: Option<Vec<u32>> = kids.iter().map(|k| winding(self.f, k)).collect();
            match counts {
                Some(c) if c.iter().sum::<u32>() == n => {
                    for (k, m) in kids.iter().zip(c) {
                        self.run(*k, m, out, depth + 1)?;
                    }
                    return Ok(());
                }
                _ => continue,
            }
        }
        Err(Error::BoundaryZero { attempts: MAX_ATTEMPTS })
    }
}

/// Zeros of `f` in the box with multiplicity. Boxes are split until each
/// holds one zero, which Newton then polishes, or until they are smaller
/// than `1e-7` times the box diameter, in which case they are reported as
/// one point carrying the box's winding number. A box holding `n > 1`
/// zeros first tries Newton with step `n f/f'`; if a box of that cluster
/// size around the limit winds `n` times, the limit is the cluster.
pub fn locate_zeros<F>(f: &F, bx: &ZeroBox, tol: f64) -> Result<PointCloud>
where
    F: Fn(C) -> ScaledJet + Sync,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (n, root) = count_with_jiggle(f, bx)?;
    let loc = Locator { f, tol, cluster: CLUSTER_RELATIVE * root.diameter() };
    let mut out = Vec::new();
    loc.run(root, n, &mut out, 0)?;
    Ok(PointCloud::new(out))
}

/// `lambda -> tr^2(rho_lambda(w)) - t` as a scaled jet.
pub fn trace_function<'a>(spec: &'a FamilySpec, w: &Word, t: C) -> Result<impl Fn(C) -> ScaledJet + Sync + 'a> {
    spec.evaluate_jet(w, C::new(0.0, 0.0))?;
    let w = w.clone();
    Ok(move |l: C| {
        let j = spec.evaluate_jet(&w, l).expect("word checked against the family");
        let ls = j.log_scale;
        let (value, deriv) = if t == C::new(4.0, 0.0) {
            let d = j.discriminant_stored();
            (d.value, d.d_dlambda)
        } else {
            let tr = j.trace_stored();
            (tr.value * tr.value - t * (-2.0 * ls).exp(), tr.value * tr.d_dlambda * 2.0)
        };
        ScaledJet { value, deriv, log_scale: 2.0 * ls }
    })
}

/// `lambda -> tr[rho_lambda(w), rho_lambda(h)] - 2` as a scaled jet.
pub fn commutator_function<'a>(
    spec: &'a FamilySpec,
    w: &Word,
    h: &Word,
) -> Result<impl Fn(C) -> ScaledJet + Sync + 'a> {
    spec.evaluate_jet(w, C::new(0.0, 0.0))?;
    spec.evaluate_jet(h, C::new(0.0, 0.0))?;
    let (w, h) = (w.clone(), h.clone());
    Ok(move |l: C| {
        let a = spec.evaluate_jet(&w, l).expect("word checked against the family");
        let b = spec.evaluate_jet(&h, l).expect("word checked against the family");
        let c = a.commutator_minus_two_stored(&b);
        ScaledJet { value: c.value, deriv: c.d_dlambda, log_scale: 2.0 * (a.log_scale + b.log_scale) }
    })
}

/// Parameters in the box where `tr^2(rho_lambda(w)) = t`. A word with
/// constant squared trace gives an empty cloud.
pub fn trace_locus(spec: &FamilySpec, w: &Word, t: C, bx: &ZeroBox, tol: f64) -> Result<PointCloud> {
    let f = trace_function(spec, w, t)?;
    if constant_trace(spec, w, &bx.window()).is_some() {
        return Ok(PointCloud::default());
    }
    locate_zeros(&f, bx, tol)
}

/// Parameters in the box where `rho_lambda(w)` and `rho_lambda(h)` share a
/// fixed point. Empty when the commutator trace is constant.
pub fn collision_locus(spec: &FamilySpec, w: &Word, h: &Word, bx: &ZeroBox, tol: f64) -> Result<PointCloud> {
    let f = commutator_function(spec, w, h)?;
    if constant_commutator(spec, w, h, &bx.window()).is_some() {
        return Ok(PointCloud::default());
    }
    locate_zeros(&f, bx, tol)
}
