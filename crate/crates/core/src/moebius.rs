//! Numeric core for PSL(2,C): products, norms, traces, classification and
//! fixed points of Moebius maps.
//!
//! A [`MoebiusMap`] stores a matrix `[[a, b], [c, d]]` together with a
//! natural-log scale `s` so that the represented SL(2,C) element is
//! `e^s * [[a, b], [c, d]]`. Entries are kept near unit magnitude by exact
//! power-of-two rescaling, which lets words of length 10^4 and more be
//! multiplied without overflow. Norms and traces are reported in log space.

use num_complex::Complex64;
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

type C = Complex64;

/// Default classification tolerance, relative to `max(1, |tr^2|)`.
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-9;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Scale factor `2^-e` and exponent `e` bringing `m` into `[0.5, 1)`.
#[inline]
fn pow2_normalizer(m: f64) -> (f64, i32) {
    debug_assert!(m > 0.0 && m.is_finite());
    let mut e = m.log2().floor() as i32 + 1;
    let mut f = 2f64.powi(-e);
    // log2 can be off by one ulp near powers of two
    if m * f >= 1.0 {
        e += 1;
        f = 2f64.powi(-e);
    } else if m * f < 0.5 {
        e -= 1;
        f = 2f64.powi(-e);
    }
    (f, e)
}

#[inline]
fn max_abs(m: &[C; 4]) -> f64 {
    m.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max)
}

/// Product of two raw 2x2 matrices in row-major order.
#[inline]
pub(crate) fn mat_mul(x: &[C; 4], y: &[C; 4]) -> [C; 4] {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

#[inline]
pub(crate) fn adjugate(x: &[C; 4]) -> [C; 4] {
    [x[3], -x[1], -x[2], x[0]]
}

/// `e^{log_mag} * e^{i arg}`.
#[inline]
fn polar_from_log(log_mag: f64, arg: f64) -> C {
    C::from_polar(log_mag.exp(), arg)
}

/// An element of PSL(2,C) with an external log scale.
#[derive(Clone, Copy, Debug)]
pub struct MoebiusMap {
    m: [C; 4],
    log_scale: f64,
}

/// A point of the Riemann sphere as a unit vector `(x, y)` in C^2; the
/// affine coordinate is `x / y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannPoint {
    x: C,
    y: C,
}

/// Conjugacy type of a Moebius map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapType {
    Identity,
    Parabolic,
    Elliptic,
    Loxodromic,
}

impl MapType {
    pub fn code(self) -> u8 {
        match self {
            MapType::Identity => 0,
            MapType::Parabolic => 1,
            MapType::Elliptic => 2,
            MapType::Loxodromic => 3,
        }
    }
}

impl RiemannPoint {
    /// Builds a point from a nonzero homogeneous pair.
    pub fn new(x: C, y: C) -> Result<Self> {
        let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            // rescale before giving up: the pair may be out of range
            let s = x.norm().max(y.norm());
            if s > 0.0 && s.is_finite() {
                return Self::new(x / s, y / s);
            }
            return Err(Error::InvalidArgument("zero homogeneous pair".into()));
        }
        Ok(RiemannPoint { x: x / n, y: y / n })
    }

    pub fn from_complex(z: C) -> Self {
        Self::new(z, ONE).expect("finite affine point")
    }

    pub fn infinity() -> Self {
        RiemannPoint { x: ONE, y: ZERO }
    }

    pub fn zero() -> Self {
        RiemannPoint { x: ZERO, y: ONE }
    }

    pub fn lift(&self) -> (C, C) {
        (self.x, self.y)
    }

    /// Affine coordinate, or `None` at infinity.
    pub fn to_complex(&self) -> Option<C> {
        if self.y == ZERO {
            None
        } else {
            Some(self.x / self.y)
        }
    }

    /// Chordal distance `2|z-w| / sqrt((1+|z|^2)(1+|w|^2))`, range `[0, 2]`.
    pub fn chordal_distance(&self, other: &RiemannPoint) -> f64 {
        (2.0 * (self.x * other.y - other.x * self.y).norm()).min(2.0)
    }

    pub fn projective_eq(&self, other: &RiemannPoint, tol: f64) -> bool {
        self.chordal_distance(other) <= tol
    }
}

impl MoebiusMap {
    fn from_parts(m: [C; 4], log_scale: f64) -> Self {
        let mut out = MoebiusMap { m, log_scale };
        out.renormalize();
        out
    }

    /// Builds the map of a matrix with nonzero determinant, rescaling it to
    /// determinant one.
    pub fn from_matrix(a: C, b: C, c: C, d: C) -> Result<Self> {
        let mut m = [a, b, c, d];
        let mx = max_abs(&m);
        if !(mx > 0.0) || !mx.is_finite() {
            return Err(Error::Singular);
        }
        let (f, _) = pow2_normalizer(mx);
        for z in &mut m {
            *z *= f;
        }
        let det = m[0] * m[3] - m[1] * m[2];
        if det.norm() <= 1e-300 || det.norm() <= f64::EPSILON * 1e-4 * max_abs(&m).powi(2) {
            return Err(Error::Singular);
        }
        // the input is only defined up to a scalar: e^s * m has det 1 iff
        // e^{2s} det(m) = 1 once the phase of det is folded into m
        let phase = C::from_polar(1.0, -det.arg() / 2.0);
        for z in &mut m {
            *z *= phase;
        }
        let log_scale = -0.5 * det.norm().ln();
        Ok(Self::from_parts(m, log_scale))
    }

    /// Real-entry convenience constructor.
    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::from_matrix(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        MoebiusMap { m: [ONE, ZERO, ZERO, ONE], log_scale: 0.0 }
    }

    /// `diag(k, 1/k)`, i.e. `z -> k^2 z`.
    pub fn diagonal(k: C) -> Result<Self> {
        Self::from_matrix(k, ZERO, ZERO, k.inv())
    }

    /// Wraps a matrix already known to have (scaled) determinant one.
    pub(crate) fn from_sl2_raw(m: [C; 4], log_scale: f64) -> Self {
        Self::from_parts(m, log_scale)
    }

    /// Restores `max |entry| in [0.5, 1)` by an exact power-of-two rescale.
    fn renormalize(&mut self) {
        let mx = max_abs(&self.m);
        if mx > 0.0 && mx.is_finite() {
            let (f, e) = pow2_normalizer(mx);
            if e != 0 {
                for z in &mut self.m {
                    *z *= f;
                }
                self.log_scale += e as f64 * LN_2;
            }
        }
    }

    /// Stored (unit-magnitude) entries; the represented matrix is
    /// `exp(log_scale) * stored`.
    pub fn stored(&self) -> [C; 4] {
        self.m
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Entries of the determinant-one representative. Overflows to infinity
    /// when `log_scale` exceeds the floating-point range.
    pub fn entries(&self) -> [C; 4] {
        let s = self.log_scale.exp();
        [self.m[0] * s, self.m[1] * s, self.m[2] * s, self.m[3] * s]
    }

    /// `|det(entries) - 1|`, only meaningful while the entries are representable.
    pub fn det_defect(&self) -> f64 {
        let m = &self.m;
        let det = m[0] * m[3] - m[1] * m[2];
        (det * (2.0 * self.log_scale).exp() - 1.0).norm()
    }

    /// Backward determinant error: `|det(stored) - e^{-2s}|` relative to the
    /// size of the two products it is formed from.
    pub fn det_backward_error(&self) -> f64 {
        let m = &self.m;
        let det = m[0] * m[3] - m[1] * m[2];
        let target = (-2.0 * self.log_scale).exp();
        let size = (m[0].norm() * m[3].norm() + m[1].norm() * m[2].norm()).max(target);
        (det - target).norm() / size
    }

    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        MoebiusMap::from_parts(mat_mul(&self.m, &other.m), self.log_scale + other.log_scale)
    }

    pub fn inverse(&self) -> MoebiusMap {
        MoebiusMap { m: adjugate(&self.m), log_scale: self.log_scale }
    }

    pub fn neg(&self) -> MoebiusMap {
        MoebiusMap { m: self.m.map(|z| -z), log_scale: self.log_scale }
    }

    /// Relative distance between the two maps in PSL(2,C): the smaller of
    /// `|M - N|_F` and `|M + N|_F`, divided by `max(|M|_F, |N|_F)`.
    pub fn projective_distance(&self, other: &MoebiusMap) -> f64 {
        let r = (other.log_scale - self.log_scale).exp();
        let (x, y, r) = if r.is_finite() && r <= 1.0 {
            (&self.m, &other.m, r)
        } else {
            // swap roles so the ratio stays <= 1
            (&other.m, &self.m, (self.log_scale - other.log_scale).exp())
        };
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ny = r * y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let dist = |sign: f64| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q * (sign * r)).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        dist(1.0).min(dist(-1.0)) / nx.max(ny)
    }

    pub fn approx_eq(&self, other: &MoebiusMap, tol: f64) -> bool {
        self.projective_distance(other) <= tol
    }

    /// Image of a point, renormalized to a unit lift.
    pub fn apply(&self, p: &RiemannPoint) -> RiemannPoint {
        self.apply_with_growth(p).0
    }

    /// Image of `p` together with `log(|M Z| / |Z|)` for the determinant-one
    /// representative and a unit lift `Z` of `p`.
    pub fn apply_with_growth(&self, p: &RiemannPoint) -> (RiemannPoint, f64) {
        let m = &self.m;
        let x = m[0] * p.x + m[1] * p.y;
        let y = m[2] * p.x + m[3] * p.y;
        let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
        (RiemannPoint { x: x / n, y: y / n }, self.log_scale + n.ln())
    }

    /// `(a + d)^2` of the determinant-one representative.
    pub fn tr_squared(&self) -> C {
        let t = self.m[0] + self.m[3];
        if t == ZERO {
            return ZERO;
        }
        polar_from_log(2.0 * (t.norm().ln() + self.log_scale), 2.0 * t.arg())
    }

    /// `log |tr|` of the determinant-one representative.
    pub fn log_abs_trace(&self) -> f64 {
        (self.m[0] + self.m[3]).norm().ln() + self.log_scale
    }

    /// `tr^2 - 4`, evaluated as `(a - d)^2 + 4bc` to stay accurate near the
    /// parabolic locus.
    pub fn tr_squared_minus_four(&self) -> C {
        let w = self.disc_stored();
        if w == ZERO {
            return ZERO;
        }
        polar_from_log(w.norm().ln() + 2.0 * self.log_scale, w.arg())
    }

    #[inline]
    fn disc_stored(&self) -> C {
        let m = &self.m;
        let amd = m[0] - m[3];
        amd * amd + 4.0 * m[1] * m[2]
    }

    /// `log |tr^2 - t|`, never overflowing; `-inf` at exact zeros.
    pub fn log_abs_tr_squared_minus(&self, t: C) -> f64 {
        let w = if t == C::new(4.0, 0.0) {
            self.disc_stored()
        } else {
            let tr = self.m[0] + self.m[3];
            tr * tr - t * (-2.0 * self.log_scale).exp()
        };
        w.norm().ln() + 2.0 * self.log_scale
    }

    /// Log of the operator norm (largest singular value) of the
    /// determinant-one representative. Always `>= 0`.
    pub fn op_norm_log(&self) -> f64 {
        let n: f64 = self.m.iter().map(|z| z.norm_sqr()).sum();
        let det = (-2.0 * self.log_scale).exp();
        let disc = (n * n - 4.0 * det * det).max(0.0);
        let sigma_sq = 0.5 * (n + disc.sqrt());
        (self.log_scale + 0.5 * sigma_sq.ln()).max(0.0)
    }

    /// Log of the Frobenius norm `(|a|^2+|b|^2+|c|^2+|d|^2)^{1/2}`.
    pub fn frobenius_log(&self) -> f64 {
        let n: f64 = self.m.iter().map(|z| z.norm_sqr()).sum();
        self.log_scale + 0.5 * n.ln()
    }

    /// Whether the map is within `tol` of `+I` or `-I` entrywise.
    pub fn is_identity(&self, tol: f64) -> bool {
        if self.log_scale > 2.0 {
            return false;
        }
        let e = self.entries();
        [1.0, -1.0].iter().any(|&s| {
            (e[0] * s - 1.0).norm() <= tol
                && e[1].norm() <= tol
                && e[2].norm() <= tol
                && (e[3] * s - 1.0).norm() <= tol
        })
    }

    /// Conjugacy type with a tolerance relative to `max(1, |tr^2|)`.
    pub fn classify(&self, tol: f64) -> MapType {
        debug_assert!(tol > 0.0);
        if self.is_identity(tol) {
            return MapType::Identity;
        }
        let tr2 = self.tr_squared();
        let scale = tr2.norm().max(1.0);
        if self.tr_squared_minus_four().norm() <= tol * scale {
            return MapType::Parabolic;
        }
        if tr2.im.abs() <= tol * scale && tr2.re >= -tol * scale && tr2.re < 4.0 {
            return MapType::Elliptic;
        }
        MapType::Loxodromic
    }

    /// The two fixed points; a parabolic map returns its double point twice.
    ///
    /// Roots of `c z^2 + (d - a) z - b = 0`, solved in homogeneous
    /// coordinates as `[q : c]` and `[-b : q]` with `q` on the
    /// non-cancelling branch, so `c = 0` needs no special case.
    pub fn fixed_points(&self) -> Result<(RiemannPoint, RiemannPoint)> {
        if self.is_identity(DEFAULT_CLASSIFY_TOL) {
            return Err(Error::IdentityMap);
        }
        let [a, b, c, d] = self.m;
        let bh = d - a;
        let sq = (bh * bh + 4.0 * b * c).sqrt();
        let sgn = if (bh.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
        let q = -(bh + sq * sgn) * 0.5;
        let scale = max_abs(&self.m);
        if q.norm() <= 1e-14 * scale {
            // a = d and bc = 0: a parabolic map with its fixed point at 0 or infinity
            let p = if c.norm() > b.norm() {
                RiemannPoint::zero()
            } else {
                RiemannPoint::infinity()
            };
            return Ok((p, p));
        }
        let p1 = RiemannPoint::new(q, c)?;
        let p2 = RiemannPoint::new(-b, q)?;
        Ok((p1, p2))
    }

    /// Chordal distance between the two fixed points.
    pub fn delta(&self) -> Result<f64> {
        let (p, q) = self.fixed_points()?;
        Ok(p.chordal_distance(&q))
    }

    /// `tr[M, N] - 2`, computed as `tr((MN - NM)(NM)^{-1})` so that a common
    /// fixed point gives an exact zero.
    pub fn commutator_trace_minus_two(&self, other: &MoebiusMap) -> C {
        let w = commutator_minus_two_stored(&self.m, &other.m);
        if w == ZERO {
            return ZERO;
        }
        polar_from_log(w.norm().ln() + 2.0 * (self.log_scale + other.log_scale), w.arg())
    }

    /// `log |tr[M, N] - 2|`, never overflowing.
    pub fn log_abs_commutator_trace_minus_two(&self, other: &MoebiusMap) -> f64 {
        let w = commutator_minus_two_stored(&self.m, &other.m);
        w.norm().ln() + 2.0 * (self.log_scale + other.log_scale)
    }

    pub fn commutator_trace(&self, other: &MoebiusMap) -> C {
        self.commutator_trace_minus_two(other) + 2.0
    }

    /// Average of `log |M z|` over the sphere for the normalized spherical
    /// area, via the KAK reduction to `diag(sigma, 1/sigma)`.
    pub fn integrated_log_norm(&self) -> f64 {
        integrated_log_norm_of_sigma(self.op_norm_log())
    }
}

/// `log` of `||M|| / max(1, sqrt|tr^2 - 4| / delta)`, the quantity bounded
/// by the norm, trace and fixed point comparison. Fails on the identity.
pub fn norm_trace_log_ratio(m: &MoebiusMap) -> Result<f64> {
    let delta = m.delta()?;
    let spread = 0.5 * m.log_abs_tr_squared_minus(C::new(4.0, 0.0)) - delta.ln();
    Ok(m.op_norm_log() - spread.max(0.0))
}

#[inline]
pub(crate) fn commutator_minus_two_stored(x: &[C; 4], y: &[C; 4]) -> C {
    let xy = mat_mul(x, y);
    let yx = mat_mul(y, x);
    let diff = [xy[0] - yx[0], xy[1] - yx[1], xy[2] - yx[2], xy[3] - yx[3]];
    let adj = adjugate(&yx);
    diff[0] * adj[0] + diff[1] * adj[2] + diff[2] * adj[1] + diff[3] * adj[3]
}

/// `log sigma + (1/2) * int_0^1 log(u + eps (1 - u)) du` with
/// `eps = sigma^{-4}`; under `u = v^2` the integrand is smooth at 0.
pub fn integrated_log_norm_of_sigma(log_sigma: f64) -> f64 {
    if log_sigma <= 0.0 {
        return 0.0;
    }
    let eps = (-4.0 * log_sigma).exp();
    let f = |v: f64| {
        let u = v * v;
        2.0 * v * (u + eps * (1.0 - u)).ln()
    };
    log_sigma + 0.5 * adaptive_simpson(&f, 0.0, 1.0, 1e-11, 50)
}

/// Adaptive Simpson quadrature with a recursion depth cap.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}
