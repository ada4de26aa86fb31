//! Holomorphic families `lambda -> rho_lambda` given by 2x2 matrices of
//! polynomials in one complex parameter.
//!
//! Word order: the word `"ab"` evaluates to `rho(a) * rho(b)`. A walk
//! `l_n = g_n ... g_1` therefore grows by prepending letters.

use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moebius::{adjugate, mat_mul, MoebiusMap, RiemannPoint};
use crate::words::Word;

type C = Complex64;

/// Letters multiplied between two renormalizations of a running product.
const RENORM_EVERY: usize = 8;

/// `e` with `x = m 2^e`, `1 <= m < 2`, for finite positive `x`.
fn binary_exponent(x: f64) -> i32 {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        x.log2().floor() as i32
    } else {
        biased - 1023
    }
}

/// Polynomial with complex coefficients in ascending degree.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyC {
    coeffs: Vec<C>,
}

impl PolyC {
    pub fn new(mut coeffs: Vec<C>) -> Self {
        while coeffs.last() == Some(&C::new(0.0, 0.0)) {
            coeffs.pop();
        }
        PolyC { coeffs }
    }

    pub fn constant(c: C) -> Self {
        PolyC::new(vec![c])
    }

    pub fn zero() -> Self {
        PolyC { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, z: C) -> C {
        self.coeffs.iter().rev().fold(C::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and derivative by Horner's scheme on dual numbers.
    pub fn eval_jet(&self, z: C) -> Jet1 {
        let zj = Jet1::variable(z);
        self.coeffs.iter().rev().fold(Jet1::constant(C::new(0.0, 0.0)), |acc, &c| acc * zj + Jet1::constant(c))
    }

    pub fn mul(&self, other: &PolyC) -> PolyC {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return PolyC::zero();
        }
        let mut out = vec![C::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        PolyC::new(out)
    }

    pub fn sub(&self, other: &PolyC) -> PolyC {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |p: &PolyC, i: usize| p.coeffs.get(i).copied().unwrap_or_default();
        PolyC::new((0..n).map(|i| get(self, i) - get(other, i)).collect())
    }
}

/// First-order jet `(f, df/dlambda)` with dual-number arithmetic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet1 {
    pub value: C,
    pub d_dlambda: C,
}

impl Jet1 {
    pub fn new(value: C, d_dlambda: C) -> Self {
        Jet1 { value, d_dlambda }
    }

    pub fn constant(value: C) -> Self {
        Jet1 { value, d_dlambda: C::new(0.0, 0.0) }
    }

    pub fn variable(value: C) -> Self {
        Jet1 { value, d_dlambda: C::new(1.0, 0.0) }
    }

    pub fn scale(self, s: f64) -> Self {
        Jet1 { value: self.value * s, d_dlambda: self.d_dlambda * s }
    }
}

impl Add for Jet1 {
    type Output = Jet1;
    fn add(self, o: Jet1) -> Jet1 {
        Jet1 { value: self.value + o.value, d_dlambda: self.d_dlambda + o.d_dlambda }
    }
}

impl Sub for Jet1 {
    type Output = Jet1;
    fn sub(self, o: Jet1) -> Jet1 {
        Jet1 { value: self.value - o.value, d_dlambda: self.d_dlambda - o.d_dlambda }
    }
}

impl Mul for Jet1 {
    type Output = Jet1;
    fn mul(self, o: Jet1) -> Jet1 {
        Jet1 {
            value: self.value * o.value,
            d_dlambda: self.d_dlambda * o.value + self.value * o.d_dlambda,
        }
    }
}

impl Mul<C> for Jet1 {
    type Output = Jet1;
    fn mul(self, o: C) -> Jet1 {
        Jet1 { value: self.value * o, d_dlambda: self.d_dlambda * o }
    }
}

impl Neg for Jet1 {
    type Output = Jet1;
    fn neg(self) -> Jet1 {
        Jet1 { value: -self.value, d_dlambda: -self.d_dlambda }
    }
}

/// 2x2 matrix of jets; the represented matrix is `e^{log_scale} * m`.
#[derive(Clone, Copy, Debug)]
pub struct JetMatrix {
    pub m: [Jet1; 4],
    pub log_scale: f64,
}

impl JetMatrix {
    fn identity() -> Self {
        let one = Jet1::constant(C::new(1.0, 0.0));
        let zero = Jet1::default();
        JetMatrix { m: [one, zero, zero, one], log_scale: 0.0 }
    }

    fn mul_raw(&self, o: &JetMatrix) -> JetMatrix {
        let (x, y) = (&self.m, &o.m);
        JetMatrix {
            m: [
                x[0] * y[0] + x[1] * y[2],
                x[0] * y[1] + x[1] * y[3],
                x[2] * y[0] + x[3] * y[2],
                x[2] * y[1] + x[3] * y[3],
            ],
            log_scale: self.log_scale + o.log_scale,
        }
    }

    /// Power-of-two rescale keyed on the values; derivatives follow since
    /// the factor does not depend on lambda.
    fn renormalize(&mut self) {
        let mx = self.m.iter().map(|j| j.value.re.abs().max(j.value.im.abs())).fold(0.0, f64::max);
        if mx > 0.0 && mx.is_finite() {
            let e = binary_exponent(mx);
            if e != 0 {
                let f = 2f64.powi(-e);
                for j in &mut self.m {
                    *j = j.scale(f);
                }
                self.log_scale += e as f64 * std::f64::consts::LN_2;
            }
        }
    }

    fn adjugate(&self) -> JetMatrix {
        let m = &self.m;
        JetMatrix { m: [m[3], -m[1], -m[2], m[0]], log_scale: self.log_scale }
    }

    /// Trace jet of the stored matrix (multiply by `e^{log_scale}` for the
    /// determinant-one representative).
    pub fn trace_stored(&self) -> Jet1 {
        self.m[0] + self.m[3]
    }

    /// `(a - d)^2 + 4bc` of the stored matrix; equals `tr^2 - 4` after
    /// multiplying by `e^{2 log_scale}`.
    pub fn discriminant_stored(&self) -> Jet1 {
        let [a, b, c, d] = self.m;
        let amd = a - d;
        amd * amd + (b * c).scale(4.0)
    }

    /// `tr((XY - YX) adj(YX))` of the stored matrices; multiply by
    /// `e^{2(log_scale_X + log_scale_Y)}` for `tr[X, Y] - 2`.
    pub fn commutator_minus_two_stored(&self, other: &JetMatrix) -> Jet1 {
        let xy = self.mul_raw(other);
        let yx = other.mul_raw(self);
        let diff: [Jet1; 4] = std::array::from_fn(|k| xy.m[k] - yx.m[k]);
        let adj = yx.adjugate().m;
        diff[0] * adj[0] + diff[1] * adj[2] + diff[2] * adj[1] + diff[3] * adj[3]
    }

    /// Values as a Moebius map.
    pub fn to_moebius(&self) -> MoebiusMap {
        MoebiusMap::from_sl2_raw(self.m.map(|j| j.value), self.log_scale)
    }
}

/// Parameter window: a rectangle in C.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn new(center: C, width: f64, height: f64) -> Self {
        Window { center: [center.re, center.im], width, height }
    }

    pub fn center_c(&self) -> C {
        C::new(self.center[0], self.center[1])
    }

    /// Deterministic pseudo-random probe points spread over the window.
    pub fn probe(&self, k: usize) -> C {
        const PHI: f64 = 0.618_033_988_749_894_9;
        const PSI: f64 = 0.754_877_666_246_692_7;
        let u = ((k as f64 + 1.0) * PHI + 0.137).fract() - 0.5;
        let v = ((k as f64 + 1.0) * PSI + 0.291).fract() - 0.5;
        self.center_c() + C::new(u * self.width, v * self.height)
    }
}

/// A holomorphic family: named generators mapped to SL(2) matrices of
/// polynomials in the parameter.
#[derive(Clone, Debug)]
pub struct FamilySpec {
    names: Vec<String>,
    generators: Vec<[PolyC; 4]>,
    window: Option<Window>,
}

/// Generator matrices evaluated at one parameter value, with inverses.
#[derive(Clone, Debug)]
pub struct GeneratorTable {
    forward: Vec<[C; 4]>,
    inverse: Vec<[C; 4]>,
    log_scale: Vec<f64>,
}

impl GeneratorTable {
    #[inline]
    fn letter(&self, l: crate::words::Letter) -> (&[C; 4], f64) {
        let g = l.generator as usize;
        let m = if l.inverted { &self.inverse[g] } else { &self.forward[g] };
        (m, self.log_scale[g])
    }

    /// `rho(w)` as a Moebius map.
    pub fn eval(&self, w: &Word) -> MoebiusMap {
        let mut acc = [C::new(1.0, 0.0), C::default(), C::default(), C::new(1.0, 0.0)];
        let mut log_scale = 0.0;
        for (k, &l) in w.letters().iter().enumerate() {
            let (m, s) = self.letter(l);
            acc = mat_mul(&acc, m);
            log_scale += s;
            if (k + 1) % RENORM_EVERY == 0 {
                let t = MoebiusMap::from_sl2_raw(acc, log_scale);
                acc = t.stored();
                log_scale = t.log_scale();
            }
        }
        MoebiusMap::from_sl2_raw(acc, log_scale)
    }

    /// `log(|rho(w) Z| / |Z|)` for a unit lift `Z`, applying letters right to
    /// left to the vector only.
    pub fn vector_growth(&self, w: &Word, z: &RiemannPoint) -> f64 {
        let (mut x, mut y) = z.lift();
        let mut log_scale = 0.0;
        for (k, &l) in w.letters().iter().rev().enumerate() {
            let (m, s) = self.letter(l);
            let nx = m[0] * x + m[1] * y;
            let ny = m[2] * x + m[3] * y;
            x = nx;
            y = ny;
            log_scale += s;
            if (k + 1) % RENORM_EVERY == 0 {
                let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
                x /= n;
                y /= n;
                log_scale += n.ln();
            }
        }
        log_scale + (x.norm_sqr() + y.norm_sqr()).sqrt().ln()
    }
}

impl FamilySpec {
    /// Validates that every generator has determinant identically one.
    pub fn new(names: Vec<String>, generators: Vec<[PolyC; 4]>, window: Option<Window>) -> Result<Self> {
        if names.len() != generators.len() {
            return Err(Error::InvalidFamily("names and matrices differ in length".into()));
        }
        if names.is_empty() {
            return Err(Error::InvalidFamily("no generators".into()));
        }
        if names.len() > u16::MAX as usize {
            return Err(Error::InvalidFamily("too many generators".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains('\'') || n.chars().any(char::is_whitespace) {
                return Err(Error::InvalidFamily(format!("bad generator name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidFamily(format!("duplicate generator `{n}`")));
            }
        }
        for (name, g) in names.iter().zip(&generators) {
            if !is_unit_poly(&g[0].mul(&g[3]).sub(&g[1].mul(&g[2]))) {
                return Err(Error::InvalidFamily(format!(
                    "generator `{name}` does not have determinant 1"
                )));
            }
        }
        Ok(FamilySpec { names, generators, window })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[[PolyC; 4]] {
        &self.generators
    }

    pub fn window(&self) -> Option<Window> {
        self.window
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = Some(window);
        self
    }

    /// True when no entry depends on the parameter.
    pub fn is_constant(&self) -> bool {
        self.generators.iter().flatten().all(|p| p.degree().unwrap_or(0) == 0)
    }

    pub fn parse_word(&self, s: &str) -> Result<Word> {
        Word::parse(s, &self.names)
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        match w.max_generator() {
            Some(g) if g as usize >= self.generators.len() => {
                Err(Error::UnknownGenerator(format!("g{g}")))
            }
            _ => Ok(()),
        }
    }

    pub fn table(&self, lambda: C) -> GeneratorTable {
        let mut forward = Vec::with_capacity(self.generators.len());
        let mut inverse = Vec::with_capacity(self.generators.len());
        let mut log_scale = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            let raw = [g[0].eval(lambda), g[1].eval(lambda), g[2].eval(lambda), g[3].eval(lambda)];
            let m = MoebiusMap::from_sl2_raw(raw, 0.0);
            forward.push(m.stored());
            inverse.push(adjugate(&m.stored()));
            log_scale.push(m.log_scale());
        }
        GeneratorTable { forward, inverse, log_scale }
    }

    /// `rho_lambda(w)`.
    pub fn evaluate(&self, w: &Word, lambda: C) -> Result<MoebiusMap> {
        self.check_word(w)?;
        Ok(self.table(lambda).eval(w))
    }

    /// Entrywise value and lambda-derivative of `rho_lambda(w)`.
    pub fn evaluate_jet(&self, w: &Word, lambda: C) -> Result<JetMatrix> {
        self.check_word(w)?;
        let gens: Vec<JetMatrix> = self
            .generators
            .iter()
            .map(|g| {
                let mut j = JetMatrix {
                    m: [g[0].eval_jet(lambda), g[1].eval_jet(lambda), g[2].eval_jet(lambda), g[3].eval_jet(lambda)],
                    log_scale: 0.0,
                };
                j.renormalize();
                j
            })
            .collect();
        let mut acc = JetMatrix::identity();
        for (k, l) in w.letters().iter().enumerate() {
            let g = &gens[l.generator as usize];
            let step = if l.inverted { g.adjugate() } else { *g };
            acc = acc.mul_raw(&step);
            if (k + 1) % RENORM_EVERY == 0 {
                acc.renormalize();
            }
        }
        acc.renormalize();
        Ok(acc)
    }

    /// Riley family: `a = [[1,1],[0,1]]`, `b = [[1,0],[lambda,1]]`.
    pub fn riley() -> Self {
        let one = PolyC::constant(C::new(1.0, 0.0));
        let lam = PolyC::new(vec![C::new(0.0, 0.0), C::new(1.0, 0.0)]);
        FamilySpec::new(
            vec!["a".into(), "b".into()],
            vec![
                [one.clone(), one.clone(), PolyC::zero(), one.clone()],
                [one.clone(), PolyC::zero(), lam, one],
            ],
            Some(Window::new(C::new(-3.0, 0.0), 10.0, 10.0)),
        )
        .expect("riley generators have determinant 1")
    }

    /// Schottky-type family: `a = diag(s, 1/s)` and `b = C a C^{-1}` with
    /// `C(lambda) = [[1+lambda, lambda], [1, 1]]`, so `b` has fixed points
    /// `lambda` and `1 + lambda`.
    pub fn schottky(s: f64) -> Result<Self> {
        if !(s > 1.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("schottky multiplier must exceed 1, got {s}")));
        }
        let r = |x: f64| C::new(x, 0.0);
        let k = 1.0 / s - s;
        let a = [PolyC::constant(r(s)), PolyC::zero(), PolyC::zero(), PolyC::constant(r(1.0 / s))];
        // b = [[(1+l)s - l/s, l(1+l)(1/s - s)], [s - 1/s, (1+l)/s - s l]]
        let b = [
            PolyC::new(vec![r(s), r(s - 1.0 / s)]),
            PolyC::new(vec![r(0.0), r(k), r(k)]),
            PolyC::constant(r(s - 1.0 / s)),
            PolyC::new(vec![r(1.0 / s), r(1.0 / s - s)]),
        ];
        FamilySpec::new(
            vec!["a".into(), "b".into()],
            vec![a, b],
            Some(Window::new(C::new(1.0, 0.0), 0.5, 0.5)),
        )
    }

    /// Generators with entries affine in the parameter, `M0 + lambda M1`.
    pub fn linear_custom(generators: &[LinearGenerator]) -> Result<Self> {
        let mut names = Vec::new();
        let mut mats = Vec::new();
        for g in generators {
            names.push(g.name.clone());
            let entry = |i: usize, j: usize| {
                let c0 = g.constant[i][j];
                let c1 = g.linear[i][j];
                PolyC::new(vec![C::new(c0[0], c0[1]), C::new(c1[0], c1[1])])
            };
            mats.push([entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1)]);
        }
        FamilySpec::new(names, mats, None)
    }

    /// The family `lambda -> C(lambda) rho_lambda(.) C(lambda)^{-1}` for a
    /// polynomial matrix `C` of determinant identically one.
    pub fn conjugated(&self, c: &[PolyC; 4]) -> Result<Self> {
        let neg = |p: &PolyC| PolyC::zero().sub(p);
        let add = |p: &PolyC, q: &PolyC| p.sub(&neg(q));
        let mul = |x: &[PolyC; 4], y: &[PolyC; 4]| {
            [
                add(&x[0].mul(&y[0]), &x[1].mul(&y[2])),
                add(&x[0].mul(&y[1]), &x[1].mul(&y[3])),
                add(&x[2].mul(&y[0]), &x[3].mul(&y[2])),
                add(&x[2].mul(&y[1]), &x[3].mul(&y[3])),
            ]
        };
        let inv = [c[3].clone(), neg(&c[1]), neg(&c[2]), c[0].clone()];
        if !is_unit_poly(&c[0].mul(&c[3]).sub(&c[1].mul(&c[2]))) {
            return Err(Error::InvalidFamily("conjugating matrix does not have determinant 1".into()));
        }
        let gens = self.generators.iter().map(|g| mul(&mul(c, g), &inv)).collect();
        FamilySpec::new(self.names.clone(), gens, self.window)
    }

    /// Looks up a built-in family by name.
    pub fn preset(name: &str, params: &PresetParams) -> Result<Self> {
        match name {
            "riley" => Ok(FamilySpec::riley()),
            "schottky" => FamilySpec::schottky(params.s.unwrap_or(DEFAULT_SCHOTTKY_S)),
            "linear-custom" => {
                let gens = params.generators.as_deref().ok_or_else(|| {
                    Error::InvalidFamily("linear-custom needs `generators`".into())
                })?;
                FamilySpec::linear_custom(gens)
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// Reads a family spec file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FamilyFile = serde_json::from_str(text)?;
        let mut names = Vec::new();
        let mut gens = Vec::new();
        for g in file.generators {
            let poly = |p: &Vec<[f64; 2]>| PolyC::new(p.iter().map(|c| C::new(c[0], c[1])).collect());
            names.push(g.name);
            gens.push([poly(&g.matrix[0][0]), poly(&g.matrix[0][1]), poly(&g.matrix[1][0]), poly(&g.matrix[1][1])]);
        }
        FamilySpec::new(names, gens, file.window)
    }

    /// The spec in file form.
    pub fn to_file(&self) -> FamilyFile {
        let poly = |p: &PolyC| -> Vec<[f64; 2]> {
            if p.coeffs().is_empty() {
                vec![[0.0, 0.0]]
            } else {
                p.coeffs().iter().map(|c| [c.re, c.im]).collect()
            }
        };
        FamilyFile {
            generators: self
                .names
                .iter()
                .zip(&self.generators)
                .map(|(n, g)| GeneratorFile {
                    name: n.clone(),
                    matrix: [[poly(&g[0]), poly(&g[1])], [poly(&g[2]), poly(&g[3])]],
                })
                .collect(),
            window: self.window,
        }
    }

    /// Stable 64-bit fingerprint (FNV-1a over the canonical JSON form).
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(&self.to_file()).expect("serializable");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
    }
}

fn is_unit_poly(p: &PolyC) -> bool {
    let coeffs = p.coeffs();
    !coeffs.is_empty() && (coeffs[0] - 1.0).norm() <= 1e-12 && coeffs[1..].iter().all(|c| c.norm() <= 1e-12)
}

pub const DEFAULT_SCHOTTKY_S: f64 = 3.0;

/// Parameters for [`FamilySpec::preset`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<LinearGenerator>>,
}

/// A generator `M0 + lambda M1` with entries as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGenerator {
    pub name: String,
    pub constant: [[[f64; 2]; 2]; 2],
    pub linear: [[[f64; 2]; 2]; 2],
}

/// On-disk family spec: coefficient lists in ascending degree, each
/// coefficient as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub generators: Vec<GeneratorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub name: String,
    pub matrix: [[Vec<[f64; 2]>; 2]; 2],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moebius::MapType;
    use crate::words::{Letter, Word};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn riley_ab_at_one() {
        let f = FamilySpec::riley();
        let m = f.evaluate(&f.parse_word("ab").unwrap(), c(1.0, 0.0)).unwrap();
        let want = MoebiusMap::from_real(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(m.approx_eq(&want, 1e-15));
        let b0 = f.evaluate(&f.parse_word("b").unwrap(), c(0.0, 0.0)).unwrap();
        assert_eq!(b0.classify(1e-9), MapType::Identity);
    }

    #[test]
    fn schottky_generators() {
        let f = FamilySpec::schottky(2.0).unwrap();
        let a = f.evaluate(&f.parse_word("a").unwrap(), c(0.3, 0.1)).unwrap();
        assert!(a.approx_eq(&MoebiusMap::from_real(2.0, 0.0, 0.0, 0.5).unwrap(), 1e-15));
        let f3 = FamilySpec::schottky(3.0).unwrap();
        for l in [c(0.0, 0.0), c(-2.0, 5.0)] {
            let a = f3.evaluate(&f3.parse_word("a").unwrap(), l).unwrap();
            assert!(a.approx_eq(&MoebiusMap::from_real(3.0, 0.0, 0.0, 1.0 / 3.0).unwrap(), 1e-15));
        }
        // b = C diag(s,1/s) C^{-1} fixes lambda and 1 + lambda
        let lam = c(0.7, -0.2);
        let b = f3.evaluate(&f3.parse_word("b").unwrap(), lam).unwrap();
        for z in [lam, lam + 1.0] {
            let p = RiemannPoint::from_complex(z);
            assert!(b.apply(&p).projective_eq(&p, 1e-14));
        }
        assert!((b.tr_squared() - (3.0 + 1.0 / 3.0f64).powi(2)).norm() < 1e-12);
        assert!(FamilySpec::schottky(0.5).is_err());
    }

    #[test]
    fn riley_trace_polynomial_of_ab() {
        let f = FamilySpec::riley();
        let w = f.parse_word("ab").unwrap();
        for l in [c(0.5, 0.0), c(-1.0, 2.0), c(3.0, -4.0)] {
            let t = f.evaluate(&w, l).unwrap().tr_squared();
            assert!((t - (l + 2.0) * (l + 2.0)).norm() < 1e-12);
        }
        let jet = f.evaluate_jet(&w, c(2.0, 0.0)).unwrap();
        let tr = jet.trace_stored().scale(jet.log_scale.exp());
        let tr2 = tr * tr;
        assert!((tr2.value - 16.0).norm() < 1e-12 && (tr2.d_dlambda - 8.0).norm() < 1e-12);
    }

    #[test]
    fn conjugation_by_parabolic() {
        let f = FamilySpec::riley();
        let one = PolyC::constant(c(1.0, 0.0));
        let lam = PolyC::new(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let conj = f.conjugated(&[one.clone(), lam.clone(), PolyC::zero(), one.clone()]).unwrap();
        let w = f.parse_word("ab'ab").unwrap();
        for l in [c(0.5, 0.3), c(-2.0, 1.0)] {
            let a = f.evaluate(&w, l).unwrap();
            let b = conj.evaluate(&w, l).unwrap();
            assert!((a.tr_squared() - b.tr_squared()).norm() < 1e-10);
            let p = MoebiusMap::from_matrix(c(1.0, 0.0), l, c(0.0, 0.0), c(1.0, 0.0)).unwrap();
            assert!(b.approx_eq(&p.compose(&a).compose(&p.inverse()), 1e-10));
        }
        assert!(f.conjugated(&[lam.clone(), PolyC::zero(), PolyC::zero(), one]).is_err());
    }

    #[test]
    fn constant_word_jet_has_zero_derivative() {
        let f = FamilySpec::riley();
        let jet = f.evaluate_jet(&f.parse_word("aaa'a").unwrap(), c(1.3, 0.2)).unwrap();
        assert!(jet.m.iter().all(|j| j.d_dlambda == C::default()));
    }

    #[test]
    fn powers_of_parabolic_grow_like_log_n() {
        let f = FamilySpec::riley();
        let n = 1000;
        let w = Word::reduce(std::iter::repeat_n(Letter::new(0, false), n));
        let got = f.evaluate(&w, c(0.0, 0.0)).unwrap().op_norm_log();
        // |[[1,n],[0,1]]| = (n + sqrt(n^2+4))/2
        let want = ((n as f64 + ((n * n) as f64 + 4.0).sqrt()) / 2.0).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn unknown_generator_is_rejected() {
        let f = FamilySpec::riley();
        let w = Word::letter(5, false);
        assert!(matches!(f.evaluate(&w, c(0.0, 0.0)), Err(Error::UnknownGenerator(_))));
        assert!(matches!(FamilySpec::preset("nope", &PresetParams::default()), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn file_round_trip_and_det_check() {
        let f = FamilySpec::schottky(4.0).unwrap();
        let text = serde_json::to_string(&f.to_file()).unwrap();
        let g = FamilySpec::from_json(&text).unwrap();
        assert_eq!(f.fingerprint(), g.fingerprint());
        let bad = r#"{"generators":[{"name":"a","matrix":[[[[2,0]],[[0,0]]],[[[0,0]],[[1,0]]]]}]}"#;
        assert!(matches!(FamilySpec::from_json(bad), Err(Error::InvalidFamily(_))));
        let lin = r#"{"generators":[{"name":"a","matrix":[[[[1,0]],[[0,0],[1,0]]],[[[0,0]],[[1,0]]]]}],
                     "window":{"center":[0,0],"width":2,"height":2}}"#;
        let g = FamilySpec::from_json(lin).unwrap();
        assert_eq!(g.window().unwrap().width, 2.0);
    }

    #[test]
    fn linear_custom_preset() {
        let id = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]];
        let upper = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]];
        let params = PresetParams {
            s: None,
            generators: Some(vec![LinearGenerator { name: "u".into(), constant: id, linear: upper }]),
        };
        let f = FamilySpec::preset("linear-custom", &params).unwrap();
        let m = f.evaluate(&f.parse_word("u").unwrap(), c(3.0, 0.0)).unwrap();
        assert!(m.approx_eq(&MoebiusMap::from_real(1.0, 3.0, 0.0, 1.0).unwrap(), 1e-15));
        let bad = PresetParams {
            s: None,
            generators: Some(vec![LinearGenerator { name: "u".into(), constant: id, linear: id }]),
        };
        assert!(FamilySpec::preset("linear-custom", &bad).is_err());
    }

    #[test]
    fn long_word_determinant() {
        let f = FamilySpec::riley();
        let mu = crate::words::WordMeasure::uniform_symmetric(2);
        let mut s = crate::words::WalkSampler::new(mu, 5, 0);
        let w = s.sample_walk(20_000);
        assert!(w.len() >= 8000);
        // on the elliptic segment the norm stays moderate and the plain
        // determinant is checkable; elsewhere only the backward error is
        for l in [c(-1.0, 0.0), c(0.3, 0.4), c(-3.0, 1.0)] {
            let m = f.evaluate(&w, l).unwrap();
            assert!(m.det_backward_error() < 1e-9);
        }
        let short = f.parse_word("abab'a'bba'b'").unwrap();
        for l in [c(-1.0, 0.0), c(0.3, 0.4), c(-3.0, 1.0)] {
            assert!(f.evaluate(&short, l).unwrap().det_defect() < 1e-9);
        }
    }

    fn arb_word(max: usize) -> impl Strategy<Value = Word> {
        prop::collection::vec((0u16..2, any::<bool>()).prop_map(|(g, i)| Letter::new(g, i)), 0..max)
            .prop_map(Word::reduce)
    }

    proptest! {
        #[test]
        fn evaluation_is_a_homomorphism(w1 in arb_word(30), w2 in arb_word(30), re in -3.0f64..1.0, im in -2.0f64..2.0) {
            let f = FamilySpec::riley();
            let l = c(re, im);
            let lhs = f.evaluate(&w1.concat(&w2), l).unwrap();
            let rhs = f.evaluate(&w1, l).unwrap().compose(&f.evaluate(&w2, l).unwrap());
            prop_assert!(lhs.approx_eq(&rhs, 1e-8));
            let inv = f.evaluate(&w1.inverse(), l).unwrap();
            prop_assert!(inv.approx_eq(&f.evaluate(&w1, l).unwrap().inverse(), 1e-8));
        }

        #[test]
        fn jets_match_central_differences(w in arb_word(50), re in -2.0f64..0.5, im in -1.0f64..1.0) {
            let f = FamilySpec::schottky(1.5).unwrap();
            let l = c(re, im);
            let h = 1e-5;
            let jet = f.evaluate_jet(&w, l).unwrap();
            let s = jet.log_scale.exp();
            let plus = f.evaluate_jet(&w, l + h).unwrap();
            let minus = f.evaluate_jet(&w, l - h).unwrap();
            for k in 0..4 {
                let fp = plus.m[k].value * plus.log_scale.exp();
                let fm = minus.m[k].value * minus.log_scale.exp();
                let fd = (fp - fm) / (2.0 * h);
                let d = jet.m[k].d_dlambda * s;
                prop_assert!((d - fd).norm() <= 1e-5 * d.norm().max(1.0), "{d} vs {fd}");
            }
            // values agree with the plain evaluation
            let m = f.evaluate(&w, l).unwrap();
            prop_assert!(jet.to_moebius().approx_eq(&m, 1e-10));
        }
    }
}
