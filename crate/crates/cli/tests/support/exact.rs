//! Exact integer polynomials in the parameter for the Riley family, with
//! square-free factorization over the rationals and numerical roots per
//! factor.

use bifkit::{Complex64 as C, Letter, Word};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Ascending coefficients, no trailing zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<BigRational>);

impl Poly {
    pub fn constant(v: i64) -> Poly {
        Poly(vec![BigRational::from_integer(BigInt::from(v))]).trim()
    }

    pub fn lambda() -> Poly {
        Poly(vec![BigRational::zero(), BigRational::one()])
    }

    fn trim(mut self) -> Poly {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    fn lead(&self) -> &BigRational {
        self.0.last().expect("nonzero polynomial")
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        let z = BigRational::zero();
        Poly((0..n).map(|i| self.0.get(i).unwrap_or(&z) + o.0.get(i).unwrap_or(&z)).collect()).trim()
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|c| -c).collect())
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly(Vec::new());
        }
        let mut out = vec![BigRational::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out).trim()
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(i, c)| c * BigRational::from_integer(BigInt::from(i))).collect())
            .trim()
    }

    /// Quotient and remainder.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        let mut r = self.clone();
        let mut q = vec![BigRational::zero(); self.0.len().saturating_sub(d.0.len()) + 1];
        while !r.is_zero() && r.0.len() >= d.0.len() {
            let shift = r.0.len() - d.0.len();
            let f = r.lead() / d.lead();
            for (i, c) in d.0.iter().enumerate() {
                r.0[i + shift] -= &f * c;
            }
            q[shift] = f;
            r = r.trim();
        }
        (Poly(q).trim(), r)
    }

    fn monic(&self) -> Poly {
        let l = self.lead().clone();
        Poly(self.0.iter().map(|c| c / &l).collect())
    }

    pub fn gcd(&self, o: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r;
        }
        a.monic()
    }

    /// Yun's algorithm: `(factor, multiplicity)` with pairwise coprime
    /// square-free factors of positive degree.
    pub fn square_free(&self) -> Vec<(Poly, u32)> {
        let mut out = Vec::new();
        if self.degree() == 0 {
            return out;
        }
        let fp = self.derivative();
        let g = self.gcd(&fp);
        let mut c = self.div_rem(&g).0;
        let mut d = fp.div_rem(&g).0.sub(&c.derivative());
        let mut i = 1;
        while c.degree() > 0 {
            let a = c.gcd(&d);
            c = c.div_rem(&a).0;
            d = d.div_rem(&a).0.sub(&c.derivative());
            if a.degree() > 0 {
                out.push((a, i));
            }
            i += 1;
        }
        out
    }

    fn to_f64(&self) -> Vec<C> {
        self.0.iter().map(|c| C::new(c.to_f64().expect("finite coefficient"), 0.0)).collect()
    }

    /// Simple roots of a square-free factor: companion eigenvalues polished
    /// by Newton's method.
    pub fn simple_roots(&self) -> Vec<C> {
        let n = self.degree();
        let m = self.monic().to_f64();
        let mut comp = DMatrix::<C>::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = C::new(1.0, 0.0);
        }
        for i in 0..n {
            comp[(i, n - 1)] = -m[i];
        }
        let eig: Vec<C> = match comp.clone().try_schur(f64::EPSILON, 10_000).and_then(|s| s.eigenvalues()) {
            Some(e) => e.iter().copied().collect(),
            None => durand_kerner(&m),
        };
        eig.iter()
            .map(|&z0| {
                let mut z = z0;
                for _ in 0..8 {
                    let (v, dv) = m.iter().rev().fold((C::new(0.0, 0.0), C::new(0.0, 0.0)), |(v, dv), &c| {
                        (v * z + c, dv * z + v)
                    });
                    if dv.norm() == 0.0 {
                        break;
                    }
                    z -= v / dv;
                }
                z
            })
            .collect()
    }

    /// Cauchy bound on the moduli of the roots.
    pub fn root_bound(&self) -> f64 {
        let l = self.lead();
        1.0 + self.0[..self.degree()].iter().map(|c| (c / l).abs().to_f64().unwrap()).fold(0.0, f64::max)
    }
}

/// Simultaneous Weierstrass iteration for a monic polynomial given in
/// ascending coefficients; used when the QR iteration stalls.
fn durand_kerner(m: &[C]) -> Vec<C> {
    let n = m.len() - 1;
    let eval = |z: C| m.iter().rev().fold(C::new(0.0, 0.0), |v, &c| v * z + c);
    let r = 1.0 + m[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<C> = (0..n).map(|k| C::from_polar(r, 0.4 + std::f64::consts::TAU * k as f64 / n as f64)).collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let den: C = (0..n).filter(|&j| j != k).map(|j| z[k] - z[j]).product();
            let step = eval(z[k]) / den;
            z[k] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * r {
            break;
        }
    }
    z
}

type Mat = [Poly; 4];

fn mat_mul(x: &Mat, y: &Mat) -> Mat {
    [
        x[0].mul(&y[0]).add(&x[1].mul(&y[2])),
        x[0].mul(&y[1]).add(&x[1].mul(&y[3])),
        x[2].mul(&y[0]).add(&x[3].mul(&y[2])),
        x[2].mul(&y[1]).add(&x[3].mul(&y[3])),
    ]
}

/// `tr(rho_lambda(w))` for the Riley family `a = [[1,1],[0,1]]`,
/// `b = [[1,0],[lambda,1]]`, exactly.
pub fn riley_trace(w: &Word) -> Poly {
    let (one, zero) = (Poly::constant(1), Poly::constant(0));
    let lam = Poly::lambda();
    let gen = |l: &Letter| -> Mat {
        let sign = if l.inverted { Poly::constant(-1) } else { one.clone() };
        if l.generator == 0 {
            [one.clone(), sign, zero.clone(), one.clone()]
        } else {
            [one.clone(), zero.clone(), sign.mul(&lam), one.clone()]
        }
    };
    let id: Mat = [one.clone(), zero.clone(), zero.clone(), one.clone()];
    let m = w.letters().iter().fold(id, |acc, l| mat_mul(&acc, &gen(l)));
    m[0].add(&m[3])
}

/// All reduced words over `{a, a', b, b'}` of length `1..=max_len`.
pub fn reduced_words(max_len: usize) -> Vec<Word> {
    let letters = [Letter::new(0, false), Letter::new(0, true), Letter::new(1, false), Letter::new(1, true)];
    let mut out = Vec::new();
    let mut layer: Vec<Vec<Letter>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for l in letters {
                if w.last() == Some(&l.inverse()) {
                    continue;
                }
                let mut v = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out.extend(next.iter().map(|v| Word::reduce(v.iter().copied())));
        layer = next;
    }
    out
}
