//! Discrete `dd^c` and the explicit potentials whose Laplacians are compared
//! against the bifurcation measure.
//!
//! Normalization: `dd^c log|lambda - lambda0|` is a unit point mass. On a grid
//! with spacing `h` a cell carries `(u_E + u_W + u_N + u_S - 4 u_C) / 2pi`.
//! The boundary ring of the grid carries no mass.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{FamilySpec, Window};
use crate::lyapunov::{chi_field, shared_words, ChiFieldParams, FieldMeta, ParamGrid, ScalarField};
use crate::moebius::{MoebiusMap, RiemannPoint};
use crate::words::{Word, WordMeasure};

type C = Complex64;

/// Cell masses over a grid. Stored at full grid size with the boundary ring
/// fixed at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MassField {
    pub grid: ParamGrid,
    pub masses: Vec<f64>,
    pub total: f64,
    /// Mass that fell outside the interior, for binned point measures.
    pub overflow: f64,
    pub meta: FieldMeta,
}

/// Summary written next to serialized mass fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub total: f64,
    pub min: f64,
    pub max: f64,
    /// Total negative mass over total positive mass.
    pub negative_fraction: f64,
}

impl MassField {
    /// Builds a field from masses, zeroing the boundary ring.
    pub fn new(grid: ParamGrid, mut masses: Vec<f64>, meta: FieldMeta) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::InvalidArgument("mass field size does not match grid".into()));
        }
        for (k, m) in masses.iter_mut().enumerate() {
            let (i, j) = grid.coords(k);
            if !grid.is_interior(i, j) {
                *m = 0.0;
            }
        }
        let total = masses.iter().sum();
        Ok(MassField { grid, masses, total, overflow: 0.0, meta })
    }

    pub fn zero(grid: ParamGrid) -> Self {
        MassField { grid, masses: vec![0.0; grid.len()], total: 0.0, overflow: 0.0, meta: FieldMeta::kind("zero") }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.masses[self.grid.index(i, j)]
    }

    /// Mass in the `(2r+1) x (2r+1)` block centered at `(i, j)`, clipped to the grid.
    pub fn block_mass(&self, i: usize, j: usize, r: usize) -> f64 {
        let (i0, i1) = (i.saturating_sub(r), (i + r).min(self.grid.nx - 1));
        let (j0, j1) = (j.saturating_sub(r), (j + r).min(self.grid.ny - 1));
        (j0..=j1).flat_map(|q| (i0..=i1).map(move |p| (p, q))).map(|(p, q)| self.at(p, q)).sum()
    }

    pub fn summary(&self) -> MassSummary {
        let pos: f64 = self.masses.iter().filter(|m| **m > 0.0).sum();
        let neg: f64 = -self.masses.iter().filter(|m| **m < 0.0).sum::<f64>();
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..self.masses.len() {
            let (i, j) = self.grid.coords(k);
            if self.grid.is_interior(i, j) {
                min = min.min(self.masses[k]);
                max = max.max(self.masses[k]);
            }
        }
        MassSummary {
            total: self.total,
            min,
            max,
            negative_fraction: if pos > 0.0 { neg / pos } else if neg > 0.0 { f64::INFINITY } else { 0.0 },
        }
    }
}

/// Discrete `dd^c` of a field.
///
/// An isolated `-inf` cell takes the mass of its 3x3 block, computed from the
/// flux through the block boundary; its eight neighbours then carry zero.
/// Sentinels closer than three cells to each other or to the grid edge
/// cannot be resolved and give [`Error::SentinelCluster`].
pub fn ddc(field: &ScalarField) -> Result<MassField> {
    let g = &field.grid;
    let (nx, ny) = (g.nx, g.ny);
    let sentinels: Vec<(usize, usize)> =
        field.sentinel.iter().enumerate().filter(|(_, s)| **s).map(|(k, _)| g.coords(k)).collect();
    let mut block_owner = vec![false; g.len()];
    for (a, &(i, j)) in sentinels.iter().enumerate() {
        if i < 2 || j < 2 || i + 3 > nx || j + 3 > ny {
            return Err(Error::SentinelCluster { i, j });
        }
        if sentinels[a + 1..].iter().any(|&(p, q)| p.abs_diff(i) <= 2 && q.abs_diff(j) <= 2) {
            return Err(Error::SentinelCluster { i, j });
        }
        for q in j - 1..=j + 1 {
            for p in i - 1..=i + 1 {
                block_owner[g.index(p, q)] = true;
            }
        }
    }
    let u = &field.values;
    let mut masses: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = g.coords(k);
            if !g.is_interior(i, j) || block_owner[k] {
                return 0.0;
            }
            (u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] - 4.0 * u[k]) / TAU
        })
        .collect();
    for &(i, j) in &sentinels {
        let mut flux = 0.0;
        for q in j - 1..=j + 1 {
            for p in i - 1..=i + 1 {
                if p == i && q == j {
                    continue;
                }
                let inside = u[g.index(p, q)];
                let outs = [(p - 1, q), (p + 1, q), (p, q - 1), (p, q + 1)];
                for (op, oq) in outs {
                    if op.abs_diff(i) > 1 || oq.abs_diff(j) > 1 {
                        flux += u[g.index(op, oq)] - inside;
                    }
                }
            }
        }
        masses[g.index(i, j)] = flux / TAU;
    }
    let mut meta = field.meta.clone();
    meta.kind = format!("ddc({})", field.meta.kind);
    MassField::new(*g, masses, meta)
}

/// Three-probe constancy test: `f` is treated as constant on the window if
/// its values at three spread-out probes agree within `1e-10 * scale`.
pub fn probe_constant<F: Fn(C) -> C>(f: F, window: &Window) -> Option<C> {
    let vals: Vec<C> = (0..3).map(|k| f(window.probe(k))).collect();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    let scale = vals.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let close = (vals[0] - vals[1]).norm() < 1e-10 * scale
        && (vals[0] - vals[2]).norm() < 1e-10 * scale
        && (vals[1] - vals[2]).norm() < 1e-10 * scale;
    close.then(|| (vals[0] + vals[1] + vals[2]) / 3.0)
}

/// Constant value of `lambda -> tr^2(rho_lambda(w))` on the window, if any.
pub fn constant_trace(spec: &FamilySpec, w: &Word, window: &Window) -> Option<C> {
    probe_constant(|l| spec.table(l).eval(w).tr_squared(), window)
}

/// Whether `tr[rho(w), rho(h)] - 2` is constant on the window, and its value.
pub fn constant_commutator(spec: &FamilySpec, w: &Word, h: &Word, window: &Window) -> Option<C> {
    probe_constant(
        |l| {
            let t = spec.table(l);
            t.eval(w).commutator_trace_minus_two(&t.eval(h))
        },
        window,
    )
}

/// `lambda -> log(|rho_lambda(w) Z0| / |Z0|)`.
pub fn graph_potential_field(spec: &FamilySpec, w: &Word, z0: &RiemannPoint, grid: &ParamGrid) -> Result<ScalarField> {
    spec.evaluate(w, grid.pixel(0, 0))?;
    ScalarField::from_fn(*grid, FieldMeta::kind("graph"), |l| spec.table(l).vector_growth(w, z0))
}

/// `lambda -> (1/2) log |tr^2(rho_lambda(w)) - t|`. A word whose trace is
/// constantly `t` gives an all-sentinel field.
pub fn trace_potential_field(spec: &FamilySpec, w: &Word, t: C, grid: &ParamGrid) -> Result<ScalarField> {
    spec.evaluate(w, grid.pixel(0, 0))?;
    let meta = FieldMeta::kind("trace");
    if let Some(c) = constant_trace(spec, w, &grid.window()) {
        if (c - t).norm() < 1e-10 * c.norm().max(1.0) {
            return ScalarField::new(*grid, vec![f64::NEG_INFINITY; grid.len()], meta);
        }
    }
    ScalarField::from_fn(*grid, meta, |l| 0.5 * spec.table(l).eval(w).log_abs_tr_squared_minus(t))
}

/// `lambda -> log |tr[rho_lambda(w), rho_lambda(h)] - 2|`.
pub fn commutator_potential_field(spec: &FamilySpec, w: &Word, h: &Word, grid: &ParamGrid) -> Result<ScalarField> {
    spec.evaluate(w, grid.pixel(0, 0))?;
    spec.evaluate(h, grid.pixel(0, 0))?;
    let meta = FieldMeta::kind("commutator");
    if let Some(c) = constant_commutator(spec, w, h, &grid.window()) {
        if c.norm() < 1e-10 {
            return ScalarField::new(*grid, vec![f64::NEG_INFINITY; grid.len()], meta);
        }
    }
    ScalarField::from_fn(*grid, meta, |l| {
        let t = spec.table(l);
        t.eval(w).log_abs_commutator_trace_minus_two(&t.eval(h))
    })
}

/// `v = log(|b|^2 + |c|^2 + (|d - a|^2 + |tr^2 - 4|)/2)^{1/2}` of the
/// determinant-one representative, from the stored entries and log scale.
pub fn fixpoint_potential(m: &MoebiusMap) -> f64 {
    let [a, b, c, d] = m.stored();
    let amd = a - d;
    let disc = amd * amd + 4.0 * b * c;
    let inner = b.norm_sqr() + c.norm_sqr() + 0.5 * (amd.norm_sqr() + disc.norm());
    m.log_scale() + 0.5 * inner.ln()
}

/// `lambda -> v(lambda, w)`, a potential of the pushed-forward fixed-point
/// current of `w`.
pub fn fixpoint_potential_field(spec: &FamilySpec, w: &Word, grid: &ParamGrid) -> Result<ScalarField> {
    spec.evaluate(w, grid.pixel(0, 0))?;
    ScalarField::from_fn(*grid, FieldMeta::kind("fixpoint"), |l| fixpoint_potential(&spec.table(l).eval(w)))
}

/// Averaged trace potential
/// `u_n = (1/(2 n m)) sum_i log |tr^2(rho_lambda(w_i)) - t|` over the shared
/// words of the Lyapunov field, skipping words whose squared trace is a
/// constant within distance 1 of `t`.
pub fn averaged_potential_field(
    spec: &FamilySpec,
    mu: &WordMeasure,
    t: C,
    grid: &ParamGrid,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<ScalarField> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    let window = grid.window();
    let words: Vec<Word> = shared_words(mu, n, m, seed)
        .into_iter()
        .filter(|w| !matches!(constant_trace(spec, w, &window), Some(c) if (c - t).norm() <= 1.0))
        .collect();
    if let Some(w) = words.first() {
        spec.evaluate(w, grid.pixel(0, 0))?;
    }
    let meta = FieldMeta { kind: "averaged-trace".into(), n: Some(n), m: Some(m), seed: Some(seed) };
    let norm = 2.0 * n as f64 * m as f64;
    ScalarField::from_fn(*grid, meta, |l| {
        let table = spec.table(l);
        words.iter().map(|w| table.eval(w).log_abs_tr_squared_minus(t)).sum::<f64>() / norm
    })
}

/// Bifurcation measure: `dd^c` of the shared-words Lyapunov field.
pub fn bif_measure(
    spec: &FamilySpec,
    mu: &WordMeasure,
    grid: &ParamGrid,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<MassField> {
    let chi = chi_field(spec, mu, grid, &ChiFieldParams::new(n, m, seed))?;
    let mut out = ddc(&chi)?;
    out.meta = FieldMeta { kind: "bif".into(), n: Some(n), m: Some(m), seed: Some(seed) };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::PolyC;
    use crate::words::WalkSampler;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn field<F: Fn(C) -> f64 + Sync>(grid: &ParamGrid, f: F) -> ScalarField {
        ScalarField::from_fn(*grid, FieldMeta::kind("test"), f).unwrap()
    }

    #[test]
    fn point_mass_has_unit_total() {
        let grid = ParamGrid::new(c(0.0, 0.0), 2.0, 2.0, 256, 256).unwrap();
        let m = ddc(&field(&grid, |l| l.norm().ln())).unwrap();
        assert!((m.total - 1.0).abs() < 1e-3, "{}", m.total);
    }

    #[test]
    fn harmonic_field_has_no_mass() {
        let grid = ParamGrid::new(c(0.3, -0.1), 2.0, 2.0, 64, 64).unwrap();
        let m = ddc(&field(&grid, |l| (l * l).re)).unwrap();
        assert!(m.total.abs() < 1e-9);
    }

    #[test]
    fn two_roots_give_mass_two() {
        let grid = ParamGrid::new(c(0.0, 0.0), 4.0, 4.0, 256, 256).unwrap();
        let m = ddc(&field(&grid, |l| (l * l + 1.0).norm().ln())).unwrap();
        assert!((m.total - 2.0).abs() < 2e-3, "{}", m.total);
    }

    #[test]
    fn isolated_sentinel_uses_block_flux() {
        // grid chosen so that lambda = 0 is a pixel center
        let grid = ParamGrid::new(c(0.0, 0.0), 2.0 * 33.0 / 32.0, 2.0 * 33.0 / 32.0, 33, 33).unwrap();
        assert!(grid.pixel(16, 16).norm() < 1e-15);
        let f = field(&grid, |l| l.norm().ln());
        assert_eq!(f.sentinel_count(), 1);
        let m = ddc(&f).unwrap();
        assert!((m.at(16, 16) - 1.0).abs() < 0.03);
        assert!((m.block_mass(16, 16, 2) - 1.0).abs() < 0.01);
        assert!((m.total - 1.0).abs() < 0.01);
        assert_eq!(m.at(15, 16), 0.0);
    }

    #[test]
    fn clustered_sentinels_are_rejected() {
        let grid = ParamGrid::new(c(0.0, 0.0), 1.0, 1.0, 16, 16).unwrap();
        let mut values = vec![0.0; grid.len()];
        values[grid.index(7, 7)] = f64::NEG_INFINITY;
        values[grid.index(8, 7)] = f64::NEG_INFINITY;
        let f = ScalarField::new(grid, values, FieldMeta::kind("t")).unwrap();
        assert!(matches!(ddc(&f), Err(Error::SentinelCluster { .. })));
    }

    #[test]
    fn graph_potential_examples() {
        let spec = FamilySpec::riley();
        let grid = ParamGrid::new(c(-1.0, 0.3), 2.0, 2.0, 16, 16).unwrap();
        let id = graph_potential_field(&spec, &Word::identity(), &RiemannPoint::zero(), &grid).unwrap();
        assert!(id.values.iter().all(|v| v.abs() < 1e-15));
        let b = spec.parse_word("b").unwrap();
        let z = graph_potential_field(&spec, &b, &RiemannPoint::zero(), &grid).unwrap();
        assert!(z.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn graph_of_degree_one_carries_unit_mass() {
        // b_lambda(1) = 1/(1 + lambda): mass 1 spread around lambda = -1,
        // tending to 1 as the window grows
        let spec = FamilySpec::riley();
        let b = spec.parse_word("b").unwrap();
        let one = RiemannPoint::from_complex(c(1.0, 0.0));
        let mut last = 0.0;
        for width in [4.0, 16.0, 64.0] {
            let grid = ParamGrid::new(c(-1.0, 0.0), width, width, 256, 256).unwrap();
            let f = graph_potential_field(&spec, &b, &one, &grid).unwrap();
            let l = grid.pixel(100, 77);
            let want = (1.0 + (1.0 + l).norm_sqr()).sqrt().ln() - 2f64.sqrt().ln();
            assert!((f.at(100, 77) - want).abs() < 1e-14);
            let m = ddc(&f).unwrap();
            assert!(m.total > last && m.total < 1.0);
            last = m.total;
        }
        assert!(last > 0.99, "{last}");
    }

    #[test]
    fn trace_potential_examples() {
        let spec = FamilySpec::riley();
        let ab = spec.parse_word("ab").unwrap();
        let grid = ParamGrid::new(c(-2.0, 0.0), 8.0, 8.0, 128, 128).unwrap();
        let u = trace_potential_field(&spec, &ab, c(4.0, 0.0), &grid).unwrap();
        let l = grid.pixel(40, 90);
        assert!((u.at(40, 90) - 0.5 * (l * (l + 4.0)).norm().ln()).abs() < 1e-12);
        let m = ddc(&u).unwrap();
        let (i0, j0) = grid.locate(c(0.0, 0.0)).unwrap();
        let (i4, j4) = grid.locate(c(-4.0, 0.0)).unwrap();
        assert!((m.block_mass(i0, j0, 3) - 0.5).abs() < 1e-2);
        assert!((m.block_mass(i4, j4, 3) - 0.5).abs() < 1e-2);

        let u0 = trace_potential_field(&spec, &ab, c(0.0, 0.0), &grid).unwrap();
        let m0 = ddc(&u0).unwrap();
        let (i2, j2) = grid.locate(c(-2.0, 0.0)).unwrap();
        assert!((m0.block_mass(i2, j2, 3) - 1.0).abs() < 1e-2);

        let a = spec.parse_word("a").unwrap();
        let flat = trace_potential_field(&spec, &a, c(4.0, 0.0), &grid).unwrap();
        assert!(flat.all_sentinel());
    }

    #[test]
    fn commutator_potential_examples() {
        let spec = FamilySpec::riley();
        let (a, b) = (spec.parse_word("a").unwrap(), spec.parse_word("b").unwrap());
        let grid = ParamGrid::new(c(0.1, 0.05), 2.0, 2.0, 128, 128).unwrap();
        let u = commutator_potential_field(&spec, &a, &b, &grid).unwrap();
        let l = grid.pixel(3, 9);
        assert!((u.at(3, 9) - (l * l).norm().ln()).abs() < 1e-12);
        assert!((ddc(&u).unwrap().total - 2.0).abs() < 2e-3);
        let same = commutator_potential_field(&spec, &a, &a, &grid).unwrap();
        assert!(same.all_sentinel());

        let sch = FamilySpec::schottky(20.0).unwrap();
        let grid = ParamGrid::new(c(1.0, 0.0), 0.5, 0.5, 64, 64).unwrap();
        let u = commutator_potential_field(&sch, &a, &b, &grid).unwrap();
        assert_eq!(u.sentinel_count(), 0);
        // harmonic on the window; what remains is O(h^2) truncation
        assert!(ddc(&u).unwrap().total.abs() < 1e-4);
    }

    #[test]
    fn fixpoint_potential_examples() {
        let spec = FamilySpec::riley();
        let grid = ParamGrid::new(c(0.0, 0.0), 1.0, 1.0, 8, 8).unwrap();
        let a = fixpoint_potential_field(&spec, &spec.parse_word("a").unwrap(), &grid).unwrap();
        assert!(a.values.iter().all(|v| v.abs() < 1e-15));
        let ab = spec.evaluate(&spec.parse_word("ab").unwrap(), c(0.0, 0.0)).unwrap();
        assert!(fixpoint_potential(&ab).abs() < 1e-15);
        // scale bookkeeping: the same map with and without an external scale
        let m = MoebiusMap::from_matrix(c(3.0, 1.0), c(0.2, 0.0), c(-1.0, 0.5), c(0.7, 0.0)).unwrap();
        let [a0, b0, c0, d0] = m.entries();
        let direct = {
            let t = (a0 + d0) * (a0 + d0) - 4.0;
            0.5 * (b0.norm_sqr() + c0.norm_sqr() + 0.5 * ((d0 - a0).norm_sqr() + t.norm())).ln()
        };
        assert!((fixpoint_potential(&m) - direct).abs() < 1e-9);
    }

    #[test]
    fn fixpoint_potential_bounds() {
        let spec = FamilySpec::riley();
        let mu = WordMeasure::uniform_symmetric(2);
        let mut worst = 0.0f64;
        let window = Window::new(c(-3.0, 0.0), 10.0, 10.0);
        for k in 0..10_000usize {
            let w = WalkSampler::new(mu.clone(), 17, k as u64).sample_walk(1 + k % 40);
            if w.is_empty() {
                continue;
            }
            let m = spec.evaluate(&w, window.probe(k)).unwrap();
            let v = fixpoint_potential(&m);
            let norm = m.op_norm_log();
            let lower = (0.5 * m.tr_squared_minus_four().norm().ln()).min(norm);
            worst = worst.max(lower - v).max(v - norm);
        }
        assert!(worst <= 2.0, "constant {worst}");
    }

    #[test]
    fn averaged_potential_examples() {
        let spec = FamilySpec::riley();
        let grid = ParamGrid::new(c(-1.0, 0.5), 2.0, 2.0, 16, 16).unwrap();
        let mu = WordMeasure::uniform_symmetric(2);
        let avg = averaged_potential_field(&spec, &mu, c(4.0, 0.0), &grid, 6, 1, 4).unwrap();
        let w = &shared_words(&mu, 6, 1, 4)[0];
        let single = trace_potential_field(&spec, w, c(4.0, 0.0), &grid).unwrap();
        for (x, y) in avg.values.iter().zip(&single.values) {
            if constant_trace(&spec, w, &grid.window()).is_none() {
                assert!((x - y / 6.0).abs() < 1e-12);
            }
        }

        // constant loxodromic family: u_n = (1/n) log(3^n - 3^-n)
        let p = |x: f64| PolyC::constant(c(x, 0.0));
        let d3 = FamilySpec::new(vec!["a".into()], vec![[p(3.0), p(0.0), p(0.0), p(1.0 / 3.0)]], None).unwrap();
        let dirac = WordMeasure::dirac(Word::letter(0, false));
        for n in [1usize, 5, 20] {
            let u = averaged_potential_field(&d3, &dirac, c(4.0, 0.0), &grid, n, 2, 1).unwrap();
            let want = (3f64.powi(n as i32) - 3f64.powi(-(n as i32))).ln() / n as f64;
            assert!((u.values[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_family_has_no_bifurcation_mass() {
        let p = |x: f64| PolyC::constant(c(x, 0.0));
        let spec = FamilySpec::new(
            vec!["a".into(), "b".into()],
            vec![[p(2.0), p(1.0), p(1.0), p(1.0)], [p(1.0), p(0.0), p(3.0), p(1.0)]],
            None,
        )
        .unwrap();
        let grid = ParamGrid::new(c(0.0, 0.0), 1.0, 1.0, 16, 16).unwrap();
        let m = bif_measure(&spec, &WordMeasure::uniform_symmetric(2), &grid, 10, 10, 1).unwrap();
        assert!(m.total.abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn ddc_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, r0 in -0.9f64..0.9, r1 in -0.9f64..0.9) {
            let grid = ParamGrid::new(c(0.0, 0.0), 2.0, 2.0, 32, 32).unwrap();
            let u = field(&grid, |l| (l - c(r0, r1)).norm().ln());
            let v = field(&grid, |l| (l * l * l).re + l.norm_sqr());
            let lhs = ddc(&u.linear_combination(a, &v, b).unwrap()).unwrap();
            let (du, dv) = (ddc(&u).unwrap(), ddc(&v).unwrap());
            for k in 0..grid.len() {
                let rhs = a * du.masses[k] + b * dv.masses[k];
                prop_assert!((lhs.masses[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs() + a.abs() * du.masses[k].abs() + b.abs() * dv.masses[k].abs()) * 10.0);
            }
        }

        #[test]
        fn harmonic_polynomials_are_annihilated(coeffs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..5)) {
            let grid = ParamGrid::new(c(0.2, -0.3), 2.0, 2.0, 48, 48).unwrap();
            let q = PolyC::new(coeffs.iter().map(|(x, y)| c(*x, *y)).collect());
            let norm: f64 = q.coeffs().iter().map(|z| z.norm()).sum();
            let m = ddc(&field(&grid, |l| q.eval(l).re)).unwrap();
            prop_assert!(m.total.abs() <= 1e-8 * norm.max(1.0));
        }
    }
}
