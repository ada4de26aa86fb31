//! Estimators of the Lyapunov exponent `chi(rho_lambda)` and grid-valued
//! Lyapunov fields over a parameter window.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{FamilySpec, Window};
use crate::moebius::{MoebiusMap, RiemannPoint};
use crate::rng::{derive_seed, purpose};
use crate::words::{WalkSampler, Word, WordMeasure};

type C = Complex64;

/// Default burn-in for the stationary-measure chain.
pub const DEFAULT_BURN_IN: usize = 100;

/// Square-pixel grid over a rectangle of the parameter plane. Pixel `(i, j)`
/// has center `center + (-w/2 + (i + 1/2) h) + i (-h_tot/2 + (j + 1/2) h)`,
/// with `j = 0` the bottom row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
}

impl ParamGrid {
    pub fn new(center: C, width: f64, height: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidGrid(format!("need at least 8x8 pixels, got {nx}x{ny}")));
        }
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::InvalidGrid("window must have positive size".into()));
        }
        let (hx, hy) = (width / nx as f64, height / ny as f64);
        if (hx - hy).abs() > 1e-9 * hx {
            return Err(Error::InvalidGrid(format!(
                "pixels must be square: {width}/{nx} != {height}/{ny}"
            )));
        }
        Ok(ParamGrid { center: [center.re, center.im], width, height, nx, ny })
    }

    /// Parses `"cx,cy,w,h,nx,ny"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::InvalidGrid(format!("expected cx,cy,w,h,nx,ny, got `{s}`")));
        }
        let f = |k: usize| {
            parts[k].parse::<f64>().map_err(|_| Error::InvalidGrid(format!("bad number `{}`", parts[k])))
        };
        let u = |k: usize| {
            parts[k].parse::<usize>().map_err(|_| Error::InvalidGrid(format!("bad count `{}`", parts[k])))
        };
        ParamGrid::new(C::new(f(0)?, f(1)?), f(2)?, f(3)?, u(4)?, u(5)?)
    }

    pub fn spacing(&self) -> f64 {
        self.width / self.nx as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn pixel(&self, i: usize, j: usize) -> C {
        let h = self.spacing();
        C::new(
            self.center[0] - self.width / 2.0 + (i as f64 + 0.5) * h,
            self.center[1] - self.height / 2.0 + (j as f64 + 0.5) * h,
        )
    }

    pub fn pixel_at(&self, idx: usize) -> C {
        let (i, j) = self.coords(idx);
        self.pixel(i, j)
    }

    /// Pixel containing `z`, if inside the window.
    pub fn locate(&self, z: C) -> Option<(usize, usize)> {
        let h = self.spacing();
        let x = (z.re - (self.center[0] - self.width / 2.0)) / h;
        let y = (z.im - (self.center[1] - self.height / 2.0)) / h;
        if x < 0.0 || y < 0.0 || !x.is_finite() || !y.is_finite() {
            return None;
        }
        let (i, j) = (x.floor() as usize, y.floor() as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn window(&self) -> Window {
        Window { center: self.center, width: self.width, height: self.height }
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }
}

/// Provenance recorded with every field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl FieldMeta {
    pub fn kind(kind: &str) -> Self {
        FieldMeta { kind: kind.to_string(), ..Default::default() }
    }
}

/// Real values on a grid; `-inf` cells are flagged in `sentinel`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: ParamGrid,
    pub values: Vec<f64>,
    pub sentinel: Vec<bool>,
    pub meta: FieldMeta,
}

impl ScalarField {
    /// Builds a field; `-inf` entries become sentinels, other non-finite
    /// values are rejected.
    pub fn new(grid: ParamGrid, values: Vec<f64>, meta: FieldMeta) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument("field size does not match grid".into()));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || *v == &f64::INFINITY) {
            return Err(Error::InvalidArgument(format!("non-finite field value {v}")));
        }
        let sentinel = values.iter().map(|v| *v == f64::NEG_INFINITY).collect();
        Ok(ScalarField { grid, values, sentinel, meta })
    }

    /// Samples `f` at every pixel center.
    pub fn from_fn<F>(grid: ParamGrid, meta: FieldMeta, f: F) -> Result<Self>
    where
        F: Fn(C) -> f64 + Sync,
    {
        let values: Vec<f64> = (0..grid.len()).into_par_iter().map(|k| f(grid.pixel_at(k))).collect();
        ScalarField::new(grid, values, meta)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn sentinel_count(&self) -> usize {
        self.sentinel.iter().filter(|s| **s).count()
    }

    pub fn all_sentinel(&self) -> bool {
        self.sentinel.iter().all(|s| *s)
    }

    /// `(min, max)` over finite values.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values.iter().filter(|v| v.is_finite()).fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// `a * self + b * other`, with sentinels propagated.
    pub fn linear_combination(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("grids differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        ScalarField::new(self.grid, values, FieldMeta::kind("combination"))
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Point estimate of `chi` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub m: usize,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Mean of `(1/n) log |rho_lambda(l_n)|` over `m` walks drawn from `sampler`.
pub fn chi_norm_estimate(
    spec: &FamilySpec,
    lambda: C,
    n: usize,
    m: usize,
    sampler: &WalkSampler,
) -> Result<ChiEstimate> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    check_measure(spec, sampler.measure())?;
    let table = spec.table(lambda);
    let mut s = sampler.clone();
    let samples: Vec<f64> = (0..m).map(|_| table.eval(&s.sample_walk(n)).op_norm_log() / n as f64).collect();
    let (value, stderr) = mean_and_stderr(&samples);
    Ok(ChiEstimate { value, stderr, n, m })
}

/// Ergodic average of `log(|rho(g) Z| / |Z|)` along the chain
/// `z_{k+1} = rho(g_k) z_k` on the sphere. The standard error comes from
/// batch means over 20 batches.
pub fn chi_furstenberg_estimate(
    spec: &FamilySpec,
    lambda: C,
    n_burn: usize,
    n_samples: usize,
    sampler: &WalkSampler,
) -> Result<ChiEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    check_measure(spec, sampler.measure())?;
    let table = spec.table(lambda);
    let atoms: Vec<_> = sampler.measure().atoms().iter().map(|(w, _)| table.eval(w)).collect();
    let mut s = sampler.clone();
    let mut z = RiemannPoint::new(C::new(0.6, 0.2), C::new(0.3, -0.5))?;
    for i in s.sample_increments(n_burn) {
        z = atoms[i].apply(&z);
    }
    let mut samples = Vec::with_capacity(n_samples);
    for i in s.sample_increments(n_samples) {
        let (next, growth) = atoms[i].apply_with_growth(&z);
        samples.push(growth);
        z = next;
    }
    const BATCHES: usize = 20;
    let value = samples.iter().sum::<f64>() / n_samples as f64;
    let stderr = if n_samples >= 2 * BATCHES {
        let size = n_samples / BATCHES;
        let means: Vec<f64> =
            samples.chunks_exact(size).take(BATCHES).map(|c| c.iter().sum::<f64>() / size as f64).collect();
        mean_and_stderr(&means).1
    } else {
        mean_and_stderr(&samples).1
    };
    Ok(ChiEstimate { value, stderr, n: n_samples, m: 1 })
}

pub(crate) fn check_measure(spec: &FamilySpec, mu: &WordMeasure) -> Result<()> {
    match mu.max_generator() {
        Some(g) if g as usize >= spec.generator_count() => Err(Error::UnknownGenerator(format!("g{g}"))),
        _ => Ok(()),
    }
}

/// How the growth of a word is measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GrowthVariant {
    /// `log |rho(w)|`
    Norm,
    /// `log(|rho(w) Z0| / |Z0|)`
    Vector(RiemannPoint),
}

/// Settings for [`chi_field`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiFieldParams {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub shared_words: bool,
    pub variant: GrowthVariant,
}

impl ChiFieldParams {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        ChiFieldParams { n, m, seed, shared_words: true, variant: GrowthVariant::Norm }
    }
}

/// The `m` shared walks of length `n` used by every pixel of a field.
pub fn shared_words(mu: &WordMeasure, n: usize, m: usize, seed: u64) -> Vec<Word> {
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::SHARED_WORDS), 0);
    (0..m).map(|i| base.split(i as u64).sample_walk(n)).collect()
}

/// Words `l_n` for each requested length, taken as prefixes of the same
/// `m` shared walks: `out[k][i]` is walk `i` at length `lengths[k]`.
pub fn shared_nested_words(mu: &WordMeasure, lengths: &[usize], m: usize, seed: u64) -> Vec<Vec<Word>> {
    let max = lengths.iter().copied().max().unwrap_or(0);
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::SHARED_WORDS), 0);
    let mut out = vec![Vec::with_capacity(m); lengths.len()];
    for i in 0..m {
        let prefixes = base.split(i as u64).sample_prefixes(max);
        for (k, &len) in lengths.iter().enumerate() {
            out[k].push(if len == 0 { Word::identity() } else { prefixes[len - 1].clone() });
        }
    }
    out
}

/// Average growth of a fixed list of words, as a function of lambda; with
/// `n` the normalizing walk length.
pub fn growth_average(spec: &FamilySpec, words: &[Word], n: usize, variant: GrowthVariant, lambda: C) -> f64 {
    let table = spec.table(lambda);
    let total: f64 = match variant {
        GrowthVariant::Norm => words.iter().map(|w| table.eval(w).op_norm_log()).sum(),
        GrowthVariant::Vector(z) => words.iter().map(|w| table.vector_growth(w, &z)).sum(),
    };
    total / (n as f64 * words.len() as f64)
}

/// Lyapunov field `lambda -> (1/(n m)) sum_i log |rho_lambda(w_i)|`.
///
/// With shared words (the default) every pixel uses the same `m` words, so
/// the field is an exact average of subharmonic functions of lambda. Without
/// them each pixel draws its own walks from a pixel-indexed stream.
pub fn chi_field(spec: &FamilySpec, mu: &WordMeasure, grid: &ParamGrid, p: &ChiFieldParams) -> Result<ScalarField> {
    if p.n == 0 || p.m == 0 {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    check_measure(spec, mu)?;
    let meta = FieldMeta {
        kind: if p.shared_words { "chi".into() } else { "chi-unshared".into() },
        n: Some(p.n),
        m: Some(p.m),
        seed: Some(p.seed),
    };
    if p.shared_words {
        let words = shared_words(mu, p.n, p.m, p.seed);
        ScalarField::from_fn(*grid, meta, |l| growth_average(spec, &words, p.n, p.variant, l))
    } else {
        let base = WalkSampler::new(mu.clone(), derive_seed(p.seed, purpose::PIXEL_WORDS), 0);
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let words: Vec<Word> = (0..p.m)
                    .map(|i| base.split(k as u64 * p.m as u64 + i as u64).sample_walk(p.n))
                    .collect();
                growth_average(spec, &words, p.n, p.variant, grid.pixel_at(k))
            })
            .collect();
        ScalarField::new(*grid, values, meta)
    }
}

/// Shared-words fields at several lengths from one set of `m` walks: the
/// field for `lengths[k]` is the same as [`chi_field`] with shared words at
/// that length, but every walk is multiplied out only once.
///
/// With `control_variate` each sample is corrected by the martingale
/// `sum_k (s(g_k, z_{k-1}) - E_g s(g, z_{k-1}))`, where
/// `s(g, z) = log(|g Z| / |Z|)` along the chain `z_k = g_k z_{k-1}` started
/// at `Z0` (the vector variant's point, or `0` for the norm). The
/// correction has mean zero, so the expectation of every field is
/// unchanged while most of the walk-to-walk noise cancels.
pub fn nested_chi_fields(
    spec: &FamilySpec,
    mu: &WordMeasure,
    grid: &ParamGrid,
    lengths: &[usize],
    m: usize,
    seed: u64,
    variant: GrowthVariant,
    control_variate: bool,
) -> Result<Vec<ScalarField>> {
    if m == 0 || lengths.is_empty() || lengths.contains(&0) {
        return Err(Error::InvalidArgument("lengths and m must be positive".into()));
    }
    check_measure(spec, mu)?;
    let max = lengths.iter().copied().max().unwrap_or(0);
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::SHARED_WORDS), 0);
    let increments: Vec<Vec<usize>> = (0..m).map(|i| base.split(i as u64).sample_increments(max)).collect();
    let weights: Vec<f64> = mu.atoms().iter().map(|(_, p)| *p).collect();
    let z0 = match variant {
        GrowthVariant::Norm => RiemannPoint::zero(),
        GrowthVariant::Vector(z) => z,
    };
    let per_pixel: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let table = spec.table(grid.pixel_at(k));
            let atoms: Vec<MoebiusMap> = mu.atoms().iter().map(|(w, _)| table.eval(w)).collect();
            let mut sums = vec![0.0; lengths.len()];
            for walk in &increments {
                let mut acc = MoebiusMap::identity();
                let (mut z, mut growth, mut drift) = (z0, 0.0, 0.0);
                for (step, &g) in walk.iter().enumerate() {
                    if control_variate {
                        for (a, atom) in atoms.iter().enumerate() {
                            drift += weights[a] * atom.apply_with_growth(&z).1;
                        }
                    }
                    let (next, d) = atoms[g].apply_with_growth(&z);
                    z = next;
                    growth += d;
                    if variant == GrowthVariant::Norm {
                        acc = atoms[g].compose(&acc);
                    }
                    for (slot, &n) in lengths.iter().enumerate() {
                        if n == step + 1 {
                            let raw = match variant {
                                GrowthVariant::Norm => acc.op_norm_log(),
                                GrowthVariant::Vector(_) => growth,
                            };
                            sums[slot] += if control_variate { raw - growth + drift } else { raw };
                        }
                    }
                }
            }
            lengths.iter().zip(sums).map(|(&n, s)| s / (n as f64 * m as f64)).collect()
        })
        .collect();
    lengths
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            let kind = if control_variate { "chi-controlled" } else { "chi" };
            let meta = FieldMeta { kind: kind.into(), n: Some(n), m: Some(m), seed: Some(seed) };
            ScalarField::new(*grid, per_pixel.iter().map(|v| v[slot]).collect(), meta)
        })
        .collect()
}
