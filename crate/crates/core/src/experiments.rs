//! Experiment harness: empirical measures of loci, measure comparison,
//! type-change detection and the random-product decay statistics.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::lyapunov::{check_measure, chi_norm_estimate, FieldMeta, ParamGrid};
use crate::moebius::{MapType, MoebiusMap, RiemannPoint, DEFAULT_CLASSIFY_TOL};
use crate::potential::MassField;
use crate::rng::{derive_seed, purpose};
use crate::words::{AtomSpec, WalkSampler, Word, WordMeasure};
use crate::zeros::{collision_locus, trace_locus, PointCloud, ZeroBox};

type C = Complex64;

/// What produced a report, enough to rerun it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub family: String,
    pub measure: Vec<AtomSpec>,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl Settings {
    pub fn new(spec: &FamilySpec, mu: &WordMeasure, seed: u64) -> Self {
        Settings {
            family: format!("{:016x}", spec.fingerprint()),
            measure: mu.to_spec(spec.names()),
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with<V: Serialize>(mut self, key: &str, value: V) -> Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).expect("serializable setting"));
        self
    }
}

/// Bins `weight * mult` at each point into its cell. Points outside the
/// interior of the grid go to `overflow`.
pub fn empirical_measure(cloud: &PointCloud, weight: f64, grid: &ParamGrid) -> Result<MassField> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::InvalidArgument("weight must be positive".into()));
    }
    let mut masses = vec![0.0; grid.len()];
    let mut overflow = 0.0;
    for p in &cloud.points {
        let m = weight * p.mult as f64;
        match grid.locate(p.lambda()) {
            Some((i, j)) if grid.is_interior(i, j) => masses[grid.index(i, j)] += m,
            _ => overflow += m,
        }
    }
    let mut out = MassField::new(*grid, masses, FieldMeta::kind("empirical"))?;
    out.overflow = overflow;
    Ok(out)
}

/// One coarse block of a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub bi: usize,
    pub bj: usize,
    pub p: f64,
    pub q: f64,
    /// `p / q`, absent when `q = 0`.
    pub ratio: Option<f64>,
}

/// Distance between two mass fields after normalization and coarsening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tv: f64,
    pub correlation: f64,
    pub coarsen: usize,
    pub blocks: Vec<BlockRow>,
    pub settings: Settings,
}

impl ComparisonReport {
    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }
}

fn coarse_probabilities(m: &MassField, coarsen: usize) -> Result<Vec<f64>> {
    let g = &m.grid;
    let (bx, by) = (g.nx / coarsen, g.ny / coarsen);
    let mut blocks = vec![0.0; bx * by];
    // negative cells are discretization noise of a positive measure
    for j in 0..g.ny {
        for i in 0..g.nx {
            blocks[(j / coarsen) * bx + i / coarsen] += m.at(i, j).max(0.0);
        }
    }
    let total: f64 = blocks.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMeasure(total));
    }
    Ok(blocks.into_iter().map(|b| b / total).collect())
}

fn pearson(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len() as f64;
    let (mp, mq) = (p.iter().sum::<f64>() / n, q.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in p.iter().zip(q) {
        sxy += (x - mp) * (y - mq);
        sxx += (x - mp) * (x - mp);
        syy += (y - mq) * (y - mq);
    }
    if sxx == 0.0 || syy == 0.0 {
        return if p == q { 1.0 } else { 0.0 };
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Normalizes both fields to total 1 (negative cells clipped to 0), sums
/// them over `coarsen x coarsen` blocks, and reports total variation and
/// Pearson correlation over blocks.
pub fn compare_mass(m1: &MassField, m2: &MassField, coarsen: usize) -> Result<ComparisonReport> {
    if m1.grid != m2.grid {
        return Err(Error::InvalidArgument("mass fields live on different grids".into()));
    }
    let g = &m1.grid;
    if coarsen == 0 || !g.nx.is_multiple_of(coarsen) || !g.ny.is_multiple_of(coarsen) {
        return Err(Error::InvalidArgument(format!("coarsen factor {coarsen} must divide {}x{}", g.nx, g.ny)));
    }
    let p = coarse_probabilities(m1, coarsen)?;
    let q = coarse_probabilities(m2, coarsen)?;
    let tv = 0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let bx = g.nx / coarsen;
    let blocks = p
        .iter()
        .zip(&q)
        .enumerate()
        .map(|(k, (&p, &q))| BlockRow { bi: k % bx, bj: k / bx, p, q, ratio: (q > 0.0).then(|| p / q) })
        .collect();
    Ok(ComparisonReport { tv, correlation: pearson(&p, &q), coarsen, blocks, settings: Settings::default() })
}

/// Boolean flags over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMask {
    pub grid: ParamGrid,
    pub flags: Vec<bool>,
}

impl PixelMask {
    pub fn empty(grid: ParamGrid) -> Self {
        PixelMask { grid, flags: vec![false; grid.len()] }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn at(&self, i: usize, j: usize) -> bool {
        self.flags[self.grid.index(i, j)]
    }

    /// Whether every flag of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &PixelMask) -> bool {
        self.flags.iter().zip(&other.flags).all(|(a, b)| !a || *b)
    }

    /// Flags every pixel within Chebyshev distance `r` of a flagged one.
    pub fn dilate(&self, r: usize) -> PixelMask {
        let g = self.grid;
        let mut out = PixelMask::empty(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                if self.at(i, j) {
                    for q in j.saturating_sub(r)..=(j + r).min(g.ny - 1) {
                        for p in i.saturating_sub(r)..=(i + r).min(g.nx - 1) {
                            out.flags[g.index(p, q)] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// Fraction of the flags of `self` lying inside `other`.
    pub fn fraction_within(&self, other: &PixelMask) -> f64 {
        let n = self.count();
        if n == 0 {
            return 1.0;
        }
        self.flags.iter().zip(&other.flags).filter(|(a, b)| **a && **b).count() as f64 / n as f64
    }

    /// Cells whose mass exceeds `threshold`.
    pub fn above(mass: &MassField, threshold: f64) -> PixelMask {
        PixelMask { grid: mass.grid, flags: mass.masses.iter().map(|m| *m > threshold).collect() }
    }
}

/// Empirical `q`-quantile (`0 <= q <= 1`), linear interpolation.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Whether `tr^2` moving linearly from `s` to `t` meets the real segment
/// `[0, 4]`, where maps are elliptic or parabolic.
fn crosses_elliptic_segment(s: C, t: C) -> bool {
    if !(s.re.is_finite() && s.im.is_finite() && t.re.is_finite() && t.im.is_finite()) {
        return false;
    }
    if (s.im > 0.0) == (t.im > 0.0) || s.im == t.im {
        return false;
    }
    let x = s.re + (t.re - s.re) * s.im / (s.im - t.im);
    let slack = 1e-12 * s.norm().max(t.norm()).max(1.0);
    x >= -slack && x <= 4.0 + slack
}

/// Pixels where some word changes conjugacy type against a neighbour: the
/// classes differ, or `tr^2` passes over the elliptic segment `[0, 4]`
/// between the two pixel centers.
pub fn type_change_mask(spec: &FamilySpec, words: &[Word], grid: &ParamGrid) -> Result<PixelMask> {
    for w in words {
        spec.evaluate(w, grid.pixel(0, 0))?;
    }
    let g = *grid;
    let mut mask = PixelMask::empty(g);
    for w in words {
        let vals: Vec<(MapType, C)> = (0..g.len())
            .into_par_iter()
            .map(|k| {
                let m = spec.table(g.pixel_at(k)).eval(w);
                (m.classify(DEFAULT_CLASSIFY_TOL), m.tr_squared())
            })
            .collect();
        let differs = |a: usize, b: usize| {
            vals[a].0 != vals[b].0
                || (vals[a].0 == MapType::Loxodromic && crosses_elliptic_segment(vals[a].1, vals[b].1))
        };
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                if i + 1 < g.nx && differs(k, k + 1) {
                    mask.flags[k] = true;
                    mask.flags[k + 1] = true;
                }
                if j + 1 < g.ny && differs(k, k + g.nx) {
                    mask.flags[k] = true;
                    mask.flags[k + g.nx] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// [`type_change_mask`] over all prefixes of `m` random walks of length
/// `n_max`. Walk `i` is the same for every `n_max` and `m`, so the mask only
/// grows with either.
pub fn type_change_locus(
    spec: &FamilySpec,
    mu: &WordMeasure,
    grid: &ParamGrid,
    n_max: usize,
    m: usize,
    seed: u64,
) -> Result<PixelMask> {
    check_measure(spec, mu)?;
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::LOCI), 0);
    let mut words: Vec<Word> = (0..m).flat_map(|i| base.split(i as u64).sample_prefixes(n_max)).collect();
    words.retain(|w| !w.is_empty());
    words.sort();
    words.dedup();
    type_change_mask(spec, &words, grid)
}

/// Wilson score interval at `z` standard deviations.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Threshold sequence for the separation statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EpsilonRule {
    /// `c n^{-alpha}`
    Power { c: f64, alpha: f64 },
    /// `e^{-gamma n}`
    Exponential { gamma: f64 },
}

impl EpsilonRule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EpsilonRule::Power { c, alpha } => c * (n as f64).powf(-alpha),
            EpsilonRule::Exponential { gamma } => (-gamma * n as f64).exp(),
        }
    }
}

/// One row of a decay table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub threshold: f64,
    pub probability: f64,
    pub count: u64,
    pub samples: u64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl DecayRow {
    fn new(n: usize, threshold: f64, count: u64, samples: u64) -> Self {
        let (wilson_low, wilson_high) = wilson_interval(count, samples, WILSON_Z);
        DecayRow { n, threshold, probability: count as f64 / samples as f64, count, samples, wilson_low, wilson_high }
    }
}

/// Probability estimates along a list of walk lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub statistic: String,
    pub rows: Vec<DecayRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_chi: Option<f64>,
}

impl DecayTable {
    /// No later row is significantly above an earlier one: the lower
    /// Wilson bound of every later row stays below the upper bound of
    /// every earlier row.
    pub fn non_increasing_within_wilson(&self) -> bool {
        self.rows.iter().enumerate().all(|(a, r)| self.rows[a + 1..].iter().all(|s| s.wilson_low <= r.wilson_high))
    }

    /// Least-squares slope of `log p` against the row index, over rows with
    /// a nonzero count. `None` with fewer than two such rows.
    pub fn log_probability_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.count > 0)
            .map(|(k, r)| (k as f64, r.probability.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

fn check_lengths(n_list: &[usize], m: usize) -> Result<()> {
    if n_list.is_empty() || n_list.contains(&0) || m == 0 {
        return Err(Error::InvalidArgument("need positive lengths and sample count".into()));
    }
    Ok(())
}

/// `rho_lambda(l_n)` at each requested length along one walk, built by
/// left multiplication `l_{k+1} = g_{k+1} l_k`.
fn walk_products(atoms: &[MoebiusMap], sampler: &mut WalkSampler, n_list: &[usize]) -> Vec<MoebiusMap> {
    let max = n_list.iter().copied().max().unwrap_or(0);
    let mut out = vec![MoebiusMap::identity(); n_list.len()];
    let mut acc = MoebiusMap::identity();
    for (k, i) in sampler.sample_increments(max).into_iter().enumerate() {
        acc = atoms[i].compose(&acc);
        for (slot, &n) in n_list.iter().enumerate() {
            if n == k + 1 {
                out[slot] = acc;
            }
        }
    }
    out
}

/// Runs `f` on the products of `m` walks (walk `i` on stream `i` of the
/// purpose-salted seed) and counts, per length, how often it returns true.
fn count_events<F>(
    spec: &FamilySpec,
    mu: &WordMeasure,
    lambda: C,
    n_list: &[usize],
    m: usize,
    seed: u64,
    f: F,
) -> Result<Vec<u64>>
where
    F: Fn(usize, &MoebiusMap) -> bool + Sync,
{
    check_measure(spec, mu)?;
    let table = spec.table(lambda);
    let atoms: Vec<MoebiusMap> = mu.atoms().iter().map(|(w, _)| table.eval(w)).collect();
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::STATS), 0);
    let hits: Vec<Vec<bool>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let prods = walk_products(&atoms, &mut base.split(i as u64), n_list);
            n_list.iter().zip(&prods).map(|(&n, p)| f(n, p)).collect()
        })
        .collect();
    Ok((0..n_list.len()).map(|k| hits.iter().filter(|h| h[k]).count() as u64).collect())
}

/// Chordal distance of the fixed points, with `0` for the identity.
fn delta_or_zero(m: &MoebiusMap) -> f64 {
    m.delta().unwrap_or(0.0)
}

/// `P(delta(rho_lambda(l_n)) < eps_n)` for each `n`, from `m` walks. The
/// lengths share walks: row `n` uses the first `n` steps.
pub fn delta_statistics(
    spec: &FamilySpec,
    mu: &WordMeasure,
    lambda: C,
    n_list: &[usize],
    rule: EpsilonRule,
    m: usize,
    seed: u64,
) -> Result<DecayTable> {
    check_lengths(n_list, m)?;
    let counts = count_events(spec, mu, lambda, n_list, m, seed, |n, p| delta_or_zero(p) < rule.at(n))?;
    let rows = n_list.iter().zip(counts).map(|(&n, c)| DecayRow::new(n, rule.at(n), c, m as u64)).collect();
    Ok(DecayTable { statistic: "delta".into(), rows, reference_chi: None })
}

/// `P(|(1/n) log |tr rho_lambda(l_n)| - chi| > eps)` for each `n`. The
/// reference `chi` is the norm estimator at four times the largest `n`.
#[allow(clippy::too_many_arguments)]
pub fn trace_ld_statistics(
    spec: &FamilySpec,
    mu: &WordMeasure,
    lambda: C,
    eps: f64,
    n_list: &[usize],
    m: usize,
    seed: u64,
) -> Result<DecayTable> {
    check_lengths(n_list, m)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let n_ref = 4 * n_list.iter().copied().max().unwrap_or(1);
    let reference = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::ESTIMATOR), 0);
    let chi = chi_norm_estimate(spec, lambda, n_ref, m, &reference)?.value;
    let counts = count_events(spec, mu, lambda, n_list, m, seed, |n, p| {
        let dev = (p.log_abs_trace() / n as f64 - chi).abs();
        !(dev <= eps)
    })?;
    let rows = n_list.iter().zip(counts).map(|(&n, c)| DecayRow::new(n, eps, c, m as u64)).collect();
    Ok(DecayTable { statistic: "trace-deviation".into(), rows, reference_chi: Some(chi) })
}

/// Fraction of `m` independent pairs `(l_n, l'_n)` that fail to be two
/// loxodromic maps whose four fixed points are pairwise at least
/// `e^{-gamma n}` apart.
#[allow(clippy::too_many_arguments)]
pub fn pair_separation_stats(
    spec: &FamilySpec,
    mu: &WordMeasure,
    lambda: C,
    gamma: f64,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<f64> {
    check_lengths(&[n], m)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    check_measure(spec, mu)?;
    let table = spec.table(lambda);
    let atoms: Vec<MoebiusMap> = mu.atoms().iter().map(|(w, _)| table.eval(w)).collect();
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::PAIRS), 0);
    let eps = (-gamma * n as f64).exp();
    let violations = (0..m)
        .into_par_iter()
        .filter(|&i| {
            let g = walk_products(&atoms, &mut base.split(2 * i as u64), &[n])[0];
            let h = walk_products(&atoms, &mut base.split(2 * i as u64 + 1), &[n])[0];
            !separated(&g, &h, eps)
        })
        .count();
    Ok(violations as f64 / m as f64)
}

fn separated(g: &MoebiusMap, h: &MoebiusMap, eps: f64) -> bool {
    let lox = |m: &MoebiusMap| m.classify(DEFAULT_CLASSIFY_TOL) == MapType::Loxodromic;
    if !lox(g) || !lox(h) {
        return false;
    }
    let (Ok((a, b)), Ok((c, d))) = (g.fixed_points(), h.fixed_points()) else {
        return false;
    };
    let pts: [RiemannPoint; 4] = [a, b, c, d];
    (0..4).all(|i| (i + 1..4).all(|j| pts[i].chordal_distance(&pts[j]) >= eps))
}

/// The `k` random words of length `n` whose loci feed the empirical
/// measures; word `i` is walk `i` of the loci stream.
pub fn locus_words(mu: &WordMeasure, n: usize, k: usize, seed: u64) -> Vec<Word> {
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::LOCI), 0);
    (0..k).map(|i| base.split(i as u64).sample_walk(n)).collect()
}

/// Pairs of independent words for collision loci: streams `2i` and `2i+1`.
pub fn locus_word_pairs(mu: &WordMeasure, n: usize, k: usize, seed: u64) -> Vec<(Word, Word)> {
    let base = WalkSampler::new(mu.clone(), derive_seed(seed, purpose::PAIRS), 0);
    (0..k)
        .map(|i| (base.split(2 * i as u64).sample_walk(n), base.split(2 * i as u64 + 1).sample_walk(n)))
        .collect()
}

/// The box used for loci over a grid: the window less a two-pixel margin.
pub fn locus_box(grid: &ParamGrid) -> Result<ZeroBox> {
    ZeroBox::from_window(&grid.window(), 2.0 * grid.spacing())
}

/// `Z(w, t)` for each word, computed independently.
pub fn trace_loci(spec: &FamilySpec, words: &[Word], t: C, bx: &ZeroBox, tol: f64) -> Result<Vec<PointCloud>> {
    words.par_iter().map(|w| trace_locus(spec, w, t, bx, tol)).collect()
}

/// `F(w, h)` for each pair, computed independently.
pub fn collision_loci(spec: &FamilySpec, pairs: &[(Word, Word)], bx: &ZeroBox, tol: f64) -> Result<Vec<PointCloud>> {
    pairs.par_iter().map(|(w, h)| collision_locus(spec, w, h, bx, tol)).collect()
}

/// `(1/k) sum_i weight [cloud_i]` binned on the grid.
pub fn averaged_empirical(clouds: &[PointCloud], weight: f64, grid: &ParamGrid) -> Result<MassField> {
    let all = PointCloud::new(clouds.iter().flat_map(|c| c.points.iter().copied()).collect());
    let k = clouds.len().max(1) as f64;
    empirical_measure(&all, weight / k, grid)
}
