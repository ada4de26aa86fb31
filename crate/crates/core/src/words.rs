//! Freely reduced words, finitely supported measures on the free group, and
//! seeded random walks `l_n = g_n ... g_1`.

use std::collections::BTreeMap;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Default cap on `|supp(mu)|^n` for exact convolution powers.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub generator: u16,
    pub inverted: bool,
}

impl Letter {
    pub fn new(generator: u16, inverted: bool) -> Self {
        Letter { generator, inverted }
    }

    pub fn inverse(self) -> Self {
        Letter { generator: self.generator, inverted: !self.inverted }
    }
}

/// A freely reduced word; the empty word is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn identity() -> Self {
        Word::default()
    }

    /// Free reduction by stack cancellation.
    pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut stack: Vec<Letter> = Vec::new();
        for l in letters {
            if stack.last() == Some(&l.inverse()) {
                stack.pop();
            } else {
                stack.push(l);
            }
        }
        Word { letters: stack }
    }

    pub fn letter(generator: u16, inverted: bool) -> Self {
        Word { letters: vec![Letter::new(generator, inverted)] }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word { letters: self.letters.iter().rev().map(|l| l.inverse()).collect() }
    }

    /// Reduced product `self * rhs`.
    pub fn concat(&self, rhs: &Word) -> Word {
        let mut k = 0;
        let (l, r) = (&self.letters, &rhs.letters);
        while k < l.len() && k < r.len() && l[l.len() - 1 - k] == r[k].inverse() {
            k += 1;
        }
        let mut letters = Vec::with_capacity(l.len() + r.len() - 2 * k);
        letters.extend_from_slice(&l[..l.len() - k]);
        letters.extend_from_slice(&r[k..]);
        Word { letters }
    }

    /// Reduced product `step * self`, the update `l_{n+1} = g_{n+1} l_n`.
    pub fn left_multiply(&self, step: &Word) -> Word {
        step.concat(self)
    }

    pub fn max_generator(&self) -> Option<u16> {
        self.letters.iter().map(|l| l.generator).max()
    }

    /// Parses generator names with an optional `'` suffix for inverses, e.g.
    /// `"ab'"`. Names are matched greedily, longest first.
    pub fn parse(s: &str, names: &[String]) -> Result<Word> {
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(names[i].len()));
        let mut rest = s.trim();
        let mut letters = Vec::new();
        while !rest.is_empty() {
            let idx = order
                .iter()
                .copied()
                .find(|&i| !names[i].is_empty() && rest.starts_with(names[i].as_str()))
                .ok_or_else(|| Error::UnknownGenerator(rest.chars().next().unwrap().to_string()))?;
            rest = &rest[names[idx].len()..];
            let inverted = rest.starts_with('\'');
            if inverted {
                rest = &rest[1..];
            }
            letters.push(Letter::new(idx as u16, inverted));
        }
        Ok(Word::reduce(letters))
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> WordDisplay<'a> {
        WordDisplay { word: self, names }
    }
}

pub struct WordDisplay<'a> {
    word: &'a Word,
    names: &'a [String],
}

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return write!(f, "1");
        }
        for l in &self.word.letters {
            match self.names.get(l.generator as usize) {
                Some(n) => write!(f, "{n}")?,
                None => write!(f, "g{}", l.generator)?,
            }
            if l.inverted {
                write!(f, "'")?;
            }
        }
        Ok(())
    }
}

/// One atom of a measure as it appears in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub word: String,
    pub weight: f64,
}

/// A finitely supported probability measure on words.
#[derive(Clone, Debug, PartialEq)]
pub struct WordMeasure {
    atoms: Vec<(Word, f64)>,
}

impl WordMeasure {
    /// Weights must be positive and sum to one within `1e-12`.
    pub fn new(atoms: Vec<(Word, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if let Some((_, w)) = atoms.iter().find(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-positive weight {w}")));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(WordMeasure { atoms })
    }

    /// Loads atoms from a config; weights summing to within 1% of one are
    /// renormalized, anything else is rejected.
    pub fn from_spec(spec: &[AtomSpec], names: &[String]) -> Result<Self> {
        let mut atoms = Vec::with_capacity(spec.len());
        for a in spec {
            atoms.push((Word::parse(&a.word, names)?, a.weight));
        }
        if let Some((_, w)) = atoms.iter().find(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-positive weight {w}")));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 0.01 {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1 within 1%"
            )));
        }
        for (_, w) in &mut atoms {
            *w /= total;
        }
        WordMeasure::new(atoms)
    }

    /// Uniform measure on `{g, g^-1}` over `k` generators.
    pub fn uniform_symmetric(k: u16) -> Self {
        let w = 1.0 / (2.0 * k as f64);
        let atoms = (0..k)
            .flat_map(|g| [(Word::letter(g, false), w), (Word::letter(g, true), w)])
            .collect();
        WordMeasure { atoms }
    }

    pub fn dirac(word: Word) -> Self {
        WordMeasure { atoms: vec![(word, 1.0)] }
    }

    pub fn atoms(&self) -> &[(Word, f64)] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    pub fn max_atom_length(&self) -> usize {
        self.atoms.iter().map(|(w, _)| w.len()).max().unwrap_or(0)
    }

    pub fn max_generator(&self) -> Option<u16> {
        self.atoms.iter().filter_map(|(w, _)| w.max_generator()).max()
    }

    /// Image under `g -> g^-1`.
    pub fn reversed(&self) -> Self {
        WordMeasure { atoms: self.atoms.iter().map(|(w, p)| (w.inverse(), *p)).collect() }
    }

    /// Mass at a given reduced word.
    pub fn mass_of(&self, word: &Word) -> f64 {
        self.atoms.iter().filter(|(w, _)| w == word).map(|(_, p)| p).sum()
    }

    pub fn to_spec(&self, names: &[String]) -> Vec<AtomSpec> {
        self.atoms
            .iter()
            .map(|(w, p)| AtomSpec { word: w.display(names).to_string(), weight: *p })
            .collect()
    }
}

/// Exact `n`-th convolution power, merging equal reduced words.
pub fn convolution_enumerate(mu: &WordMeasure, n: u32, cap: u64) -> Result<WordMeasure> {
    let needed = (mu.support_size() as u128).checked_pow(n).unwrap_or(u128::MAX);
    if needed > cap as u128 {
        return Err(Error::CapExceeded { needed, cap });
    }
    let mut current: BTreeMap<Word, f64> = BTreeMap::new();
    current.insert(Word::identity(), 1.0);
    for _ in 0..n {
        let mut next: BTreeMap<Word, f64> = BTreeMap::new();
        for (w, p) in &current {
            for (g, q) in &mu.atoms {
                *next.entry(w.left_multiply(g)).or_insert(0.0) += p * q;
            }
        }
        current = next;
    }
    Ok(WordMeasure { atoms: current.into_iter().collect() })
}

/// Seeded sampler of `mu`-random walks. Equal `(seed, stream)` and equal
/// call sequences give equal outputs on every platform.
#[derive(Clone, Debug)]
pub struct WalkSampler {
    measure: WordMeasure,
    index: WeightedIndex<f64>,
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl WalkSampler {
    pub fn new(measure: WordMeasure, seed: u64, stream: u64) -> Self {
        let index = WeightedIndex::new(measure.atoms.iter().map(|(_, w)| *w))
            .expect("validated measure has positive weights");
        WalkSampler { measure, index, seed, stream, rng: stream_rng(seed, stream) }
    }

    /// Fresh sampler on another stream of the same seed.
    pub fn split(&self, stream: u64) -> WalkSampler {
        WalkSampler {
            measure: self.measure.clone(),
            index: self.index.clone(),
            seed: self.seed,
            stream,
            rng: stream_rng(self.seed, stream),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn measure(&self) -> &WordMeasure {
        &self.measure
    }

    /// One increment `g ~ mu`.
    pub fn sample_step(&mut self) -> &Word {
        let i = self.index.sample(&mut self.rng);
        &self.measure.atoms[i].0
    }

    /// `l_n = g_n ... g_1` with i.i.d. increments.
    pub fn sample_walk(&mut self, n: usize) -> Word {
        let mut w = Word::identity();
        for _ in 0..n {
            let i = self.index.sample(&mut self.rng);
            w = w.left_multiply(&self.measure.atoms[i].0);
        }
        w
    }

    /// The prefixes `l_1, ..., l_n` of a single walk.
    pub fn sample_prefixes(&mut self, n: usize) -> Vec<Word> {
        let mut out = Vec::with_capacity(n);
        let mut w = Word::identity();
        for _ in 0..n {
            let i = self.index.sample(&mut self.rng);
            w = w.left_multiply(&self.measure.atoms[i].0);
            out.push(w.clone());
        }
        out
    }

    /// The increments `g_1, ..., g_n` themselves, in draw order.
    pub fn sample_increments(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.index.sample(&mut self.rng)).collect()
    }
}
