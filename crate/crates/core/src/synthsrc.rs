//! Synthetic sources: finite Markov chains with exact autocorrelation
//! oracles, and symbol-mutation binary trees with long-range structure.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autocorr::{AutocorrCurve, CurveMeta, CurvePoint};
use crate::corpus::TokenSeries;
use crate::embedding::VectorSeries;
use crate::error::{Error, Result, SpecProblem};

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const STATIONARY_TOLERANCE: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 1_000_000;
const MAX_TREE_DEPTH: u32 = 28;
/// Largest alphabet accepted by the plug-in mutual information estimator.
pub const MI_MAX_ALPHABET: usize = 64;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Spec(SpecProblem::Invalid(msg.into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from_io_at(e, path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub states: Vec<String>,
    /// Row-stochastic; `transition[i][j]` is the probability of `i -> j`.
    pub transition: Vec<Vec<f64>>,
    pub encoding: BTreeMap<String, Vec<f64>>,
}

impl MarkovSpec {
    /// Two states `a`, `b` encoded as `+1`, `-1`, switching with probability `q`.
    pub fn symmetric_two_state(q: f64) -> Self {
        MarkovSpec {
            states: vec!["a".into(), "b".into()],
            transition: vec![vec![1.0 - q, q], vec![q, 1.0 - q]],
            encoding: BTreeMap::from([("a".into(), vec![1.0]), ("b".into(), vec![-1.0])]),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: MarkovSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: MarkovSpec = read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.states.len();
        if s == 0 {
            return Err(invalid("no states"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.states.iter().find(|st| !seen.insert(st.as_str())) {
            return Err(invalid(format!("duplicate state {dup:?}")));
        }
        if self.transition.len() != s || self.transition.iter().any(|row| row.len() != s) {
            return Err(invalid(format!("transition matrix must be {s}x{s}")));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(invalid(format!("row {i} sums to {sum}")));
            }
        }
        if self.encoding.len() != s {
            return Err(invalid("encoding must map exactly the listed states"));
        }
        let mut dim = None;
        for state in &self.states {
            let v = self
                .encoding
                .get(state)
                .ok_or_else(|| invalid(format!("state {state:?} has no encoding")))?;
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("encoding of {state:?} is empty or non-finite")));
            }
            if *dim.get_or_insert(v.len()) != v.len() {
                return Err(invalid("encodings differ in dimension"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.encoding.values().next().map_or(0, Vec::len)
    }

    fn encoding_rows(&self) -> Vec<&[f64]> {
        self.states.iter().map(|s| self.encoding[s].as_slice()).collect()
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.transition[i].iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, _)| j)
    }

    #[allow(clippy::needless_range_loop)]
    fn reachable_from_zero(&self, reverse: bool) -> Vec<bool> {
        let s = self.len();
        let mut seen = vec![false; s];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..s {
                let p = if reverse { self.transition[v][u] } else { self.transition[u][v] };
                if p > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Every state reaches every other along positive-probability edges.
    pub fn is_irreducible(&self) -> bool {
        !self.is_empty()
            && self.reachable_from_zero(false).iter().all(|&r| r)
            && self.reachable_from_zero(true).iter().all(|&r| r)
    }

    /// Period of an irreducible chain: the gcd of `level(u) + 1 - level(v)`
    /// over all edges, with levels from a breadth-first search.
    pub fn period(&self) -> Result<usize> {
        self.validate()?;
        if !self.is_irreducible() {
            return Err(Error::Spec(SpecProblem::Reducible));
        }
        let s = self.len();
        let mut level = vec![usize::MAX; s];
        level[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in self.successors(u) {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0usize;
        for u in 0..s {
            for v in self.successors(u) {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
        Ok(g)
    }

    /// Stationary distribution by power iteration from the uniform vector.
    ///
    /// Fails only if the iteration does not settle, which is the case for
    /// periodic chains started off their stationary law.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let s = self.len();
        let mut pi = vec![1.0 / s as f64; s];
        let mut next = vec![0.0; s];
        for _ in 0..STATIONARY_MAX_ITER {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, row) in self.transition.iter().enumerate() {
                for (j, &p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let delta: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if delta < STATIONARY_TOLERANCE {
                return Ok(pi);
            }
        }
        Err(Error::Spec(SpecProblem::NoStationary))
    }

    /// Moduli of the transition matrix eigenvalues, largest first.
    pub fn eigenvalue_moduli(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let s = self.len();
        let m = DMatrix::from_fn(s, s, |i, j| self.transition[i][j]);
        let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        Ok(moduli)
    }

    /// `|λ₂|`, the second largest eigenvalue modulus; zero for one state.
    pub fn second_eigenvalue_modulus(&self) -> Result<f64> {
        Ok(self.eigenvalue_moduli()?.get(1).copied().unwrap_or(0.0))
    }

    pub fn state_index(&self, symbol: &str) -> Option<usize> {
        self.states.iter().position(|s| s == symbol)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Draws an index from `weights` (non-negative, summing to one).
fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below one; fall back to the last
    // state with positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// State indices of an `n`-step run started from the stationary law.
pub fn generate_markov_indices(spec: &MarkovSpec, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Param("series length must be at least 1".into()));
    }
    let pi = spec.stationary()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut state = sample_index(&mut rng, &pi);
    out.push(state);
    for _ in 1..n {
        state = sample_index(&mut rng, &spec.transition[state]);
        out.push(state);
    }
    Ok(out)
}

pub fn generate_markov(spec: &MarkovSpec, n: usize, seed: u64) -> Result<TokenSeries> {
    let idx = generate_markov_indices(spec, n, seed)?;
    Ok(TokenSeries::new(
        idx.into_iter().map(|i| spec.states[i].clone()).collect(),
        format!("markov:seed={seed}"),
    ))
}

/// Maps each index to its row of `table`.
pub fn encode_indices(indices: &[usize], table: &[&[f64]], source_id: &str) -> Result<VectorSeries> {
    let dim = table.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(indices.len() * dim);
    for &i in indices {
        let row = table
            .get(i)
            .ok_or_else(|| Error::Param(format!("symbol index {i} has no encoding")))?;
        data.extend_from_slice(row);
    }
    VectorSeries::from_flat(data, dim, source_id)
}

/// Encodes a run of state indices with the spec's state vectors.
pub fn encode_states(spec: &MarkovSpec, indices: &[usize]) -> Result<VectorSeries> {
    encode_indices(indices, &spec.encoding_rows(), "markov")
}

/// Encodes a token series of state names, e.g. one read back from disk.
pub fn encode_tokens(spec: &MarkovSpec, ts: &TokenSeries) -> Result<VectorSeries> {
    let idx = ts
        .tokens()
        .iter()
        .map(|t| spec.state_index(t).ok_or_else(|| Error::Param(format!("unknown state {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    encode_indices(&idx, &spec.encoding_rows(), ts.source_id())
}

fn mat_mul(a: &[f64], b: &[f64], s: usize) -> Vec<f64> {
    let mut out = vec![0.0; s * s];
    for i in 0..s {
        for k in 0..s {
            let aik = a[i * s + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..s {
                out[i * s + j] += aik * b[k * s + j];
            }
        }
    }
    out
}

fn mat_pow(m: &[f64], mut e: usize, s: usize) -> Vec<f64> {
    let mut result: Vec<f64> = (0..s * s).map(|k| if k / s == k % s { 1.0 } else { 0.0 }).collect();
    let mut base = m.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            result = mat_mul(&result, &base, s);
        }
        e >>= 1;
        if e > 0 {
            base = mat_mul(&base, &base, s);
        }
    }
    result
}

/// Exact autocorrelation of the encoded stationary chain at each lag.
///
/// Computed with centered encodings `g = f - μ`, so that
/// `C(τ) = Σ π_i (M^τ)_ij ⟨g_i, g_j⟩ / Σ π_i |g_i|²`.
pub fn markov_autocorr_exact(spec: &MarkovSpec, taus: &[usize]) -> Result<AutocorrCurve> {
    spec.validate()?;
    if !spec.is_irreducible() {
        return Err(Error::Spec(SpecProblem::Reducible));
    }
    let period = spec.period()?;
    if period != 1 {
        return Err(Error::Spec(SpecProblem::Periodic(period)));
    }
    let s = spec.len();
    let pi = spec.stationary()?;
    let f = spec.encoding_rows();
    let d = spec.dim();
    let mu: Vec<f64> = (0..d).map(|k| (0..s).map(|i| pi[i] * f[i][k]).sum()).collect();
    let g: Vec<Vec<f64>> = f.iter().map(|row| row.iter().zip(&mu).map(|(x, m)| x - m).collect()).collect();
    let gram: Vec<f64> = (0..s * s)
        .map(|k| g[k / s].iter().zip(&g[k % s]).map(|(a, b)| a * b).sum())
        .collect();
    let variance: f64 = (0..s).map(|i| pi[i] * gram[i * s + i]).sum();
    let scale: f64 = (0..s).map(|i| pi[i] * f[i].iter().map(|x| x * x).sum::<f64>()).sum();
    if variance <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Spec(SpecProblem::ZeroVariance));
    }

    let m: Vec<f64> = spec.transition.iter().flatten().copied().collect();
    let mut order: Vec<usize> = taus.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut current = mat_pow(&m, 0, s);
    let mut at = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for &tau in &order {
        current = mat_mul(&current, &mat_pow(&m, tau - at, s), s);
        at = tau;
        let c = if tau == 0 {
            1.0
        } else {
            let cov: f64 = (0..s * s).map(|k| pi[k / s] * current[k] * gram[k]).sum();
            cov / variance
        };
        points.push(CurvePoint { tau, c });
    }
    AutocorrCurve::from_points(
        points,
        CurveMeta {
            series_length: None,
            dim: Some(d),
            window: Some(1),
            normalization: Some(variance),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcfgTreeSpec {
    pub alphabet: Vec<String>,
    pub depth: u32,
    pub mutation_prob: f64,
    pub root_distribution: Vec<f64>,
}

impl PcfgTreeSpec {
    /// Symbols `a`, `b` with a uniform root.
    pub fn binary(depth: u32, mutation_prob: f64) -> Self {
        PcfgTreeSpec {
            alphabet: vec!["a".into(), "b".into()],
            depth,
            mutation_prob,
            root_distribution: vec![0.5, 0.5],
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: PcfgTreeSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: PcfgTreeSpec = read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet.is_empty() {
            return Err(invalid("empty alphabet"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.alphabet.iter().find(|a| !seen.insert(a.as_str())) {
            return Err(invalid(format!("duplicate symbol {dup:?}")));
        }
        if self.root_distribution.len() != self.alphabet.len() {
            return Err(invalid("root distribution length differs from alphabet size"));
        }
        if self.root_distribution.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(invalid("root distribution has a negative or non-finite entry"));
        }
        let sum: f64 = self.root_distribution.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("root distribution sums to {sum}")));
        }
        if !(0.0..=0.5).contains(&self.mutation_prob) {
            return Err(invalid(format!("mutation probability {} outside [0, 0.5]", self.mutation_prob)));
        }
        if self.depth > MAX_TREE_DEPTH {
            return Err(invalid(format!("depth {} exceeds {MAX_TREE_DEPTH}", self.depth)));
        }
        Ok(())
    }

    pub fn leaf_count(&self) -> usize {
        1usize << self.depth
    }
}

/// Leaf symbol indices of one tree, left to right.
pub fn generate_pcfg_indices(spec: &PcfgTreeSpec, seed: u64) -> Result<Vec<usize>> {
    spec.validate()?;
    let k = spec.alphabet.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = vec![sample_index(&mut rng, &spec.root_distribution)];
    for _ in 0..spec.depth {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &parent in &level {
            for _ in 0..2 {
                let mutate = k > 1 && rng.random::<f64>() < spec.mutation_prob;
                next.push(if mutate {
                    let r = rng.random_range(0..k - 1);
                    if r >= parent { r + 1 } else { r }
                } else {
                    parent
                });
            }
        }
        level = next;
    }
    Ok(level)
}

pub fn generate_pcfg(spec: &PcfgTreeSpec, seed: u64) -> Result<TokenSeries> {
    let idx = generate_pcfg_indices(spec, seed)?;
    Ok(TokenSeries::new(
        idx.into_iter().map(|i| spec.alphabet[i].clone()).collect(),
        format!("pcfg:seed={seed}"),
    ))
}

/// Plug-in mutual information, in bits, between symbols `tau` apart.
pub fn mutual_information(ts: &TokenSeries, tau: usize) -> Result<f64> {
    if ts.vocab().len() > MI_MAX_ALPHABET {
        return Err(Error::Param(format!(
            "alphabet of {} symbols exceeds the limit of {MI_MAX_ALPHABET}",
            ts.vocab().len()
        )));
    }
    let index: HashMap<&str, usize> = ts.vocab().keys().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let idx: Vec<usize> = ts.tokens().iter().map(|t| index[t.as_str()]).collect();
    mutual_information_indices(&idx, tau)
}

/// As [`mutual_information`], on symbol indices.
pub fn mutual_information_indices(symbols: &[usize], tau: usize) -> Result<f64> {
    if symbols.len() <= tau {
        return Err(Error::Param(format!(
            "series of length {} is too short for lag {tau}",
            symbols.len()
        )));
    }
    let k = symbols.iter().max().map_or(0, |m| m + 1);
    if k > MI_MAX_ALPHABET {
        return Err(Error::Param(format!("symbol index {} exceeds the alphabet limit", k - 1)));
    }
    let pairs = symbols.len() - tau;
    let mut joint = vec![0u64; k * k];
    let mut left = vec![0u64; k];
    let mut right = vec![0u64; k];
    for t in 0..pairs {
        let (a, b) = (symbols[t], symbols[t + tau]);
        joint[a * k + b] += 1;
        left[a] += 1;
        right[b] += 1;
    }
    let n = pairs as f64;
    let mut mi = 0.0;
    for a in 0..k {
        for b in 0..k {
            let c = joint[a * k + b];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / n;
            mi += pab * (pab * n * n / (left[a] as f64 * right[b] as f64)).log2();
        }
    }
    Ok(mi.max(0.0))
}
