//! One-sided subshifts of finite type.
//!
//! A [`SymbolicSystem`] is an alphabet `0..k0` with a 0/1 transition table;
//! points of the shift space are infinite admissible sequences, but every
//! functional in this crate is determined by a finite prefix, so the public
//! currency is the [`Word`] (a cylinder identifier). Words of a fixed length
//! are always indexed in lexicographic order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest alphabet accepted; words print as base-36 digit strings.
pub const MAX_ALPHABET: usize = 36;

const DIGITS: &[u8; 36] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// Alphabet plus transition table `A[i][j]` (symbol `j` may follow `i`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicSystem {
    alphabet_size: usize,
    transitions: Vec<Vec<bool>>,
}

impl SymbolicSystem {
    /// Builds a system, rejecting dead symbols (empty rows or columns).
    pub fn new(transitions: Vec<Vec<bool>>) -> Result<Self> {
        let k0 = transitions.len();
        if k0 == 0 || k0 > MAX_ALPHABET {
            return Err(Error::invalid(format!(
                "alphabet size must be in 1..={MAX_ALPHABET}, got {k0}"
            )));
        }
        if transitions.iter().any(|row| row.len() != k0) {
            return Err(Error::invalid("transition table must be square"));
        }
        for i in 0..k0 {
            if !transitions[i].iter().any(|&x| x) {
                return Err(Error::invalid(format!("symbol {i} has no successor")));
            }
            if !(0..k0).any(|r| transitions[r][i]) {
                return Err(Error::invalid(format!("symbol {i} has no predecessor")));
            }
        }
        Ok(Self {
            alphabet_size: k0,
            transitions,
        })
    }

    /// Builds from a row-major 0/1 integer table.
    pub fn from_01(rows: &[Vec<u8>]) -> Result<Self> {
        let mut t = Vec::with_capacity(rows.len());
        for row in rows {
            let mut r = Vec::with_capacity(row.len());
            for &x in row {
                match x {
                    0 => r.push(false),
                    1 => r.push(true),
                    other => {
                        return Err(Error::invalid(format!(
                            "transition entries must be 0 or 1, got {other}"
                        )))
                    }
                }
            }
            t.push(r);
        }
        Self::new(t)
    }

    pub fn full_shift(k0: usize) -> Result<Self> {
        Self::new(vec![vec![true; k0]; k0])
    }

    /// `A = [[1,1],[1,0]]`.
    pub fn golden_mean() -> Self {
        Self::new(vec![vec![true, true], vec![true, false]]).expect("valid table")
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn transitions(&self) -> &[Vec<bool>] {
        &self.transitions
    }

    pub fn to_01(&self) -> Vec<Vec<u8>> {
        self.transitions
            .iter()
            .map(|r| r.iter().map(|&x| u8::from(x)).collect())
            .collect()
    }

    #[inline]
    pub fn allowed(&self, i: u8, j: u8) -> bool {
        self.transitions[i as usize][j as usize]
    }

    pub fn successors(&self, i: u8) -> impl Iterator<Item = u8> + '_ {
        (0..self.alphabet_size as u8).filter(move |&j| self.allowed(i, j))
    }

    pub fn is_full_shift(&self) -> bool {
        self.transitions.iter().all(|r| r.iter().all(|&x| x))
    }

    /// Every symbol reaches every other one.
    pub fn is_irreducible(&self) -> bool {
        let k0 = self.alphabet_size;
        (0..k0).all(|s| {
            let mut seen = vec![false; k0];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                for j in 0..k0 {
                    if self.transitions[i][j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.iter().all(|&x| x)
        })
    }

    /// gcd of cycle lengths; `None` for reducible systems.
    pub fn period(&self) -> Option<usize> {
        if !self.is_irreducible() {
            return None;
        }
        let k0 = self.alphabet_size;
        let mut level = vec![usize::MAX; k0];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for j in 0..k0 {
                if self.transitions[i][j] && level[j] == usize::MAX {
                    level[j] = level[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        let mut g = 0usize;
        for i in 0..k0 {
            for j in 0..k0 {
                if self.transitions[i][j] {
                    let d = (level[i] + 1).abs_diff(level[j]);
                    g = gcd(g, d);
                }
            }
        }
        Some(g)
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period() == Some(1)
    }

    pub fn is_admissible(&self, w: &[u8]) -> bool {
        !w.is_empty()
            && w.iter().all(|&s| (s as usize) < self.alphabet_size)
            && w.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    /// Admissible word whose periodic extension is also admissible.
    pub fn is_cyclically_admissible(&self, w: &[u8]) -> bool {
        self.is_admissible(w) && self.allowed(w[w.len() - 1], w[0])
    }

    /// All admissible words of length `n`, lexicographically sorted.
    pub fn admissible_words(&self, n: usize) -> Vec<Word> {
        self.admissible_raw(n).into_iter().map(Word).collect()
    }

    pub(crate) fn admissible_raw(&self, n: usize) -> Vec<Vec<u8>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut layer: Vec<Vec<u8>> = (0..self.alphabet_size as u8).map(|s| vec![s]).collect();
        for _ in 1..n {
            let mut next = Vec::with_capacity(layer.len() * 2);
            for w in &layer {
                let last = *w.last().unwrap();
                for s in self.successors(last) {
                    let mut v = w.clone();
                    v.push(s);
                    next.push(v);
                }
            }
            layer = next;
        }
        layer
    }

    /// Admissible words of length `|w| + extra` starting with `w`, in lex order.
    pub fn extensions(&self, w: &[u8], extra: usize) -> Vec<Vec<u8>> {
        let mut layer = vec![w.to_vec()];
        for _ in 0..extra {
            let mut next = Vec::new();
            for v in &layer {
                match v.last() {
                    Some(&last) => {
                        for s in self.successors(last) {
                            let mut u = v.clone();
                            u.push(s);
                            next.push(u);
                        }
                    }
                    None => {
                        for s in 0..self.alphabet_size as u8 {
                            next.push(vec![s]);
                        }
                    }
                }
            }
            layer = next;
        }
        layer
    }

    /// Number of `x` with `σⁿx = x`, i.e. `tr Aⁿ`.
    pub fn periodic_point_count(&self, n: usize) -> u128 {
        let p = self.adjacency_power(n);
        (0..self.alphabet_size).map(|i| p[i][i]).sum()
    }

    /// Number of admissible words of length `n`, `1ᵀ Aⁿ⁻¹ 1`.
    pub fn word_count(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        self.adjacency_power(n - 1).iter().flatten().sum()
    }

    fn adjacency_power(&self, n: usize) -> Vec<Vec<u128>> {
        let k0 = self.alphabet_size;
        let a: Vec<Vec<u128>> = self
            .transitions
            .iter()
            .map(|r| r.iter().map(|&x| u128::from(x)).collect())
            .collect();
        let mut p: Vec<Vec<u128>> = (0..k0)
            .map(|i| (0..k0).map(|j| u128::from(i == j)).collect())
            .collect();
        for _ in 0..n {
            let mut q = vec![vec![0u128; k0]; k0];
            for i in 0..k0 {
                for l in 0..k0 {
                    if p[i][l] == 0 {
                        continue;
                    }
                    for j in 0..k0 {
                        q[i][j] = q[i][j].saturating_add(p[i][l].saturating_mul(a[l][j]));
                    }
                }
            }
            p = q;
        }
        p
    }

    /// `sup { D_θ(x, y) : x, y ∈ C[w] }`.
    ///
    /// Follows the forced-successor chain from the last symbol of `w`; the
    /// diameter is `θʲ` at the first position `j ≥ |w|` where two continuations
    /// exist, and 0 when the continuation is forced forever.
    pub fn cylinder_diam_theta(&self, w: &[u8], theta: Theta) -> f64 {
        debug_assert!(self.is_admissible(w));
        let mut last = *w.last().expect("nonempty word");
        let mut j = w.len();
        // a forced chain longer than the alphabet has entered a forced cycle
        for _ in 0..=self.alphabet_size {
            let mut succ = self.successors(last);
            let first = succ.next().expect("no dead symbols");
            if succ.next().is_some() {
                return theta.get().powi(j as i32);
            }
            last = first;
            j += 1;
        }
        0.0
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A finite admissible word, standing for the cylinder of sequences beginning with it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>) -> Self {
        Word(symbols)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Drops the first symbol.
    pub fn shift(&self) -> Word {
        Word(self.0.get(1..).unwrap_or(&[]).to_vec())
    }

    /// Parses a digit string, checking admissibility against `system`.
    pub fn parse_in(s: &str, system: &SymbolicSystem) -> Result<Word> {
        let w: Word = s.parse()?;
        if !system.is_admissible(&w.0) {
            return Err(Error::invalid(format!("word {s} is not admissible")));
        }
        Ok(w)
    }
}

impl From<&[u8]> for Word {
    fn from(s: &[u8]) -> Self {
        Word(s.to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{}", DIGITS[s as usize] as char)?;
        }
        Ok(())
    }
}

impl serde::Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::invalid(format!("bad symbol '{c}' in word {s}")))
            })
            .collect::<Result<Vec<u8>>>()
            .map(Word)
    }
}

/// Metric parameter θ ∈ (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Theta(f64);

impl Theta {
    pub fn new(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta < 1.0 {
            Ok(Theta(theta))
        } else {
            Err(Error::invalid(format!("theta must lie in (0,1), got {theta}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn pow(self, n: usize) -> f64 {
        self.0.powi(n as i32)
    }
}

/// Length of the common prefix of two symbol slices.
#[inline]
pub fn common_prefix(x: &[u8], y: &[u8]) -> usize {
    x.iter().zip(y).take_while(|(a, b)| a == b).count()
}

/// `D_θ` on equal-length representatives: 0 if equal, else `θᴺ` with `N` the
/// first disagreement index.
pub fn d_theta(x: &[u8], y: &[u8], theta: Theta) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "d_theta needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = common_prefix(x, y);
    Ok(if n == x.len() { 0.0 } else { theta.pow(n) })
}

/// Lexicographic index of the admissible words of one length.
///
/// Words are encoded as base-`k0` integers, which preserves lexicographic
/// order, so lookup is a binary search over the sorted codes.
#[derive(Debug)]
pub struct BlockIndex {
    system: Arc<SymbolicSystem>,
    depth: usize,
    words: Vec<Vec<u8>>,
    codes: Vec<u64>,
}

impl BlockIndex {
    pub fn new(system: Arc<SymbolicSystem>, depth: usize) -> Result<Arc<Self>> {
        if depth == 0 {
            return Err(Error::invalid("block depth must be at least 1"));
        }
        let k0 = system.alphabet_size() as f64;
        if depth as f64 * k0.log2() > 63.0 {
            return Err(Error::Budget(format!("block depth {depth} too large to index")));
        }
        let words = system.admissible_raw(depth);
        let k0 = system.alphabet_size() as u64;
        let codes = words.iter().map(|w| encode(w, k0)).collect();
        Ok(Arc::new(Self {
            system,
            depth,
            words,
            codes,
        }))
    }

    pub fn system(&self) -> &Arc<SymbolicSystem> {
        &self.system
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Vec<u8>] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &[u8] {
        &self.words[i]
    }

    /// Index of the block given by the first `depth` symbols of `w`.
    pub fn find(&self, w: &[u8]) -> Option<usize> {
        if w.len() < self.depth {
            return None;
        }
        let code = encode(&w[..self.depth], self.system.alphabet_size() as u64);
        self.codes.binary_search(&code).ok()
    }

    /// Contiguous index range of blocks beginning with `prefix`.
    pub fn prefix_range(&self, prefix: &[u8]) -> std::ops::Range<usize> {
        let start = self.words.partition_point(|w| w[..prefix.len().min(w.len())] < *prefix);
        let end = self.words.partition_point(|w| w[..prefix.len().min(w.len())] <= *prefix);
        start..end
    }
}

fn encode(w: &[u8], k0: u64) -> u64 {
    w.iter().fold(0u64, |acc, &s| acc * k0 + s as u64)
}
