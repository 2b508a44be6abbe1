//! Problem model: instances, exact message distributions, adversary
//! specification, and the canonical tuple enumeration shared by every other
//! module.
//!
//! Tuple order is fixed once and for all: messages in ascending index order,
//! the `t` symbols of a message consecutive, and the first digit most
//! significant. Projection onto an induced subproblem is then digit
//! extraction.

use crate::error::{Error, Result};
use crate::exact::{format_rational, parse_rational, parse_rate_expr, Bits};
use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::sync::Arc;

pub type Symbol = u8;

const LABEL_DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// Resource caps shared across the exact solvers and materialization paths.
#[derive(Clone, Debug)]
pub struct Caps {
    /// Largest tuple table ever materialized (entries).
    pub materialize_tuples: u64,
    /// Largest confusion graph ever built (vertices).
    pub vertex_cap: u64,
    /// Branch-and-bound node budget for the exact solvers.
    pub node_budget: u64,
    /// Partition-enumeration budget for the optimal-leakage search.
    pub search_budget: u64,
    /// Vertex cap for the exact LP fallback of the fractional chromatic number.
    pub lp_vertex_cap: u64,
    /// Largest subset size for the exhaustive acyclic-subgraph bound.
    pub mais_exhaustive: usize,
    /// Vertex cap for the structural vertex-transitivity check.
    pub transitivity_cap: u64,
    /// How many codewords beyond the chromatic number the optimal-leakage
    /// search explores (extra codewords cannot help, but the search verifies
    /// that instead of assuming it).
    pub search_extra_codewords: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            materialize_tuples: 1 << 20,
            vertex_cap: 1 << 16,
            node_budget: 10_000_000,
            search_budget: 10_000_000,
            lp_vertex_cap: 1 << 10,
            mais_exhaustive: 20,
            transitivity_cap: 1 << 16,
            search_extra_codewords: 2,
        }
    }
}

// ---------------------------------------------------------------------------
// Tuple enumeration
// ---------------------------------------------------------------------------

/// The bijection between message-sequence tuples over a scope and the index
/// range `0..q^(t*|scope|)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleSpace {
    scope: Vec<usize>,
    q: u32,
    t: usize,
}

impl TupleSpace {
    pub fn new(scope: Vec<usize>, q: u32, t: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::validation("alphabet size must be at least 2"));
        }
        if q as usize > LABEL_DIGITS.len() {
            return Err(Error::validation(format!(
                "alphabet size {q} exceeds the label alphabet ({})",
                LABEL_DIGITS.len()
            )));
        }
        if t == 0 {
            return Err(Error::validation("sequence length must be positive"));
        }
        if scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("scope must be strictly ascending"));
        }
        Ok(TupleSpace { scope, q, t })
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn t(&self) -> usize {
        self.t
    }
    /// Number of digits in a tuple.
    pub fn width(&self) -> usize {
        self.scope.len() * self.t
    }

    /// `q^(t*|scope|)` with overflow checking.
    pub fn len(&self) -> Result<u64> {
        let mut n: u64 = 1;
        for _ in 0..self.width() {
            n = n
                .checked_mul(self.q as u64)
                .ok_or_else(|| Error::cap("tuple space exceeds u64 range"))?;
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> bool {
        false // every space has at least the empty tuple
    }

    pub fn index_of(&self, digits: &[Symbol]) -> u64 {
        debug_assert_eq!(digits.len(), self.width());
        digits
            .iter()
            .fold(0u64, |acc, &d| acc * self.q as u64 + d as u64)
    }

    pub fn digits_of(&self, index: u64) -> Vec<Symbol> {
        let mut out = vec![0; self.width()];
        self.digits_into(index, &mut out);
        out
    }

    pub fn digits_into(&self, index: u64, out: &mut [Symbol]) {
        debug_assert_eq!(out.len(), self.width());
        let mut rem = index;
        for slot in out.iter_mut().rev() {
            *slot = (rem % self.q as u64) as Symbol;
            rem /= self.q as u64;
        }
        debug_assert_eq!(rem, 0);
    }

    /// Digit positions (into this space's digit vector) of the messages of
    /// `sub`, in `sub`'s order. `sub` must be a subset of the scope.
    pub fn positions_of(&self, sub: &[usize]) -> Result<Vec<usize>> {
        let mut pos = Vec::with_capacity(sub.len() * self.t);
        for &m in sub {
            let k = self
                .scope
                .binary_search(&m)
                .map_err(|_| Error::validation(format!("message {} not in scope", m + 1)))?;
            for j in 0..self.t {
                pos.push(k * self.t + j);
            }
        }
        Ok(pos)
    }

    /// Gathers the digits at `positions` out of the tuple for `index` and
    /// folds them into an index of the projected space.
    pub fn project_index(&self, digits: &[Symbol], positions: &[usize]) -> u64 {
        positions
            .iter()
            .fold(0u64, |acc, &p| acc * self.q as u64 + digits[p] as u64)
    }

    /// The per-position tuple `(x_{i,j}, i in scope)` for position `j`.
    pub fn column<'a>(&self, digits: &'a [Symbol], j: usize) -> impl Iterator<Item = Symbol> + 'a {
        let t = self.t;
        (0..self.scope.len()).map(move |k| digits[k * t + j])
    }

    pub fn label_of(&self, index: u64) -> String {
        self.digits_of(index)
            .iter()
            .map(|&d| LABEL_DIGITS[d as usize] as char)
            .collect()
    }

    pub fn parse_label(&self, s: &str) -> Result<u64> {
        let s = s.trim();
        if s.len() != self.width() {
            return Err(Error::parse(format!(
                "tuple label {s:?} has {} digits, expected {}",
                s.len(),
                self.width()
            )));
        }
        let mut digits = Vec::with_capacity(self.width());
        for ch in s.bytes() {
            let d = LABEL_DIGITS
                .iter()
                .position(|&c| c == ch.to_ascii_lowercase())
                .ok_or_else(|| Error::parse(format!("bad symbol {:?} in tuple label", ch as char)))?;
            if d as u32 >= self.q {
                return Err(Error::parse(format!(
                    "symbol {} out of range for alphabet size {}",
                    d, self.q
                )));
            }
            digits.push(d as Symbol);
        }
        Ok(self.index_of(&digits))
    }

    /// Iterates `(index, digits)` over the whole space with an odometer.
    pub fn iter(&self) -> TupleIter<'_> {
        TupleIter {
            space: self,
            next_index: 0,
            len: self.len().expect("tuple space within u64"),
            digits: vec![0; self.width()],
        }
    }
}

pub struct TupleIter<'a> {
    space: &'a TupleSpace,
    next_index: u64,
    len: u64,
    digits: Vec<Symbol>,
}

impl<'a> TupleIter<'a> {
    /// Advances and yields the next `(index, digits)` pair.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<(u64, &[Symbol])> {
        if self.next_index >= self.len {
            return None;
        }
        if self.next_index > 0 {
            // odometer increment, least-significant digit last
            for slot in self.digits.iter_mut().rev() {
                if (*slot as u32) + 1 < self.space.q {
                    *slot += 1;
                    break;
                }
                *slot = 0;
            }
        }
        let idx = self.next_index;
        self.next_index += 1;
        Some((idx, &self.digits))
    }
}

/// Sorted complement of a sorted subset within `0..n`.
pub fn complement(n: usize, sub: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| sub.binary_search(i).is_err()).collect()
}

/// Renders a subset in 1-based display form, e.g. `{1,3}`.
pub fn subset_display(sub: &[usize]) -> String {
    let inner: Vec<String> = sub.iter().map(|&i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

// ---------------------------------------------------------------------------
// Instance
// ---------------------------------------------------------------------------

/// An index-coding instance: `n` messages over a common `q`-ary alphabet,
/// receiver `i` wanting message `i` and knowing the messages in `side_info[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    n: usize,
    q: u32,
    side_info: Vec<Vec<usize>>,
}

impl Instance {
    pub fn new(n: usize, q: u32, side_info: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("instance needs at least one message"));
        }
        if n > 64 {
            return Err(Error::validation("at most 64 messages supported"));
        }
        // delegate q validation
        TupleSpace::new(vec![], q, 1)?;
        if side_info.len() != n {
            return Err(Error::validation(format!(
                "expected {n} side-information sets, got {}",
                side_info.len()
            )));
        }
        let mut sorted = Vec::with_capacity(n);
        for (i, set) in side_info.into_iter().enumerate() {
            let mut s = set;
            s.sort_unstable();
            s.dedup();
            if s.iter().any(|&j| j >= n) {
                return Err(Error::validation(format!(
                    "side information of receiver {} mentions a message outside the instance",
                    i + 1
                )));
            }
            if s.binary_search(&i).is_ok() {
                return Err(Error::validation(format!(
                    "receiver {} lists its own message as side information",
                    i + 1
                )));
            }
            sorted.push(s);
        }
        Ok(Instance {
            n,
            q,
            side_info: sorted,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn side_info(&self, i: usize) -> &[usize] {
        &self.side_info[i]
    }
    pub fn full_scope(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    /// `A_i ∩ S` for the subproblem induced by `S` (sorted).
    pub fn side_info_within(&self, i: usize, scope: &[usize]) -> Vec<usize> {
        self.side_info[i]
            .iter()
            .copied()
            .filter(|j| scope.binary_search(j).is_ok())
            .collect()
    }

    /// The tuple space `X_S^t`.
    pub fn space(&self, scope: &[usize], t: usize) -> Result<TupleSpace> {
        let sorted = {
            let mut s = scope.to_vec();
            s.sort_unstable();
            s.dedup();
            if s.len() != scope.len() {
                return Err(Error::validation("subset contains duplicates"));
            }
            s
        };
        if sorted.iter().any(|&m| m >= self.n) {
            return Err(Error::validation("subset mentions a message outside the instance"));
        }
        TupleSpace::new(sorted, self.q, t)
    }
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Kind {
    Table(Arc<Vec<BigRational>>),
    /// Memoryless `copies`-fold product of a single-letter base distribution;
    /// never materialized.
    Product {
        base: Arc<Distribution>,
        copies: usize,
    },
}

/// An exact, full-support probability distribution over `X_scope^t`.
#[derive(Clone, Debug)]
pub struct Distribution {
    space: TupleSpace,
    kind: Kind,
}

impl Distribution {
    pub fn from_table(space: TupleSpace, probs: Vec<BigRational>) -> Result<Self> {
        let len = space.len()?;
        if probs.len() as u64 != len {
            return Err(Error::validation(format!(
                "distribution table has {} entries, expected {len}",
                probs.len()
            )));
        }
        let mut sum = BigRational::zero();
        for (i, p) in probs.iter().enumerate() {
            if !p.is_positive() {
                return Err(Error::validation(format!(
                    "full support violated: P({}) = {}",
                    space.label_of(i as u64),
                    format_rational(p)
                )));
            }
            sum += p;
        }
        if !sum.is_one() {
            return Err(Error::validation(format!(
                "probabilities sum to {}, expected 1",
                format_rational(&sum)
            )));
        }
        Ok(Distribution {
            space,
            kind: Kind::Table(Arc::new(probs)),
        })
    }

    pub fn uniform(space: TupleSpace) -> Result<Self> {
        let len = space.len()?;
        let p = BigRational::new(BigInt::one(), BigInt::from(len));
        Ok(Distribution {
            space,
            kind: Kind::Table(Arc::new(vec![p; len as usize])),
        })
    }

    pub fn space(&self) -> &TupleSpace {
        &self.space
    }
    pub fn scope(&self) -> &[usize] {
        self.space.scope()
    }
    pub fn t(&self) -> usize {
        self.space.t()
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.kind, Kind::Table(_))
    }

    /// True when every entry equals `1/|space|`.
    pub fn is_uniform(&self) -> bool {
        match &self.kind {
            Kind::Table(t) => {
                let len = t.len();
                let p = BigRational::new(BigInt::one(), BigInt::from(len));
                t.iter().all(|x| *x == p)
            }
            Kind::Product { base, .. } => base.is_uniform(),
        }
    }

    pub fn prob_digits(&self, digits: &[Symbol]) -> BigRational {
        debug_assert_eq!(digits.len(), self.space.width());
        match &self.kind {
            Kind::Table(t) => t[self.space.index_of(digits) as usize].clone(),
            Kind::Product { base, copies } => {
                let mut p = BigRational::one();
                let mut col = vec![0; self.space.scope().len()];
                for j in 0..*copies {
                    for (slot, d) in col.iter_mut().zip(self.space.column(digits, j)) {
                        *slot = d;
                    }
                    p *= base.prob_digits(&col);
                }
                p
            }
        }
    }

    pub fn prob_index(&self, index: u64) -> BigRational {
        match &self.kind {
            Kind::Table(t) => t[index as usize].clone(),
            Kind::Product { .. } => self.prob_digits(&self.space.digits_of(index)),
        }
    }

    /// Memoryless extension to sequences of length `t`; materialized when the
    /// extended space fits under the cap, lazy otherwise.
    pub fn product_extend(&self, t: usize, caps: &Caps) -> Result<Distribution> {
        if self.t() != 1 {
            return Err(Error::validation(
                "product extension starts from a single-letter distribution",
            ));
        }
        if t == 0 {
            return Err(Error::validation("sequence length must be positive"));
        }
        if t == 1 {
            return Ok(self.clone());
        }
        let space = TupleSpace::new(self.scope().to_vec(), self.space.q(), t)?;
        let lazy = Distribution {
            space: space.clone(),
            kind: Kind::Product {
                base: Arc::new(self.clone()),
                copies: t,
            },
        };
        match space.len() {
            Ok(len) if len <= caps.materialize_tuples => {
                let mut probs = Vec::with_capacity(len as usize);
                let mut it = space.iter();
                while let Some((_, digits)) = it.next() {
                    probs.push(lazy.prob_digits(digits));
                }
                Ok(Distribution {
                    space,
                    kind: Kind::Table(Arc::new(probs)),
                })
            }
            _ => Ok(lazy),
        }
    }

    /// Exact marginal onto `sub` (a subset of the scope, same `t`).
    pub fn marginal(&self, sub: &[usize], caps: &Caps) -> Result<Distribution> {
        let mut sorted = sub.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sub.len() {
            return Err(Error::validation("marginal subset contains duplicates"));
        }
        for m in &sorted {
            if self.scope().binary_search(m).is_err() {
                return Err(Error::validation(format!(
                    "marginal subset mentions message {} outside the scope",
                    m + 1
                )));
            }
        }
        if sorted == self.scope() {
            return Ok(self.clone());
        }
        match &self.kind {
            Kind::Product { base, copies } => {
                base.marginal(&sorted, caps)?.product_extend(*copies, caps)
            }
            Kind::Table(table) => {
                let sub_space = TupleSpace::new(sorted.clone(), self.space.q(), self.t())?;
                let sub_len = sub_space.len()?;
                if sub_len > caps.materialize_tuples {
                    return Err(Error::cap(format!(
                        "marginal table of {} entries exceeds the materialization cap",
                        sub_len
                    )));
                }
                let positions = self.space.positions_of(&sorted)?;
                let mut out = vec![BigRational::zero(); sub_len as usize];
                let mut it = self.space.iter();
                while let Some((idx, digits)) = it.next() {
                    let sub_idx = self.space.project_index(digits, &positions);
                    out[sub_idx as usize] += &table[idx as usize];
                }
                Distribution::from_table(sub_space, out)
            }
        }
    }

    /// Exact conditional distribution of the remaining messages given the
    /// digits of the messages in `given`. Under full support every
    /// conditioning tuple has positive probability.
    pub fn conditional(
        &self,
        given: &[usize],
        given_digits: &[Symbol],
        caps: &Caps,
    ) -> Result<Distribution> {
        let mut sorted = given.to_vec();
        sorted.sort_unstable();
        if sorted != given {
            return Err(Error::validation("conditioning subset must be sorted"));
        }
        let rest = complement_in(self.scope(), given)?;
        if rest.is_empty() {
            // conditioning on everything: the single empty tuple with mass 1
            let space = TupleSpace::new(vec![], self.space.q(), self.t())?;
            return Distribution::from_table(space, vec![BigRational::one()]);
        }
        let rest_space = TupleSpace::new(rest.clone(), self.space.q(), self.t())?;
        let rest_len = rest_space.len()?;
        if rest_len > caps.materialize_tuples {
            return Err(Error::cap(format!(
                "conditional table of {} entries exceeds the materialization cap",
                rest_len
            )));
        }
        if given_digits.len() != given.len() * self.t() {
            return Err(Error::validation("conditioning tuple has the wrong shape"));
        }
        let given_pos = self.space.positions_of(given)?;
        let rest_pos = self.space.positions_of(&rest)?;
        let mut digits = vec![0; self.space.width()];
        for (&p, &d) in given_pos.iter().zip(given_digits) {
            digits[p] = d;
        }
        let mut table = Vec::with_capacity(rest_len as usize);
        let mut total = BigRational::zero();
        let mut it = rest_space.iter();
        while let Some((_, rest_digits)) = it.next() {
            for (&p, &d) in rest_pos.iter().zip(rest_digits) {
                digits[p] = d;
            }
            let p = self.prob_digits(&digits);
            total += &p;
            table.push(p);
        }
        for p in &mut table {
            *p /= &total;
        }
        Distribution::from_table(rest_space, table)
    }

    /// Materialized probability table, when available.
    pub fn table(&self) -> Option<&[BigRational]> {
        match &self.kind {
            Kind::Table(t) => Some(t),
            Kind::Product { .. } => None,
        }
    }
}

fn complement_in(scope: &[usize], sub: &[usize]) -> Result<Vec<usize>> {
    for m in sub {
        if scope.binary_search(m).is_err() {
            return Err(Error::validation(format!(
                "message {} not in the distribution scope",
                m + 1
            )));
        }
    }
    Ok(scope
        .iter()
        .copied()
        .filter(|m| sub.binary_search(m).is_err())
        .collect())
}

// ---------------------------------------------------------------------------
// Exact sampling
// ---------------------------------------------------------------------------

enum SamplerKind {
    /// Integer weights over a common denominator that fits u64.
    ExactU64 { cumulative: Vec<u64>, total: u64 },
    /// Fallback when the common denominator overflows u64.
    Float { cumulative: Vec<f64> },
    Product { base: Box<Sampler>, copies: usize },
}

/// Seed-deterministic sampler for a [`Distribution`].
pub struct Sampler {
    width: usize,
    scope_len: usize,
    t: usize,
    kind: SamplerKind,
}

impl Sampler {
    pub fn new(dist: &Distribution) -> Sampler {
        let width = dist.space().width();
        match &dist.kind {
            Kind::Product { base, copies } => Sampler {
                width,
                scope_len: dist.scope().len(),
                t: dist.t(),
                kind: SamplerKind::Product {
                    base: Box::new(Sampler::new(base)),
                    copies: *copies,
                },
            },
            Kind::Table(table) => {
                let mut denom = BigInt::one();
                for p in table.iter() {
                    denom = denom.lcm(p.denom());
                }
                let kind = if let Some(d) = denom.to_u64() {
                    let mut acc: u64 = 0;
                    let mut cumulative = Vec::with_capacity(table.len());
                    let mut exact = true;
                    for p in table.iter() {
                        let w = (p * BigRational::from_integer(denom.clone()))
                            .to_integer()
                            .to_u64();
                        match w {
                            Some(w) if acc.checked_add(w).is_some() => {
                                acc += w;
                                cumulative.push(acc);
                            }
                            _ => {
                                exact = false;
                                break;
                            }
                        }
                    }
                    if exact && acc == d {
                        SamplerKind::ExactU64 {
                            cumulative,
                            total: d,
                        }
                    } else {
                        Sampler::float_kind(table)
                    }
                } else {
                    Sampler::float_kind(table)
                };
                Sampler {
                    width,
                    scope_len: dist.scope().len(),
                    t: dist.t(),
                    kind,
                }
            }
        }
    }

    fn float_kind(table: &[BigRational]) -> SamplerKind {
        let mut acc = 0.0;
        let cumulative = table
            .iter()
            .map(|p| {
                acc += p.to_f64().unwrap_or(0.0);
                acc
            })
            .collect();
        SamplerKind::Float { cumulative }
    }

    /// Draws a tuple, writing its digits into `out` (length = space width).
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [Symbol], space: &TupleSpace) {
        debug_assert_eq!(out.len(), self.width);
        match &self.kind {
            SamplerKind::ExactU64 { cumulative, total } => {
                let r = rng.gen_range(0..*total);
                let i = cumulative.partition_point(|&c| c <= r);
                space.digits_into(i as u64, out);
            }
            SamplerKind::Float { cumulative } => {
                let r: f64 = rng.gen();
                let i = cumulative
                    .partition_point(|&c| c <= r)
                    .min(cumulative.len() - 1);
                space.digits_into(i as u64, out);
            }
            SamplerKind::Product { base, copies } => {
                let mut col = vec![0; self.scope_len];
                let base_space =
                    TupleSpace::new((0..self.scope_len).collect(), space.q(), 1).unwrap();
                for j in 0..*copies {
                    base.sample_into(rng, &mut col, &base_space);
                    for (k, &d) in col.iter().enumerate() {
                        out[k * self.t + j] = d;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Adversary
// ---------------------------------------------------------------------------

/// Number of guesses the adversary may make, per sequence length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GuessBudget {
    Constant(u64),
    /// Step table `t -> c(t)`; lookups below the first entry are an error,
    /// lookups between entries take the last entry at or below `t`.
    Table(BTreeMap<u32, u64>),
}

impl GuessBudget {
    pub fn validate(&self) -> Result<()> {
        match self {
            GuessBudget::Constant(k) => {
                if *k == 0 {
                    return Err(Error::validation("guessing capability must be positive"));
                }
            }
            GuessBudget::Table(map) => {
                if map.is_empty() {
                    return Err(Error::validation("empty guessing-capability table"));
                }
                let mut prev: Option<u64> = None;
                for (&t, &c) in map {
                    if t == 0 || c == 0 {
                        return Err(Error::validation(
                            "guessing-capability entries must be positive",
                        ));
                    }
                    if let Some(p) = prev {
                        if c < p {
                            return Err(Error::validation(
                                "guessing capability must be non-decreasing in t",
                            ));
                        }
                    }
                    prev = Some(c);
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, t: usize) -> Result<u64> {
        match self {
            GuessBudget::Constant(k) => Ok(*k),
            GuessBudget::Table(map) => map
                .range(..=(t as u32))
                .next_back()
                .map(|(_, &c)| c)
                .ok_or_else(|| {
                    Error::validation(format!("guessing-capability table has no entry for t <= {t}"))
                }),
        }
    }
}

/// The adversary: knows the messages in `known` and guesses the rest.
#[derive(Clone, Debug)]
pub struct AdversarySpec {
    known: Vec<usize>,
    target: Vec<usize>,
    capability: GuessBudget,
}

impl AdversarySpec {
    pub fn new(known: Vec<usize>, capability: GuessBudget, n: usize) -> Result<Self> {
        let mut k = known;
        k.sort_unstable();
        k.dedup();
        if k.iter().any(|&i| i >= n) {
            return Err(Error::validation(
                "adversary side information mentions a message outside the instance",
            ));
        }
        let target = complement(n, &k);
        if target.is_empty() {
            return Err(Error::validation(
                "adversary already knows every message; nothing to guess",
            ));
        }
        capability.validate()?;
        Ok(AdversarySpec {
            known: k,
            target,
            capability,
        })
    }

    pub fn known(&self) -> &[usize] {
        &self.known
    }
    pub fn target(&self) -> &[usize] {
        &self.target
    }
    pub fn capability(&self) -> &GuessBudget {
        &self.capability
    }
    pub fn guesses_at(&self, t: usize) -> Result<u64> {
        self.capability.at(t)
    }
}

// ---------------------------------------------------------------------------
// Problem documents
// ---------------------------------------------------------------------------

/// An externally supplied rate value with provenance.
#[derive(Clone, Debug)]
pub struct KnownRate {
    pub value: Bits,
    pub expr: String,
    pub citation: Option<String>,
}

impl KnownRate {
    pub fn parse(expr: &str, citation: Option<String>) -> Result<Self> {
        Ok(KnownRate {
            value: parse_rate_expr(expr)?,
            expr: expr.to_string(),
            citation,
        })
    }
}

/// A fully validated problem: instance, joint distribution, adversary.
#[derive(Clone, Debug)]
pub struct Problem {
    pub instance: Instance,
    pub distribution: Distribution,
    pub adversary: AdversarySpec,
    /// Optional externally known broadcast rate of the adversary's target
    /// subproblem (not computable in general; accepted as an annotation).
    pub known_rate_target: Option<KnownRate>,
}

#[derive(Deserialize)]
struct RawDoc {
    n: usize,
    q: u32,
    side_info: Vec<Vec<usize>>,
    #[serde(default)]
    distribution: Option<RawDist>,
    #[serde(default)]
    adversary: Option<RawAdversary>,
    #[serde(default)]
    known_rate_target: Option<RawKnownRate>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDist {
    Named(String),
    Product { product: Vec<Vec<serde_json::Value>> },
    Joint { joint: BTreeMap<String, serde_json::Value> },
}

#[derive(Deserialize)]
struct RawAdversary {
    #[serde(default)]
    known: Vec<usize>,
    #[serde(default)]
    capability: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct RawKnownRate {
    value: String,
    #[serde(default)]
    citation: Option<String>,
}

fn value_to_rational(v: &serde_json::Value) -> Result<BigRational> {
    match v {
        serde_json::Value::String(s) => parse_rational(s),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(BigRational::from_integer(BigInt::from(i)))
            } else {
                Err(Error::parse(format!(
                    "probability {n} is not exact; write it as a \"num/den\" string"
                )))
            }
        }
        other => Err(Error::parse(format!("bad probability value: {other}"))),
    }
}

/// Parses and validates a problem document (JSON).
///
/// Keys: `n`, `q`, `side_info` (1-based lists), `distribution` (`"uniform"`,
/// `{"product": [...]}` per-message vectors, or `{"joint": {...}}` keyed by
/// tuple labels), `adversary` (`known` 1-based list, `capability` integer or
/// `{"t": c}` table), `known_rate_target` (`value` expression, `citation`).
pub fn load_problem(text: &str) -> Result<Problem> {
    let raw: RawDoc =
        serde_json::from_str(text).map_err(|e| Error::parse(format!("bad instance document: {e}")))?;
    let side_info = raw
        .side_info
        .iter()
        .enumerate()
        .map(|(i, set)| {
            set.iter()
                .map(|&j| {
                    if j == 0 || j > raw.n {
                        Err(Error::validation(format!(
                            "side information of receiver {} uses 1-based message ids in 1..={}",
                            i + 1,
                            raw.n
                        )))
                    } else {
                        Ok(j - 1)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let instance = Instance::new(raw.n, raw.q, side_info)?;
    let space = instance.space(&instance.full_scope(), 1)?;

    let distribution = match raw.distribution {
        None => Distribution::uniform(space)?,
        Some(RawDist::Named(name)) if name == "uniform" => Distribution::uniform(space)?,
        Some(RawDist::Named(name)) => {
            return Err(Error::parse(format!("unknown distribution {name:?}")))
        }
        Some(RawDist::Product { product }) => {
            if product.len() != raw.n {
                return Err(Error::validation(format!(
                    "product distribution needs {} per-message vectors, got {}",
                    raw.n,
                    product.len()
                )));
            }
            let mut per_msg = Vec::with_capacity(raw.n);
            for (i, vec) in product.iter().enumerate() {
                if vec.len() != raw.q as usize {
                    return Err(Error::validation(format!(
                        "per-message vector {} has {} entries, expected {}",
                        i + 1,
                        vec.len(),
                        raw.q
                    )));
                }
                per_msg.push(
                    vec.iter()
                        .map(value_to_rational)
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            let mut probs = Vec::with_capacity(space.len()? as usize);
            let mut it = space.iter();
            while let Some((_, digits)) = it.next() {
                let mut p = BigRational::one();
                for (i, &d) in digits.iter().enumerate() {
                    p *= &per_msg[i][d as usize];
                }
                probs.push(p);
            }
            Distribution::from_table(space, probs)?
        }
        Some(RawDist::Joint { joint }) => {
            let len = space.len()?;
            if joint.len() as u64 != len {
                return Err(Error::validation(format!(
                    "joint table has {} entries, expected {len} (full support required)",
                    joint.len()
                )));
            }
            let mut probs = vec![BigRational::zero(); len as usize];
            for (label, value) in &joint {
                let idx = space.parse_label(label)?;
                probs[idx as usize] = value_to_rational(value)?;
            }
            Distribution::from_table(space, probs)?
        }
    };

    let adversary = match raw.adversary {
        None => AdversarySpec::new(vec![], GuessBudget::Constant(1), raw.n)?,
        Some(a) => {
            let known = a
                .known
                .iter()
                .map(|&j| {
                    if j == 0 || j > raw.n {
                        Err(Error::validation(
                            "adversary known list uses 1-based message ids",
                        ))
                    } else {
                        Ok(j - 1)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let capability = match a.capability {
                None => GuessBudget::Constant(1),
                Some(v) => parse_capability(&v)?,
            };
            AdversarySpec::new(known, capability, raw.n)?
        }
    };

    let known_rate_target = raw
        .known_rate_target
        .map(|kr| KnownRate::parse(&kr.value, kr.citation))
        .transpose()?;

    Ok(Problem {
        instance,
        distribution,
        adversary,
        known_rate_target,
    })
}

/// Parses a capability value: a positive integer or a `{"t": c}` table.
pub fn parse_capability(v: &serde_json::Value) -> Result<GuessBudget> {
    let budget = match v {
        serde_json::Value::Number(n) => {
            let k = n
                .as_u64()
                .ok_or_else(|| Error::parse("capability must be a positive integer"))?;
            GuessBudget::Constant(k)
        }
        serde_json::Value::Object(map) => {
            let mut table = BTreeMap::new();
            for (key, val) in map {
                let t: u32 = key
                    .parse()
                    .map_err(|_| Error::parse(format!("bad capability table key {key:?}")))?;
                let c = val
                    .as_u64()
                    .ok_or_else(|| Error::parse("capability table values must be integers"))?;
                table.insert(t, c);
            }
            GuessBudget::Table(table)
        }
        _ => return Err(Error::parse("capability must be an integer or a table")),
    };
    budget.validate()?;
    Ok(budget)
}
