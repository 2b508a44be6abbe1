//! Index codes: deterministic and stochastic encoders, synthesized
//! maximum-likelihood decoders, exact validity checks, determinization, and
//! the composite two-part construction.
//!
//! A code lives on the tuple space of a scope (the full problem or an induced
//! subproblem). Decoders are always synthesized from the code and the
//! distribution by per-receiver maximum likelihood (each receiver's estimate
//! maximizes its own joint probability; ties break by tuple index). Note that
//! per-receiver ML does not in general minimize the probability that *some*
//! receiver errs, which is why determinization certifies its guarantee under
//! the inherited decoder set.

use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::graph::ConfusionGraph;
use crate::model::{Caps, Distribution, Instance, TupleSpace};
use num::{BigRational, One, Signed, Zero};

/// Total map from `X_scope^t` to codewords `0..m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeterministicCode {
    space: TupleSpace,
    m: u64,
    map: Vec<u64>,
}

impl DeterministicCode {
    pub fn new(space: TupleSpace, m: u64, map: Vec<u64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation("codebook size must be positive"));
        }
        if map.len() as u64 != space.len()? {
            return Err(Error::validation(format!(
                "encoder table has {} entries, expected {}",
                map.len(),
                space.len()?
            )));
        }
        if map.iter().any(|&y| y >= m) {
            return Err(Error::validation("codeword value out of range"));
        }
        Ok(DeterministicCode { space, m, map })
    }

    /// The one-codeword code (reveals nothing).
    pub fn constant(space: TupleSpace) -> Result<Self> {
        let len = space.len()? as usize;
        DeterministicCode::new(space, 1, vec![0; len])
    }

    /// The injective code (reveals everything).
    pub fn identity(space: TupleSpace) -> Result<Self> {
        let len = space.len()?;
        DeterministicCode::new(space, len, (0..len).collect())
    }

    /// A code from a proper-coloring table (colors become codewords).
    pub fn from_coloring(space: TupleSpace, colors: &[u32]) -> Result<Self> {
        let m = colors.iter().copied().max().map_or(0, |c| c as u64 + 1);
        DeterministicCode::new(space, m.max(1), colors.iter().map(|&c| c as u64).collect())
    }

    pub fn space(&self) -> &TupleSpace {
        &self.space
    }
    pub fn m(&self) -> u64 {
        self.m
    }
    pub fn encode(&self, x: u64) -> u64 {
        self.map[x as usize]
    }
    pub fn table(&self) -> &[u64] {
        &self.map
    }

    /// Codeword preimages as vertex sets.
    pub fn classes(&self) -> Vec<BitSet> {
        let v = self.map.len();
        let mut classes = vec![BitSet::new(v); self.m as usize];
        for (x, &y) in self.map.iter().enumerate() {
            classes[y as usize].insert(x);
        }
        classes
    }

    /// Text table `tuple-string codeword`, one pair per line, codewords
    /// rendered 1-based.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (x, &y) in self.map.iter().enumerate() {
            out.push_str(&format!("{} {}\n", self.space.label_of(x as u64), y + 1));
        }
        out
    }

    /// Parses a text table. Every tuple of the space must appear exactly
    /// once; `m` is the largest codeword mentioned.
    pub fn parse(text: &str, space: TupleSpace) -> Result<Self> {
        let len = space.len()? as usize;
        let mut map: Vec<Option<u64>> = vec![None; len];
        let mut m = 0u64;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (label, y) = match (parts.next(), parts.next()) {
                (Some(l), Some(y)) => (l, y),
                _ => {
                    return Err(Error::parse(format!(
                        "line {}: expected `tuple codeword`",
                        lineno + 1
                    )))
                }
            };
            let x = space.parse_label(label)?;
            let y: u64 = y
                .parse()
                .map_err(|_| Error::parse(format!("line {}: bad codeword {y:?}", lineno + 1)))?;
            if y == 0 {
                return Err(Error::parse(format!(
                    "line {}: codewords are 1-based",
                    lineno + 1
                )));
            }
            if map[x as usize].is_some() {
                return Err(Error::parse(format!(
                    "line {}: tuple {label} listed twice",
                    lineno + 1
                )));
            }
            map[x as usize] = Some(y - 1);
            m = m.max(y);
        }
        let map = map
            .into_iter()
            .enumerate()
            .map(|(x, y)| {
                y.ok_or_else(|| {
                    Error::parse(format!("tuple {} missing from code table", space.label_of(x as u64)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DeterministicCode::new(space, m, map)
    }
}

/// Per-tuple exact distribution over codewords; only positive entries stored.
#[derive(Clone, Debug)]
pub struct StochasticCode {
    space: TupleSpace,
    m: u64,
    rows: Vec<Vec<(u64, BigRational)>>,
}

impl StochasticCode {
    pub fn new(space: TupleSpace, m: u64, rows: Vec<Vec<(u64, BigRational)>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation("codebook size must be positive"));
        }
        if rows.len() as u64 != space.len()? {
            return Err(Error::validation("encoder table size mismatch"));
        }
        for row in &rows {
            let mut sum = BigRational::zero();
            for (y, p) in row {
                if *y >= m {
                    return Err(Error::validation("codeword value out of range"));
                }
                if !p.is_positive() {
                    return Err(Error::validation(
                        "stochastic encoder entries must be positive",
                    ));
                }
                sum += p;
            }
            if !sum.is_one() {
                return Err(Error::validation(
                    "stochastic encoder rows must sum to exactly 1",
                ));
            }
        }
        Ok(StochasticCode { space, m, rows })
    }

    pub fn from_deterministic(code: &DeterministicCode) -> Self {
        StochasticCode {
            space: code.space.clone(),
            m: code.m,
            rows: code
                .map
                .iter()
                .map(|&y| vec![(y, BigRational::one())])
                .collect(),
        }
    }

    pub fn space(&self) -> &TupleSpace {
        &self.space
    }
    pub fn m(&self) -> u64 {
        self.m
    }
    pub fn row(&self, x: u64) -> &[(u64, BigRational)] {
        &self.rows[x as usize]
    }
}

/// Either kind of code, for the operations that accept both.
#[derive(Clone, Copy)]
pub enum CodeRef<'a> {
    Det(&'a DeterministicCode),
    Stoch(&'a StochasticCode),
}

impl<'a> CodeRef<'a> {
    pub fn space(&self) -> &TupleSpace {
        match self {
            CodeRef::Det(c) => c.space(),
            CodeRef::Stoch(c) => c.space(),
        }
    }

    pub fn m(&self) -> u64 {
        match self {
            CodeRef::Det(c) => c.m(),
            CodeRef::Stoch(c) => c.m(),
        }
    }

    /// The positive-probability codewords for a tuple.
    pub fn support(&self, x: u64) -> Vec<(u64, BigRational)> {
        match self {
            CodeRef::Det(c) => vec![(c.encode(x), BigRational::one())],
            CodeRef::Stoch(c) => c.row(x).to_vec(),
        }
    }
}

impl<'a> From<&'a DeterministicCode> for CodeRef<'a> {
    fn from(c: &'a DeterministicCode) -> Self {
        CodeRef::Det(c)
    }
}
impl<'a> From<&'a StochasticCode> for CodeRef<'a> {
    fn from(c: &'a StochasticCode) -> Self {
        CodeRef::Stoch(c)
    }
}

// ---------------------------------------------------------------------------
// Decoders
// ---------------------------------------------------------------------------

/// Synthesized decoders, one table per receiver in the code's scope:
/// `(codeword, side-information tuple) -> estimated own tuple`. Entries are
/// `None` exactly on the pairs with zero joint probability.
#[derive(Clone, Debug)]
pub struct DecoderSet {
    scope: Vec<usize>,
    sides: Vec<Vec<usize>>,
    side_positions: Vec<Vec<usize>>,
    own_positions: Vec<Vec<usize>>,
    side_len: Vec<u64>,
    own_len: u64,
    tables: Vec<Vec<Option<u64>>>,
}

impl DecoderSet {
    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    /// The estimate of receiver `k` (position within the scope) for codeword
    /// `y` and side-information tuple index `side_idx`.
    pub fn decode(&self, k: usize, y: u64, side_idx: u64) -> Option<u64> {
        self.tables[k][(y * self.side_len[k] + side_idx) as usize]
    }

    /// True iff every receiver recovers its own tuple from `(y, digits)`.
    pub fn all_correct(&self, space: &TupleSpace, digits: &[crate::model::Symbol], y: u64) -> bool {
        for k in 0..self.scope.len() {
            let side_idx = space.project_index(digits, &self.side_positions[k]);
            let own_idx = space.project_index(digits, &self.own_positions[k]);
            if self.decode(k, y, side_idx) != Some(own_idx) {
                return false;
            }
        }
        true
    }
}

/// The joint distribution a code is evaluated against: the supplied
/// single-letter joint over the full problem, marginalized onto the code's
/// scope and extended to the code's sequence length.
pub fn scope_distribution(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    caps: &Caps,
) -> Result<Distribution> {
    if dist.scope() != instance.full_scope().as_slice() || dist.t() != 1 {
        return Err(Error::validation(
            "expected the single-letter joint distribution over all messages",
        ));
    }
    let space = code.space();
    let marg = dist.marginal(space.scope(), caps)?;
    let ext = marg.product_extend(space.t(), caps)?;
    if !ext.is_materialized() {
        return Err(Error::cap(
            "code evaluation space exceeds the materialization cap; use the sampling path",
        ));
    }
    Ok(ext)
}

/// Maximum-likelihood decoder synthesis: for each receiver and observable
/// pair, the estimate maximizing the exact joint probability, ties broken by
/// smallest tuple index.
pub fn synthesize_decoders(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    caps: &Caps,
) -> Result<DecoderSet> {
    let space = code.space().clone();
    let ext = scope_distribution(code, instance, dist, caps)?;
    let scope = space.scope().to_vec();
    let t = space.t();
    let q = space.q() as u64;
    let own_len = q.pow(t as u32);
    let m = code.m();

    let mut sides = Vec::with_capacity(scope.len());
    let mut side_positions = Vec::with_capacity(scope.len());
    let mut own_positions = Vec::with_capacity(scope.len());
    let mut side_len = Vec::with_capacity(scope.len());
    for &i in &scope {
        let side = instance.side_info_within(i, &scope);
        side_positions.push(space.positions_of(&side)?);
        own_positions.push(space.positions_of(&[i])?);
        side_len.push(q.pow((side.len() * t) as u32));
        sides.push(side);
    }

    // weights[k][(y, side, own)] accumulates the joint probability
    let mut weights: Vec<Vec<BigRational>> = side_len
        .iter()
        .map(|&sl| vec![BigRational::zero(); (m * sl * own_len) as usize])
        .collect();
    let mut it = space.iter();
    while let Some((x, digits)) = it.next() {
        let px = ext.prob_index(x);
        for (y, fp) in code.support(x) {
            let p = &px * &fp;
            for k in 0..scope.len() {
                let side_idx = space.project_index(digits, &side_positions[k]);
                let own_idx = space.project_index(digits, &own_positions[k]);
                let slot = (y * side_len[k] + side_idx) * own_len + own_idx;
                weights[k][slot as usize] += &p;
            }
        }
    }

    let mut tables = Vec::with_capacity(scope.len());
    for (k, w) in weights.iter().enumerate() {
        let mut table = vec![None; (m * side_len[k]) as usize];
        for pair in 0..(m * side_len[k]) {
            let base = (pair * own_len) as usize;
            let mut best: Option<u64> = None;
            for own in 0..own_len {
                let p = &w[base + own as usize];
                if p.is_positive() {
                    let better = match best {
                        None => true,
                        Some(b) => *p > w[base + b as usize],
                    };
                    if better {
                        best = Some(own);
                    }
                }
            }
            table[pair as usize] = best;
        }
        tables.push(table);
    }

    Ok(DecoderSet {
        scope,
        sides,
        side_positions,
        own_positions,
        side_len,
        own_len,
        tables,
    })
}

// ---------------------------------------------------------------------------
// Validity
// ---------------------------------------------------------------------------

/// Exact average error probability of a code under its ML decoders.
#[derive(Clone, Debug)]
pub struct ValidityReport {
    pub p_e: BigRational,
    pub zero_error: bool,
    /// Offending `(tuple index, codeword)` pairs, truncated.
    pub error_samples: Vec<(u64, u64)>,
    pub truncated: bool,
}

const ERROR_SAMPLE_LIMIT: usize = 16;

/// Exact `P_e` = probability that some receiver mis-decodes, under ML
/// decoders synthesized from the code and distribution.
pub fn error_probability(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    caps: &Caps,
) -> Result<ValidityReport> {
    let decoders = synthesize_decoders(code, instance, dist, caps)?;
    error_probability_with(code, instance, dist, &decoders, caps)
}

/// Same, computed against a fixed decoder set.
pub fn error_probability_with(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    decoders: &DecoderSet,
    caps: &Caps,
) -> Result<ValidityReport> {
    let space = code.space().clone();
    let ext = scope_distribution(code, instance, dist, caps)?;
    let mut p_e = BigRational::zero();
    let mut error_samples = Vec::new();
    let mut truncated = false;
    let mut it = space.iter();
    while let Some((x, digits)) = it.next() {
        let px = ext.prob_index(x);
        for (y, fp) in code.support(x) {
            if !decoders.all_correct(&space, digits, y) {
                p_e += &px * &fp;
                if error_samples.len() < ERROR_SAMPLE_LIMIT {
                    error_samples.push((x, y));
                } else {
                    truncated = true;
                }
            }
        }
    }
    let zero_error = p_e.is_zero();
    Ok(ValidityReport {
        p_e,
        zero_error,
        error_samples,
        truncated,
    })
}

/// A deterministic code decodes with zero error iff every codeword preimage
/// is an independent set of the confusion graph on the same space.
pub fn is_zero_error_valid(code: &DeterministicCode, graph: &ConfusionGraph) -> Result<bool> {
    if code.space() != graph.space() {
        return Err(Error::validation(
            "code and confusion graph live on different tuple spaces",
        ));
    }
    Ok(code.classes().iter().all(|c| graph.is_independent(c)))
}

// ---------------------------------------------------------------------------
// Determinization
// ---------------------------------------------------------------------------

/// Determinization outcome: the deterministic code together with the error
/// probabilities that certify the construction never hurt.
///
/// The comparison keeps the stochastic code's decoders fixed, exactly as in
/// the construction the guarantee comes from: per tuple, some positive-
/// support codeword errs no more often than the average over the support, so
/// `inherited_p_e <= stochastic_p_e` always. Re-synthesizing per-receiver ML
/// decoders for the new code afterwards usually helps but carries no such
/// guarantee (per-receiver estimates do not jointly maximize the probability
/// that *every* receiver is correct), so that value is reported separately.
#[derive(Clone, Debug)]
pub struct DeterminizeOutcome {
    pub code: DeterministicCode,
    /// `P_e` of the stochastic code under its ML decoders.
    pub stochastic_p_e: BigRational,
    /// `P_e` of the deterministic code under the inherited decoders;
    /// guaranteed not to exceed `stochastic_p_e`.
    pub inherited_p_e: BigRational,
    /// `P_e` of the deterministic code under freshly synthesized decoders.
    pub resynthesized_p_e: BigRational,
}

/// Collapses a stochastic encoder to a deterministic one with the same
/// codebook size and no more error: decoders are fixed to the stochastic
/// code's ML decoders, and each tuple keeps the positive-support codeword
/// with the smallest error contribution (ties to the smallest codeword).
pub fn determinize(
    code: &StochasticCode,
    instance: &Instance,
    dist: &Distribution,
    caps: &Caps,
) -> Result<DeterministicCode> {
    Ok(determinize_checked(code, instance, dist, caps)?.code)
}

/// [`determinize`] plus the exact error comparison certifying dominance.
pub fn determinize_checked(
    code: &StochasticCode,
    instance: &Instance,
    dist: &Distribution,
    caps: &Caps,
) -> Result<DeterminizeOutcome> {
    let decoders = synthesize_decoders(CodeRef::Stoch(code), instance, dist, caps)?;
    let space = code.space().clone();
    let mut map = Vec::with_capacity(space.len()? as usize);
    let mut it = space.iter();
    while let Some((x, digits)) = it.next() {
        let mut best: Option<(bool, u64)> = None; // (errs, y), minimized
        for (y, _) in code.row(x) {
            let errs = !decoders.all_correct(&space, digits, *y);
            let key = (errs, *y);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
        let (_, y) = best.expect("stochastic rows are nonempty");
        map.push(y);
    }
    let det = DeterministicCode::new(space, code.m(), map)?;
    let stochastic_p_e =
        error_probability_with(CodeRef::Stoch(code), instance, dist, &decoders, caps)?.p_e;
    let inherited_p_e =
        error_probability_with(CodeRef::Det(&det), instance, dist, &decoders, caps)?.p_e;
    if inherited_p_e > stochastic_p_e {
        return Err(Error::violation(
            "determinization increased the error under the inherited decoders",
        ));
    }
    let resynthesized_p_e = error_probability(CodeRef::Det(&det), instance, dist, caps)?.p_e;
    Ok(DeterminizeOutcome {
        code: det,
        stochastic_p_e,
        inherited_p_e,
        resynthesized_p_e,
    })
}

// ---------------------------------------------------------------------------
// Composite codes
// ---------------------------------------------------------------------------

/// Two-part code `(y1, y2)` built from a code for one subproblem and a code
/// for a disjoint subproblem; the flattened codeword is `y1 * m2 + y2`.
#[derive(Clone, Debug)]
pub struct CompositeCode {
    code: DeterministicCode,
    first_scope: Vec<usize>,
    second_scope: Vec<usize>,
    m1: u64,
    m2: u64,
}

impl CompositeCode {
    pub fn code(&self) -> &DeterministicCode {
        &self.code
    }
    pub fn m1(&self) -> u64 {
        self.m1
    }
    pub fn m2(&self) -> u64 {
        self.m2
    }
    pub fn parts_of(&self, y: u64) -> (u64, u64) {
        (y / self.m2, y % self.m2)
    }
    pub fn first_scope(&self) -> &[usize] {
        &self.first_scope
    }
    pub fn second_scope(&self) -> &[usize] {
        &self.second_scope
    }

    /// Text table with an extra `(y1,y2)` pair column.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let space = self.code.space();
        for (x, &y) in self.code.table().iter().enumerate() {
            let (y1, y2) = self.parts_of(y);
            out.push_str(&format!(
                "{} {} ({},{})\n",
                space.label_of(x as u64),
                y + 1,
                y1 + 1,
                y2 + 1
            ));
        }
        out
    }
}

/// Combines codes on disjoint scopes sharing `t` and `q` into the composite
/// encoder `x -> (f1(x_first), f2(x_second))`.
pub fn composite_code(
    first: &DeterministicCode,
    second: &DeterministicCode,
) -> Result<CompositeCode> {
    let (s1, s2) = (first.space(), second.space());
    if s1.t() != s2.t() {
        return Err(Error::validation(
            "composite parts must share the sequence length",
        ));
    }
    if s1.q() != s2.q() {
        return Err(Error::validation("composite parts must share the alphabet"));
    }
    if s1.scope().iter().any(|m| s2.scope().binary_search(m).is_ok()) {
        return Err(Error::validation("composite parts must have disjoint scopes"));
    }
    let mut union: Vec<usize> = s1.scope().iter().chain(s2.scope()).copied().collect();
    union.sort_unstable();
    let space = TupleSpace::new(union.clone(), s1.q(), s1.t())?;
    let pos1 = space.positions_of(s1.scope())?;
    let pos2 = space.positions_of(s2.scope())?;
    let m = first
        .m()
        .checked_mul(second.m())
        .ok_or_else(|| Error::validation("composite codebook size overflows"))?;
    let mut map = Vec::with_capacity(space.len()? as usize);
    let mut it = space.iter();
    while let Some((_, digits)) = it.next() {
        let x1 = space.project_index(digits, &pos1);
        let x2 = space.project_index(digits, &pos2);
        map.push(first.encode(x1) * second.m() + second.encode(x2));
    }
    Ok(CompositeCode {
        code: DeterministicCode::new(space, m, map)?,
        first_scope: s1.scope().to_vec(),
        second_scope: s2.scope().to_vec(),
        m1: first.m(),
        m2: second.m(),
    })
}

// ---------------------------------------------------------------------------
// Good sets
// ---------------------------------------------------------------------------

/// The target-tuple indices that, together with `(y, known tuple)`, have
/// positive joint probability under the code and decode correctly at every
/// receiver. For a valid code each such set is independent in the target
/// subproblem's confusion graph, so its size is capped by that graph's
/// independence number.
pub fn good_set(
    code: CodeRef<'_>,
    decoders: &DecoderSet,
    y: u64,
    known_idx: u64,
    known: &[usize],
    instance: &Instance,
    dist: &Distribution,
    caps: &Caps,
) -> Result<Vec<u64>> {
    let space = code.space().clone();
    let ext = scope_distribution(code, instance, dist, caps)?;
    let target = crate::model::complement(instance.n(), known);
    if space.scope() != instance.full_scope().as_slice() {
        return Err(Error::validation("good sets are defined on full-problem codes"));
    }
    let t = space.t();
    let known_space = TupleSpace::new(known.to_vec(), space.q(), t)?;
    let target_space = TupleSpace::new(target.clone(), space.q(), t)?;
    let known_pos = space.positions_of(known)?;
    let target_pos = space.positions_of(&target)?;

    let mut digits = vec![0; space.width()];
    let known_digits = known_space.digits_of(known_idx);
    for (&p, &d) in known_pos.iter().zip(&known_digits) {
        digits[p] = d;
    }
    let mut out = Vec::new();
    let mut it = target_space.iter();
    while let Some((q_idx, q_digits)) = it.next() {
        for (&p, &d) in target_pos.iter().zip(q_digits) {
            digits[p] = d;
        }
        let x = space.index_of(&digits);
        let fp = code
            .support(x)
            .into_iter()
            .find(|(cy, _)| *cy == y)
            .map(|(_, p)| p)
            .unwrap_or_else(BigRational::zero);
        if (&ext.prob_index(x) * fp).is_positive() && decoders.all_correct(&space, &digits, y) {
            out.push(q_idx);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::parse_rational;
    use crate::model::load_problem;

    fn caps() -> Caps {
        Caps::default()
    }

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    /// Two correlated binary messages, each receiver holding the other
    /// message, with the usual skewed table.
    fn two_message_problem() -> (Instance, Distribution) {
        let doc = r#"{
            "n": 2, "q": 2, "side_info": [[2], [1]],
            "distribution": {"joint": {"00": "1/10", "01": "1/5", "10": "3/10", "11": "2/5"}}
        }"#;
        let p = load_problem(doc).unwrap();
        (p.instance, p.distribution)
    }

    fn xor_code(space: TupleSpace) -> DeterministicCode {
        // y = x1 + x2 mod 2
        DeterministicCode::new(space, 2, vec![0, 1, 1, 0]).unwrap()
    }

    #[test]
    fn xor_decoders_invert_side_information() {
        let (inst, dist) = two_message_problem();
        let code = xor_code(inst.space(&[0, 1], 1).unwrap());
        let dec = synthesize_decoders(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        // receiver 1 holds x2 and recovers x1 = y xor x2 (likewise receiver 2)
        for k in 0..2 {
            for y in 0..2u64 {
                for side in 0..2u64 {
                    assert_eq!(dec.decode(k, y, side), Some(y ^ side));
                }
            }
        }
    }

    #[test]
    fn constant_code_decodes_to_conditional_mode() {
        let (inst, dist) = two_message_problem();
        let code = DeterministicCode::constant(inst.space(&[0, 1], 1).unwrap()).unwrap();
        let dec = synthesize_decoders(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        // argmax_x1 P(x1, x2) = 1 for either x2; argmax_x2 P(x1, x2) = 1
        for k in 0..2 {
            for side in 0..2u64 {
                assert_eq!(dec.decode(k, 0, side), Some(1));
            }
        }
    }

    #[test]
    fn constant_code_error_probability_exact() {
        let (inst, dist) = two_message_problem();
        let code = DeterministicCode::constant(inst.space(&[0, 1], 1).unwrap()).unwrap();
        let r = error_probability(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        // both receivers guess 1; only (1,1) decodes correctly
        assert_eq!(r.p_e, rat("3/5"));
        assert!(!r.zero_error);
        assert_eq!(r.error_samples.len(), 3);
    }

    #[test]
    fn xor_code_is_zero_error() {
        let (inst, dist) = two_message_problem();
        let code = xor_code(inst.space(&[0, 1], 1).unwrap());
        let graph = ConfusionGraph::build(&inst, &[0, 1], 1, &caps()).unwrap();
        assert!(is_zero_error_valid(&code, &graph).unwrap());
        let r = error_probability(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        assert!(r.zero_error);
        assert_eq!(r.p_e, rat("0"));
    }

    #[test]
    fn constant_code_invalid_on_any_edge() {
        let (inst, _) = two_message_problem();
        let code = DeterministicCode::constant(inst.space(&[0, 1], 1).unwrap()).unwrap();
        let graph = ConfusionGraph::build(&inst, &[0, 1], 1, &caps()).unwrap();
        assert!(!is_zero_error_valid(&code, &graph).unwrap());
    }

    #[test]
    fn proper_coloring_codes_recover_everything() {
        let inst = Instance::new(3, 2, vec![vec![], vec![2], vec![1]]).unwrap();
        let space = inst.space(&[0, 1, 2], 1).unwrap();
        let dist = Distribution::uniform(space.clone()).unwrap();
        let graph = ConfusionGraph::build(&inst, &[0, 1, 2], 1, &caps()).unwrap();
        let (_, coloring) = crate::invariants::chromatic_number(&graph, &caps()).unwrap();
        let code = DeterministicCode::from_coloring(space, &coloring).unwrap();
        assert!(is_zero_error_valid(&code, &graph).unwrap());
        let r = error_probability(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        assert!(r.zero_error);
    }

    #[test]
    fn zero_error_iff_classes_independent_both_directions() {
        let (inst, dist) = two_message_problem();
        let graph = ConfusionGraph::build(&inst, &[0, 1], 1, &caps()).unwrap();
        let space = inst.space(&[0, 1], 1).unwrap();
        // all 16 codes with m = 2
        for bits in 0..16u64 {
            let map: Vec<u64> = (0..4).map(|x| bits >> x & 1).collect();
            let code = DeterministicCode::new(space.clone(), 2, map).unwrap();
            let class_check = is_zero_error_valid(&code, &graph).unwrap();
            let pe_check = error_probability(CodeRef::Det(&code), &inst, &dist, &caps())
                .unwrap()
                .zero_error;
            assert_eq!(class_check, pe_check, "code {bits:04b}");
        }
    }

    #[test]
    fn determinize_keeps_deterministic_codes() {
        let (inst, dist) = two_message_problem();
        let code = xor_code(inst.space(&[0, 1], 1).unwrap());
        let stoch = StochasticCode::from_deterministic(&code);
        let det = determinize(&stoch, &inst, &dist, &caps()).unwrap();
        assert_eq!(det, code);
    }

    #[test]
    fn determinize_mixture_of_colorings_stays_zero_error() {
        let (inst, dist) = two_message_problem();
        let space = inst.space(&[0, 1], 1).unwrap();
        // flip a fair coin between two proper colorings on disjoint codeword
        // ranges, so every positive-probability codeword pins an independent
        // class; any per-tuple selection is then zero-error
        let c1 = [0u64, 1, 1, 0];
        let c2 = [1u64, 0, 0, 1];
        let rows = (0..4usize)
            .map(|x| vec![(c1[x], rat("1/2")), (2 + c2[x], rat("1/2"))])
            .collect();
        let stoch = StochasticCode::new(space, 4, rows).unwrap();
        let pe_s = error_probability(CodeRef::Stoch(&stoch), &inst, &dist, &caps()).unwrap();
        assert!(pe_s.zero_error);
        let det = determinize(&stoch, &inst, &dist, &caps()).unwrap();
        let r = error_probability(CodeRef::Det(&det), &inst, &dist, &caps()).unwrap();
        assert!(r.zero_error);
        assert_eq!(det.m(), 4);
    }

    #[test]
    fn determinize_never_increases_error() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (inst, dist) = two_message_problem();
        let space = inst.space(&[0, 1], 1).unwrap();
        for _ in 0..40 {
            let m = rng.gen_range(1..=3u64);
            let rows: Vec<Vec<(u64, BigRational)>> = (0..4)
                .map(|_| {
                    let k = rng.gen_range(1..=m);
                    let mut ys: Vec<u64> = (0..m).collect();
                    for i in (1..ys.len()).rev() {
                        ys.swap(i, rng.gen_range(0..=i));
                    }
                    let ys = &ys[..k as usize];
                    let weights: Vec<u64> = (0..k).map(|_| rng.gen_range(1..5)).collect();
                    let total: u64 = weights.iter().sum();
                    ys.iter()
                        .zip(&weights)
                        .map(|(&y, &w)| (y, BigRational::new(w.into(), total.into())))
                        .collect()
                })
                .collect();
            let mut sorted_rows = rows;
            for row in &mut sorted_rows {
                row.sort_by_key(|(y, _)| *y);
            }
            let stoch = StochasticCode::new(space.clone(), m, sorted_rows).unwrap();
            let out = determinize_checked(&stoch, &inst, &dist, &caps()).unwrap();
            assert!(out.inherited_p_e <= out.stochastic_p_e);
            assert_eq!(out.code.m(), stoch.m());
            // the exhaustive selection oracle: no per-tuple support choice
            // beats the greedy pick under the inherited decoders
            let decoders =
                synthesize_decoders(CodeRef::Stoch(&stoch), &inst, &dist, &caps()).unwrap();
            let choices: Vec<usize> = (0..4).map(|x| stoch.row(x).len()).collect();
            let total: usize = choices.iter().product();
            let mut best: Option<BigRational> = None;
            for pick in 0..total {
                let mut rem = pick;
                let map: Vec<u64> = (0..4)
                    .map(|x| {
                        let k = rem % choices[x as usize];
                        rem /= choices[x as usize];
                        stoch.row(x)[k].0
                    })
                    .collect();
                let cand = DeterministicCode::new(space.clone(), stoch.m(), map).unwrap();
                let pe = error_probability_with(
                    CodeRef::Det(&cand),
                    &inst,
                    &dist,
                    &decoders,
                    &caps(),
                )
                .unwrap()
                .p_e;
                if best.as_ref().map_or(true, |b| pe < *b) {
                    best = Some(pe);
                }
            }
            assert_eq!(out.inherited_p_e, best.unwrap());
        }
    }

    #[test]
    fn composite_of_identity_and_coloring() {
        let inst = Instance::new(4, 2, vec![vec![3], vec![2], vec![1], vec![0]]).unwrap();
        let space_p = inst.space(&[3], 1).unwrap();
        let code_p = DeterministicCode::identity(space_p).unwrap();
        let graph_q = ConfusionGraph::build(&inst, &[0, 1, 2], 1, &caps()).unwrap();
        let (chi, coloring) = crate::invariants::chromatic_number(&graph_q, &caps()).unwrap();
        assert_eq!(chi, 4);
        let code_q =
            DeterministicCode::from_coloring(inst.space(&[0, 1, 2], 1).unwrap(), &coloring)
                .unwrap();
        let comp = composite_code(&code_p, &code_q).unwrap();
        assert_eq!(comp.code().m(), 8);
        let full_graph = ConfusionGraph::build(&inst, &[0, 1, 2, 3], 1, &caps()).unwrap();
        assert!(is_zero_error_valid(comp.code(), &full_graph).unwrap());
        let dist = Distribution::uniform(inst.space(&[0, 1, 2, 3], 1).unwrap()).unwrap();
        let r = error_probability(CodeRef::Det(comp.code()), &inst, &dist, &caps()).unwrap();
        assert!(r.zero_error);
        // pair structure round-trips
        let (y1, y2) = comp.parts_of(comp.code().encode(5));
        assert_eq!(y1 * comp.m2() + y2, comp.code().encode(5));
    }

    #[test]
    fn composite_with_empty_scope_is_identity_on_the_other() {
        let inst = Instance::new(2, 2, vec![vec![1], vec![0]]).unwrap();
        let empty = DeterministicCode::constant(inst.space(&[], 1).unwrap()).unwrap();
        let code = xor_code(inst.space(&[0, 1], 1).unwrap());
        for (first, second) in [(&empty, &code), (&code, &empty)] {
            let comp = composite_code(first, second).unwrap();
            assert_eq!(comp.code().m(), 2);
            assert_eq!(comp.code().table(), code.table());
        }
    }

    #[test]
    fn composite_rejects_mismatched_lengths() {
        let inst = Instance::new(2, 2, vec![vec![1], vec![0]]).unwrap();
        let a = DeterministicCode::constant(inst.space(&[0], 1).unwrap()).unwrap();
        let b = DeterministicCode::constant(inst.space(&[1], 2).unwrap()).unwrap();
        assert!(composite_code(&a, &b).is_err());
    }

    #[test]
    fn good_sets_of_a_proper_coloring() {
        let inst = Instance::new(3, 2, vec![vec![], vec![2], vec![1]]).unwrap();
        let space = inst.space(&[0, 1, 2], 1).unwrap();
        let dist = Distribution::uniform(space.clone()).unwrap();
        let graph = ConfusionGraph::build(&inst, &[0, 1, 2], 1, &caps()).unwrap();
        let (_, coloring) = crate::invariants::chromatic_number(&graph, &caps()).unwrap();
        let code = DeterministicCode::from_coloring(space, &coloring).unwrap();
        let dec = synthesize_decoders(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        let (alpha, _) = crate::invariants::independence_number(&graph).unwrap();
        let classes = code.classes();
        // adversary knows nothing: good set of y = the whole color class
        let mut union = 0usize;
        for y in 0..code.m() {
            let good = good_set(
                CodeRef::Det(&code),
                &dec,
                y,
                0,
                &[],
                &inst,
                &dist,
                &caps(),
            )
            .unwrap();
            assert_eq!(
                good,
                classes[y as usize].iter().map(|v| v as u64).collect::<Vec<_>>()
            );
            assert!(good.len() as u64 <= alpha);
            union += good.len();
        }
        assert_eq!(union, 8);
    }

    #[test]
    fn good_sets_can_be_empty_for_bad_codes() {
        let (inst, dist) = two_message_problem();
        let code = DeterministicCode::constant(inst.space(&[0, 1], 1).unwrap()).unwrap();
        let dec = synthesize_decoders(CodeRef::Det(&code), &inst, &dist, &caps()).unwrap();
        // adversary knows message 1; for x1 = 0 every guess misdecodes
        let good = good_set(
            CodeRef::Det(&code),
            &dec,
            0,
            0,
            &[0],
            &inst,
            &dist,
            &caps(),
        )
        .unwrap();
        assert!(good.is_empty());
    }

    #[test]
    fn code_text_round_trip() {
        let (inst, _) = two_message_problem();
        let code = xor_code(inst.space(&[0, 1], 1).unwrap());
        let text = code.to_text();
        assert_eq!(text, "00 1\n01 2\n10 2\n11 1\n");
        let parsed = DeterministicCode::parse(&text, inst.space(&[0, 1], 1).unwrap()).unwrap();
        assert_eq!(parsed, code);
    }

    #[test]
    fn code_parse_rejects_gaps_and_dupes() {
        let (inst, _) = two_message_problem();
        let space = inst.space(&[0, 1], 1).unwrap();
        assert!(DeterministicCode::parse("00 1\n01 1\n10 1\n", space.clone()).is_err());
        assert!(
            DeterministicCode::parse("00 1\n00 2\n01 1\n10 1\n11 1\n", space.clone()).is_err()
        );
        assert!(DeterministicCode::parse("00 0\n01 1\n10 1\n11 1\n", space).is_err());
    }

    #[test]
    fn composite_text_has_pair_column() {
        let inst = Instance::new(2, 2, vec![vec![1], vec![0]]).unwrap();
        let p = DeterministicCode::identity(inst.space(&[0], 1).unwrap()).unwrap();
        let q = DeterministicCode::identity(inst.space(&[1], 1).unwrap()).unwrap();
        let comp = composite_code(&p, &q).unwrap();
        let text = comp.to_text();
        assert_eq!(text, "00 1 (1,1)\n01 2 (1,2)\n10 3 (2,1)\n11 4 (2,2)\n");
    }
}
