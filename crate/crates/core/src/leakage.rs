//! Leakage to a guessing adversary: exact success probabilities before and
//! after observing the codeword, the leakage of concrete codes, exhaustive
//! optimal-leakage search over zero-error codes, rate-bound evaluation, the
//! identity and inequality checkers tying codes to graph invariants, and a
//! seeded Monte Carlo estimator for spaces beyond the exact caps.

use crate::codes::{
    error_probability, good_set, synthesize_decoders, CodeRef, CompositeCode, DeterministicCode,
};
use crate::error::{Error, Result};
use crate::exact::{format_bits_value, format_rational, Bits};
use crate::graph::ConfusionGraph;
use crate::invariants::{chromatic_number, independence_number_capped, RateBracket};
use crate::model::{AdversarySpec, Caps, Distribution, Instance, Sampler, Symbol, TupleSpace};
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::HashMap;

// ---------------------------------------------------------------------------
// Top-c mass
// ---------------------------------------------------------------------------

/// Sum of the `c` largest probabilities of a distribution (all of them when
/// `c` covers the support). Ties at the cutoff cannot change the sum.
pub fn top_c_mass(dist: &Distribution, c: u64) -> Result<BigRational> {
    if c == 0 {
        return Err(Error::validation("the adversary makes at least one guess"));
    }
    let len = dist.space().len()?;
    let mut probs: Vec<BigRational> = (0..len).map(|i| dist.prob_index(i)).collect();
    Ok(top_c_sum(&mut probs, c))
}

fn top_c_sum(values: &mut [BigRational], c: u64) -> BigRational {
    values.sort_unstable_by(|a, b| b.cmp(a));
    values.iter().take(c as usize).sum()
}

// ---------------------------------------------------------------------------
// Exact success probabilities
// ---------------------------------------------------------------------------

/// Shared geometry for the adversary's view of the length-`t` problem.
struct AdversaryView {
    space: TupleSpace,
    ext: Distribution,
    known_positions: Vec<usize>,
    known_len: u64,
    target_space: TupleSpace,
    c: u64,
}

fn adversary_view(
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    caps: &Caps,
) -> Result<AdversaryView> {
    if dist.scope() != instance.full_scope().as_slice() || dist.t() != 1 {
        return Err(Error::validation(
            "expected the single-letter joint distribution over all messages",
        ));
    }
    let space = instance.space(&instance.full_scope(), t)?;
    let ext = dist.product_extend(t, caps)?;
    let known_positions = space.positions_of(adversary.known())?;
    let known_space = TupleSpace::new(adversary.known().to_vec(), instance.q(), t)?;
    let target_space = TupleSpace::new(adversary.target().to_vec(), instance.q(), t)?;
    Ok(AdversaryView {
        space,
        ext,
        known_positions,
        known_len: known_space.len()?,
        target_space,
        c: adversary.guesses_at(t)?,
    })
}

fn require_materialized(view: &AdversaryView) -> Result<()> {
    if !view.ext.is_materialized() {
        return Err(Error::cap(
            "joint sequence space exceeds the materialization cap; use the sampling path",
        ));
    }
    Ok(())
}

/// Expected probability that the adversary's best `c(t)`-guess list contains
/// the target tuple before seeing the codeword.
pub fn ps_prior(
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    caps: &Caps,
) -> Result<BigRational> {
    let view = adversary_view(instance, dist, adversary, t, caps)?;
    require_materialized(&view)?;
    // bucket the joint by the known part; top-c of each bucket already
    // carries the P(known) weight
    let mut buckets: Vec<Vec<BigRational>> = vec![Vec::new(); view.known_len as usize];
    let mut it = view.space.iter();
    while let Some((x, digits)) = it.next() {
        let k = view.space.project_index(digits, &view.known_positions);
        buckets[k as usize].push(view.ext.prob_index(x));
    }
    Ok(buckets
        .iter_mut()
        .map(|b| top_c_sum(b, view.c))
        .sum())
}

/// Expected success probability after observing the codeword.
pub fn ps_posterior(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    caps: &Caps,
) -> Result<BigRational> {
    let view = adversary_view(instance, dist, adversary, t, caps)?;
    require_materialized(&view)?;
    validate_code_shape(code, &view)?;
    let m = code.m();
    let mut buckets: Vec<Vec<BigRational>> =
        vec![Vec::new(); (m * view.known_len) as usize];
    let mut it = view.space.iter();
    while let Some((x, digits)) = it.next() {
        let k = view.space.project_index(digits, &view.known_positions);
        let px = view.ext.prob_index(x);
        for (y, fp) in code.support(x) {
            buckets[(y * view.known_len + k) as usize].push(&px * &fp);
        }
    }
    Ok(buckets
        .iter_mut()
        .map(|b| top_c_sum(b, view.c))
        .sum())
}

fn validate_code_shape(code: CodeRef<'_>, view: &AdversaryView) -> Result<()> {
    if code.space() != &view.space {
        return Err(Error::validation(
            "code must cover all messages at the evaluated sequence length",
        ));
    }
    Ok(())
}

/// One entry of the adversary's optimal guessing strategy: the ranked guess
/// list for an observation with positive probability.
#[derive(Clone, Debug)]
pub struct GuessList {
    pub y: u64,
    pub known_idx: u64,
    /// Target-tuple indices ranked by posterior, ties by tuple index.
    pub guesses: Vec<u64>,
}

/// The per-observation argmax guess lists behind `ps_posterior`.
pub fn posterior_guess_lists(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    caps: &Caps,
) -> Result<Vec<GuessList>> {
    let view = adversary_view(instance, dist, adversary, t, caps)?;
    require_materialized(&view)?;
    validate_code_shape(code, &view)?;
    let m = code.m();
    let target_positions = view.space.positions_of(view.target_space.scope())?;
    let mut buckets: Vec<Vec<(BigRational, u64)>> =
        vec![Vec::new(); (m * view.known_len) as usize];
    let mut it = view.space.iter();
    while let Some((x, digits)) = it.next() {
        let k = view.space.project_index(digits, &view.known_positions);
        let q_idx = view.space.project_index(digits, &target_positions);
        let px = view.ext.prob_index(x);
        for (y, fp) in code.support(x) {
            let p = &px * &fp;
            if p.is_positive() {
                buckets[(y * view.known_len + k) as usize].push((p, q_idx));
            }
        }
    }
    let mut out = Vec::new();
    for y in 0..m {
        for k in 0..view.known_len {
            let bucket = &mut buckets[(y * view.known_len + k) as usize];
            if bucket.is_empty() {
                continue;
            }
            bucket.sort_unstable_by(|(pa, ia), (pb, ib)| pb.cmp(pa).then(ia.cmp(ib)));
            out.push(GuessList {
                y,
                known_idx: k,
                guesses: bucket
                    .iter()
                    .take(view.c as usize)
                    .map(|(_, i)| *i)
                    .collect(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Leakage of a concrete code
// ---------------------------------------------------------------------------

/// Exact leakage of one code: prior and posterior success probabilities and
/// their log-ratio in bits, exact alongside the float rendering.
#[derive(Clone, Debug)]
pub struct LeakageReport {
    pub ps_prior: BigRational,
    pub ps_posterior: BigRational,
    pub ratio: BigRational,
    pub leaked_bits: Bits,
    pub t: usize,
    pub c_used: u64,
    pub code: String,
    pub warnings: Vec<String>,
}

impl LeakageReport {
    pub fn to_json(&self) -> Value {
        json!({
            "ps_prior": format_rational(&self.ps_prior),
            "ps_posterior": format_rational(&self.ps_posterior),
            "ratio": format_rational(&self.ratio),
            "leakage": bits_json(&self.leaked_bits),
            "t": self.t,
            "guesses": self.c_used,
            "code": self.code,
            "warnings": self.warnings,
        })
    }
}

pub(crate) fn bits_json(b: &Bits) -> Value {
    json!({ "exact": b.exact_repr(), "bits": format_bits_value(b.value()) })
}

/// Leakage of a code under the adversary's optimal guessing.
pub fn leakage(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    code_name: &str,
    caps: &Caps,
) -> Result<LeakageReport> {
    let prior = ps_prior(instance, dist, adversary, t, caps)?;
    let posterior = ps_posterior(code, instance, dist, adversary, t, caps)?;
    build_leakage_report(prior, posterior, t, adversary.guesses_at(t)?, code_name)
}

fn build_leakage_report(
    prior: BigRational,
    posterior: BigRational,
    t: usize,
    c: u64,
    code_name: &str,
) -> Result<LeakageReport> {
    if posterior < prior || !prior.is_positive() || posterior > BigRational::one() {
        return Err(Error::violation(format!(
            "success probabilities out of order: prior {} posterior {}",
            format_rational(&prior),
            format_rational(&posterior)
        )));
    }
    let ratio = &posterior / &prior;
    Ok(LeakageReport {
        leaked_bits: Bits::of_ratio(&ratio)?,
        ps_prior: prior,
        ps_posterior: posterior,
        ratio,
        t,
        c_used: c,
        code: code_name.to_string(),
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Optimal zero-error leakage (exhaustive search)
// ---------------------------------------------------------------------------

/// Enumerates every partition of the graph's vertices into exactly `k`
/// nonempty independent classes, in canonical (restricted-growth) order, so
/// codes are visited once per codeword-relabeling class. Returns the number
/// of partitions visited.
pub fn enumerate_proper_partitions(
    graph: &ConfusionGraph,
    k: usize,
    budget: &mut u64,
    f: &mut dyn FnMut(&[u32]) -> Result<()>,
) -> Result<u64> {
    let v = graph.vertex_count();
    if k == 0 || k > v {
        return Ok(0);
    }
    let mut classes: Vec<crate::bitset::BitSet> =
        vec![crate::bitset::BitSet::new(v); k];
    let mut assignment = vec![0u32; v];
    let mut count = 0u64;
    fn recurse(
        graph: &ConfusionGraph,
        k: usize,
        vertex: usize,
        used: usize,
        classes: &mut Vec<crate::bitset::BitSet>,
        assignment: &mut Vec<u32>,
        budget: &mut u64,
        count: &mut u64,
        f: &mut dyn FnMut(&[u32]) -> Result<()>,
    ) -> Result<()> {
        let v = graph.vertex_count();
        if *budget == 0 {
            return Err(Error::budget(
                "optimal-leakage search exceeded its budget; raise --search-budget",
            ));
        }
        *budget -= 1;
        if used + (v - vertex) < k {
            return Ok(()); // cannot reach k classes any more
        }
        if vertex == v {
            *count += 1;
            return f(assignment);
        }
        let limit = (used + 1).min(k);
        for c in 0..limit {
            if classes[c].is_disjoint(graph.row(vertex)) {
                classes[c].insert(vertex);
                assignment[vertex] = c as u32;
                recurse(
                    graph,
                    k,
                    vertex + 1,
                    used.max(c + 1),
                    classes,
                    assignment,
                    budget,
                    count,
                    f,
                )?;
                classes[c].remove(vertex);
            }
        }
        Ok(())
    }
    recurse(
        graph,
        k,
        0,
        0,
        &mut classes,
        &mut assignment,
        budget,
        &mut count,
        f,
    )?;
    Ok(count)
}

/// Result of the exhaustive search over zero-error codes at fixed `t`.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub report: LeakageReport,
    pub code: DeterministicCode,
    pub chi: u64,
    /// Whether any codebook larger than the chromatic number strictly beat
    /// the best chromatic-size code (the search checks instead of assuming).
    pub larger_codebook_helped: bool,
    pub partitions_examined: u64,
}

/// Minimizes leakage over all deterministic zero-error codes at sequence
/// length `t`, enumerating surjective proper partitions for codebook sizes
/// from the chromatic number up to a small configured excess. Ties go to the
/// earliest canonical encoder table at the smallest codebook size.
pub fn optimal_zero_error_leakage(
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    clamp_capability: bool,
    caps: &Caps,
) -> Result<SearchOutcome> {
    let scope = instance.full_scope();
    let graph = ConfusionGraph::build(instance, &scope, t, caps)?;
    let (c_eff, mut warnings) =
        effective_guesses(instance, adversary, t, clamp_capability, caps)?;
    let view = adversary_view(instance, dist, adversary, t, caps)?;
    require_materialized(&view)?;

    // per-vertex known-part index and probability, computed once
    let v = graph.vertex_count();
    let mut known_of = vec![0u64; v];
    let mut prob_of = vec![BigRational::zero(); v];
    let mut it = view.space.iter();
    while let Some((x, digits)) = it.next() {
        known_of[x as usize] = view.space.project_index(digits, &view.known_positions);
        prob_of[x as usize] = view.ext.prob_index(x);
    }
    let mut prior_buckets: Vec<Vec<BigRational>> = vec![Vec::new(); view.known_len as usize];
    for x in 0..v {
        prior_buckets[known_of[x] as usize].push(prob_of[x].clone());
    }
    let prior: BigRational = prior_buckets.iter_mut().map(|b| top_c_sum(b, c_eff)).sum();

    let (chi, _) = chromatic_number(&graph, caps)?;
    let k_max = ((chi + caps.search_extra_codewords) as usize).min(v);
    let mut budget = caps.search_budget;
    let mut best: Option<(BigRational, usize, Vec<u32>)> = None;
    let mut partitions = 0u64;
    for k in chi as usize..=k_max {
        let mut eval = |assignment: &[u32]| -> Result<()> {
            let mut buckets: Vec<Vec<BigRational>> =
                vec![Vec::new(); k * view.known_len as usize];
            for x in 0..v {
                let slot = assignment[x] as usize * view.known_len as usize
                    + known_of[x] as usize;
                buckets[slot].push(prob_of[x].clone());
            }
            let posterior: BigRational =
                buckets.iter_mut().map(|b| top_c_sum(b, c_eff)).sum();
            let better = match &best {
                None => true,
                Some((p, _, _)) => posterior < *p,
            };
            if better {
                best = Some((posterior, k, assignment.to_vec()));
            }
            Ok(())
        };
        partitions += enumerate_proper_partitions(&graph, k, &mut budget, &mut eval)?;
    }
    let (posterior, k_best, assignment) =
        best.ok_or_else(|| Error::violation("no zero-error code found"))?;
    let larger_codebook_helped = k_best > chi as usize;
    let code = DeterministicCode::new(
        view.space.clone(),
        k_best as u64,
        assignment.iter().map(|&c| c as u64).collect(),
    )?;
    let mut report = build_leakage_report(
        prior,
        posterior,
        t,
        c_eff,
        &format!("optimal-search(t={t}, codewords={k_best})"),
    )?;
    report.warnings.append(&mut warnings);
    Ok(SearchOutcome {
        report,
        code,
        chi,
        larger_codebook_helped,
        partitions_examined: partitions,
    })
}

/// Validates `c(t)` against the independence number of the adversary's
/// confusion graph. Beyond it the guessing problem is trivial; strict mode
/// rejects, exploratory mode clamps with a warning.
fn effective_guesses(
    instance: &Instance,
    adversary: &AdversarySpec,
    t: usize,
    clamp: bool,
    caps: &Caps,
) -> Result<(u64, Vec<String>)> {
    let c = adversary.guesses_at(t)?;
    let q_graph = ConfusionGraph::build(instance, adversary.target(), t, caps)?;
    let (alpha, _) = independence_number_capped(&q_graph, caps)?;
    if c <= alpha {
        return Ok((c, Vec::new()));
    }
    if clamp {
        Ok((
            alpha,
            vec![format!(
                "capability {c} exceeds the target independence number {alpha}; clamped to {alpha}"
            )],
        ))
    } else {
        Err(Error::validation(format!(
            "capability {c} exceeds the independence number {alpha} of the target confusion \
             graph at t={t}, which trivializes guessing; pass --clamp-capability to clamp"
        )))
    }
}

// ---------------------------------------------------------------------------
// Rate bounds
// ---------------------------------------------------------------------------

/// One side of a bound, possibly interval-valued when the underlying rate is
/// only bracketed.
#[derive(Clone, Debug)]
pub struct BoundInterval {
    pub lo: Option<Bits>,
    pub hi: Option<Bits>,
    pub provenance: String,
}

impl BoundInterval {
    fn point(b: Bits, provenance: String) -> Self {
        BoundInterval {
            lo: Some(b.clone()),
            hi: Some(b),
            provenance,
        }
    }

    pub fn is_point(&self) -> bool {
        matches!((&self.lo, &self.hi), (Some(a), Some(b)) if a == b)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "lo": self.lo.as_ref().map(bits_json),
            "hi": self.hi.as_ref().map(bits_json),
            "exact": self.is_point(),
            "provenance": self.provenance,
        })
    }
}

/// Bounds on the optimal leakage rate of the problem, for both decoding
/// regimes, derived from the target subproblem's rate bracket and the
/// distribution's summed row maxima.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub target: Vec<usize>,
    /// Σ over known tuples of the largest joint probability.
    pub sum_max: BigRational,
    /// `log2(1 / sum_max)`.
    pub correction: Bits,
    /// `|target| * log2(q)`.
    pub target_size_bits: Bits,
    /// Shared lower bound: zero-error rate of the target subproblem minus
    /// the target size plus the correction.
    pub lower: BoundInterval,
    /// Upper bound under vanishing-error decoding: the target's broadcast
    /// rate (externally supplied when known).
    pub upper_vanishing: BoundInterval,
    /// Upper bound under zero-error decoding: the target's zero-error rate.
    pub upper_zero_error: BoundInterval,
    pub bracket: RateBracket,
    pub warnings: Vec<String>,
}

impl BoundReport {
    pub fn to_json(&self) -> Value {
        json!({
            "target": self.target.iter().map(|&i| i + 1).collect::<Vec<_>>(),
            "sum_max": format_rational(&self.sum_max),
            "correction": bits_json(&self.correction),
            "target_size_bits": bits_json(&self.target_size_bits),
            "lower": self.lower.to_json(),
            "upper_vanishing": self.upper_vanishing.to_json(),
            "upper_zero_error": self.upper_zero_error.to_json(),
            "rate_bracket": {
                "lower": bits_json(&self.bracket.lower),
                "upper": bits_json(&self.bracket.upper),
                "certified": self.bracket.certified,
            },
            "warnings": self.warnings,
        })
    }
}

/// Σ over known-part values of the maximum joint probability over target
/// completions, at sequence length one.
pub fn sum_max_mass(
    instance: &Instance,
    dist: &Distribution,
    known: &[usize],
    caps: &Caps,
) -> Result<BigRational> {
    let space = instance.space(&instance.full_scope(), 1)?;
    if dist.scope() != space.scope() || dist.t() != 1 {
        return Err(Error::validation(
            "expected the single-letter joint distribution over all messages",
        ));
    }
    if space.len()? > caps.materialize_tuples {
        return Err(Error::cap("joint alphabet exceeds the materialization cap"));
    }
    let known_positions = space.positions_of(known)?;
    let known_space = TupleSpace::new(known.to_vec(), instance.q(), 1)?;
    let mut maxima: Vec<Option<BigRational>> = vec![None; known_space.len()? as usize];
    let mut it = space.iter();
    while let Some((x, digits)) = it.next() {
        let k = space.project_index(digits, &known_positions) as usize;
        let p = dist.prob_index(x);
        if maxima[k].as_ref().map_or(true, |m| p > *m) {
            maxima[k] = Some(p);
        }
    }
    Ok(maxima.into_iter().map(|m| m.unwrap()).sum())
}

/// Evaluates the leakage-rate bounds from a rate bracket of the target
/// subproblem: `ρ(target) − |target|·log2 q + log2(1/sum_max)` from below,
/// the target's broadcast rate (vanishing error) or zero-error rate from
/// above. Interval-valued whenever the bracket is not pinned.
pub fn leakage_rate_bounds(
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    bracket: &RateBracket,
    known_rate: Option<&crate::model::KnownRate>,
    caps: &Caps,
) -> Result<BoundReport> {
    if bracket.scope != adversary.target() {
        return Err(Error::validation(
            "rate bracket does not cover the adversary's target subproblem",
        ));
    }
    let sum_max = sum_max_mass(instance, dist, adversary.known(), caps)?;
    let correction = Bits::of_ratio(&sum_max.recip())?;
    let q_pow = BigRational::from_integer(
        BigInt::from(instance.q()).pow(adversary.target().len() as u32),
    );
    let target_size_bits = Bits::of_ratio(&q_pow)?;

    let shift = |b: &Bits| -> Result<Bits> {
        b.sub(&target_size_bits)?.add(&correction)
    };
    let lower = BoundInterval {
        lo: Some(shift(&bracket.lower)?),
        hi: Some(shift(&bracket.upper)?),
        provenance: if bracket.certified {
            "zero-error rate of the target subproblem (certified) minus target size plus \
             correction"
                .into()
        } else {
            "zero-error rate bracket of the target subproblem minus target size plus correction"
                .into()
        },
    };
    let upper_zero_error = BoundInterval {
        lo: Some(bracket.lower.clone()),
        hi: Some(bracket.upper.clone()),
        provenance: "zero-error rate bracket of the target subproblem".into(),
    };
    let upper_vanishing = match known_rate {
        Some(k) => BoundInterval::point(
            k.value.clone(),
            format!(
                "externally supplied broadcast rate `{}`{}",
                k.expr,
                k.citation
                    .as_ref()
                    .map(|c| format!(" ({c})"))
                    .unwrap_or_default()
            ),
        ),
        None => BoundInterval {
            lo: None,
            hi: Some(bracket.upper.clone()),
            provenance:
                "broadcast rate unknown; bounded above by the zero-error rate bracket".into(),
        },
    };

    let mut warnings = Vec::new();
    if instance.q() > 2 {
        warnings.push(
            "target-size term interpreted as |target|*log2(q) bits; the binary case is the \
             only one exemplified"
                .to_string(),
        );
    }
    // bracket-consistency: when everything is pinned the bounds must nest
    if let (Some(lo), Some(hi)) = (&lower.lo, &upper_zero_error.hi) {
        if lower.is_point() && upper_zero_error.is_point() && lo > hi {
            return Err(Error::violation(
                "lower leakage bound exceeds the zero-error upper bound",
            ));
        }
    }
    Ok(BoundReport {
        target: adversary.target().to_vec(),
        sum_max,
        correction,
        target_size_bits,
        lower,
        upper_vanishing,
        upper_zero_error,
        bracket: bracket.clone(),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Uniform-distribution equivalence
// ---------------------------------------------------------------------------

/// Per-t row of the uniform-distribution report: the searched optimal
/// leakage against the coloring rate of the target subproblem.
#[derive(Clone, Debug)]
pub struct UniformLeakageRow {
    pub t: usize,
    pub optimal_leakage: Bits,
    pub per_symbol: Bits,
    pub target_coloring_rate: Bits,
    pub agrees: bool,
    pub larger_codebook_helped: bool,
}

/// Under a uniform distribution the correction term cancels the target size,
/// so the leakage-rate bounds collapse onto the target's zero-error rate;
/// this report verifies the collapse and compares the searched finite-t
/// optimum against the coloring rate at each length.
#[derive(Clone, Debug)]
pub struct UniformEquivalenceReport {
    pub target: Vec<usize>,
    pub rows: Vec<UniformLeakageRow>,
    pub bracket: RateBracket,
    pub correction_matches_target_size: bool,
    pub warnings: Vec<String>,
}

impl UniformEquivalenceReport {
    pub fn to_json(&self) -> Value {
        json!({
            "target": self.target.iter().map(|&i| i + 1).collect::<Vec<_>>(),
            "correction_matches_target_size": self.correction_matches_target_size,
            "rows": self.rows.iter().map(|r| json!({
                "t": r.t,
                "optimal_leakage": bits_json(&r.optimal_leakage),
                "per_symbol": bits_json(&r.per_symbol),
                "target_coloring_rate": bits_json(&r.target_coloring_rate),
                "agrees": r.agrees,
                "larger_codebook_helped": r.larger_codebook_helped,
            })).collect::<Vec<_>>(),
            "rate_bracket": {
                "lower": bits_json(&self.bracket.lower),
                "upper": bits_json(&self.bracket.upper),
                "certified": self.bracket.certified,
            },
            "warnings": self.warnings,
        })
    }

    /// `t,optimal_leakage,lower_bound,upper_bound` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,optimal_leakage,lower_bound,upper_bound\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.t,
                format_bits_value(r.per_symbol.value()),
                format_bits_value(self.bracket.lower.value()),
                format_bits_value(self.bracket.upper.value()),
            ));
        }
        out
    }
}

pub fn uniform_equivalence_report(
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t_max: usize,
    bracket: &RateBracket,
    caps: &Caps,
) -> Result<UniformEquivalenceReport> {
    if !dist.is_uniform() {
        return Err(Error::validation(
            "the equivalence report requires the uniform distribution",
        ));
    }
    let sum_max = sum_max_mass(instance, dist, adversary.known(), caps)?;
    let correction = Bits::of_ratio(&sum_max.recip())?;
    let q_pow = BigRational::from_integer(
        BigInt::from(instance.q()).pow(adversary.target().len() as u32),
    );
    let target_size_bits = Bits::of_ratio(&q_pow)?;
    let correction_matches = correction == target_size_bits;

    let mut rows = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let outcome = optimal_zero_error_leakage(instance, dist, adversary, t, false, caps)?;
        let q_graph = ConfusionGraph::build(instance, adversary.target(), t, caps)?;
        let (chi_q, _) = chromatic_number(&q_graph, caps)?;
        let coloring_rate = Bits::per_symbol(
            &BigRational::from_integer(BigInt::from(chi_q)),
            t as u32,
        )?;
        let per_symbol = outcome
            .report
            .leaked_bits
            .mul_ratio(&BigRational::new(BigInt::one(), BigInt::from(t)))?;
        rows.push(UniformLeakageRow {
            t,
            agrees: per_symbol == coloring_rate,
            optimal_leakage: outcome.report.leaked_bits.clone(),
            per_symbol,
            target_coloring_rate: coloring_rate,
            larger_codebook_helped: outcome.larger_codebook_helped,
        });
    }
    Ok(UniformEquivalenceReport {
        target: adversary.target().to_vec(),
        rows,
        bracket: bracket.clone(),
        correction_matches_target_size: correction_matches,
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Identity and inequality checks
// ---------------------------------------------------------------------------

/// Both routes of the summed-row-maxima identity: the direct sequence-space
/// enumeration and the single-letter value raised to the t-th power. They
/// must agree exactly on every memoryless distribution.
#[derive(Clone, Debug)]
pub struct ProductIdentity {
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub holds: bool,
}

pub fn sum_max_product_identity(
    dist: &Distribution,
    a: &[usize],
    b: &[usize],
    t: usize,
    caps: &Caps,
) -> Result<ProductIdentity> {
    if a.iter().any(|m| b.contains(m)) {
        return Err(Error::validation("the two subsets must be disjoint"));
    }
    let mut union: Vec<usize> = a.iter().chain(b).copied().collect();
    union.sort_unstable();
    let marg = dist.marginal(&union, caps)?;
    let q = dist.space().q();

    // single-letter value
    let a1 = TupleSpace::new(a.to_vec(), q, 1)?;
    let b1 = TupleSpace::new(b.to_vec(), q, 1)?;
    let single = sum_max_over(&marg, &a1, &b1)?;
    let mut rhs = BigRational::one();
    for _ in 0..t {
        rhs *= &single;
    }

    // direct sequence-space enumeration
    let ext = marg.product_extend(t, caps)?;
    let at = TupleSpace::new(a.to_vec(), q, t)?;
    let bt = TupleSpace::new(b.to_vec(), q, t)?;
    let lhs = sum_max_over(&ext, &at, &bt)?;

    Ok(ProductIdentity {
        holds: lhs == rhs,
        lhs,
        rhs,
    })
}

/// Σ over `a_space` of the maximum over `b_space` of the joint probability.
fn sum_max_over(
    joint: &Distribution,
    a_space: &TupleSpace,
    b_space: &TupleSpace,
) -> Result<BigRational> {
    let space = joint.space();
    let a_pos = space.positions_of(a_space.scope())?;
    let b_pos = space.positions_of(b_space.scope())?;
    let mut digits = vec![0; space.width()];
    let mut total = BigRational::zero();
    let mut a_it = a_space.iter();
    while let Some((_, a_digits)) = a_it.next() {
        for (&p, &d) in a_pos.iter().zip(a_digits) {
            digits[p] = d;
        }
        let mut best: Option<BigRational> = None;
        let mut b_it = b_space.iter();
        while let Some((_, b_digits)) = b_it.next() {
            for (&p, &d) in b_pos.iter().zip(b_digits) {
                digits[p] = d;
            }
            let p = joint.prob_digits(&digits);
            if best.as_ref().map_or(true, |m| p > *m) {
                best = Some(p);
            }
        }
        total += best.expect("tuple spaces are nonempty");
    }
    Ok(total)
}

/// The converse-side checks for one code: conservation of good-set mass
/// (must equal `1 − P_e`), the good-set size cap by the target independence
/// number, and the posterior floor `c(t)·(1−P_e)/α`. For composite codes the
/// leakage is additionally capped by the size of the target-part codebook.
#[derive(Clone, Debug)]
pub struct ConverseReport {
    pub p_e: BigRational,
    pub good_mass: BigRational,
    pub mass_conserved: bool,
    pub max_good_set: u64,
    pub alpha_target: u64,
    pub good_sets_bounded: bool,
    pub posterior: BigRational,
    pub posterior_floor: BigRational,
    pub floor_holds: bool,
    /// `leakage <= log2(m2)` for composite codes, `None` otherwise.
    pub pair_cap_holds: Option<bool>,
    pub c_used: u64,
}

impl ConverseReport {
    pub fn all_hold(&self) -> bool {
        self.mass_conserved
            && self.good_sets_bounded
            && self.floor_holds
            && self.pair_cap_holds.unwrap_or(true)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p_e": format_rational(&self.p_e),
            "good_mass": format_rational(&self.good_mass),
            "mass_conserved": self.mass_conserved,
            "max_good_set": self.max_good_set,
            "alpha_target": self.alpha_target,
            "good_sets_bounded": self.good_sets_bounded,
            "posterior": format_rational(&self.posterior),
            "posterior_floor": format_rational(&self.posterior_floor),
            "floor_holds": self.floor_holds,
            "pair_cap_holds": self.pair_cap_holds,
            "guesses": self.c_used,
            "all_hold": self.all_hold(),
        })
    }
}

pub fn converse_report(
    code: CodeRef<'_>,
    composite: Option<&CompositeCode>,
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    clamp_capability: bool,
    caps: &Caps,
) -> Result<ConverseReport> {
    let view = adversary_view(instance, dist, adversary, t, caps)?;
    require_materialized(&view)?;
    validate_code_shape(code, &view)?;
    let (c_eff, _warnings) = effective_guesses(instance, adversary, t, clamp_capability, caps)?;

    let q_graph = ConfusionGraph::build(instance, adversary.target(), t, caps)?;
    let (alpha, _) = independence_number_capped(&q_graph, caps)?;

    let validity = error_probability(code, instance, dist, caps)?;
    let decoders = synthesize_decoders(code, instance, dist, caps)?;

    // good-set sweep over every (codeword, known tuple) pair
    let mut good_mass = BigRational::zero();
    let mut max_good_set = 0u64;
    let known_space = TupleSpace::new(adversary.known().to_vec(), instance.q(), t)?;
    let target_positions = view.space.positions_of(view.target_space.scope())?;
    let known_positions = view.known_positions.clone();
    for y in 0..code.m() {
        for k in 0..known_space.len()? {
            let good = good_set(
                code,
                &decoders,
                y,
                k,
                adversary.known(),
                instance,
                dist,
                caps,
            )?;
            max_good_set = max_good_set.max(good.len() as u64);
            // accumulate the joint mass of the good tuples at this pair
            let mut digits = vec![0; view.space.width()];
            let known_digits = known_space.digits_of(k);
            for (&p, &d) in known_positions.iter().zip(&known_digits) {
                digits[p] = d;
            }
            for q_idx in good {
                let q_digits = view.target_space.digits_of(q_idx);
                for (&p, &d) in target_positions.iter().zip(&q_digits) {
                    digits[p] = d;
                }
                let x = view.space.index_of(&digits);
                for (cy, fp) in code.support(x) {
                    if cy == y {
                        good_mass += view.ext.prob_index(x) * fp;
                    }
                }
            }
        }
    }
    let mass_conserved = &good_mass + &validity.p_e == BigRational::one();
    let good_sets_bounded = max_good_set <= alpha;

    let posterior = ps_posterior(code, instance, dist, adversary, t, caps)?;
    let one = BigRational::one();
    let floor = BigRational::new(BigInt::from(c_eff), BigInt::from(alpha))
        * (&one - &validity.p_e);
    let floor_holds = posterior >= floor;

    let pair_cap_holds = match composite {
        Some(comp) => {
            let prior = ps_prior(instance, dist, adversary, t, caps)?;
            let m2 = BigRational::from_integer(BigInt::from(comp.m2()));
            Some(&posterior / &prior <= m2)
        }
        None => None,
    };

    Ok(ConverseReport {
        p_e: validity.p_e,
        good_mass,
        mass_conserved,
        max_good_set,
        alpha_target: alpha,
        good_sets_bounded,
        posterior,
        posterior_floor: floor,
        floor_holds,
        pair_cap_holds,
        c_used: c_eff,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation
// ---------------------------------------------------------------------------

/// Seeded Monte Carlo estimate of the posterior success probability, with a
/// normal-approximation 95% interval. Deterministic for a fixed seed and
/// shard layout.
#[derive(Clone, Debug)]
pub struct PsEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
    pub seed: u64,
}

impl PsEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn to_json(&self) -> Value {
        json!({
            "mean": format_bits_value(self.mean),
            "std_error": format_bits_value(self.std_error),
            "ci_low": format_bits_value(self.ci_low),
            "ci_high": format_bits_value(self.ci_high),
            "samples": self.samples,
            "seed": self.seed,
        })
    }
}

const SHARD_SIZE: u64 = 1 << 14;

/// Samples message tuples (and codewords for stochastic encoders), scoring
/// each observation by the exact top-c mass of the conditional target
/// distribution; per-observation values are cached. Shards re-seed
/// deterministically so results do not depend on scheduling.
pub fn estimate_ps(
    code: CodeRef<'_>,
    instance: &Instance,
    dist: &Distribution,
    adversary: &AdversarySpec,
    t: usize,
    samples: u64,
    seed: u64,
    caps: &Caps,
) -> Result<PsEstimate> {
    if samples == 0 {
        return Err(Error::validation("need at least one sample"));
    }
    let view = adversary_view(instance, dist, adversary, t, caps)?;
    validate_code_shape(code, &view)?;
    let target_len = view.target_space.len()?;
    if target_len > caps.materialize_tuples {
        return Err(Error::cap(
            "per-observation scoring needs the target sequence space under the cap",
        ));
    }

    let sampler = Sampler::new(&view.ext);
    let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
    let mut digits: Vec<Symbol> = vec![0; view.space.width()];
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;

    let shards = samples.div_ceil(SHARD_SIZE);
    let mut drawn = 0u64;
    for shard in 0..shards {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ shard.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let shard_samples = SHARD_SIZE.min(samples - drawn);
        for _ in 0..shard_samples {
            sampler.sample_into(&mut rng, &mut digits, &view.space);
            let x = view.space.index_of(&digits);
            let y = sample_codeword(code, x, &mut rng);
            let k = view.space.project_index(&digits, &view.known_positions);
            let value = match cache.get(&(y, k)) {
                Some(v) => *v,
                None => {
                    let v = observation_mass(code, &view, y, k)?;
                    cache.insert((y, k), v);
                    v
                }
            };
            sum += value;
            sum_sq += value * value;
        }
        drawn += shard_samples;
    }

    let n = samples as f64;
    let mean = sum / n;
    let variance = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    let std_error = (variance / n).sqrt();
    let half = 1.96 * std_error;
    Ok(PsEstimate {
        mean,
        std_error,
        ci_low: mean - half,
        ci_high: mean + half,
        samples,
        seed,
    })
}

fn sample_codeword<R: Rng>(code: CodeRef<'_>, x: u64, rng: &mut R) -> u64 {
    match code {
        CodeRef::Det(c) => c.encode(x),
        CodeRef::Stoch(c) => {
            let row = c.row(x);
            if row.len() == 1 {
                return row[0].0;
            }
            let denom = row
                .iter()
                .fold(BigInt::one(), |acc, (_, p)| num::Integer::lcm(&acc, p.denom()));
            if let Some(d) = denom.to_u64() {
                let mut r = rng.gen_range(0..d);
                for (y, p) in row {
                    let w = (p * BigRational::from_integer(denom.clone()))
                        .to_integer()
                        .to_u64()
                        .unwrap_or(0);
                    if r < w {
                        return *y;
                    }
                    r -= w;
                }
            }
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (y, p) in row {
                acc += p.to_f64().unwrap_or(0.0);
                if u < acc {
                    return *y;
                }
            }
            row.last().expect("nonempty row").0
        }
    }
}

/// Exact top-c mass of the conditional target distribution at one
/// observation, rendered to f64 once.
fn observation_mass(code: CodeRef<'_>, view: &AdversaryView, y: u64, k: u64) -> Result<f64> {
    let known_space = TupleSpace::new(
        view.space
            .scope()
            .iter()
            .copied()
            .filter(|m| view.target_space.scope().binary_search(m).is_err())
            .collect(),
        view.space.q(),
        view.space.t(),
    )?;
    let known_digits = known_space.digits_of(k);
    let known_positions = &view.known_positions;
    let target_positions = view.space.positions_of(view.target_space.scope())?;
    let mut digits = vec![0; view.space.width()];
    for (&p, &d) in known_positions.iter().zip(&known_digits) {
        digits[p] = d;
    }
    let mut weights = Vec::with_capacity(view.target_space.len()? as usize);
    let mut total = BigRational::zero();
    let mut it = view.target_space.iter();
    while let Some((_, q_digits)) = it.next() {
        for (&p, &d) in target_positions.iter().zip(q_digits) {
            digits[p] = d;
        }
        let x = view.space.index_of(&digits);
        let mut w = BigRational::zero();
        for (cy, fp) in code.support(x) {
            if cy == y {
                w = view.ext.prob_digits(&digits) * fp;
                break;
            }
        }
        total += &w;
        weights.push(w);
    }
    if total.is_zero() {
        return Ok(0.0);
    }
    let mass = top_c_sum(&mut weights, view.c) / total;
    Ok(mass.to_f64().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{composite_code, is_zero_error_valid};
    use crate::exact::parse_rational;
    use crate::invariants::rate_bracket;
    use crate::model::{load_problem, GuessBudget, Problem};

    fn caps() -> Caps {
        Caps::default()
    }

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn two_message_problem() -> Problem {
        load_problem(
            r#"{
            "n": 2, "q": 2, "side_info": [[2], [1]],
            "distribution": {"joint": {"00": "1/10", "01": "1/5", "10": "3/10", "11": "2/5"}}
        }"#,
        )
        .unwrap()
    }

    fn xor_code(p: &Problem) -> DeterministicCode {
        DeterministicCode::new(p.instance.space(&[0, 1], 1).unwrap(), 2, vec![0, 1, 1, 0])
            .unwrap()
    }

    fn biased_four_message_problem() -> Problem {
        load_problem(
            r#"{
            "n": 4, "q": 2,
            "side_info": [[4], [3], [2], [1]],
            "distribution": {"product": [["1/4","3/4"],["1/2","1/2"],["1/2","1/2"],["1/2","1/2"]]},
            "adversary": {"known": [4], "capability": 1}
        }"#,
        )
        .unwrap()
    }

    fn three_message_cycle_uniform() -> Problem {
        load_problem(r#"{"n": 3, "q": 2, "side_info": [[], [3], [2]]}"#).unwrap()
    }

    #[test]
    fn top_c_examples() {
        let p = two_message_problem();
        assert_eq!(top_c_mass(&p.distribution, 1).unwrap(), rat("2/5"));
        assert_eq!(top_c_mass(&p.distribution, 4).unwrap(), rat("1"));
        assert_eq!(top_c_mass(&p.distribution, 99).unwrap(), rat("1"));
        let u = Distribution::uniform(p.instance.space(&[0, 1], 1).unwrap()).unwrap();
        assert_eq!(top_c_mass(&u, 3).unwrap(), rat("3/4"));
    }

    #[test]
    fn prior_examples() {
        let p = two_message_problem();
        assert_eq!(
            ps_prior(&p.instance, &p.distribution, &p.adversary, 1, &caps()).unwrap(),
            rat("2/5")
        );
        let b = biased_four_message_problem();
        assert_eq!(
            ps_prior(&b.instance, &b.distribution, &b.adversary, 1, &caps()).unwrap(),
            rat("3/16")
        );
        let u = three_message_cycle_uniform();
        assert_eq!(
            ps_prior(&u.instance, &u.distribution, &u.adversary, 1, &caps()).unwrap(),
            rat("1/8")
        );
    }

    #[test]
    fn posterior_examples() {
        let p = two_message_problem();
        let code = xor_code(&p);
        assert_eq!(
            ps_posterior(
                CodeRef::Det(&code),
                &p.instance,
                &p.distribution,
                &p.adversary,
                1,
                &caps()
            )
            .unwrap(),
            rat("7/10")
        );
        let constant =
            DeterministicCode::constant(p.instance.space(&[0, 1], 1).unwrap()).unwrap();
        assert_eq!(
            ps_posterior(
                CodeRef::Det(&constant),
                &p.instance,
                &p.distribution,
                &p.adversary,
                1,
                &caps()
            )
            .unwrap(),
            rat("2/5")
        );
        let identity =
            DeterministicCode::identity(p.instance.space(&[0, 1], 1).unwrap()).unwrap();
        assert_eq!(
            ps_posterior(
                CodeRef::Det(&identity),
                &p.instance,
                &p.distribution,
                &p.adversary,
                1,
                &caps()
            )
            .unwrap(),
            rat("1")
        );
    }

    #[test]
    fn guess_lists_match_posterior_modes() {
        let p = two_message_problem();
        let code = xor_code(&p);
        let lists = posterior_guess_lists(
            CodeRef::Det(&code),
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            &caps(),
        )
        .unwrap();
        assert_eq!(lists.len(), 2);
        // observing parity 0 the best guess is (1,1); parity 1 gives (1,0)
        assert_eq!(lists[0].y, 0);
        assert_eq!(lists[0].guesses, vec![0b11]);
        assert_eq!(lists[1].y, 1);
        assert_eq!(lists[1].guesses, vec![0b10]);
    }

    #[test]
    fn leakage_of_xor_code() {
        let p = two_message_problem();
        let code = xor_code(&p);
        let r = leakage(
            CodeRef::Det(&code),
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            "xor",
            &caps(),
        )
        .unwrap();
        assert_eq!(r.ratio, rat("7/4"));
        assert_eq!(r.leaked_bits, Bits::of_ratio(&rat("7/4")).unwrap());
        assert!((r.leaked_bits.value() - (7f64 / 4.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn constant_code_leaks_nothing() {
        let p = two_message_problem();
        let constant =
            DeterministicCode::constant(p.instance.space(&[0, 1], 1).unwrap()).unwrap();
        let r = leakage(
            CodeRef::Det(&constant),
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            "constant",
            &caps(),
        )
        .unwrap();
        assert_eq!(r.ratio, rat("1"));
        assert_eq!(r.leaked_bits, Bits::zero());
    }

    #[test]
    fn coloring_code_on_uniform_cycle_leaks_codebook_bits() {
        let u = three_message_cycle_uniform();
        let graph = ConfusionGraph::build(&u.instance, &[0, 1, 2], 1, &caps()).unwrap();
        let (chi, coloring) = chromatic_number(&graph, &caps()).unwrap();
        assert_eq!(chi, 4);
        let code = DeterministicCode::from_coloring(
            u.instance.space(&[0, 1, 2], 1).unwrap(),
            &coloring,
        )
        .unwrap();
        let r = leakage(
            CodeRef::Det(&code),
            &u.instance,
            &u.distribution,
            &u.adversary,
            1,
            "coloring",
            &caps(),
        )
        .unwrap();
        assert_eq!(r.ps_prior, rat("1/8"));
        assert_eq!(r.ps_posterior, rat("1/2"));
        assert_eq!(r.leaked_bits, Bits::of_count(4));
    }

    #[test]
    fn optimal_search_on_uniform_cycle() {
        let u = three_message_cycle_uniform();
        let out = optimal_zero_error_leakage(
            &u.instance,
            &u.distribution,
            &u.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap();
        assert_eq!(out.chi, 4);
        assert_eq!(out.report.leaked_bits, Bits::of_count(4)); // 2 bits
        assert!(!out.larger_codebook_helped);
        let graph = ConfusionGraph::build(&u.instance, &[0, 1, 2], 1, &caps()).unwrap();
        assert!(is_zero_error_valid(&out.code, &graph).unwrap());
    }

    #[test]
    fn optimal_search_two_message_uniform_finds_one_bit() {
        let p = load_problem(r#"{"n": 2, "q": 2, "side_info": [[2], [1]]}"#).unwrap();
        let out = optimal_zero_error_leakage(
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap();
        assert_eq!(out.report.leaked_bits, Bits::of_count(2)); // 1 bit
        assert_eq!(out.code.m(), 2);
    }

    #[test]
    fn optimal_search_single_message_reveals_alphabet() {
        let p = load_problem(r#"{"n": 1, "q": 3, "side_info": [[]]}"#).unwrap();
        let out = optimal_zero_error_leakage(
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap();
        assert_eq!(out.report.leaked_bits, Bits::of_count(3)); // log2 3
    }

    #[test]
    fn capability_above_independence_rejected_or_clamped() {
        let mut u = three_message_cycle_uniform();
        u.adversary =
            AdversarySpec::new(vec![], GuessBudget::Constant(5), u.instance.n()).unwrap();
        let err = optimal_zero_error_leakage(
            &u.instance,
            &u.distribution,
            &u.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let out = optimal_zero_error_leakage(
            &u.instance,
            &u.distribution,
            &u.adversary,
            1,
            true,
            &caps(),
        )
        .unwrap();
        assert_eq!(out.report.c_used, 2);
        assert!(!out.report.warnings.is_empty());
    }

    #[test]
    fn bound_report_for_biased_four_messages() {
        let b = biased_four_message_problem();
        let bracket = rate_bracket(&b.instance, b.adversary.target(), 1, None, &caps()).unwrap();
        assert!(bracket.certified);
        let report = leakage_rate_bounds(
            &b.instance,
            &b.distribution,
            &b.adversary,
            &bracket,
            None,
            &caps(),
        )
        .unwrap();
        assert_eq!(report.sum_max, rat("3/16"));
        assert_eq!(report.correction, Bits::of_ratio(&rat("16/3")).unwrap());
        // lower bound pins to log2(8/3) = 3 - log2 3
        assert!(report.lower.is_point());
        let lower = report.lower.lo.clone().unwrap();
        assert_eq!(lower, Bits::of_ratio(&rat("8/3")).unwrap());
        assert!((lower.value() - (3.0 - 3f64.log2())).abs() < 1e-12);
        // zero-error upper bound pins to 2 bits
        assert!(report.upper_zero_error.is_point());
        assert_eq!(report.upper_zero_error.hi.clone().unwrap(), Bits::of_count(4));
        // without an annotation the vanishing-error upper bound is one-sided
        assert!(report.upper_vanishing.lo.is_none());
    }

    #[test]
    fn bound_report_accepts_known_rate() {
        let b = load_problem(
            r#"{
            "n": 4, "q": 2,
            "side_info": [[4], [3], [2], [1]],
            "distribution": {"product": [["1/4","3/4"],["1/2","1/2"],["1/2","1/2"],["1/2","1/2"]]},
            "adversary": {"known": [4], "capability": 1},
            "known_rate_target": {"value": "3 - 0.75*log2(3)", "citation": "prior work"}
        }"#,
        )
        .unwrap();
        let bracket = rate_bracket(
            &b.instance,
            b.adversary.target(),
            1,
            b.known_rate_target.clone(),
            &caps(),
        )
        .unwrap();
        let report = leakage_rate_bounds(
            &b.instance,
            &b.distribution,
            &b.adversary,
            &bracket,
            b.known_rate_target.as_ref(),
            &caps(),
        )
        .unwrap();
        assert!(report.upper_vanishing.is_point());
        let upper = report.upper_vanishing.hi.clone().unwrap();
        assert!((upper.value() - (3.0 - 0.75 * 3f64.log2())).abs() < 1e-12);
        assert!(report.upper_vanishing.provenance.contains("prior work"));
    }

    #[test]
    fn uniform_report_collapses_bounds() {
        let u = three_message_cycle_uniform();
        let bracket = rate_bracket(&u.instance, u.adversary.target(), 1, None, &caps()).unwrap();
        let report = uniform_equivalence_report(
            &u.instance,
            &u.distribution,
            &u.adversary,
            1,
            &bracket,
            &caps(),
        )
        .unwrap();
        assert!(report.correction_matches_target_size);
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].agrees);
        assert_eq!(report.rows[0].optimal_leakage, Bits::of_count(4));
        let csv = report.to_csv();
        assert!(csv.starts_with("t,optimal_leakage,lower_bound,upper_bound\n"));
        assert!(csv.contains("1,2.000000000000,2.000000000000,2.000000000000"));
    }

    #[test]
    fn uniform_report_rejects_biased_distributions() {
        let b = biased_four_message_problem();
        let bracket = rate_bracket(&b.instance, b.adversary.target(), 1, None, &caps()).unwrap();
        assert!(uniform_equivalence_report(
            &b.instance,
            &b.distribution,
            &b.adversary,
            1,
            &bracket,
            &caps()
        )
        .is_err());
    }

    #[test]
    fn product_identity_examples() {
        let p = two_message_problem();
        let r = sum_max_product_identity(&p.distribution, &[0], &[1], 1, &caps()).unwrap();
        assert!(r.holds);
        assert_eq!(r.lhs, rat("3/5"));
        let r2 = sum_max_product_identity(&p.distribution, &[0], &[1], 2, &caps()).unwrap();
        assert!(r2.holds);
        assert_eq!(r2.lhs, rat("9/25"));
        // empty known side degenerates to the max over everything, per power
        let r3 = sum_max_product_identity(&p.distribution, &[], &[0, 1], 3, &caps()).unwrap();
        assert!(r3.holds);
        assert_eq!(r3.lhs, rat("8/125"));
        assert!(sum_max_product_identity(&p.distribution, &[0], &[0], 1, &caps()).is_err());
    }

    #[test]
    fn converse_report_for_coloring_code() {
        let u = three_message_cycle_uniform();
        let graph = ConfusionGraph::build(&u.instance, &[0, 1, 2], 1, &caps()).unwrap();
        let (_, coloring) = chromatic_number(&graph, &caps()).unwrap();
        let code = DeterministicCode::from_coloring(
            u.instance.space(&[0, 1, 2], 1).unwrap(),
            &coloring,
        )
        .unwrap();
        let r = converse_report(
            CodeRef::Det(&code),
            None,
            &u.instance,
            &u.distribution,
            &u.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap();
        assert!(r.all_hold());
        assert_eq!(r.p_e, rat("0"));
        assert_eq!(r.good_mass, rat("1"));
        assert_eq!(r.alpha_target, 2);
        assert_eq!(r.max_good_set, 2);
        assert_eq!(r.posterior, rat("1/2"));
        assert_eq!(r.posterior_floor, rat("1/2"));
    }

    #[test]
    fn converse_report_for_degenerate_code() {
        let p = two_message_problem();
        let constant =
            DeterministicCode::constant(p.instance.space(&[0, 1], 1).unwrap()).unwrap();
        let r = converse_report(
            CodeRef::Det(&constant),
            None,
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap();
        assert!(r.all_hold());
        assert_eq!(r.p_e, rat("3/5"));
        assert_eq!(r.good_mass, rat("2/5"));
    }

    #[test]
    fn composite_code_respects_pair_cap() {
        let b = biased_four_message_problem();
        let code_p =
            DeterministicCode::identity(b.instance.space(&[3], 1).unwrap()).unwrap();
        let q_graph = ConfusionGraph::build(&b.instance, &[0, 1, 2], 1, &caps()).unwrap();
        let (_, coloring) = chromatic_number(&q_graph, &caps()).unwrap();
        let code_q = DeterministicCode::from_coloring(
            b.instance.space(&[0, 1, 2], 1).unwrap(),
            &coloring,
        )
        .unwrap();
        let comp = composite_code(&code_p, &code_q).unwrap();
        let r = converse_report(
            CodeRef::Det(comp.code()),
            Some(&comp),
            &b.instance,
            &b.distribution,
            &b.adversary,
            1,
            false,
            &caps(),
        )
        .unwrap();
        assert!(r.all_hold());
        assert_eq!(r.pair_cap_holds, Some(true));
        // this composite meets the converse floor with equality: L = log2(8/3)
        let l = leakage(
            CodeRef::Det(comp.code()),
            &b.instance,
            &b.distribution,
            &b.adversary,
            1,
            "composite",
            &caps(),
        )
        .unwrap();
        assert_eq!(l.ratio, rat("8/3"));
    }

    #[test]
    fn estimator_is_deterministic_and_consistent() {
        let p = two_message_problem();
        let code = xor_code(&p);
        let e1 = estimate_ps(
            CodeRef::Det(&code),
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            100_000,
            7,
            &caps(),
        )
        .unwrap();
        let e2 = estimate_ps(
            CodeRef::Det(&code),
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            100_000,
            7,
            &caps(),
        )
        .unwrap();
        assert_eq!(e1.mean, e2.mean);
        assert_eq!(e1.ci_low, e2.ci_low);
        assert!(e1.contains(0.7), "estimate {} missed 0.7", e1.mean);
        // constant code estimates the prior
        let constant =
            DeterministicCode::constant(p.instance.space(&[0, 1], 1).unwrap()).unwrap();
        let e3 = estimate_ps(
            CodeRef::Det(&constant),
            &p.instance,
            &p.distribution,
            &p.adversary,
            1,
            50_000,
            3,
            &caps(),
        )
        .unwrap();
        assert!((e3.mean - 0.4).abs() < 0.01);
    }

    #[test]
    fn splitting_a_class_never_decreases_posterior() {
        // single-guess data processing: refining the code partition can only
        // sharpen the adversary's view; brute-forced on all 2-class codes of
        // the two-message problem
        let p = two_message_problem();
        let space = p.instance.space(&[0, 1], 1).unwrap();
        for bits in 0..16u64 {
            let map: Vec<u64> = (0..4).map(|x| bits >> x & 1).collect();
            let coarse = DeterministicCode::new(space.clone(), 2, map.clone()).unwrap();
            let base = ps_posterior(
                CodeRef::Det(&coarse),
                &p.instance,
                &p.distribution,
                &p.adversary,
                1,
                &caps(),
            )
            .unwrap();
            // split class 1 by promoting each of its members to a new class
            for promote in 0..4usize {
                if map[promote] != 1 {
                    continue;
                }
                let mut refined = map.clone();
                refined[promote] = 2;
                let fine = DeterministicCode::new(space.clone(), 3, refined).unwrap();
                let refined_ps = ps_posterior(
                    CodeRef::Det(&fine),
                    &p.instance,
                    &p.distribution,
                    &p.adversary,
                    1,
                    &caps(),
                )
                .unwrap();
                assert!(refined_ps >= base);
            }
        }
    }
}
