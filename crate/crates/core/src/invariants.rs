//! Exact graph invariants (independence, clique, chromatic, fractional
//! chromatic numbers) and broadcast-rate brackets for induced subproblems.
//!
//! All solvers are exact and deterministic: fixed vertex orders, explicit
//! node budgets, witnesses returned alongside every number.

use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::exact::{format_bits_value, format_rational, Bits};
use crate::graph::ConfusionGraph;
use crate::lp::fractional_cover;
use crate::model::{Caps, Instance, KnownRate};
use num::{BigInt, BigRational};

struct Budget {
    remaining: u64,
    what: &'static str,
}

impl Budget {
    fn new(limit: u64, what: &'static str) -> Self {
        Budget {
            remaining: limit,
            what,
        }
    }
    fn tick(&mut self) -> Result<()> {
        if self.remaining == 0 {
            return Err(Error::budget(format!(
                "{} exceeded its node budget; raise --node-budget for an exact answer",
                self.what
            )));
        }
        self.remaining -= 1;
        Ok(())
    }
}

/// Deterministic vertex order: descending degree, ties by index.
fn degree_order(rows: &[BitSet]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&v| (usize::MAX - rows[v].count(), v));
    order
}

/// Greedy clique-partition bound used inside the branch and bound: colors the
/// candidate subgraph and returns candidates listed by ascending color, so a
/// vertex's color (1-based) bounds the largest clique through it.
fn color_sort(rows: &[BitSet], order: &[usize], p: &BitSet) -> Vec<(usize, usize)> {
    let mut classes: Vec<(BitSet, Vec<usize>)> = Vec::new();
    for &v in order {
        if !p.contains(v) {
            continue;
        }
        match classes
            .iter_mut()
            .find(|(mask, _)| mask.is_disjoint(&rows[v]))
        {
            Some((mask, members)) => {
                mask.insert(v);
                members.push(v);
            }
            None => {
                let mut mask = BitSet::new(rows.len());
                mask.insert(v);
                classes.push((mask, vec![v]));
            }
        }
    }
    let mut out = Vec::with_capacity(p.count());
    for (color, (_, members)) in classes.iter().enumerate() {
        for &v in members {
            out.push((v, color + 1));
        }
    }
    out
}

fn expand_clique(
    rows: &[BitSet],
    order: &[usize],
    current: &mut Vec<usize>,
    p: &BitSet,
    best: &mut Vec<usize>,
    target: Option<usize>,
    budget: &mut Budget,
) -> Result<bool> {
    budget.tick()?;
    if let Some(goal) = target {
        if best.len() >= goal {
            return Ok(true);
        }
    }
    let candidates = color_sort(rows, order, p);
    for &(v, color) in candidates.iter().rev() {
        if current.len() + color <= best.len() {
            break; // colors ascend towards the front; nothing better remains
        }
        current.push(v);
        let mut next = p.clone();
        next.intersect_with(&rows[v]);
        if current.len() > best.len() {
            *best = current.clone();
        }
        let done = expand_clique(rows, order, current, &next, best, target, budget)?;
        current.pop();
        if done {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Exact maximum clique of the graph given by adjacency `rows`.
fn max_clique(rows: &[BitSet], caps: &Caps, what: &'static str) -> Result<Vec<usize>> {
    if rows.is_empty() {
        return Ok(vec![]);
    }
    let order = degree_order(rows);
    let mut budget = Budget::new(caps.node_budget, what);
    let mut best = Vec::new();
    let mut current = Vec::new();
    let p = BitSet::full(rows.len());
    expand_clique(rows, &order, &mut current, &p, &mut best, None, &mut budget)?;
    Ok(best)
}

/// Is there a clique of size `k` inside candidate set `p`?
fn has_clique(rows: &[BitSet], p: &BitSet, k: usize, caps: &Caps) -> Result<bool> {
    if k == 0 {
        return Ok(true);
    }
    let order = degree_order(rows);
    let mut budget = Budget::new(caps.node_budget, "clique decision search");
    let mut best = Vec::new();
    let mut current = Vec::new();
    expand_clique(rows, &order, &mut current, p, &mut best, Some(k), &mut budget)?;
    Ok(best.len() >= k)
}

/// Lexicographically-smallest witness of a maximum clique, built by greedy
/// inclusion with exact decision re-solves.
fn canonical_clique_witness(rows: &[BitSet], size: usize, caps: &Caps) -> Result<Vec<usize>> {
    let mut witness = Vec::with_capacity(size);
    let mut p = BitSet::full(rows.len());
    while witness.len() < size {
        let mut chosen = None;
        for v in p.iter() {
            let mut rest = p.clone();
            rest.intersect_with(&rows[v]);
            if has_clique(rows, &rest, size - witness.len() - 1, caps)? {
                chosen = Some(v);
                break;
            }
        }
        let v = chosen.expect("a maximum clique exists by construction");
        witness.push(v);
        p.intersect_with(&rows[v]);
    }
    Ok(witness)
}

/// Exact independence number with the lexicographically-smallest maximum
/// independent set as witness.
pub fn independence_number(graph: &ConfusionGraph) -> Result<(u64, Vec<u64>)> {
    independence_number_capped(graph, &Caps::default())
}

pub fn independence_number_capped(
    graph: &ConfusionGraph,
    caps: &Caps,
) -> Result<(u64, Vec<u64>)> {
    let comp = graph.complement_rows();
    let best = max_clique(&comp, caps, "independent-set search")?;
    let witness = canonical_clique_witness(&comp, best.len(), caps)?;
    Ok((best.len() as u64, witness.iter().map(|&v| v as u64).collect()))
}

/// Exact clique number.
pub fn clique_number(graph: &ConfusionGraph, caps: &Caps) -> Result<u64> {
    let rows: Vec<BitSet> = (0..graph.vertex_count())
        .map(|u| graph.row(u).clone())
        .collect();
    Ok(max_clique(&rows, caps, "clique search")? .len() as u64)
}

/// Greedy proper coloring along the deterministic vertex order; upper bound
/// and fallback witness for the exact search.
fn greedy_coloring(graph: &ConfusionGraph) -> Vec<u32> {
    let v = graph.vertex_count();
    let rows: Vec<&BitSet> = (0..v).map(|u| graph.row(u)).collect();
    let row_refs: Vec<BitSet> = rows.iter().map(|r| (*r).clone()).collect();
    let order = degree_order(&row_refs);
    let mut colors = vec![u32::MAX; v];
    for &u in &order {
        let mut used: Vec<bool> = vec![false; v + 1];
        for w in graph.row(u).iter() {
            if colors[w] != u32::MAX {
                used[colors[w] as usize] = true;
            }
        }
        colors[u] = used.iter().position(|&b| !b).unwrap() as u32;
    }
    colors
}

fn coloring_is_proper(graph: &ConfusionGraph, colors: &[u32]) -> bool {
    (0..graph.vertex_count())
        .all(|u| graph.row(u).iter().all(|w| colors[u] != colors[w]))
}

/// Exact k-colorability via saturation-guided backtracking. Returns a proper
/// coloring with colors in `0..k` when one exists.
fn k_colorable(graph: &ConfusionGraph, k: usize, budget: &mut Budget) -> Result<Option<Vec<u32>>> {
    let v = graph.vertex_count();
    let mut classes: Vec<BitSet> = vec![BitSet::new(v); k];
    let mut colors: Vec<Option<u32>> = vec![None; v];

    fn recurse(
        graph: &ConfusionGraph,
        k: usize,
        classes: &mut Vec<BitSet>,
        colors: &mut Vec<Option<u32>>,
        assigned: usize,
        used: usize,
        budget: &mut Budget,
    ) -> Result<bool> {
        budget.tick()?;
        let v = graph.vertex_count();
        if assigned == v {
            return Ok(true);
        }
        // most saturated uncolored vertex; ties by degree then index
        let mut pick = None;
        let mut pick_key = (0usize, 0usize);
        for u in 0..v {
            if colors[u].is_some() {
                continue;
            }
            let sat = classes
                .iter()
                .take(used)
                .filter(|c| !c.is_disjoint(graph.row(u)))
                .count();
            let key = (sat, graph.degree(u));
            if pick.is_none() || key > pick_key {
                pick = Some(u);
                pick_key = key;
            }
        }
        let u = pick.expect("an uncolored vertex remains");
        // symmetry break: at most one brand-new color
        let limit = (used + 1).min(k);
        for c in 0..limit {
            if classes[c].is_disjoint(graph.row(u)) {
                classes[c].insert(u);
                colors[u] = Some(c as u32);
                let now_used = used.max(c + 1);
                if recurse(graph, k, classes, colors, assigned + 1, now_used, budget)? {
                    return Ok(true);
                }
                classes[c].remove(u);
                colors[u] = None;
            }
        }
        Ok(false)
    }

    if recurse(graph, k, &mut classes, &mut colors, 0, 0, budget)? {
        Ok(Some(colors.iter().map(|c| c.unwrap()).collect()))
    } else {
        Ok(None)
    }
}

/// Exact chromatic number with a witness proper coloring: clique lower bound,
/// greedy upper bound, then increasing-k exact searches between them.
pub fn chromatic_number(graph: &ConfusionGraph, caps: &Caps) -> Result<(u64, Vec<u32>)> {
    let v = graph.vertex_count();
    if v == 0 {
        return Ok((0, vec![]));
    }
    if graph.edge_count() == 0 {
        return Ok((1, vec![0; v]));
    }
    let lower = clique_number(graph, caps)? as usize;
    let greedy = greedy_coloring(graph);
    let upper = (*greedy.iter().max().unwrap() + 1) as usize;
    debug_assert!(coloring_is_proper(graph, &greedy));
    for k in lower..upper {
        let mut budget = Budget::new(caps.node_budget, "chromatic search");
        if let Some(witness) = k_colorable(graph, k, &mut budget)? {
            debug_assert!(coloring_is_proper(graph, &witness));
            return Ok((k as u64, witness));
        }
    }
    Ok((upper as u64, greedy))
}

/// All maximal independent sets, via pivoted Bron-Kerbosch on the complement.
pub fn maximal_independent_sets(graph: &ConfusionGraph) -> Vec<BitSet> {
    let comp = graph.complement_rows();
    let v = comp.len();
    let mut out = Vec::new();
    let mut r = BitSet::new(v);
    bron_kerbosch(&comp, &mut r, BitSet::full(v), BitSet::new(v), &mut out);
    out
}

fn bron_kerbosch(rows: &[BitSet], r: &mut BitSet, p: BitSet, x: BitSet, out: &mut Vec<BitSet>) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    // pivot: vertex of P ∪ X with the most neighbors in P, ties by index
    let mut pivot = None;
    let mut pivot_score = usize::MAX;
    for u in p.iter().chain(x.iter()) {
        let score = usize::MAX - p.intersection_count(&rows[u]);
        if score < pivot_score {
            pivot_score = score;
            pivot = Some(u);
        }
    }
    let mut candidates = p.clone();
    if let Some(u) = pivot {
        candidates.difference_with(&rows[u]);
    }
    let mut p = p;
    let mut x = x;
    for v in candidates.iter().collect::<Vec<_>>() {
        r.insert(v);
        let mut p2 = p.clone();
        p2.intersect_with(&rows[v]);
        let mut x2 = x.clone();
        x2.intersect_with(&rows[v]);
        bron_kerbosch(rows, r, p2, x2, out);
        r.remove(v);
        p.remove(v);
        x.insert(v);
    }
}

/// Exact fractional chromatic number.
///
/// Vertex-transitive graphs (every graph built from the confusability
/// predicate) use `|V| / α`; other graphs fall back to the exact rational LP
/// over all maximal independent sets, capped by `lp_vertex_cap`.
pub fn fractional_chromatic_number(graph: &ConfusionGraph, caps: &Caps) -> Result<BigRational> {
    if graph.check_vertex_transitive(caps)? {
        let (alpha, _) = independence_number_capped(graph, caps)?;
        return Ok(BigRational::new(
            BigInt::from(graph.vertex_count()),
            BigInt::from(alpha),
        ));
    }
    fractional_chromatic_lp(graph, caps)
}

/// The LP route on its own, usable as an independent cross-check.
pub fn fractional_chromatic_lp(graph: &ConfusionGraph, caps: &Caps) -> Result<BigRational> {
    if graph.vertex_count() as u64 > caps.lp_vertex_cap {
        return Err(Error::cap(format!(
            "graph is not vertex-transitive and has {} vertices, above the LP cap {}",
            graph.vertex_count(),
            caps.lp_vertex_cap
        )));
    }
    let sets = maximal_independent_sets(graph);
    let (obj, _) = fractional_cover(&sets, graph.vertex_count())?;
    Ok(obj)
}

// ---------------------------------------------------------------------------
// Acyclic-subproblem lower bound
// ---------------------------------------------------------------------------

/// Lower bound on the zero-error broadcast rate of a subproblem: the largest
/// subset inducing an acyclic side-information digraph forces a clique of
/// `q^(t*size)` mutually confusable tuples in every confusion graph, hence at
/// least `size * log2(q)` bits.
#[derive(Clone, Debug)]
pub struct AcyclicBound {
    pub size: usize,
    /// Messaages of one maximum acyclic induced subset (sorted).
    pub witness: Vec<usize>,
    pub bits: Bits,
}

pub fn mais_lower_bound(instance: &Instance, scope: &[usize], caps: &Caps) -> Result<AcyclicBound> {
    let space = instance.space(scope, 1)?;
    let scope = space.scope().to_vec();
    let k = scope.len();
    if k > caps.mais_exhaustive {
        return Err(Error::cap(format!(
            "acyclic-subgraph bound on {k} messages exceeds the exhaustive cap {}",
            caps.mais_exhaustive
        )));
    }
    if k == 0 {
        return Ok(AcyclicBound {
            size: 0,
            witness: vec![],
            bits: Bits::zero(),
        });
    }
    // in_arcs[v] = positions u (within scope) with scope[v] ∈ A_{scope[u]}
    let mut in_arcs = vec![0u32; k];
    for (u_pos, &u) in scope.iter().enumerate() {
        for j in instance.side_info_within(u, &scope) {
            let v_pos = scope.binary_search(&j).unwrap();
            in_arcs[v_pos] |= 1 << u_pos;
        }
    }
    let full = 1u32 << k;
    let mut acyclic = vec![false; full as usize];
    acyclic[0] = true;
    let mut best_mask = 0u32;
    for mask in 1..full {
        let mut m = mask;
        let mut ok = false;
        while m != 0 {
            let v = m.trailing_zeros();
            m &= m - 1;
            let rest = mask & !(1 << v);
            if in_arcs[v as usize] & rest == 0 && acyclic[rest as usize] {
                ok = true;
                break;
            }
        }
        acyclic[mask as usize] = ok;
        if ok && mask.count_ones() > best_mask.count_ones() {
            best_mask = mask;
        }
    }
    let size = best_mask.count_ones() as usize;
    let witness: Vec<usize> = (0..k)
        .filter(|&v| best_mask >> v & 1 == 1)
        .map(|v| scope[v])
        .collect();
    let arg = BigRational::from_integer(BigInt::from(instance.q()).pow(size as u32));
    Ok(AcyclicBound {
        size,
        witness,
        bits: Bits::new(arg, 1)?,
    })
}

// ---------------------------------------------------------------------------
// Rate brackets
// ---------------------------------------------------------------------------

/// Per-t exact invariants of a subproblem's confusion graph together with the
/// rate surrogates `log2(χ)/t` and `log2(χ_f)/t`.
#[derive(Clone, Debug)]
pub struct RateSurrogate {
    pub t: usize,
    pub vertices: u64,
    pub alpha: u64,
    pub chi: u64,
    pub chi_f: BigRational,
    pub chi_rate: Bits,
    pub chi_f_rate: Bits,
}

/// Certified bracket on the zero-error broadcast rate of a subproblem.
///
/// The upper end is the best coloring rate over the computed lengths (a
/// proper coloring of the confusion graph is a zero-error code); the lower
/// end is the acyclic-subproblem bound. The rate itself is a limit and is
/// only reported as exact when the two ends coincide.
#[derive(Clone, Debug)]
pub struct RateBracket {
    pub scope: Vec<usize>,
    pub per_t: Vec<RateSurrogate>,
    pub lower: Bits,
    pub upper: Bits,
    pub acyclic_size: usize,
    pub certified: bool,
    pub known: Option<KnownRate>,
}

pub fn rate_bracket(
    instance: &Instance,
    scope: &[usize],
    t_max: usize,
    known: Option<KnownRate>,
    caps: &Caps,
) -> Result<RateBracket> {
    if t_max == 0 {
        return Err(Error::validation("t_max must be at least 1"));
    }
    let mais = mais_lower_bound(instance, scope, caps)?;
    let mut per_t = Vec::with_capacity(t_max);
    let mut upper: Option<Bits> = None;
    for t in 1..=t_max {
        let graph = ConfusionGraph::build(instance, scope, t, caps)?;
        let (alpha, _) = independence_number_capped(&graph, caps)?;
        let (chi, _) = chromatic_number(&graph, caps)?;
        let chi_f = fractional_chromatic_number(&graph, caps)?;
        let chi_rate = Bits::per_symbol(
            &BigRational::from_integer(BigInt::from(chi)),
            t as u32,
        )?;
        let chi_f_rate = Bits::per_symbol(&chi_f, t as u32)?;
        match &upper {
            Some(u) if *u <= chi_rate => {}
            _ => upper = Some(chi_rate.clone()),
        }
        per_t.push(RateSurrogate {
            t,
            vertices: graph.vertex_count() as u64,
            alpha,
            chi,
            chi_f,
            chi_rate,
            chi_f_rate,
        });
    }
    let upper = upper.expect("t_max >= 1");
    let lower = mais.bits.clone();
    if lower > upper {
        return Err(Error::violation(format!(
            "rate bracket inverted: lower {} > upper {}",
            lower.exact_repr(),
            upper.exact_repr()
        )));
    }
    let certified = lower == upper;
    Ok(RateBracket {
        scope: instance.space(scope, 1)?.scope().to_vec(),
        per_t,
        lower,
        upper,
        acyclic_size: mais.size,
        certified,
        known,
    })
}

impl RateBracket {
    /// `t,|V|,alpha,chi,chi_f,log_chi_over_t,log_chi_f_over_t` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,vertices,alpha,chi,chi_f,log_chi_over_t,log_chi_f_over_t\n");
        for row in &self.per_t {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.t,
                row.vertices,
                row.alpha,
                row.chi,
                format_rational(&row.chi_f),
                format_bits_value(row.chi_rate.value()),
                format_bits_value(row.chi_f_rate.value()),
            ));
        }
        out
    }
}
