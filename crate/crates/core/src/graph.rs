//! Confusion graphs of induced subproblems.
//!
//! Two message-sequence tuples are confusable when some receiver in the
//! subproblem wants a message they differ on while all of that receiver's
//! in-scope side information agrees; such tuples can never share a codeword
//! in a zero-error code.

use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::model::{Caps, Instance, Symbol, TupleSpace};

/// True iff some receiver `i` in the scope has `x_i^t != z_i^t` while
/// `x_{A_i ∩ S}^t = z_{A_i ∩ S}^t`. Equal tuples are never confusable.
pub fn confusable(
    instance: &Instance,
    scope: &[usize],
    t: usize,
    x: &[Symbol],
    z: &[Symbol],
) -> Result<bool> {
    let space = instance.space(scope, t)?;
    if x.len() != space.width() || z.len() != space.width() {
        return Err(Error::validation(format!(
            "tuple shape mismatch: expected {} digits",
            space.width()
        )));
    }
    for &i in space.scope() {
        let own = space.positions_of(&[i])?;
        if own.iter().all(|&p| x[p] == z[p]) {
            continue;
        }
        let side = instance.side_info_within(i, space.scope());
        let side_pos = space.positions_of(&side)?;
        if side_pos.iter().all(|&p| x[p] == z[p]) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The confusion graph of the subproblem induced by a scope at sequence
/// length `t`: vertices are tuple indices, adjacency rows are bitsets.
#[derive(Clone, Debug)]
pub struct ConfusionGraph {
    space: TupleSpace,
    adj: Vec<BitSet>,
    edge_count: u64,
}

impl ConfusionGraph {
    /// Builds the graph from the confusability predicate, grouped per
    /// receiver: within each class of agreeing side information, vertices
    /// with different wanted-message sequences are pairwise adjacent.
    pub fn build(instance: &Instance, scope: &[usize], t: usize, caps: &Caps) -> Result<Self> {
        let space = instance.space(scope, t)?;
        let v = space.len()?;
        if v > caps.vertex_cap {
            return Err(Error::cap(format!(
                "confusion graph on {v} vertices exceeds the vertex cap {}",
                caps.vertex_cap
            )));
        }
        let v = v as usize;
        let mut adj = vec![BitSet::new(v); v];

        let own_len = (instance.q() as u64).pow(t as u32);
        for &i in space.scope() {
            let side = instance.side_info_within(i, space.scope());
            let side_pos = space.positions_of(&side)?;
            let own_pos = space.positions_of(&[i])?;
            let group_count = (instance.q() as u64).pow((side.len() * t) as u32) as usize;

            // vertices sharing the receiver's side-information digits
            let mut groups: Vec<Vec<u64>> = vec![Vec::new(); group_count];
            let mut it = space.iter();
            while let Some((idx, digits)) = it.next() {
                groups[space.project_index(digits, &side_pos) as usize].push(idx);
            }

            let mut digits = vec![0; space.width()];
            for members in &groups {
                if members.len() < 2 {
                    continue;
                }
                // sub-bucket by the receiver's own message sequence
                let mut buckets: Vec<BitSet> = vec![BitSet::new(v); own_len as usize];
                let mut group_mask = BitSet::new(v);
                for &u in members {
                    space.digits_into(u, &mut digits);
                    let own = space.project_index(&digits, &own_pos);
                    buckets[own as usize].insert(u as usize);
                    group_mask.insert(u as usize);
                }
                for &u in members {
                    space.digits_into(u, &mut digits);
                    let own = space.project_index(&digits, &own_pos);
                    let mut row = group_mask.clone();
                    row.difference_with(&buckets[own as usize]);
                    adj[u as usize].union_with(&row);
                }
            }
        }

        let mut edge_count = 0u64;
        for row in &adj {
            edge_count += row.count() as u64;
        }
        Ok(ConfusionGraph {
            space,
            adj,
            edge_count: edge_count / 2,
        })
    }

    /// Test-fixture constructor for graphs that do not arise from an
    /// index-coding predicate (paths, cycles, edgeless graphs).
    pub fn from_edges(space: TupleSpace, edges: &[(u64, u64)]) -> Result<Self> {
        let v = space.len()? as usize;
        let mut adj = vec![BitSet::new(v); v];
        for &(a, b) in edges {
            if a == b {
                return Err(Error::validation("self-loops are not allowed"));
            }
            if a as usize >= v || b as usize >= v {
                return Err(Error::validation("edge endpoint out of range"));
            }
            adj[a as usize].insert(b as usize);
            adj[b as usize].insert(a as usize);
        }
        let mut edge_count = 0u64;
        for row in &adj {
            edge_count += row.count() as u64;
        }
        Ok(ConfusionGraph {
            space,
            adj,
            edge_count: edge_count / 2,
        })
    }

    pub fn space(&self) -> &TupleSpace {
        &self.space
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn row(&self, u: usize) -> &BitSet {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].count()
    }

    pub fn is_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v)
    }

    /// True iff the given vertex set is independent (no edge inside).
    pub fn is_independent(&self, members: &BitSet) -> bool {
        members.iter().all(|u| self.adj[u].is_disjoint(members))
    }

    /// Complement adjacency rows (without self-loops), used by the solvers.
    pub fn complement_rows(&self) -> Vec<BitSet> {
        let v = self.vertex_count();
        (0..v)
            .map(|u| {
                let mut row = BitSet::full(v);
                row.difference_with(&self.adj[u]);
                row.remove(u);
                row
            })
            .collect()
    }

    /// Structural vertex-transitivity check: every single-digit value
    /// translation (adding 1 modulo q at one digit position) must map edges
    /// to edges. These translations generate a transitive group, so closure
    /// under them certifies vertex transitivity; graphs built from the
    /// confusability predicate always pass.
    pub fn check_vertex_transitive(&self, caps: &Caps) -> Result<bool> {
        let v = self.vertex_count();
        if v as u64 > caps.transitivity_cap {
            return Err(Error::cap(format!(
                "transitivity check on {v} vertices exceeds the cap {}",
                caps.transitivity_cap
            )));
        }
        if v == 0 {
            return Ok(true);
        }
        let deg0 = self.degree(0);
        if (1..v).any(|u| self.degree(u) != deg0) {
            return Ok(false);
        }
        let width = self.space.width();
        let q = self.space.q() as u64;
        let mut perm = vec![0u64; v];
        for pos in 0..width {
            // stride of this digit in the index encoding
            let stride = q.pow((width - 1 - pos) as u32);
            for (u, slot) in perm.iter_mut().enumerate() {
                let u = u as u64;
                let digit = (u / stride) % q;
                *slot = if digit + 1 == q {
                    u - digit * stride
                } else {
                    u + stride
                };
            }
            for u in 0..v {
                let pu = perm[u] as usize;
                for w in self.adj[u].iter() {
                    if !self.adj[pu].contains(perm[w] as usize) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// DOT rendering with tuple-string vertex labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph confusion {\n");
        for u in 0..self.vertex_count() {
            out.push_str(&format!("  \"{}\";\n", self.space.label_of(u as u64)));
        }
        for u in 0..self.vertex_count() {
            for v in self.adj[u].iter() {
                if v > u {
                    out.push_str(&format!(
                        "  \"{}\" -- \"{}\";\n",
                        self.space.label_of(u as u64),
                        self.space.label_of(v as u64)
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }

    /// Adjacency matrix as CSV, first row and column carrying tuple labels.
    pub fn to_adjacency_csv(&self) -> String {
        let v = self.vertex_count();
        let labels: Vec<String> = (0..v).map(|u| self.space.label_of(u as u64)).collect();
        let mut out = String::from("label");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for u in 0..v {
            out.push_str(&labels[u]);
            for w in 0..v {
                out.push(',');
                out.push(if self.adj[u].contains(w) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}
