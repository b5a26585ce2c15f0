//! DAG over variate fields, its moral graph, and conditional-independence queries.
//!
//! Field labels are 1-based throughout.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::{Error, Result};

/// Unordered field pair, stored with the smaller label first.
pub type FieldPair = (usize, usize);

pub(crate) fn unordered(a: usize, b: usize) -> FieldPair {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Directed acyclic graph among `p` variate fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDag {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    names: BTreeMap<usize, String>,
}

impl FieldDag {
    /// Validates labels, rejects self edges and cycles.
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        let mut parents = vec![Vec::new(); p];
        for (parent, child) in edges {
            for v in [parent, child] {
                if v == 0 || v > p {
                    return Err(Error::UnknownField(v));
                }
            }
            if parent == child {
                return Err(Error::SelfEdge(parent));
            }
            if set.insert((parent, child)) {
                parents[child - 1].push(parent);
            }
        }
        for ps in &mut parents {
            ps.sort_unstable();
        }
        let dag = Self {
            p,
            edges: set,
            parents,
            names: BTreeMap::new(),
        };
        if dag.kahn().len() != p {
            return Err(Error::CycleDetected);
        }
        Ok(dag)
    }

    /// Directed chain `1 -> 2 -> ... -> p`.
    pub fn chain(p: usize) -> Self {
        Self::new(p, (1..p).map(|k| (k, k + 1))).expect("chain is acyclic")
    }

    /// Every earlier field is a parent of every later one.
    pub fn fully_connected(p: usize) -> Self {
        let edges = (1..=p).flat_map(|c| (1..c).map(move |a| (a, c)));
        Self::new(p, edges).expect("complete order is acyclic")
    }

    pub fn edgeless(p: usize) -> Self {
        Self::new(p, []).expect("no edges")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.contains(&(parent, child))
    }

    pub fn name(&self, label: usize) -> Option<&str> {
        self.names.get(&label).map(String::as_str)
    }

    pub fn set_name(&mut self, label: usize, alias: impl Into<String>) -> Result<()> {
        if label == 0 || label > self.p {
            return Err(Error::UnknownField(label));
        }
        self.names.insert(label, alias.into());
        Ok(())
    }

    /// Sorted DAG parents of field `v`.
    pub fn parents(&self, v: usize) -> Result<&[usize]> {
        if v == 0 || v > self.p {
            return Err(Error::UnknownField(v));
        }
        Ok(&self.parents[v - 1])
    }

    pub(crate) fn parents_unchecked(&self, v: usize) -> &[usize] {
        &self.parents[v - 1]
    }

    /// Kahn's algorithm; ready fields are released smallest label first.
    fn kahn(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); self.p];
        for &(a, b) in &self.edges {
            children[a - 1].push(b);
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (1..=self.p)
            .filter(|&v| indegree[v - 1] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &children[v - 1] {
                indegree[c - 1] -= 1;
                if indegree[c - 1] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        order
    }

    /// Deterministic topological order, ties broken by ascending label.
    pub fn topological_order(&self) -> Vec<usize> {
        self.kahn()
    }

    pub fn moralize(&self) -> MoralGraph {
        let p = self.p;
        let mut adj = vec![vec![false; p]; p];
        for &(a, b) in &self.edges {
            adj[a - 1][b - 1] = true;
            adj[b - 1][a - 1] = true;
        }
        let mut marriages = BTreeSet::new();
        for ps in &self.parents {
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    if !adj[a - 1][b - 1] {
                        marriages.insert(unordered(a, b));
                    }
                }
            }
        }
        for &(a, b) in &marriages {
            adj[a - 1][b - 1] = true;
            adj[b - 1][a - 1] = true;
        }
        MoralGraph { p, adj, marriages }
    }

    /// True when every pair of co-parents is already adjacent.
    pub fn is_moral(&self) -> bool {
        self.moralize().marriages.is_empty()
    }
}

/// Undirected moral graph: DAG skeleton plus married co-parents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoralGraph {
    p: usize,
    adj: Vec<Vec<bool>>,
    marriages: BTreeSet<FieldPair>,
}

impl MoralGraph {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a - 1][b - 1]
    }

    pub fn marriages(&self) -> &BTreeSet<FieldPair> {
        &self.marriages
    }

    /// Non-adjacent field pairs: conditionally independent given the rest.
    pub fn ci_pairs(&self) -> BTreeSet<FieldPair> {
        let mut out = BTreeSet::new();
        for a in 1..=self.p {
            for b in (a + 1)..=self.p {
                if !self.adj[a - 1][b - 1] {
                    out.insert((a, b));
                }
            }
        }
        out
    }
}

/// Parses the edge-list graph format.
///
/// One directive per line, `#` starts a comment:
/// - `a>b` directed edge from field `a` to field `b` (labels or aliases);
/// - `name <label> <alias>` declares an alias;
/// - a bare label declares an isolated field.
///
/// The field count is the largest label mentioned.
pub fn parse_dag(text: &str) -> Result<FieldDag> {
    let mut edges = Vec::new();
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut aliases: BTreeMap<String, usize> = BTreeMap::new();
    let mut p = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = || Error::MalformedLine {
            line: line_no,
            text: raw.trim().to_string(),
        };
        let resolve = |tok: &str, aliases: &BTreeMap<String, usize>| -> Result<usize> {
            let tok = tok.trim();
            if let Ok(v) = tok.parse::<usize>() {
                if v == 0 {
                    return Err(malformed());
                }
                return Ok(v);
            }
            aliases.get(tok).copied().ok_or_else(malformed)
        };

        if let Some(rest) = line.strip_prefix("name ") {
            let mut parts = rest.split_whitespace();
            let (Some(label), Some(alias), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed());
            };
            let label: usize = label.parse().map_err(|_| malformed())?;
            if label == 0 || alias.parse::<usize>().is_ok() {
                return Err(malformed());
            }
            p = p.max(label);
            names.insert(label, alias.to_string());
            aliases.insert(alias.to_string(), label);
        } else if let Some((a, b)) = line.split_once('>') {
            let a = resolve(a, &aliases)?;
            let b = resolve(b, &aliases)?;
            p = p.max(a).max(b);
            edges.push((a, b));
        } else {
            let v = resolve(line, &aliases)?;
            p = p.max(v);
        }
    }

    let mut dag = FieldDag::new(p, edges)?;
    for (label, alias) in names {
        dag.set_name(label, alias)?;
    }
    Ok(dag)
}

/// Renders a DAG back into the edge-list format.
pub fn format_dag(dag: &FieldDag) -> String {
    let mut out = String::new();
    for (label, alias) in &dag.names {
        out.push_str(&format!("name {label} {alias}\n"));
    }
    let mut mentioned = BTreeSet::new();
    for (a, b) in dag.edges() {
        out.push_str(&format!("{a}>{b}\n"));
        mentioned.insert(a);
        mentioned.insert(b);
    }
    for v in 1..=dag.p {
        if !mentioned.contains(&v) && !dag.names.contains_key(&v) {
            out.push_str(&format!("{v}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn set(pairs: &[(usize, usize)]) -> BTreeSet<FieldPair> {
        pairs.iter().map(|&(a, b)| unordered(a, b)).collect()
    }

    #[test]
    fn parse_chain_and_cycles() {
        let d = parse_dag("1>2\n2>3").unwrap();
        assert_eq!(d.p(), 3);
        assert_eq!(d.edge_count(), 2);
        assert_eq!(parse_dag("1>2\n2>1"), Err(Error::CycleDetected));
        assert_eq!(parse_dag("2>2"), Err(Error::SelfEdge(2)));
        assert!(matches!(parse_dag("1>2\nfoo bar"), Err(Error::MalformedLine { line: 2, .. })));
        assert!(matches!(parse_dag("0>1"), Err(Error::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn parse_aliases_comments_and_isolated_fields() {
        let text = "# five fields\nname 1 DU\nname 2 SU\nDU>SU # dust to sulphate\n5\n";
        let d = parse_dag(text).unwrap();
        assert_eq!(d.p(), 5);
        assert!(d.has_edge(1, 2));
        assert_eq!(d.name(2), Some("SU"));
        assert_eq!(parse_dag(&format_dag(&d)).unwrap(), d);
    }

    #[test]
    fn six_field_fixture_parents_and_order() {
        let d = fixtures::six_field_dag();
        assert_eq!(d.p(), 6);
        assert_eq!(d.parents(5).unwrap(), &[4]);
        assert_eq!(d.parents(6).unwrap(), &[1, 3, 5]);
        assert_eq!(d.parents(1).unwrap(), &[] as &[usize]);
        assert_eq!(d.parents(7), Err(Error::UnknownField(7)));

        let order = d.topological_order();
        let pos = |v: usize| order.iter().position(|&x| x == v).unwrap();
        for (a, b) in d.edges() {
            assert!(pos(a) < pos(b), "{a}>{b} violates {order:?}");
        }
    }

    #[test]
    fn topological_ties_break_by_label() {
        assert_eq!(FieldDag::chain(3).topological_order(), vec![1, 2, 3]);
        assert_eq!(FieldDag::edgeless(4).topological_order(), vec![1, 2, 3, 4]);
        let d = FieldDag::new(4, [(4, 1), (3, 2)]).unwrap();
        assert_eq!(d.topological_order(), vec![3, 2, 4, 1]);
    }

    #[test]
    fn six_field_moralization_gives_four_ci_pairs() {
        let m = fixtures::six_field_dag().moralize();
        assert_eq!(m.marriages(), &set(&[(1, 3), (1, 5), (3, 5)]));
        assert_eq!(m.ci_pairs(), set(&[(1, 4), (2, 5), (2, 6), (4, 6)]));
    }

    #[test]
    fn collider_and_trivial_cases() {
        let collider = FieldDag::new(3, [(1, 3), (2, 3)]).unwrap();
        assert_eq!(collider.moralize().marriages(), &set(&[(1, 2)]));
        assert!(FieldDag::fully_connected(5).moralize().ci_pairs().is_empty());
        assert_eq!(FieldDag::edgeless(3).moralize().ci_pairs(), set(&[(1, 2), (1, 3), (2, 3)]));
    }

    fn arb_dag() -> impl Strategy<Value = FieldDag> {
        (2usize..9).prop_flat_map(|p| {
            proptest::collection::vec(any::<bool>(), p * (p - 1) / 2).prop_map(move |bits| {
                let mut edges = Vec::new();
                let mut k = 0;
                for c in 1..=p {
                    for a in 1..c {
                        if bits[k] {
                            edges.push((a, c));
                        }
                        k += 1;
                    }
                }
                FieldDag::new(p, edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn chains_need_no_marriages(p in 2usize..=10) {
            prop_assert!(FieldDag::chain(p).moralize().marriages().is_empty());
        }

        #[test]
        fn moral_graph_invariants(d in arb_dag()) {
            let m = d.moralize();
            prop_assert_eq!(&m, &d.moralize());
            for (a, b) in d.edges() {
                prop_assert!(m.adjacent(a, b) && m.adjacent(b, a));
            }
            for v in 1..=d.p() {
                prop_assert!(!m.adjacent(v, v));
                let ps = d.parents(v).unwrap();
                for &a in ps {
                    for &b in ps {
                        if a != b {
                            prop_assert!(m.adjacent(a, b));
                        }
                    }
                }
            }
            let ci = m.ci_pairs();
            for (a, b) in d.edges() {
                prop_assert!(!ci.contains(&unordered(a, b)));
            }
        }
    }
}
