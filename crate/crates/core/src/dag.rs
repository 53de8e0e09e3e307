//! Causal DAGs: parsing, parent queries and graph mutilation.
//!
//! The text grammar is a list of `;`-separated statements. A statement is
//! either a node declaration (`X`) or an edge (`P->C`). Whitespace is
//! ignored. Node index order is declaration order, and that order fixes the
//! column order used by every downstream model.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("DAG specification is empty")]
    EmptySpec,
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("edge `{edge}` references undeclared node `{node}`")]
    UnknownNodeInEdge { edge: String, node: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("directed cycle through `{0}`")]
    CycleDetected(String),
    #[error("invalid node name `{0}`")]
    InvalidName(String),
}

/// Role a variable plays in a treatment-effect query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Treatment,
    Outcome,
    Confounder,
    OtherCause,
    #[default]
    Plain,
}

/// A validated causal DAG.
///
/// `adjacency[i][j]` is set when node `j` is a parent of node `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    nodes: Vec<String>,
    adjacency: Vec<Vec<bool>>,
    topo_order: Vec<usize>,
    index: HashMap<String, usize>,
}

impl CausalDag {
    /// Builds a DAG from node names and `(parent, child)` index pairs.
    pub fn from_edges(nodes: Vec<String>, edges: &[(usize, usize)]) -> Result<Self, DagError> {
        if nodes.is_empty() {
            return Err(DagError::EmptySpec);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, name) in nodes.iter().enumerate() {
            if !valid_name(name) {
                return Err(DagError::InvalidName(name.clone()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(DagError::DuplicateNode(name.clone()));
            }
        }
        let d = nodes.len();
        let mut adjacency = vec![vec![false; d]; d];
        for &(p, c) in edges {
            if p >= d || c >= d {
                let bad = if p >= d { p } else { c };
                return Err(DagError::UnknownNode(bad.to_string()));
            }
            adjacency[c][p] = true;
        }
        let topo_order = topological_order(&adjacency).map_err(|i| DagError::CycleDetected(nodes[i].clone()))?;
        Ok(Self { nodes, adjacency, topo_order, index })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    /// Node indices with every parent before its child.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn index_of(&self, name: &str) -> Result<usize, DagError> {
        self.index.get(name).copied().ok_or_else(|| DagError::UnknownNode(name.to_string()))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.nodes[i]
    }

    /// Parent indices of node `i`, ascending.
    pub fn parent_indices(&self, i: usize) -> Vec<usize> {
        self.adjacency[i].iter().enumerate().filter(|(_, &p)| p).map(|(j, _)| j).collect()
    }

    pub fn parents(&self, node: &str) -> Result<BTreeSet<String>, DagError> {
        let i = self.index_of(node)?;
        Ok(self.parent_indices(i).into_iter().map(|j| self.nodes[j].clone()).collect())
    }

    pub fn children_indices(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.adjacency[c][i]).collect()
    }

    /// `(parent, child)` index pairs in lexicographic order of names.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = (0..self.len())
            .flat_map(|c| self.parent_indices(c).into_iter().map(move |p| (p, c)))
            .collect();
        edges.sort_by(|a, b| (&self.nodes[a.0], &self.nodes[a.1]).cmp(&(&self.nodes[b.0], &self.nodes[b.1])));
        edges
    }

    /// Copy of the graph with every edge into `target` removed.
    pub fn mutilate(&self, target: &str) -> Result<CausalDag, DagError> {
        let t = self.index_of(target)?;
        let mut out = self.clone();
        out.adjacency[t].iter_mut().for_each(|p| *p = false);
        // removing edges keeps the old order valid
        Ok(out)
    }

    /// Whether a directed path leads from `from` to `to` (a node reaches itself).
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        self.descendants(from)[to]
    }

    /// Indicator over nodes reachable from `from`, including `from`.
    pub fn descendants(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for c in self.children_indices(v) {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Canonical text: nodes in declaration order, then edges sorted by name.
    pub fn to_canonical(&self) -> String {
        let mut parts: Vec<String> = self.nodes.clone();
        parts.extend(self.edges().into_iter().map(|(p, c)| format!("{}->{}", self.nodes[p], self.nodes[c])));
        parts.join("; ")
    }
}

impl fmt::Display for CausalDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical())
    }
}

impl std::str::FromStr for CausalDag {
    type Err = DagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_dag(s)
    }
}

/// Parses the `.cdag` grammar. Lines starting with `#` are comments.
pub fn parse_dag(text: &str) -> Result<CausalDag, DagError> {
    let stripped: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join(";");
    let mut nodes: Vec<String> = Vec::new();
    let mut raw_edges: Vec<(String, String, String)> = Vec::new();
    for stmt in stripped.split([';', '\n']) {
        let stmt: String = stmt.chars().filter(|c| !c.is_whitespace()).collect();
        if stmt.is_empty() {
            continue;
        }
        if let Some((p, c)) = stmt.split_once("->") {
            raw_edges.push((p.to_string(), c.to_string(), stmt.clone()));
        } else {
            if nodes.contains(&stmt) {
                return Err(DagError::DuplicateNode(stmt));
            }
            nodes.push(stmt);
        }
    }
    if nodes.is_empty() {
        return Err(DagError::EmptySpec);
    }
    let lookup = |name: &str, edge: &str| {
        nodes.iter().position(|n| n == name).ok_or_else(|| DagError::UnknownNodeInEdge {
            edge: edge.to_string(),
            node: name.to_string(),
        })
    };
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (p, c, stmt) in &raw_edges {
        edges.push((lookup(p, stmt)?, lookup(c, stmt)?));
    }
    CausalDag::from_edges(nodes, &edges)
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        && !name.chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// Kahn's algorithm, preferring the lowest pending index so the order is stable.
/// On failure returns a node that lies on a cycle.
fn topological_order(adjacency: &[Vec<bool>]) -> Result<Vec<usize>, usize> {
    let d = adjacency.len();
    let mut indegree: Vec<usize> = adjacency.iter().map(|row| row.iter().filter(|&&p| p).count()).collect();
    let mut ready: BTreeSet<usize> = (0..d).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for c in 0..d {
            if adjacency[c][v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
    }
    if order.len() == d {
        Ok(order)
    } else {
        Err((0..d).find(|&i| indegree[i] > 0).unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_NODE: &str = "O; C; A; Y; C->A; C->Y; A->Y; O->Y";

    fn names(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_confounded_treatment_graph() {
        let dag = parse_dag(FOUR_NODE).unwrap();
        assert_eq!(dag.nodes(), &["O", "C", "A", "Y"]);
        assert_eq!(dag.edges().len(), 4);
        assert_eq!(dag.parents("Y").unwrap(), names(&["C", "A", "O"]));
        assert_eq!(dag.parents("A").unwrap(), names(&["C"]));
        assert!(dag.parents("O").unwrap().is_empty());
    }

    #[test]
    fn single_node() {
        let dag = parse_dag("X;").unwrap();
        assert_eq!(dag.topo_order(), &[0]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert_eq!(parse_dag("A; B; A->B; B->A").unwrap_err(), DagError::CycleDetected("A".into()));
        assert_eq!(parse_dag("A; A").unwrap_err(), DagError::DuplicateNode("A".into()));
        assert!(matches!(parse_dag("A; A->B").unwrap_err(), DagError::UnknownNodeInEdge { .. }));
        assert_eq!(parse_dag("  ;\n ").unwrap_err(), DagError::EmptySpec);
        assert_eq!(parse_dag("A; A->A").unwrap_err(), DagError::CycleDetected("A".into()));
    }

    #[test]
    fn whitespace_and_comments_ignored() {
        let dag = parse_dag("# graph\n O ;C\n;A;Y\n C -> A ; C->Y;A ->Y;O->  Y\n").unwrap();
        assert_eq!(dag, parse_dag(FOUR_NODE).unwrap());
    }

    #[test]
    fn parents_errors_on_unknown() {
        let dag = parse_dag("C; A; Y; C->A; A->Y").unwrap();
        assert_eq!(dag.parents("A").unwrap(), names(&["C"]));
        assert_eq!(dag.parents("Q").unwrap_err(), DagError::UnknownNode("Q".into()));
    }

    #[test]
    fn mutilation_removes_incoming_edges_only() {
        let dag = parse_dag(FOUR_NODE).unwrap();
        let cut = dag.mutilate("A").unwrap();
        assert!(cut.parents("A").unwrap().is_empty());
        assert_eq!(cut.parents("Y").unwrap(), names(&["C", "A", "O"]));

        assert_eq!(dag.mutilate("O").unwrap(), dag);

        let chain = parse_dag("C; A; Y; C->A; A->Y").unwrap();
        let cut = chain.mutilate("Y").unwrap();
        assert!(cut.parents("Y").unwrap().is_empty());
        assert_eq!(cut.parents("A").unwrap(), names(&["C"]));
        assert!(dag.mutilate("Z").is_err());
    }

    #[test]
    fn descendants_follow_edges() {
        let dag = parse_dag(FOUR_NODE).unwrap();
        let a = dag.index_of("A").unwrap();
        let y = dag.index_of("Y").unwrap();
        let c = dag.index_of("C").unwrap();
        assert!(dag.has_directed_path(a, y));
        assert!(!dag.has_directed_path(a, c));
        assert!(dag.has_directed_path(c, y));
    }

    #[test]
    fn canonical_form_is_sorted() {
        let dag = parse_dag("O; C; A; Y; O->Y; A->Y; C->Y; C->A").unwrap();
        assert_eq!(dag.to_canonical(), "O; C; A; Y; A->Y; C->A; C->Y; O->Y");
    }
}
