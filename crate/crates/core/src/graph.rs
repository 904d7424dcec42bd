//! Directed heterogeneous multigraphs with integer vertex and edge labels.
//!
//! A [`Graph`] owns its vertex list, edge list and label alphabets. Parallel
//! edges are allowed as long as they differ in edge label, so the labels on a
//! vertex pair behave like a set. [`Pattern`] is a graph that is additionally
//! weakly connected and uses every label of its alphabets at least once.

use std::collections::{HashMap, HashSet};
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = u32;
pub type VertexLabel = u32;
pub type EdgeLabel = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    pub label: EdgeLabel,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate vertex id {0}")]
    DuplicateVertexId(VertexId),
    #[error("duplicate edge triple ({0}, {1}, {2})")]
    DuplicateEdgeTriple(VertexId, VertexId, EdgeLabel),
    #[error("edge endpoint {0} is not a declared vertex")]
    DanglingEndpoint(VertexId),
    #[error("label {got} out of range [0, {max})")]
    LabelOutOfRange { got: u32, max: u32 },
    #[error("label counts must be positive")]
    EmptyLabelAlphabet,
    #[error("pattern is not weakly connected")]
    NotConnected,
    #[error("pattern does not use every label: {0}")]
    MissingLabel(String),
    #[error("permutation is not a bijection over the vertex ids")]
    NonBijectivePermutation,
    #[error("mapping is not total on the pattern vertices")]
    MappingNotTotal,
}

/// Directed labeled multigraph. Immutable once built; all mutation happens
/// through [`GraphBuilder`] or by constructing a new graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    vertices: Vec<(VertexId, VertexLabel)>,
    edges: Vec<Edge>,
    num_vertex_labels: u32,
    num_edge_labels: u32,
}

impl Graph {
    /// Validates the invariants and builds a graph: endpoints declared,
    /// labels in range, vertex ids distinct, no repeated (src, dst, label).
    pub fn new(
        vertices: Vec<(VertexId, VertexLabel)>,
        edges: Vec<Edge>,
        num_vertex_labels: u32,
        num_edge_labels: u32,
    ) -> Result<Self, GraphError> {
        if num_vertex_labels == 0 || (num_edge_labels == 0 && !edges.is_empty()) {
            return Err(GraphError::EmptyLabelAlphabet);
        }
        let mut ids = HashSet::with_capacity(vertices.len());
        for &(id, label) in &vertices {
            if !ids.insert(id) {
                return Err(GraphError::DuplicateVertexId(id));
            }
            if label >= num_vertex_labels {
                return Err(GraphError::LabelOutOfRange {
                    got: label,
                    max: num_vertex_labels,
                });
            }
        }
        let mut triples = HashSet::with_capacity(edges.len());
        for e in &edges {
            if !ids.contains(&e.src) {
                return Err(GraphError::DanglingEndpoint(e.src));
            }
            if !ids.contains(&e.dst) {
                return Err(GraphError::DanglingEndpoint(e.dst));
            }
            if e.label >= num_edge_labels {
                return Err(GraphError::LabelOutOfRange {
                    got: e.label,
                    max: num_edge_labels,
                });
            }
            if !triples.insert((e.src, e.dst, e.label)) {
                return Err(GraphError::DuplicateEdgeTriple(e.src, e.dst, e.label));
            }
        }
        Ok(Graph {
            vertices,
            edges,
            num_vertex_labels,
            num_edge_labels,
        })
    }

    pub fn vertices(&self) -> &[(VertexId, VertexLabel)] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn num_vertex_labels(&self) -> u32 {
        self.num_vertex_labels
    }

    pub fn num_edge_labels(&self) -> u32 {
        self.num_edge_labels
    }

    pub fn vertex_label(&self, id: VertexId) -> Option<VertexLabel> {
        self.vertices
            .iter()
            .find(|&&(v, _)| v == id)
            .map(|&(_, l)| l)
    }

    /// Map from vertex id to a dense index [0, n).
    pub fn index_of_ids(&self) -> HashMap<VertexId, usize> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, &(id, _))| (id, i))
            .collect()
    }

    /// The set of edge signatures (source label, edge label, target label)
    /// occurring in this graph.
    pub fn signature_set(&self) -> HashSet<(VertexLabel, EdgeLabel, VertexLabel)> {
        let labels: HashMap<VertexId, VertexLabel> = self.vertices.iter().copied().collect();
        self.edges
            .iter()
            .map(|e| (labels[&e.src], e.label, labels[&e.dst]))
            .collect()
    }

    /// True if the graph is connected when edge directions are ignored.
    pub fn is_weakly_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let index = self.index_of_ids();
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            let (s, d) = (index[&e.src], index[&e.dst]);
            adj[s].push(d);
            adj[d].push(s);
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Rebuilds the graph with vertex ids renamed through `perm`. The
    /// permutation must be a bijection over exactly this graph's ids.
    pub fn remap_vertex_ids(&self, perm: &HashMap<VertexId, VertexId>) -> Result<Self, GraphError> {
        if perm.len() != self.vertices.len() {
            return Err(GraphError::NonBijectivePermutation);
        }
        let mut targets = HashSet::with_capacity(perm.len());
        for &(id, _) in &self.vertices {
            match perm.get(&id) {
                Some(&t) => {
                    if !targets.insert(t) {
                        return Err(GraphError::NonBijectivePermutation);
                    }
                }
                None => return Err(GraphError::NonBijectivePermutation),
            }
        }
        let vertices = self
            .vertices
            .iter()
            .map(|&(id, l)| (perm[&id], l))
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[&e.src],
                dst: perm[&e.dst],
                label: e.label,
            })
            .collect();
        Graph::new(vertices, edges, self.num_vertex_labels, self.num_edge_labels)
    }
}

/// Incremental construction used by the generators. Duplicate triples are
/// queryable before insertion, which the random-edge loops rely on.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    vertices: Vec<(VertexId, VertexLabel)>,
    edges: Vec<Edge>,
    triples: HashSet<(VertexId, VertexId, EdgeLabel)>,
    num_vertex_labels: u32,
    num_edge_labels: u32,
}

impl GraphBuilder {
    pub fn new(num_vertex_labels: u32, num_edge_labels: u32) -> Self {
        GraphBuilder {
            vertices: Vec::new(),
            edges: Vec::new(),
            triples: HashSet::new(),
            num_vertex_labels,
            num_edge_labels,
        }
    }

    pub fn add_vertex(&mut self, id: VertexId, label: VertexLabel) {
        debug_assert!(label < self.num_vertex_labels);
        self.vertices.push((id, label));
    }

    pub fn has_edge(&self, src: VertexId, dst: VertexId, label: EdgeLabel) -> bool {
        self.triples.contains(&(src, dst, label))
    }

    /// Returns false (and adds nothing) if the triple already exists.
    pub fn add_edge(&mut self, src: VertexId, dst: VertexId, label: EdgeLabel) -> bool {
        if !self.triples.insert((src, dst, label)) {
            return false;
        }
        self.edges.push(Edge { src, dst, label });
        true
    }

    pub fn vertices(&self) -> &[(VertexId, VertexLabel)] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn build(self) -> Result<Graph, GraphError> {
        Graph::new(
            self.vertices,
            self.edges,
            self.num_vertex_labels,
            self.num_edge_labels,
        )
    }
}

/// A query graph: weakly connected, and every vertex label in
/// `[0, num_vertex_labels)` and edge label in `[0, num_edge_labels)` occurs
/// at least once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    graph: Graph,
}

impl Pattern {
    pub fn new(graph: Graph) -> Result<Self, GraphError> {
        if !graph.is_weakly_connected() {
            return Err(GraphError::NotConnected);
        }
        let mut vseen = vec![false; graph.num_vertex_labels as usize];
        for &(_, l) in graph.vertices() {
            vseen[l as usize] = true;
        }
        if let Some(l) = vseen.iter().position(|&s| !s) {
            return Err(GraphError::MissingLabel(format!("vertex label {l}")));
        }
        let mut eseen = vec![false; graph.num_edge_labels as usize];
        for e in graph.edges() {
            eseen[e.label as usize] = true;
        }
        if let Some(l) = eseen.iter().position(|&s| !s) {
            return Err(GraphError::MissingLabel(format!("edge label {l}")));
        }
        Ok(Pattern { graph })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }
}

impl Deref for Pattern {
    type Target = Graph;

    fn deref(&self) -> &Graph {
        &self.graph
    }
}

/// A subgraph isomorphism: pairs of (graph vertex, pattern vertex) forming a
/// bijection between a subset of the graph's vertices and all of the
/// pattern's vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsoMapping {
    pub pairs: Vec<(VertexId, VertexId)>,
}

impl IsoMapping {
    pub fn new(pairs: Vec<(VertexId, VertexId)>) -> Self {
        IsoMapping { pairs }
    }

    /// Graph vertex matched to the given pattern vertex, if any.
    pub fn graph_vertex_for(&self, pattern_vertex: VertexId) -> Option<VertexId> {
        self.pairs
            .iter()
            .find(|&&(_, p)| p == pattern_vertex)
            .map(|&(g, _)| g)
    }

    /// Renames the graph side of every pair through `perm`.
    pub fn remap_graph_ids(&self, perm: &HashMap<VertexId, VertexId>) -> IsoMapping {
        IsoMapping {
            pairs: self.pairs.iter().map(|&(g, p)| (perm[&g], p)).collect(),
        }
    }
}

/// Checks whether `m` is a subgraph isomorphism of `pattern` into `graph`:
/// the pairs are bijective, vertex labels agree, and every pattern edge
/// (u, v, y) has a graph edge (m(u), m(v), y) between the matched vertices.
/// The matched subgraph's edge set is exactly the matched edges, so no
/// condition is imposed on additional graph edges.
pub fn verify_mapping(pattern: &Graph, graph: &Graph, m: &IsoMapping) -> Result<bool, GraphError> {
    let mut pat_to_graph: HashMap<VertexId, VertexId> = HashMap::with_capacity(m.pairs.len());
    let mut used_graph: HashSet<VertexId> = HashSet::with_capacity(m.pairs.len());
    for &(g, p) in &m.pairs {
        if pat_to_graph.insert(p, g).is_some() {
            return Err(GraphError::MappingNotTotal);
        }
        if !used_graph.insert(g) {
            return Ok(false); // not injective on graph vertices
        }
    }
    for &(pid, _) in pattern.vertices() {
        if !pat_to_graph.contains_key(&pid) {
            return Err(GraphError::MappingNotTotal);
        }
    }

    let glabels: HashMap<VertexId, VertexLabel> = graph.vertices().iter().copied().collect();
    for &(pid, plabel) in pattern.vertices() {
        let gid = pat_to_graph[&pid];
        match glabels.get(&gid) {
            Some(&gl) if gl == plabel => {}
            _ => return Ok(false),
        }
    }

    let gtriples: HashSet<(VertexId, VertexId, EdgeLabel)> = graph
        .edges()
        .iter()
        .map(|e| (e.src, e.dst, e.label))
        .collect();
    for e in pattern.edges() {
        let gs = pat_to_graph[&e.src];
        let gd = pat_to_graph[&e.dst];
        if !gtriples.contains(&(gs, gd, e.label)) {
            return Ok(false);
        }
    }
    Ok(true)
}
