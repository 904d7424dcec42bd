//! Pattern and graph generators with exactly known ground-truth counts.
//!
//! Patterns are random directed trees plus extra labeled edges, with every
//! label of both alphabets forced to appear. Graphs are built from several
//! disconnected components; edges inside a component are unconstrained while
//! edges between components must carry a label signature that never occurs
//! in the pattern, so no isomorphism can span two components. The exact
//! search therefore runs per component before the components are merged and
//! the vertex ids shuffled.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::count::{per_component_count, CountError, CountOptions};
use crate::graph::{
    Edge, EdgeLabel, Graph, GraphBuilder, GraphError, IsoMapping, Pattern, VertexId, VertexLabel,
};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("infeasible pattern parameters: {0}")]
    InfeasibleParams(String),
    #[error("no admissible cross-component edge exists")]
    NoAdmissibleEdge,
    #[error("no vertex set with compatible labels in the component")]
    NoCompatibleVertexSet,
    #[error("edge budget could not be spent: {0}")]
    BudgetInfeasible(String),
    #[error("count cap {cap} still exceeded after {retries} retries")]
    CapExceededAfterRetries { cap: u64, retries: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Count(#[from] CountError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PatternParams {
    pub n_vertices: u32,
    pub n_edges: u32,
    pub n_vertex_labels: u32,
    pub n_edge_labels: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphParams {
    pub n_vertices: u32,
    pub n_edges: u32,
    pub n_vertex_labels: u32,
    pub n_edge_labels: u32,
    /// Probability of adding a pattern instance instead of random edges.
    pub alpha: f64,
    /// Dirichlet concentration for component sizes.
    pub beta: f64,
    pub max_count: u64,
    pub max_avg_degree: f64,
    pub max_retries: u32,
}

impl GraphParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GeneratorError::InfeasibleParams("alpha outside [0,1]".into()));
        }
        if self.beta <= 0.0 || self.max_count == 0 || self.max_avg_degree <= 0.0 {
            return Err(GeneratorError::InfeasibleParams("non-positive cap".into()));
        }
        if self.n_edges as f64 / self.n_vertices as f64 > self.max_avg_degree {
            return Err(GeneratorError::InfeasibleParams(format!(
                "average degree {}/{} exceeds cap {}",
                self.n_edges, self.n_vertices, self.max_avg_degree
            )));
        }
        Ok(())
    }
}

/// Uniform random directed tree: a uniformly sampled labeled tree (via its
/// Pruefer sequence) with each edge direction chosen by a fair coin. All
/// vertex labels are 0.
pub fn generate_directed_tree(n: u32, rng: &mut ChaCha8Rng) -> Graph {
    let edges = tree_edges(n, rng)
        .into_iter()
        .map(|(a, b)| Edge { src: a, dst: b, label: 0 })
        .collect();
    Graph::new((0..n).map(|i| (i, 0)).collect(), edges, 1, 1).expect("tree is valid")
}

/// Undirected tree edges on vertices 0..n, orientation already randomized.
fn tree_edges(n: u32, rng: &mut ChaCha8Rng) -> Vec<(VertexId, VertexId)> {
    let mut edges = Vec::new();
    if n <= 1 {
        return edges;
    }
    if n == 2 {
        let (a, b) = if rng.gen::<bool>() { (0, 1) } else { (1, 0) };
        return vec![(a, b)];
    }
    // decode a uniform Pruefer sequence
    let seq: Vec<u32> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1u32; n as usize];
    for &v in &seq {
        degree[v as usize] += 1;
    }
    let mut leaf_heap: std::collections::BinaryHeap<std::cmp::Reverse<u32>> = (0..n)
        .filter(|&v| degree[v as usize] == 1)
        .map(std::cmp::Reverse)
        .collect();
    for &v in &seq {
        let std::cmp::Reverse(leaf) = leaf_heap.pop().expect("tree decode invariant");
        edges.push((leaf, v));
        degree[v as usize] -= 1;
        if degree[v as usize] == 1 {
            leaf_heap.push(std::cmp::Reverse(v));
        }
    }
    let std::cmp::Reverse(a) = leaf_heap.pop().unwrap();
    let std::cmp::Reverse(b) = leaf_heap.pop().unwrap();
    edges.push((a, b));
    edges
        .into_iter()
        .map(|(a, b)| if rng.gen::<bool>() { (a, b) } else { (b, a) })
        .collect()
}

/// Shuffled label assignment in which each of the first `count` labels is
/// forced to appear once and the rest are uniform.
fn covering_labels(slots: usize, count: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut labels: Vec<u32> = (0..slots)
        .map(|i| {
            if (i as u32) < count {
                i as u32
            } else {
                rng.gen_range(0..count)
            }
        })
        .collect();
    labels.shuffle(rng);
    labels
}

/// Random connected multigraph satisfying Pattern invariants.
pub fn generate_pattern(p: &PatternParams, rng: &mut ChaCha8Rng) -> Result<Pattern, GeneratorError> {
    let (nv, ne, lv, le) = (p.n_vertices, p.n_edges, p.n_vertex_labels, p.n_edge_labels);
    if nv == 0 || lv == 0 || le == 0 {
        return Err(GeneratorError::InfeasibleParams("zero sizes".into()));
    }
    if ne + 1 < nv {
        return Err(GeneratorError::InfeasibleParams(format!(
            "{ne} edges cannot connect {nv} vertices"
        )));
    }
    if lv > nv {
        return Err(GeneratorError::InfeasibleParams(format!(
            "{lv} vertex labels cannot all appear among {nv} vertices"
        )));
    }
    if le > ne {
        return Err(GeneratorError::InfeasibleParams(format!(
            "{le} edge labels cannot all appear among {ne} edges"
        )));
    }
    let capacity = nv as u64 * nv.saturating_sub(1) as u64 * le as u64;
    if (ne as u64) > capacity {
        return Err(GeneratorError::InfeasibleParams(format!(
            "{ne} edges exceed the {capacity} distinct (u,v,y) slots"
        )));
    }

    'attempt: for _ in 0..64 {
        // tree plus extra random endpoint pairs, multiplicity bounded by the
        // number of edge labels
        let mut pairs = tree_edges(nv, rng);
        let mut multiplicity: HashMap<(u32, u32), u32> = HashMap::new();
        for &(a, b) in &pairs {
            *multiplicity.entry((a, b)).or_insert(0) += 1;
        }
        let mut guard = 0;
        while pairs.len() < ne as usize {
            guard += 1;
            if guard > 10_000 {
                continue 'attempt;
            }
            let a = rng.gen_range(0..nv);
            let b = rng.gen_range(0..nv);
            if a == b {
                continue;
            }
            let m = multiplicity.entry((a, b)).or_insert(0);
            if *m >= le {
                continue;
            }
            *m += 1;
            pairs.push((a, b));
        }

        let vertex_labels = covering_labels(nv as usize, lv, rng);
        // label edges: unique label per parallel bundle, every label used
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(rng);
        let mut labels = vec![u32::MAX; pairs.len()];
        let mut used: HashSet<(u32, u32, u32)> = HashSet::new();
        for (rank, &ei) in order.iter().enumerate() {
            let (a, b) = pairs[ei];
            let y = if (rank as u32) < le {
                rank as u32 // forced carrier of this label
            } else {
                let free: Vec<u32> = (0..le).filter(|&y| !used.contains(&(a, b, y))).collect();
                match free.as_slice() {
                    [] => continue 'attempt,
                    f => *f.choose(rng).unwrap(),
                }
            };
            if !used.insert((a, b, y)) {
                continue 'attempt;
            }
            labels[ei] = y;
        }

        let edges = pairs
            .iter()
            .zip(&labels)
            .map(|(&(a, b), &y)| Edge { src: a, dst: b, label: y })
            .collect();
        let vertices = (0..nv).map(|i| (i, vertex_labels[i as usize])).collect();
        let graph = Graph::new(vertices, edges, lv, le)?;
        return Ok(Pattern::new(graph)?);
    }
    Err(GeneratorError::InfeasibleParams(
        "could not realize a label assignment".into(),
    ))
}

/// Neighborhood equivalence classes of a pattern plus the set of edge
/// signatures it contains. Two vertices are equivalent when they share the
/// vertex label and the multisets of incident in/out edge signatures.
#[derive(Debug, Clone)]
pub struct NecTree {
    /// class id per pattern vertex id
    pub class_of: HashMap<VertexId, usize>,
    pub class_count: usize,
    /// (in-degree, out-degree) lower bounds shared by each class
    pub class_degrees: Vec<(usize, usize)>,
    /// every (source label, edge label, target label) present in the pattern
    pub signatures: HashSet<(VertexLabel, EdgeLabel, VertexLabel)>,
}

pub fn build_nec_tree(p: &Graph) -> NecTree {
    let labels: HashMap<VertexId, VertexLabel> = p.vertices().iter().copied().collect();
    let mut out_sig: HashMap<VertexId, Vec<(EdgeLabel, VertexLabel)>> = HashMap::new();
    let mut in_sig: HashMap<VertexId, Vec<(EdgeLabel, VertexLabel)>> = HashMap::new();
    for e in p.edges() {
        out_sig.entry(e.src).or_default().push((e.label, labels[&e.dst]));
        in_sig.entry(e.dst).or_default().push((e.label, labels[&e.src]));
    }
    let mut keys: HashMap<(VertexLabel, Vec<(u32, u32)>, Vec<(u32, u32)>), usize> = HashMap::new();
    let mut class_of = HashMap::new();
    let mut class_degrees = Vec::new();
    for &(id, l) in p.vertices() {
        let mut outs = out_sig.get(&id).cloned().unwrap_or_default();
        let mut ins = in_sig.get(&id).cloned().unwrap_or_default();
        outs.sort_unstable();
        ins.sort_unstable();
        let degs = (ins.len(), outs.len());
        let next = keys.len();
        let class = *keys.entry((l, outs, ins)).or_insert(next);
        if class == class_degrees.len() {
            class_degrees.push(degs);
        }
        class_of.insert(id, class);
    }
    NecTree {
        class_of,
        class_count: class_degrees.len(),
        class_degrees,
        signatures: p.signature_set(),
    }
}

/// Positive integer component sizes summing to `n_v`, from a symmetric
/// Dirichlet(beta) draw rounded by largest remainder.
pub fn sample_component_sizes_with_count(
    n_v: u32,
    beta: f64,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<u32> {
    assert!(k >= 1 && k as u32 <= n_v);
    if k == 1 {
        return vec![n_v];
    }
    let dir = Dirichlet::new(&vec![beta; k]).expect("valid dirichlet");
    let weights = dir.sample(rng);
    let raw: Vec<f64> = weights.iter().map(|w| w * n_v as f64).collect();
    let mut sizes: Vec<u32> = raw.iter().map(|&r| (r.floor() as u32).max(1)).collect();
    let mut assigned: i64 = sizes.iter().map(|&s| s as i64).sum();
    // distribute the remainder to the largest fractional parts
    let mut frac: Vec<(usize, f64)> = raw
        .iter()
        .enumerate()
        .map(|(i, &r)| (i, r - r.floor()))
        .collect();
    frac.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut cursor = 0;
    while assigned < n_v as i64 {
        sizes[frac[cursor % k].0] += 1;
        assigned += 1;
        cursor += 1;
    }
    while assigned > n_v as i64 {
        let i = sizes
            .iter()
            .enumerate()
            .max_by_key(|&(i, &s)| (s, std::cmp::Reverse(i)))
            .map(|(i, _)| i)
            .unwrap();
        debug_assert!(sizes[i] > 1);
        sizes[i] -= 1;
        assigned -= 1;
    }
    sizes
}

/// As above with the component count drawn uniformly from
/// [1, max(1, n_v / 8)].
pub fn sample_component_sizes(n_v: u32, beta: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let hi = (n_v / 8).max(1) as usize;
    let k = rng.gen_range(1..=hi);
    sample_component_sizes_with_count(n_v, beta, k, rng)
}

/// One component under construction: a graph builder whose vertex ids are
/// globally unique across the whole example.
#[derive(Debug, Clone)]
pub struct Component {
    pub builder: GraphBuilder,
    /// vertices bucketed by label for pattern placement
    by_label: HashMap<VertexLabel, Vec<VertexId>>,
    ids: Vec<VertexId>,
}

impl Component {
    fn new(offset: u32, labels: &[VertexLabel], lv: u32, le: u32) -> Self {
        let mut builder = GraphBuilder::new(lv, le);
        let mut by_label: HashMap<VertexLabel, Vec<VertexId>> = HashMap::new();
        let mut ids = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            let id = offset + i as u32;
            builder.add_vertex(id, l);
            by_label.entry(l).or_default().push(id);
            ids.push(id);
        }
        Component { builder, by_label, ids }
    }

    fn label_of(&self, id: VertexId) -> VertexLabel {
        self.builder
            .vertices()
            .iter()
            .find(|&&(v, _)| v == id)
            .map(|&(_, l)| l)
            .expect("vertex in component")
    }
}

/// The in-flight state of one graph generation: components plus the
/// cross-component edges that exist only in the merged graph.
#[derive(Debug, Clone)]
pub struct GenComponents {
    pub components: Vec<Component>,
    pub cross_edges: Vec<Edge>,
    cross_triples: HashSet<(VertexId, VertexId, EdgeLabel)>,
    n_edge_labels: u32,
}

impl GenComponents {
    pub fn edge_count(&self) -> usize {
        self.components
            .iter()
            .map(|c| c.builder.edge_count())
            .sum::<usize>()
            + self.cross_edges.len()
    }
}

const PLACEMENT_ATTEMPTS: usize = 64;

/// Adds up to `budget` random edges. With `i == j` the edges go inside one
/// component and are unconstrained apart from triple uniqueness. With
/// `i != j` every edge crosses the two components and must carry a label
/// signature absent from `nec`, so it can never take part in an isomorphism.
/// Returns the number of edges added.
pub fn add_random_edges(
    state: &mut GenComponents,
    i: usize,
    j: usize,
    nec: Option<&NecTree>,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize, GeneratorError> {
    if budget == 0 {
        return Ok(0);
    }
    let le = state.n_edge_labels;
    if i == j || nec.is_none() {
        let comp = &mut state.components[i];
        if comp.ids.len() < 2 {
            return Ok(0);
        }
        let mut added = 0;
        for _ in 0..budget {
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let a = *comp.ids.choose(rng).unwrap();
                let b = *comp.ids.choose(rng).unwrap();
                if a == b {
                    continue;
                }
                let y = rng.gen_range(0..le);
                if comp.builder.add_edge(a, b, y) {
                    added += 1;
                    placed = true;
                    break;
                }
            }
            if !placed {
                break;
            }
        }
        return Ok(added);
    }

    let nec = nec.unwrap();
    // an admissible cross edge must exist for some label pair and direction
    let feasible = {
        let labels_i: HashSet<_> = state.components[i].by_label.keys().copied().collect();
        let labels_j: HashSet<_> = state.components[j].by_label.keys().copied().collect();
        let mut ok = false;
        'outer: for &a in &labels_i {
            for &b in &labels_j {
                for y in 0..le {
                    if !nec.signatures.contains(&(a, y, b)) || !nec.signatures.contains(&(b, y, a))
                    {
                        ok = true;
                        break 'outer;
                    }
                }
            }
        }
        ok
    };
    if !feasible {
        return Err(GeneratorError::NoAdmissibleEdge);
    }

    let mut added = 0;
    for _ in 0..budget {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let a = *state.components[i].ids.choose(rng).unwrap();
            let b = *state.components[j].ids.choose(rng).unwrap();
            let (src, dst, ci) = if rng.gen::<bool>() { (a, b, i) } else { (b, a, j) };
            let (src_comp, dst_comp) = if ci == i { (i, j) } else { (j, i) };
            let xs = state.components[src_comp].label_of(src);
            let xd = state.components[dst_comp].label_of(dst);
            let admissible: Vec<EdgeLabel> = (0..le)
                .filter(|&y| !nec.signatures.contains(&(xs, y, xd)))
                .filter(|&y| !state.cross_triples.contains(&(src, dst, y)))
                .collect();
            let Some(&y) = admissible.as_slice().choose(rng) else {
                continue;
            };
            state.cross_triples.insert((src, dst, y));
            state.cross_edges.push(Edge { src, dst, label: y });
            added += 1;
            placed = true;
            break;
        }
        if !placed {
            break;
        }
    }
    Ok(added)
}

/// Places one pattern instance inside component `i` by picking distinct
/// label-compatible vertices and adding the pattern edges that are missing.
/// Returns the number of edges actually added.
pub fn add_pattern_instance(
    state: &mut GenComponents,
    i: usize,
    pattern: &Pattern,
    rng: &mut ChaCha8Rng,
) -> Result<usize, GeneratorError> {
    let comp = &mut state.components[i];
    // feasibility: enough vertices of every required label
    let mut needed: HashMap<VertexLabel, usize> = HashMap::new();
    for &(_, l) in pattern.vertices() {
        *needed.entry(l).or_insert(0) += 1;
    }
    for (&l, &n) in &needed {
        if comp.by_label.get(&l).map_or(0, Vec::len) < n {
            return Err(GeneratorError::NoCompatibleVertexSet);
        }
    }
    let mut chosen: HashMap<VertexId, VertexId> = HashMap::new(); // pattern id -> component id
    let mut used: HashSet<VertexId> = HashSet::new();
    let mut pattern_vertices: Vec<_> = pattern.vertices().to_vec();
    pattern_vertices.shuffle(rng);
    for (pid, l) in pattern_vertices {
        let bucket = &comp.by_label[&l];
        let free: Vec<VertexId> = bucket.iter().copied().filter(|v| !used.contains(v)).collect();
        let &v = free.as_slice().choose(rng).expect("checked above");
        used.insert(v);
        chosen.insert(pid, v);
    }
    let mut added = 0;
    for e in pattern.edges() {
        if comp.builder.add_edge(chosen[&e.src], chosen[&e.dst], e.label) {
            added += 1;
        }
    }
    Ok(added)
}

/// Merges disjoint components (and the cross edges between them) into one
/// graph and shuffles all vertex ids. Returns the merged graph and the
/// id map applied, for rewriting recorded mappings.
pub fn merge_and_shuffle(
    components: &[Graph],
    cross_edges: &[Edge],
    lv: u32,
    le: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(Graph, HashMap<VertexId, VertexId>), GeneratorError> {
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    for c in components {
        vertices.extend_from_slice(c.vertices());
        edges.extend_from_slice(c.edges());
    }
    edges.extend_from_slice(cross_edges);

    let ids: Vec<VertexId> = vertices.iter().map(|&(id, _)| id).collect();
    let mut shuffled = ids.clone();
    shuffled.shuffle(rng);
    let perm: HashMap<VertexId, VertexId> = ids.into_iter().zip(shuffled).collect();

    let merged = Graph::new(vertices, edges, lv, le)?;
    let merged = merged.remap_vertex_ids(&perm)?;
    Ok((merged, perm))
}

/// A generated pattern/graph pair with its exact count, the witnessing
/// mappings and the provenance needed to audit the construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedExample {
    pub pattern: Pattern,
    pub graph: Graph,
    pub count: u64,
    pub mappings: Vec<IsoMapping>,
    /// final vertex ids of each original component
    pub component_vertices: Vec<Vec<VertexId>>,
    pub seed: u64,
}

/// Runs the full graph-generation pipeline for one example. Deterministic
/// given `seed`; the seed is recorded on the example for replay.
pub fn generate_graph(
    pattern: &Pattern,
    gp: &GraphParams,
    seed: u64,
) -> Result<GeneratedExample, GeneratorError> {
    gp.validate()?;
    let mut last_err = None;
    for attempt in 0..gp.max_retries {
        match generate_graph_attempt(pattern, gp, seed, attempt) {
            Ok(ex) => return Ok(ex),
            Err(e @ GeneratorError::InfeasibleParams(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    match last_err {
        Some(GeneratorError::CapExceededAfterRetries { .. }) | None => {
            Err(GeneratorError::CapExceededAfterRetries {
                cap: gp.max_count,
                retries: gp.max_retries,
            })
        }
        Some(e) => Err(e),
    }
}

fn generate_graph_attempt(
    pattern: &Pattern,
    gp: &GraphParams,
    seed: u64,
    attempt: u32,
) -> Result<GeneratedExample, GeneratorError> {
    let rng = &mut stream(seed, "graph-gen", attempt as u64);
    let (nv, ne, lv, le) = (gp.n_vertices, gp.n_edges, gp.n_vertex_labels, gp.n_edge_labels);

    // component count: uniform in [1, nv/8], raised if the edge budget
    // cannot even pay for the spanning trees
    let k_min = (nv.saturating_sub(ne)).max(1) as usize;
    let k_max = ((nv / 8).max(1) as usize).max(k_min);
    let k = rng.gen_range(k_min..=k_max);
    let sizes = sample_component_sizes_with_count(nv, gp.beta, k, rng);

    let mut components = Vec::with_capacity(k);
    let mut offset = 0u32;
    let mut tree_edges_total = 0usize;
    for &n in &sizes {
        // same assignment rule as the pattern generator: every label appears
        // once when the component is big enough, uniform beyond that
        let labels: Vec<VertexLabel> = if n >= lv {
            covering_labels(n as usize, lv, rng)
        } else {
            (0..n).map(|_| rng.gen_range(0..lv)).collect()
        };
        let mut comp = Component::new(offset, &labels, lv, le);
        let tree = tree_edges(n, rng);
        let edge_labels: Vec<EdgeLabel> = if tree.len() >= le as usize {
            covering_labels(tree.len(), le, rng)
        } else {
            (0..tree.len()).map(|_| rng.gen_range(0..le)).collect()
        };
        for ((a, b), y) in tree.into_iter().zip(edge_labels) {
            comp.builder.add_edge(offset + a, offset + b, y);
            tree_edges_total += 1;
        }
        components.push(comp);
        offset += n;
    }

    let mut state = GenComponents {
        components,
        cross_edges: Vec::new(),
        cross_triples: HashSet::new(),
        n_edge_labels: le,
    };
    let nec = build_nec_tree(pattern);
    let pattern_edges = pattern.edge_count();

    let mut remaining = (ne as i64) - tree_edges_total as i64;
    let mut stagnant = 0;
    while remaining > 0 {
        let i = rng.gen_range(0..k);
        let j = rng.gen_range(0..k);
        let r: f64 = rng.gen();
        let added = if (remaining as usize) < pattern_edges {
            add_random_edges(&mut state, i, j, (i != j).then_some(&nec), remaining as usize, rng)?
        } else if r < gp.alpha {
            match add_pattern_instance(&mut state, i, pattern, rng) {
                Ok(n) => n,
                Err(GeneratorError::NoCompatibleVertexSet) => 0,
                Err(e) => return Err(e),
            }
        } else {
            add_random_edges(&mut state, i, j, (i != j).then_some(&nec), pattern_edges, rng)?
        };
        remaining -= added as i64;
        if added == 0 {
            stagnant += 1;
            if stagnant > 200 {
                return Err(GeneratorError::BudgetInfeasible(format!(
                    "{remaining} edges left with no admissible slot"
                )));
            }
        } else {
            stagnant = 0;
        }
    }

    // exact search per component, then merge and rewrite the mappings
    let component_graphs: Vec<Graph> = state
        .components
        .iter()
        .map(|c| c.builder.clone().build())
        .collect::<Result<_, _>>()?;
    let opts = CountOptions::with_mappings();
    let counted = per_component_count(&component_graphs, pattern, &opts)?;
    if counted.count > gp.max_count {
        return Err(GeneratorError::CapExceededAfterRetries {
            cap: gp.max_count,
            retries: attempt + 1,
        });
    }

    let (graph, perm) = merge_and_shuffle(&component_graphs, &state.cross_edges, lv, le, rng)?;
    let mappings: Vec<IsoMapping> = counted
        .mappings
        .unwrap_or_default()
        .iter()
        .map(|m| m.remap_graph_ids(&perm))
        .collect();
    let component_vertices = component_graphs
        .iter()
        .map(|c| c.vertices().iter().map(|&(id, _)| perm[&id]).collect())
        .collect();

    Ok(GeneratedExample {
        pattern: pattern.clone(),
        graph,
        count: counted.count,
        mappings,
        component_vertices,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::count::vf2_count;
    use crate::graph::verify_mapping;

    fn rng(seed: u64) -> ChaCha8Rng {
        stream(seed, "test", 0)
    }

    #[test]
    fn tree_shapes() {
        let mut r = rng(1);
        let t1 = generate_directed_tree(1, &mut r);
        assert_eq!((t1.vertex_count(), t1.edge_count()), (1, 0));
        let t2 = generate_directed_tree(2, &mut r);
        assert_eq!((t2.vertex_count(), t2.edge_count()), (2, 1));
        for s in 0..100 {
            let t = generate_directed_tree(50, &mut rng(s));
            assert_eq!(t.edge_count(), 49);
            assert!(t.is_weakly_connected());
        }
    }

    #[test]
    fn pattern_respects_invariants() {
        let p = PatternParams { n_vertices: 4, n_edges: 6, n_vertex_labels: 2, n_edge_labels: 3 };
        for s in 0..200 {
            let pat = generate_pattern(&p, &mut rng(s)).unwrap();
            assert_eq!(pat.vertex_count(), 4);
            assert_eq!(pat.edge_count(), 6);
        }
    }

    #[test]
    fn infeasible_patterns_are_rejected() {
        let too_many_labels =
            PatternParams { n_vertices: 3, n_edges: 2, n_vertex_labels: 4, n_edge_labels: 1 };
        assert!(matches!(
            generate_pattern(&too_many_labels, &mut rng(0)),
            Err(GeneratorError::InfeasibleParams(_))
        ));
        let disconnected =
            PatternParams { n_vertices: 3, n_edges: 1, n_vertex_labels: 1, n_edge_labels: 1 };
        assert!(generate_pattern(&disconnected, &mut rng(0)).is_err());
    }

    #[test]
    fn forced_tree_pattern() {
        let p = PatternParams { n_vertices: 3, n_edges: 2, n_vertex_labels: 1, n_edge_labels: 1 };
        let pat = generate_pattern(&p, &mut rng(7)).unwrap();
        assert_eq!(pat.edge_count(), 2);
        assert!(pat.edges().iter().all(|e| e.label == 0));
    }

    #[test]
    fn nec_distinct_labels_distinct_classes() {
        let p = PatternParams { n_vertices: 4, n_edges: 3, n_vertex_labels: 4, n_edge_labels: 1 };
        let pat = generate_pattern(&p, &mut rng(3)).unwrap();
        let nec = build_nec_tree(&pat);
        assert_eq!(nec.class_count, 4);
    }

    #[test]
    fn nec_cycle_symmetry_one_class() {
        let g = Graph::new(
            vec![(0, 0), (1, 0), (2, 0)],
            vec![
                Edge { src: 0, dst: 1, label: 0 },
                Edge { src: 1, dst: 2, label: 0 },
                Edge { src: 2, dst: 0, label: 0 },
            ],
            1,
            1,
        )
        .unwrap();
        let nec = build_nec_tree(&g);
        assert_eq!(nec.class_count, 1);
        assert_eq!(nec.signatures, [(0, 0, 0)].into_iter().collect());
        assert_eq!(nec.class_degrees, vec![(1, 1)]);
    }

    #[test]
    fn component_sizes_sum_and_concentrate() {
        let mut within = 0;
        for s in 0..1000 {
            let sizes = sample_component_sizes_with_count(64, 512.0, 4, &mut rng(s));
            assert_eq!(sizes.iter().sum::<u32>(), 64);
            assert!(sizes.iter().all(|&s| s >= 1));
            let (mn, mx) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            if mx - mn <= 8 {
                within += 1;
            }
        }
        assert!(within >= 950, "only {within}/1000 draws within spread 8");
        assert_eq!(sample_component_sizes_with_count(10, 512.0, 1, &mut rng(0)), vec![10]);
    }

    fn small_pattern() -> Pattern {
        generate_pattern(
            &PatternParams { n_vertices: 3, n_edges: 3, n_vertex_labels: 2, n_edge_labels: 2 },
            &mut rng(11),
        )
        .unwrap()
    }

    fn default_params() -> GraphParams {
        GraphParams {
            n_vertices: 24,
            n_edges: 48,
            n_vertex_labels: 4,
            n_edge_labels: 4,
            alpha: 0.5,
            beta: 512.0,
            max_count: 1024,
            max_avg_degree: 4.0,
            max_retries: 10,
        }
    }

    #[test]
    fn generated_count_matches_whole_graph_recount() {
        let pat = small_pattern();
        let gp = default_params();
        for s in 0..30 {
            let ex = generate_graph(&pat, &gp, s).unwrap();
            let recount = vf2_count(&pat, &ex.graph, &CountOptions::default()).unwrap();
            assert_eq!(ex.count, recount.count, "seed {s}");
            assert_eq!(ex.count as usize, ex.mappings.len());
            for m in &ex.mappings {
                assert!(verify_mapping(&pat, &ex.graph, m).unwrap());
            }
        }
    }

    #[test]
    fn cross_component_edges_avoid_pattern_signatures() {
        let pat = small_pattern();
        let gp = default_params();
        let nec = build_nec_tree(&pat);
        for s in 100..120 {
            let ex = generate_graph(&pat, &gp, s).unwrap();
            let comp_of: HashMap<VertexId, usize> = ex
                .component_vertices
                .iter()
                .enumerate()
                .flat_map(|(i, vs)| vs.iter().map(move |&v| (v, i)))
                .collect();
            let labels: HashMap<VertexId, VertexLabel> =
                ex.graph.vertices().iter().copied().collect();
            for e in ex.graph.edges() {
                if comp_of[&e.src] != comp_of[&e.dst] {
                    let sig = (labels[&e.src], e.label, labels[&e.dst]);
                    assert!(!nec.signatures.contains(&sig), "cross edge with pattern signature");
                }
            }
        }
    }

    #[test]
    fn alpha_one_usually_embeds_pattern() {
        let pat = small_pattern();
        let gp = GraphParams { alpha: 1.0, ..default_params() };
        let mut nonzero = 0;
        for s in 0..50 {
            let ex = generate_graph(&pat, &gp, 1000 + s).unwrap();
            if ex.count > 0 {
                nonzero += 1;
            }
        }
        assert!(nonzero >= 45, "only {nonzero}/50 examples had a match");
    }

    #[test]
    fn generation_is_reproducible() {
        let pat = small_pattern();
        let gp = default_params();
        let a = generate_graph(&pat, &gp, 42).unwrap();
        let b = generate_graph(&pat, &gp, 42).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.count, b.count);
    }

    #[test]
    fn avg_degree_cap_enforced() {
        let gp = GraphParams { n_edges: 200, ..default_params() };
        assert!(matches!(
            generate_graph(&small_pattern(), &gp, 0),
            Err(GeneratorError::InfeasibleParams(_))
        ));
    }
}
