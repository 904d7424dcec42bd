//! Ground-truth counting engines.
//!
//! [`count_brute_force`] enumerates every injective assignment of pattern
//! vertices to graph vertices and keeps those that verify, which makes it an
//! oracle that shares no pruning logic with [`vf2_count`]. The VF2 counter
//! extends partial mappings one pattern vertex at a time, pruning on vertex
//! labels, edge-label-compatible connectivity to already-mapped vertices and
//! directed-degree feasibility.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::graph::{verify_mapping, EdgeLabel, Graph, IsoMapping, VertexId};

#[derive(Debug, Error)]
pub enum CountError {
    #[error("graph has {got} vertices, brute force guard is {guard}")]
    SizeGuardExceeded { got: usize, guard: usize },
    #[error("count timed out after {0:?} ({1} nodes expanded)")]
    Timeout(Duration, u64),
}

#[derive(Debug, Clone)]
pub struct CountOptions {
    pub record_mappings: bool,
    pub timeout: Option<Duration>,
    /// Brute force refuses graphs larger than this unless overridden.
    pub brute_force_guard: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            record_mappings: false,
            timeout: None,
            brute_force_guard: 12,
        }
    }
}

impl CountOptions {
    pub fn with_mappings() -> Self {
        CountOptions {
            record_mappings: true,
            ..CountOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CountResult {
    pub count: u64,
    pub mappings: Option<Vec<IsoMapping>>,
    pub elapsed: Duration,
    pub nodes_expanded: u64,
}

/// Enumerates all injective assignments of pattern vertices to graph
/// vertices and counts the ones accepted by [`verify_mapping`]. Exact and
/// deliberately naive.
pub fn count_brute_force(
    pattern: &Graph,
    graph: &Graph,
    opts: &CountOptions,
) -> Result<CountResult, CountError> {
    let start = Instant::now();
    if graph.vertex_count() > opts.brute_force_guard {
        return Err(CountError::SizeGuardExceeded {
            got: graph.vertex_count(),
            guard: opts.brute_force_guard,
        });
    }
    let p_ids: Vec<VertexId> = pattern.vertices().iter().map(|&(id, _)| id).collect();
    let g_ids: Vec<VertexId> = graph.vertices().iter().map(|&(id, _)| id).collect();
    let mut result = CountResult {
        count: 0,
        mappings: opts.record_mappings.then(Vec::new),
        elapsed: Duration::ZERO,
        nodes_expanded: 0,
    };
    if p_ids.len() > g_ids.len() {
        result.elapsed = start.elapsed();
        return Ok(result);
    }

    let mut assignment: Vec<VertexId> = Vec::with_capacity(p_ids.len());
    let mut used = vec![false; g_ids.len()];
    enumerate_injections(
        pattern,
        graph,
        &p_ids,
        &g_ids,
        &mut assignment,
        &mut used,
        &mut result,
    );
    result.elapsed = start.elapsed();
    Ok(result)
}

fn enumerate_injections(
    pattern: &Graph,
    graph: &Graph,
    p_ids: &[VertexId],
    g_ids: &[VertexId],
    assignment: &mut Vec<VertexId>,
    used: &mut [bool],
    result: &mut CountResult,
) {
    if assignment.len() == p_ids.len() {
        let mapping = IsoMapping::new(
            assignment
                .iter()
                .zip(p_ids.iter())
                .map(|(&g, &p)| (g, p))
                .collect(),
        );
        if verify_mapping(pattern, graph, &mapping).unwrap_or(false) {
            result.count += 1;
            if let Some(ms) = result.mappings.as_mut() {
                ms.push(mapping);
            }
        }
        return;
    }
    for gi in 0..g_ids.len() {
        if used[gi] {
            continue;
        }
        used[gi] = true;
        assignment.push(g_ids[gi]);
        result.nodes_expanded += 1;
        enumerate_injections(pattern, graph, p_ids, g_ids, assignment, used, result);
        assignment.pop();
        used[gi] = false;
    }
}

/// Index over one graph used by the VF2 search: positional adjacency,
/// degrees and a triple set for O(1) edge checks.
struct SearchIndex {
    labels: Vec<u32>,
    ids: Vec<VertexId>,
    out_adj: Vec<Vec<(usize, EdgeLabel)>>,
    in_adj: Vec<Vec<(usize, EdgeLabel)>>,
    out_deg: Vec<usize>,
    in_deg: Vec<usize>,
    triples: HashSet<(usize, usize, EdgeLabel)>,
}

impl SearchIndex {
    fn build(g: &Graph) -> Self {
        let n = g.vertex_count();
        let index: HashMap<VertexId, usize> = g.index_of_ids();
        let labels = g.vertices().iter().map(|&(_, l)| l).collect();
        let ids = g.vertices().iter().map(|&(id, _)| id).collect();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut triples = HashSet::with_capacity(g.edge_count());
        for e in g.edges() {
            let (s, d) = (index[&e.src], index[&e.dst]);
            out_adj[s].push((d, e.label));
            in_adj[d].push((s, e.label));
            triples.insert((s, d, e.label));
        }
        let out_deg = out_adj.iter().map(Vec::len).collect();
        let in_deg = in_adj.iter().map(Vec::len).collect();
        SearchIndex {
            labels,
            ids,
            out_adj,
            in_adj,
            out_deg,
            in_deg,
            triples,
        }
    }
}

struct Vf2State<'a> {
    pat: &'a SearchIndex,
    grf: &'a SearchIndex,
    /// Pattern positions in matching order: descending total degree, ties by id.
    order: Vec<usize>,
    mapping: Vec<usize>,
    used: Vec<bool>,
    record: bool,
    deadline: Option<(Instant, Duration)>,
    result: CountResult,
}

const UNMAPPED: usize = usize::MAX;

impl Vf2State<'_> {
    fn run(&mut self) -> Result<(), CountError> {
        self.extend(0)
    }

    fn extend(&mut self, depth: usize) -> Result<(), CountError> {
        if depth == self.order.len() {
            self.result.count += 1;
            if self.record {
                let pairs = self
                    .mapping
                    .iter()
                    .enumerate()
                    .map(|(p, &g)| (self.grf.ids[g], self.pat.ids[p]))
                    .collect();
                self.result
                    .mappings
                    .get_or_insert_with(Vec::new)
                    .push(IsoMapping::new(pairs));
            }
            return Ok(());
        }
        let pu = self.order[depth];
        for gv in 0..self.grf.labels.len() {
            if self.used[gv] || !self.feasible(pu, gv) {
                continue;
            }
            self.mapping[pu] = gv;
            self.used[gv] = true;
            self.result.nodes_expanded += 1;
            if self.result.nodes_expanded % 4096 == 0 {
                if let Some((start, limit)) = self.deadline {
                    if start.elapsed() > limit {
                        return Err(CountError::Timeout(limit, self.result.nodes_expanded));
                    }
                }
            }
            let r = self.extend(depth + 1);
            self.mapping[pu] = UNMAPPED;
            self.used[gv] = false;
            r?;
        }
        Ok(())
    }

    fn feasible(&self, pu: usize, gv: usize) -> bool {
        if self.pat.labels[pu] != self.grf.labels[gv] {
            return false;
        }
        if self.grf.out_deg[gv] < self.pat.out_deg[pu] || self.grf.in_deg[gv] < self.pat.in_deg[pu]
        {
            return false;
        }
        // every pattern edge touching an already-mapped vertex must exist in
        // the graph with the same direction and label
        for &(pw, y) in &self.pat.out_adj[pu] {
            let gw = self.mapping[pw];
            if gw != UNMAPPED && !self.grf.triples.contains(&(gv, gw, y)) {
                return false;
            }
        }
        for &(pw, y) in &self.pat.in_adj[pu] {
            let gw = self.mapping[pw];
            if gw != UNMAPPED && !self.grf.triples.contains(&(gw, gv, y)) {
                return false;
            }
        }
        // self-loops map to self-loops
        for &(pw, y) in &self.pat.out_adj[pu] {
            if pw == pu && !self.grf.triples.contains(&(gv, gv, y)) {
                return false;
            }
        }
        true
    }
}

/// Exact VF2-style backtracking count. Equal to [`count_brute_force`] on
/// every instance where both run.
pub fn vf2_count(pattern: &Graph, graph: &Graph, opts: &CountOptions) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let pat = SearchIndex::build(pattern);
    let grf = SearchIndex::build(graph);
    let mut result = CountResult {
        count: 0,
        mappings: opts.record_mappings.then(Vec::new),
        elapsed: Duration::ZERO,
        nodes_expanded: 0,
    };
    if pat.labels.len() > grf.labels.len() {
        result.elapsed = start.elapsed();
        return Ok(result);
    }

    let mut order: Vec<usize> = (0..pat.labels.len()).collect();
    order.sort_by_key(|&p| {
        (
            std::cmp::Reverse(pat.out_deg[p] + pat.in_deg[p]),
            pat.ids[p],
        )
    });

    let n_pat = pat.labels.len();
    let n_grf = grf.labels.len();
    let mut state = Vf2State {
        pat: &pat,
        grf: &grf,
        order,
        mapping: vec![UNMAPPED; n_pat],
        used: vec![false; n_grf],
        record: opts.record_mappings,
        deadline: opts.timeout.map(|t| (start, t)),
        result,
    };
    state.run()?;
    let mut result = state.result;
    result.elapsed = start.elapsed();
    Ok(result)
}

/// Sums [`vf2_count`] over pairwise disjoint components; mappings are
/// concatenated in component order.
pub fn per_component_count(
    components: &[Graph],
    pattern: &Graph,
    opts: &CountOptions,
) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let mut total = CountResult {
        count: 0,
        mappings: opts.record_mappings.then(Vec::new),
        elapsed: Duration::ZERO,
        nodes_expanded: 0,
    };
    for c in components {
        let r = vf2_count(pattern, c, opts)?;
        total.count += r.count;
        total.nodes_expanded += r.nodes_expanded;
        if let (Some(acc), Some(ms)) = (total.mappings.as_mut(), r.mappings) {
            acc.extend(ms);
        }
    }
    total.elapsed = start.elapsed();
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use std::collections::HashMap;

    fn cycle3() -> Graph {
        Graph::new(
            vec![(0, 0), (1, 0), (2, 0)],
            vec![
                Edge { src: 0, dst: 1, label: 0 },
                Edge { src: 1, dst: 2, label: 0 },
                Edge { src: 2, dst: 0, label: 0 },
            ],
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn directed_cycle_has_three_rotations() {
        let r = count_brute_force(&cycle3(), &cycle3(), &CountOptions::default()).unwrap();
        assert_eq!(r.count, 3);
        let r = vf2_count(&cycle3(), &cycle3(), &CountOptions::default()).unwrap();
        assert_eq!(r.count, 3);
    }

    #[test]
    fn single_vertex_pattern_counts_label_matches() {
        let p = Graph::new(vec![(0, 1)], vec![], 2, 0).unwrap();
        let g = Graph::new(vec![(0, 1), (1, 0), (2, 1), (3, 0), (4, 0)], vec![], 2, 0).unwrap();
        assert_eq!(count_brute_force(&p, &g, &CountOptions::default()).unwrap().count, 2);
        assert_eq!(vf2_count(&p, &g, &CountOptions::default()).unwrap().count, 2);
    }

    #[test]
    fn pattern_larger_than_graph_counts_zero() {
        let p = Graph::new(vec![(0, 0), (1, 0)], vec![], 1, 0).unwrap();
        let g = Graph::new(vec![(0, 0)], vec![], 1, 0).unwrap();
        assert_eq!(count_brute_force(&p, &g, &CountOptions::default()).unwrap().count, 0);
        assert_eq!(vf2_count(&p, &g, &CountOptions::default()).unwrap().count, 0);
    }

    #[test]
    fn single_edge_pattern_in_complete_digraph() {
        // complete uniform digraph on 3 vertices has 6 edges, each an image
        let p = Graph::new(
            vec![(0, 0), (1, 0)],
            vec![Edge { src: 0, dst: 1, label: 0 }],
            1,
            1,
        )
        .unwrap();
        let mut edges = Vec::new();
        for a in 0..3u32 {
            for b in 0..3u32 {
                if a != b {
                    edges.push(Edge { src: a, dst: b, label: 0 });
                }
            }
        }
        let g = Graph::new(vec![(0, 0), (1, 0), (2, 0)], edges, 1, 1).unwrap();
        assert_eq!(vf2_count(&p, &g, &CountOptions::default()).unwrap().count, 6);
        assert_eq!(count_brute_force(&p, &g, &CountOptions::default()).unwrap().count, 6);
    }

    #[test]
    fn edgeless_pattern_counts_ordered_tuples() {
        // bijections are counted, not vertex subsets
        let p = Graph::new(vec![(0, 0), (1, 0)], vec![], 1, 0).unwrap();
        let g = Graph::new(vec![(0, 0), (1, 0), (2, 0)], vec![], 1, 0).unwrap();
        assert_eq!(vf2_count(&p, &g, &CountOptions::default()).unwrap().count, 6);
    }

    #[test]
    fn brute_force_guard_trips() {
        let p = Graph::new(vec![(0, 0)], vec![], 1, 0).unwrap();
        let g = Graph::new((0..13).map(|i| (i, 0)).collect(), vec![], 1, 0).unwrap();
        assert!(matches!(
            count_brute_force(&p, &g, &CountOptions::default()),
            Err(CountError::SizeGuardExceeded { .. })
        ));
        let opts = CountOptions {
            brute_force_guard: 20,
            ..CountOptions::default()
        };
        assert_eq!(count_brute_force(&p, &g, &opts).unwrap().count, 13);
    }

    #[test]
    fn mappings_verify_and_match_count() {
        let opts = CountOptions::with_mappings();
        let r = vf2_count(&cycle3(), &cycle3(), &opts).unwrap();
        let maps = r.mappings.unwrap();
        assert_eq!(maps.len() as u64, r.count);
        for m in &maps {
            assert!(verify_mapping(&cycle3(), &cycle3(), m).unwrap());
        }
    }

    #[test]
    fn per_component_sums_and_matches_merged() {
        let c1 = cycle3();
        let c2 = {
            let perm: HashMap<_, _> = [(0u32, 10u32), (1, 11), (2, 12)].into_iter().collect();
            cycle3().remap_vertex_ids(&perm).unwrap()
        };
        let r = per_component_count(&[c1.clone(), c2.clone()], &cycle3(), &CountOptions::default())
            .unwrap();
        assert_eq!(r.count, 6);

        let mut vertices = c1.vertices().to_vec();
        vertices.extend_from_slice(c2.vertices());
        let mut edges = c1.edges().to_vec();
        edges.extend_from_slice(c2.edges());
        let merged = Graph::new(vertices, edges, 1, 1).unwrap();
        assert_eq!(
            vf2_count(&cycle3(), &merged, &CountOptions::default()).unwrap().count,
            r.count
        );
    }

    #[test]
    fn self_loop_pattern_needs_self_loop() {
        let p = Graph::new(
            vec![(0, 0)],
            vec![Edge { src: 0, dst: 0, label: 0 }],
            1,
            1,
        )
        .unwrap();
        let g_without = cycle3();
        assert_eq!(vf2_count(&p, &g_without, &CountOptions::default()).unwrap().count, 0);
        let g_with = Graph::new(
            vec![(0, 0), (1, 0)],
            vec![Edge { src: 0, dst: 0, label: 0 }],
            1,
            1,
        )
        .unwrap();
        assert_eq!(vf2_count(&p, &g_with, &CountOptions::default()).unwrap().count, 1);
        assert_eq!(
            count_brute_force(&p, &g_with, &CountOptions::default()).unwrap().count,
            1
        );
    }
}
