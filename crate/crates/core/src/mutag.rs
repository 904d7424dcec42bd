//! Ingestion of TU-format graph benchmarks (MUTAG layout): `DS_A.txt`
//! 1-based edge list, `DS_graph_indicator.txt`, `DS_node_labels.txt` and
//! `DS_edge_labels.txt`. Undirected source edges are expanded to symmetric
//! directed pairs and labels are densified from 0.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::count::{vf2_count, CountOptions};
use crate::dataset::{Dataset, DatasetManifest, PairRecord, SplitEntry};
use crate::generator::{generate_pattern, PatternParams};
use crate::graph::{Edge, Graph, GraphError, Pattern};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum MutagError {
    #[error("benchmark layout: missing or unreadable {0}")]
    LayoutError(String),
    #[error("{file} line {line}: {msg}")]
    BadLine { file: String, line: usize, msg: String },
    #[error("edge ({0}, {1}) spans two graphs")]
    InconsistentIndicator(u32, u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("pattern generation failed: {0}")]
    PatternGen(String),
}

fn read_lines(root: &Path, name: &str, suffix: &str) -> Result<Vec<String>, MutagError> {
    let path = root.join(format!("{name}_{suffix}.txt"));
    let text =
        fs::read_to_string(&path).map_err(|_| MutagError::LayoutError(path.display().to_string()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn parse_u32(file: &str, line_no: usize, s: &str) -> Result<u32, MutagError> {
    s.trim().parse::<i64>().map(|v| v.max(0) as u32).map_err(|e| MutagError::BadLine {
        file: file.into(),
        line: line_no + 1,
        msg: e.to_string(),
    })
}

/// Dense relabeling preserving first-appearance order.
fn densify(values: &[u32]) -> (Vec<u32>, u32) {
    let mut map: BTreeMap<u32, u32> = BTreeMap::new();
    for &v in values {
        let next = map.len() as u32;
        map.entry(v).or_insert(next);
    }
    (values.iter().map(|v| map[v]).collect(), map.len() as u32)
}

/// Reads the benchmark into per-graph directed multigraphs with dense
/// labels. Vertex ids inside each graph are 0-based positions.
pub fn import_tu_graphs(root: &Path, name: &str) -> Result<Vec<Graph>, MutagError> {
    let indicator_lines = read_lines(root, name, "graph_indicator")?;
    let node_label_lines = read_lines(root, name, "node_labels")?;
    let edge_lines = read_lines(root, name, "A")?;
    let edge_label_lines = read_lines(root, name, "edge_labels")?;

    let indicator: Vec<u32> = indicator_lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_u32("graph_indicator", i, l))
        .collect::<Result<_, _>>()?;
    let raw_node_labels: Vec<u32> = node_label_lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_u32("node_labels", i, l))
        .collect::<Result<_, _>>()?;
    let (node_labels, num_node_labels) = densify(&raw_node_labels);
    let raw_edge_labels: Vec<u32> = edge_label_lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_u32("edge_labels", i, l))
        .collect::<Result<_, _>>()?;
    let (edge_labels, num_edge_labels) = densify(&raw_edge_labels);

    if indicator.len() != node_labels.len() {
        return Err(MutagError::LayoutError(
            "graph_indicator and node_labels length mismatch".into(),
        ));
    }
    if edge_lines.len() != edge_labels.len() {
        return Err(MutagError::LayoutError("A and edge_labels length mismatch".into()));
    }

    let graph_count = indicator.iter().copied().max().unwrap_or(0) as usize;
    // global 1-based vertex id -> (graph index, local 0-based id)
    let mut local: HashMap<u32, (usize, u32)> = HashMap::new();
    let mut vertices: Vec<Vec<(u32, u32)>> = vec![Vec::new(); graph_count];
    for (i, (&g, &l)) in indicator.iter().zip(&node_labels).enumerate() {
        let gi = (g - 1) as usize;
        let lid = vertices[gi].len() as u32;
        vertices[gi].push((lid, l));
        local.insert(i as u32 + 1, (gi, lid));
    }

    let mut triples: Vec<HashSet<(u32, u32, u32)>> = vec![HashSet::new(); graph_count];
    let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); graph_count];
    let mut pending: Vec<Vec<(u32, u32, u32)>> = vec![Vec::new(); graph_count];
    for (i, line) in edge_lines.iter().enumerate() {
        let mut parts = line.split(',');
        let a = parse_u32("A", i, parts.next().unwrap_or(""))?;
        let b = parse_u32("A", i, parts.next().unwrap_or(""))?;
        let (ga, la) = *local
            .get(&a)
            .ok_or_else(|| MutagError::BadLine { file: "A".into(), line: i + 1, msg: format!("unknown vertex {a}") })?;
        let (gb, lb) = *local
            .get(&b)
            .ok_or_else(|| MutagError::BadLine { file: "A".into(), line: i + 1, msg: format!("unknown vertex {b}") })?;
        if ga != gb {
            return Err(MutagError::InconsistentIndicator(a, b));
        }
        let y = edge_labels[i];
        if triples[ga].insert((la, lb, y)) {
            edges[ga].push(Edge { src: la, dst: lb, label: y });
        }
        pending[ga].push((lb, la, y)); // reverse direction, added if absent
    }
    // symmetric expansion for sources that list each undirected edge once
    for gi in 0..graph_count {
        for &(s, d, y) in &pending[gi] {
            if triples[gi].insert((s, d, y)) {
                edges[gi].push(Edge { src: s, dst: d, label: y });
            }
        }
    }

    let mut graphs = Vec::with_capacity(graph_count);
    for gi in 0..graph_count {
        graphs.push(Graph::new(
            vertices[gi].clone(),
            edges[gi].clone(),
            num_node_labels,
            num_edge_labels,
        )?);
    }
    Ok(graphs)
}

/// Disjoint train/dev/test graph indices: dev and test get round(n/3) each
/// (63/63 of 188), train the remainder (62). Shuffled by seed.
pub fn split_graphs(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, "mutag-split", 0));
    let part = (n + 1) / 3;
    let train = idx[..n - 2 * part].to_vec();
    let dev = idx[n - 2 * part..n - part].to_vec();
    let test = idx[n - part..].to_vec();
    (train, dev, test)
}

/// Generates query patterns compatible with the imported label alphabets.
pub fn generate_query_patterns(
    count: usize,
    num_vertex_labels: u32,
    num_edge_labels: u32,
    seed: u64,
) -> Result<Vec<Pattern>, MutagError> {
    let mut patterns = Vec::with_capacity(count);
    for i in 0..count {
        let rng = &mut stream(seed, "mutag-pattern", i as u64);
        let mut made = None;
        for attempt in 0..100u64 {
            let n_vertices = rng.gen_range(3..=4u32);
            let n_edges = rng.gen_range(n_vertices - 1..=n_vertices + 2);
            let params = PatternParams {
                n_vertices,
                n_edges,
                n_vertex_labels: rng.gen_range(1..=num_vertex_labels.min(3)),
                n_edge_labels: rng.gen_range(1..=num_edge_labels.min(2)),
            };
            if let Ok(p) = generate_pattern(
                &params,
                &mut stream(seed, "mutag-pattern-gen", (i as u64) << 8 | attempt),
            ) {
                made = Some(p);
                break;
            }
        }
        patterns.push(made.ok_or_else(|| MutagError::PatternGen(format!("pattern {i}")))?);
    }
    Ok(patterns)
}

/// Full import: graphs, patterns, exact counts for every (pattern, graph)
/// pair, and graph-disjoint splits.
pub fn import_mutag_dataset(
    root: &Path,
    name: &str,
    pattern_count: usize,
    seed: u64,
) -> Result<Dataset, MutagError> {
    let graphs = import_tu_graphs(root, name)?;
    let nvl = graphs.first().map(Graph::num_vertex_labels).unwrap_or(1);
    let nel = graphs.first().map(Graph::num_edge_labels).unwrap_or(1);
    let patterns = generate_query_patterns(pattern_count, nvl, nel, seed)?;

    let (train, dev, test) = split_graphs(graphs.len(), seed);
    let mut splits: HashMap<String, Vec<PairRecord>> = HashMap::new();
    let opts = CountOptions::default();
    for (split, indices) in [("train", &train), ("dev", &dev), ("test", &test)] {
        let mut records = Vec::new();
        for &gi in indices {
            for (pi, p) in patterns.iter().enumerate() {
                let count = vf2_count(p, &graphs[gi], &opts)
                    .map_err(|e| MutagError::PatternGen(e.to_string()))?
                    .count;
                records.push(PairRecord {
                    pattern_id: pi as u32,
                    graph_id: gi as u32,
                    count,
                    mappings: None,
                    seed,
                });
            }
        }
        splits.insert(split.into(), records);
    }

    let max_graph_vertices =
        graphs.iter().map(Graph::vertex_count).max().unwrap_or(1).next_power_of_two() as u32;
    let max_pattern_vertices = patterns
        .iter()
        .map(|p| p.vertex_count())
        .max()
        .unwrap_or(1)
        .next_power_of_two() as u32;
    let manifest = DatasetManifest {
        name: name.to_string(),
        base: 2,
        pattern_max_vertices: max_pattern_vertices,
        pattern_vertex_labels: nvl,
        pattern_edge_labels: nel,
        graph_max_vertices: max_graph_vertices,
        graph_vertex_labels: nvl,
        graph_edge_labels: nel,
        pattern_file: "patterns.jsonl".into(),
        graph_file: "graphs.jsonl".into(),
        splits: vec![
            SplitEntry { split: "train".into(), pairs_file: "pairs_train.jsonl".into() },
            SplitEntry { split: "dev".into(), pairs_file: "pairs_dev.jsonl".into() },
            SplitEntry { split: "test".into(), pairs_file: "pairs_test.jsonl".into() },
        ],
    };
    Ok(Dataset {
        manifest,
        patterns: patterns.into_iter().enumerate().map(|(i, p)| (i as u32, p)).collect(),
        graphs: graphs.into_iter().enumerate().map(|(i, g)| (i as u32, g)).collect(),
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Two triangles with one undirected edge each listed in both directions
    /// plus one listed once, to exercise the symmetric expansion.
    fn write_fixture(dir: &Path) {
        let mut a = fs::File::create(dir.join("TINY_A.txt")).unwrap();
        // graph 1: vertices 1,2,3; graph 2: vertices 4,5
        writeln!(a, "1, 2").unwrap();
        writeln!(a, "2, 1").unwrap();
        writeln!(a, "2, 3").unwrap(); // reverse omitted on purpose
        writeln!(a, "4, 5").unwrap();
        writeln!(a, "5, 4").unwrap();
        let mut gi = fs::File::create(dir.join("TINY_graph_indicator.txt")).unwrap();
        for g in [1, 1, 1, 2, 2] {
            writeln!(gi, "{g}").unwrap();
        }
        let mut nl = fs::File::create(dir.join("TINY_node_labels.txt")).unwrap();
        for l in [7, 7, 9, 7, 9] {
            writeln!(nl, "{l}").unwrap();
        }
        let mut el = fs::File::create(dir.join("TINY_edge_labels.txt")).unwrap();
        for l in [3, 3, 5, 3, 3] {
            writeln!(el, "{l}").unwrap();
        }
    }

    #[test]
    fn imports_expands_and_densifies() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let graphs = import_tu_graphs(dir.path(), "TINY").unwrap();
        assert_eq!(graphs.len(), 2);
        // labels 7,9 -> 0,1; edge labels 3,5 -> 0,1
        assert_eq!(graphs[0].num_vertex_labels(), 2);
        assert_eq!(graphs[0].num_edge_labels(), 2);
        // graph 1: edges (0,1),(1,0) given, (1,2) expanded to (2,1) too
        assert_eq!(graphs[0].edge_count(), 4);
        let triples: std::collections::HashSet<_> =
            graphs[0].edges().iter().map(|e| (e.src, e.dst, e.label)).collect();
        assert!(triples.contains(&(2, 1, 1)), "missing expanded reverse edge");
        // graph 2 already symmetric: stays at 2 edges
        assert_eq!(graphs[1].edge_count(), 2);
    }

    #[test]
    fn split_sizes_match_rounding() {
        let (train, dev, test) = split_graphs(188, 0);
        assert_eq!((train.len(), dev.len(), test.len()), (62, 63, 63));
        let all: std::collections::HashSet<_> =
            train.iter().chain(&dev).chain(&test).collect();
        assert_eq!(all.len(), 188);
    }

    #[test]
    fn missing_file_is_layout_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            import_tu_graphs(dir.path(), "NOPE"),
            Err(MutagError::LayoutError(_))
        ));
    }

    #[test]
    fn full_import_counts_all_pairs() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let ds = import_mutag_dataset(dir.path(), "TINY", 4, 1).unwrap();
        assert_eq!(ds.patterns.len(), 4);
        let total: usize = ds.splits.values().map(Vec::len).sum();
        assert_eq!(total, 4 * 2);
        ds.verify().unwrap();
    }
}
