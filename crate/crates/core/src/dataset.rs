//! Dataset files, generation configs and the generation driver.
//!
//! A dataset directory holds `manifest.json`, `patterns.jsonl`,
//! `graphs.jsonl` and one `pairs_<split>.jsonl` per split. All files are
//! line-delimited JSON, UTF-8 with LF newlines, and byte-stable for a given
//! generator seed.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::EncodingSpec;
use crate::count::{vf2_count, CountOptions};
use crate::generator::{
    generate_graph, generate_pattern, GeneratedExample, GeneratorError, GraphParams,
    PatternParams,
};
use crate::graph::{Edge, Graph, GraphError, IsoMapping, Pattern, VertexId};
use crate::models::encode::{encode_pair, EncodedPair};
use crate::models::{Interaction, ModelConfig, Representation};
use crate::rng::stream;
use crate::trainer::PairMeta;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("pair references missing {kind} id {id}")]
    MissingReference { kind: &'static str, id: u32 },
    #[error("io error on {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("pair ({pattern_id}, {graph_id}) recorded count {recorded} but recount found {actual}")]
    VerifyFailed { pattern_id: u32, graph_id: u32, recorded: u64, actual: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |e| DatasetError::Io(path.to_path_buf(), e)
}

// ---------------------------------------------------------------------------
// records

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRecord {
    id: u32,
    vertices: Vec<(u32, u32)>,
    edges: Vec<(u32, u32, u32)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertex_labels: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_labels: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub pattern_id: u32,
    pub graph_id: u32,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mappings: Option<Vec<Vec<(VertexId, VertexId)>>>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: String,
    pub pairs_file: String,
}

/// Dataset-level metadata: encoding maxima shared by every consumer plus the
/// file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub base: u32,
    pub pattern_max_vertices: u32,
    pub pattern_vertex_labels: u32,
    pub pattern_edge_labels: u32,
    pub graph_max_vertices: u32,
    pub graph_vertex_labels: u32,
    pub graph_edge_labels: u32,
    pub pattern_file: String,
    pub graph_file: String,
    pub splits: Vec<SplitEntry>,
}

impl DatasetManifest {
    pub fn pattern_spec(&self) -> EncodingSpec {
        EncodingSpec::new(
            self.base,
            self.pattern_max_vertices,
            self.pattern_vertex_labels,
            self.pattern_edge_labels,
        )
    }

    pub fn graph_spec(&self) -> EncodingSpec {
        EncodingSpec::new(
            self.base,
            self.graph_max_vertices,
            self.graph_vertex_labels,
            self.graph_edge_labels,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub patterns: Vec<(u32, Pattern)>,
    pub graphs: Vec<(u32, Graph)>,
    pub splits: HashMap<String, Vec<PairRecord>>,
}

impl Dataset {
    pub fn pattern_by_id(&self, id: u32) -> Option<&Pattern> {
        self.patterns.iter().find(|&&(pid, _)| pid == id).map(|(_, p)| p)
    }

    pub fn graph_by_id(&self, id: u32) -> Option<&Graph> {
        self.graphs.iter().find(|&&(gid, _)| gid == id).map(|(_, g)| g)
    }

    /// Re-verifies every pair's recorded count with a VF2 recount.
    pub fn verify(&self) -> Result<(), DatasetError> {
        for records in self.splits.values() {
            for r in records {
                let pattern = self
                    .pattern_by_id(r.pattern_id)
                    .ok_or(DatasetError::MissingReference { kind: "pattern", id: r.pattern_id })?;
                let graph = self
                    .graph_by_id(r.graph_id)
                    .ok_or(DatasetError::MissingReference { kind: "graph", id: r.graph_id })?;
                let actual = vf2_count(pattern, graph, &CountOptions::default())
                    .map_err(|e| DatasetError::Config(e.to_string()))?
                    .count;
                if actual != r.count {
                    return Err(DatasetError::VerifyFailed {
                        pattern_id: r.pattern_id,
                        graph_id: r.graph_id,
                        recorded: r.count,
                        actual,
                    });
                }
            }
        }
        Ok(())
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializable record");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let manifest_path = root.join("manifest.json");
    let manifest_json = serde_json::to_string_pretty(&ds.manifest).expect("manifest");
    fs::write(&manifest_path, manifest_json + "\n").map_err(io_err(&manifest_path))?;

    write_jsonl(
        &root.join(&ds.manifest.pattern_file),
        ds.patterns.iter().map(|(id, p)| GraphRecord {
            id: *id,
            vertices: p.vertices().to_vec(),
            edges: p.edges().iter().map(|e| (e.src, e.dst, e.label)).collect(),
            vertex_labels: Some(p.num_vertex_labels()),
            edge_labels: Some(p.num_edge_labels()),
        }),
    )?;
    write_jsonl(
        &root.join(&ds.manifest.graph_file),
        ds.graphs.iter().map(|(id, g)| GraphRecord {
            id: *id,
            vertices: g.vertices().to_vec(),
            edges: g.edges().iter().map(|e| (e.src, e.dst, e.label)).collect(),
            vertex_labels: Some(g.num_vertex_labels()),
            edge_labels: Some(g.num_edge_labels()),
        }),
    )?;
    for entry in &ds.manifest.splits {
        let records = ds.splits.get(&entry.split).cloned().unwrap_or_default();
        write_jsonl(&root.join(&entry.pairs_file), records.into_iter())?;
    }
    Ok(())
}

pub fn load_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let manifest_path = root.join("manifest.json");
    let manifest_text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&manifest_text).map_err(|e| DatasetError::Parse {
            path: manifest_path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?;

    let pattern_records: Vec<GraphRecord> = read_jsonl(&root.join(&manifest.pattern_file))?;
    let mut patterns = Vec::with_capacity(pattern_records.len());
    for r in pattern_records {
        let graph = Graph::new(
            r.vertices,
            r.edges.iter().map(|&(s, d, l)| Edge { src: s, dst: d, label: l }).collect(),
            r.vertex_labels.unwrap_or(manifest.pattern_vertex_labels),
            r.edge_labels.unwrap_or(manifest.pattern_edge_labels),
        )?;
        patterns.push((r.id, Pattern::new(graph)?));
    }
    let graph_records: Vec<GraphRecord> = read_jsonl(&root.join(&manifest.graph_file))?;
    let mut graphs = Vec::with_capacity(graph_records.len());
    for r in graph_records {
        let graph = Graph::new(
            r.vertices,
            r.edges.iter().map(|&(s, d, l)| Edge { src: s, dst: d, label: l }).collect(),
            r.vertex_labels.unwrap_or(manifest.graph_vertex_labels),
            r.edge_labels.unwrap_or(manifest.graph_edge_labels),
        )?;
        graphs.push((r.id, graph));
    }

    let pattern_ids: std::collections::HashSet<u32> = patterns.iter().map(|&(id, _)| id).collect();
    let graph_ids: std::collections::HashSet<u32> = graphs.iter().map(|&(id, _)| id).collect();
    let mut splits = HashMap::new();
    for entry in &manifest.splits {
        let records: Vec<PairRecord> = read_jsonl(&root.join(&entry.pairs_file))?;
        for r in &records {
            if !pattern_ids.contains(&r.pattern_id) {
                return Err(DatasetError::MissingReference { kind: "pattern", id: r.pattern_id });
            }
            if !graph_ids.contains(&r.graph_id) {
                return Err(DatasetError::MissingReference { kind: "graph", id: r.graph_id });
            }
        }
        splits.insert(entry.split.clone(), records);
    }
    Ok(Dataset { manifest, patterns, graphs, splits })
}

/// Standalone pattern file (same record format as a dataset's patterns).
pub fn write_patterns_file(path: &Path, patterns: &[(u32, Pattern)]) -> Result<(), DatasetError> {
    write_jsonl(
        path,
        patterns.iter().map(|(id, p)| GraphRecord {
            id: *id,
            vertices: p.vertices().to_vec(),
            edges: p.edges().iter().map(|e| (e.src, e.dst, e.label)).collect(),
            vertex_labels: Some(p.num_vertex_labels()),
            edge_labels: Some(p.num_edge_labels()),
        }),
    )
}

pub fn read_patterns_file(path: &Path) -> Result<Vec<(u32, Pattern)>, DatasetError> {
    let records: Vec<GraphRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .map(|r| {
            let vl = r.vertex_labels.ok_or_else(|| DatasetError::Config(
                "pattern record lacks vertex_labels".into(),
            ))?;
            let el = r.edge_labels.ok_or_else(|| DatasetError::Config(
                "pattern record lacks edge_labels".into(),
            ))?;
            let graph = Graph::new(
                r.vertices,
                r.edges.iter().map(|&(s, d, l)| Edge { src: s, dst: d, label: l }).collect(),
                vl,
                el,
            )?;
            Ok((r.id, Pattern::new(graph)?))
        })
        .collect()
}

pub fn read_graphs_file(path: &Path) -> Result<Vec<(u32, Graph)>, DatasetError> {
    let records: Vec<GraphRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .map(|r| {
            let vl = r.vertex_labels.ok_or_else(|| {
                DatasetError::Config("graph record lacks vertex_labels".into())
            })?;
            let el = r
                .edge_labels
                .ok_or_else(|| DatasetError::Config("graph record lacks edge_labels".into()))?;
            let graph = Graph::new(
                r.vertices,
                r.edges.iter().map(|&(s, d, l)| Edge { src: s, dst: d, label: l }).collect(),
                vl,
                el,
            )?;
            Ok((r.id, graph))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// generation config

#[derive(Debug, Clone, Deserialize)]
pub struct PatternGrid {
    pub vertices: Vec<u32>,
    pub edges: Vec<u32>,
    pub vertex_labels: Vec<u32>,
    pub edge_labels: Vec<u32>,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GraphGrid {
    pub vertices: Vec<u32>,
    pub edges: Vec<u32>,
    pub vertex_labels: Vec<u32>,
    pub edge_labels: Vec<u32>,
    pub alpha: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Limits {
    pub max_count: u64,
    pub max_avg_degree: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    10
}

#[derive(Debug, Clone, Deserialize)]
pub struct SizeSection {
    pub pairs: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
}

/// Optional model/training defaults bundled with a dataset config.
#[derive(Debug, Clone, Deserialize, Default)]
pub struct ModelSection {
    pub representation: Option<String>,
    pub interaction: Option<String>,
    pub hidden: Option<usize>,
    pub memory_size: Option<usize>,
    pub steps: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub blocks: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GenConfig {
    pub name: String,
    pub pattern: PatternGrid,
    pub graph: GraphGrid,
    pub limits: Limits,
    pub size: SizeSection,
    #[serde(default)]
    pub model: ModelSection,
}

impl GenConfig {
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| DatasetError::Config(e.to_string()))
    }

    pub fn manifest_skeleton(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            base: 2,
            pattern_max_vertices: self.pattern.vertices.iter().copied().max().unwrap_or(1),
            pattern_vertex_labels: self.pattern.vertex_labels.iter().copied().max().unwrap_or(1),
            pattern_edge_labels: self.pattern.edge_labels.iter().copied().max().unwrap_or(1),
            graph_max_vertices: self.graph.vertices.iter().copied().max().unwrap_or(1),
            graph_vertex_labels: self.graph.vertex_labels.iter().copied().max().unwrap_or(1),
            graph_edge_labels: self.graph.edge_labels.iter().copied().max().unwrap_or(1),
            pattern_file: "patterns.jsonl".into(),
            graph_file: "graphs.jsonl".into(),
            splits: vec![
                SplitEntry { split: "train".into(), pairs_file: "pairs_train.jsonl".into() },
                SplitEntry { split: "dev".into(), pairs_file: "pairs_dev.jsonl".into() },
                SplitEntry { split: "test".into(), pairs_file: "pairs_test.jsonl".into() },
            ],
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, DatasetError> {
        let mut config = ModelConfig::default();
        let m = &self.model;
        if let Some(r) = &m.representation {
            config.representation = parse_representation(r)?;
        }
        if let Some(i) = &m.interaction {
            config.interaction = parse_interaction(i)?;
        }
        if let Some(v) = m.hidden {
            config.hidden = v;
        }
        if let Some(v) = m.memory_size {
            config.memory_size = v;
        }
        if let Some(v) = m.steps {
            config.steps = v;
        }
        if let Some(v) = m.heads {
            config.heads = v;
        }
        if let Some(v) = m.layers {
            config.layers = v;
        }
        if let Some(v) = m.blocks {
            config.blocks = v;
        }
        if let Some(v) = m.dropout {
            config.dropout = v;
        }
        Ok(config)
    }
}

pub fn parse_representation(s: &str) -> Result<Representation, DatasetError> {
    match s.to_ascii_lowercase().as_str() {
        "cnn" => Ok(Representation::Cnn),
        "rgcn" => Ok(Representation::Rgcn),
        "rgin" => Ok(Representation::Rgin),
        other => Err(DatasetError::Config(format!("unknown representation {other}"))),
    }
}

pub fn parse_interaction(s: &str) -> Result<Interaction, DatasetError> {
    match s.to_ascii_lowercase().as_str() {
        "sumpool" | "sum" => Ok(Interaction::SumPool),
        "meanpool" | "mean" => Ok(Interaction::MeanPool),
        "maxpool" | "max" => Ok(Interaction::MaxPool),
        "memattn" => Ok(Interaction::MemAttn),
        "diamnet" => Ok(Interaction::DiamNet),
        other => Err(DatasetError::Config(format!("unknown interaction {other}"))),
    }
}

// ---------------------------------------------------------------------------
// generation driver

fn pick<T: Copy>(xs: &[T], rng: &mut rand_chacha::ChaCha8Rng) -> T {
    *xs.choose(rng).expect("non-empty grid")
}

/// Samples a feasible pattern-parameter grid point.
pub fn sample_pattern_params(
    cfg: &GenConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<PatternParams, DatasetError> {
    for _ in 0..1000 {
        let p = PatternParams {
            n_vertices: pick(&cfg.pattern.vertices, rng),
            n_edges: pick(&cfg.pattern.edges, rng),
            n_vertex_labels: pick(&cfg.pattern.vertex_labels, rng),
            n_edge_labels: pick(&cfg.pattern.edge_labels, rng),
        };
        let capacity = p.n_vertices as u64 * (p.n_vertices.saturating_sub(1)) as u64
            * p.n_edge_labels as u64;
        if p.n_edges + 1 >= p.n_vertices
            && p.n_vertex_labels <= p.n_vertices
            && p.n_edge_labels <= p.n_edges
            && p.n_edges as u64 <= capacity
        {
            return Ok(p);
        }
    }
    Err(DatasetError::Config("pattern grid has no feasible point".into()))
}

/// Samples a feasible graph-parameter grid point whose label alphabets can
/// host the given pattern.
pub fn sample_graph_params(
    cfg: &GenConfig,
    pattern: &Pattern,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<GraphParams, DatasetError> {
    for _ in 0..1000 {
        let gp = GraphParams {
            n_vertices: pick(&cfg.graph.vertices, rng),
            n_edges: pick(&cfg.graph.edges, rng),
            n_vertex_labels: pick(&cfg.graph.vertex_labels, rng),
            n_edge_labels: pick(&cfg.graph.edge_labels, rng),
            alpha: pick(&cfg.graph.alpha, rng),
            beta: cfg.graph.beta,
            max_count: cfg.limits.max_count,
            max_avg_degree: cfg.limits.max_avg_degree,
            max_retries: cfg.limits.max_retries,
        };
        // n_v <= n_e <= 4 n_v keeps the density in the published range
        let degree_ok = gp.n_edges >= gp.n_vertices
            && gp.n_edges as f64 / gp.n_vertices as f64 <= gp.max_avg_degree;
        let labels_ok = gp.n_vertex_labels >= pattern.num_vertex_labels()
            && gp.n_edge_labels >= pattern.num_edge_labels();
        let size_ok = gp.n_vertices >= pattern.vertex_count() as u32;
        if degree_ok && labels_ok && size_ok {
            return Ok(gp);
        }
    }
    Err(DatasetError::Config("graph grid has no feasible point".into()))
}

pub fn generate_patterns(
    cfg: &GenConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Pattern>, DatasetError> {
    (0..count)
        .map(|i| {
            let rng = &mut stream(seed, "pattern", i as u64);
            for attempt in 0..50u64 {
                let params = sample_pattern_params(cfg, rng)?;
                let r = generate_pattern(
                    &params,
                    &mut stream(seed, "pattern-gen", (i as u64) << 8 | attempt),
                );
                if let Ok(p) = r {
                    return Ok(p);
                }
            }
            Err(DatasetError::Config(format!("pattern {i}: generation kept failing")))
        })
        .collect()
}

/// One generated pair plus its provenance.
pub struct GeneratedPair {
    pub pattern_index: usize,
    pub example: GeneratedExample,
}

/// Generates `count` examples in parallel across the worker pool. Each
/// example owns a seed stream derived from (seed, index), so the output is
/// identical regardless of the job count.
pub fn generate_pairs(
    cfg: &GenConfig,
    patterns: &[Pattern],
    count: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<GeneratedPair>, DatasetError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| DatasetError::Config(e.to_string()))?;
    pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let rng = &mut stream(seed, "pair", i as u64);
                for attempt in 0..20u64 {
                    let pattern_index = rng.gen_range(0..patterns.len());
                    let pattern = &patterns[pattern_index];
                    let gp = sample_graph_params(cfg, pattern, rng)?;
                    let pair_seed = stream(seed, "pair-seed", (i as u64) << 8 | attempt).gen();
                    match generate_graph(pattern, &gp, pair_seed) {
                        Ok(example) => return Ok(GeneratedPair { pattern_index, example }),
                        Err(GeneratorError::InfeasibleParams(_)) => continue,
                        Err(GeneratorError::CapExceededAfterRetries { .. }) => continue,
                        Err(GeneratorError::NoAdmissibleEdge) => continue,
                        Err(GeneratorError::BudgetInfeasible(_)) => continue,
                        Err(e) => return Err(DatasetError::Generator(e)),
                    }
                }
                Err(DatasetError::Config(format!("pair {i}: generation kept failing")))
            })
            .collect()
    })
}

/// Builds a full dataset (patterns, graphs, split pair records) from a
/// generation config. Pair indices are dealt into train/dev/test by the
/// configured fractions.
pub fn build_dataset(
    cfg: &GenConfig,
    seed: u64,
    jobs: usize,
    with_mappings: bool,
) -> Result<Dataset, DatasetError> {
    let patterns = generate_patterns(cfg, cfg.pattern.count, seed)?;
    let pairs = generate_pairs(cfg, &patterns, cfg.size.pairs, seed, jobs)?;

    let manifest = cfg.manifest_skeleton();
    let mut graphs = Vec::with_capacity(pairs.len());
    let mut records = Vec::with_capacity(pairs.len());
    for (i, gp) in pairs.into_iter().enumerate() {
        let graph_id = i as u32;
        records.push(PairRecord {
            pattern_id: gp.pattern_index as u32,
            graph_id,
            count: gp.example.count,
            mappings: with_mappings.then(|| {
                gp.example.mappings.iter().map(|m: &IsoMapping| m.pairs.clone()).collect()
            }),
            seed: gp.example.seed,
        });
        graphs.push((graph_id, gp.example.graph));
    }

    let n = records.len();
    let n_train = ((n as f64) * cfg.size.train_fraction).round() as usize;
    let n_dev = ((n as f64) * cfg.size.dev_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut stream(seed, "split", 0));
    let mut splits: HashMap<String, Vec<PairRecord>> = HashMap::new();
    for (rank, &i) in indices.iter().enumerate() {
        let split = if rank < n_train {
            "train"
        } else if rank < n_train + n_dev {
            "dev"
        } else {
            "test"
        };
        splits.entry(split.into()).or_default().push(records[i].clone());
    }
    for entry in &manifest.splits {
        splits.entry(entry.split.clone()).or_default();
    }

    Ok(Dataset {
        manifest,
        patterns: patterns.into_iter().enumerate().map(|(i, p)| (i as u32, p)).collect(),
        graphs,
        splits,
    })
}

// ---------------------------------------------------------------------------
// encoding a split for the trainer

fn distinct_labels(g: &Graph) -> (usize, usize) {
    let v: std::collections::HashSet<u32> = g.vertices().iter().map(|&(_, l)| l).collect();
    let e: std::collections::HashSet<u32> = g.edges().iter().map(|e| e.label).collect();
    (v.len(), e.len())
}

pub fn pair_meta(pattern: &Graph, graph: &Graph) -> PairMeta {
    let (x_p, y_p) = distinct_labels(pattern);
    let (x_g, y_g) = distinct_labels(graph);
    PairMeta {
        pattern_vertices: pattern.vertex_count(),
        pattern_edges: pattern.edge_count(),
        pattern_vertex_labels: x_p,
        pattern_edge_labels: y_p,
        graph_vertices: graph.vertex_count(),
        graph_edges: graph.edge_count(),
        graph_vertex_labels: x_g,
        graph_edge_labels: y_g,
    }
}

/// Encodes one split into model inputs. The encodings depend on the model's
/// view and aggregator, so the config is required.
pub fn encode_split(
    ds: &Dataset,
    split: &str,
    config: &ModelConfig,
) -> Result<(Vec<EncodedPair>, Vec<PairMeta>), DatasetError> {
    let records = ds
        .splits
        .get(split)
        .ok_or_else(|| DatasetError::Config(format!("no split named {split}")))?;
    let p_spec = ds.manifest.pattern_spec();
    let g_spec = ds.manifest.graph_spec();
    let mut pairs = Vec::with_capacity(records.len());
    let mut metas = Vec::with_capacity(records.len());
    for r in records {
        let pattern = ds
            .pattern_by_id(r.pattern_id)
            .ok_or(DatasetError::MissingReference { kind: "pattern", id: r.pattern_id })?;
        let graph = ds
            .graph_by_id(r.graph_id)
            .ok_or(DatasetError::MissingReference { kind: "graph", id: r.graph_id })?;
        let pair = encode_pair(pattern, graph, &p_spec, &g_spec, config, r.count as f64)
            .map_err(|e| DatasetError::Config(e.to_string()))?;
        pairs.push(pair);
        metas.push(pair_meta(pattern, graph));
    }
    Ok((pairs, metas))
}
