//! Model-ready encodings of one pattern/graph pair.

use std::sync::Arc;

use crate::codec::{
    minimum_code, multi_hot_encode, vertex_features, CodecError, EncodingSpec,
};
use crate::graph::Graph;
use crate::numkit::tape::SparseMat;
use crate::numkit::Tensor;

use super::{Aggregator, MIN_SEQ_LEN};

/// One side of the sequence view: the encoded minimum code padded to the
/// minimum viable convolution length, plus its real row count.
#[derive(Debug, Clone)]
pub struct SeqSide {
    pub enc: Tensor,
    pub len: usize,
}

/// One side of the graph view: vertex label features plus per-relation
/// aggregation matrices (already normalized for the chosen aggregator).
#[derive(Debug, Clone)]
pub struct GraphSide {
    pub feats: Tensor,
    /// present relations only: (label, matrix)
    pub adjacency: Vec<(usize, Arc<SparseMat>)>,
    pub len: usize,
}

/// Everything a model forward pass needs for one example.
#[derive(Debug, Clone)]
pub struct EncodedPair {
    pub seq: Option<(SeqSide, SeqSide)>,
    pub graph: Option<(GraphSide, GraphSide)>,
    /// (|V_P|, |E_P|, |V_G|, |E_G|)
    pub sizes: [f64; 4],
    pub target: f64,
}

pub fn encode_seq_side(g: &Graph, spec: &EncodingSpec) -> Result<SeqSide, CodecError> {
    encode_seq_side_padded(g, spec, 0)
}

/// As [`encode_seq_side`] with at least `extra_pad` additional zero rows,
/// used by the padding-inertness tests.
pub fn encode_seq_side_padded(
    g: &Graph,
    spec: &EncodingSpec,
    extra_pad: usize,
) -> Result<SeqSide, CodecError> {
    let code = minimum_code(g);
    let enc = multi_hot_encode(&code, spec)?;
    let len = enc.rows.max(MIN_SEQ_LEN);
    let rows = len + extra_pad;
    let mut data = vec![0.0; rows * enc.width];
    data[..enc.data.len()].copy_from_slice(&enc.data);
    Ok(SeqSide {
        enc: Tensor::new(vec![rows, enc.width], data).expect("finite encoding"),
        len,
    })
}

pub fn encode_graph_side(
    g: &Graph,
    spec: &EncodingSpec,
    aggregator: Aggregator,
) -> Result<GraphSide, CodecError> {
    encode_graph_side_padded(g, spec, aggregator, 0)
}

/// As [`encode_graph_side`] with `extra_pad` isolated zero vertices
/// appended.
pub fn encode_graph_side_padded(
    g: &Graph,
    spec: &EncodingSpec,
    aggregator: Aggregator,
    extra_pad: usize,
) -> Result<GraphSide, CodecError> {
    let m = vertex_features(g, spec)?;
    let n = m.rows + extra_pad;
    let mut data = vec![0.0; n * m.width];
    data[..m.data.len()].copy_from_slice(&m.data);

    let mut adjacency = Vec::new();
    for (label, edges) in m.adjacency.iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(src, dst) in edges {
            rows[dst].push((src, 1.0));
        }
        if aggregator == Aggregator::Mean {
            for row in rows.iter_mut() {
                let deg = row.len() as f64;
                for e in row.iter_mut() {
                    e.1 = 1.0 / deg;
                }
            }
        }
        adjacency.push((label, Arc::new(SparseMat::from_rows(n, n, &rows))));
    }
    Ok(GraphSide {
        feats: Tensor::new(vec![n, m.width], data).expect("finite features"),
        adjacency,
        len: m.rows,
    })
}

pub fn sizes_of(pattern: &Graph, graph: &Graph) -> [f64; 4] {
    [
        pattern.vertex_count() as f64,
        pattern.edge_count() as f64,
        graph.vertex_count() as f64,
        graph.edge_count() as f64,
    ]
}

/// Encodes the view the model's representation actually consumes. The
/// sequence view encodes each side under its own spec; the graph view uses
/// the graph spec for both sides so the feature widths and relation
/// alphabets line up.
pub fn encode_pair(
    pattern: &Graph,
    graph: &Graph,
    pattern_spec: &EncodingSpec,
    graph_spec: &EncodingSpec,
    config: &super::ModelConfig,
    target: f64,
) -> Result<EncodedPair, CodecError> {
    let sizes = sizes_of(pattern, graph);
    match config.representation {
        super::Representation::Cnn => Ok(EncodedPair {
            seq: Some((
                encode_seq_side(pattern, pattern_spec)?,
                encode_seq_side(graph, graph_spec)?,
            )),
            graph: None,
            sizes,
            target,
        }),
        _ => {
            let agg = config.aggregator();
            Ok(EncodedPair {
                seq: None,
                graph: Some((
                    encode_graph_side(pattern, graph_spec, agg)?,
                    encode_graph_side(graph, graph_spec, agg)?,
                )),
                sizes,
                target,
            })
        }
    }
}
