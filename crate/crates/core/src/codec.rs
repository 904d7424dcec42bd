//! Sequence-view and graph-view encodings.
//!
//! A graph becomes a list of edge 5-tuples `(u, v, X(u), y, X(v))`, ordered
//! lexicographically by `(u, v, y)` to form its minimum code. Ids and labels
//! are then expanded into B-nary digits, one one-hot group per digit, giving
//! fixed-width multi-hot rows. The graph view instead encodes vertex labels
//! per row plus per-edge-label adjacency lists.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeLabel, Graph, VertexId, VertexLabel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("value {value} does not fit the spec maximum {max} for {field}")]
    ValueExceedsSpec {
        field: &'static str,
        value: u32,
        max: u32,
    },
    #[error("incompatible encoding specs: {0}")]
    IncompatibleSpecs(String),
}

/// One edge as a 5-tuple: endpoint ids and the three labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTuple {
    pub u: VertexId,
    pub v: VertexId,
    pub xu: VertexLabel,
    pub y: EdgeLabel,
    pub xv: VertexLabel,
}

pub type Code = Vec<EdgeTuple>;

/// Orders tuples by source id, then target id, then edge label. Ties on all
/// three (possible only across graphs) fall back to the label fields so the
/// order stays total and deterministic.
pub fn compare_tuple(a: &EdgeTuple, b: &EdgeTuple) -> Ordering {
    (a.u, a.v, a.y, a.xu, a.xv).cmp(&(b.u, b.v, b.y, b.xu, b.xv))
}

/// Lexicographic extension of [`compare_tuple`]; a strict prefix orders
/// before any extension of it.
pub fn compare_code(a: &[EdgeTuple], b: &[EdgeTuple]) -> Ordering {
    for (ta, tb) in a.iter().zip(b.iter()) {
        match compare_tuple(ta, tb) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Reads each edge off as a 5-tuple, preserving the input edge order.
pub fn to_tuples(g: &Graph) -> Code {
    let labels: HashMap<VertexId, VertexLabel> = g.vertices().iter().copied().collect();
    g.edges()
        .iter()
        .map(|e| EdgeTuple {
            u: e.src,
            v: e.dst,
            xu: labels[&e.src],
            y: e.label,
            xv: labels[&e.dst],
        })
        .collect()
}

/// The graph's edge tuples sorted ascending, with vertex ids taken as given.
/// Deterministic and invariant to the input edge order.
pub fn minimum_code(g: &Graph) -> Code {
    let mut code = to_tuples(g);
    code.sort_by(compare_tuple);
    code
}

/// B-nary multi-hot layout: how many digits each id/label field needs and
/// the resulting row width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub base: u32,
    pub max_vertices: u32,
    pub max_vertex_labels: u32,
    pub max_edge_labels: u32,
}

/// Smallest k with base^k >= max, i.e. the digits needed for values in
/// [0, max). max = 1 needs zero digits.
fn digits_for(base: u32, max: u32) -> usize {
    let mut k = 0usize;
    let mut reach = 1u64;
    while reach < max as u64 {
        reach *= base as u64;
        k += 1;
    }
    k
}

impl EncodingSpec {
    pub fn new(base: u32, max_vertices: u32, max_vertex_labels: u32, max_edge_labels: u32) -> Self {
        assert!(base >= 2, "base must be at least 2");
        EncodingSpec {
            base,
            max_vertices,
            max_vertex_labels,
            max_edge_labels,
        }
    }

    pub fn id_digits(&self) -> usize {
        digits_for(self.base, self.max_vertices)
    }

    pub fn vertex_label_digits(&self) -> usize {
        digits_for(self.base, self.max_vertex_labels)
    }

    pub fn edge_label_digits(&self) -> usize {
        digits_for(self.base, self.max_edge_labels)
    }

    /// Width of one encoded tuple row:
    /// `B * (2*ceil(log_B maxV) + 2*ceil(log_B maxX) + ceil(log_B maxY))`.
    pub fn tuple_width(&self) -> usize {
        self.base as usize
            * (2 * self.id_digits() + 2 * self.vertex_label_digits() + self.edge_label_digits())
    }

    /// Width of one vertex feature row: `B * ceil(log_B maxX)`.
    pub fn vertex_feature_width(&self) -> usize {
        self.base as usize * self.vertex_label_digits()
    }

    /// True if vectors encoded under `self` can be widened to `other`.
    pub fn extends_to(&self, other: &EncodingSpec) -> bool {
        self.base == other.base
            && other.max_vertices >= self.max_vertices
            && other.max_vertex_labels >= self.max_vertex_labels
            && other.max_edge_labels >= self.max_edge_labels
    }
}

/// A 0/1 matrix of encoded tuple rows, edge-count x tuple_width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl EncodedSequence {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// Appends the B-nary one-hot digit groups of `value` (most significant
/// digit first) to `out`.
fn push_digits(out: &mut Vec<f64>, base: u32, digits: usize, value: u32) {
    for pos in (0..digits).rev() {
        let digit = (value as u64 / (base as u64).pow(pos as u32)) % base as u64;
        for b in 0..base as u64 {
            out.push(if b == digit { 1.0 } else { 0.0 });
        }
    }
}

fn read_digits(row: &[f64], offset: &mut usize, base: u32, digits: usize) -> u32 {
    let mut value = 0u64;
    for _ in 0..digits {
        let group = &row[*offset..*offset + base as usize];
        let digit = group
            .iter()
            .position(|&x| x == 1.0)
            .expect("malformed one-hot digit group") as u64;
        value = value * base as u64 + digit;
        *offset += base as usize;
    }
    value as u32
}

fn check_bounds(spec: &EncodingSpec, t: &EdgeTuple) -> Result<(), CodecError> {
    let checks: [(&'static str, u32, u32); 5] = [
        ("vertex id", t.u, spec.max_vertices),
        ("vertex id", t.v, spec.max_vertices),
        ("vertex label", t.xu, spec.max_vertex_labels),
        ("edge label", t.y, spec.max_edge_labels),
        ("vertex label", t.xv, spec.max_vertex_labels),
    ];
    for (field, value, max) in checks {
        if value >= max {
            return Err(CodecError::ValueExceedsSpec { field, value, max });
        }
    }
    Ok(())
}

/// Encodes a code into its multi-hot matrix: per row the digit groups of
/// (u, v, xu, y, xv) concatenated in that order.
pub fn multi_hot_encode(code: &[EdgeTuple], spec: &EncodingSpec) -> Result<EncodedSequence, CodecError> {
    let width = spec.tuple_width();
    let mut data = Vec::with_capacity(code.len() * width);
    for t in code {
        check_bounds(spec, t)?;
        push_digits(&mut data, spec.base, spec.id_digits(), t.u);
        push_digits(&mut data, spec.base, spec.id_digits(), t.v);
        push_digits(&mut data, spec.base, spec.vertex_label_digits(), t.xu);
        push_digits(&mut data, spec.base, spec.edge_label_digits(), t.y);
        push_digits(&mut data, spec.base, spec.vertex_label_digits(), t.xv);
    }
    Ok(EncodedSequence {
        rows: code.len(),
        width,
        data,
    })
}

/// Inverse of [`multi_hot_encode`], used by round-trip checks and spec
/// extension.
pub fn multi_hot_decode(seq: &EncodedSequence, spec: &EncodingSpec) -> Code {
    let mut code = Vec::with_capacity(seq.rows);
    for r in 0..seq.rows {
        let row = seq.row(r);
        let mut offset = 0;
        let u = read_digits(row, &mut offset, spec.base, spec.id_digits());
        let v = read_digits(row, &mut offset, spec.base, spec.id_digits());
        let xu = read_digits(row, &mut offset, spec.base, spec.vertex_label_digits());
        let y = read_digits(row, &mut offset, spec.base, spec.edge_label_digits());
        let xv = read_digits(row, &mut offset, spec.base, spec.vertex_label_digits());
        code.push(EdgeTuple { u, v, xu, y, xv });
    }
    code
}

/// Re-encodes a sequence under a wider spec. Each digit group is left-padded
/// with the encoding of leading zero digits, so decoded values are unchanged.
pub fn extend_encoding(
    seq: &EncodedSequence,
    old: &EncodingSpec,
    new: &EncodingSpec,
) -> Result<EncodedSequence, CodecError> {
    if !old.extends_to(new) {
        return Err(CodecError::IncompatibleSpecs(format!(
            "{old:?} does not extend to {new:?}"
        )));
    }
    let code = multi_hot_decode(seq, old);
    multi_hot_encode(&code, new)
}

/// Column map for widening parameters that consume encoded rows: entry `j`
/// is the column in the new layout holding what column `j` held in the old
/// layout. Fresh (leading-digit) columns are absent from the image.
pub fn extension_column_map(old: &EncodingSpec, new: &EncodingSpec) -> Result<Vec<usize>, CodecError> {
    if !old.extends_to(new) {
        return Err(CodecError::IncompatibleSpecs(format!(
            "{old:?} does not extend to {new:?}"
        )));
    }
    let b = old.base as usize;
    let groups = [
        (old.id_digits(), new.id_digits()),
        (old.id_digits(), new.id_digits()),
        (old.vertex_label_digits(), new.vertex_label_digits()),
        (old.edge_label_digits(), new.edge_label_digits()),
        (old.vertex_label_digits(), new.vertex_label_digits()),
    ];
    let mut map = Vec::with_capacity(old.tuple_width());
    let mut new_offset = 0usize;
    for (old_d, new_d) in groups {
        let pad = (new_d - old_d) * b;
        for j in 0..old_d * b {
            map.push(new_offset + pad + j);
        }
        new_offset += new_d * b;
    }
    Ok(map)
}

/// Same as [`extension_column_map`] but for the single vertex-label group of
/// the graph view.
pub fn vertex_feature_column_map(
    old: &EncodingSpec,
    new: &EncodingSpec,
) -> Result<Vec<usize>, CodecError> {
    if !old.extends_to(new) {
        return Err(CodecError::IncompatibleSpecs(format!(
            "{old:?} does not extend to {new:?}"
        )));
    }
    let b = old.base as usize;
    let pad = (new.vertex_label_digits() - old.vertex_label_digits()) * b;
    Ok((0..old.vertex_feature_width()).map(|j| pad + j).collect())
}

/// Graph-view encoding: one multi-hot label row per vertex plus adjacency
/// lists split by edge label. Vertex positions follow the graph's vertex
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexFeatureMatrix {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// adjacency[label] = list of (source position, target position)
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl VertexFeatureMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

pub fn vertex_features(g: &Graph, spec: &EncodingSpec) -> Result<VertexFeatureMatrix, CodecError> {
    let width = spec.vertex_feature_width();
    let mut data = Vec::with_capacity(g.vertex_count() * width);
    for &(_, label) in g.vertices() {
        if label >= spec.max_vertex_labels {
            return Err(CodecError::ValueExceedsSpec {
                field: "vertex label",
                value: label,
                max: spec.max_vertex_labels,
            });
        }
        push_digits(&mut data, spec.base, spec.vertex_label_digits(), label);
    }
    let index = g.index_of_ids();
    let mut adjacency = vec![Vec::new(); spec.max_edge_labels as usize];
    for e in g.edges() {
        if e.label >= spec.max_edge_labels {
            return Err(CodecError::ValueExceedsSpec {
                field: "edge label",
                value: e.label,
                max: spec.max_edge_labels,
            });
        }
        adjacency[e.label as usize].push((index[&e.src], index[&e.dst]));
    }
    Ok(VertexFeatureMatrix {
        rows: g.vertex_count(),
        width,
        data,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn labeled_graph() -> Graph {
        Graph::new(
            vec![(3, 1), (7, 0)],
            vec![Edge { src: 3, dst: 7, label: 2 }],
            2,
            3,
        )
        .unwrap()
    }

    #[test]
    fn tuples_read_off_triangle() {
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
        let code = to_tuples(&g);
        assert_eq!(
            code,
            vec![
                EdgeTuple { u: 0, v: 1, xu: 0, y: 0, xv: 0 },
                EdgeTuple { u: 1, v: 2, xu: 0, y: 0, xv: 0 },
                EdgeTuple { u: 2, v: 0, xu: 0, y: 0, xv: 0 },
            ]
        );
    }

    #[test]
    fn tuples_fill_labels() {
        assert_eq!(
            to_tuples(&labeled_graph()),
            vec![EdgeTuple { u: 3, v: 7, xu: 1, y: 2, xv: 0 }]
        );
    }

    #[test]
    fn empty_graph_yields_empty_code() {
        let g = Graph::new(vec![(0, 0)], vec![], 1, 1).unwrap();
        assert!(to_tuples(&g).is_empty());
    }

    #[test]
    fn tuple_order_follows_u_v_y() {
        let t = |u, v, y| EdgeTuple { u, v, xu: 0, y, xv: 0 };
        assert_eq!(compare_tuple(&t(0, 1, 0), &t(1, 0, 0)), Ordering::Less);
        assert_eq!(compare_tuple(&t(0, 1, 0), &t(0, 2, 0)), Ordering::Less);
        assert_eq!(compare_tuple(&t(0, 1, 0), &t(0, 1, 1)), Ordering::Less);
    }

    #[test]
    fn prefix_code_orders_before_extension() {
        let t = EdgeTuple { u: 0, v: 1, xu: 0, y: 0, xv: 0 };
        assert_eq!(compare_code(&[t], &[t, t]), Ordering::Less);
        assert_eq!(compare_code(&[t, t], &[t, t]), Ordering::Equal);
    }

    #[test]
    fn minimum_code_sorts_edges() {
        let g = Graph::new(
            vec![(0, 0), (1, 0), (2, 0)],
            vec![
                Edge { src: 2, dst: 0, label: 0 },
                Edge { src: 0, dst: 1, label: 0 },
                Edge { src: 1, dst: 2, label: 0 },
            ],
            1,
            1,
        )
        .unwrap();
        let code = minimum_code(&g);
        let endpoints: Vec<_> = code.iter().map(|t| (t.u, t.v)).collect();
        assert_eq!(endpoints, vec![(0, 1), (1, 2), (2, 0)]);
        // idempotent
        let again: Vec<_> = {
            let mut c = code.clone();
            c.sort_by(compare_tuple);
            c
        };
        assert_eq!(code, again);
    }

    #[test]
    fn width_formula_matches_closed_form() {
        let spec = EncodingSpec::new(2, 64, 16, 16);
        assert_eq!(spec.id_digits(), 6);
        assert_eq!(spec.vertex_label_digits(), 4);
        assert_eq!(spec.tuple_width(), 48);
    }

    #[test]
    fn zero_value_selects_zero_digits() {
        let spec = EncodingSpec::new(2, 4, 2, 2);
        let code = vec![EdgeTuple { u: 0, v: 0, xu: 0, y: 0, xv: 0 }];
        let seq = multi_hot_encode(&code, &spec).unwrap();
        // every one-hot group is [1, 0]
        for pair in seq.row(0).chunks(2) {
            assert_eq!(pair, &[1.0, 0.0]);
        }
    }

    #[test]
    fn six_in_three_binary_digits() {
        // digits of 6 are (1,1,0) most significant first -> [01][01][10]
        let spec = EncodingSpec::new(2, 8, 1, 1);
        let code = vec![EdgeTuple { u: 6, v: 0, xu: 0, y: 0, xv: 0 }];
        let seq = multi_hot_encode(&code, &spec).unwrap();
        assert_eq!(&seq.row(0)[..6], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn encode_rejects_out_of_spec_values() {
        let spec = EncodingSpec::new(2, 4, 2, 2);
        let code = vec![EdgeTuple { u: 4, v: 0, xu: 0, y: 0, xv: 0 }];
        assert!(matches!(
            multi_hot_encode(&code, &spec),
            Err(CodecError::ValueExceedsSpec { .. })
        ));
    }

    #[test]
    fn extension_preserves_decoded_values() {
        let old = EncodingSpec::new(2, 4, 2, 2);
        let new = EncodingSpec::new(2, 16, 2, 2);
        let code = vec![
            EdgeTuple { u: 3, v: 1, xu: 1, y: 0, xv: 0 },
            EdgeTuple { u: 0, v: 2, xu: 0, y: 1, xv: 1 },
        ];
        let seq = multi_hot_encode(&code, &old).unwrap();
        let wide = extend_encoding(&seq, &old, &new).unwrap();
        assert_eq!(wide.width, new.tuple_width());
        assert_eq!(multi_hot_decode(&wide, &new), code);
        // identity when specs are equal
        let same = extend_encoding(&seq, &old, &old).unwrap();
        assert_eq!(same, seq);
    }

    #[test]
    fn extension_rejects_narrowing_or_base_change() {
        let old = EncodingSpec::new(2, 16, 2, 2);
        let narrow = EncodingSpec::new(2, 4, 2, 2);
        let other_base = EncodingSpec::new(3, 16, 2, 2);
        let seq = multi_hot_encode(&[], &old).unwrap();
        assert!(extend_encoding(&seq, &old, &narrow).is_err());
        assert!(extend_encoding(&seq, &old, &other_base).is_err());
    }

    #[test]
    fn column_map_matches_reencode() {
        let old = EncodingSpec::new(2, 4, 2, 2);
        let new = EncodingSpec::new(2, 16, 4, 2);
        let map = extension_column_map(&old, &new).unwrap();
        let code = vec![EdgeTuple { u: 3, v: 2, xu: 1, y: 1, xv: 0 }];
        let seq = multi_hot_encode(&code, &old).unwrap();
        let wide = multi_hot_encode(&code, &new).unwrap();
        // every old column value appears at its mapped position
        for (j, &nj) in map.iter().enumerate() {
            assert_eq!(seq.row(0)[j], wide.row(0)[nj]);
        }
    }

    #[test]
    fn vertex_features_one_hot_rows() {
        let g = Graph::new(vec![(0, 0), (1, 1)], vec![], 2, 1).unwrap();
        let spec = EncodingSpec::new(2, 4, 2, 1);
        let m = vertex_features(&g, &spec).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn adjacency_partitions_edges_by_label() {
        let g = Graph::new(
            vec![(0, 0), (1, 0), (2, 0)],
            vec![
                Edge { src: 0, dst: 1, label: 0 },
                Edge { src: 1, dst: 2, label: 1 },
                Edge { src: 2, dst: 0, label: 1 },
            ],
            1,
            2,
        )
        .unwrap();
        let spec = EncodingSpec::new(2, 4, 1, 2);
        let m = vertex_features(&g, &spec).unwrap();
        let total: usize = m.adjacency.iter().map(|a| a.len()).sum();
        assert_eq!(total, g.edge_count());
        assert_eq!(m.adjacency[0], vec![(0, 1)]);
        assert_eq!(m.adjacency[1], vec![(1, 2), (2, 0)]);
    }

    #[test]
    fn base_two_minimizes_width() {
        for (max_v, max_x, max_y) in [(64, 16, 16), (512, 64, 64), (16, 16, 16), (8, 2, 2)] {
            let d2 = EncodingSpec::new(2, max_v, max_x, max_y).tuple_width();
            for b in 3..=16 {
                let db = EncodingSpec::new(b, max_v, max_x, max_y).tuple_width();
                assert!(d2 <= db, "B=2 width {d2} > B={b} width {db}");
            }
        }
    }
}
