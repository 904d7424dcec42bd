use std::collections::HashMap;

use super::encode::*;
use super::*;
use crate::codec::{extension_column_map, vertex_feature_column_map};
use crate::generator::{generate_graph, generate_pattern, GraphParams, PatternParams};
use crate::graph::Graph;
use crate::numkit::tape::Tape;
use crate::rng::stream;

fn tiny_config(rep: Representation, inter: Interaction) -> ModelConfig {
    ModelConfig {
        representation: rep,
        interaction: inter,
        hidden: 8,
        memory_size: 2,
        steps: 2,
        heads: 2,
        layers: 2,
        blocks: 2,
        dropout: 0.2,
        ..ModelConfig::default()
    }
}

fn sample_pair() -> (Graph, Graph) {
    let pat = generate_pattern(
        &PatternParams { n_vertices: 3, n_edges: 3, n_vertex_labels: 2, n_edge_labels: 2 },
        &mut stream(1, "m", 0),
    )
    .unwrap();
    let gp = GraphParams {
        n_vertices: 16,
        n_edges: 32,
        n_vertex_labels: 3,
        n_edge_labels: 3,
        alpha: 0.7,
        beta: 512.0,
        max_count: 1024,
        max_avg_degree: 4.0,
        max_retries: 10,
    };
    let ex = generate_graph(&pat, &gp, 5).unwrap();
    (pat.graph().clone(), ex.graph)
}

fn specs() -> (EncodingSpec, EncodingSpec) {
    (EncodingSpec::new(2, 4, 4, 4), EncodingSpec::new(2, 16, 4, 4))
}

fn forward_value(model: &Model, pair: &EncodedPair) -> f64 {
    let mut t = Tape::new();
    let out = model.forward(&mut t, pair, false, None).unwrap();
    t.value(out).item()
}

#[test]
fn every_architecture_produces_a_scalar() {
    let (pat, g) = sample_pair();
    let (ps, gs) = specs();
    let dims = EncodingDims::from_specs(&ps, &gs);
    for rep in [Representation::Cnn, Representation::Rgcn, Representation::Rgin] {
        for inter in [
            Interaction::SumPool,
            Interaction::MeanPool,
            Interaction::MaxPool,
            Interaction::MemAttn,
            Interaction::DiamNet,
        ] {
            let config = tiny_config(rep, inter);
            let pair = encode_pair(&pat, &g, &ps, &gs, &config, 1.0).unwrap();
            let model = Model::init(config, dims, 7).unwrap();
            let v = forward_value(&model, &pair);
            assert!(v.is_finite(), "{rep:?}/{inter:?} produced {v}");
            // deterministic at eval time
            assert_eq!(v, forward_value(&model, &pair));
        }
    }
}

#[test]
fn pooled_output_invariant_under_vertex_renumbering() {
    let (pat, g) = sample_pair();
    let (ps, gs) = specs();
    let dims = EncodingDims::from_specs(&ps, &gs);
    let config = tiny_config(Representation::Rgin, Interaction::SumPool);
    let model = Model::init(config.clone(), dims, 3).unwrap();

    let base = forward_value(&model, &encode_pair(&pat, &g, &ps, &gs, &config, 0.0).unwrap());

    // renumber the ids and rotate the vertex list order
    let ids: Vec<_> = g.vertices().iter().map(|&(id, _)| id).collect();
    let perm: HashMap<_, _> = ids.iter().zip(ids.iter().rev()).map(|(&a, &b)| (a, b)).collect();
    let remapped = g.remap_vertex_ids(&perm).unwrap();
    let mut vertices = remapped.vertices().to_vec();
    vertices.rotate_left(5);
    let rotated = Graph::new(
        vertices,
        remapped.edges().to_vec(),
        remapped.num_vertex_labels(),
        remapped.num_edge_labels(),
    )
    .unwrap();

    let moved = forward_value(&model, &encode_pair(&pat, &rotated, &ps, &gs, &config, 0.0).unwrap());
    assert!((base - moved).abs() < 1e-9, "{base} vs {moved}");
}

#[test]
fn sequence_output_invariant_under_edge_reordering() {
    let (pat, g) = sample_pair();
    let (ps, gs) = specs();
    let dims = EncodingDims::from_specs(&ps, &gs);
    let config = tiny_config(Representation::Cnn, Interaction::MeanPool);
    let model = Model::init(config.clone(), dims, 3).unwrap();

    let base = forward_value(&model, &encode_pair(&pat, &g, &ps, &gs, &config, 0.0).unwrap());
    let mut edges = g.edges().to_vec();
    edges.reverse();
    let shuffled =
        Graph::new(g.vertices().to_vec(), edges, g.num_vertex_labels(), g.num_edge_labels())
            .unwrap();
    let moved = forward_value(&model, &encode_pair(&pat, &shuffled, &ps, &gs, &config, 0.0).unwrap());
    assert_eq!(base, moved);
}

#[test]
fn padding_never_changes_outputs() {
    let (pat, g) = sample_pair();
    let (ps, gs) = specs();
    let dims = EncodingDims::from_specs(&ps, &gs);

    // graph view: extra isolated zero vertices behind the mask
    let config = tiny_config(Representation::Rgin, Interaction::DiamNet);
    let model = Model::init(config.clone(), dims, 11).unwrap();
    let agg = config.aggregator();
    let plain = EncodedPair {
        seq: None,
        graph: Some((
            encode_graph_side(&pat, &gs, agg).unwrap(),
            encode_graph_side(&g, &gs, agg).unwrap(),
        )),
        sizes: sizes_of(&pat, &g),
        target: 0.0,
    };
    let padded = EncodedPair {
        seq: None,
        graph: Some((
            encode_graph_side(&pat, &gs, agg).unwrap(),
            encode_graph_side_padded(&g, &gs, agg, 5).unwrap(),
        )),
        sizes: sizes_of(&pat, &g),
        target: 0.0,
    };
    assert_eq!(forward_value(&model, &plain), forward_value(&model, &padded));

    // sequence view: extra zero rows behind the mask
    let config = tiny_config(Representation::Cnn, Interaction::DiamNet);
    let model = Model::init(config.clone(), dims, 11).unwrap();
    let plain = EncodedPair {
        seq: Some((
            encode_seq_side(&pat, &ps).unwrap(),
            encode_seq_side(&g, &gs).unwrap(),
        )),
        graph: None,
        sizes: sizes_of(&pat, &g),
        target: 0.0,
    };
    let padded = EncodedPair {
        seq: Some((
            encode_seq_side(&pat, &ps).unwrap(),
            encode_seq_side_padded(&g, &gs, 9).unwrap(),
        )),
        graph: None,
        sizes: sizes_of(&pat, &g),
        target: 0.0,
    };
    assert_eq!(forward_value(&model, &plain), forward_value(&model, &padded));
}

#[test]
fn rgin_separates_vertices_with_different_in_multisets() {
    // two label-0 vertices; one receives two label-0 edges, the other one
    let g = Graph::new(
        vec![(0, 0), (1, 0), (2, 1), (3, 1), (4, 1)],
        vec![
            crate::graph::Edge { src: 2, dst: 0, label: 0 },
            crate::graph::Edge { src: 3, dst: 0, label: 0 },
            crate::graph::Edge { src: 4, dst: 1, label: 0 },
        ],
        2,
        1,
    )
    .unwrap();
    let spec = EncodingSpec::new(2, 8, 2, 1);
    let config = ModelConfig { use_filter_net: false, ..tiny_config(Representation::Rgin, Interaction::SumPool) };
    let dims = EncodingDims::from_specs(&spec, &spec);
    let model = Model::init(config.clone(), dims, 2).unwrap();
    let side = encode_graph_side(&g, &spec, config.aggregator()).unwrap();

    let mut t = Tape::new();
    let mut ctx = Ctx {
        t: &mut t,
        store: &model.store,
        cache: HashMap::new(),
        rng: None,
        dropout: 0.0,
    };
    let (rep, _) = model.represent_graph(&mut ctx, &side, Side::Graph, None).unwrap();
    let val = t.value(rep);
    let d = val.cols();
    let row0 = &val.data()[0..d];
    let row1 = &val.data()[d..2 * d];
    assert!(
        row0.iter().zip(row1).any(|(a, b)| (a - b).abs() > 1e-9),
        "sum aggregator failed to separate different in-multisets"
    );
}

#[test]
fn gate_identities_at_saturation() {
    let mut t = Tape::new();
    let config = tiny_config(Representation::Rgin, Interaction::DiamNet);
    let dims = EncodingDims { seq_pattern: 8, seq_graph: 8, feat: 4, relations: 1 };
    let model = Model::init(config, dims, 1).unwrap();
    let mut ctx = Ctx {
        t: &mut t,
        store: &model.store,
        cache: HashMap::new(),
        rng: None,
        dropout: 0.0,
    };
    let a = ctx.t.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let b = ctx.t.constant(Tensor::matrix(2, 3, vec![9.0; 6]).unwrap());
    let ones = ctx.t.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
    let zeros = ctx.t.constant(Tensor::zeros(vec![2, 3]));
    let keep = model.gated_mix(&mut ctx, ones, a, b);
    let swap = model.gated_mix(&mut ctx, zeros, a, b);
    assert_eq!(ctx.t.value(keep).data(), ctx.t.value(a).data());
    assert_eq!(ctx.t.value(swap).data(), ctx.t.value(b).data());
}

#[test]
fn zero_step_diamnet_returns_initial_memory() {
    let (pat, g) = sample_pair();
    let (ps, gs) = specs();
    let dims = EncodingDims::from_specs(&ps, &gs);
    let config = ModelConfig { steps: 0, ..tiny_config(Representation::Rgin, Interaction::DiamNet) };
    let model = Model::init(config.clone(), dims, 4).unwrap();
    let pair = encode_pair(&pat, &g, &ps, &gs, &config, 0.0).unwrap();
    let (p_side, g_side) = pair.graph.as_ref().unwrap();

    let mut t = Tape::new();
    let mut ctx = Ctx {
        t: &mut t,
        store: &model.store,
        cache: HashMap::new(),
        rng: None,
        dropout: 0.0,
    };
    let (_p_rep, _) = model.represent_graph(&mut ctx, p_side, Side::Pattern, None).unwrap();
    let (g_rep, g_len) = model.represent_graph(&mut ctx, g_side, Side::Graph, Some(p_side)).unwrap();
    let mem = model.mem_init(&mut ctx, g_rep, g_len);

    // with T = 0 the features are exactly the flattened initial memory
    let sizes = ctx.t.constant(Tensor::matrix(1, 4, pair.sizes.to_vec()).unwrap());
    let feats =
        model.diamnet_features(&mut ctx, g_rep, g_len, g_rep, g_len, sizes).unwrap();
    let m = config.memory_size * config.hidden;
    assert_eq!(&ctx.t.value(feats).data()[..m], ctx.t.value(mem).data());
}

#[test]
fn shared_flag_controls_parameter_sharing() {
    let dims = EncodingDims { seq_pattern: 8, seq_graph: 8, feat: 4, relations: 2 };
    let shared = Model::init(tiny_config(Representation::Rgin, Interaction::SumPool), dims, 1).unwrap();
    assert!(shared.store.value("rep.l0.self.w").is_some());
    assert!(shared.store.value("rep.p.l0.self.w").is_none());

    let config = ModelConfig {
        shared_representation: false,
        ..tiny_config(Representation::Rgin, Interaction::SumPool)
    };
    let unshared = Model::init(config, dims, 1).unwrap();
    assert!(unshared.store.value("rep.p.l0.self.w").is_some());
    assert!(unshared.store.value("rep.g.l0.self.w").is_some());
    assert!(unshared.store.value("rep.l0.self.w").is_none());
}

#[test]
fn extension_preserves_outputs_exactly() {
    let (pat, g) = sample_pair();
    let (ps, gs) = specs();
    let dims = EncodingDims::from_specs(&ps, &gs);

    // sequence view: wider id/label alphabets
    let ps_new = EncodingSpec::new(2, 16, 8, 4);
    let gs_new = EncodingSpec::new(2, 64, 8, 4);
    let config = tiny_config(Representation::Cnn, Interaction::MeanPool);
    let model = Model::init(config.clone(), dims, 9).unwrap();
    let old_out = forward_value(&model, &encode_pair(&pat, &g, &ps, &gs, &config, 0.0).unwrap());

    let new_dims = EncodingDims::from_specs(&ps_new, &gs_new);
    let map_p = extension_column_map(&ps, &ps_new).unwrap();
    let map_g = extension_column_map(&gs, &gs_new).unwrap();
    let wide = model.extended(new_dims, &map_p, &map_g).unwrap();
    let new_out =
        forward_value(&wide, &encode_pair(&pat, &g, &ps_new, &gs_new, &config, 0.0).unwrap());
    assert_eq!(old_out, new_out, "sequence-view extension changed the output");

    // graph view: wider vertex labels and more relations
    let config = tiny_config(Representation::Rgin, Interaction::DiamNet);
    let model = Model::init(config.clone(), dims, 9).unwrap();
    let old_out = forward_value(&model, &encode_pair(&pat, &g, &ps, &gs, &config, 0.0).unwrap());
    let fmap = vertex_feature_column_map(&gs, &gs_new).unwrap();
    let wide = model.extended(new_dims, &fmap, &fmap).unwrap();
    let new_out =
        forward_value(&wide, &encode_pair(&pat, &g, &ps_new, &gs_new, &config, 0.0).unwrap());
    assert_eq!(old_out, new_out, "graph-view extension changed the output");
}

#[test]
fn every_parameter_receives_gradient() {
    use crate::numkit::tape::mse;
    // the pattern needs enough edges that the conv stack keeps several rows,
    // otherwise duplicated memory blocks make key projections silent
    let pat = generate_pattern(
        &PatternParams { n_vertices: 6, n_edges: 16, n_vertex_labels: 2, n_edge_labels: 2 },
        &mut stream(21, "m", 0),
    )
    .unwrap();
    let gp = GraphParams {
        n_vertices: 16,
        n_edges: 48,
        n_vertex_labels: 3,
        n_edge_labels: 3,
        alpha: 0.5,
        beta: 512.0,
        max_count: 4096,
        max_avg_degree: 4.0,
        max_retries: 10,
    };
    let ex = generate_graph(&pat, &gp, 6).unwrap();
    let (pat, g) = (pat.graph().clone(), ex.graph);
    let (ps, gs) = (EncodingSpec::new(2, 8, 4, 4), EncodingSpec::new(2, 16, 4, 4));
    let dims = EncodingDims::from_specs(&ps, &gs);
    for (rep, inter) in [
        (Representation::Rgin, Interaction::DiamNet),
        (Representation::Rgin, Interaction::MemAttn),
        (Representation::Cnn, Interaction::MemAttn),
        (Representation::Cnn, Interaction::DiamNet),
        (Representation::Rgcn, Interaction::MaxPool),
    ] {
        let config = tiny_config(rep, inter);
        let mut model = Model::init(config.clone(), dims, 13).unwrap();
        let pair = encode_pair(&pat, &g, &ps, &gs, &config, 3.0).unwrap();
        let mut t = Tape::new();
        let out = model.forward(&mut t, &pair, false, None).unwrap();
        let target = t.constant(Tensor::scalar(pair.target));
        let loss = mse(&mut t, out, target).unwrap();
        model.store.zero_grads();
        t.backward(loss, &mut model.store).unwrap();
        let missing_relations: Vec<usize> = (0..dims.relations)
            .filter(|r| {
                pair.graph
                    .as_ref()
                    .map(|(p, g)| {
                        !p.adjacency.iter().any(|(l, _)| l == r)
                            && !g.adjacency.iter().any(|(l, _)| l == r)
                    })
                    .unwrap_or(false)
            })
            .collect();
        let names: Vec<String> = model.store.names().map(str::to_string).collect();
        for name in names {
            // relation transforms for labels absent from this pair are
            // legitimately silent
            if missing_relations.iter().any(|r| name.contains(&format!(".rel{r}"))) {
                continue;
            }
            let grad = model.store.grad(&name).unwrap();
            assert!(
                grad.iter().any(|&v| v != 0.0),
                "{rep:?}/{inter:?}: parameter {name} got no gradient"
            );
        }
    }
}
