//! Neural counting models: a FilterNet input gate, CNN / RGCN / RGIN
//! representations, and Pool / MemAttn / DIAMNet interaction heads feeding a
//! two-layer prediction head.

pub mod encode;

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, EncodingSpec};
use crate::numkit::optim::ParamStore;
use crate::numkit::tape::{
    conv_pool_block, dense, mem_init_matrix, multi_head_attention, AttnParams, Tape, Var,
};
use crate::numkit::{NumError, Tensor};
use crate::rng::stream;

use encode::EncodedPair;

/// Shortest sequence the three conv+pool stages can consume; shorter inputs
/// are zero-padded up to this length.
pub const MIN_SEQ_LEN: usize = 13;

const CNN_KERNELS: [(usize, usize); 3] = [(2, 2), (3, 3), (4, 4)];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("example lacks the {0} view encodings")]
    MissingView(&'static str),
    #[error("edge label {label} outside the {relations} known relations")]
    UnknownRelationLabel { label: usize, relations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Cnn,
    Rgcn,
    Rgin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interaction {
    SumPool,
    MeanPool,
    MaxPool,
    MemAttn,
    DiamNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemInitKind {
    Mean,
    Sum,
    Max,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub representation: Representation,
    pub interaction: Interaction,
    pub hidden: usize,
    pub memory_size: usize,
    pub steps: usize,
    pub heads: usize,
    pub layers: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub shared_representation: bool,
    pub use_filter_net: bool,
    pub mem_init: MemInitKind,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            representation: Representation::Rgin,
            interaction: Interaction::DiamNet,
            hidden: 128,
            memory_size: 4,
            steps: 3,
            heads: 4,
            layers: 3,
            blocks: 4,
            dropout: 0.2,
            shared_representation: true,
            use_filter_net: true,
            mem_init: MemInitKind::Mean,
            leaky_slope: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn aggregator(&self) -> Aggregator {
        match self.representation {
            Representation::Rgin => Aggregator::Sum,
            _ => Aggregator::Mean,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden % self.heads != 0 {
            return Err(NumError::BadHeadCount { dim: self.hidden, heads: self.heads }.into());
        }
        if self.hidden % self.blocks != 0 {
            return Err(NumError::ShapeMismatch {
                op: "ModelConfig",
                details: format!("hidden {} not divisible by {} blocks", self.hidden, self.blocks),
            }
            .into());
        }
        Ok(())
    }
}

/// Input widths baked into a model when it is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingDims {
    pub seq_pattern: usize,
    pub seq_graph: usize,
    pub feat: usize,
    pub relations: usize,
}

impl EncodingDims {
    pub fn from_specs(pattern: &EncodingSpec, graph: &EncodingSpec) -> Self {
        EncodingDims {
            seq_pattern: pattern.tuple_width(),
            seq_graph: graph.tuple_width(),
            feat: graph.vertex_feature_width(),
            relations: graph.max_edge_labels as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Pattern,
    Graph,
}

/// A counting model: configuration, input dims and every trainable tensor.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: EncodingDims,
    pub store: ParamStore,
}

fn reg_dense(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, out: usize, inp: usize) {
    store.register(&format!("{name}.w"), Tensor::xavier(rng, out, inp));
    store.register(&format!("{name}.b"), Tensor::zeros(vec![1, out]));
}

fn reg_attn(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d: usize) {
    for part in ["wq", "wk", "wv", "wo"] {
        store.register(&format!("{prefix}.{part}"), Tensor::xavier(rng, d, d));
    }
    store.register(&format!("{prefix}.bo"), Tensor::zeros(vec![1, d]));
}

impl Model {
    /// Width of the feature vector entering the prediction head.
    fn predict_in(config: &ModelConfig) -> usize {
        match config.interaction {
            Interaction::DiamNet => config.memory_size * config.hidden + 4,
            _ => 4 * config.hidden + 4,
        }
    }

    fn input_width(&self, side: Side) -> usize {
        match (self.config.representation, side) {
            (Representation::Cnn, Side::Pattern) => self.dims.seq_pattern,
            (Representation::Cnn, Side::Graph) => self.dims.seq_graph,
            (_, _) => self.dims.feat,
        }
    }

    fn rep_prefixes(config: &ModelConfig) -> Vec<&'static str> {
        if config.shared_representation {
            vec!["rep"]
        } else {
            vec!["rep.p", "rep.g"]
        }
    }

    pub fn init(config: ModelConfig, dims: EncodingDims, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.hidden;
        let rng = &mut stream(seed, "model-init", 0);
        let mut store = ParamStore::new();

        let (in_p, in_g) = match config.representation {
            Representation::Cnn => (dims.seq_pattern, dims.seq_graph),
            _ => (dims.feat, dims.feat),
        };
        reg_dense(&mut store, rng, "inp.p", d, in_p);
        reg_dense(&mut store, rng, "inp.g", d, in_g);
        if config.use_filter_net {
            store.register("filter.wg", Tensor::xavier(rng, in_p, in_g));
            store.register("filter.wf", Tensor::xavier(rng, 1, in_p));
        }

        for rp in Self::rep_prefixes(&config) {
            match config.representation {
                Representation::Cnn => {
                    for (i, (ck, _)) in CNN_KERNELS.iter().enumerate() {
                        let a = (6.0 / ((ck * d + d) as f64)).sqrt();
                        store.register(
                            &format!("{rp}.cnn{i}.w"),
                            Tensor::uniform(rng, vec![*ck, d, d], a),
                        );
                        store.register(&format!("{rp}.cnn{i}.b"), Tensor::zeros(vec![1, d]));
                    }
                }
                Representation::Rgcn | Representation::Rgin => {
                    let (ob, ib) = (d / config.blocks, d / config.blocks);
                    for l in 0..config.layers {
                        reg_dense(&mut store, rng, &format!("{rp}.l{l}.self"), d, d);
                        for r in 0..dims.relations {
                            let a = (6.0 / ((ib + ob) as f64)).sqrt();
                            store.register(
                                &format!("{rp}.l{l}.rel{r}"),
                                Tensor::uniform(rng, vec![config.blocks, ob, ib], a),
                            );
                        }
                        if config.representation == Representation::Rgin {
                            reg_dense(&mut store, rng, &format!("{rp}.l{l}.mlp0"), d, d);
                            reg_dense(&mut store, rng, &format!("{rp}.l{l}.mlp1"), d, d);
                        }
                    }
                }
            }
        }

        match config.interaction {
            Interaction::DiamNet => {
                reg_attn(&mut store, rng, "diam.ap", d);
                reg_attn(&mut store, rng, "diam.ag", d);
                for g in ["up", "vp", "ug", "vg"] {
                    store.register(&format!("diam.{g}"), Tensor::xavier(rng, d, d));
                }
            }
            Interaction::MemAttn => {
                reg_attn(&mut store, rng, "mem.a1", d);
                reg_attn(&mut store, rng, "mem.a2", d);
                for g in ["up", "vp", "us", "vs"] {
                    store.register(&format!("mem.{g}"), Tensor::xavier(rng, d, d));
                }
            }
            _ => {}
        }

        reg_dense(&mut store, rng, "pred.0", d / 2, Self::predict_in(&config));
        reg_dense(&mut store, rng, "pred.1", 1, d / 2);

        Ok(Model { config, dims, store })
    }

    /// Single-example forward pass producing the raw (unclamped) count
    /// estimate. `rng` drives dropout and must be Some when `train`.
    pub fn forward(
        &self,
        t: &mut Tape,
        pair: &EncodedPair,
        train: bool,
        rng: Option<ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        let mut ctx = Ctx {
            t,
            store: &self.store,
            cache: HashMap::new(),
            rng,
            dropout: if train { self.config.dropout } else { 0.0 },
        };
        let cfg = &self.config;

        let (p_rep, p_len, g_rep, g_len) = match cfg.representation {
            Representation::Cnn => {
                let (ps, gs) = pair.seq.as_ref().ok_or(ModelError::MissingView("sequence"))?;
                let p = self.represent_seq(&mut ctx, &ps.enc, ps.len, Side::Pattern, None)?;
                let g = self.represent_seq(&mut ctx, &gs.enc, gs.len, Side::Graph, Some(ps))?;
                (p.0, p.1, g.0, g.1)
            }
            _ => {
                let (ps, gs) = pair.graph.as_ref().ok_or(ModelError::MissingView("graph"))?;
                let p = self.represent_graph(&mut ctx, ps, Side::Pattern, None)?;
                let g = self.represent_graph(&mut ctx, gs, Side::Graph, Some(ps))?;
                (p.0, p.1, g.0, g.1)
            }
        };

        let sizes = ctx.t.constant(Tensor::matrix(1, 4, pair.sizes.to_vec())?);
        let features = match cfg.interaction {
            Interaction::SumPool | Interaction::MeanPool | Interaction::MaxPool => {
                self.pool_features(&mut ctx, p_rep, p_len, g_rep, g_len, sizes)?
            }
            Interaction::DiamNet => {
                self.diamnet_features(&mut ctx, p_rep, p_len, g_rep, g_len, sizes)?
            }
            Interaction::MemAttn => {
                self.memattn_features(&mut ctx, p_rep, p_len, g_rep, g_len, sizes)?
            }
        };

        let (w0, b0) = (ctx.p("pred.0.w"), ctx.p("pred.0.b"));
        let h = dense(ctx.t, features, w0, Some(b0))?;
        let h = ctx.t.leaky_relu(h, cfg.leaky_slope);
        let (w1, b1) = (ctx.p("pred.1.w"), ctx.p("pred.1.b"));
        Ok(dense(ctx.t, h, w1, Some(b1))?)
    }

    /// FilterNet gate (sigmoid of the pattern-space overlap) applied to the
    /// graph-side encoding rows.
    fn filter_rows(
        &self,
        ctx: &mut Ctx,
        g_enc: Var,
        pattern_enc: &Tensor,
        pattern_len: usize,
    ) -> Result<Var, ModelError> {
        let width = pattern_enc.cols();
        let mut colmax = vec![0.0f64; width];
        for r in 0..pattern_len {
            let row = &pattern_enc.data()[r * width..(r + 1) * width];
            for (m, &v) in colmax.iter_mut().zip(row) {
                if v > *m {
                    *m = v;
                }
            }
        }
        let p_bar = ctx.t.constant(Tensor::matrix(1, width, colmax)?);
        let wg = ctx.p("filter.wg");
        let g_hat = ctx.t.matmul_nt(g_enc, wg);
        let overlap = ctx.t.mul_row_broadcast(g_hat, p_bar);
        let wf = ctx.p("filter.wf");
        let gate_logit = ctx.t.matmul_nt(overlap, wf);
        let gate = ctx.t.sigmoid(gate_logit);
        Ok(ctx.t.mul_col_broadcast(g_enc, gate))
    }

    fn rep_prefix(&self, side: Side) -> &'static str {
        if self.config.shared_representation {
            "rep"
        } else {
            match side {
                Side::Pattern => "rep.p",
                Side::Graph => "rep.g",
            }
        }
    }

    fn represent_seq(
        &self,
        ctx: &mut Ctx,
        enc: &Tensor,
        len: usize,
        side: Side,
        filter_with: Option<&encode::SeqSide>,
    ) -> Result<(Var, usize), ModelError> {
        if len == 0 {
            return Err(NumError::EmptySequence.into());
        }
        let mut x = ctx.t.constant(enc.clone());
        if self.config.use_filter_net {
            if let Some(ps) = filter_with {
                x = self.filter_rows(ctx, x, &ps.enc, ps.len)?;
            }
        }
        let inp = match side {
            Side::Pattern => "inp.p",
            Side::Graph => "inp.g",
        };
        let (iw, ib) = (ctx.p(&format!("{inp}.w")), ctx.p(&format!("{inp}.b")));
        let mut h = dense(ctx.t, x, iw, Some(ib))?;
        h = ctx.dropout(h);
        let rp = self.rep_prefix(side);
        let mut cur = len;
        for (i, (ck, pk)) in CNN_KERNELS.iter().enumerate() {
            let w = ctx.p(&format!("{rp}.cnn{i}.w"));
            let b = ctx.p(&format!("{rp}.cnn{i}.b"));
            h = conv_pool_block(ctx.t, h, w, b, *ck, *pk, self.config.leaky_slope)?;
            h = ctx.dropout(h);
            cur = cur - (ck - 1) - (pk - 1);
        }
        Ok((h, cur))
    }

    fn represent_graph(
        &self,
        ctx: &mut Ctx,
        gs: &encode::GraphSide,
        side: Side,
        filter_with: Option<&encode::GraphSide>,
    ) -> Result<(Var, usize), ModelError> {
        for &(label, _) in &gs.adjacency {
            if label >= self.dims.relations {
                return Err(ModelError::UnknownRelationLabel {
                    label,
                    relations: self.dims.relations,
                });
            }
        }
        let mut x = ctx.t.constant(gs.feats.clone());
        if self.config.use_filter_net {
            if let Some(ps) = filter_with {
                x = self.filter_rows(ctx, x, &ps.feats, ps.len)?;
            }
        }
        let inp = match side {
            Side::Pattern => "inp.p",
            Side::Graph => "inp.g",
        };
        let (iw, ib) = (ctx.p(&format!("{inp}.w")), ctx.p(&format!("{inp}.b")));
        let mut h = dense(ctx.t, x, iw, Some(ib))?;
        h = ctx.dropout(h);
        let rp = self.rep_prefix(side);
        for l in 0..self.config.layers {
            let sw = ctx.p(&format!("{rp}.l{l}.self.w"));
            let sb = ctx.p(&format!("{rp}.l{l}.self.b"));
            let mut a = dense(ctx.t, h, sw, Some(sb))?;
            for (label, adj) in &gs.adjacency {
                let wr = ctx.p(&format!("{rp}.l{l}.rel{label}"));
                let transformed = ctx.t.block_matmul_nt(h, wr);
                let message = ctx.t.spmm(adj.clone(), transformed);
                a = ctx.t.add(a, message);
            }
            let out = match self.config.representation {
                Representation::Rgcn => ctx.t.leaky_relu(a, self.config.leaky_slope),
                _ => {
                    let m0w = ctx.p(&format!("{rp}.l{l}.mlp0.w"));
                    let m0b = ctx.p(&format!("{rp}.l{l}.mlp0.b"));
                    let m1w = ctx.p(&format!("{rp}.l{l}.mlp1.w"));
                    let m1b = ctx.p(&format!("{rp}.l{l}.mlp1.b"));
                    let m = dense(ctx.t, a, m0w, Some(m0b))?;
                    let m = ctx.t.leaky_relu(m, self.config.leaky_slope);
                    dense(ctx.t, m, m1w, Some(m1b))?
                }
            };
            h = ctx.t.add(out, h);
            h = ctx.dropout(h);
        }
        Ok((h, gs.len))
    }

    fn pool(&self, ctx: &mut Ctx, x: Var, len: usize) -> Var {
        match self.config.interaction {
            Interaction::SumPool => ctx.t.sum_rows(x, len),
            Interaction::MaxPool => ctx.t.max_rows(x, len),
            _ => ctx.t.mean_rows(x, len),
        }
    }

    /// Concat(g, p, g - p, g * p) plus the four size scalars.
    fn combine(&self, ctx: &mut Ctx, g: Var, p: Var, sizes: Var) -> Var {
        let diff = ctx.t.sub(g, p);
        let prod = ctx.t.mul(g, p);
        ctx.t.concat_cols(&[g, p, diff, prod, sizes])
    }

    fn pool_features(
        &self,
        ctx: &mut Ctx,
        p_rep: Var,
        p_len: usize,
        g_rep: Var,
        g_len: usize,
        sizes: Var,
    ) -> Result<Var, ModelError> {
        let g = self.pool(ctx, g_rep, g_len);
        let p = self.pool(ctx, p_rep, p_len);
        Ok(self.combine(ctx, g, p, sizes))
    }

    fn mem_init(&self, ctx: &mut Ctx, x: Var, len: usize) -> Var {
        let m = self.config.memory_size;
        let rows = ctx.t.value(x).rows();
        match self.config.mem_init {
            MemInitKind::Mean => {
                let mut mat = mem_init_matrix(len, m);
                mat.n_cols = rows; // windows stay within the unpadded prefix
                ctx.t.spmm(Arc::new(mat), x)
            }
            MemInitKind::Sum => {
                let mut mat = mem_init_matrix(len, m);
                mat.n_cols = rows;
                let k = len - (m - 1) * (len / m);
                mat.values.iter_mut().for_each(|v| *v *= k as f64);
                ctx.t.spmm(Arc::new(mat), x)
            }
            MemInitKind::Max => {
                let s = len / m;
                let k = len - (m - 1) * s;
                let blocks: Vec<Var> = (0..m)
                    .map(|i| {
                        let win = ctx.t.slice_rows(x, i * s, i * s + k);
                        ctx.t.max_rows(win, k)
                    })
                    .collect();
                ctx.t.concat_rows(&blocks)
            }
        }
    }

    fn gate(&self, ctx: &mut Ctx, a: Var, u: &str, b: Var, v: &str) -> Var {
        let ua = {
            let w = ctx.p(u);
            ctx.t.matmul_nt(a, w)
        };
        let vb = {
            let w = ctx.p(v);
            ctx.t.matmul_nt(b, w)
        };
        let s = ctx.t.add(ua, vb);
        ctx.t.sigmoid(s)
    }

    /// z * a + (1 - z) * b
    fn gated_mix(&self, ctx: &mut Ctx, z: Var, a: Var, b: Var) -> Var {
        let za = ctx.t.mul(z, a);
        let one_minus = ctx.t.affine(z, -1.0, 1.0);
        let zb = ctx.t.mul(one_minus, b);
        ctx.t.add(za, zb)
    }

    fn attn_params(ctx: &mut Ctx, prefix: &str) -> AttnParams {
        AttnParams {
            wq: ctx.p(&format!("{prefix}.wq")),
            wk: ctx.p(&format!("{prefix}.wk")),
            wv: ctx.p(&format!("{prefix}.wv")),
            wo: ctx.p(&format!("{prefix}.wo")),
            bo: ctx.p(&format!("{prefix}.bo")),
        }
    }

    /// Gated memory that attends the pattern, then the graph, T times; the
    /// whole final memory (flattened) plus sizes is the feature vector.
    fn diamnet_features(
        &self,
        ctx: &mut Ctx,
        p_rep: Var,
        p_len: usize,
        g_rep: Var,
        g_len: usize,
        sizes: Var,
    ) -> Result<Var, ModelError> {
        let heads = self.config.heads;
        let mut mem = self.mem_init(ctx, g_rep, g_len);
        let ap = Self::attn_params(ctx, "diam.ap");
        let ag = Self::attn_params(ctx, "diam.ag");
        for _ in 0..self.config.steps {
            let s = multi_head_attention(ctx.t, mem, p_rep, p_rep, &ap, heads, p_len)?;
            let z = self.gate(ctx, mem, "diam.up", s, "diam.vp");
            let s_bar = self.gated_mix(ctx, z, mem, s);
            let s_tilde = multi_head_attention(ctx.t, s_bar, g_rep, g_rep, &ag, heads, g_len)?;
            let z_tilde = self.gate(ctx, s_bar, "diam.ug", s_tilde, "diam.vg");
            mem = self.gated_mix(ctx, z_tilde, s_bar, s_tilde);
        }
        let d = self.config.hidden * self.config.memory_size;
        let flat = ctx.t.reshape(mem, vec![1, d]);
        Ok(ctx.t.concat_cols(&[flat, sizes]))
    }

    /// Gated attention over pattern-derived then intermediate memories,
    /// updating the graph rows T times; pooled Pool-style afterwards.
    fn memattn_features(
        &self,
        ctx: &mut Ctx,
        p_rep: Var,
        p_len: usize,
        g_rep: Var,
        g_len: usize,
        sizes: Var,
    ) -> Result<Var, ModelError> {
        let heads = self.config.heads;
        let m = self.config.memory_size;
        let a1 = Self::attn_params(ctx, "mem.a1");
        let a2 = Self::attn_params(ctx, "mem.a2");
        let mut g = g_rep;
        for _ in 0..self.config.steps.max(1) {
            let mem1 = self.mem_init(ctx, p_rep, p_len);
            let s = multi_head_attention(ctx.t, g, mem1, mem1, &a1, heads, m)?;
            let z = self.gate(ctx, g, "mem.up", s, "mem.vp");
            let s_bar = self.gated_mix(ctx, z, g, s);
            let mem2 = self.mem_init(ctx, s_bar, g_len);
            let s_tilde = multi_head_attention(ctx.t, s_bar, mem2, mem2, &a2, heads, m)?;
            let z_tilde = self.gate(ctx, s_bar, "mem.us", s_tilde, "mem.vs");
            g = self.gated_mix(ctx, z_tilde, s_bar, s_tilde);
        }
        let gm = ctx.t.mean_rows(g, g_len);
        let pm = ctx.t.mean_rows(p_rep, p_len);
        Ok(self.combine(ctx, gm, pm, sizes))
    }

    /// Widens the model to new encoding dims: old weight columns move to
    /// their mapped positions, fresh columns start at zero, and new relation
    /// transforms start at zero. Outputs on old-spec data are unchanged.
    pub fn extended(
        &self,
        new_dims: EncodingDims,
        map_p: &[usize],
        map_g: &[usize],
    ) -> Result<Model, ModelError> {
        let cfg = &self.config;
        let (new_in_p, new_in_g) = match cfg.representation {
            Representation::Cnn => (new_dims.seq_pattern, new_dims.seq_graph),
            _ => (new_dims.feat, new_dims.feat),
        };
        let mut store = self.store.clone();

        let remap_cols = |t: &Tensor, map: &[usize], new_w: usize| -> Tensor {
            let rows = t.rows();
            let old_w = t.cols();
            assert_eq!(map.len(), old_w);
            let mut data = vec![0.0; rows * new_w];
            for r in 0..rows {
                for (j, &nj) in map.iter().enumerate() {
                    data[r * new_w + nj] = t.data()[r * old_w + j];
                }
            }
            Tensor::matrix(rows, new_w, data).expect("finite remap")
        };

        let inp_p = self.store.value("inp.p.w").expect("inp.p.w");
        store.set_value("inp.p.w", remap_cols(&inp_p, map_p, new_in_p));
        let inp_g = self.store.value("inp.g.w").expect("inp.g.w");
        store.set_value("inp.g.w", remap_cols(&inp_g, map_g, new_in_g));

        if cfg.use_filter_net {
            // wg is [in_p, in_g]: remap columns by the graph map, rows by the
            // pattern map (via a transpose-free row scatter)
            let wg = self.store.value("filter.wg").expect("filter.wg");
            let wide = remap_cols(&wg, map_g, new_in_g);
            let mut data = vec![0.0; new_in_p * new_in_g];
            for (r, &nr) in map_p.iter().enumerate() {
                data[nr * new_in_g..(nr + 1) * new_in_g]
                    .copy_from_slice(&wide.data()[r * new_in_g..(r + 1) * new_in_g]);
            }
            store.set_value("filter.wg", Tensor::matrix(new_in_p, new_in_g, data)?);
            let wf = self.store.value("filter.wf").expect("filter.wf");
            store.set_value("filter.wf", remap_cols(&wf, map_p, new_in_p));
        }

        if cfg.representation != Representation::Cnn {
            let (ob, ib) = (cfg.hidden / cfg.blocks, cfg.hidden / cfg.blocks);
            for rp in Self::rep_prefixes(cfg) {
                for l in 0..cfg.layers {
                    for r in self.dims.relations..new_dims.relations {
                        store.register(
                            &format!("{rp}.l{l}.rel{r}"),
                            Tensor::zeros(vec![cfg.blocks, ob, ib]),
                        );
                    }
                }
            }
        }

        Ok(Model { config: cfg.clone(), dims: new_dims, store })
    }
}

/// Per-forward context: the tape, parameter handle cache and dropout stream.
struct Ctx<'a> {
    t: &'a mut Tape,
    store: &'a ParamStore,
    cache: HashMap<String, Var>,
    rng: Option<ChaCha8Rng>,
    dropout: f64,
}

impl Ctx<'_> {
    fn p(&mut self, name: &str) -> Var {
        if let Some(&v) = self.cache.get(name) {
            return v;
        }
        let v = self.t.param(name, self.store);
        self.cache.insert(name.to_string(), v);
        v
    }

    fn dropout(&mut self, x: Var) -> Var {
        match (&mut self.rng, self.dropout > 0.0) {
            (Some(rng), true) => self.t.dropout(x, self.dropout, rng),
            _ => x,
        }
    }
}

#[cfg(test)]
mod tests;
