//! Training loop, regression metrics, constant baselines, curriculum and
//! fine-tuning.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{extension_column_map, vertex_feature_column_map, CodecError, EncodingSpec};
use crate::models::encode::EncodedPair;
use crate::models::{EncodingDims, Model, ModelConfig, ModelError, Representation};
use crate::numkit::optim::{AdamHyper, ParamStore};
use crate::numkit::tape::{mse, Tape};
use crate::numkit::{NumError, Tensor};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss diverged (non-finite) at epoch {0}")]
    DivergedLoss(usize),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Early exit once the dev RMSE drops below this, if set.
    pub stop_at_dev_rmse: Option<f64>,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 1e-3,
            weight_decay: 1e-6,
            clip_norm: 1.0,
            batch_size: 64,
            epochs: 100,
            patience: 10,
            seed: 0,
            stop_at_dev_rmse: None,
        }
    }
}

impl Hyper {
    fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..AdamHyper::default()
        }
    }
}

/// Sizes used to key the per-bin breakdowns (Figs. 4-6 orderings).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairMeta {
    pub pattern_vertices: usize,
    pub pattern_edges: usize,
    pub pattern_vertex_labels: usize,
    pub pattern_edge_labels: usize,
    pub graph_vertices: usize,
    pub graph_edges: usize,
    pub graph_vertex_labels: usize,
    pub graph_edge_labels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BinRow {
    pub ordering: &'static str,
    pub pattern_size: usize,
    pub graph_size: usize,
    pub examples: usize,
    pub mean_truth: f64,
    pub mean_pred: f64,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub examples: usize,
    pub wall: Duration,
    pub bins: Vec<BinRow>,
}

impl Metrics {
    /// Computes RMSE/MAE over already-clamped predictions; `metas` (when
    /// given, aligned with the examples) keys the bin breakdowns.
    pub fn from_predictions(
        preds: &[f64],
        truths: &[f64],
        metas: Option<&[PairMeta]>,
        wall: Duration,
    ) -> Metrics {
        assert_eq!(preds.len(), truths.len());
        let n = preds.len().max(1) as f64;
        let mut se = 0.0;
        let mut ae = 0.0;
        for (&p, &t) in preds.iter().zip(truths) {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
        }
        let rmse = (se / n).sqrt();
        let mae = ae / n;
        // power-mean inequality, allow for rounding
        assert!(rmse + 1e-9 >= mae, "rmse {rmse} < mae {mae}");
        let bins = metas.map(|m| bin_rows(preds, truths, m)).unwrap_or_default();
        Metrics { rmse, mae, examples: preds.len(), wall, bins }
    }
}

fn bin_rows(preds: &[f64], truths: &[f64], metas: &[PairMeta]) -> Vec<BinRow> {
    use std::collections::BTreeMap;
    let orderings: [(&'static str, fn(&PairMeta) -> (usize, usize)); 4] = [
        ("vertices", |m| (m.pattern_vertices, m.graph_vertices)),
        ("edges", |m| (m.pattern_edges, m.graph_edges)),
        ("vertex_labels", |m| (m.pattern_vertex_labels, m.graph_vertex_labels)),
        ("edge_labels", |m| (m.pattern_edge_labels, m.graph_edge_labels)),
    ];
    let mut rows = Vec::new();
    for (name, key) in orderings {
        let mut bins: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, m) in metas.iter().enumerate() {
            bins.entry(key(m)).or_default().push(i);
        }
        for ((p_size, g_size), idx) in bins {
            let n = idx.len() as f64;
            let mean_truth = idx.iter().map(|&i| truths[i]).sum::<f64>() / n;
            let mean_pred = idx.iter().map(|&i| preds[i]).sum::<f64>() / n;
            let se: f64 = idx.iter().map(|&i| (preds[i] - truths[i]).powi(2)).sum();
            let ae: f64 = idx.iter().map(|&i| (preds[i] - truths[i]).abs()).sum();
            rows.push(BinRow {
                ordering: name,
                pattern_size: p_size,
                graph_size: g_size,
                examples: idx.len(),
                mean_truth,
                mean_pred,
                rmse: (se / n).sqrt(),
                mae: ae / n,
            });
        }
    }
    rows
}

/// Raw (unclamped) model prediction for one example.
pub fn predict_raw(model: &Model, pair: &EncodedPair) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, pair, false, None)?;
    Ok(tape.value(out).item())
}

/// Evaluates a model: negative predictions are clamped to zero before the
/// error metrics, since negative counts are meaningless.
pub fn evaluate(
    model: &Model,
    examples: &[EncodedPair],
    metas: Option<&[PairMeta]>,
) -> Result<Metrics, ModelError> {
    let start = Instant::now();
    let mut preds = Vec::with_capacity(examples.len());
    let mut truths = Vec::with_capacity(examples.len());
    for pair in examples {
        preds.push(predict_raw(model, pair)?.max(0.0));
        truths.push(pair.target);
    }
    Ok(Metrics::from_predictions(&preds, &truths, metas, start.elapsed()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Zero,
    Avg,
}

/// Metrics of the constant predictor: always 0, or always the training-split
/// mean count.
pub fn baseline_metrics(
    examples: &[EncodedPair],
    kind: BaselineKind,
    train_mean: f64,
    metas: Option<&[PairMeta]>,
) -> Metrics {
    let constant = match kind {
        BaselineKind::Zero => 0.0,
        BaselineKind::Avg => train_mean.max(0.0),
    };
    let preds = vec![constant; examples.len()];
    let truths: Vec<f64> = examples.iter().map(|e| e.target).collect();
    Metrics::from_predictions(&preds, &truths, metas, Duration::ZERO)
}

pub fn mean_count(examples: &[EncodedPair]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    examples.iter().map(|e| e.target).sum::<f64>() / examples.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_dev_rmse: f64,
    pub final_train_loss: f64,
    pub wall: Duration,
}

/// Initializes a fresh model and trains it. Deterministic given the seed.
pub fn train(
    config: &ModelConfig,
    dims: EncodingDims,
    train_set: &[EncodedPair],
    dev_set: &[EncodedPair],
    hyper: &Hyper,
) -> Result<(Model, TrainReport), TrainError> {
    let model = Model::init(config.clone(), dims, hyper.seed)?;
    train_from(model, train_set, dev_set, hyper)
}

/// Continues training an existing model, returning the best-dev parameters.
pub fn train_from(
    mut model: Model,
    train_set: &[EncodedPair],
    dev_set: &[EncodedPair],
    hyper: &Hyper,
) -> Result<(Model, TrainReport), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("train split"));
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptyDataset("dev split"));
    }
    let start = Instant::now();
    let adam = hyper.adam();
    let mut best_store: ParamStore = model.store.clone();
    let mut best_rmse = f64::INFINITY;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;
    let mut final_train_loss = f64::NAN;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..hyper.epochs {
        epochs_run = epoch + 1;
        order.shuffle(&mut stream(hyper.seed, "epoch-shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(hyper.batch_size.max(1)).enumerate() {
            model.store.zero_grads();
            let mut batch_loss = 0.0;
            for (k, &idx) in batch.iter().enumerate() {
                let pair = &train_set[idx];
                let mut tape = Tape::new();
                let drop_rng = stream(
                    hyper.seed,
                    "dropout",
                    ((epoch as u64) << 40) ^ ((batch_no as u64) << 20) ^ k as u64,
                );
                let pred = model.forward(&mut tape, pair, true, Some(drop_rng))?;
                let target = tape.constant(Tensor::scalar(pair.target));
                let loss = mse(&mut tape, pred, target)?;
                batch_loss += tape.value(loss).item();
                tape.backward(loss, &mut model.store)?;
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::DivergedLoss(epoch));
            }
            model.store.scale_grads(1.0 / batch.len() as f64);
            model.store.adamw_step(&adam)?;
            epoch_loss += batch_loss;
        }
        final_train_loss = epoch_loss / train_set.len() as f64;

        let dev = evaluate(&model, dev_set, None)?;
        if dev.rmse < best_rmse {
            best_rmse = dev.rmse;
            best_store = model.store.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if hyper.stop_at_dev_rmse.is_some_and(|t| best_rmse <= t) {
            break;
        }
        if since_best > hyper.patience {
            break;
        }
    }
    model.store = best_store;
    Ok((
        model,
        TrainReport {
            epochs_run,
            best_dev_rmse: best_rmse,
            final_train_loss,
            wall: start.elapsed(),
        },
    ))
}

/// Column maps that widen a model trained under the old specs to the new
/// ones, per the view the model consumes.
pub fn extension_maps(
    representation: Representation,
    old_pattern: &EncodingSpec,
    old_graph: &EncodingSpec,
    new_pattern: &EncodingSpec,
    new_graph: &EncodingSpec,
) -> Result<(Vec<usize>, Vec<usize>), CodecError> {
    match representation {
        Representation::Cnn => Ok((
            extension_column_map(old_pattern, new_pattern)?,
            extension_column_map(old_graph, new_graph)?,
        )),
        _ => {
            let m = vertex_feature_column_map(old_graph, new_graph)?;
            Ok((m.clone(), m))
        }
    }
}

/// Curriculum learning: train to convergence on the small dataset, widen the
/// input layers to the large dataset's encoding specs, then continue
/// training on the large dataset from that checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn curriculum(
    config: &ModelConfig,
    small_specs: (&EncodingSpec, &EncodingSpec),
    small_train: &[EncodedPair],
    small_dev: &[EncodedPair],
    large_specs: (&EncodingSpec, &EncodingSpec),
    large_train: &[EncodedPair],
    large_dev: &[EncodedPair],
    hyper_small: &Hyper,
    hyper_large: &Hyper,
) -> Result<(Model, TrainReport), TrainError> {
    let small_dims = EncodingDims::from_specs(small_specs.0, small_specs.1);
    let (model, _) = train(config, small_dims, small_train, small_dev, hyper_small)?;
    let (map_p, map_g) = extension_maps(
        config.representation,
        small_specs.0,
        small_specs.1,
        large_specs.0,
        large_specs.1,
    )?;
    let large_dims = EncodingDims::from_specs(large_specs.0, large_specs.1);
    let widened = model.extended(large_dims, &map_p, &map_g)?;
    train_from(widened, large_train, large_dev, hyper_large)
}

/// Fine-tunes a checkpointed model on a new dataset; with zero epochs the
/// model is returned unchanged.
pub fn fine_tune(
    model: Model,
    train_set: &[EncodedPair],
    dev_set: &[EncodedPair],
    hyper: &Hyper,
) -> Result<(Model, TrainReport), TrainError> {
    if hyper.epochs == 0 {
        return Ok((
            model,
            TrainReport {
                epochs_run: 0,
                best_dev_rmse: f64::NAN,
                final_train_loss: f64::NAN,
                wall: Duration::ZERO,
            },
        ));
    }
    train_from(model, train_set, dev_set, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_graph, generate_pattern, GraphParams, PatternParams};
    use crate::models::encode::encode_pair;
    use crate::models::Interaction;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            representation: Representation::Rgin,
            interaction: Interaction::SumPool,
            hidden: 8,
            memory_size: 2,
            steps: 1,
            heads: 2,
            layers: 1,
            blocks: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    fn small_data(n: usize, config: &ModelConfig) -> (Vec<EncodedPair>, EncodingSpec, EncodingSpec) {
        let ps = EncodingSpec::new(2, 4, 3, 3);
        let gs = EncodingSpec::new(2, 16, 3, 3);
        let pat = generate_pattern(
            &PatternParams { n_vertices: 3, n_edges: 3, n_vertex_labels: 2, n_edge_labels: 2 },
            &mut stream(3, "t", 0),
        )
        .unwrap();
        let gp = GraphParams {
            n_vertices: 12,
            n_edges: 24,
            n_vertex_labels: 3,
            n_edge_labels: 3,
            alpha: 0.6,
            beta: 512.0,
            max_count: 1024,
            max_avg_degree: 4.0,
            max_retries: 10,
        };
        let pairs = (0..n)
            .map(|i| {
                let ex = generate_graph(&pat, &gp, i as u64).unwrap();
                encode_pair(&pat, &ex.graph, &ps, &gs, config, ex.count as f64).unwrap()
            })
            .collect();
        (pairs, ps, gs)
    }

    #[test]
    fn memorizes_a_single_example() {
        let config = tiny_config();
        let (pairs, ps, gs) = small_data(1, &config);
        let dims = EncodingDims::from_specs(&ps, &gs);
        let hyper = Hyper {
            lr: 1e-2,
            epochs: 300,
            patience: 300,
            batch_size: 1,
            seed: 1,
            ..Hyper::default()
        };
        let (_, report) = train(&config, dims, &pairs, &pairs, &hyper).unwrap();
        assert!(
            report.best_dev_rmse < 0.3,
            "failed to memorize: dev rmse {}",
            report.best_dev_rmse
        );
    }

    #[test]
    fn training_is_deterministic() {
        let config = tiny_config();
        let (pairs, ps, gs) = small_data(6, &config);
        let dims = EncodingDims::from_specs(&ps, &gs);
        let hyper = Hyper { epochs: 3, batch_size: 2, seed: 7, ..Hyper::default() };
        let (m1, r1) = train(&config, dims, &pairs, &pairs, &hyper).unwrap();
        let (m2, r2) = train(&config, dims, &pairs, &pairs, &hyper).unwrap();
        assert_eq!(r1.best_dev_rmse, r2.best_dev_rmse);
        for name in m1.store.names() {
            assert_eq!(
                m1.store.value(name).unwrap().data(),
                m2.store.value(name).unwrap().data(),
                "parameter {name} differs between identical runs"
            );
        }
    }

    #[test]
    fn clamping_and_hand_metrics() {
        // predictions [-2, 3] vs truths [0, 3]: clamped to [0, 3] -> zero error
        let m = Metrics::from_predictions(
            &[(-2.0f64).max(0.0), 3.0],
            &[0.0, 3.0],
            None,
            Duration::ZERO,
        );
        assert_eq!((m.rmse, m.mae), (0.0, 0.0));

        let m = Metrics::from_predictions(&[1.0], &[3.0], None, Duration::ZERO);
        assert_eq!((m.rmse, m.mae), (2.0, 2.0));
    }

    #[test]
    fn baselines_match_hand_arithmetic() {
        let config = tiny_config();
        let mk = |counts: &[f64]| -> Vec<EncodedPair> {
            let (mut pairs, _, _) = small_data(counts.len(), &config);
            for (p, &c) in pairs.iter_mut().zip(counts) {
                p.target = c;
            }
            pairs
        };
        let zeros = mk(&[0.0, 0.0]);
        let m = baseline_metrics(&zeros, BaselineKind::Zero, 0.0, None);
        assert_eq!(m.rmse, 0.0);

        let data = mk(&[0.0, 4.0]);
        let m = baseline_metrics(&data, BaselineKind::Avg, 2.0, None);
        assert_eq!((m.rmse, m.mae), (2.0, 2.0));

        // Zero baseline MAE equals the mean truth
        let m = baseline_metrics(&data, BaselineKind::Zero, 0.0, None);
        assert_eq!(m.mae, 2.0);
    }

    #[test]
    fn fine_tune_zero_epochs_is_identity() {
        let config = tiny_config();
        let (pairs, ps, gs) = small_data(2, &config);
        let dims = EncodingDims::from_specs(&ps, &gs);
        let model = Model::init(config, dims, 5).unwrap();
        let before: Vec<_> = model.store.names().map(str::to_string).collect();
        let hyper = Hyper { epochs: 0, ..Hyper::default() };
        let (same, report) = fine_tune(model.clone(), &pairs, &pairs, &hyper).unwrap();
        assert_eq!(report.epochs_run, 0);
        for name in before {
            assert_eq!(
                model.store.value(&name).unwrap().data(),
                same.store.value(&name).unwrap().data()
            );
        }
    }

    #[test]
    fn curriculum_preserves_then_improves() {
        let config = tiny_config();
        let (small_pairs, ps, gs) = small_data(6, &config);
        // the "large" phase reuses the same graphs under wider specs
        let ps_new = EncodingSpec::new(2, 8, 4, 4);
        let gs_new = EncodingSpec::new(2, 32, 4, 4);
        let pat = generate_pattern(
            &PatternParams { n_vertices: 3, n_edges: 3, n_vertex_labels: 2, n_edge_labels: 2 },
            &mut stream(3, "t", 0),
        )
        .unwrap();
        let gp = GraphParams {
            n_vertices: 16,
            n_edges: 32,
            n_vertex_labels: 4,
            n_edge_labels: 4,
            alpha: 0.5,
            beta: 512.0,
            max_count: 1024,
            max_avg_degree: 4.0,
            max_retries: 10,
        };
        let large_pairs: Vec<EncodedPair> = (0..6)
            .map(|i| {
                let ex = generate_graph(&pat, &gp, 100 + i as u64).unwrap();
                encode_pair(&pat, &ex.graph, &ps_new, &gs_new, &config, ex.count as f64).unwrap()
            })
            .collect();
        let hyper = Hyper { epochs: 2, batch_size: 3, seed: 11, ..Hyper::default() };
        let (model, report) = curriculum(
            &config,
            (&ps, &gs),
            &small_pairs,
            &small_pairs,
            (&ps_new, &gs_new),
            &large_pairs,
            &large_pairs,
            &hyper,
            &hyper,
        )
        .unwrap();
        assert!(report.best_dev_rmse.is_finite());
        // widened input layer accepts the new width
        assert_eq!(
            model.store.value("inp.g.w").unwrap().cols(),
            EncodingDims::from_specs(&ps_new, &gs_new).feat
        );
    }
}
