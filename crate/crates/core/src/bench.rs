//! VF2-versus-neural runtime comparison over a set of counted pairs.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codec::EncodingSpec;
use crate::count::{vf2_count, CountError, CountOptions};
use crate::graph::{Graph, Pattern};
use crate::models::encode::encode_pair;
use crate::models::{Model, ModelError};
use crate::trainer::{predict_raw, Metrics};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("pair {index}: {source}")]
    Vf2 { index: usize, source: CountError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("encoding: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct PairTiming {
    pub vf2: Duration,
    pub neural: Duration,
    pub truth: u64,
    pub vf2_count: u64,
    pub prediction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub pairs: Vec<PairTiming>,
    /// Sums of the per-pair times.
    pub vf2_total: Duration,
    pub neural_total: Duration,
    /// Wall time of each whole phase (differs from the sums when jobs > 1).
    pub vf2_wall: Duration,
    pub neural_wall: Duration,
    pub speedup: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// Times VF2 across the pairs (parallel over `jobs` workers) and the neural
/// model over the same pairs (encode + forward, I/O excluded), then reports
/// totals, speedup and the neural side's error metrics.
pub fn run_benchmark(
    model: &Model,
    pairs: &[(Pattern, Graph, u64)],
    pattern_spec: &EncodingSpec,
    graph_spec: &EncodingSpec,
    jobs: usize,
    timeout: Option<Duration>,
) -> Result<BenchReport, BenchError> {
    let opts = CountOptions { timeout, ..CountOptions::default() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("worker pool");
    let vf2_phase = Instant::now();
    let vf2_results: Vec<Result<(Duration, u64), BenchError>> = pool.install(|| {
        pairs
            .par_iter()
            .enumerate()
            .map(|(index, (pattern, graph, _))| {
                let r = vf2_count(pattern, graph, &opts)
                    .map_err(|source| BenchError::Vf2 { index, source })?;
                Ok((r.elapsed, r.count))
            })
            .collect()
    });
    let vf2_wall = vf2_phase.elapsed();

    let neural_phase = Instant::now();
    let mut timings = Vec::with_capacity(pairs.len());
    let mut preds = Vec::with_capacity(pairs.len());
    let mut truths = Vec::with_capacity(pairs.len());
    for (i, (pattern, graph, truth)) in pairs.iter().enumerate() {
        let (vf2_elapsed, vf2_n) = vf2_results[i].as_ref().map_err(|e| match e {
            BenchError::Vf2 { index, source } => BenchError::Encode(format!(
                "vf2 failed on pair {index}: {source}"
            )),
            _ => unreachable!(),
        })?.clone();
        let t0 = Instant::now();
        let pair = encode_pair(pattern, graph, pattern_spec, graph_spec, &model.config, *truth as f64)
            .map_err(|e| BenchError::Encode(e.to_string()))?;
        let prediction = predict_raw(model, &pair)?.max(0.0);
        let neural = t0.elapsed();
        timings.push(PairTiming {
            vf2: vf2_elapsed,
            neural,
            truth: *truth,
            vf2_count: vf2_n,
            prediction,
        });
        preds.push(prediction);
        truths.push(*truth as f64);
    }
    let neural_wall = neural_phase.elapsed();

    let vf2_total: Duration = timings.iter().map(|t| t.vf2).sum();
    let neural_total: Duration = timings.iter().map(|t| t.neural).sum();
    let metrics = Metrics::from_predictions(&preds, &truths, None, neural_wall);
    Ok(BenchReport {
        pairs: timings,
        vf2_total,
        neural_total,
        vf2_wall,
        neural_wall,
        speedup: vf2_total.as_secs_f64() / neural_total.as_secs_f64().max(1e-12),
        rmse: metrics.rmse,
        mae: metrics.mae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_graph, generate_pattern, GraphParams, PatternParams};
    use crate::models::{EncodingDims, Interaction, ModelConfig, Representation};
    use crate::rng::stream;

    #[test]
    fn report_totals_equal_per_pair_sums_and_predictions_are_deterministic() {
        let pat = generate_pattern(
            &PatternParams { n_vertices: 3, n_edges: 3, n_vertex_labels: 2, n_edge_labels: 2 },
            &mut stream(1, "b", 0),
        )
        .unwrap();
        let gp = GraphParams {
            n_vertices: 16,
            n_edges: 32,
            n_vertex_labels: 3,
            n_edge_labels: 3,
            alpha: 0.5,
            beta: 512.0,
            max_count: 1024,
            max_avg_degree: 4.0,
            max_retries: 10,
        };
        let pairs: Vec<(Pattern, Graph, u64)> = (0..4)
            .map(|i| {
                let ex = generate_graph(&pat, &gp, i).unwrap();
                (pat.clone(), ex.graph, ex.count)
            })
            .collect();
        let ps = EncodingSpec::new(2, 4, 3, 3);
        let gs = EncodingSpec::new(2, 16, 3, 3);
        let config = ModelConfig {
            representation: Representation::Rgin,
            interaction: Interaction::SumPool,
            hidden: 8,
            heads: 2,
            blocks: 2,
            layers: 1,
            ..ModelConfig::default()
        };
        let model =
            Model::init(config, EncodingDims::from_specs(&ps, &gs), 3).unwrap();
        let a = run_benchmark(&model, &pairs, &ps, &gs, 1, None).unwrap();
        let b = run_benchmark(&model, &pairs, &ps, &gs, 1, None).unwrap();
        assert_eq!(a.vf2_total, a.pairs.iter().map(|t| t.vf2).sum());
        assert_eq!(a.neural_total, a.pairs.iter().map(|t| t.neural).sum());
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(x.prediction, y.prediction);
            assert_eq!(x.vf2_count, x.truth);
        }
    }
}
