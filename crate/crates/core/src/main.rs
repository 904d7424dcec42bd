//! Command-line entry points for the counting workbench: one subcommand per
//! pipeline stage, from dataset generation through training, evaluation and
//! the VF2-versus-neural benchmark.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use isocount::bench::run_benchmark;
use isocount::codec::{minimum_code, multi_hot_encode};
use isocount::count::{count_brute_force, vf2_count, CountOptions};
use isocount::dataset::{
    build_dataset, encode_split, generate_patterns, load_dataset, parse_interaction,
    parse_representation, read_graphs_file, read_patterns_file, save_dataset,
    write_patterns_file, GenConfig,
};
use isocount::graph::{Graph, Pattern};
use isocount::models::{EncodingDims, Model, ModelConfig};
use isocount::mutag::import_mutag_dataset;
use isocount::pipeline::{load_model, save_model, write_bins_csv, write_metrics};
use isocount::trainer::{
    baseline_metrics, evaluate, fine_tune, mean_count, train, BaselineKind, Hyper,
};

#[derive(Parser)]
#[command(name = "isocount", about = "subgraph isomorphism counting workbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed for every random stream of this invocation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker pool size for generation, counting, and benchmarks.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-pair wall-clock limit for exact counting, in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate query patterns from a config grid.
    GenPatterns {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// How many patterns (defaults to the config's pattern.count).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a full dataset (patterns, graphs, exact counts, splits).
    GenGraphs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip storing the isomorphism mappings in the pair records.
        #[arg(long)]
        no_mappings: bool,
        /// Recount every pair with VF2 after generation and fail on any
        /// mismatch.
        #[arg(long)]
        verify: bool,
    },
    /// Exactly count pattern occurrences: dataset pairs, or the cross
    /// product of a pattern file and a graph file.
    Count {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with_all = ["patterns", "graphs"])]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, requires = "graphs")]
        patterns: Option<PathBuf>,
        #[arg(long, requires = "patterns")]
        graphs: Option<PathBuf>,
        /// vf2 or brute
        #[arg(long, default_value = "vf2")]
        engine: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// For dataset mode: compare against the recorded counts.
        #[arg(long)]
        verify: bool,
    },
    /// Emit the sequence-view encodings (minimum codes and multi-hot shape)
    /// of one split.
    Encode {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a counting model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Generation config whose [model] section seeds the architecture.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        hyper: HyperFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split (plus Zero/Avg baselines).
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training a checkpoint on a new dataset at the real-data
    /// learning rate.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        hyper: HyperFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare VF2 wall time against batched neural inference.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Benchmark at most this many pairs.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Import a TU-format benchmark: graphs, generated query patterns and
    /// exact counts for every pair.
    ImportMutag {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "MUTAG")]
        name: String,
        #[arg(long, default_value_t = 24)]
        patterns: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct ModelFlags {
    #[arg(long)]
    representation: Option<String>,
    #[arg(long)]
    interaction: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Use separate representation stacks for pattern and graph.
    #[arg(long)]
    unshared: bool,
    #[arg(long)]
    no_filter: bool,
}

impl ModelFlags {
    fn apply(&self, mut config: ModelConfig) -> Result<ModelConfig> {
        if let Some(r) = &self.representation {
            config.representation = parse_representation(r)?;
        }
        if let Some(i) = &self.interaction {
            config.interaction = parse_interaction(i)?;
        }
        if let Some(v) = self.hidden {
            config.hidden = v;
        }
        if let Some(v) = self.memory {
            config.memory_size = v;
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.heads {
            config.heads = v;
        }
        if let Some(v) = self.layers {
            config.layers = v;
        }
        if let Some(v) = self.blocks {
            config.blocks = v;
        }
        if let Some(v) = self.dropout {
            config.dropout = v;
        }
        if self.unshared {
            config.shared_representation = false;
        }
        if self.no_filter {
            config.use_filter_net = false;
        }
        Ok(config)
    }
}

#[derive(Args, Clone, Default)]
struct HyperFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
}

impl HyperFlags {
    fn apply(&self, mut hyper: Hyper) -> Hyper {
        if let Some(v) = self.lr {
            hyper.lr = v;
        }
        if let Some(v) = self.epochs {
            hyper.epochs = v;
        }
        if let Some(v) = self.batch_size {
            hyper.batch_size = v;
        }
        if let Some(v) = self.patience {
            hyper.patience = v;
        }
        if let Some(v) = self.weight_decay {
            hyper.weight_decay = v;
        }
        if let Some(v) = self.clip_norm {
            hyper.clip_norm = v;
        }
        hyper
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenPatterns { common, config, count, out } => {
            let cfg = GenConfig::from_path(&config)?;
            let n = count.unwrap_or(cfg.pattern.count);
            let patterns = generate_patterns(&cfg, n, common.seed)?;
            let indexed: Vec<(u32, Pattern)> =
                patterns.into_iter().enumerate().map(|(i, p)| (i as u32, p)).collect();
            write_patterns_file(&out, &indexed)?;
            println!("wrote {} patterns to {}", indexed.len(), out.display());
        }
        Command::GenGraphs { common, config, out, no_mappings, verify } => {
            let cfg = GenConfig::from_path(&config)?;
            let ds = build_dataset(&cfg, common.seed, common.jobs, !no_mappings)?;
            if verify {
                ds.verify()?;
                println!("verified: every recorded count matches a VF2 recount");
            }
            save_dataset(&ds, &out)?;
            let sizes: Vec<String> = ds
                .manifest
                .splits
                .iter()
                .map(|s| format!("{}={}", s.split, ds.splits[&s.split].len()))
                .collect();
            println!(
                "wrote dataset '{}' with {} patterns, {} graphs ({}) to {}",
                ds.manifest.name,
                ds.patterns.len(),
                ds.graphs.len(),
                sizes.join(", "),
                out.display()
            );
        }
        Command::Count { common, dataset, split, patterns, graphs, engine, out, verify } => {
            let timeout = common.timeout.map(Duration::from_secs_f64);
            let opts = CountOptions { timeout, ..CountOptions::default() };
            let work: Vec<(u32, u32, Pattern, Graph, Option<u64>)> = if let Some(root) = dataset {
                let ds = load_dataset(&root)?;
                let records = ds
                    .splits
                    .get(&split)
                    .with_context(|| format!("no split {split}"))?;
                records
                    .iter()
                    .map(|r| {
                        (
                            r.pattern_id,
                            r.graph_id,
                            ds.pattern_by_id(r.pattern_id).unwrap().clone(),
                            ds.graph_by_id(r.graph_id).unwrap().clone(),
                            Some(r.count),
                        )
                    })
                    .collect()
            } else {
                let pfile = patterns.context("--patterns or --dataset required")?;
                let gfile = graphs.context("--graphs required with --patterns")?;
                let ps = read_patterns_file(&pfile)?;
                let gs = read_graphs_file(&gfile)?;
                ps.iter()
                    .flat_map(|(pid, p)| {
                        gs.iter().map(move |(gid, g)| (*pid, *gid, p.clone(), g.clone(), None))
                    })
                    .collect()
            };

            let pool = rayon::ThreadPoolBuilder::new().num_threads(common.jobs.max(1)).build()?;
            use rayon::prelude::*;
            let results: Vec<Result<(u32, u32, u64, f64, Option<u64>)>> = pool.install(|| {
                work.par_iter()
                    .map(|(pid, gid, p, g, expected)| {
                        let r = match engine.as_str() {
                            "brute" => count_brute_force(
                                p,
                                g,
                                &CountOptions { brute_force_guard: usize::MAX, ..opts.clone() },
                            )?,
                            _ => vf2_count(p, g, &opts)?,
                        };
                        Ok((*pid, *gid, r.count, r.elapsed.as_secs_f64(), *expected))
                    })
                    .collect()
            });
            let mut lines = String::new();
            let mut mismatches = 0;
            for r in results {
                let (pid, gid, count, secs, expected) = r?;
                if verify {
                    if let Some(e) = expected {
                        if e != count {
                            mismatches += 1;
                            eprintln!("pair ({pid},{gid}): recorded {e} but counted {count}");
                        }
                    }
                }
                lines.push_str(&format!(
                    "{}\n",
                    serde_json::json!({"pattern_id": pid, "graph_id": gid, "count": count, "seconds": secs})
                ));
            }
            match out {
                Some(path) => std::fs::write(&path, lines)?,
                None => print!("{lines}"),
            }
            if verify && mismatches > 0 {
                bail!("{mismatches} recorded counts failed verification");
            }
        }
        Command::Encode { dataset, split, out } => {
            let ds = load_dataset(&dataset)?;
            let records = ds.splits.get(&split).with_context(|| format!("no split {split}"))?;
            let p_spec = ds.manifest.pattern_spec();
            let g_spec = ds.manifest.graph_spec();
            let mut lines = String::new();
            for r in records {
                let p = ds.pattern_by_id(r.pattern_id).unwrap();
                let g = ds.graph_by_id(r.graph_id).unwrap();
                let p_code = minimum_code(p);
                let g_code = minimum_code(g);
                let p_enc = multi_hot_encode(&p_code, &p_spec)?;
                let g_enc = multi_hot_encode(&g_code, &g_spec)?;
                let tuples =
                    |c: &[isocount::codec::EdgeTuple]| -> Vec<[u32; 5]> {
                        c.iter().map(|t| [t.u, t.v, t.xu, t.y, t.xv]).collect()
                    };
                lines.push_str(&format!(
                    "{}\n",
                    serde_json::json!({
                        "pattern_id": r.pattern_id,
                        "graph_id": r.graph_id,
                        "pattern_code": tuples(&p_code),
                        "graph_code": tuples(&g_code),
                        "pattern_rows": p_enc.rows, "pattern_width": p_enc.width,
                        "graph_rows": g_enc.rows, "graph_width": g_enc.width,
                    })
                ));
            }
            std::fs::write(&out, lines)?;
            println!("wrote encodings for {} pairs to {}", records.len(), out.display());
        }
        Command::Train { common, dataset, config, model, hyper, out } => {
            let ds = load_dataset(&dataset)?;
            let base_config = match &config {
                Some(path) => GenConfig::from_path(path)?.model_config()?,
                None => ModelConfig::default(),
            };
            let model_config = model.apply(base_config)?;
            let mut h = Hyper { seed: common.seed, ..Hyper::default() };
            if let Some(path) = &config {
                let cfg = GenConfig::from_path(path)?;
                if let Some(v) = cfg.model.lr {
                    h.lr = v;
                }
                if let Some(v) = cfg.model.batch_size {
                    h.batch_size = v;
                }
                if let Some(v) = cfg.model.epochs {
                    h.epochs = v;
                }
            }
            let h = hyper.apply(h);
            let (train_pairs, _) = encode_split(&ds, "train", &model_config)?;
            let (dev_pairs, _) = encode_split(&ds, "dev", &model_config)?;
            let p_spec = ds.manifest.pattern_spec();
            let g_spec = ds.manifest.graph_spec();
            let dims = EncodingDims::from_specs(&p_spec, &g_spec);
            let (trained, report) = train(&model_config, dims, &train_pairs, &dev_pairs, &h)?;
            save_model(&trained, &p_spec, &g_spec, &out)?;
            println!(
                "trained {} epochs, best dev rmse {:.4}, wall {:?}; checkpoint at {}",
                report.epochs_run, report.best_dev_rmse, report.wall, out.display()
            );
        }
        Command::Eval { dataset, checkpoint, split, out } => {
            let ds = load_dataset(&dataset)?;
            let saved = load_model(&checkpoint)?;
            let (pairs, metas) = encode_split(&ds, &split, &saved.model.config)?;
            let metrics = evaluate(&saved.model, &pairs, Some(&metas))?;
            let (train_pairs, _) = encode_split(&ds, "train", &saved.model.config)?;
            let train_mean = mean_count(&train_pairs);
            let zero = baseline_metrics(&pairs, BaselineKind::Zero, 0.0, None);
            let avg = baseline_metrics(&pairs, BaselineKind::Avg, train_mean, None);
            write_metrics(&metrics, "model", &out)?;
            write_metrics(&zero, "zero", &out)?;
            write_metrics(&avg, "avg", &out)?;
            write_bins_csv(&metrics.bins, &out.join("bins.csv"))?;
            println!(
                "{split}: model rmse={:.4} mae={:.4} | zero rmse={:.4} | avg rmse={:.4}",
                metrics.rmse, metrics.mae, zero.rmse, avg.rmse
            );
        }
        Command::Finetune { common, dataset, checkpoint, hyper, out } => {
            let ds = load_dataset(&dataset)?;
            let saved = load_model(&checkpoint)?;
            // widen the checkpoint to this dataset's specs when needed
            let p_spec = ds.manifest.pattern_spec();
            let g_spec = ds.manifest.graph_spec();
            let model = if saved.pattern_spec == p_spec && saved.graph_spec == g_spec {
                saved.model
            } else {
                let (map_p, map_g) = isocount::trainer::extension_maps(
                    saved.model.config.representation,
                    &saved.pattern_spec,
                    &saved.graph_spec,
                    &p_spec,
                    &g_spec,
                )?;
                let dims = EncodingDims::from_specs(&p_spec, &g_spec);
                saved.model.extended(dims, &map_p, &map_g)?
            };
            let config = model.config.clone();
            let h = hyper.apply(Hyper { lr: 1e-4, seed: common.seed, ..Hyper::default() });
            let (train_pairs, _) = encode_split(&ds, "train", &config)?;
            let (dev_pairs, _) = encode_split(&ds, "dev", &config)?;
            let (tuned, report) = fine_tune(model, &train_pairs, &dev_pairs, &h)?;
            save_model(&tuned, &p_spec, &g_spec, &out)?;
            println!(
                "fine-tuned {} epochs, best dev rmse {:.4}; checkpoint at {}",
                report.epochs_run, report.best_dev_rmse, out.display()
            );
        }
        Command::Bench { common, dataset, checkpoint, split, limit, out } => {
            let ds = load_dataset(&dataset)?;
            let saved = load_model(&checkpoint)?;
            let records = ds.splits.get(&split).with_context(|| format!("no split {split}"))?;
            let n = limit.unwrap_or(records.len()).min(records.len());
            let pairs: Vec<(Pattern, Graph, u64)> = records[..n]
                .iter()
                .map(|r| {
                    (
                        ds.pattern_by_id(r.pattern_id).unwrap().clone(),
                        ds.graph_by_id(r.graph_id).unwrap().clone(),
                        r.count,
                    )
                })
                .collect();
            let report = run_benchmark(
                &saved.model,
                &pairs,
                &saved.pattern_spec,
                &saved.graph_spec,
                common.jobs,
                common.timeout.map(Duration::from_secs_f64),
            )?;
            println!(
                "{n} pairs: vf2 total {:?} (wall {:?}), neural total {:?} (wall {:?}), speedup {:.1}x, rmse {:.4}, mae {:.4}",
                report.vf2_total,
                report.vf2_wall,
                report.neural_total,
                report.neural_wall,
                report.speedup,
                report.rmse,
                report.mae
            );
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            }
        }
        Command::ImportMutag { common, root, name, patterns, out } => {
            let ds = import_mutag_dataset(&root, &name, patterns, common.seed)?;
            save_dataset(&ds, &out)?;
            let total: usize = ds.splits.values().map(Vec::len).sum();
            println!(
                "imported {} graphs, generated {} patterns, counted {} pairs; dataset at {}",
                ds.graphs.len(),
                ds.patterns.len(),
                total,
                out.display()
            );
        }
    }
    Ok(())
}
