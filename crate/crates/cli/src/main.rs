//! Command-line workflows over the crossrank toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use crossrank::fusion::{fuse_multilevel, FeatureSequence, FusionParams};
use crossrank::gcn::{local_features, GcnParams};
use crossrank::graph::{assemble_graph, ObjectGraph};
use crossrank::io;
use crossrank::metrics::{
    mean_recall, recall_at_k, recall_from_rankings, Direction, GroundTruth, SimilarityMatrix,
};
use crossrank::pipeline::{
    dataset_ground_truth, generate_synthetic, infer_similarity, train_toy, triplet_gradient_check,
    ArchConfig, GraphConfig, ModelParams, SynthConfig, SyntheticScene, DEFAULT_MARGIN,
};
use crossrank::rerank::{baseline_reverse_rerank, multivariate_rerank, RerankConfig};
use crossrank::CoreError;

const EXIT_CODE_HELP: &str = "\
Exit codes:
  0   success
  1   check failed (gradcheck above tolerance)
  2   usage error
  3   io error            (file access)
  4   parse error         (malformed CSV/JSON input)
  5   validation error    (well-formed input out of range)
  6   shape error         (dimension or arity mismatch)
  7   lookup error        (unknown identifier)
  8   degenerate input    (zero norm, vanishing denominator, bad degree)
  9   contract violation  (precondition broken)
  10  non-finite value
  11  vocabulary error    (unknown category or token)
  12  json error";

fn exit_code(err: &CoreError) -> u8 {
    match err.category() {
        "io" => 3,
        "parse" => 4,
        "validation" => 5,
        "shape" => 6,
        "lookup" => 7,
        "degenerate" => 8,
        "contract" => 9,
        "non-finite" => 10,
        "vocabulary" => 11,
        "json" => 12,
        _ => 1,
    }
}

#[derive(Parser)]
#[command(
    name = "crossrank",
    version,
    about = "Cross-modal retrieval numerics: similarity matrices, multivariate re-ranking, \
             detection graphs, attention fusion, and a deterministic toy training pipeline",
    after_long_help = EXIT_CODE_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionFlag {
    I2t,
    T2i,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClampFlag {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Re-rank each query's top-k candidates by forward rank, reverse
    /// retrieval, and significance components.
    ///
    /// The similarity CSV is stored row-per-query in i2t orientation;
    /// `--direction t2i` re-ranks the transposed matrix instead. The output
    /// has one row per query: alternating id,score pairs for the rescored
    /// block followed by the remaining target ids.
    Rerank {
        /// Input similarity CSV.
        #[arg(long)]
        sim: PathBuf,
        #[arg(long, value_enum, default_value = "i2t")]
        direction: DirectionFlag,
        /// Forward candidates per query.
        #[arg(long, default_value_t = 25)]
        k: usize,
        /// Reverse candidates per forward candidate.
        #[arg(long, default_value_t = 25)]
        l: usize,
        /// Rank decay coefficient.
        #[arg(long, default_value_t = 0.1)]
        xi: f64,
        /// Weight of the reverse component.
        #[arg(long, default_value_t = 0.5)]
        wc1: f64,
        /// Weight of the significance component.
        #[arg(long, default_value_t = 1.25)]
        wc2: f64,
        /// Use the simplified reverse-rank baseline instead.
        #[arg(long, default_value_t = false)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },

    /// Evaluate R@k and mR against ground truth.
    ///
    /// Reads either a similarity CSV (`--sim`, optionally both directions)
    /// or a ranking CSV produced by `rerank` (`--ranked`). The mR line is
    /// the mean of the printed recalls; with `--ks 1,5,10 --both-directions`
    /// that is the canonical six-value mR.
    #[command(group(ArgGroup::new("input").required(true).args(["sim", "ranked"])))]
    Eval {
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Ranking CSV from `rerank` instead of a similarity CSV.
        #[arg(long)]
        ranked: Option<PathBuf>,
        /// Ground-truth JSON: {"positives": {"<query>": ["<target>", ...]}}.
        #[arg(long)]
        gt: PathBuf,
        /// Cutoffs, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        ks: Vec<usize>,
        /// Also evaluate the transposed matrix with inverted ground truth.
        #[arg(long, default_value_t = false)]
        both_directions: bool,
    },

    /// Merge detections, rank by area, and emit the enhanced adjacency plus
    /// the normalized propagation operator.
    Graph {
        /// Detections JSONL, one object per line.
        #[arg(long)]
        detections: PathBuf,
        /// Filtration threshold in (0,1).
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        /// Area-rank boost factor.
        #[arg(long, default_value_t = 1.15)]
        boost: f64,
        /// Clamp negative kernel values at zero.
        #[arg(long, value_enum, default_value = "on")]
        clamp: ClampFlag,
        #[arg(long)]
        out: PathBuf,
    },

    /// Run graph-convolution layers over an assembled graph.
    Gcn {
        /// Graph JSON from `graph`.
        #[arg(long)]
        graph: PathBuf,
        /// Layer weights JSON: {"category_vocab": [...], "layers": [...]}.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Fuse global and local feature sequences into one visual vector.
    Fuse {
        /// Global feature sequence JSON.
        #[arg(long)]
        global: PathBuf,
        /// Local feature sequence JSON; omit to trigger the global-only
        /// fallback.
        #[arg(long)]
        local: Option<PathBuf>,
        /// Fusion weights JSON.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Generate a deterministic synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        pairs: usize,
        #[arg(long, default_value_t = 32)]
        vocab: usize,
        #[arg(long, default_value_t = 4)]
        categories: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Cross-modal signal strength; 0 leaves only noise.
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the diagonal ground truth JSON here.
        #[arg(long)]
        gt_out: Option<PathBuf>,
    },

    /// Train the full model on a synthetic dataset with finite-difference
    /// gradients.
    TrainToy {
        /// Dataset JSON from `synth`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        /// Parameter initialization seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output weights JSON.
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV (step,loss).
        #[arg(long)]
        trace: PathBuf,
    },

    /// Encode a dataset with trained weights and write the similarity CSV.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Check the analytic triplet-loss gradient against central differences
    /// at the model's embedding width.
    Gradcheck {
        #[arg(long)]
        params: PathBuf,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CoreError> {
    match command {
        Command::Rerank {
            sim,
            direction,
            k,
            l,
            xi,
            wc1,
            wc2,
            baseline,
            out,
        } => {
            let matrix = io::read_similarity_csv(&sim, Direction::I2t)?;
            let matrix = match direction {
                DirectionFlag::I2t => matrix,
                DirectionFlag::T2i => matrix.transpose(),
            };
            let lists = if baseline {
                baseline_reverse_rerank(&matrix, k, l)?
            } else {
                let config = RerankConfig {
                    k,
                    l,
                    xi,
                    w_c1: wc1,
                    w_c2: wc2,
                };
                multivariate_rerank(&matrix, &config)?
            };
            io::write_reranked_csv(&out, &lists)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Eval {
            sim,
            ranked,
            gt,
            ks,
            both_directions,
        } => {
            let gt: GroundTruth = io::read_json(&gt)?;
            let mut recalls = Vec::new();
            if let Some(path) = sim {
                let matrix = io::read_similarity_csv(&path, Direction::I2t)?;
                let label = |d: Direction| match d {
                    Direction::I2t => "(i2t)",
                    Direction::T2i => "(t2i)",
                    Direction::Generic => "",
                };
                let mut evaluate = |m: &SimilarityMatrix<f64>, g: &GroundTruth| -> Result<(), CoreError> {
                    for &k in &ks {
                        let r = recall_at_k(m, g, k)?;
                        println!("R@{k}{} = {r:.2}", label(m.direction()));
                        recalls.push(r);
                    }
                    Ok(())
                };
                evaluate(&matrix, &gt)?;
                if both_directions {
                    evaluate(&matrix.transpose(), &gt.inverted()?)?;
                }
            } else {
                let rankings = io::read_rankings_csv(&ranked.expect("clap group"))?;
                for &k in &ks {
                    let r = recall_from_rankings(&rankings, &gt, k)?;
                    println!("R@{k} = {r:.2}");
                    recalls.push(r);
                }
            }
            let mr = match recalls.len() {
                6 => mean_recall(&recalls)?,
                n => recalls.iter().sum::<f64>() / n as f64,
            };
            println!("mR = {mr:.2}");
            Ok(ExitCode::SUCCESS)
        }

        Command::Graph {
            detections,
            threshold,
            boost,
            clamp,
            out,
        } => {
            let dets = io::read_detections_jsonl(&detections)?;
            let graph = assemble_graph(&dets, threshold, boost, matches!(clamp, ClampFlag::On))?;
            io::write_json(&out, &graph)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Gcn { graph, params, out } => {
            let graph: ObjectGraph<f64> = io::read_json(&graph)?;
            let params: GcnParams<f64> = io::read_json(&params)?;
            let features = local_features(&graph, &params)?.ok_or_else(|| {
                CoreError::Contract("graph has no nodes, so there are no local features".into())
            })?;
            io::write_json(&out, &features)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Fuse {
            global,
            local,
            params,
            out,
        } => {
            let global: FeatureSequence<f64> = io::read_json(&global)?;
            let local: Option<FeatureSequence<f64>> =
                local.map(|p| io::read_json(&p)).transpose()?;
            let params: FusionParams<f64> = io::read_json(&params)?;
            let fused = fuse_multilevel(&global, local.as_ref(), &params)?;
            io::write_json(&out, &fused)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Synth {
            seed,
            pairs,
            vocab,
            categories,
            dim,
            separation,
            out,
            gt_out,
        } => {
            let config = SynthConfig {
                num_pairs: pairs,
                vocab_size: vocab,
                num_categories: categories,
                dim,
                separation,
            };
            let scenes = generate_synthetic(seed, &config)?;
            io::write_json(&out, &scenes)?;
            if let Some(path) = gt_out {
                io::write_json(&path, &dataset_ground_truth(&scenes)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::TrainToy {
            data,
            steps,
            lr,
            seed,
            out,
            trace,
        } => {
            let scenes: Vec<SyntheticScene> = io::read_json(&data)?;
            let arch = ArchConfig::from_dataset(&scenes)?;
            let init = ModelParams::init_random(&arch, GraphConfig::default(), seed)?;
            let outcome = train_toy(&scenes, init, steps, lr, DEFAULT_MARGIN)?;
            io::write_json(&out, &outcome.params)?;
            io::write_trace_csv(&trace, &outcome.trace)?;
            println!(
                "trained {} parameters for {steps} steps: loss {} -> {}",
                outcome.params.num_params(),
                outcome.trace[0],
                outcome.trace.last().expect("nonempty trace")
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Infer { data, params, out } => {
            let scenes: Vec<SyntheticScene> = io::read_json(&data)?;
            let params: ModelParams = io::read_json(&params)?;
            let sim = infer_similarity(&scenes, &params)?;
            io::write_similarity_csv(&out, &sim)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Gradcheck {
            params,
            h,
            tolerance,
        } => {
            let params: ModelParams = io::read_json(&params)?;
            let dim = params.text.mlp_bias.dim();
            let err = triplet_gradient_check(dim, h, DEFAULT_MARGIN, 0xC0FFEE)?;
            println!("max relative error = {err:.3e} (tolerance {tolerance:.3e})");
            if err <= tolerance {
                println!("gradient check passed");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("gradient check FAILED");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
