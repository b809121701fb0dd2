use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use unitax::gradcheck::{self, GradcheckConfig};
use unitax::label_space::{
    build_training_taxonomy, eval_mapping, training_matrix, MappingMatrix, TaxonomyKind,
    TrainingTaxonomy,
};
use unitax::loss::{LossConfig, LossVariant};
use unitax::metrics::{ConfusionMatrix, IouReport};
use unitax::seed::SEED_ENV;
use unitax::taxonomy::{load_taxonomy_file, relate, universal_to_json, TaxonomySet};
use unitax::trainer::{
    generate, run_unlabeled_concept_experiment, train, universal_test_set, ExperimentConfig,
    LinearSoftmaxModel, ModelVariant, SyntheticSpec, TrainConfig,
};

/// Universal taxonomies over heterogeneous label spaces, partial-label
/// losses and a desk-scale trainer.
#[derive(Debug, Parser)]
#[command(name = "unitax", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile the universal taxonomy and report class counts.
    Compile {
        input: PathBuf,
        /// Write the universal taxonomy with its mappings here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show datasets, class relations and the universal classes.
    Inspect { input: PathBuf },
    /// Export mapping matrices of a training taxonomy.
    ExportMatrices {
        input: PathBuf,
        #[arg(long, default_value = "universal")]
        kind: TaxonomyKind,
        #[arg(long, value_enum, default_value_t = Direction::Train)]
        direction: Direction,
        /// Restrict to one dataset; required for CSV.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check loss gradients against central finite differences.
    Gradcheck {
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Perturb the analytic gradients before comparing.
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
    /// Train a linear softmax model on a synthetic spec and evaluate it.
    SynthTrain {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "nll-plus")]
        loss: LossVariant,
        #[arg(long, default_value = "universal")]
        kind: TaxonomyKind,
        /// Overrides the seed stored in the spec.
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 250)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 5e-2)]
        lr_max: f64,
        #[arg(long, default_value_t = 6e-4)]
        lr_min: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Standard deviation of the initial weights.
        #[arg(long, default_value_t = 0.01)]
        init_std: f64,
        /// Repeat samples of a dataset class, as CLASS=TIMES (repeatable).
        #[arg(long, value_parser = parse_oversample)]
        oversample: Vec<(String, usize)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unlabeled-concept experiment over six model variants.
    Experiment {
        #[command(flatten)]
        seed: SeedArg,
        /// Only train these variants (repeatable).
        #[arg(long)]
        loss: Vec<ModelVariant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        list_variants: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// IoU report from ground truth and class probabilities.
    Evaluate {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SeedArg {
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Failure kinds, mapped onto exit codes.
enum Failure {
    Check(String),
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Compile { input, out } => compile(&input, out.as_deref()),
        Command::Inspect { input } => inspect(&input),
        Command::ExportMatrices {
            input,
            kind,
            direction,
            dataset,
            format,
            out,
        } => export_matrices(
            &input,
            kind,
            direction,
            dataset.as_deref(),
            format,
            out.as_deref(),
        ),
        Command::Gradcheck {
            seed,
            n,
            tolerance,
            inject_bug,
        } => run_gradcheck(seed.seed, n as usize, tolerance, inject_bug),
        Command::SynthTrain {
            spec,
            loss,
            kind,
            seed,
            epochs,
            batch_size,
            lr_max,
            lr_min,
            gamma,
            init_std,
            oversample,
            out,
        } => {
            let config = TrainConfig {
                epochs,
                batch_size,
                lr_max,
                lr_min,
                loss: LossConfig {
                    gamma,
                    ..LossConfig::plain(loss)
                },
                oversample: oversample.into_iter().collect(),
                ..TrainConfig::default()
            };
            synth_train(&spec, kind, seed, init_std, config, out.as_deref())
        }
        Command::Experiment {
            seed,
            loss,
            epochs,
            list_variants,
            out,
        } => {
            if list_variants {
                for v in ModelVariant::ALL {
                    println!("{v}");
                }
                return Ok(());
            }
            experiment(seed.seed, &loss, epochs, out.as_deref())
        }
        Command::Evaluate { input, out } => evaluate(&input, out.as_deref()),
    }
}

fn parse_oversample(s: &str) -> Result<(String, usize), String> {
    let (class, times) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected CLASS=TIMES, got `{s}`"))?;
    let times: usize = times.parse().map_err(|e| format!("`{times}`: {e}"))?;
    if times == 0 {
        return Err("repeat count must be at least 1".into());
    }
    Ok((class.to_string(), times))
}

fn load(path: &Path) -> anyhow::Result<TaxonomySet> {
    Ok(load_taxonomy_file(path)?)
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

fn compile(input: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let set = load(input)?;
    let ut = set.compile().map_err(anyhow::Error::from)?;
    let naive = build_training_taxonomy(TaxonomyKind::NaiveConcat, &set.universe, &set.taxonomies)
        .map_err(anyhow::Error::from)?;
    let merge = build_training_taxonomy(TaxonomyKind::PartialMerge, &set.universe, &set.taxonomies)
        .map_err(anyhow::Error::from)?;
    let violations = ut.check_invariants(&set.taxonomies);
    if let Some(path) = out {
        fs::write(path, universal_to_json(&set.universe, &ut))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "universal={} naive={} merge={}",
        ut.len(),
        naive.len(),
        merge.len()
    );
    if !violations.is_empty() {
        return Err(Failure::Check(format!(
            "{} invariant violations: {violations:?}",
            violations.len()
        )));
    }
    Ok(())
}

fn inspect(input: &Path) -> Result<(), Failure> {
    let set = load(input)?;
    let ut = set.compile().map_err(anyhow::Error::from)?;
    let mut text = format!("concepts {}\n", set.universe.len());
    for t in &set.taxonomies {
        let _ = writeln!(text, "\ndataset {} ({} classes)", t.name, t.len());
        let mapping = ut.mapping(&t.name).expect("every dataset is mapped");
        for c in &t.classes {
            let targets = mapping.targets_of(&c.name).unwrap_or_default();
            let _ = writeln!(
                text,
                "  {:<32} concepts={:<3} universal={}",
                c.name,
                c.extent.len(),
                targets.len()
            );
        }
    }
    let _ = writeln!(text, "\nrelations");
    for (i, a) in set.taxonomies.iter().enumerate() {
        for b in &set.taxonomies[i + 1..] {
            for ca in &a.classes {
                for cb in &b.classes {
                    let r = relate(&ca.extent, &cb.extent).map_err(anyhow::Error::from)?;
                    if r != unitax::taxonomy::ClassRelation::Disjoint {
                        let _ = writeln!(
                            text,
                            "  {}/{} {r:?} {}/{}",
                            a.name, ca.name, b.name, cb.name
                        );
                    }
                }
            }
        }
    }
    let _ = writeln!(text, "\nuniversal ({} classes)", ut.len());
    for c in &ut.classes {
        let _ = writeln!(text, "  {}", c.name);
    }
    print!("{text}");
    Ok(())
}

fn export_matrices(
    input: &Path,
    kind: TaxonomyKind,
    direction: Direction,
    dataset: Option<&str>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let set = load(input)?;
    let training = build_training_taxonomy(kind, &set.universe, &set.taxonomies)
        .map_err(anyhow::Error::from)?;
    let names: Vec<&str> = match dataset {
        Some(d) => {
            set.taxonomy(d)
                .ok_or_else(|| anyhow!("unknown dataset `{d}`"))?;
            vec![d]
        }
        None => set.taxonomies.iter().map(|t| t.name.as_str()).collect(),
    };
    let matrix = |name: &str| -> anyhow::Result<MappingMatrix> {
        Ok(match direction {
            Direction::Train => training_matrix(&training, name)?,
            Direction::Eval => eval_mapping(&training, set.taxonomy(name).expect("checked")),
        })
    };
    let text = match format {
        Format::Csv => {
            let [name] = names.as_slice() else {
                return Err(anyhow!("CSV export needs --dataset").into());
            };
            matrix(name)?.to_csv()
        }
        Format::Json => {
            let mut all = serde_json::Map::new();
            for name in names {
                all.insert(name.to_string(), matrix(name)?.to_json_value());
            }
            to_json(&serde_json::json!({
                "kind": kind.short_name(),
                "direction": match direction { Direction::Train => "train", Direction::Eval => "eval" },
                "matrices": all,
            }))
        }
    };
    write_output(out, &text)?;
    Ok(())
}

fn run_gradcheck(seed: u64, n: usize, tolerance: f64, inject_bug: bool) -> Result<(), Failure> {
    let config = GradcheckConfig {
        seed,
        samples: n,
        tolerance,
        ..GradcheckConfig::default()
    };
    let bug = |g: &mut [f64]| g[0] *= 1.01;
    let report = gradcheck::run_with(&config, inject_bug.then_some(&bug as &dyn Fn(&mut [f64])));
    println!(
        "gradcheck seed={} samples={} tolerance={:e}",
        report.seed, report.samples, report.tolerance
    );
    for c in &report.checks {
        println!(
            "{:<16} max_abs_err={:.3e} max_rel_err={:.3e} sign_violations={}",
            format!("{:?}", c.loss),
            c.max_abs_err,
            c.max_rel_err,
            c.sign_violations
        );
    }
    if report.passed {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure::Check("gradient mismatch".into()))
    }
}

#[derive(Serialize)]
struct SynthReport {
    kind: TaxonomyKind,
    loss: LossVariant,
    seed: u64,
    logits: usize,
    train_samples: usize,
    ignored_samples: usize,
    steps: usize,
    initial_loss: f64,
    final_loss: f64,
    evaluation: IouReport,
}

fn iou_table(report: &IouReport) -> String {
    let mut text = format!("{:<24}{:>8}{:>9}\n", "class", "IoU", "support");
    for c in &report.per_class {
        let iou = c
            .iou
            .map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
        let _ = writeln!(text, "{:<24}{:>8}{:>9}", c.class, iou, c.support);
    }
    let _ = writeln!(
        text,
        "{:<24}{:>8.1}{:>9}",
        "mIoU",
        100.0 * report.miou,
        report.samples
    );
    text
}

fn synth_train(
    spec_path: &Path,
    kind: TaxonomyKind,
    seed: Option<u64>,
    init_std: f64,
    mut config: TrainConfig,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: SyntheticSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    config.seed = unitax::seed::substream(spec.seed, "train");
    let data = generate(&spec).map_err(anyhow::Error::from)?;
    let ut = unitax::taxonomy::build_universal(&data.universe, &data.taxonomies)
        .map_err(anyhow::Error::from)?;
    let training: TrainingTaxonomy =
        build_training_taxonomy(kind, &data.universe, &data.taxonomies)
            .map_err(anyhow::Error::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(unitax::seed::substream(spec.seed, "init"));
    let mut model =
        LinearSoftmaxModel::random(training.len(), spec.feature_dim(), init_std, &mut rng);
    let outcome = train(
        &mut model,
        &data.train,
        &data.taxonomies,
        &training,
        &config,
    )
    .map_err(anyhow::Error::from)?;
    let mapping = eval_mapping(&training, &ut.as_flat("universal"));
    let test = universal_test_set(&data.test, &ut);
    let evaluation =
        unitax::metrics::cross_eval(&model, &test, &mapping).map_err(anyhow::Error::from)?;
    let report = SynthReport {
        kind,
        loss: config.loss.variant,
        seed: spec.seed,
        logits: training.len(),
        train_samples: data.train.len(),
        ignored_samples: outcome.ignored,
        steps: outcome.steps,
        initial_loss: outcome.loss_trace.first().copied().unwrap_or(f64::NAN),
        final_loss: outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        evaluation,
    };
    print!("{}", iou_table(&report.evaluation));
    if let Some(path) = out {
        fs::write(path, to_json(&report)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn experiment(
    seed: u64,
    only: &[ModelVariant],
    epochs: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut config = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    if let Some(e) = epochs {
        config.epochs = e;
    }
    let variants: Vec<ModelVariant> = if only.is_empty() {
        ModelVariant::ALL.to_vec()
    } else {
        ModelVariant::ALL
            .iter()
            .copied()
            .filter(|v| only.contains(v))
            .collect()
    };
    let report =
        run_unlabeled_concept_experiment(&config, &variants).map_err(anyhow::Error::from)?;
    print!("{}", report.table());
    if let Some(path) = out {
        fs::write(path, to_json(&report)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Input of `evaluate`. Each sample gives either class probabilities,
/// predicted as their argmax, or an explicit prediction where `null` is void.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateInput {
    classes: Vec<String>,
    samples: Vec<EvaluateSample>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateSample {
    truth: usize,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "present")]
    prediction: Option<Option<usize>>,
}

/// Keeps an explicit `null` apart from a missing field.
fn present<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Option<usize>>, D::Error> {
    Option::<usize>::deserialize(d).map(Some)
}

fn evaluate(input: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let data: EvaluateInput =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
    let n = data.classes.len();
    let mut cm = ConfusionMatrix::new(n);
    for (i, s) in data.samples.iter().enumerate() {
        let predicted = match (&s.probs, s.prediction) {
            (Some(p), None) => {
                if p.len() != n {
                    return Err(
                        anyhow!("sample {i}: {} probabilities for {n} classes", p.len()).into(),
                    );
                }
                Some(unitax::label_space::ScoreVector(p.clone()).argmax())
            }
            (None, Some(pred)) => pred,
            _ => {
                return Err(
                    anyhow!("sample {i}: give exactly one of `probs` and `prediction`").into(),
                )
            }
        };
        cm.update(s.truth, predicted)
            .with_context(|| format!("sample {i}"))?;
    }
    let report = cm.report(&data.classes).map_err(anyhow::Error::from)?;
    eprint!("{}", iou_table(&report));
    write_output(out, &to_json(&report))?;
    Ok(())
}
