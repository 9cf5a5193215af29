use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use cgcnet::checkpoint::Checkpoint;
use cgcnet::config::{self, ConfigFile};
use cgcnet::features::{build_descriptors, IntensityImage, LabelMap};
use cgcnet::graph::{assemble_graph, bundle, CellGraph, Grade, GraphConfig, N_CLASSES};
use cgcnet::model::{argmax, Model, ModelConfig};
use cgcnet::pnm;
use cgcnet::synth::{generate_sample, split_assignment, DatasetConfig, Split};
use cgcnet::train::{evaluate, majority_vote, train, TrainConfig};
use cgcnet::viz::{cluster_ids, render_svg};
use clap::{Parser, Subcommand};
use serde_json::json;

const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(
    name = "cgcnet",
    version,
    about = "Cell-graph construction and hierarchical graph classification"
)]
struct Cli {
    /// Print every default configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cell graph from a nuclear label map and its intensity image.
    BuildGraph {
        /// Instance label map (graymap, 0 = background).
        #[arg(long)]
        labels: PathBuf,
        /// Intensity image (graymap or pixmap).
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Graph config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class label stored in the bundle (normal, low-grade, high-grade).
        #[arg(long)]
        label: Option<Grade>,
    },
    /// Generate a balanced synthetic dataset of graph bundles.
    Synth {
        #[arg(long, default_value_t = N_CLASSES)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the label map and intensity image of every sample.
        #[arg(long)]
        images: bool,
    },
    /// Train on a dataset written by `synth`; the test split is used for validation.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// Checkpoint path. The epoch log goes next to it with a `.log.jsonl` suffix.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the train config.
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides the train config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Class probabilities for one bundle or every bundle under a directory.
    Predict {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Majority vote over bundles that share an image id.
        #[arg(long)]
        group_by_image: bool,
    },
    /// Render the cluster assignment of one pooling stage as SVG.
    VizClusters {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 1)]
        stage: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Same as --print-config.
    PrintConfig,
}

/// Bad flags, missing inputs, or invalid configuration: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn load_config<T: ConfigFile>(path: Option<&Path>) -> Result<T> {
    if let Some(p) = path {
        require_exists(p, T::KIND)?;
    }
    config::load_or_default(path).map_err(|e| usage(e.to_string()))
}

fn read_checkpoint(path: &Path) -> Result<(Checkpoint, Model)> {
    require_exists(path, "checkpoint")?;
    let ckpt = Checkpoint::read(path)?;
    let model = ckpt.to_model()?;
    Ok((ckpt, model))
}

fn read_bundle(dir: &Path) -> Result<CellGraph> {
    require_exists(dir, "graph bundle")?;
    let (graph, _) = bundle::read(dir).with_context(|| format!("reading bundle {}", dir.display()))?;
    Ok(graph)
}

/// `dir` itself when it is a bundle, otherwise every bundle directly below it, sorted by name.
fn bundle_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    require_exists(dir, "graph path")?;
    if dir.join(bundle::META_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.join(bundle::META_FILE).is_file() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(usage(format!("no graph bundles in {}", dir.display())));
    }
    dirs.sort();
    Ok(dirs)
}

fn build_graph(
    labels: &Path,
    image: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: u64,
    label: Option<Grade>,
) -> Result<()> {
    require_exists(labels, "label map")?;
    require_exists(image, "image")?;
    let cfg: GraphConfig = load_config(config)?;
    let label_map = LabelMap::from_pnm(&pnm::read(labels)?)?;
    let intensity = IntensityImage::from_pnm(&pnm::read(image)?)?;
    let descriptors = build_descriptors(&label_map, &intensity)?;
    let mut graph = assemble_graph(&descriptors, &cfg, label, seed)?;
    graph.image_id = image.file_stem().map(|s| s.to_string_lossy().into_owned());
    bundle::write(out, &graph, None)?;
    println!(
        "{} nodes, {} edges -> {}",
        graph.n(),
        graph.adjacency.n_edges(),
        out.display()
    );
    Ok(())
}

fn synth(classes: usize, per_class: usize, out: &Path, seed: u64, config: Option<&Path>, images: bool) -> Result<()> {
    if classes != N_CLASSES {
        return Err(usage(format!("--classes must be {N_CLASSES}")));
    }
    if per_class == 0 {
        return Err(usage("--per-class must be at least 1"));
    }
    let mut cfg: DatasetConfig = load_config(config)?;
    cfg.per_class = per_class;
    cfg.seed = seed;
    let graphs_dir = out.join("graphs");
    fs::create_dir_all(&graphs_dir).with_context(|| format!("creating {}", graphs_dir.display()))?;
    if images {
        fs::create_dir_all(out.join("images"))?;
    }
    let mut entries = Vec::new();
    for (i, split) in split_assignment(&cfg).into_iter().enumerate() {
        let (sample, image) = generate_sample(&cfg, i, split)?;
        bundle::write(graphs_dir.join(&sample.name), &sample.graph, None)?;
        if images {
            let dir = out.join("images");
            pnm::write(dir.join(format!("{}_labels.pgm", sample.name)), &image.labels.to_pnm()?)?;
            pnm::write(dir.join(format!("{}_image.pgm", sample.name)), &image.image.to_pnm())?;
        }
        entries.push(json!({
            "name": sample.name,
            "label": image.label,
            "split": sample.split,
            "nodes": sample.graph.n(),
            "edges": sample.graph.adjacency.n_edges(),
        }));
    }
    let manifest = json!({ "config": cfg, "samples": entries });
    fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::write(out.join("synth.toml"), config::to_toml(&cfg)?)?;
    let n_train = entries.iter().filter(|e| e["split"] == "train").count();
    println!(
        "{} samples ({n_train} train, {} test) -> {}",
        entries.len(),
        entries.len() - n_train,
        out.display()
    );
    Ok(())
}

/// Train and test graphs listed in a dataset manifest.
fn load_dataset(data: &Path) -> Result<(Vec<CellGraph>, Vec<CellGraph>)> {
    require_exists(data, "data directory")?;
    let manifest_path = data.join(MANIFEST);
    require_exists(&manifest_path, "manifest")?;
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let samples = manifest["samples"]
        .as_array()
        .ok_or_else(|| anyhow::anyhow!("manifest has no samples list"))?;
    let (mut train_set, mut test_set) = (Vec::new(), Vec::new());
    for s in samples {
        let name = s["name"]
            .as_str()
            .ok_or_else(|| anyhow::anyhow!("sample without a name"))?;
        let split: Split = serde_json::from_value(s["split"].clone()).context("sample split")?;
        let graph = read_bundle(&data.join("graphs").join(name))?;
        if graph.label.is_none() {
            anyhow::bail!("sample {name} has no label");
        }
        match split {
            Split::Train => train_set.push(graph),
            Split::Test => test_set.push(graph),
        }
    }
    Ok((train_set, test_set))
}

fn log_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".log.jsonl");
    ckpt.with_file_name(name)
}

fn run_train(
    data: &Path,
    model_config: Option<&Path>,
    train_config: Option<&Path>,
    out: &Path,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let model_cfg: ModelConfig = load_config(model_config)?;
    let mut cfg: TrainConfig = load_config(train_config)?;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (train_set, test_set) = load_dataset(data)?;
    eprintln!(
        "training on {} graphs, validating on {}, {} parameters",
        train_set.len(),
        test_set.len(),
        model_cfg.count_params()
    );
    let mut log = String::new();
    let outcome = train(&train_set, &test_set, &model_cfg, &cfg, |r| {
        let line = serde_json::to_string(r).expect("report serializes");
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    fs::write(log_path(out), log)?;
    Checkpoint::from_model(&outcome.model, &outcome.stats, cfg.seed, cfg.epochs).write(out)?;
    if !test_set.is_empty() {
        let eval = evaluate(&outcome.model, &outcome.stats, &test_set)?;
        println!(
            "{}",
            json!({ "val_accuracy": eval.accuracy, "confusion": eval.confusion })
        );
    }
    Ok(())
}

fn predict(graph: &Path, ckpt: &Path, group_by_image: bool) -> Result<()> {
    let (ckpt, model) = read_checkpoint(ckpt)?;
    let stats = &ckpt.manifest.normalization;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for dir in bundle_dirs(graph)? {
        let g = read_bundle(&dir)?;
        let probs = model.predict_proba(&g, stats)?;
        let class = argmax(&probs);
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let image_id = g.image_id.clone().unwrap_or_else(|| name.clone());
        if group_by_image {
            groups.entry(image_id).or_default().push(class);
        } else {
            println!(
                "{}",
                json!({ "graph": name, "class": grade_name(class), "probabilities": probs })
            );
        }
    }
    for (image_id, votes) in groups {
        let class = majority_vote(&votes)?;
        let votes: Vec<&str> = votes.into_iter().map(grade_name).collect();
        println!(
            "{}",
            json!({ "image_id": image_id, "class": grade_name(class), "votes": votes })
        );
    }
    Ok(())
}

fn grade_name(class: usize) -> &'static str {
    Grade::from_index(class).map_or("unknown", Grade::name)
}

fn viz_clusters(graph: &Path, ckpt: &Path, stage: usize, out: &Path) -> Result<()> {
    let (ckpt, model) = read_checkpoint(ckpt)?;
    let n_stages = model.config().n_stages();
    if stage == 0 || stage > n_stages {
        return Err(usage(format!("--stage must lie in 1..={n_stages}")));
    }
    let g = read_bundle(graph)?;
    let assignments = model.assignments(&g, &ckpt.manifest.normalization)?;
    let ids = cluster_ids(&assignments, stage)?;
    let title = format!("{} stage {stage}", g.image_id.as_deref().unwrap_or("graph"));
    fs::write(out, render_svg(&g, &ids, &title)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let command = match cli.command {
        _ if cli.print_config => Command::PrintConfig,
        Some(c) => c,
        None => return Err(usage("no command given; see --help")),
    };
    match command {
        Command::BuildGraph {
            labels,
            image,
            out,
            config,
            seed,
            label,
        } => build_graph(&labels, &image, &out, config.as_deref(), seed, label),
        Command::Synth {
            classes,
            per_class,
            out,
            seed,
            config,
            images,
        } => synth(classes, per_class, &out, seed, config.as_deref(), images),
        Command::Train {
            data,
            model_config,
            train_config,
            out,
            epochs,
            seed,
        } => run_train(
            &data,
            model_config.as_deref(),
            train_config.as_deref(),
            &out,
            epochs,
            seed,
        ),
        Command::Predict {
            graph,
            ckpt,
            group_by_image,
        } => predict(&graph, &ckpt, group_by_image),
        Command::VizClusters {
            graph,
            ckpt,
            stage,
            out,
        } => viz_clusters(&graph, &ckpt, stage, &out),
        Command::PrintConfig => {
            print!("{}", config::print_defaults());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
