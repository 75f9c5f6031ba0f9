//! Command-line front end for the hierarchical tool-graph embedding
//! pipeline: corpus generation, validation, embedding, training, latent
//! export, retrieval, and gradient diagnostics.
//!
//! Exit codes are a stable contract: 0 success, 1 domain violation,
//! 2 I/O or file-format failure, 3 numerical divergence. All results go to
//! stdout; progress and timing go to stderr so serialized outputs stay
//! bitwise reproducible.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hierembed::embedder::{
    embed_graph, install_embeddings, load_external_embeddings, EmbedderConfig,
};
use hierembed::store::{self, EmbeddingKind, VectorStore};
use hierembed::synth::{gen_corpus, CorpusSpec};
use hierembed::toolgraph::{parse_tool_document, serialize_tool_document, validate, ToolGraph};
use hierembed::train::{
    export_embeddings, gradcheck_suite, load_params, save_params, train, TrainConfig,
};
use hierembed::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hierembed",
    about = "Hierarchical tool-graph embeddings: generate, validate, embed, train, export, query",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate tool documents; print violations one per line.
    Validate(ValidateArgs),
    /// Generate a synthetic corpus into a directory, one JSON file per tool.
    #[command(name = "gen-corpus")]
    GenCorpus(GenCorpusArgs),
    /// Build an initial-kind vector store from corpus descriptions.
    Embed(EmbedArgs),
    /// Train the shared encoder; writes params.bin, report.json and
    /// embeddings.tgvs.
    Train(TrainArgs),
    /// Top-k cosine retrieval against a saved store.
    Query(QueryArgs),
    /// Finite-difference gradient check suite; prints the max relative error.
    Gradcheck(GradcheckArgs),
    /// Export structural embeddings from saved parameters.
    Export(ExportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Tool document files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// JSON corpus spec; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the generation config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Corpus directory (or a single tool document).
    #[arg(long)]
    corpus: PathBuf,
    /// Output store file.
    #[arg(long)]
    out: PathBuf,
    /// JSON config (d_v drives the embedding width; hash_seed, lowercase
    /// optional).
    #[arg(long)]
    config: Option<PathBuf>,
    /// External embedding TSV (single-document corpora only); replaces
    /// hashed description vectors.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory (or a single tool document).
    #[arg(long)]
    corpus: PathBuf,
    /// JSON training config; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for params.bin, report.json, embeddings.tgvs.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's propagation mode.
    #[arg(long, value_parser = ["latent", "initial"])]
    mode: Option<String>,
    /// External embedding TSV (single-document corpora only).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Store file to search.
    #[arg(long)]
    store: PathBuf,
    /// Number of results.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Restrict to one record kind.
    #[arg(long, value_parser = ["initial", "structural"])]
    filter: Option<String>,
    /// JSON config for the query embedder.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Query text.
    text: String,
}

#[derive(Args)]
struct GradcheckArgs {
    /// JSON config; parsed and validated for early failure, the suite
    /// itself runs fixed seeded instances.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Corpus directory (or a single tool document).
    #[arg(long)]
    corpus: PathBuf,
    /// Trained parameter file.
    #[arg(long)]
    params: PathBuf,
    /// Output store file.
    #[arg(long)]
    out: PathBuf,
    /// JSON config; dimensions must match the parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// External embedding TSV (single-document corpora only).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Print one line per parent group: tool, parent id, loss contribution.
    #[arg(long)]
    trace: bool,
}

/// Manifest written next to every file-producing command's outputs. Holds no
/// timing so reruns stay bitwise identical.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    exit_status: i32,
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format { .. } => 2,
        Error::Json(_) | Error::InvalidGraph { .. } | Error::Domain { .. } => 1,
        Error::Diverged { .. } => 3,
    }
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
    }
}

/// The embedder follows the training dimensions; hash_seed and lowercase
/// come from their own config keys.
fn embedder_config(path: &Option<PathBuf>, cfg: &TrainConfig) -> Result<EmbedderConfig> {
    let raw: EmbedderConfig = read_config(path)?;
    let ecfg = EmbedderConfig {
        dim: cfg.d_v,
        ..raw
    };
    ecfg.validate()?;
    Ok(ecfg)
}

/// Loads every tool document under `path` (a directory of .json files, or a
/// single file), sorted by file name, and validates each. Violations print
/// to stderr in the validate line format.
fn load_corpus(path: &Path) -> Result<Vec<ToolGraph>> {
    let mut files: Vec<PathBuf> = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path)? {
            let p = entry?.path();
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
            if p.extension().and_then(|s| s.to_str()) == Some("json")
                && name != "run_manifest.json"
                && name != "manifest.json"
            {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    if files.is_empty() {
        return Err(Error::domain(
            "EMPTY_CORPUS",
            format!("no tool documents under {}", path.display()),
        ));
    }
    let mut graphs = Vec::with_capacity(files.len());
    let mut bad = false;
    for f in &files {
        let text = std::fs::read_to_string(f)?;
        let g = parse_tool_document(&text)?;
        let report = validate(&g);
        if !report.ok {
            bad = true;
            for v in &report.violations {
                eprintln!("{}:{}:{}:{}", f.display(), v.code, v.subject_id, v.message);
            }
        }
        graphs.push(g);
    }
    if bad {
        return Err(Error::domain("CORPUS_INVALID", "corpus failed validation"));
    }
    Ok(graphs)
}

/// Installs node features: hashed descriptions by default, or external
/// vectors for a single-document corpus.
fn feature_corpus(
    graphs: &[ToolGraph],
    ecfg: &EmbedderConfig,
    d_e: usize,
    external: &Option<PathBuf>,
) -> Result<Vec<ToolGraph>> {
    match external {
        None => graphs.iter().map(|g| embed_graph(g, ecfg, d_e)).collect(),
        Some(path) => {
            if graphs.len() != 1 {
                return Err(Error::domain(
                    "EXTERNAL_MULTI",
                    "external embeddings require a single-document corpus",
                ));
            }
            let map = load_external_embeddings(path)?;
            if let Some(v) = map.values().next() {
                if v.len() != ecfg.dim {
                    return Err(Error::domain(
                        "DIM_MISMATCH",
                        format!(
                            "external vectors have length {}, config d_v {}",
                            v.len(),
                            ecfg.dim
                        ),
                    ));
                }
            }
            Ok(vec![install_embeddings(&graphs[0], &map, d_e)?])
        }
    }
}

fn store_from_records(records: Vec<hierembed::store::EmbeddingRecord>) -> Result<VectorStore> {
    let mut s = VectorStore::new();
    for r in records {
        s.insert(r)?;
    }
    Ok(s)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let mut worst = 0;
    for path in &args.paths {
        let text = std::fs::read_to_string(path)?;
        match parse_tool_document(&text) {
            Ok(g) => {
                let report = validate(&g);
                for v in &report.violations {
                    println!(
                        "{}:{}:{}:{}",
                        path.display(),
                        v.code,
                        v.subject_id,
                        v.message
                    );
                }
                if !report.ok {
                    worst = worst.max(1);
                }
            }
            Err(e) => {
                let code = match &e {
                    Error::Domain { code, .. } => code.clone(),
                    Error::Json(_) => "PARSE".to_string(),
                    other => return Err(clone_io(other)),
                };
                let msg = e.to_string().replace('\n', " ");
                println!("{}:{}:-:{}", path.display(), code, msg);
                worst = worst.max(1);
            }
        }
    }
    Ok(worst)
}

/// I/O errors cannot be cloned; rebuild an equivalent error to bubble up.
fn clone_io(e: &Error) -> Error {
    Error::domain("INTERNAL", format!("unexpected error: {e}"))
}

fn cmd_gen_corpus(args: &GenCorpusArgs) -> Result<i32> {
    let mut spec: CorpusSpec = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = gen_corpus(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    for g in &corpus {
        let file = format!("{}.json", g.name);
        std::fs::write(args.out.join(&file), serialize_tool_document(g))?;
        outputs.push(file);
    }
    let manifest = RunManifest {
        command: "gen-corpus".into(),
        config: serde_json::to_value(&spec)?,
        inputs: args
            .config
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        outputs: outputs.clone(),
        exit_status: 0,
    };
    write_manifest(&args.out.join("run_manifest.json"), &manifest)?;
    eprintln!(
        "wrote {} tool documents to {}",
        outputs.len(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_embed(args: &EmbedArgs) -> Result<i32> {
    let cfg: TrainConfig = read_config(&args.config)?;
    cfg.validate()?;
    let ecfg = embedder_config(&args.config, &cfg)?;
    let graphs = load_corpus(&args.corpus)?;
    let store = match &args.embeddings {
        None => store::build_initial_store(&graphs, &ecfg)?,
        Some(_) => {
            // External vectors replace hashed descriptions; attached query
            // texts have no external counterpart and are skipped.
            let featured = feature_corpus(&graphs, &ecfg, cfg.d_e, &args.embeddings)?;
            let mut s = VectorStore::new();
            for g in &featured {
                for (id, node) in &g.nodes {
                    s.insert(hierembed::store::EmbeddingRecord {
                        tool_name: g.name.clone(),
                        node_id: id.clone(),
                        vector: node.initial_feature.clone().expect("installed"),
                        kind: EmbeddingKind::Initial,
                        description_digest: hierembed::embedder::description_digest(
                            &node.description,
                        ),
                    })?;
                }
            }
            s
        }
    };
    store::save(&store, &args.out)?;
    let manifest = RunManifest {
        command: "embed".into(),
        config: serde_json::to_value(&cfg)?,
        inputs: vec![args.corpus.display().to_string()],
        outputs: vec![args.out.display().to_string()],
        exit_status: 0,
    };
    write_manifest(&manifest_path(&args.out), &manifest)?;
    eprintln!(
        "embedded {} records into {}",
        store.len(),
        args.out.display()
    );
    Ok(0)
}

fn manifest_path(out_file: &Path) -> PathBuf {
    let mut name = out_file
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("out")
        .to_string();
    name.push_str(".manifest.json");
    out_file.with_file_name(name)
}

fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let mut cfg: TrainConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.propagation = mode.parse()?;
    }
    cfg.validate()?;
    let ecfg = embedder_config(&args.config, &cfg)?;
    let graphs = load_corpus(&args.corpus)?;
    let corpus = feature_corpus(&graphs, &ecfg, cfg.d_e, &args.embeddings)?;

    let report = train(&corpus, &cfg)?;
    std::fs::create_dir_all(&args.out)?;
    save_params(&report.params, &args.out.join("params.bin"))?;
    report.save(&args.out.join("report.json"))?;
    let records = export_embeddings(&corpus, &report.params, &cfg)?;
    let store = store_from_records(records)?;
    store::save(&store, &args.out.join("embeddings.tgvs"))?;

    let manifest = RunManifest {
        command: "train".into(),
        config: serde_json::to_value(&cfg)?,
        inputs: vec![args.corpus.display().to_string()],
        outputs: vec![
            "params.bin".into(),
            "report.json".into(),
            "embeddings.tgvs".into(),
        ],
        exit_status: 0,
    };
    write_manifest(&args.out.join("run_manifest.json"), &manifest)?;
    let last = report.epoch_mean_loss.last().copied().unwrap_or(f64::NAN);
    eprintln!(
        "trained {} epochs on {} tools in {:.1}s, final mean loss {:.6}",
        report.epoch_mean_loss.len(),
        corpus.len(),
        report.wall_seconds,
        last
    );
    Ok(0)
}

fn cmd_query(args: &QueryArgs) -> Result<i32> {
    let cfg: TrainConfig = read_config(&args.config)?;
    let ecfg = embedder_config(&args.config, &cfg)?;
    let store = store::load(&args.store)?;
    let filter = match &args.filter {
        None => None,
        Some(s) => Some(s.parse::<EmbeddingKind>()?),
    };
    let res = store::query_topk(&store, &args.text, args.k, &ecfg, filter)?;
    for (rank, hit) in res.hits.iter().enumerate() {
        println!(
            "{}\t{}\t{}\t{:.9}",
            rank + 1,
            hit.tool_name,
            hit.node_id,
            hit.similarity
        );
    }
    Ok(0)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let cfg: TrainConfig = read_config(&args.config)?;
    cfg.validate()?;
    let rep = gradcheck_suite()?;
    println!(
        "gradcheck: {} instances, max relative error {:.3e}, max near-zero absolute error {:.3e}",
        rep.instances, rep.max_rel_error, rep.max_abs_small_error
    );
    Ok(if rep.ok { 0 } else { 1 })
}

fn cmd_export(args: &ExportArgs) -> Result<i32> {
    let cfg: TrainConfig = read_config(&args.config)?;
    cfg.validate()?;
    let ecfg = embedder_config(&args.config, &cfg)?;
    let params = load_params(&args.params)?;
    if params.d_h() != cfg.d_v || params.d_in() != 2 * cfg.d_v + cfg.d_e {
        return Err(Error::domain(
            "SHAPE",
            format!(
                "parameter file has d_h={} d_in={}, config implies d_h={} d_in={}",
                params.d_h(),
                params.d_in(),
                cfg.d_v,
                2 * cfg.d_v + cfg.d_e
            ),
        ));
    }
    let graphs = load_corpus(&args.corpus)?;
    let corpus = feature_corpus(&graphs, &ecfg, cfg.d_e, &args.embeddings)?;
    let records = export_embeddings(&corpus, &params, &cfg)?;
    let store = store_from_records(records)?;
    store::save(&store, &args.out)?;

    if args.trace {
        let mut latent_cfg = cfg.clone();
        latent_cfg.propagation = hierembed::train::Propagation::Latent;
        for g in &corpus {
            let trace = hierembed::hgnn::forward_tool(&params, g, &latent_cfg)?;
            for (parent, c) in &trace.contributions {
                println!("{}\t{}\t{:.9}", g.name, parent, c);
            }
        }
    }

    let manifest = RunManifest {
        command: "export".into(),
        config: serde_json::to_value(&cfg)?,
        inputs: vec![
            args.corpus.display().to_string(),
            args.params.display().to_string(),
        ],
        outputs: vec![args.out.display().to_string()],
        exit_status: 0,
    };
    write_manifest(&manifest_path(&args.out), &manifest)?;
    eprintln!(
        "exported {} structural records to {}",
        store.len(),
        args.out.display()
    );
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::GenCorpus(a) => cmd_gen_corpus(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Train(a) => cmd_train(a),
        Command::Query(a) => cmd_query(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Export(a) => cmd_export(a),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    std::process::exit(code);
}
