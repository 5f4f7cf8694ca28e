use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use isoalign::align::{apply_map, procrustes, save_map, self_learn, SelfLearnParams};
use isoalign::bli::evaluate_mrr;
use isoalign::corpus::{load_alignment, load_doc_corpus, shuffle_sample, topic_adjusted_sample, write_lines};
use isoalign::dictionary::{load_dictionary, BilingualDictionary, Entry};
use isoalign::embeddings::{load_embeddings, save_embeddings};
use isoalign::experiment::{
    emit_plot, format_gap_report, gap_report, load_config, load_records, parse_count, run_experiment, PlotSpec,
};
use isoalign::isometry::{evs, gh, rsim, RsimParams};
use isoalign::preprocess::{apply_chain, PreprocessChain};
use isoalign::sgns::{train, SnapshotPlan, Subwords, TrainConfig};
use isoalign::synth::{Cipher, SynthCorpus, SynthParams};

#[derive(Parser)]
#[command(name = "isoalign", version, about = "Isomorphism, alignment and low-resource training experiments for word vector spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train skip-gram vectors, writing snapshots after token budgets
    Train(TrainArgs),
    /// Draw nested shuffled sentence samples
    Sample(SampleArgs),
    /// Sample a document corpus to match another's per-document token counts
    TopicSample(TopicSampleArgs),
    /// Fit an orthogonal map from a seed dictionary
    Align(AlignArgs),
    /// Score lexicon induction (mean reciprocal rank)
    Bli(BliArgs),
    /// Isomorphism scores between two spaces
    Iso(IsoArgs),
    /// Run an experiment grid from a config file
    Experiment(ExperimentArgs),
    /// MRR gap between two language pairs per condition
    Gap(GapArgs),
    /// Plot experiment records as SVG
    Plot(PlotArgs),
    /// Generate a synthetic corpus and a ciphered copy with its gold lexicon
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 15)]
    neg: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 1e-4)]
    subsample: f64,
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    subwords: String,
    #[arg(long, default_value_t = 3)]
    minn: usize,
    #[arg(long, default_value_t = 6)]
    maxn: usize,
    #[arg(long, default_value_t = isoalign::sgns::DEFAULT_BUCKETS)]
    buckets: usize,
    /// Comma-separated raw-token budgets, e.g. 1e6,5e6
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Writes <prefix>.<M>.vec per snapshot and <prefix>.vec for the final model
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Ascending sentence counts, e.g. 50000,100000
    #[arg(long)]
    sizes: String,
    /// Writes <prefix>.<N>.txt per size
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct TopicSampleArgs {
    /// Document corpus to sample from (`#doc <id>` blocks)
    #[arg(long)]
    rich: PathBuf,
    /// Document corpus whose token counts set the budgets
    #[arg(long)]
    poor: PathBuf,
    /// TSV of `rich_id poor_id` lines
    #[arg(long)]
    alignment: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpacePair {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Read only the first N rows of each space
    #[arg(long)]
    limit: Option<usize>,
    /// unnorm, l2, l2+mc+l2 or iternorm
    #[arg(long, default_value = "unnorm")]
    preproc: PreprocessChain,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    spaces: SpacePair,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    self_learning: bool,
    #[arg(long, default_value_t = isoalign::align::DEFAULT_ROUNDS)]
    rounds: usize,
    #[arg(long, default_value_t = isoalign::align::DEFAULT_TOP_F)]
    topf: usize,
    #[arg(long)]
    out_map: PathBuf,
    /// Also write the preprocessed, mapped source space
    #[arg(long)]
    out_mapped: Option<PathBuf>,
}

#[derive(Args)]
struct BliArgs {
    /// Source space already mapped into the target space
    #[arg(long)]
    src_mapped: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Chain applied to the target; use the one the source was aligned with
    #[arg(long, default_value = "unnorm")]
    preproc: PreprocessChain,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = isoalign::bli::DEFAULT_CUTOFF)]
    cutoff: usize,
    /// `word<TAB>bin` lines assigning frequency bins to test source words
    #[arg(long)]
    bins: Option<PathBuf>,
}

#[derive(Args)]
struct IsoArgs {
    #[command(flatten)]
    spaces: SpacePair,
    #[arg(long, default_value = "all", value_parser = ["evs", "gh", "rsim", "all"])]
    metric: String,
    /// Dictionary for RSIM
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = isoalign::isometry::DEFAULT_TOP_N)]
    topn: usize,
    #[arg(long, default_value_t = isoalign::isometry::DEFAULT_KNN)]
    knn: usize,
    /// One-to-one translation pairs sampled for RSIM
    #[arg(long, default_value_t = isoalign::isometry::DEFAULT_PAIRS)]
    pairs: usize,
    #[arg(long, default_value_t = isoalign::isometry::DEFAULT_SEED)]
    seed: u64,
    /// Correlate unsorted similarity lists
    #[arg(long)]
    unsorted: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "mrr")]
    metric: String,
    #[arg(long, default_value = "value")]
    x: String,
    /// Comma-separated record fields naming a series
    #[arg(long, default_value = "pair")]
    series: String,
    /// Keep only records with field=value; repeatable
    #[arg(long = "filter")]
    filters: Vec<String>,
    #[arg(long)]
    log_x: bool,
    /// Draw a least-squares line and print correlations
    #[arg(long)]
    fit: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1_000_000)]
    tokens: u64,
    #[arg(long, default_value_t = 20_000)]
    vocab: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Writes <prefix>.src.txt, <prefix>.tgt.txt and <prefix>.lex.tsv
    #[arg(long)]
    out_prefix: PathBuf,
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_pair(p: &SpacePair) -> Result<(isoalign::EmbeddingSpace, isoalign::EmbeddingSpace)> {
    let s = load_embeddings(&p.src, p.limit)?;
    let t = load_embeddings(&p.tgt, p.limit)?;
    Ok((apply_chain(&s, &p.preproc)?, apply_chain(&t, &p.preproc)?))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        dim: a.dim,
        learning_rate: a.lr,
        negatives: a.neg,
        window: a.window,
        epochs: a.epochs,
        min_count: a.min_count,
        subsample_t: a.subsample,
        subwords: if a.subwords == "on" {
            Subwords::On { n_min: a.minn, n_max: a.maxn, buckets: a.buckets }
        } else {
            Subwords::Off
        },
        seed: a.seed,
    };
    let budgets = match &a.snapshots {
        Some(s) => s.split(',').map(|v| parse_count(v)).collect::<isoalign::Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let out = train(&a.corpus, &cfg, &SnapshotPlan::new(budgets)?)?;
    for s in &out.snapshots {
        let path = with_suffix(&a.out_prefix, &format!(".{}.vec", s.budget));
        save_embeddings(&s.space, &path)?;
        println!("snapshot {} at {} tokens -> {}", s.budget, s.consumed, path.display());
    }
    let path = with_suffix(&a.out_prefix, ".vec");
    save_embeddings(&out.final_space, &path)?;
    println!(
        "final model ({} words, {} tokens consumed) -> {}",
        out.final_space.len(),
        out.consumed,
        path.display()
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let sizes = a
        .sizes
        .split(',')
        .map(|v| parse_count(v).map(|n| n as usize))
        .collect::<isoalign::Result<Vec<_>>>()?;
    for f in shuffle_sample(&a.corpus, a.seed, &sizes, &a.out_prefix)? {
        println!("{}\t{} sentences\t{} tokens", f.path.display(), f.sentences, f.tokens);
    }
    Ok(())
}

fn cmd_topic_sample(a: TopicSampleArgs) -> Result<()> {
    let rich = load_doc_corpus(&a.rich)?;
    let poor = load_doc_corpus(&a.poor)?;
    let alignment = load_alignment(&a.alignment)?;
    let sample = topic_adjusted_sample(&rich, &poor, &alignment, a.seed)?;
    write_lines(&a.out, sample.sentences.iter().map(String::as_str))?;
    println!("rich_doc\tpoor_doc\tbudget\tselected\tshortfall");
    for r in &sample.report {
        println!("{}\t{}\t{}\t{}\t{}", r.rich_id, r.poor_id, r.budget, r.selected, r.shortfall);
    }
    println!("total\t\t{}\t{}", sample.total_budget(), sample.total_selected());
    Ok(())
}

fn cmd_align(a: AlignArgs) -> Result<()> {
    let (s, t) = load_pair(&a.spaces)?;
    let dict = load_dictionary(&a.dict)?;
    let map = if a.self_learning {
        self_learn(&s, &t, &dict, &SelfLearnParams { max_rounds: a.rounds, top_f: a.topf })?
    } else {
        procrustes(&s, &t, &dict)?
    };
    save_map(&map, &a.out_map)?;
    println!(
        "map {}x{} from {} usable pairs, {} self-learning rounds, induced sizes {:?}",
        map.dim(),
        map.dim(),
        dict.usable_pairs(&s, &t).len(),
        map.iterations,
        map.induced_sizes
    );
    if let Some(path) = &a.out_mapped {
        save_embeddings(&apply_map(&s, &map)?, path)?;
    }
    Ok(())
}

fn cmd_bli(a: BliArgs) -> Result<()> {
    let s = load_embeddings(&a.src_mapped, None)?;
    let t = apply_chain(&load_embeddings(&a.tgt, None)?, &a.preproc)?;
    let mut test = load_dictionary(&a.test)?;
    if let Some(path) = &a.bins {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let labels: HashMap<&str, &str> = text.lines().filter_map(|l| l.split_once('\t')).collect();
        let entries = test
            .entries()
            .iter()
            .map(|e| Entry { bin: labels.get(e.source.as_str()).map(|b| b.to_string()), ..e.clone() })
            .collect::<Vec<_>>();
        test = BilingualDictionary::new(test.name.clone(), entries);
    }
    let r = evaluate_mrr(&s, &t, &test, a.cutoff)?;
    println!("query,gold,rank,rr");
    for q in &r.per_query {
        let rank = q.rank.map_or(String::new(), |x| x.to_string());
        println!("{},{},{},{:.6}", q.source, q.gold.join("|"), rank, q.reciprocal_rank());
    }
    println!("mrr,coverage,n");
    println!("{:.6},{:.6},{}", r.mrr, r.coverage, r.n_queries());
    if r.skipped > 0 {
        eprintln!("{} queries skipped as out of vocabulary", r.skipped);
    }
    for (bin, v) in &r.bin_scores {
        eprintln!("mrr[{bin}] = {v:.6}");
    }
    Ok(())
}

fn cmd_iso(a: IsoArgs) -> Result<()> {
    let (s, t) = load_pair(&a.spaces)?;
    let metrics: &[&str] = if a.metric == "all" { &["evs", "gh", "rsim"] } else { &[a.metric.as_str()] };
    let preproc = &a.spaces.preproc;
    println!("metric,n_top,k,preproc,value");
    for &m in metrics {
        match m {
            "evs" => {
                let r = evs(&s, &t, a.topn, a.knn)?;
                println!("evs,{},{},{preproc},{:.6}", a.topn, a.knn, r.delta);
                log::info!("evs used k = {} leading eigenvalues (k1 = {}, k2 = {})", r.k, r.k1, r.k2);
            }
            "gh" => println!("gh,{},na,{preproc},{:.6}", a.topn, gh(&s, &t, a.topn)?),
            _ => {
                let path = a.dict.as_ref().context("rsim needs --dict")?;
                let params = RsimParams { m_pairs: a.pairs, sorted: !a.unsorted, seed: a.seed };
                let v = rsim(&s, &t, &load_dictionary(path)?, &params)?;
                println!("rsim,{},na,{preproc},{v:.6}", a.pairs);
            }
        }
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<ExitCode> {
    let cfg = load_config(&a.config)?;
    let summary = run_experiment(&cfg)?;
    println!(
        "{} records, {} grid points computed, {} reused -> {}",
        summary.records.len(),
        summary.computed,
        summary.skipped,
        cfg.out_dir.join("records.csv").display()
    );
    if summary.is_complete() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} stage failures, see {}", summary.failures.len(), cfg.out_dir.join("failures.log").display());
        Ok(ExitCode::from(2))
    }
}

fn cmd_gap(a: GapArgs) -> Result<()> {
    let records = load_records(&a.records)?;
    let rows = gap_report(&records, &a.a, &a.b);
    if rows.is_empty() {
        bail!("no MRR records for {} or {}", a.a, a.b);
    }
    print!("{}", format_gap_report(&rows, &a.a, &a.b));
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let filters = a
        .filters
        .iter()
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .with_context(|| format!("filter {f:?} is not field=value"))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = PlotSpec {
        x: a.x,
        metric: a.metric,
        series: a.series.split(',').map(str::to_string).collect(),
        log_x: a.log_x,
        fit: a.fit,
        filters,
    };
    let summary = emit_plot(&load_records(&a.records)?, &spec, &a.out)?;
    println!("{} series -> {}", summary.series.len(), a.out.display());
    if let Some((slope, intercept)) = summary.fit {
        println!("fit slope\t{slope:.9}\nfit intercept\t{intercept:.9}");
    }
    if let Some(r) = summary.spearman {
        println!("spearman\t{r:.4}");
    }
    if let Some(r) = summary.pearson_log {
        println!("pearson_log_x\t{r:.4}");
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let corpus = SynthCorpus::new(SynthParams { vocab: a.vocab, seed: a.seed, ..SynthParams::default() })?;
    let text = corpus.generate(a.tokens);
    let cipher = Cipher::for_text(&text, "w", a.seed);
    let src = with_suffix(&a.out_prefix, ".src.txt");
    let tgt = with_suffix(&a.out_prefix, ".tgt.txt");
    let lex = with_suffix(&a.out_prefix, ".lex.tsv");
    fs::write(&src, &text).with_context(|| format!("writing {}", src.display()))?;
    fs::write(&tgt, cipher.apply(&text)).with_context(|| format!("writing {}", tgt.display()))?;
    let mut words: Vec<&str> = text.split_whitespace().collect::<HashSet<_>>().into_iter().collect();
    words.sort_unstable();
    isoalign::dictionary::save_dictionary(&cipher.dictionary("lex", words), &lex)?;
    println!("{}\n{}\n{}", src.display(), tgt.display(), lex.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a).map(|_| ExitCode::SUCCESS),
        Command::Sample(a) => cmd_sample(a).map(|_| ExitCode::SUCCESS),
        Command::TopicSample(a) => cmd_topic_sample(a).map(|_| ExitCode::SUCCESS),
        Command::Align(a) => cmd_align(a).map(|_| ExitCode::SUCCESS),
        Command::Bli(a) => cmd_bli(a).map(|_| ExitCode::SUCCESS),
        Command::Iso(a) => cmd_iso(a).map(|_| ExitCode::SUCCESS),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Gap(a) => cmd_gap(a).map(|_| ExitCode::SUCCESS),
        Command::Plot(a) => cmd_plot(a).map(|_| ExitCode::SUCCESS),
        Command::Synth(a) => cmd_synth(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
