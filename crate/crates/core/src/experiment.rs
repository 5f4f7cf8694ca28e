//! Declarative experiment grids: train or load target spaces per condition,
//! preprocess, align, score, and write one CSV row per measurement. Also the
//! gap table and SVG trend plots built from those rows.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::align::{apply_map, procrustes, self_learn, SelfLearnParams};
use crate::bli::{evaluate_mrr, DEFAULT_CUTOFF};
use crate::corpus::shuffle_sample_lines;
use crate::dictionary::{load_dictionary, BilingualDictionary};
use crate::embeddings::{load_embeddings, save_embeddings, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::isometry::{evs, gh, pearson, rsim, RsimParams, DEFAULT_KNN, DEFAULT_PAIRS, DEFAULT_SEED, DEFAULT_TOP_N};
use crate::preprocess::{apply_chain, parse_chain_list, PreprocessChain};
use crate::sgns::{train_text, SnapshotPlan, Subwords, TrainConfig, DEFAULT_BUCKETS};

pub const RECORD_HEADER: [&str; 9] = ["pair", "kind", "value", "preproc", "dict", "selflearn", "seed", "metric", "score"];

/// One measurement. All fields but the score are kept as text so that
/// records round-trip through CSV unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub pair: String,
    pub kind: String,
    pub value: String,
    pub preproc: String,
    pub dict: String,
    pub selflearn: String,
    pub seed: String,
    pub metric: String,
    pub score: f64,
}

impl Record {
    pub fn field(&self, name: &str) -> Result<&str> {
        Ok(match name {
            "pair" => &self.pair,
            "kind" => &self.kind,
            "value" => &self.value,
            "preproc" => &self.preproc,
            "dict" => &self.dict,
            "selflearn" => &self.selflearn,
            "seed" => &self.seed,
            "metric" => &self.metric,
            other => return Err(Error::param(format!("unknown record field {other:?}"))),
        })
    }
}

pub fn write_records<W: Write>(records: &[Record], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Config(format!("writing records: {e}"));
    w.write_record(RECORD_HEADER).map_err(csv_err)?;
    for r in records {
        let score = r.score.to_string();
        w.write_record([&r.pair, &r.kind, &r.value, &r.preproc, &r.dict, &r.selflearn, &r.seed, &r.metric, &score])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing records: {e}")))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", RECORD_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let score = row[8]
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad score {:?}", &row[8]) })?;
        out.push(Record {
            pair: row[0].into(),
            kind: row[1].into(),
            value: row[2].into(),
            preproc: row[3].into(),
            dict: row[4].into(),
            selflearn: row[5].into(),
            seed: row[6].into(),
            metric: row[7].into(),
            score,
        });
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Evs,
    Gh,
    Rsim,
    Mrr,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Evs => "evs",
            MetricKind::Gh => "gh",
            MetricKind::Rsim => "rsim",
            MetricKind::Mrr => "mrr",
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "evs" => Ok(MetricKind::Evs),
            "gh" => Ok(MetricKind::Gh),
            "rsim" => Ok(MetricKind::Rsim),
            "mrr" => Ok(MetricKind::Mrr),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionKind {
    /// Target trained on a nested sample of the corpus.
    Size,
    /// Target snapshot after a raw-token budget.
    Updates,
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionKind::Size => "size",
            ConditionKind::Updates => "updates",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSource {
    Space(PathBuf),
    Corpus(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TargetSource {
    Corpus(PathBuf),
    /// Precomputed spaces keyed by grid value.
    Spaces(BTreeMap<String, PathBuf>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairConfig {
    pub id: String,
    pub source: SpaceSource,
    pub target: TargetSource,
    pub train_dict: PathBuf,
    pub test_dict: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsimDict {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    /// Where trained spaces are cached; shared caches let several grids
    /// reuse the same training runs.
    pub cache_dir: PathBuf,
    pub pairs: Vec<PairConfig>,
    pub kind: ConditionKind,
    pub values: Vec<String>,
    /// Seed-dictionary sizes (first `n` pairs); empty means the full file.
    pub dict_sizes: Vec<usize>,
    pub preproc: Vec<PreprocessChain>,
    pub metrics: Vec<MetricKind>,
    pub selflearn: Vec<bool>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub n_top: usize,
    pub knn: usize,
    pub rsim: RsimParams,
    pub rsim_dict: RsimDict,
    pub self_learn: SelfLearnParams,
    pub cutoff: usize,
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

/// Parses a whole-number count such as `1000000`, `1e6` or `2.5e6`.
pub fn parse_count(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = s.parse().map_err(|_| Error::param(format!("not a count: {s:?}")))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(63) {
        Ok(f as u64)
    } else {
        Err(Error::param(format!("not a whole non-negative count: {s:?}")))
    }
}

/// Parses the flat `key = value` format: one pair per line, `#` starts a
/// comment line, lists are comma separated, relative paths are resolved
/// against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim().to_string();
        if kv.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
        }
    }
    let used: RefCell<HashSet<String>> = RefCell::new(HashSet::new());
    let take = |k: &str| -> Option<String> {
        used.borrow_mut().insert(k.to_string());
        kv.get(k).cloned()
    };
    let path = |v: String| -> PathBuf { base_dir.join(v) };

    let out_dir = path(take("out_dir").ok_or_else(|| Error::Config("out_dir is required".into()))?);
    let cache_dir = take("cache_dir").map(path).unwrap_or_else(|| out_dir.join("spaces"));
    let kind = match take("grid.kind").as_deref().map(str::trim) {
        Some("size") => ConditionKind::Size,
        Some("updates") => ConditionKind::Updates,
        Some(other) => return Err(Error::Config(format!("grid.kind must be size or updates, not {other:?}"))),
        None => return Err(Error::Config("grid.kind is required".into())),
    };
    let values: Vec<String> = parse_list("grid.values", &take("grid.values").unwrap_or_default())?;
    let pair_ids: Vec<String> = parse_list("pairs", &take("pairs").unwrap_or_default())?;

    let mut pairs = Vec::new();
    for id in &pair_ids {
        let key = |s: &str| format!("pair.{id}.{s}");
        let source = match (take(&key("source_space")), take(&key("source_corpus"))) {
            (Some(p), None) => SpaceSource::Space(path(p)),
            (None, Some(p)) => SpaceSource::Corpus(path(p)),
            _ => return Err(Error::Config(format!("pair {id}: give exactly one of source_space, source_corpus"))),
        };
        let prefix = key("target_space.");
        let spaces: BTreeMap<String, PathBuf> = kv
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|val| (val.to_string(), path(v.clone()))))
            .collect();
        for val in spaces.keys() {
            used.borrow_mut().insert(format!("{prefix}{val}"));
        }
        let target = match (take(&key("target_corpus")), spaces.is_empty()) {
            (Some(p), true) => TargetSource::Corpus(path(p)),
            (None, false) => TargetSource::Spaces(spaces),
            _ => {
                return Err(Error::Config(format!(
                    "pair {id}: give either target_corpus or target_space.<value> entries"
                )))
            }
        };
        let train_dict = path(take(&key("train_dict")).ok_or_else(|| Error::Config(format!("pair {id}: train_dict missing")))?);
        let test_dict = path(take(&key("test_dict")).ok_or_else(|| Error::Config(format!("pair {id}: test_dict missing")))?);
        pairs.push(PairConfig {
            id: id.clone(),
            source,
            target,
            train_dict,
            test_dict,
        });
    }

    let mut train = TrainConfig::default();
    if let Some(v) = take("train.dim") {
        train.dim = parse_one("train.dim", &v)?;
    }
    if let Some(v) = take("train.lr") {
        train.learning_rate = parse_one("train.lr", &v)?;
    }
    if let Some(v) = take("train.neg") {
        train.negatives = parse_one("train.neg", &v)?;
    }
    if let Some(v) = take("train.window") {
        train.window = parse_one("train.window", &v)?;
    }
    if let Some(v) = take("train.epochs") {
        train.epochs = parse_one("train.epochs", &v)?;
    }
    if let Some(v) = take("train.min_count") {
        train.min_count = parse_one("train.min_count", &v)?;
    }
    if let Some(v) = take("train.subsample") {
        train.subsample_t = parse_one("train.subsample", &v)?;
    }
    let minn = take("train.minn").map(|v| parse_one("train.minn", &v)).transpose()?.unwrap_or(3);
    let maxn = take("train.maxn").map(|v| parse_one("train.maxn", &v)).transpose()?.unwrap_or(6);
    let buckets = take("train.buckets")
        .map(|v| parse_one("train.buckets", &v))
        .transpose()?
        .unwrap_or(DEFAULT_BUCKETS);
    train.subwords = match take("train.subwords").as_deref().unwrap_or("on") {
        "on" => Subwords::On { n_min: minn, n_max: maxn, buckets },
        "off" => Subwords::Off,
        other => return Err(Error::Config(format!("train.subwords must be on or off, not {other:?}"))),
    };

    let dict_sizes = parse_list("dict.sizes", &take("dict.sizes").unwrap_or_default())?;
    let preproc = parse_chain_list(&take("preproc").unwrap_or_else(|| "l2+mc+l2".into()))
        .map_err(|e| Error::Config(format!("preproc: {e}")))?;
    let metrics = parse_list("metrics", &take("metrics").unwrap_or_else(|| "evs,gh,rsim,mrr".into()))?;
    let selflearn = parse_list("selflearn", &take("selflearn").unwrap_or_else(|| "false".into()))?;
    let seeds = parse_list("seeds", &take("seeds").unwrap_or_else(|| "1".into()))?;
    let n_top = take("iso.n_top").map(|v| parse_one("iso.n_top", &v)).transpose()?.unwrap_or(DEFAULT_TOP_N);
    let knn = take("iso.knn").map(|v| parse_one("iso.knn", &v)).transpose()?.unwrap_or(DEFAULT_KNN);
    let rsim = RsimParams {
        m_pairs: take("rsim.pairs").map(|v| parse_one("rsim.pairs", &v)).transpose()?.unwrap_or(DEFAULT_PAIRS),
        sorted: take("rsim.sorted").map(|v| parse_one("rsim.sorted", &v)).transpose()?.unwrap_or(true),
        seed: take("rsim.seed").map(|v| parse_one("rsim.seed", &v)).transpose()?.unwrap_or(DEFAULT_SEED),
    };
    let rsim_dict = match take("rsim.dict").as_deref().unwrap_or("train") {
        "train" => RsimDict::Train,
        "test" => RsimDict::Test,
        other => return Err(Error::Config(format!("rsim.dict must be train or test, not {other:?}"))),
    };
    let mut self_learn = SelfLearnParams::default();
    if let Some(v) = take("selflearn.rounds") {
        self_learn.max_rounds = parse_one("selflearn.rounds", &v)?;
    }
    if let Some(v) = take("selflearn.top_f") {
        self_learn.top_f = parse_one("selflearn.top_f", &v)?;
    }
    let cutoff = take("bli.cutoff").map(|v| parse_one("bli.cutoff", &v)).transpose()?.unwrap_or(DEFAULT_CUTOFF);

    let used = used.into_inner();
    let unknown: Vec<&String> = kv.keys().filter(|k| !used.contains(*k)).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {unknown:?}")));
    }
    let cfg = ExperimentConfig {
        out_dir,
        cache_dir,
        pairs,
        kind,
        values,
        dict_sizes,
        preproc,
        metrics,
        selflearn,
        seeds,
        train,
        n_top,
        knn,
        rsim,
        rsim_dict,
        self_learn,
        cutoff,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.values.is_empty() || self.pairs.is_empty() || self.seeds.is_empty() {
            return fail("grid needs at least one pair, one value and one seed".into());
        }
        if self.metrics.is_empty() || self.preproc.is_empty() || self.selflearn.is_empty() {
            return fail("metrics, preproc and selflearn lists must be nonempty".into());
        }
        let mut ids = HashSet::new();
        for p in &self.pairs {
            if !ids.insert(&p.id) {
                return fail(format!("duplicate pair id {}", p.id));
            }
            let mut paths = vec![&p.train_dict, &p.test_dict];
            match &p.source {
                SpaceSource::Space(x) | SpaceSource::Corpus(x) => paths.push(x),
            }
            match &p.target {
                TargetSource::Corpus(x) => paths.push(x),
                TargetSource::Spaces(m) => {
                    for v in &self.values {
                        match m.get(v) {
                            Some(x) => paths.push(x),
                            None => return fail(format!("pair {}: no target_space.{v}", p.id)),
                        }
                    }
                }
            }
            if let Some(missing) = paths.iter().find(|x| !x.exists()) {
                return fail(format!("pair {}: {} does not exist", p.id, missing.display()));
            }
        }
        let corpus_target = self.pairs.iter().any(|p| matches!(p.target, TargetSource::Corpus(_)));
        if corpus_target {
            match self.kind {
                ConditionKind::Size => {
                    for v in &self.values {
                        SizeValue::parse(v)?;
                    }
                }
                ConditionKind::Updates => {
                    let budgets = self.values.iter().map(|v| parse_count(v)).collect::<Result<Vec<_>>>()?;
                    let mut sorted = budgets.clone();
                    sorted.sort_unstable();
                    SnapshotPlan::new(sorted).map_err(|e| Error::Config(e.to_string()))?;
                }
            }
        }
        if corpus_target || self.pairs.iter().any(|p| matches!(p.source, SpaceSource::Corpus(_))) {
            self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for p in &self.pairs {
            for v in &self.values {
                for &seed in &self.seeds {
                    out.push(GridPoint {
                        pair: p.id.clone(),
                        value: v.clone(),
                        seed,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SizeValue {
    Sentences(usize),
    Percent(f64),
}

impl SizeValue {
    fn parse(s: &str) -> Result<Self> {
        if let Some(p) = s.trim().strip_suffix('%') {
            let f: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad percentage {s:?}")))?;
            if !(f > 0.0 && f <= 100.0) {
                return Err(Error::Config(format!("percentage out of (0, 100]: {s:?}")));
            }
            Ok(SizeValue::Percent(f))
        } else {
            Ok(SizeValue::Sentences(
                parse_count(s).map_err(|e| Error::Config(e.to_string()))? as usize,
            ))
        }
    }

    fn sentences(self, available: usize) -> usize {
        match self {
            SizeValue::Sentences(n) => n,
            SizeValue::Percent(p) => ((available as f64) * p / 100.0).round() as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridPoint {
    pub pair: String,
    pub value: String,
    pub seed: u64,
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pair={} value={} seed={}", self.pair, self.value, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub point: GridPoint,
    /// The stage or measurement that failed, e.g. `mrr preproc=l2 dict=1000`.
    pub stage: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub records: Vec<Record>,
    pub computed: usize,
    pub skipped: usize,
    pub failures: Vec<Failure>,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn sha_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    file_hashes: HashMap<PathBuf, String>,
    texts: HashMap<PathBuf, String>,
}

impl<'a> Runner<'a> {
    fn file_hash(&mut self, path: &Path) -> Result<String> {
        if let Some(h) = self.file_hashes.get(path) {
            return Ok(h.clone());
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let h = hex::encode(Sha256::digest(&bytes));
        self.file_hashes.insert(path.to_path_buf(), h.clone());
        Ok(h)
    }

    fn text(&mut self, path: &Path) -> Result<&str> {
        if !self.texts.contains_key(path) {
            let t = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            self.texts.insert(path.to_path_buf(), t);
        }
        Ok(&self.texts[path])
    }

    fn train_key(&self) -> String {
        format!("{:?}", TrainConfig { seed: 0, ..self.cfg.train.clone() })
    }

    /// Content hash of everything that determines a grid point's records.
    fn point_hash(&mut self, pair: &PairConfig, point: &GridPoint) -> Result<String> {
        let cfg = self.cfg;
        let mut parts: Vec<String> = vec![
            pair.id.clone(),
            cfg.kind.to_string(),
            point.value.clone(),
            point.seed.to_string(),
            self.file_hash(&pair.train_dict)?,
            self.file_hash(&pair.test_dict)?,
            format!("{:?}", cfg.dict_sizes),
            cfg.preproc.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(";"),
            format!("{:?}", cfg.metrics),
            format!("{:?}", cfg.selflearn),
            format!("{} {} {:?} {:?} {:?} {}", cfg.n_top, cfg.knn, cfg.rsim, cfg.rsim_dict, cfg.self_learn, cfg.cutoff),
        ];
        let mut trains = false;
        match &pair.source {
            SpaceSource::Space(p) => parts.push(format!("space {}", self.file_hash(p)?)),
            SpaceSource::Corpus(p) => {
                trains = true;
                parts.push(format!("corpus {}", self.file_hash(p)?));
            }
        }
        match &pair.target {
            TargetSource::Corpus(p) => {
                trains = true;
                parts.push(format!("corpus {}", self.file_hash(p)?));
                if cfg.kind == ConditionKind::Updates {
                    parts.push(format!("{:?}", self.budgets()));
                }
            }
            TargetSource::Spaces(m) => parts.push(format!("space {}", self.file_hash(&m[&point.value])?)),
        }
        if trains {
            parts.push(self.train_key());
        }
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        Ok(sha_hex(&refs))
    }

    fn budgets(&self) -> Vec<u64> {
        let mut b: Vec<u64> = self.cfg.values.iter().filter_map(|v| parse_count(v).ok()).collect();
        b.sort_unstable();
        b
    }

    fn space_dir(&self) -> PathBuf {
        self.cfg.cache_dir.clone()
    }

    fn source_space(&mut self, pair: &PairConfig, seed: u64) -> Result<EmbeddingSpace> {
        match &pair.source {
            SpaceSource::Space(p) => load_embeddings(p, None),
            SpaceSource::Corpus(p) => {
                let key = sha_hex(&["source", &self.file_hash(p)?, &self.train_key(), &seed.to_string()]);
                let cached = self.space_dir().join(format!("{key}.vec"));
                if cached.exists() {
                    return load_embeddings(&cached, None);
                }
                let cfg = TrainConfig { seed: source_seed(seed), ..self.cfg.train.clone() };
                log::info!("training source space for {} (seed {seed})", pair.id);
                let text = self.text(p)?;
                let out = train_text(text, &cfg, &SnapshotPlan::default())?;
                save_embeddings(&out.final_space, &cached)?;
                Ok(out.final_space)
            }
        }
    }

    fn target_space(&mut self, pair: &PairConfig, value: &str, seed: u64) -> Result<EmbeddingSpace> {
        let corpus = match &pair.target {
            TargetSource::Spaces(m) => return load_embeddings(&m[value], None),
            TargetSource::Corpus(p) => p.clone(),
        };
        let corpus_hash = self.file_hash(&corpus)?;
        let train = TrainConfig { seed, ..self.cfg.train.clone() };
        match self.cfg.kind {
            ConditionKind::Size => {
                let key = sha_hex(&["size", &corpus_hash, &self.train_key(), &seed.to_string(), value]);
                let cached = self.space_dir().join(format!("{key}.vec"));
                if cached.exists() {
                    return load_embeddings(&cached, None);
                }
                let text = self.text(&corpus)?;
                let lines: Vec<&str> = text.lines().collect();
                let n = SizeValue::parse(value)?.sentences(lines.len());
                let sample = shuffle_sample_lines(&lines, seed, &[n])?;
                let mut joined = sample[0].join("\n");
                joined.push('\n');
                log::info!("training {} target on {n} sentences (seed {seed})", pair.id);
                let out = train_text(&joined, &train, &SnapshotPlan::default())?;
                save_embeddings(&out.final_space, &cached)?;
                Ok(out.final_space)
            }
            ConditionKind::Updates => {
                let budgets = self.budgets();
                let budget_list = format!("{budgets:?}");
                let key = sha_hex(&["updates", &corpus_hash, &self.train_key(), &seed.to_string(), &budget_list]);
                let path_for = |dir: &Path, m: u64| dir.join(format!("{key}.{m}.vec"));
                let wanted = parse_count(value)?;
                let cached = path_for(&self.space_dir(), wanted);
                if cached.exists() {
                    return load_embeddings(&cached, None);
                }
                log::info!("training {} target with snapshots {budgets:?} (seed {seed})", pair.id);
                let dir = self.space_dir();
                let text = self.text(&corpus)?;
                let out = train_text(text, &train, &SnapshotPlan::new(budgets)?)?;
                let mut found = None;
                for s in out.snapshots {
                    save_embeddings(&s.space, path_for(&dir, s.budget))?;
                    if s.budget == wanted {
                        found = Some(s.space);
                    }
                }
                found.ok_or_else(|| Error::param(format!("no snapshot for budget {wanted}")))
            }
        }
    }
}

/// Source spaces use a seed stream disjoint from the targets'.
fn source_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn seed_dicts(full: &BilingualDictionary, sizes: &[usize]) -> Vec<(String, BilingualDictionary)> {
    if sizes.is_empty() {
        return vec![("full".to_string(), full.clone())];
    }
    sizes
        .iter()
        .map(|&n| {
            let d = BilingualDictionary::new(full.name.clone(), full.entries().iter().take(n).cloned());
            (n.to_string(), d)
        })
        .collect()
}

/// Runs every grid point, skipping those already recorded in the manifest,
/// and writes `records.csv`, `manifest.tsv` and `failures.log` under the
/// output directory. Stage failures are collected; the rest of the grid
/// still runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let points_dir = cfg.out_dir.join("points");
    for d in [&cfg.out_dir, &points_dir, &cfg.cache_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let manifest_path = cfg.out_dir.join("manifest.tsv");
    let mut done: HashSet<String> = HashSet::new();
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        done.extend(text.lines().filter_map(|l| l.split('\t').next()).map(str::to_string));
    }

    let mut runner = Runner {
        cfg,
        file_hashes: HashMap::new(),
        texts: HashMap::new(),
    };
    let mut summary = RunSummary::default();
    let mut manifest_lines = Vec::new();
    for point in cfg.grid_points() {
        let pair = cfg.pairs.iter().find(|p| p.id == point.pair).expect("grid built from pairs");
        let hash = runner.point_hash(pair, &point)?;
        let point_file = points_dir.join(format!("{hash}.csv"));
        if done.contains(&hash) && point_file.exists() {
            summary.records.extend(load_records(&point_file)?);
            summary.skipped += 1;
            manifest_lines.push(format!("{hash}\t{}\t{}\t{}", point.pair, point.value, point.seed));
            continue;
        }
        let (records, failures) = run_point(&mut runner, pair, &point);
        summary.computed += 1;
        let file = fs::File::create(&point_file).map_err(|e| Error::io(&point_file, e))?;
        write_records(&records, file)?;
        if failures.is_empty() {
            manifest_lines.push(format!("{hash}\t{}\t{}\t{}", point.pair, point.value, point.seed));
        }
        for f in &failures {
            log::error!("{} [{}]: {}", f.point, f.stage, f.reason);
        }
        summary.records.extend(records);
        summary.failures.extend(failures);
    }

    let mut manifest = manifest_lines.join("\n");
    manifest.push('\n');
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let records_path = cfg.out_dir.join("records.csv");
    let file = fs::File::create(&records_path).map_err(|e| Error::io(&records_path, e))?;
    write_records(&summary.records, file)?;
    let log_path = cfg.out_dir.join("failures.log");
    let log: String = summary
        .failures
        .iter()
        .map(|f| format!("{}\t{}\t{}\n", f.point, f.stage, f.reason))
        .collect();
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    Ok(summary)
}

fn run_point(runner: &mut Runner<'_>, pair: &PairConfig, point: &GridPoint) -> (Vec<Record>, Vec<Failure>) {
    let cfg = runner.cfg;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let fail = |stage: &str, e: Error| Failure {
        point: point.clone(),
        stage: stage.to_string(),
        reason: e.to_string(),
    };

    let loaded = (|| -> std::result::Result<_, (String, Error)> {
        let s = runner.source_space(pair, point.seed).map_err(|e| ("source".to_string(), e))?;
        let t = runner
            .target_space(pair, &point.value, point.seed)
            .map_err(|e| ("target".to_string(), e))?;
        let train = load_dictionary(&pair.train_dict).map_err(|e| ("train_dict".to_string(), e))?;
        let test = load_dictionary(&pair.test_dict).map_err(|e| ("test_dict".to_string(), e))?;
        Ok((s, t, train, test))
    })();
    let (source, target, train_dict, test_dict) = match loaded {
        Ok(x) => x,
        Err((stage, e)) => {
            failures.push(fail(&stage, e));
            return (records, failures);
        }
    };

    let base = |preproc: &PreprocessChain, dict: &str, selflearn: &str, metric: MetricKind, score: f64| Record {
        pair: point.pair.clone(),
        kind: cfg.kind.to_string(),
        value: point.value.clone(),
        preproc: preproc.to_string(),
        dict: dict.to_string(),
        selflearn: selflearn.to_string(),
        seed: point.seed.to_string(),
        metric: metric.name().to_string(),
        score,
    };
    let dicts = seed_dicts(&train_dict, &cfg.dict_sizes);
    for chain in &cfg.preproc {
        let prepared = apply_chain(&source, chain).and_then(|s| Ok((s, apply_chain(&target, chain)?)));
        let (s, t) = match prepared {
            Ok(x) => x,
            Err(e) => {
                failures.push(fail(&format!("preproc={chain}"), e));
                continue;
            }
        };
        for &metric in &cfg.metrics {
            let stage = format!("{} preproc={chain}", metric.name());
            let iso = match metric {
                MetricKind::Evs => Some(evs(&s, &t, cfg.n_top, cfg.knn).map(|r| r.delta)),
                MetricKind::Gh => Some(gh(&s, &t, cfg.n_top)),
                MetricKind::Rsim => {
                    let d = match cfg.rsim_dict {
                        RsimDict::Train => &train_dict,
                        RsimDict::Test => &test_dict,
                    };
                    Some(rsim(&s, &t, d, &cfg.rsim))
                }
                MetricKind::Mrr => None,
            };
            if let Some(result) = iso {
                match result {
                    Ok(score) => records.push(base(chain, "na", "na", metric, score)),
                    Err(e) => failures.push(fail(&stage, e)),
                }
                continue;
            }
            for (size, dict) in &dicts {
                for &sl in &cfg.selflearn {
                    let stage = format!("{stage} dict={size} selflearn={sl}");
                    let map = if sl {
                        self_learn(&s, &t, dict, &cfg.self_learn)
                    } else {
                        procrustes(&s, &t, dict)
                    };
                    let score = map
                        .and_then(|m| apply_map(&s, &m))
                        .and_then(|mapped| evaluate_mrr(&mapped, &t, &test_dict, cfg.cutoff))
                        .map(|r| r.mrr);
                    match score {
                        Ok(v) => records.push(base(chain, size, &sl.to_string(), metric, v)),
                        Err(e) => failures.push(fail(&stage, e)),
                    }
                }
            }
        }
    }
    (records, failures)
}

/// Grouping of MRR records that share every field but pair and seed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    pub kind: String,
    pub value: String,
    pub preproc: String,
    pub dict: String,
    pub selflearn: String,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{}", self.kind, self.value, self.preproc, self.dict, self.selflearn)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapRow {
    pub condition: Condition,
    /// Seed-averaged MRR of each pair; `None` when the pair lacks the condition.
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl GapRow {
    pub fn gap(&self) -> Option<f64> {
        Some(self.a? - self.b?)
    }
}

/// Signed MRR gap `a - b` per condition, in order of first appearance.
pub fn gap_report(records: &[Record], pair_a: &str, pair_b: &str) -> Vec<GapRow> {
    let mut order: Vec<Condition> = Vec::new();
    let mut sums: HashMap<(Condition, bool), (f64, usize)> = HashMap::new();
    for r in records.iter().filter(|r| r.metric == "mrr") {
        let is_a = if r.pair == pair_a {
            true
        } else if r.pair == pair_b {
            false
        } else {
            continue;
        };
        let c = Condition {
            kind: r.kind.clone(),
            value: r.value.clone(),
            preproc: r.preproc.clone(),
            dict: r.dict.clone(),
            selflearn: r.selflearn.clone(),
        };
        if !order.contains(&c) {
            order.push(c.clone());
        }
        let e = sums.entry((c, is_a)).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    let mean = |c: &Condition, a: bool| sums.get(&(c.clone(), a)).map(|(s, n)| s / *n as f64);
    order
        .into_iter()
        .map(|c| GapRow {
            a: mean(&c, true),
            b: mean(&c, false),
            condition: c,
        })
        .collect()
}

/// Gap table as CSV; absent scores and gaps are written as `absent`.
pub fn format_gap_report(rows: &[GapRow], pair_a: &str, pair_b: &str) -> String {
    let cell = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.3}"));
    let mut out = format!("kind,value,preproc,dict,selflearn,{pair_a},{pair_b},gap\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.condition, cell(r.a), cell(r.b), cell(r.gap())));
    }
    out
}

/// Ranks with ties averaged, 1-based.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Least-squares line `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("a fit needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::param("a fit needs at least two distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    /// Record field holding the numeric x value, normally `value`.
    pub x: String,
    pub metric: String,
    /// Record fields whose joint value names a series.
    pub series: Vec<String>,
    pub log_x: bool,
    pub fit: bool,
    /// Only records whose field equals the value are plotted.
    pub filters: Vec<(String, String)>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec {
            x: "value".into(),
            metric: "mrr".into(),
            series: vec!["pair".into()],
            log_x: false,
            fit: false,
            filters: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, seed-averaged y)` sorted by x.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSummary {
    pub series: Vec<Series>,
    /// Least-squares `(slope, intercept)` in `(log10 x, y)` when log-x, else
    /// in `(x, y)`; pooled over all series.
    pub fit: Option<(f64, f64)>,
    pub spearman: Option<f64>,
    pub pearson_log: Option<f64>,
    pub svg: String,
}

fn parse_x(s: &str) -> Option<f64> {
    let s = s.trim();
    s.strip_suffix('%').unwrap_or(s).trim().parse().ok()
}

/// Groups records into series and renders them as an SVG line chart.
pub fn plot_records(records: &[Record], spec: &PlotSpec) -> Result<PlotSummary> {
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    'records: for r in records {
        if r.metric != spec.metric {
            continue;
        }
        for (field, want) in &spec.filters {
            if r.field(field)? != want {
                continue 'records;
            }
        }
        let raw = r.field(&spec.x)?;
        let x = parse_x(raw).ok_or_else(|| Error::param(format!("non-numeric x value {raw:?}")))?;
        if spec.log_x && x <= 0.0 {
            return Err(Error::param(format!("log-scale x needs positive values, got {raw}")));
        }
        let name = spec
            .series
            .iter()
            .map(|f| r.field(f).map(str::to_string))
            .collect::<Result<Vec<_>>>()?
            .join(" ");
        if !groups.contains_key(&name) {
            order.push(name.clone());
        }
        let e = groups.entry(name).or_default().entry(x.to_bits()).or_insert((x, 0.0, 0));
        e.1 += r.score;
        e.2 += 1;
    }
    if groups.is_empty() {
        return Err(Error::param(format!("no records with metric {:?} match the selection", spec.metric)));
    }
    let series: Vec<Series> = order
        .iter()
        .map(|name| {
            let mut points: Vec<(f64, f64)> = groups[name].values().map(|&(x, s, n)| (x, s / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: name.clone(), points }
        })
        .collect();
    if series.iter().all(|s| s.points.len() < 2) {
        return Err(Error::param("need at least one series with two points"));
    }

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let tx: Vec<f64> = xs.iter().map(|&x| if spec.log_x { x.log10() } else { x }).collect();
    let fit = if spec.fit { linear_fit(&tx, &ys).ok() } else { None };
    let spearman = if spec.fit { spearman(&xs, &ys).ok() } else { None };
    let pearson_log = if spec.fit && xs.iter().all(|&x| x > 0.0) {
        pearson(&xs.iter().map(|x| x.log10()).collect::<Vec<_>>(), &ys).ok()
    } else {
        None
    };
    let svg = render_svg(&series, spec, fit, spearman, pearson_log);
    Ok(PlotSummary {
        series,
        fit,
        spearman,
        pearson_log,
        svg,
    })
}

pub fn emit_plot(records: &[Record], spec: &PlotSpec, out: impl AsRef<Path>) -> Result<PlotSummary> {
    let summary = plot_records(records, spec)?;
    let out = out.as_ref();
    fs::write(out, &summary.svg).map_err(|e| Error::io(out, e))?;
    Ok(summary)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e6).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn render_svg(
    series: &[Series],
    spec: &PlotSpec,
    fit: Option<(f64, f64)>,
    spearman: Option<f64>,
    pearson_log: Option<f64>,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 180.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 80.0;
    let tx = |x: f64| if spec.log_x { x.log10() } else { x };
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(tx(x));
        x1 = x1.max(tx(x));
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.05;
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    s.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    s.push_str(&format!(
        "<path d=\"M{ax0} {ay1} V{ay0} H{ax1}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let t = x0 + f * (x1 - x0);
        let label = if spec.log_x { fmt_tick(10f64.powf(t)) } else { fmt_tick(t) };
        let x = LEFT + f * (ax1 - ax0);
        s.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{ay0}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            ay0 + 5.0,
            ay0 + 18.0,
            escape(&label)
        ));
        let yv = y0 + f * (y1 - y0);
        let y = py(yv);
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{ax0}\" y2=\"{y:.2}\" stroke=\"black\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            ax0 - 5.0,
            ax0 - 8.0,
            y + 4.0,
            escape(&fmt_tick(yv))
        ));
    }
    let xlabel = if spec.log_x { format!("{} (log scale)", spec.x) } else { spec.x.clone() };
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        (ax0 + ax1) / 2.0,
        ay0 + 36.0,
        escape(&xlabel)
    ));
    s.push_str(&format!(
        "<text x=\"15\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.2})\">{}</text>\n",
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(&spec.metric)
    ));

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in &ser.points {
            s.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n", px(x), py(y)));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        s.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.name)
        ));
    }

    let mut caption = Vec::new();
    if let Some((a, b)) = fit {
        let (xs, xe) = (x0, x1);
        let (ys, ye) = (a * xs + b, a * xe + b);
        let sx = |t: f64| LEFT + (t - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        s.push_str(&format!(
            "<line class=\"fit\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#1f3fbf\" stroke-dasharray=\"5,3\"/>\n",
            sx(xs),
            py(ys),
            sx(xe),
            py(ye)
        ));
        let var = if spec.log_x { "log10(x)" } else { "x" };
        caption.push(format!("fit: y = {a:.9} * {var} + {b:.9}"));
    }
    if let Some(r) = spearman {
        caption.push(format!("Spearman rho = {r:.4}"));
    }
    if let Some(r) = pearson_log {
        caption.push(format!("Pearson r (log x) = {r:.4}"));
    }
    for (i, line) in caption.iter().enumerate() {
        s.push_str(&format!(
            "<text class=\"caption\" x=\"{LEFT}\" y=\"{:.2}\">{}</text>\n",
            H - 28.0 + 14.0 * i as f64 - 14.0 * (caption.len().saturating_sub(2)) as f64,
            escape(line)
        ));
    }
    s.push_str("</svg>\n");
    s
}
