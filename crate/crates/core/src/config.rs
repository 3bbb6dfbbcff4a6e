//! Plain-text `key = value` run configuration and corpus loading.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{self, Dataset, Example};
use crate::error::{Error, Result};
use crate::lmu::LmuConfig;
use crate::model::{embed_dim_for, ModelConfig, Variant};
use crate::numerics::Precision;
use crate::training::TrainConfig;

/// Where training text comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSpec {
    /// A file (one document) or a directory (one document per file, in
    /// name order), packed into sequences.
    Path(PathBuf),
    /// 64 distinct bytes repeated.
    Pattern,
    /// Uniform random bytes.
    Random,
    /// Runs of 8 symbols from a 16-letter alphabet, copied at lag 64.
    Lag64,
}

impl FromStr for CorpusSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "synthetic:pattern" => CorpusSpec::Pattern,
            "synthetic:random" => CorpusSpec::Random,
            "synthetic:lag64" => CorpusSpec::Lag64,
            other if other.starts_with("synthetic:") => {
                return Err(Error::Unknown {
                    kind: "synthetic corpus",
                    name: other.to_string(),
                })
            }
            path => CorpusSpec::Path(PathBuf::from(path)),
        })
    }
}

/// Everything `train` needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusSpec,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Fraction of sequences held out for evaluation.
    pub val_fraction: f64,
    /// Tokens generated for synthetic corpora.
    pub synthetic_tokens: usize,
    pub init_std: f64,
    pub resume: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "corpus",
    "out",
    "variant",
    "n",
    "d",
    "target_params",
    "d_prime",
    "layers",
    "q",
    "q_prime",
    "theta",
    "batch",
    "steps",
    "warmup",
    "lr",
    "plateau_factor",
    "plateau_patience",
    "plateau_min_delta",
    "eval_every",
    "eval_examples",
    "seed",
    "precision",
    "threads",
    "val_fraction",
    "synthetic_tokens",
    "init_std",
    "resume",
];

/// Splits `key = value` lines; `#` starts a comment. Unknown and repeated
/// keys are errors.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got `{line}`", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1)));
        }
        if out.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let num = |key: &str, default: usize| -> Result<usize> {
            get(key).map_or(Ok(default), |v| parse_value(key, v))
        };
        let real = |key: &str, default: f64| -> Result<f64> {
            get(key).map_or(Ok(default), |v| parse_value(key, v))
        };
        let corpus = get("corpus")
            .ok_or_else(|| Error::Config("`corpus` is required".into()))?
            .parse()?;
        let variant: Variant = get("variant").map_or(Ok(Variant::Lmu), str::parse)?;
        let n = num("n", 128)?;
        let d = match (get("d"), get("target_params")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `d` or `target_params`, not both".into()))
            }
            (Some(v), None) => parse_value("d", v)?,
            (None, Some(v)) => embed_dim_for(parse_value("target_params", v)?)?,
            (None, None) => 48,
        };
        let q = num("q", 24)?;
        let lmu = LmuConfig::with_q_prime(
            real("theta", n as f64)?,
            q,
            num("q_prime", LmuConfig::default_q_prime(q))?,
        )?;
        let model = ModelConfig {
            n,
            vocab: data::VOCAB,
            d,
            layers: num("layers", 2)?,
            variant,
            lmu,
            d_prime: num("d_prime", 4 * d)?,
        };
        model.validate()?;
        let defaults = TrainConfig::default();
        let precision = match get("precision") {
            Some(v) => parse_value::<Precision>("precision", v)?,
            None => defaults.precision,
        };
        let threads = get("threads").map(|v| parse_value("threads", v)).transpose()?;
        let train = TrainConfig {
            batch: num("batch", defaults.batch)?,
            steps: num("steps", defaults.steps)?,
            warmup: num("warmup", defaults.warmup)?,
            peak_lr: real("lr", defaults.peak_lr)?,
            plateau_factor: real("plateau_factor", defaults.plateau_factor)?,
            plateau_patience: num("plateau_patience", defaults.plateau_patience)?,
            plateau_min_delta: real("plateau_min_delta", defaults.plateau_min_delta)?,
            eval_every: num("eval_every", defaults.eval_every)?,
            eval_examples: num("eval_examples", defaults.eval_examples)?,
            seed: get("seed").map_or(Ok(defaults.seed), |v| parse_value("seed", v))?,
            precision,
            threads,
            ..defaults
        };
        train.validate()?;
        let val_fraction = real("val_fraction", 0.1)?;
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {val_fraction} outside (0, 1)")));
        }
        Ok(Self {
            corpus,
            out: PathBuf::from(get("out").unwrap_or("run")),
            model,
            train,
            val_fraction,
            synthetic_tokens: num("synthetic_tokens", 200_000)?,
            init_std: real("init_std", crate::blocks::INIT_STD)?,
            resume: get("resume").map(PathBuf::from),
        })
    }

    /// Reads and parses a config file. Relative corpus, output and resume
    /// paths are taken relative to the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let rebase = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if let CorpusSpec::Path(p) = &cfg.corpus {
            cfg.corpus = CorpusSpec::Path(rebase(p));
        }
        cfg.out = rebase(&cfg.out);
        cfg.resume = cfg.resume.as_deref().map(rebase);
        Ok(cfg)
    }

    /// Builds examples and splits off the held-out tail.
    pub fn dataset(&self) -> Result<Dataset> {
        let examples = load_corpus(&self.corpus, self.model.n, self.synthetic_tokens, self.train.seed)?;
        split(examples, self.val_fraction)
    }
}

/// Reads documents from a file or a directory (sorted by name).
pub fn read_documents(path: &Path) -> Result<Vec<Vec<u8>>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file());
        files.sort();
        files.iter().map(|f| Ok(std::fs::read(f)?)).collect()
    } else {
        Ok(vec![std::fs::read(path)?])
    }
}

/// Examples of length `n` from a corpus specification.
pub fn load_corpus(spec: &CorpusSpec, n: usize, synthetic_tokens: usize, seed: u64) -> Result<Vec<Example>> {
    let examples = match spec {
        CorpusSpec::Path(p) => {
            let docs = read_documents(p)?;
            data::pack_corpus(&docs, n)?
                .iter()
                .map(Example::from_packed)
                .filter(|e| e.mask.iter().any(|&m| m))
                .collect()
        }
        // windows overlap by a prime stride so phases vary
        CorpusSpec::Pattern => data::windows(&data::repeating_pattern(synthetic_tokens, seed), n, 37),
        CorpusSpec::Random => data::windows(&data::random_bytes(synthetic_tokens, seed), n, n),
        CorpusSpec::Lag64 => data::lag_copy(synthetic_tokens / n, n, 64, 16, 8, seed),
    };
    if examples.len() < 2 {
        return Err(Error::Input(format!(
            "corpus yields {} sequences of length {n}; need at least 2",
            examples.len()
        )));
    }
    Ok(examples)
}

/// Holds out the last `ceil(fraction·len)` examples (at least one each way).
pub fn split(mut examples: Vec<Example>, fraction: f64) -> Result<Dataset> {
    let len = examples.len();
    let val = ((len as f64 * fraction).ceil() as usize).clamp(1, len - 1);
    let held = examples.split_off(len - val);
    Ok(Dataset {
        train: examples,
        val: held,
    })
}
