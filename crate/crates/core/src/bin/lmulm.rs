use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lmulm::checkpoint::{peek_header, Checkpoint};
use lmulm::config::{load_corpus, CorpusSpec, RunConfig};
use lmulm::costmodel::{cost_report, scaling_sweep, Component, Dims, SweepBackend};
use lmulm::data::{pack_corpus, Dataset, Example};
use lmulm::lmu::{build_continuous, discretize_zoh, impulse_response, Backend, LmuConfig, RkOrder};
use lmulm::model::{per_token_loss, Model};
use lmulm::numerics::{Precision, Real};
use lmulm::powerlaw::{fit_power_law, parse_points, reference_loss, Curve};
use lmulm::training::{evaluate_examples, per_position_csv, Trainer};
use lmulm::{Error, Result};

#[derive(Parser)]
#[command(name = "lmulm", version, about = "Legendre Memory Unit language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Ss,
    Rk,
    Fft,
}

#[derive(Subcommand)]
enum Command {
    /// Print the ZOH-discretized system and, with --n, its impulse response.
    Discretize {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        q: usize,
        /// Impulse response length (0 skips it).
        #[arg(long, default_value_t = 0)]
        n: usize,
    },
    /// Score a text file with a checkpoint, one CSV row per position.
    Run {
        #[arg(long, value_enum, default_value = "fft")]
        backend: BackendArg,
        /// Runge-Kutta order for --backend rk (1, 2 or 4).
        #[arg(long, default_value_t = 4)]
        rk_order: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Train from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mean and per-position held-out loss of a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// File, directory or synthetic:{pattern,random,lag64}.
        #[arg(long)]
        corpus: String,
        /// Sequences scored (0 = all).
        #[arg(long, default_value_t = 0)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Analytic and measured FLOPs per token.
    Flops {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        q: usize,
        #[arg(long = "qprime")]
        q_prime: usize,
        #[arg(long, default_value_t = 4)]
        r: usize,
        /// FFN hidden width (default 4d).
        #[arg(long = "dprime")]
        d_prime: Option<usize>,
    },
    /// FLOP and live-value scaling with sequence length.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "attention,recurrent,parallel")]
        backends: Vec<String>,
        #[arg(long, default_value_t = 256)]
        nmin: usize,
        #[arg(long, default_value_t = 8192)]
        nmax: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 32)]
        q: usize,
    },
    /// Fit loss = (N/N_c)^-alpha to N,loss rows.
    FitPowerlaw {
        #[arg(long)]
        points: PathBuf,
    },
    /// Evaluate a published reference curve.
    Reference {
        #[arg(long)]
        curve: String,
        #[arg(long = "N")]
        n: f64,
        /// S/S_min for the transformer steps term.
        #[arg(long)]
        s_ratio: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Discretize { theta, q, n } => discretize(theta, q, n),
        Command::Run {
            backend,
            rk_order,
            checkpoint,
            input,
        } => {
            let backend = match backend {
                BackendArg::Ss => Backend::StateSpace,
                BackendArg::Rk => Backend::RungeKutta(RkOrder::try_from(rk_order)?),
                BackendArg::Fft => Backend::Fft,
            };
            with_checkpoint(&checkpoint, |p| match p {
                Loaded::F32(m) => run(&m, backend, &input),
                Loaded::F64(m) => run(&m, backend, &input),
            })
        }
        Command::Train { config } => train(&config),
        Command::Eval {
            checkpoint,
            corpus,
            limit,
            seed,
        } => {
            let spec: CorpusSpec = corpus.parse()?;
            with_checkpoint(&checkpoint, |p| match p {
                Loaded::F32(m) => eval(&m, &spec, limit, seed),
                Loaded::F64(m) => eval(&m, &spec, limit, seed),
            })
        }
        Command::Flops {
            n,
            d,
            q,
            q_prime,
            r,
            d_prime,
        } => {
            let dims = Dims {
                n,
                d,
                d_prime: d_prime.unwrap_or(4 * d),
                q,
                q_prime,
                r,
            };
            let report = cost_report(&dims, &Component::ALL, 0)?;
            println!("{report}\n");
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Bench {
            backends,
            nmin,
            nmax,
            d,
            q,
        } => {
            if !nmin.is_power_of_two() || !nmax.is_power_of_two() || nmin > nmax {
                return Err(Error::Config(format!(
                    "nmin {nmin} and nmax {nmax} must be powers of two with nmin <= nmax"
                )));
            }
            let backends = backends.iter().map(|b| b.parse()).collect::<Result<Vec<SweepBackend>>>()?;
            let ns: Vec<usize> = std::iter::successors(Some(nmin), |&n| (n < nmax).then_some(2 * n)).collect();
            let report = scaling_sweep(&backends, &ns, d, q, 0)?;
            print!("{}", report.to_csv());
            for s in &report.series {
                eprintln!("{}: slope {:.4}", s.backend.name(), s.slope);
            }
            Ok(())
        }
        Command::FitPowerlaw { points } => {
            let fit = fit_power_law(&parse_points(&fs::read_to_string(points)?)?)?;
            println!("n_c,alpha,residual\n{:e},{},{:e}", fit.n_c, fit.alpha, fit.residual);
            Ok(())
        }
        Command::Reference { curve, n, s_ratio } => {
            let curve: Curve = curve.parse()?;
            println!("{}", reference_loss(curve, n, s_ratio)?);
            Ok(())
        }
    }
}

fn discretize(theta: f64, q: usize, n: usize) -> Result<()> {
    let sys = discretize_zoh(&build_continuous(&LmuConfig::new(theta, q)?)?)?;
    let mut out = String::new();
    let _ = writeln!(out, "# A_bar {q}x{q}, spectral radius {:.12}", sys.spectral_radius);
    for i in 0..q {
        let row: Vec<String> = sys.a_bar.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    let _ = writeln!(out, "# B_bar {q}");
    let col: Vec<String> = sys.b_bar.data().iter().map(|v| format!("{v:.17e}")).collect();
    let _ = writeln!(out, "{}", col.join(","));
    if n > 0 {
        let h = impulse_response(&sys, n)?;
        let _ = writeln!(out, "# H {q}x{n}");
        for i in 0..q {
            let row: Vec<String> = h.kernels.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    print!("{out}");
    Ok(())
}

enum Loaded {
    F32(Model<f32>),
    F64(Model<f64>),
}

fn with_checkpoint(path: &Path, f: impl FnOnce(Loaded) -> Result<()>) -> Result<()> {
    let bytes = fs::read(path)?;
    let loaded = match peek_header(&bytes)? {
        Precision::F32 => Loaded::F32(Model::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?),
        Precision::F64 => Loaded::F64(Model::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?),
    };
    f(loaded)
}

fn run<T: Real>(model: &Model<T>, backend: Backend, input: &Path) -> Result<()> {
    let text = fs::read(input)?;
    let seqs = pack_corpus(&[text], model.config.n)?;
    let mut out = String::from("position,token,target,loss,argmax\n");
    let (mut total, mut count) = (0.0, 0usize);
    let mut offset = 0;
    for packed in &seqs {
        let ex = Example::from_packed(packed);
        let used = packed.mask.iter().filter(|&&m| m).count();
        let logits = model.forward_with_backend(&ex.tokens[..used], backend)?;
        let (_, losses) = per_token_loss(&logits, &ex.targets[..used])?;
        for (t, &loss) in losses.iter().enumerate() {
            let row = logits.row(t);
            let argmax = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            if ex.mask[t] {
                total += loss;
                count += 1;
                let _ = writeln!(out, "{},{},{},{loss:.6},{argmax}", offset + t, ex.tokens[t], ex.targets[t]);
            } else {
                let _ = writeln!(out, "{},{},,,{argmax}", offset + t, ex.tokens[t]);
            }
        }
        offset += used;
    }
    print!("{out}");
    if count > 0 {
        eprintln!("mean loss {:.6} nats over {count} predictions", total / count as f64);
    }
    Ok(())
}

fn eval<T: Real>(model: &Model<T>, corpus: &CorpusSpec, limit: usize, seed: u64) -> Result<()> {
    let mut examples = load_corpus(corpus, model.config.n, 64 * model.config.n, seed)?;
    if limit > 0 {
        examples.truncate(limit);
    }
    let (mean, per) = evaluate_examples(model, &examples)?;
    println!("# mean_nats,{mean:.6}");
    print!("{}", per_position_csv(&per));
    Ok(())
}

fn train(config: &Path) -> Result<()> {
    let mut cfg = RunConfig::from_file(config)?;
    cfg.train.precision = Precision::from_env_or(cfg.train.precision)?;
    let data = cfg.dataset()?;
    log::info!(
        "{} training and {} held-out sequences of length {}",
        data.train.len(),
        data.val.len(),
        cfg.model.n
    );
    fs::create_dir_all(&cfg.out)?;
    match cfg.train.precision {
        Precision::F32 => train_with::<f32>(&cfg, &data),
        Precision::F64 => train_with::<f64>(&cfg, &data),
    }
}

fn train_with<T: Real>(cfg: &RunConfig, data: &Dataset) -> Result<()> {
    let mut trainer = match &cfg.resume {
        Some(path) => {
            let bytes = fs::read(path)?;
            let found = peek_header(&bytes)?;
            if found != cfg.train.precision {
                return Err(Error::Config(format!(
                    "checkpoint precision {found} differs from run precision {}",
                    cfg.train.precision
                )));
            }
            Trainer::<T>::from_checkpoint(&Checkpoint::from_bytes(&bytes)?, cfg.train.clone())?
        }
        None => {
            let model = Model::<T>::with_init_std(cfg.model, cfg.train.seed, cfg.init_std)?;
            let (nonembed, total) = model.count_params();
            log::info!("{} model: {nonembed} non-embedding parameters, {total} total", cfg.model.variant);
            Trainer::new(model, cfg.train.clone())?
        }
    };
    let start = trainer.step();
    let outcome = trainer.run(data);
    let history = cfg.out.join("history.csv");
    let mut csv = trainer.history_csv();
    if cfg.resume.is_some() {
        csv = merge_history(&fs::read_to_string(&history).unwrap_or_default(), &csv, start);
    }
    fs::write(history, csv)?;
    for e in &trainer.evals {
        fs::write(cfg.out.join(format!("eval_{:06}.csv", e.step)), per_position_csv(&e.per_position))?;
    }
    trainer.to_checkpoint().save(cfg.out.join("checkpoint.lmuc"))?;
    outcome?;
    if let Some(e) = trainer.evals.last() {
        println!("step {} val_nats {:.6}", e.step, e.val);
    }
    Ok(())
}

/// Rows of an earlier run before `start` followed by the rows of `new`,
/// which carries the header.
fn merge_history(old: &str, new: &str, start: usize) -> String {
    let mut lines = new.lines();
    let mut out = lines.next().map(|h| format!("{h}\n")).unwrap_or_default();
    for row in old.lines().skip(1) {
        match row.split(',').next().and_then(|s| s.parse::<usize>().ok()) {
            Some(step) if step < start => {
                out += row;
                out.push('\n');
            }
            _ => {}
        }
    }
    for row in lines {
        out += row;
        out.push('\n');
    }
    out
}
