use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::model::{per_token_loss, Model};
use crate::numerics::{Precision, Real, Tensor};
use crate::training::{lr_at, Adam, Plateau};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    /// Total steps `S`; the cosine reaches zero here.
    pub steps: usize,
    pub warmup: usize,
    pub peak_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub eval_every: usize,
    /// Held-out examples scored per evaluation (the first ones).
    pub eval_examples: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Worker threads for per-example gradients; `None` uses the default.
    pub threads: Option<usize>,
    /// Abort once the loss exceeds `divergence_factor` times the initial
    /// loss for `divergence_window` consecutive steps.
    pub divergence_factor: f64,
    pub divergence_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 16,
            steps: 2000,
            warmup: 100,
            peak_lr: 3e-4,
            plateau_factor: 0.5,
            plateau_patience: 3,
            plateau_min_delta: 1e-3,
            eval_every: 100,
            eval_examples: 32,
            seed: 0,
            precision: Precision::F32,
            threads: None,
            divergence_factor: 2.0,
            divergence_window: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch == 0 || self.steps == 0 || self.eval_every == 0 || self.eval_examples == 0 {
            return fail("batch, steps, eval_every and eval_examples must be positive".into());
        }
        if self.warmup >= self.steps {
            return fail(format!("warmup {} must be below steps {}", self.warmup, self.steps));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail(format!("plateau factor {} outside (0, 1)", self.plateau_factor));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return fail(format!("peak learning rate {} must be positive", self.peak_lr));
        }
        if self.plateau_patience == 0 || self.divergence_window == 0 {
            return fail("plateau patience and divergence window must be positive".into());
        }
        Ok(())
    }
}

/// One optimizer step. `val` is set on evaluation steps.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub lr: f64,
    pub train: f64,
    pub val: Option<f64>,
}

/// Held-out loss after `step` completed updates.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub val: f64,
    /// Mean loss at each position over the scored examples.
    pub per_position: Vec<f64>,
}

/// Rounds through the run precision so checkpointed state is exact.
fn round<T: Real>(v: f64) -> f64 {
    T::of(v).as_f64()
}

/// Optimizer, schedule and bookkeeping around a model. Step `s` trains on
/// examples drawn by a generator keyed on `(seed, s)`, so a resumed run
/// sees the same batches as an uninterrupted one.
pub struct Trainer<T: Real> {
    pub model: Model<T>,
    pub cfg: TrainConfig,
    adam: Adam<T>,
    plateau: Plateau,
    step: usize,
    initial_loss: Option<f64>,
    above: usize,
    pub history: Vec<HistoryRow>,
    pub evals: Vec<EvalRecord>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: Model<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(&model.params.tensors());
        Ok(Self {
            model,
            cfg,
            adam,
            plateau: Plateau::default(),
            step: 0,
            initial_loss: None,
            above: 0,
            history: Vec::new(),
            evals: Vec::new(),
        })
    }

    /// Completed steps.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn plateau(&self) -> Plateau {
        self.plateau
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.cfg.threads {
            builder = builder.num_threads(t);
        }
        builder
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))
    }

    /// Trains until `S` steps are complete.
    pub fn run(&mut self, data: &Dataset) -> Result<()> {
        self.run_until(data, self.cfg.steps)
    }

    /// Trains until `end` steps are complete (at most `S`).
    pub fn run_until(&mut self, data: &Dataset, end: usize) -> Result<()> {
        if data.train.is_empty() || data.val.is_empty() {
            return Err(Error::Input("training and validation sets must be non-empty".into()));
        }
        let pool = self.pool()?;
        let end = end.min(self.cfg.steps);
        while self.step < end {
            pool.install(|| self.train_step(data))?;
            if self.step.is_multiple_of(self.cfg.eval_every) || self.step == self.cfg.steps {
                let record = pool.install(|| self.evaluate(&data.val))?;
                self.plateau.observe(record.val, &self.cfg);
                if let Some(row) = self.history.last_mut() {
                    row.val = Some(record.val);
                }
                log::info!("step {} val {:.4}", record.step, record.val);
                self.evals.push(record);
            }
        }
        Ok(())
    }

    fn batch_indices(&self, step: usize, len: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(step as u64);
        (0..self.cfg.batch).map(|_| rng.gen_range(0..len)).collect()
    }

    fn train_step(&mut self, data: &Dataset) -> Result<()> {
        let step = self.step;
        let lr = lr_at(step, &self.cfg, self.plateau.scale);
        let idx = self.batch_indices(step, data.train.len());
        let model = &self.model;
        let results: Vec<(T, Vec<Tensor<T>>)> = idx
            .par_iter()
            .map(|&i| model.loss_and_grads(&data.train[i]))
            .collect::<Result<_>>()?;
        // fixed-order reduction
        let mut iter = results.into_iter();
        let (first_loss, mut grads) = iter.next().expect("batch is non-empty");
        let mut loss = first_loss.as_f64();
        for (l, g) in iter {
            loss += l.as_f64();
            for (acc, gi) in grads.iter_mut().zip(&g) {
                acc.add_assign(gi)?;
            }
        }
        let inv = T::one() / T::of(self.cfg.batch as f64);
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        let train = round::<T>(loss / self.cfg.batch as f64);
        if !train.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at step {step}")));
        }
        self.adam.step(&mut self.model.params.tensors_mut(), &grads, lr)?;
        self.check_divergence(train, step)?;
        self.history.push(HistoryRow {
            step,
            lr,
            train,
            val: None,
        });
        self.step += 1;
        Ok(())
    }

    fn check_divergence(&mut self, train: f64, step: usize) -> Result<()> {
        let initial = *self.initial_loss.get_or_insert(train);
        if train > self.cfg.divergence_factor * initial {
            self.above += 1;
        } else {
            self.above = 0;
        }
        if self.above >= self.cfg.divergence_window {
            return Err(Error::Diverged(format!(
                "loss {train:.4} at step {step} has exceeded {}x the initial {initial:.4} for {} consecutive steps",
                self.cfg.divergence_factor, self.above
            )));
        }
        Ok(())
    }

    /// Mean held-out loss and per-position means over the first
    /// `eval_examples` validation examples.
    pub fn evaluate(&self, val: &[Example]) -> Result<EvalRecord> {
        let subset = &val[..val.len().min(self.cfg.eval_examples)];
        let (val, per_position) = evaluate_examples(&self.model, subset)?;
        Ok(EvalRecord {
            step: self.step,
            val: round::<T>(val),
            per_position,
        })
    }

    /// CSV with columns step, lr, train_nats, val_nats.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("step,lr,train_nats,val_nats\n");
        for r in &self.history {
            let val = r.val.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.6e},{:.6},{}", r.step, r.lr, r.train, val);
        }
        out
    }

    /// Model, optimizer moments and schedule state.
    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = self.model.to_checkpoint();
        let names: Vec<String> = self.model.params.named().into_iter().map(|(n, _)| n).collect();
        for ((name, m), v) in names.iter().zip(&self.adam.m).zip(&self.adam.v) {
            ck.push(format!("adam.m.{name}"), m.clone());
            ck.push(format!("adam.v.{name}"), v.clone());
        }
        for (name, v) in [
            ("step", self.step as f64),
            ("adam_t", self.adam.t as f64),
            ("plateau_best", self.plateau.best),
            ("plateau_stalls", self.plateau.stalls as f64),
            ("plateau_scale", self.plateau.scale),
            ("initial_loss", self.initial_loss.unwrap_or(f64::NAN)),
            ("above", self.above as f64),
        ] {
            ck.push(format!("train.{name}"), Tensor::scalar(T::of(v)));
        }
        ck
    }

    /// Resumes from [`to_checkpoint`](Self::to_checkpoint) output.
    pub fn from_checkpoint(ck: &Checkpoint<T>, cfg: TrainConfig) -> Result<Self> {
        let model = Model::from_checkpoint(ck)?;
        let mut trainer = Self::new(model, cfg)?;
        let names: Vec<String> = trainer.model.params.named().into_iter().map(|(n, _)| n).collect();
        for (i, name) in names.iter().enumerate() {
            for (prefix, slot) in [("m", &mut trainer.adam.m[i]), ("v", &mut trainer.adam.v[i])] {
                let t = ck
                    .get(&format!("adam.{prefix}.{name}"))
                    .ok_or_else(|| Error::Input(format!("checkpoint lacks optimizer state for {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::dims("optimizer state", t.shape(), slot.shape()));
                }
                *slot = t.clone();
            }
        }
        let get = |name: &str| ck.scalar(&format!("train.{name}"));
        trainer.step = get("step")? as usize;
        trainer.adam.t = get("adam_t")? as u64;
        trainer.plateau = Plateau {
            best: get("plateau_best")?,
            stalls: get("plateau_stalls")? as usize,
            scale: get("plateau_scale")?,
        };
        let initial = get("initial_loss")?;
        trainer.initial_loss = (!initial.is_nan()).then_some(initial);
        trainer.above = get("above")? as usize;
        Ok(trainer)
    }
}

/// Mean masked loss over `examples` and the mean loss at each position
/// (over examples whose target there is unmasked).
pub fn evaluate_examples<T: Real>(model: &Model<T>, examples: &[Example]) -> Result<(f64, Vec<f64>)> {
    let scored: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|ex| -> Result<Vec<f64>> {
            let logits = model.forward(&ex.tokens)?;
            Ok(per_token_loss(&logits, &ex.targets)?.1)
        })
        .collect::<Result<_>>()?;
    let n = examples.iter().map(Example::len).max().unwrap_or(0);
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let (mut total, mut count) = (0.0, 0usize);
    for (ex, losses) in examples.iter().zip(&scored) {
        for (t, (&l, &m)) in losses.iter().zip(&ex.mask).enumerate() {
            if m {
                sums[t] += l;
                counts[t] += 1;
                total += l;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Input("no unmasked targets to evaluate".into()));
    }
    let per = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect();
    Ok((total / count as f64, per))
}

/// CSV with columns position, nats.
pub fn per_position_csv(per_position: &[f64]) -> String {
    let mut out = String::from("position,nats\n");
    for (t, v) in per_position.iter().enumerate() {
        let _ = writeln!(out, "{},{v:.6}", t + 1);
    }
    out
}
