use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use candle_core::{Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::checkpoint::{Checkpoint, NamedTensor, RngState};
use super::TrainConfig;
use crate::brush::{generate_brush, BrushPrimitive};
use crate::datagen::{make_training_sample, SynthConfig, SynthSample};
use crate::error::{Error, Result};
use crate::nn::{PredictorConfig, StrokeNet};
use crate::objective::{total_loss_with_grad, LossBreakdown, LossWithGrad};
use crate::prediction::PredictionOutput;
use crate::stroke::{sigmoid, PARAM_COUNT};

/// Stream used for training data, kept apart from weight initialization.
const DATA_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: u64,
    pub pixel_loss: f64,
    pub stroke_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct StepStats {
    /// Iteration count after the step.
    pub iteration: u64,
    /// Batch means.
    pub loss: LossBreakdown,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Per-parameter gradient norms, in store order.
    pub param_grad_norms: Vec<f64>,
}

pub struct Trainer {
    net: StrokeNet,
    cfg: TrainConfig,
    synth: SynthConfig,
    brush: BrushPrimitive,
    adam: Adam,
    data_rng: ChaCha8Rng,
    iteration: u64,
    dump_dir: Option<PathBuf>,
}

fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    rng
}

impl Trainer {
    pub fn new(predictor: PredictorConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let net = StrokeNet::new(predictor, cfg.seed)?;
        let adam = Adam::new(net.store().params(), cfg.learning_rate)?;
        let rng = data_rng(cfg.seed);
        Self::assemble(net, cfg, adam, rng, 0)
    }

    fn assemble(
        net: StrokeNet,
        cfg: TrainConfig,
        adam: Adam,
        rng: ChaCha8Rng,
        iteration: u64,
    ) -> Result<Self> {
        let p = net.config().patch_size;
        let synth = SynthConfig::for_patch(p, net.config().query_count);
        synth.validate()?;
        let brush = generate_brush(&cfg.brush, cfg.brush_size, cfg.brush_size)?;
        Ok(Trainer {
            net,
            cfg,
            synth,
            brush,
            adam,
            data_rng: rng,
            iteration,
            dump_dir: None,
        })
    }

    /// Where a diagnostic dump is written if a loss turns non-finite.
    pub fn set_dump_dir(&mut self, dir: impl Into<PathBuf>) {
        self.dump_dir = Some(dir.into());
    }

    pub fn net(&self) -> &StrokeNet {
        &self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn brush(&self) -> &BrushPrimitive {
        &self.brush
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Draws `batch_size` block samples; each background canvas gets its own
    /// generator seeded from the data stream.
    pub fn next_batch(&mut self) -> Result<Vec<SynthSample>> {
        let per = self.synth.samples_per_background();
        let backgrounds = self.cfg.batch_size.div_ceil(per);
        let seeds: Vec<u64> = (0..backgrounds).map(|_| self.data_rng.next_u64()).collect();
        let groups = seeds
            .par_iter()
            .map(|&s| {
                make_training_sample(&self.synth, &self.brush, &mut ChaCha8Rng::seed_from_u64(s))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut batch: Vec<SynthSample> = groups.into_iter().flatten().collect();
        batch.truncate(self.cfg.batch_size);
        Ok(batch)
    }

    /// One optimizer step on the mean of the default objective.
    pub fn step(&mut self) -> Result<StepStats> {
        let batch = self.next_batch()?;
        self.step_on(&batch)
    }

    pub fn step_on(&mut self, batch: &[SynthSample]) -> Result<StepStats> {
        let weights = self.cfg.weights;
        let brush = self.brush.clone();
        self.step_with_objective(batch, move |s, p| {
            total_loss_with_grad(s, p, &weights, &brush)
        })
    }

    /// One optimizer step with a caller-supplied per-sample objective giving
    /// the loss and its gradient with respect to squashed parameters and
    /// confidence logits.
    pub fn step_with_objective<F>(
        &mut self,
        batch: &[SynthSample],
        objective: F,
    ) -> Result<StepStats>
    where
        F: Fn(&SynthSample, &PredictionOutput) -> Result<LossWithGrad> + Sync,
    {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let canvases: Vec<_> = batch.iter().map(|s| s.canvas.clone()).collect();
        let targets: Vec<_> = batch.iter().map(|s| s.target.clone()).collect();
        let c = self.net.images_to_tensor(&canvases)?;
        let t = self.net.images_to_tensor(&targets)?;
        let out = self.net.forward(&c, &t, true)?;
        let preds = self.net.to_predictions(&out)?;

        let results = batch
            .par_iter()
            .zip(preds.par_iter())
            .map(|(s, p)| objective(s, p))
            .collect::<Result<Vec<_>>>()?;

        let b = batch.len() as f64;
        let mut loss = LossBreakdown::default();
        for r in &results {
            loss.pixel += r.loss.pixel / b;
            loss.stroke += r.loss.stroke / b;
            loss.total += r.loss.total / b;
        }
        let next = self.iteration + 1;
        if !(loss.total.is_finite() && loss.pixel.is_finite() && loss.stroke.is_finite()) {
            self.dump_nonfinite(next, batch, &preds, &results);
            return Err(Error::NonFiniteLoss { iteration: next });
        }

        let n = self.net.config().query_count;
        let mut g_raw = Vec::with_capacity(batch.len() * n * PARAM_COUNT);
        let mut g_conf = Vec::with_capacity(batch.len() * n);
        for (r, p) in results.iter().zip(&preds) {
            for (g, raw) in r.grad_params.iter().zip(&p.raw_params) {
                for k in 0..PARAM_COUNT {
                    let s = sigmoid(raw[k]);
                    g_raw.push((g[k] * s * (1.0 - s) / b) as f32);
                }
            }
            g_conf.extend(r.grad_confidences.iter().map(|&g| (g / b) as f32));
        }
        let dev = self.net.device().clone();
        let g_raw = Tensor::from_vec(g_raw, (batch.len(), n, PARAM_COUNT), &dev)?;
        let g_conf = Tensor::from_vec(g_conf, (batch.len(), n), &dev)?;
        let surrogate =
            ((&out.params * &g_raw)?.sum_all()? + (&out.confidences * &g_conf)?.sum_all()?)?;
        let grads = surrogate.backward()?;

        let params: &[(String, Var)] = self.net.store().params();
        let mut gs = Vec::with_capacity(params.len());
        let mut norms = Vec::with_capacity(params.len());
        for (_, v) in params {
            let g = match grads.get(v.as_tensor()) {
                Some(g) => g.clone(),
                None => v.zeros_like()?,
            };
            norms.push((g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64).sqrt());
            gs.push(g);
        }
        let grad_norm = norms.iter().map(|n| n * n).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            self.dump_nonfinite(next, batch, &preds, &results);
            return Err(Error::NonFiniteLoss { iteration: next });
        }
        if self.cfg.grad_clip > 0.0 && grad_norm > self.cfg.grad_clip {
            let scale = self.cfg.grad_clip / grad_norm;
            gs = gs
                .into_iter()
                .map(|g| g * scale)
                .collect::<candle_core::Result<_>>()?;
        }
        self.adam.update(params, &gs)?;
        self.iteration = next;
        Ok(StepStats {
            iteration: next,
            loss,
            grad_norm,
            param_grad_norms: norms,
        })
    }

    fn dump_nonfinite(
        &self,
        iteration: u64,
        batch: &[SynthSample],
        preds: &[PredictionOutput],
        results: &[LossWithGrad],
    ) {
        #[derive(Serialize)]
        struct Item {
            loss: LossBreakdown,
            raw_params: Vec<[f64; PARAM_COUNT]>,
            confidences: Vec<f64>,
            truth: Vec<[f64; PARAM_COUNT]>,
            labels: Vec<bool>,
        }
        #[derive(Serialize)]
        struct Dump {
            iteration: u64,
            items: Vec<Item>,
        }
        let items = batch
            .iter()
            .zip(preds)
            .zip(results)
            .map(|((s, p), r)| Item {
                loss: r.loss,
                raw_params: p.raw_params.clone(),
                confidences: p.confidences.clone(),
                truth: s.truth.strokes.iter().map(|s| s.to_array()).collect(),
                labels: s.truth.labels.clone(),
            })
            .collect();
        let dump = Dump { iteration, items };
        let Some(dir) = &self.dump_dir else {
            eprintln!("non-finite loss at iteration {iteration}");
            return;
        };
        let path = dir.join(format!("nonfinite_{iteration}.json"));
        let written = serde_json::to_vec_pretty(&dump)
            .ok()
            .is_some_and(|bytes| std::fs::write(&path, bytes).is_ok());
        if written {
            eprintln!(
                "non-finite loss at iteration {iteration}; dump in {}",
                path.display()
            );
        } else {
            eprintln!("non-finite loss at iteration {iteration}; dump failed");
        }
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors = Vec::new();
        let to_named = |prefix: &str, name: &str, t: &Tensor| -> Result<NamedTensor> {
            Ok(NamedTensor {
                name: format!("{prefix}/{name}"),
                shape: t.dims().to_vec(),
                data: t.flatten_all()?.to_vec1::<f32>()?,
            })
        };
        let store = self.net.store();
        for (name, v) in store.params() {
            tensors.push(to_named("param", name, v.as_tensor())?);
        }
        for (name, v) in store.buffers() {
            tensors.push(to_named("buffer", name, v.as_tensor())?);
        }
        for ((name, _), m) in store.params().iter().zip(&self.adam.m) {
            tensors.push(to_named("adam_m", name, m)?);
        }
        for ((name, _), v) in store.params().iter().zip(&self.adam.v) {
            tensors.push(to_named("adam_v", name, v)?);
        }
        Ok(Checkpoint {
            predictor: self.net.config().clone(),
            train: self.cfg.clone(),
            iteration: self.iteration,
            rng: RngState::capture(&self.data_rng),
            adam_step: self.adam.step,
            tensors,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.train.validate()?;
        let net = load_net(ck)?;
        let mut adam = Adam::new(net.store().params(), ck.train.learning_rate)?;
        adam.step = ck.adam_step;
        let dev = net.device().clone();
        for (i, (name, v)) in net.store().params().iter().enumerate() {
            for (prefix, slot) in [("adam_m", &mut adam.m), ("adam_v", &mut adam.v)] {
                let key = format!("{prefix}/{name}");
                let t = ck
                    .tensor(&key)
                    .ok_or_else(|| Error::ModelMismatch(format!("checkpoint lacks {key}")))?;
                if t.shape != v.dims() {
                    return Err(Error::ModelMismatch(format!("shape mismatch for {key}")));
                }
                slot[i] = Tensor::from_vec(t.data.clone(), t.shape.as_slice(), &dev)?;
            }
        }
        Self::assemble(net, ck.train.clone(), adam, ck.rng.restore()?, ck.iteration)
    }
}

/// Rebuilds a network from the weights and buffers in a checkpoint.
pub(crate) fn load_net(ck: &Checkpoint) -> Result<StrokeNet> {
    let net = StrokeNet::new(ck.predictor.clone(), 0)?;
    let store = net.store();
    for (prefix, list) in [("param", store.params()), ("buffer", store.buffers())] {
        for (name, _) in list {
            let key = format!("{prefix}/{name}");
            let t = ck
                .tensor(&key)
                .ok_or_else(|| Error::ModelMismatch(format!("checkpoint lacks {key}")))?;
            store.assign(name, &t.shape, t.data.clone())?;
        }
    }
    Ok(net)
}

impl StrokeNet {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        load_net(ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_net(&Checkpoint::load(path)?)
    }
}

/// Where and how `run_training` works.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// Continue from `output_dir/checkpoint.bin` if it exists.
    pub resume: bool,
    /// Print a progress line every this many logged records (0 = silent).
    pub print_every: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingSummary {
    pub checkpoint_path: PathBuf,
    pub iteration: u64,
    /// One record per step taken in this invocation.
    pub history: Vec<MetricRecord>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let f = std::fs::File::open(path)?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn truncate_metrics(path: &Path, iteration: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<MetricRecord> = read_metrics(path)?
        .into_iter()
        .filter(|r| r.iteration <= iteration)
        .collect();
    let mut out = String::new();
    for r in &kept {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Trains until `cfg.iterations`, logging to `metrics.jsonl` and writing
/// `checkpoint.bin` every `checkpoint_every` steps and at the end.
pub fn run_training(
    predictor: PredictorConfig,
    cfg: TrainConfig,
    opts: &RunOptions,
) -> Result<TrainingSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&opts.output_dir)?;
    let ck_path = opts.output_dir.join(CHECKPOINT_FILE);
    let metrics_path = opts.output_dir.join(METRICS_FILE);

    let mut trainer = if opts.resume && ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        if ck.predictor != predictor {
            return Err(Error::ModelMismatch(
                "checkpoint architecture differs from the requested one".into(),
            ));
        }
        let same_except_length = TrainConfig {
            iterations: cfg.iterations,
            ..ck.train.clone()
        };
        if same_except_length != cfg {
            return Err(Error::ModelMismatch(
                "checkpoint training config differs from the requested one".into(),
            ));
        }
        let mut t = Trainer::from_checkpoint(&Checkpoint {
            train: cfg.clone(),
            ..ck
        })?;
        truncate_metrics(&metrics_path, t.iteration())?;
        t.set_dump_dir(&opts.output_dir);
        t
    } else {
        if metrics_path.exists() {
            std::fs::remove_file(&metrics_path)?;
        }
        let mut t = Trainer::new(predictor, cfg.clone())?;
        t.set_dump_dir(&opts.output_dir);
        t
    };

    let mut metrics = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)?;
    let mut history = Vec::new();
    while trainer.iteration() < cfg.iterations {
        let stats = trainer.step()?;
        let rec = MetricRecord {
            iteration: stats.iteration,
            pixel_loss: stats.loss.pixel,
            stroke_loss: stats.loss.stroke,
            total: stats.loss.total,
        };
        if stats.iteration % cfg.log_every == 0 || stats.iteration == cfg.iterations {
            writeln!(metrics, "{}", serde_json::to_string(&rec)?)?;
            if opts.print_every > 0 && (stats.iteration / cfg.log_every) % opts.print_every == 0 {
                eprintln!(
                    "iter {:>6}  pixel {:.4}  stroke {:.4}  total {:.4}  |g| {:.3}",
                    rec.iteration, rec.pixel_loss, rec.stroke_loss, rec.total, stats.grad_norm
                );
            }
        }
        history.push(rec);
        if stats.iteration % cfg.checkpoint_every == 0 || stats.iteration == cfg.iterations {
            metrics.flush()?;
            trainer.checkpoint()?.save(&ck_path)?;
        }
    }
    if !ck_path.exists() {
        trainer.checkpoint()?.save(&ck_path)?;
    }
    Ok(TrainingSummary {
        checkpoint_path: ck_path,
        iteration: trainer.iteration(),
        history,
    })
}
