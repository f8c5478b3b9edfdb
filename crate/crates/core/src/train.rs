//! Training loops for the grounding network and the grasp network.

use std::fmt::Write as _;

use ogrg_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Task;
use crate::data::{mgn_batch, model_input, rgs_targets, target_masks, Example};
use crate::error::{CoreError, Result};
use crate::eval::{metrics, predict};
use crate::losses::{motion_loss, CellLabel, rga_grounding_loss, rgs_loss, GroundingLossParams, LossWeights};
use crate::mgn::Mgn;
use crate::model::Ogrg;
use crate::optim::{poly_lr, AdamW, AdamWConfig};

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base rate of the polynomial decay.
    pub lr: f64,
    pub lr_power: f64,
    pub optimizer: AdamWConfig,
    /// Evaluate every this many epochs (and after the last); 0 disables.
    pub eval_every: usize,
}

impl Schedule {
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(CoreError::input("empty training set"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CoreError::config("epochs and batch_size must be positive"));
        }
        if !(self.lr >= 0.0) || !(self.lr_power > 0.0) {
            return Err(CoreError::config("lr must be non-negative and lr_power positive"));
        }
        Ok(())
    }
}

/// Rows of the `step,split,loss,miou,j1` metric log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricLog {
    pub rows: Vec<LogRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub split: String,
    pub loss: Option<f64>,
    pub miou: Option<f64>,
    pub j1: Option<f64>,
}

impl MetricLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,split,loss,miou,j1\n");
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.step, r.split, cell(r.loss), cell(r.miou), cell(r.j1));
        }
        s
    }
}

/// Progress passed to the per-epoch callback (after evaluation).
pub struct EpochEnd<'a> {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub log: &'a MetricLog,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn finite(loss: &Tensor<f32>, step: u64) -> Result<f64> {
    let v = loss.item() as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CoreError::Numeric(format!("non-finite loss at step {step}")))
    }
}

/// One optimizer step with the scheduled rate; returns the rate used.
fn apply(opt: &mut AdamW<f32>, params: &[Tensor<f32>], sched: &Schedule, total: u64) -> Result<f64> {
    let lr = poly_lr(opt.t, total, sched.lr, sched.lr_power);
    opt.step(params, lr)?;
    for p in params {
        p.zero_grad();
    }
    Ok(lr)
}

pub struct GroundingTrainer<'a> {
    pub model: &'a Ogrg<f32>,
    pub opt: &'a mut AdamW<f32>,
    pub schedule: &'a Schedule,
    pub weights: LossWeights,
    pub grounding: GroundingLossParams,
    pub seed: u64,
}

impl GroundingTrainer<'_> {
    /// Loss of one batch, with the graph attached.
    pub fn batch_loss(&self, items: &[&Example]) -> Result<Tensor<f32>> {
        let out = self.model.forward(&model_input(items)?, true)?;
        match self.model.cfg.task {
            Task::Rgs => {
                let rgs = out
                    .rgs
                    .as_ref()
                    .ok_or_else(|| CoreError::Contract("grasp-synthesis model returned no grasp maps".into()))?;
                Ok(rgs_loss(rgs, &rgs_targets(items)?, &self.weights)?.total)
            }
            Task::Rga => rga_grounding_loss(&out.m, &target_masks(items), &self.grounding),
        }
    }

    /// Trains for the scheduled epochs. `train_eval` and `val` are evaluated
    /// at the evaluation interval; `on_epoch` runs after each epoch (for
    /// checkpointing) and may abort by returning an error.
    pub fn run(
        &mut self,
        train: &[Example],
        train_eval: &[Example],
        val: &[Example],
        mut on_epoch: impl FnMut(&EpochEnd, &AdamW<f32>) -> Result<()>,
    ) -> Result<MetricLog> {
        let s = self.schedule;
        s.validate(train.len())?;
        let params = self.model.store.params();
        let total = (s.epochs * s.steps_per_epoch(train.len())) as u64;
        let mut log = MetricLog::default();
        for epoch in 0..s.epochs {
            let order = epoch_order(train.len(), self.seed, epoch);
            let mut sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(s.batch_size) {
                let items: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                let loss = self.batch_loss(&items)?;
                sum += finite(&loss, self.opt.t)?;
                loss.backward()?;
                apply(self.opt, &params, s, total)?;
                batches += 1;
            }
            let mean = sum / batches as f64;
            log.rows.push(LogRow {
                step: self.opt.t,
                split: "train".into(),
                loss: Some(mean),
                miou: None,
                j1: None,
            });
            let last = epoch + 1 == s.epochs;
            if s.eval_every > 0 && ((epoch + 1) % s.eval_every == 0 || last) {
                for (name, set) in [("train_eval", train_eval), ("val", val)] {
                    if set.is_empty() {
                        continue;
                    }
                    let refs: Vec<&Example> = set.iter().collect();
                    let m = metrics(&predict(self.model, &refs, s.batch_size)?, &refs)?;
                    log.rows.push(LogRow {
                        step: self.opt.t,
                        split: name.into(),
                        loss: None,
                        miou: Some(m.miou),
                        j1: m.j1,
                    });
                }
            }
            on_epoch(
                &EpochEnd {
                    epoch,
                    step: self.opt.t,
                    loss: mean,
                    log: &log,
                },
                self.opt,
            )?;
        }
        Ok(log)
    }
}

/// Trains the grasp network on single-cell labels, conditioned on
/// ground-truth masks, computing only each sample's labelled channel.
pub fn train_mgn(
    mgn: &Mgn<f32>,
    opt: &mut AdamW<f32>,
    train: &[Example],
    schedule: &Schedule,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochEnd, &AdamW<f32>) -> Result<()>,
) -> Result<MetricLog> {
    let s = schedule;
    s.validate(train.len())?;
    let params = mgn.store.params();
    let total = (s.epochs * s.steps_per_epoch(train.len())) as u64;
    let mut log = MetricLog::default();
    for epoch in 0..s.epochs {
        let order = epoch_order(train.len(), seed, epoch);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(s.batch_size) {
            let items: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let masks: Vec<Vec<f32>> = items.iter().map(|e| e.mask_f32()).collect();
            let x = mgn_batch(&items, &masks)?;
            let cells: Vec<_> = items.iter().map(|e| e.cell()).collect();
            let ks: Vec<usize> = cells.iter().map(|c| c.k).collect();
            // the selected channel is the only one computed
            let picked: Vec<_> = cells.iter().map(|c| CellLabel { k: 0, ..*c }).collect();
            let loss = motion_loss(&mgn.forward_channels(&x, &ks, true)?, &picked)?;
            sum += finite(&loss, opt.t)?;
            loss.backward()?;
            apply(opt, &params, s, total)?;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log.rows.push(LogRow {
            step: opt.t,
            split: "mgn".into(),
            loss: Some(mean),
            miou: None,
            j1: None,
        });
        on_epoch(
            &EpochEnd {
                epoch,
                step: opt.t,
                loss: mean,
                log: &log,
            },
            opt,
        )?;
    }
    Ok(log)
}
