//! `train`: fit a grounding network or the grasp network from a run config.

use std::fs;
use std::path::Path;

use ogrg_core::data::Example;
use ogrg_core::mgn::Mgn;
use ogrg_core::optim::AdamW;
use ogrg_core::train::{train_mgn, EpochEnd, GroundingTrainer, MetricLog};
use ogrg_core::{Ogrg, Vocab};
use ogrg_synth::{import_dataset, DatasetRecord};

use crate::error::{CliError, Result};
use crate::run_config::{default_vocab, Mode, RunConfig, CONFIG_FILE, FINAL_CHECKPOINT, LOG_FILE, VOCAB_FILE};
use crate::runs::{prefix, prepare_out_dir, save_checkpoint};

/// Training-set samples also scored at each evaluation.
const TRAIN_EVAL_SAMPLES: usize = 64;

pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
    pub log: MetricLog,
}

fn load_split(dir: &Path, resolution: usize) -> Result<Vec<DatasetRecord>> {
    let recs = import_dataset(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    if recs.is_empty() {
        return Err(CliError::data(format!("{}: empty dataset", dir.display())));
    }
    if let Some(r) = recs.iter().find(|r| r.width != resolution || r.height != resolution) {
        return Err(CliError::data(format!(
            "{}: sample {} is {}x{}, the run expects {resolution}x{resolution}",
            dir.display(),
            r.id,
            r.width,
            r.height
        )));
    }
    Ok(recs)
}

fn examples(recs: &[DatasetRecord], vocab: &Vocab, max_tokens: usize) -> Result<Vec<Example>> {
    Ok(recs
        .iter()
        .map(|r| Example::from_record(r, vocab, max_tokens))
        .collect::<ogrg_core::Result<_>>()?)
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{:04}.ckpt", epoch + 1)
}

pub fn run(config_path: &Path, force: bool) -> Result<TrainSummary> {
    let cfg = RunConfig::load(config_path)?;
    let train_recs = load_split(&cfg.train_data, cfg.resolution)?;
    let val_recs = match &cfg.val_data {
        Some(d) => load_split(d, cfg.resolution)?,
        None => Vec::new(),
    };
    let vocab = match &cfg.vocab {
        Some(p) => Vocab::load(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        None => default_vocab(train_recs.iter().map(|r| r.expr.as_str())),
    };
    let train = examples(&train_recs, &vocab, cfg.tokens())?;
    let val = examples(&val_recs, &vocab, cfg.tokens())?;
    drop((train_recs, val_recs));

    // resolve defaults so the saved config rebuilds the same network
    let mut saved = cfg.clone();
    saved.max_tokens = Some(cfg.tokens());
    if cfg.mode != Mode::Mgn {
        saved.backbone = Some(cfg.model_config(vocab.len())?.backbone);
    }
    let out = &cfg.out_dir;
    prepare_out_dir(out, force)?;
    let json = serde_json::to_string_pretty(&saved).map_err(|e| CliError::data(e.to_string()))?;
    fs::write(out.join(CONFIG_FILE), json + "\n")?;
    vocab.save(&out.join(VOCAB_FILE))?;

    let s = &cfg.schedule;
    let last_epoch = s.epochs.saturating_sub(1);
    let write_log = |log: &MetricLog| fs::write(out.join(LOG_FILE), log.to_csv());
    let checkpoint_due = |e: &EpochEnd| (e.epoch + 1).is_multiple_of(cfg.save_every) || e.epoch == last_epoch;
    let report = |e: &EpochEnd| eprintln!("epoch {}/{} step {} loss {:.5}", e.epoch + 1, s.epochs, e.step, e.loss);

    let log = match cfg.mode {
        Mode::Rgs | Mode::Rga => {
            let model: Ogrg<f32> = Ogrg::new(&saved.model_config(vocab.len())?, cfg.seed)?;
            let hash = model.config_hash();
            let mut opt = AdamW::new(s.optimizer, &model.store.params());
            let train_eval = &train[..train.len().min(TRAIN_EVAL_SAMPLES)];
            let mut trainer = GroundingTrainer {
                model: &model,
                opt: &mut opt,
                schedule: s,
                weights: cfg.loss_weights,
                grounding: cfg.grounding_loss,
                seed: cfg.seed,
            };
            trainer.run(&train, train_eval, &val, |e, opt| {
                report(e);
                write_log(e.log)?;
                if checkpoint_due(e) {
                    save_checkpoint(&out.join(checkpoint_name(e.epoch)), "model", &model.store, opt, &hash)?;
                }
                Ok(())
            })?
        }
        Mode::Mgn => {
            let mgn: Mgn<f32> = Mgn::new(&cfg.mgn, cfg.seed)?;
            let hash = mgn.config_hash();
            let mut opt = AdamW::new(s.optimizer, &mgn.store.params());
            train_mgn(&mgn, &mut opt, &train, s, cfg.seed, |e, opt| {
                report(e);
                write_log(e.log)?;
                if checkpoint_due(e) {
                    save_checkpoint(&out.join(checkpoint_name(e.epoch)), prefix(Mode::Mgn), &mgn.store, opt, &hash)?;
                }
                Ok(())
            })?
        }
    };
    write_log(&log)?;
    fs::copy(out.join(checkpoint_name(last_epoch)), out.join(FINAL_CHECKPOINT))?;
    let final_loss = log
        .rows
        .iter()
        .rev()
        .find_map(|r| r.loss)
        .unwrap_or(f64::NAN);
    Ok(TrainSummary {
        steps: log.rows.last().map_or(0, |r| r.step),
        final_loss,
        log,
    })
}
