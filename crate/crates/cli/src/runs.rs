//! Checkpoints and run directories on disk.

use std::fs;
use std::path::{Path, PathBuf};

use ogrg_core::checkpoint::Checkpoint;
use ogrg_core::mgn::Mgn;
use ogrg_core::nn::Store;
use ogrg_core::optim::AdamW;
use ogrg_core::{Ogrg, Vocab};

use crate::error::{CliError, Result};
use crate::run_config::{Mode, RunConfig, CONFIG_FILE, VOCAB_FILE};

/// A trained network restored from a checkpoint.
pub enum Net {
    Grounding(Box<Ogrg<f32>>),
    Grasp(Mgn<f32>),
}

pub struct LoadedRun {
    pub cfg: RunConfig,
    pub vocab: Vocab,
    pub net: Net,
}

impl LoadedRun {
    pub fn grounding(&self) -> Result<&Ogrg<f32>> {
        match &self.net {
            Net::Grounding(m) => Ok(m),
            Net::Grasp(_) => Err(CliError::usage("expected a grounding checkpoint, got a grasp-network one")),
        }
    }

    pub fn grasp(&self) -> Result<&Mgn<f32>> {
        match &self.net {
            Net::Grasp(m) => Ok(m),
            Net::Grounding(_) => Err(CliError::usage("expected a grasp-network checkpoint, got a grounding one")),
        }
    }
}

pub fn prefix(mode: Mode) -> &'static str {
    match mode {
        Mode::Mgn => "mgn",
        Mode::Rgs | Mode::Rga => "model",
    }
}

/// Creates `dir`, refusing a non-empty one unless `force` (which empties it).
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::usage(format!("{} exists and is not a directory", dir.display())));
        }
        if fs::read_dir(dir)?.next().is_some() {
            if !force {
                return Err(CliError::usage(format!(
                    "{} is not empty; pass --force to replace its contents",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn save_checkpoint<T: ogrg_tensor::Real>(
    path: &Path,
    prefix: &str,
    store: &Store<T>,
    opt: &AdamW<T>,
    hash: &str,
) -> ogrg_core::Result<()> {
    let mut ck = Checkpoint::default();
    ck.add_store(prefix, store)?;
    ck.add_adam(prefix, store, opt)?;
    ck.set_step(opt.t)?;
    ck.set_config_hash(hash)?;
    ck.save(path)?;
    Ok(())
}

/// Restores a checkpoint using the run config beside it (or `config`),
/// refusing on a config-hash mismatch.
pub fn load_run(checkpoint: &Path, config: Option<&Path>) -> Result<LoadedRun> {
    let dir = checkpoint.parent().unwrap_or(Path::new(""));
    let cfg_path: PathBuf = config.map(Path::to_path_buf).unwrap_or_else(|| dir.join(CONFIG_FILE));
    let cfg = RunConfig::load(&cfg_path)?;
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = Vocab::load(&vocab_path).map_err(|e| CliError::data(format!("{}: {e}", vocab_path.display())))?;
    let ck = Checkpoint::load(checkpoint)?;
    let net = match cfg.mode {
        Mode::Mgn => {
            let m = Mgn::new(&cfg.mgn, cfg.seed)?;
            ck.check_config_hash(&m.config_hash())?;
            ck.load_store(prefix(cfg.mode), &m.store)?;
            Net::Grasp(m)
        }
        Mode::Rgs | Mode::Rga => {
            let m = Ogrg::new(&cfg.model_config(vocab.len())?, cfg.seed)?;
            ck.check_config_hash(&m.config_hash())?;
            ck.load_store(prefix(cfg.mode), &m.store)?;
            Net::Grounding(Box::new(m))
        }
    };
    Ok(LoadedRun { cfg, vocab, net })
}
