mod common;

use ogrg_core::checkpoint::Checkpoint;
use ogrg_core::data::Example;
use ogrg_core::optim::{AdamW, AdamWConfig};
use ogrg_core::train::{GroundingTrainer, Schedule};
use ogrg_core::{Ogrg, Task};

fn schedule(epochs: usize, batch_size: usize, lr: f64) -> Schedule {
    Schedule {
        epochs,
        batch_size,
        lr,
        lr_power: 0.9,
        optimizer: AdamWConfig::default(),
        eval_every: 0,
    }
}

fn full_loss(tr: &GroundingTrainer, items: &[Example]) -> f64 {
    let refs: Vec<&Example> = items.iter().collect();
    refs.chunks(8).map(|c| tr.batch_loss(c).unwrap().item() as f64 * c.len() as f64).sum::<f64>() / items.len() as f64
}

#[test]
fn two_hundred_steps_halve_the_rgs_loss() {
    let ex = common::examples(64, 0, 32);
    let model: Ogrg<f32> = Ogrg::new(&common::toy(Task::Rgs), 0).unwrap();
    // 25 epochs of 8 batches
    let sched = schedule(25, 4, 2e-3);
    let mut opt = AdamW::new(sched.optimizer, &model.store.params());
    let mut tr = GroundingTrainer {
        model: &model,
        opt: &mut opt,
        schedule: &sched,
        weights: Default::default(),
        grounding: Default::default(),
        seed: 0,
    };
    let before = full_loss(&tr, &ex);
    tr.run(&ex, &[], &[], |_, _| Ok(())).unwrap();
    assert_eq!(tr.opt.t, 200);
    let after = full_loss(&tr, &ex);
    assert!(after <= 0.5 * before, "loss {before:.4} -> {after:.4}");
}

#[test]
fn zero_rate_leaves_parameters_unchanged() {
    let ex = common::examples(64, 3, 4);
    let model: Ogrg<f32> = Ogrg::new(&common::toy(Task::Rga), 1).unwrap();
    let values = || model.store.params().iter().map(|p| p.to_vec()).collect::<Vec<_>>();
    let before = values();
    let sched = schedule(1, 4, 0.0);
    let mut opt = AdamW::new(sched.optimizer, &model.store.params());
    let mut tr = GroundingTrainer {
        model: &model,
        opt: &mut opt,
        schedule: &sched,
        weights: Default::default(),
        grounding: Default::default(),
        seed: 0,
    };
    tr.run(&ex, &[], &[], |_, _| Ok(())).unwrap();
    assert_eq!(tr.opt.t, 1);
    // running statistics move in a training pass; parameters must not
    assert_eq!(values(), before);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let ex = common::examples(64, 5, 8);
    let run = || {
        let model: Ogrg<f32> = Ogrg::new(&common::toy(Task::Rga), 2).unwrap();
        let sched = schedule(2, 4, 1e-3);
        let mut opt = AdamW::new(sched.optimizer, &model.store.params());
        let mut tr = GroundingTrainer {
            model: &model,
            opt: &mut opt,
            schedule: &sched,
            weights: Default::default(),
            grounding: Default::default(),
            seed: 9,
        };
        tr.run(&ex, &[], &[], |_, _| Ok(())).unwrap();
        let mut ck = Checkpoint::default();
        ck.add_store("model", &model.store).unwrap();
        ck.add_adam("model", &model.store, &opt).unwrap();
        ck.set_step(opt.t).unwrap();
        ck.set_config_hash(&model.config_hash()).unwrap();
        ck.to_bytes()
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let model: Ogrg<f32> = Ogrg::new(&common::toy(Task::Rgs), 4).unwrap();
    let sched = schedule(1, 4, 1e-3);
    let mut opt = AdamW::new(sched.optimizer, &model.store.params());
    let ex = common::examples(64, 6, 4);
    GroundingTrainer {
        model: &model,
        opt: &mut opt,
        schedule: &sched,
        weights: Default::default(),
        grounding: Default::default(),
        seed: 0,
    }
    .run(&ex, &[], &[], |_, _| Ok(()))
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    let mut ck = Checkpoint::default();
    ck.add_store("model", &model.store).unwrap();
    ck.add_adam("model", &model.store, &opt).unwrap();
    ck.set_step(opt.t).unwrap();
    ck.set_config_hash(&model.config_hash()).unwrap();
    ck.save(&a).unwrap();

    let loaded = Checkpoint::load(&a).unwrap();
    loaded.check_config_hash(&model.config_hash()).unwrap();
    let fresh: Ogrg<f32> = Ogrg::new(&common::toy(Task::Rgs), 99).unwrap();
    let mut fresh_opt = AdamW::new(sched.optimizer, &fresh.store.params());
    loaded.load_store("model", &fresh.store).unwrap();
    loaded.load_adam("model", &fresh.store, &mut fresh_opt).unwrap();
    assert_eq!(fresh.store.snapshot(), model.store.snapshot());

    let mut again = Checkpoint::default();
    again.add_store("model", &fresh.store).unwrap();
    again.add_adam("model", &fresh.store, &fresh_opt).unwrap();
    again.set_step(loaded.step().unwrap()).unwrap();
    again.set_config_hash(loaded.config_hash().unwrap()).unwrap();
    again.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
