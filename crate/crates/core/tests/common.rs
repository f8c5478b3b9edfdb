#![allow(dead_code)]

use ogrg_core::data::Example;
use ogrg_core::{ModelConfig, Task, Vocab};
use ogrg_synth::{gen_sample, DatasetRecord, GenConfig};

pub const MAX_TOKENS: usize = 16;

pub fn examples(size: usize, seed: u64, n: u64) -> Vec<Example> {
    let vocab = Vocab::synthetic();
    let gc = GenConfig::new(size, seed);
    (0..n)
        .map(|i| {
            let s = gen_sample(&gc, i).unwrap();
            Example::from_record(&DatasetRecord::from_sample(&s), &vocab, MAX_TOKENS).unwrap()
        })
        .collect()
}

pub fn toy(task: Task) -> ModelConfig {
    ModelConfig::toy(task, Vocab::synthetic().len(), MAX_TOKENS)
}
