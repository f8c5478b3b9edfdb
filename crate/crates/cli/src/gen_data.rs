//! `gen-data`: render a synthetic dataset directory.

use std::ops::RangeInclusive;
use std::path::Path;
use std::thread;

use ogrg_synth::{export_dataset, gen_sample, Bank, DatasetRecord, GenConfig, TemplateClass};

use crate::error::{CliError, Result};
use crate::runs::prepare_out_dir;

pub struct GenArgs {
    pub count: u64,
    pub objects: RangeInclusive<usize>,
    pub templates: Vec<TemplateClass>,
    pub size: usize,
    pub seed: u64,
    pub bank: Bank,
}

/// `"4"` or `"1..7"` (inclusive).
pub fn parse_objects(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || CliError::usage(format!("object count {s:?} is not N or A..B"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if a == 0 || a > b || b > ogrg_synth::POOL.len() {
        return Err(CliError::usage(format!(
            "object count {s:?} must lie within 1..{}",
            ogrg_synth::POOL.len()
        )));
    }
    Ok(a..=b)
}

/// Comma-separated template classes (`abs,rel,attr_base,attr_cls`).
pub fn parse_templates(s: &str) -> Result<Vec<TemplateClass>> {
    let out = s
        .split(',')
        .map(|t| {
            serde_json::from_value(serde_json::Value::String(t.trim().to_string()))
                .map_err(|_| CliError::usage(format!("unknown template class {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(CliError::usage("no template classes"));
    }
    Ok(out)
}

pub fn gen_config(a: &GenArgs) -> GenConfig {
    GenConfig {
        size: a.size,
        min_objects: *a.objects.start(),
        max_objects: *a.objects.end(),
        templates: a.templates.clone(),
        allow_duplicates: true,
        bank: a.bank,
        seed: a.seed,
    }
}

/// Generates samples `0..count` on `threads` workers; the result does not
/// depend on the thread count.
pub fn generate(cfg: &GenConfig, count: u64, threads: usize) -> Result<Vec<DatasetRecord>> {
    let threads = threads.clamp(1, count.max(1) as usize);
    let chunk = count.div_ceil(threads as u64);
    let parts: Vec<Result<Vec<DatasetRecord>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..threads as u64)
            .map(|t| {
                let range = (t * chunk).min(count)..((t + 1) * chunk).min(count);
                s.spawn(move || {
                    range
                        .map(|i| {
                            gen_sample(cfg, i)
                                .map(|s| DatasetRecord::from_sample(&s))
                                .map_err(|e| CliError::data(format!("sample {i}: {e}")))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(count as usize);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn run(out: &Path, args: &GenArgs, force: bool, threads: usize) -> Result<usize> {
    if args.size == 0 || !args.size.is_multiple_of(32) {
        return Err(CliError::usage(format!("size {} is not a positive multiple of 32", args.size)));
    }
    let cfg = gen_config(args);
    // generate before touching the directory so a failure leaves it as it was
    let records = generate(&cfg, args.count, threads)?;
    prepare_out_dir(out, force)?;
    export_dataset(&records, out)?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_ranges() {
        assert_eq!(parse_objects("1..7").unwrap(), 1..=7);
        assert_eq!(parse_objects("4").unwrap(), 4..=4);
        assert!(parse_objects("0..3").is_err());
        assert!(parse_objects("5..2").is_err());
        assert!(parse_objects("x").is_err());
    }

    #[test]
    fn template_lists() {
        assert_eq!(
            parse_templates("abs, attr_cls").unwrap(),
            vec![TemplateClass::Abs, TemplateClass::AttrCls]
        );
        assert!(parse_templates("abs,nearby").is_err());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let a = GenArgs {
            count: 5,
            objects: 1..=4,
            templates: TemplateClass::ALL.to_vec(),
            size: 32,
            seed: 3,
            bank: Bank::Train,
        };
        let cfg = gen_config(&a);
        assert_eq!(generate(&cfg, 5, 1).unwrap(), generate(&cfg, 5, 3).unwrap());
    }
}
