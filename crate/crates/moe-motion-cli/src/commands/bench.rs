use std::path::Path;

use moe_motion::checkpoint::Checkpoint;
use moe_motion::eval::bench_inference;
use moe_motion::Result;

use crate::config::{parse_sparsity_list, EvalSection, RunConfig};
use crate::dataset_io::{prepare_out_dir, write_json};

pub fn run(
    checkpoint: &Path,
    out_dir: &Path,
    config: Option<&Path>,
    sparsity_flag: Option<&str>,
) -> Result<()> {
    let ck = Checkpoint::<f32>::load(checkpoint)?;
    let eval = match config {
        Some(path) => RunConfig::load(path)?.eval,
        None => EvalSection::default(),
    };
    let sparsities = match sparsity_flag {
        Some(text) => parse_sparsity_list(text)?,
        None => eval.sparsities.clone(),
    };

    let report = bench_inference(&ck.net, &sparsities, eval.bench_reps)?;
    let out = prepare_out_dir(out_dir)?;
    write_json(&out.join("bench.json"), &report)?;

    for run in &report.runs {
        log::info!(
            "s={:.2}: dense {} ns, csr {} ns, speedup {:.2}x",
            run.sparsity,
            run.dense_total_ns,
            run.csr_total_ns,
            run.speedup
        );
    }
    let best = report
        .runs
        .iter()
        .max_by(|a, b| a.sparsity.total_cmp(&b.sparsity));
    match best {
        Some(top) => println!(
            "benchmarked {} levels x {} reps: {:.2}x CSR speedup at s={:.2} -> {}",
            report.runs.len(),
            report.reps,
            top.speedup,
            top.sparsity,
            out.display()
        ),
        None => println!("benchmarked 0 levels -> {}", out.display()),
    }
    Ok(())
}
