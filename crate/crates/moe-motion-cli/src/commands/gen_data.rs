use std::path::Path;

use moe_motion::data::{generate_gait, standard_corpus, MotionClip};
use moe_motion::Result;

use crate::config::RunConfig;
use crate::dataset_io::{prepare_out_dir, write_dataset, write_json};

pub fn run(config_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }
    let schema = run.data.schema.build();
    let specs = standard_corpus(run.data.clips_per_gait, run.data.duration_s, run.seed);
    let clips: Vec<MotionClip<f32>> = specs
        .iter()
        .map(|spec| generate_gait(spec, &schema))
        .collect::<Result<_>>()?;

    // everything synthesized before the first write: an invalid config
    // leaves no files behind
    let out = prepare_out_dir(out_dir)?;
    write_json(&out.join("config.json"), &run)?;
    let manifest = write_dataset(&out, run.seed, &schema, &specs, &clips)?;
    println!(
        "wrote {} clips ({} pairs, schema '{}') to {}",
        manifest.clips.len(),
        manifest.total_pairs,
        schema.name,
        out.display()
    );
    Ok(())
}
