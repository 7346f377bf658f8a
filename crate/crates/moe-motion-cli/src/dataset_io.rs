//! On-disk dataset layout shared by gen-data (writer) and the training and
//! evaluation commands (readers):
//!
//! ```text
//! <dir>/schema.json     skeleton schema
//! <dir>/manifest.json   seed, gait specs, clip index
//! <dir>/clips/<id>.csv  one frame per row, header = schema columns
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use moe_motion::data::{GaitSpec, MotionClip, SkeletonSchema};
use moe_motion::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLIP_DIR: &str = "clips";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub gait: String,
    pub file: String,
    pub frames: usize,
    /// Consecutive-frame training pairs this clip yields (`frames − 1`).
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub schema_file: String,
    pub specs: Vec<GaitSpec>,
    pub clips: Vec<ClipEntry>,
    pub total_pairs: usize,
}

/// A dataset read back from disk; clips keep their manifest order.
pub struct LoadedDataset {
    pub schema: Arc<SkeletonSchema>,
    pub manifest: DatasetManifest,
    pub clips: Vec<MotionClip<f32>>,
}

impl LoadedDataset {
    /// (gait label, clip) view for the analysis commands.
    pub fn labeled_clips(&self) -> Vec<(String, MotionClip<f32>)> {
        self.manifest
            .clips
            .iter()
            .zip(&self.clips)
            .map(|(entry, clip)| (entry.gait.clone(), clip.clone()))
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes schema, clip CSVs, and the manifest. The clips must line up with
/// the specs that produced them.
pub fn write_dataset(
    dir: &Path,
    seed: u64,
    schema: &Arc<SkeletonSchema>,
    specs: &[GaitSpec],
    clips: &[MotionClip<f32>],
) -> Result<DatasetManifest> {
    assert_eq!(specs.len(), clips.len());
    fs::create_dir_all(dir.join(CLIP_DIR))?;
    write_json(&dir.join(SCHEMA_FILE), schema.as_ref())?;

    let mut entries = Vec::with_capacity(clips.len());
    for (spec, clip) in specs.iter().zip(clips) {
        let file = format!("{CLIP_DIR}/{}.csv", clip.id);
        clip.write_csv(&dir.join(&file))?;
        entries.push(ClipEntry {
            id: clip.id.clone(),
            gait: spec.gait.name().to_string(),
            file,
            frames: clip.n_frames(),
            pairs: clip.n_frames() - 1,
        });
    }
    let manifest = DatasetManifest {
        seed,
        schema_file: SCHEMA_FILE.to_string(),
        specs: specs.to_vec(),
        total_pairs: entries.iter().map(|e| e.pairs).sum(),
        clips: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(|e| {
            Error::Config(format!("cannot read dataset manifest {}: {e}", manifest_path.display()))
        })?,
    )?;
    let schema: SkeletonSchema =
        serde_json::from_str(&fs::read_to_string(dir.join(&manifest.schema_file))?)?;
    let schema = Arc::new(schema);

    let mut clips = Vec::with_capacity(manifest.clips.len());
    for entry in &manifest.clips {
        let clip = MotionClip::<f32>::read_csv(schema.clone(), &entry.id, &dir.join(&entry.file))?;
        if clip.n_frames() != entry.frames {
            return Err(Error::Format(format!(
                "clip '{}' has {} frames but the manifest lists {}",
                entry.id,
                clip.n_frames(),
                entry.frames
            )));
        }
        clips.push(clip);
    }
    Ok(LoadedDataset { schema, manifest, clips })
}

/// Creates the output directory (and parents). Reruns into the same
/// directory overwrite their own artifacts.
pub fn prepare_out_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}
