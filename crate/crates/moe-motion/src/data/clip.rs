//! Motion clips: a frame matrix bound to a schema, with CSV import/export.

use std::path::Path;
use std::sync::Arc;

use crate::data::SkeletonSchema;
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Scalar};

/// A contiguous recording: `frames` is n_frames x d_full in schema layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip<T> {
    pub schema: Arc<SkeletonSchema>,
    pub id: String,
    pub frames: DenseMatrix<T>,
}

impl<T: Scalar> MotionClip<T> {
    pub fn new(schema: Arc<SkeletonSchema>, id: impl Into<String>, frames: DenseMatrix<T>) -> Result<Self> {
        let clip = MotionClip {
            schema,
            id: id.into(),
            frames,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn frame(&self, t: usize) -> &[T] {
        self.frames.row(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.cols() != self.schema.d_full() {
            return Err(Error::shape(
                format!("clip '{}'", self.id),
                format!("{} columns", self.schema.d_full()),
                format!("{} columns", self.frames.cols()),
            ));
        }
        if self.n_frames() == 0 {
            return Err(Error::Config(format!("clip '{}' has no frames", self.id)));
        }
        if !self.frames.all_finite() {
            return Err(Error::Numeric(format!("clip '{}' contains non-finite values", self.id)));
        }
        Ok(())
    }

    /// Writes the clip as CSV: header = schema column names, one frame per
    /// row, decimal floats.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(self.schema.column_names())?;
        let mut record = csv::StringRecord::new();
        for t in 0..self.n_frames() {
            record.clear();
            for v in self.frame(t) {
                record.push_field(&format!("{v}"));
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a clip previously written by [`write_csv`] (or any CSV whose
    /// header matches the schema's column names exactly).
    pub fn read_csv(schema: Arc<SkeletonSchema>, id: impl Into<String>, path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let expected = schema.column_names();
        let header = reader.headers()?;
        if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::Format(format!(
                "CSV header does not match schema '{}' ({} columns expected, {} found)",
                schema.name,
                expected.len(),
                header.len()
            )));
        }
        let mut data: Vec<T> = Vec::new();
        let mut rows = 0usize;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != expected.len() {
                return Err(Error::Format(format!(
                    "CSV row {line}: expected {} fields, found {}",
                    expected.len(),
                    record.len()
                )));
            }
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Format(format!("CSV row {line}: '{field}' is not a number")))?;
                data.push(T::from_f64(v));
            }
            rows += 1;
        }
        let frames = DenseMatrix::from_vec(rows, expected.len(), data)?;
        MotionClip::new(schema, id, frames)
    }
}
