//! Autoregressive training pairs: frame t predicts frame t+1.

use crate::data::MotionClip;
use crate::error::{Error, Result};
use crate::network::Normalization;
use crate::numeric::{DenseMatrix, Scalar};

/// Fraction of pairs held out for validation.
const VAL_FRACTION: f64 = 0.1;

/// Consecutive-frame pairs drawn from a clip corpus, already normalized.
///
/// `xs` rows are full frames at time t; `ys` rows are the next frame's
/// non-control columns. The split is by contiguous clip (the last clips
/// supply validation pairs) so that validation frames are never temporal
/// neighbors of training frames. Normalization statistics come from the
/// training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionDataset<T> {
    pub clips: Vec<MotionClip<T>>,
    pub xs: DenseMatrix<T>,
    pub ys: DenseMatrix<T>,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
    pub norm: Normalization<T>,
}

impl<T: Scalar> MotionDataset<T> {
    /// Pairs every clip's consecutive frames, splits by clip, and normalizes.
    pub fn build(clips: Vec<MotionClip<T>>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Config("dataset needs at least one clip".into()));
        }
        let schema = clips[0].schema.clone();
        for clip in &clips {
            clip.validate()?;
            if *clip.schema != *schema {
                return Err(Error::Config(format!(
                    "clip '{}' uses schema '{}' but the corpus uses '{}'",
                    clip.id, clip.schema.name, schema.name
                )));
            }
            if clip.n_frames() < 2 {
                return Err(Error::Config(format!(
                    "clip '{}' has {} frame(s); pairing needs at least 2",
                    clip.id,
                    clip.n_frames()
                )));
            }
        }

        let d_in = schema.d_in();
        let d_out = schema.d_out();
        let n_pairs: usize = clips.iter().map(|c| c.n_frames() - 1).sum();
        let mut xs = DenseMatrix::<T>::zeros(n_pairs, d_in);
        let mut ys = DenseMatrix::<T>::zeros(n_pairs, d_out);
        let mut clip_pair_ranges = Vec::with_capacity(clips.len());
        let mut row = 0usize;
        for clip in &clips {
            let start = row;
            for t in 0..clip.n_frames() - 1 {
                xs.row_mut(row).copy_from_slice(clip.frame(t));
                ys.row_mut(row).copy_from_slice(&clip.frame(t + 1)[..d_out]);
                row += 1;
            }
            clip_pair_ranges.push(start..row);
        }

        // last clips go to validation until it holds ~10% of the pairs; a
        // single-clip corpus is split contiguously inside the clip instead
        let val_target = ((n_pairs as f64 * VAL_FRACTION).ceil() as usize).max(1);
        let (train_rows, val_rows): (Vec<usize>, Vec<usize>) = if clips.len() == 1 {
            let split = n_pairs.saturating_sub(val_target).max(1);
            ((0..split).collect(), (split..n_pairs).collect())
        } else {
            let mut val_start = n_pairs;
            for range in clip_pair_ranges.iter().rev().take(clips.len() - 1) {
                if n_pairs - val_start >= val_target {
                    break;
                }
                val_start = range.start;
            }
            ((0..val_start).collect(), (val_start..n_pairs).collect())
        };
        if train_rows.is_empty() || val_rows.is_empty() {
            return Err(Error::Config(format!(
                "corpus with {n_pairs} pair(s) cannot produce non-empty train and validation splits"
            )));
        }

        let norm = fit_normalization(&xs, &ys, &train_rows);
        let mut dataset = MotionDataset {
            clips,
            xs,
            ys,
            train_rows,
            val_rows,
            norm,
        };
        dataset.apply_normalization();
        Ok(dataset)
    }

    /// Wraps pre-built matrices with identity normalization; test helper and
    /// entry point for externally prepared data.
    pub fn from_matrices(
        xs: DenseMatrix<T>,
        ys: DenseMatrix<T>,
        train_rows: Vec<usize>,
        val_rows: Vec<usize>,
    ) -> Result<Self> {
        if xs.rows() != ys.rows() {
            return Err(Error::shape(
                "dataset matrices",
                format!("{} target rows", xs.rows()),
                format!("{}", ys.rows()),
            ));
        }
        for &r in train_rows.iter().chain(&val_rows) {
            if r >= xs.rows() {
                return Err(Error::Config(format!("split row {r} out of range ({})", xs.rows())));
            }
        }
        let norm = Normalization::identity(xs.cols(), ys.cols());
        Ok(MotionDataset {
            clips: Vec::new(),
            xs,
            ys,
            train_rows,
            val_rows,
            norm,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.xs.rows()
    }

    fn apply_normalization(&mut self) {
        for r in 0..self.xs.rows() {
            for (c, v) in self.xs.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.norm.in_mean[c]) / self.norm.in_std[c];
            }
            for (c, v) in self.ys.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.norm.out_mean[c]) / self.norm.out_std[c];
            }
        }
    }
}

/// Per-column mean and standard deviation over the training rows, with the
/// deviation floored at 1e-6 so constant columns stay finite.
fn fit_normalization<T: Scalar>(
    xs: &DenseMatrix<T>,
    ys: &DenseMatrix<T>,
    train_rows: &[usize],
) -> Normalization<T> {
    let (in_mean, in_std) = column_stats(xs, train_rows);
    let (out_mean, out_std) = column_stats(ys, train_rows);
    Normalization {
        in_mean,
        in_std,
        out_mean,
        out_std,
    }
}

fn column_stats<T: Scalar>(m: &DenseMatrix<T>, rows: &[usize]) -> (Vec<T>, Vec<T>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0f64; m.cols()];
    for &r in rows {
        for (acc, &v) in mean.iter_mut().zip(m.row(r)) {
            *acc += v.as_f64();
        }
    }
    for v in mean.iter_mut() {
        *v /= n;
    }
    let mut var = vec![0.0f64; m.cols()];
    for &r in rows {
        for ((acc, &mu), &v) in var.iter_mut().zip(&mean).zip(m.row(r)) {
            let d = v.as_f64() - mu;
            *acc += d * d;
        }
    }
    let std = var
        .iter()
        .map(|&v| T::from_f64((v / n).sqrt().max(1e-6)))
        .collect();
    (mean.into_iter().map(T::from_f64).collect(), std)
}
