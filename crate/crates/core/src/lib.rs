//! Radar object detection and heading estimation on synthetic
//! range-angle/range-Doppler/angle-Doppler magnitude maps.
//!
//! Pipeline, in data order: [`sim`] renders moving point-target scenes into
//! the three views and writes datasets to disk ([`dataset`]); [`labeling`]
//! turns annotations into heatmap/offset/heading training targets
//! ([`augment`] perturbs them); [`model`] is the encoder/decoder network with
//! cross-attention Doppler fusion; [`losses`] the training objectives;
//! [`inference`] decodes network output into detections; [`metrics`] scores
//! them; [`training`] ties the loop together.
//!
//! All in-memory math runs in `f64` (the [`Tensor`] alias below); the on-disk
//! map format is little-endian `f32`.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod labeling;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod training;

pub use error::CoreError;
pub use geometry::RadarGeometry;

/// Scalar type used across the pipeline.
pub type Scalar = f64;
/// Autodiff tensor pinned to the pipeline scalar.
pub type Tensor = raddet_tensor::Tensor<Scalar>;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Dense 2-D map with row-major storage; the working currency for radar
/// views, heatmaps, and masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2d {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Map2d {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Map2d {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "map shape/data mismatch");
        Map2d { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// Index of the maximum value (first occurrence in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.at(r, c);
                if v > best_v {
                    best_v = v;
                    best = (r, c);
                }
            }
        }
        best
    }

    /// Reverses the column axis (mirror about the vertical center line).
    pub fn flip_cols(&self) -> Map2d {
        let mut out = Map2d::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *out.at_mut(r, c) = self.at(r, self.cols - 1 - c);
            }
        }
        out
    }

    /// Reverses the row axis.
    pub fn flip_rows(&self) -> Map2d {
        let mut out = Map2d::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *out.at_mut(r, c) = self.at(self.rows - 1 - r, c);
            }
        }
        out
    }
}
