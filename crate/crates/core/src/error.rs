use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("tensor: {0}")]
    Tensor(#[from] raddet_tensor::TensorError),

    #[error("object {index} out of bounds: range {range_m:.2} m, azimuth {azimuth_deg:.1} deg")]
    ObjectOutOfBounds {
        index: usize,
        range_m: f64,
        azimuth_deg: f64,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("frame {frame}: file {file} holds {got} values, expected {expected}")]
    MapLength {
        frame: String,
        file: String,
        expected: usize,
        got: usize,
    },

    #[error("io ({path}): {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("json ({path}): {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },

    #[error("labeling: {0}")]
    Labeling(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training aborted: non-finite loss at {batch_id}")]
    NanLoss { batch_id: String },

    #[error("evaluation: {0}")]
    Eval(String),
}

impl CoreError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
