//! Stability-rewarded fine-tuning of a small denoising model over
//! parametric chairs.

mod model;
mod shape;
mod train;

pub use model::{Adam, Denoiser, LossWeighting, NoiseSchedule, Tape, COND_FEATURES, DEFAULT_STEPS, TIME_FEATURES};
pub use shape::{
    Chair, ChairDims, ShapeFamily, ShapeParam, BACK_HEIGHT, D, LEG_LOGITS, LEG_WIDTH, MAX_DIM, MIN_DIM,
    SEAT_DEPTH, SEAT_HEIGHT, SEAT_HEIGHT_BASE, SEAT_HEIGHT_SCALE, SEAT_THICKNESS, SEAT_TILT, SEAT_WIDTH,
};
pub use train::{
    dsro_loss, dsro_loss_grad, forward_diffuse, label_shape, pretrain, sample_shape, stability_rate,
    trace_to_csv, train_dsro, BatchItem, Condition, DsroOptions, DsroResult, LabelCache, LossEval,
    PretrainOptions, TracePoint, SAMPLE_LIMIT,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DsroError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad denoiser record: {0}")]
    Format(String),
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
