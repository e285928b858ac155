//! Fitting the radiance grid to supervised views, and held-out evaluation.

mod adam;
mod eval;
mod fit;
mod loss;

pub use adam::{Adam, LrSchedule};
pub use eval::{eval_initialization, psnr, test_poses, EvalConfig, EvalReport, PSNR_CAP};
pub use fit::{fit, total_loss, FitConfig, FitReport, IterationRecord, LossBreakdown, LossConfig, SupervisedRay, TrainTarget};
pub use loss::{loss_depth, loss_rgb, loss_transmittance, LossWeights, TransmittanceForm};
