//! Teacher pseudo-labeling, the outer objectives, SGD and the
//! margin-interpolated adversarial training loop.

pub mod loss;
pub mod optim;
pub mod teacher;
pub mod train;

pub use loss::{awr_weight, outer_loss, outer_loss_value, AwrParams, LossComponents, LossConfig, LossInputs, LossVariant};
pub use optim::{sgd_step, Sgd, SgdConfig};
pub use teacher::{assign_pseudo_labels, train_teacher, TeacherConfig, TeacherModel};
pub use train::{build_training_set, train, train_on, EpochEval, EpochMetrics, MetricsLog, TeacherSource, TrainConfig, TrainOutcome, TrainingSet};
