//! Convolutional speaker classifier.

pub mod gradcheck;
mod init;
mod io;
pub mod layers;
mod model;
mod optim;
mod tensor;
mod train;

pub use init::{glorot_init, glorot_limit};
pub use io::{load_model, load_model_header, read_model, save_model, write_model, ModelHeader, CSPK_MAGIC, CSPK_VERSION};
pub use model::{
    argmax, feature_spatial_dims, images_to_tensor, BackwardFault, ConvBlock, Gradients, Mode,
    Prediction, SpeakerModel, DEFAULT_INPUT_HEIGHT, DEFAULT_INPUT_WIDTH, DEFAULT_KERNELS,
};
pub use optim::Sgdm;
pub use tensor::{Param, Real, Tensor4};
pub use train::{train, write_train_log, EpochLog, TrainConfig};
