//! Federated contrastive training of a small image encoder.

mod images;
mod loss;
mod probe;
mod train;

pub use images::{
    augment_batch, augment_first, augment_pair, augment_second, color_jitter, flip_horizontal, grayscale, load_cifar_dir, make_synthetic_dataset,
    parse_cifar, ImageBatch, ImageFormat, Jitter, CIFAR_RECORD_BYTES, TOY_CLASSES,
};
pub use loss::{
    contrastive_loss, contrastive_loss_and_grad, dual_temperature_loss, encode, info_nce, normalize_rows,
    surrogate_loss, AnchorLoss, ContrastiveOutput, ContrastiveViews,
};
pub use probe::{linear_probe, linear_probe_features, ProbeResult};
pub use train::{
    aggregate, encoder_from, encoder_sizes, evaluation_loss, evaluation_views, executed_steps, local_train,
    new_encoder, SslHyper, SslTrainer, EMBEDDING_DIM, ENCODER_HIDDEN,
};
