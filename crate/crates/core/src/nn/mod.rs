//! Dense networks with hand-written reverse-mode gradients.

mod checkpoint;
mod mlp;
mod optim;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{Activation, HeadInit, Mlp, Tape};
pub use optim::{adam_step, sgd_step, AdamHyper, AdamState};
pub use params::{ParamShape, ParamVector};
