//! Hash network, losses and optimiser.

mod loss;
mod network;
mod optim;

pub use loss::{bce_loss, cross_entropy_loss, hadamard_loss, ClassLabels, LossBreakdown, LossMode};
pub use network::{
    backward, Activation, Dense, DenseGrad, ForwardOutput, GradientSet, HashNetwork, NetSpec, Objective,
};
pub use optim::{Sgd, SgdConfig};
