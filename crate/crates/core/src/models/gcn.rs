use crate::models::ModelError;
use crate::numeric::tape::{NodeId, Tape};
use crate::numeric::{ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    /// No nonlinearity; used by oracle tests.
    Identity,
}

/// One graph-convolution layer: `act(A_norm * X * W)`.
#[derive(Debug, Clone, Copy)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub activation: Activation,
}

pub fn gcn_forward(
    tape: &mut Tape,
    params: &ParamSet,
    layer: &GcnLayer,
    a_norm: NodeId,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let w = tape.param(params, layer.weight);
    let propagated = tape.matmul(a_norm, x)?;
    let projected = tape.matmul(propagated, w)?;
    Ok(match layer.activation {
        Activation::Tanh => tape.tanh(projected),
        Activation::Relu => tape.relu(projected),
        Activation::Identity => projected,
    })
}
