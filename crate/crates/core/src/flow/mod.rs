//! Invertible building blocks of the flow. Each layer is written in the
//! direction that maps answers `y` towards the latent `z`; `*_inv`
//! functions run the other way.

pub mod attention;
pub mod el;
pub mod shiesh;

pub use attention::{
    a_itrans, a_reg, a_tri, attn_matrix, attn_scores, dense_log_det, sita_fwd, sita_inv, tri_log_det, AttnKind,
    AttnParams, DEFAULT_EPSILON,
};
pub use el::{el_fwd, el_inv, el_logdet_term, ElParams, Mlp};
pub use shiesh::{shiesh_dfwd, shiesh_fwd, shiesh_inv, SHIESH_B};

/// Values threaded through a stack of layers plus the accumulated
/// `log |det|` of the maps applied so far.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub values: Vec<f64>,
    pub logdet: f64,
}

impl FlowState {
    pub fn new(values: Vec<f64>) -> Self {
        FlowState { values, logdet: 0.0 }
    }
}
