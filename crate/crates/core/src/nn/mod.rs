//! From-scratch recurrent network: GRU cell and bidirectional wrapper,
//! dropout, dense and pooling layers, with exact backpropagation through
//! time.

mod gru;
pub(crate) mod model;

pub use gru::{gru_backward_seq, gru_cell_step, gru_forward_seq, GruCellParams, GruStepCache};
pub use model::{
    backward, dropout_mask, forward, load_checkpoint, predict, save_checkpoint, ForwardCache,
    Gradients, Mode, ModelConfig, ModelParams, ParamSet, Pooling,
};
