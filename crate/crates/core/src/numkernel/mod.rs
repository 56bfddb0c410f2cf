//! Dense row-major kernels and the hand-differentiated feed-forward classifier.

mod matrix;
mod mlp;
mod ops;

pub use matrix::Matrix;
pub use mlp::{mlp_backward, mlp_forward, DenseLayer, ForwardCache, LayerGrads, MlpClassifier};
pub use ops::{
    argmax_rows, column_sums, cross_entropy, cross_entropy_labels, matmul, matmul_nt, matmul_tn,
    softmax_rows, PROB_FLOOR,
};
