//! Causal order discovery: the sequential root-peeling method and the
//! permutation-learning baseline.

pub mod hungarian;
pub mod perm;
pub mod seq;
pub mod sinkhorn;

pub use hungarian::hungarian;
pub use perm::{
    discover_order_perm, logit_gradient, perm_loss, perm_loss_grads, perm_loss_with, train_perm, PermConfig,
    PermLearner, PermLoss, PermResult, PermTrained,
};
pub use seq::{
    argmin_score, discover_order, find_root, jacobian_profile, root_score, JacAggregation, OrderResult, RootScore,
    Round, SeqConfig,
};
pub use sinkhorn::{gumbel_perturb, sinkhorn};
