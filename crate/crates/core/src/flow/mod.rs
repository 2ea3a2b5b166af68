//! Rational-quadratic spline transforms and the conditional / triangular flows built on them.

pub mod conditional;
pub mod spline;
pub mod tmi;
pub mod train;

pub use conditional::{
    flow_backward_into, flow_transform, input_jacobian, input_jacobian_exact, input_jacobian_with_step,
    ConditionalFlow, FlowCache, FlowGrads, FlowSpec, JACOBIAN_STEP,
};
pub use spline::{rq_spline_forward, rq_spline_grad, rq_spline_inverse, SplineRaw};
pub use tmi::{tmi_backward_into, tmi_forward, TmiCache, TmiFlow, TmiGrads};
pub use train::{
    nll_loss, nll_with_grads, std_normal_log_pdf, train_flow, train_flow_with_history, FlowData, TrainConfig,
    TrainedFlow, HALF_LOG_2PI,
};
