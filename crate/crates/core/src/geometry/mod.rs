//! Pullback-metric geometry of a decoder: dense references, randomized
//! top-K spectrum (local distortion) and per-dimension influence.

mod influence;
mod metric;
mod spectrum;

pub use influence::{
    exact_diagonal, hutchinson_diagonal, influence_exact, influence_hutchinson, mean_influence,
    select_top_influence, HutchinsonConfig, InfluenceMap, DEFAULT_EPS_STAB,
};
pub use metric::{dense_jacobian, metric_quadratic_form, pullback_metric_dense, PullbackMetric};
pub use spectrum::{
    dense_topk_spectrum, randomized_topk_spectrum, JvpMode, RandSvdConfig, SpectrumEstimate,
};
