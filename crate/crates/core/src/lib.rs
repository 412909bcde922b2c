//! Unsupervised rank aggregation with object features.
//!
//! Expert rank lists `R` (items × experts) and item features `X`
//! (items × features) are each fitted by a generalized linear model. The two
//! fitted score vectors are coupled only through their ordering: each side is
//! retargeted by an order-constrained Bregman projection (pool adjacent
//! violators) onto the weak ordering produced by the other side. Alternating
//! the two monotone-retargeting problems lets the consensus ordering move
//! between permutations until both models agree.
//!
//! Module map:
//!
//! - [`bregman`]: divergences and link functions
//! - [`isotonic`]: pool-adjacent-violators projection and the range margin
//! - [`glm`]: GLM fitting (Newton / proximal gradient)
//! - [`retarget`]: single-side monotone retargeting
//! - [`aggregate`]: the alternating aggregation loop
//! - [`baselines`]: Borda, Comb-family and Markov-chain aggregators
//! - [`metrics`]: Kendall tau-b, Spearman rho, NDCG@K
//! - [`data`]: synthetic generators, LETOR I/O, rank-list augmentation
//! - [`selftest`]: oracle checks runnable outside the test harness

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod baselines;
pub mod bregman;
pub mod data;
pub mod error;
pub mod glm;
pub mod isotonic;
pub mod metrics;
pub mod ordering;
pub mod retarget;
pub mod selftest;

pub use aggregate::{mr_rank_agg, AggregationConfig, AggregationResult, InnerStart};
pub use bregman::{DivergenceSpec, Domain, Family};
pub use error::{Error, Result};
pub use glm::{fit_glm, GlmFit, GlmOptions, Regularization};
pub use isotonic::{enforce_range_margin, pav_fit, IsotonicSolution};
pub use ordering::Ordering;
pub use retarget::{extract_total_order, mr, mr_from, MrOptions, MrResult, MrStart};
