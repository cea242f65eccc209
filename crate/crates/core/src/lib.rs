//! Sequential two-round coupon allocation for single-stock marketplace listings.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] holds the shared record types, coupon cost arithmetic and the
//!   feature encoders for both promotion rounds.
//! * [`simulator`] is a synthetic marketplace with a declared structural sale
//!   model, used as ground truth for every estimate downstream.
//! * [`learner`] provides weighted probabilistic classifiers (logistic
//!   regression and boosted stumps) plus k-fold grid search.
//! * [`uplift`] stacks two S-learners: a first-round predictor trained on a
//!   randomized trial and a second-round predictor trained on the unsold
//!   survivors with inverse propensity weights.
//! * [`decision`] combines both rounds into a joint sale propensity, expected
//!   cost and ROI, and picks the best coupon pair per item.
//! * [`evaluation`] measures lift, delay effects, cumulative uplift and
//!   compares allocation strategies by realized ROI.

pub mod decision;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod learner;
pub mod numfmt;
pub mod rng;
pub mod simulator;
pub mod uplift;

pub use decision::{
    allocate, allocate_independent, combine_cost, combine_propensity, replan, roi, AllocationPlan,
    PolicyConstraint, Roi,
};
pub use domain::{
    coupon_cost, encode_round1, encode_round2, CouponConfig, CouponSet, FeatureVector, ItemRecord,
    ItemStatus, OutcomeRecord, Round, SchemaId, Yen,
};
pub use error::{Error, Result};
pub use learner::{grid_search, predict, train, Dataset, LearnerConfig, LearnerKind, Model};
pub use simulator::{generate_catalog, run_rct, GroundTruth, SimConfig};
pub use uplift::{
    predict_item, train_pair, IpwSettings, IpwVariant, ItemPredictions, PairTraining,
    PairTrainingOptions, PredictorPair,
};
