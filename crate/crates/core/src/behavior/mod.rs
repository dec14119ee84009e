//! Simulated drivers: cruising preferences, recommendation acceptance and
//! fitting of the acceptance model from survey data.

pub mod acceptance;
pub mod fit;
pub mod income;
pub mod predictor;
pub mod preference;

pub use acceptance::{decide_on_recommendation, AcceptanceModel, Decision};
pub use fit::{fit_acceptance_model, FitReport, SurveyRecord};
pub use income::IncomeEstimator;
pub use predictor::{FeatureConfig, FeatureFrame, RecurrentPredictor};
pub use preference::{
    frequency_preference, ground_truth_preference, GroundTruthPrefParams, LocalContext, PreferenceVector,
};
