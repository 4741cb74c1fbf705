//! Sample selection for the staged labeling campaign.

pub mod acquisition;
pub mod analysis;
pub mod bootstrap;
pub mod campaign;
pub mod budget;
pub mod kmeans;
pub mod retrieval;
pub mod selection;
pub mod uncertainty;

pub use acquisition::{plan_random_acquisition, plan_stage_acquisition, Acquisition, SelectionReason};
pub use analysis::{analyze_assessments, analyze_validation, AnalysisConfig, AnalysisReport, ImageAssessment};
pub use bootstrap::{bootstrap_initial_labels, GenericClass, GenericMask, GenericSegmenter};
pub use budget::BudgetSchedule;
pub use campaign::{
    resume_campaign, run_campaign, CampaignConfig, CampaignRun, CampaignStatus, ExternalReviewers, ReviewDriver, StageState,
    Strategy,
};
pub use kmeans::{kmeans, KMeans};
pub use retrieval::{cosine_similarity, retrieve_similar};
pub use selection::{score_unlabeled, select_by_uncertainty, ScoredImage};
pub use uncertainty::{margin_uncertainty, UncertaintyMap};
