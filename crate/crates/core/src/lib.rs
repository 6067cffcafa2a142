//! Handball score prediction library: data ingestion, feature assembly, a
//! hand-rolled embedding MLP with Adam training and early stopping,
//! transfer of club embeddings to national-team models, integrated
//! gradients attributions, LLM match report prompts, and Olympic
//! tournament simulation.

pub mod explain;
pub mod features;
pub mod ingest;
pub mod model;
pub mod report;
pub mod synthetic;
pub mod tournament;

pub use explain::{
    build_report, default_baseline, export_attributions, integrated_gradients, AttributionEntry,
    AttributionReport, EntryKind, ExplainError, RawAttributions, Side, DEFAULT_IG_STEPS,
};
pub use features::{
    assemble_features, baseline_strengths, build_vocabulary, fit_dataset_normalization,
    fit_normalization, importance_value, raw_covariates,
    travel_distance, BaselineStrengths, Covariates, FeatureError, FeatureVector, FixedStrengths,
    ImportanceTable, LineupVector, MatchStrengths, NormalizationStats, PlayerVocabulary, Roster,
    RosterEntry, StrengthProvider, COVARIATE_COUNT, COVARIATE_NAMES, DEFAULT_TARGET_SCALE,
    EARTH_RADIUS_KM, LINEUP_SLOTS,
};
pub use ingest::{
    filter_nonempty_lineups, impute_lineups, load_matches, load_matches_csv,
    split_train_validation, Category, Dataset, FileApi, Gender, GeoPoint, HttpApi, IngestError,
    MatchApi, RawMatch, MAX_LINEUP,
};
pub use model::{
    build_eval_samples, build_samples, evaluate, init_model, load_model, predict_input,
    predict_score, save_model, transfer_init,
    DenseLayer, EvalSample, Metrics, ModelConfig, ModelError, ModelInput, Prediction, Sample,
    ScoreModel, MODEL_FORMAT_VERSION,
};
pub use model::{train, EpochStats, TrainHistory};
pub use report::{
    build_prompt, build_prompt_with_template, default_examples, generate_report, CompletionClient,
    CompletionConfig, PromptBundle, ReportError, DEFAULT_FEATURE_DESCRIPTIONS,
    DEFAULT_PROMPT_TEMPLATE,
};
pub use synthetic::{generate as generate_synthetic, SyntheticData, SyntheticOptions};
pub use tournament::{
    play_knockout, rank_group, render_state_text, round_robin, seed_quarterfinals,
    simulate_tournament, update_standings, Bracket, Fixture, GroupSpec, GroupStanding,
    KnockoutTimes, Medals, Pairing, PlayedMatch, ScorePair, TeamSpec, TournamentError,
    TournamentSpec, TournamentState,
};
