use std::path::{Path, PathBuf};

use oracle_core::{
    assemble_features, build_prompt, build_report, build_samples, build_vocabulary,
    default_baseline, default_examples, evaluate, export_attributions, fit_dataset_normalization,
    filter_nonempty_lineups, generate_report, impute_lineups, init_model, integrated_gradients,
    load_matches, load_matches_csv, load_model, predict_score, save_model, simulate_tournament,
    split_train_validation, train, transfer_init, BaselineStrengths, Category, CompletionConfig,
    Dataset, FixedStrengths, Gender, ImportanceTable, MatchStrengths, ModelConfig,
    PlayerVocabulary, PromptBundle, RawMatch, Roster, ScoreModel, Side, TournamentSpec,
    DEFAULT_FEATURE_DESCRIPTIONS, DEFAULT_TARGET_SCALE,
};
use oracle_core::report::{render_explain_section, render_info};
use oracle_core::render_state_text;

use crate::config::AppConfig;
use crate::{
    AppError, ExplainArgs, PredictArgs, ReportArgs, SimulateArgs, TrainArgs,
};

fn ensure_output_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_artifact(path: &Path, content: &str) -> Result<(), AppError> {
    std::fs::write(path, content)
        .map_err(|e| AppError::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset, AppError> {
    let ds = if path.extension().is_some_and(|e| e == "csv") {
        load_matches_csv(path)?
    } else {
        load_matches(path)?
    };
    Ok(ds)
}

fn load_roster(path: Option<&PathBuf>) -> Result<Option<Roster>, AppError> {
    path.map(|p| Roster::load(p)).transpose().map_err(Into::into)
}

fn load_single_match(path: &Path) -> Result<RawMatch, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Data(format!("cannot read {}: {e}", path.display())))?;
    let m: RawMatch = serde_json::from_str(&text)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    m.validate()
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    Ok(m)
}

fn vocab_path_for(model_path: &Path) -> PathBuf {
    model_path.with_file_name("vocab.json")
}

fn load_vocab(path: &Path) -> Result<PlayerVocabulary, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

fn load_model_and_vocab(
    model_path: &Path,
    vocab_path: Option<&PathBuf>,
) -> Result<(ScoreModel, PlayerVocabulary), AppError> {
    let model = load_model(model_path)?;
    let vocab = load_vocab(
        vocab_path
            .cloned()
            .unwrap_or_else(|| vocab_path_for(model_path))
            .as_path(),
    )?;
    if vocab.len() != model.config.vocab_size {
        return Err(AppError::Data(format!(
            "vocabulary size {} does not match model vocab_size {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    Ok((model, vocab))
}

/// Strengths fallback for single-match inference: the training means,
/// unless the match record supplies its own values (which win).
fn mean_strengths(model: &ScoreModel) -> FixedStrengths {
    let m = &model.stats.means;
    FixedStrengths(MatchStrengths {
        attack_home: m[7],
        attack_away: m[8],
        defense_home: m[9],
        defense_away: m[10],
    })
}

fn parse_side(s: &str) -> Result<Side, AppError> {
    match s {
        "home" => Ok(Side::Home),
        "away" => Ok(Side::Away),
        other => Err(AppError::Usage(format!(
            "--team must be home or away, got {other}"
        ))),
    }
}

pub fn cmd_train(args: &TrainArgs, cfg: &AppConfig) -> Result<(), AppError> {
    let data = args
        .data
        .clone()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| AppError::Usage("no data file given (--data or config)".into()))?;
    let dataset = load_dataset(&data)?;

    if let Some(cat) = args.category {
        if dataset.category != Some(cat) {
            return Err(AppError::Data(format!(
                "dataset category {:?} does not match requested {:?}",
                dataset.category, cat
            )));
        }
    }
    if let Some(g) = args.gender {
        if dataset.gender != Some(g) {
            return Err(AppError::Data(format!(
                "dataset gender {:?} does not match requested {:?}",
                dataset.gender, g
            )));
        }
    }

    let dataset = filter_nonempty_lineups(&impute_lineups(&dataset));
    if dataset.is_empty() {
        return Err(AppError::Data("no matches with lineups left after filtering".into()));
    }

    let split = args
        .split
        .or(cfg.model.split_ratio)
        .unwrap_or(0.8);
    let seed = args.seed.or(cfg.model.seed).unwrap_or(0);
    let (train_ds, val_ds) = split_train_validation(&dataset, split, seed)?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(AppError::Data(
            "split produced an empty train or validation set".into(),
        ));
    }

    let vocab = build_vocabulary([&dataset]);
    let roster = load_roster(args.roster.as_ref().or(cfg.roster.as_ref()))?;
    let importance = ImportanceTable::default();
    let provider = BaselineStrengths::new(train_ds.clone(), cfg.strength_window)?;
    let stats = fit_dataset_normalization(
        &train_ds,
        &provider,
        roster.as_ref(),
        &importance,
        DEFAULT_TARGET_SCALE,
    )?;

    let mut config = ModelConfig::new(vocab.len());
    config.seed = seed;
    if let Some(v) = args.embedding_dim.or(cfg.model.embedding_dim) {
        config.embedding_dim = v;
    }
    if let Some(v) = args.hidden.clone().or_else(|| cfg.model.hidden_sizes.clone()) {
        config.hidden_sizes = v;
    }
    if let Some(v) = args.learning_rate.or(cfg.model.learning_rate) {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size.or(cfg.model.batch_size) {
        config.batch_size = v;
    }
    if let Some(v) = args.epochs.or(cfg.model.max_epochs) {
        config.max_epochs = v;
    }
    if let Some(v) = args.patience.or(cfg.model.patience) {
        config.patience = v;
    }

    let mut model = init_model(config, stats.clone())?;
    if let Some(source) = &args.transfer_from {
        let (source_model, source_vocab) =
            load_model_and_vocab(source, args.transfer_vocab.as_ref())?;
        model = transfer_init(model, &source_model, &source_vocab, &vocab)?;
        eprintln!(
            "transfer: copied embeddings from {} ({} players in source vocabulary)",
            source.display(),
            source_vocab.len()
        );
    }

    let train_samples = build_samples(
        &train_ds,
        &vocab,
        &provider,
        roster.as_ref(),
        &importance,
        &stats,
    )?;
    let val_samples = build_samples(
        &val_ds,
        &vocab,
        &provider,
        roster.as_ref(),
        &importance,
        &stats,
    )?;
    eprintln!(
        "training on {} matches, validating on {}",
        train_samples.len(),
        val_samples.len()
    );

    let (trained, history) = train(model, &train_samples, &val_samples)?;
    for e in &history.epochs {
        eprintln!(
            "epoch {:>3}  train_loss {:.6}  test_loss {:.6}",
            e.epoch, e.train_loss, e.validation_loss
        );
    }
    if history.stopped_early {
        eprintln!("early stop; best epoch {}", history.best_epoch);
    }

    let eval_samples = oracle_core::build_eval_samples(
        &val_ds,
        &vocab,
        &provider,
        roster.as_ref(),
        &importance,
        &stats,
    )?;
    let metrics = evaluate(&trained, &eval_samples)?;
    eprintln!(
        "validation: rmse_home {:.3} mape_home {:.1}% rmse_away {:.3} mape_away {:.1}%",
        metrics.rmse_home,
        metrics.mape_home * 100.0,
        metrics.rmse_away,
        metrics.mape_away * 100.0
    );

    ensure_output_dir(&cfg.output_dir)?;
    let model_path = cfg.output_dir.join("model.json");
    save_model(&trained, &model_path)?;
    let vocab_json = serde_json::to_string(&vocab)
        .map_err(|e| AppError::Data(format!("vocabulary serialization: {e}")))?;
    write_artifact(&cfg.output_dir.join("vocab.json"), &vocab_json)?;
    let mut csv = Vec::new();
    history
        .write_csv(&mut csv)
        .map_err(|e| AppError::Data(format!("history csv: {e}")))?;
    write_artifact(
        &cfg.output_dir.join("history.csv"),
        &String::from_utf8_lossy(&csv),
    )?;
    println!(
        "model written to {} (best epoch {})",
        model_path.display(),
        history.best_epoch
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs, cfg: &AppConfig) -> Result<(), AppError> {
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_ref())?;
    let m = load_single_match(&args.match_file)?;
    let roster = load_roster(args.roster.as_ref().or(cfg.roster.as_ref()))?;
    let features = assemble_features(
        &m,
        &vocab,
        &mean_strengths(&model),
        roster.as_ref(),
        &ImportanceTable::default(),
        Some(&model.stats),
    )?;
    let prediction = predict_score(&model, &features)?;
    let out = serde_json::json!({
        "match_id": m.match_id,
        "home_team": m.home_team,
        "away_team": m.away_team,
        "home_goals": prediction.home_goals,
        "away_goals": prediction.away_goals,
        "raw_home": prediction.raw_home,
        "raw_away": prediction.raw_away,
    });
    println!("{out}");
    Ok(())
}

pub fn cmd_explain(args: &ExplainArgs, cfg: &AppConfig) -> Result<(), AppError> {
    let side = parse_side(&args.team)?;
    let steps = args.steps.unwrap_or(cfg.ig_steps);
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_ref())?;
    let m = load_single_match(&args.match_file)?;
    let roster = load_roster(args.roster.as_ref().or(cfg.roster.as_ref()))?;
    let features = assemble_features(
        &m,
        &vocab,
        &mean_strengths(&model),
        roster.as_ref(),
        &ImportanceTable::default(),
        Some(&model.stats),
    )?;
    let raw = integrated_gradients(&model, &features, side, steps, &default_baseline())?;
    let report = build_report(
        &raw,
        &features.lineup,
        &vocab,
        roster.as_ref(),
        &m.match_id,
        side,
    )?;

    ensure_output_dir(&cfg.output_dir)?;
    let csv_path = cfg.output_dir.join("attributions.csv");
    export_attributions(&report, &csv_path)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| AppError::Data(format!("attribution serialization: {e}")))?;
    write_artifact(&cfg.output_dir.join("attributions.json"), &json)?;
    println!(
        "completeness residual: {:e} (steps {steps}); attributions in {}",
        raw.completeness_residual(),
        csv_path.display()
    );
    Ok(())
}

pub fn cmd_report(args: &ReportArgs, cfg: &AppConfig) -> Result<(), AppError> {
    // endpoint configuration is checked before any computation
    let endpoint_url = cfg
        .llm_url
        .clone()
        .ok_or_else(|| AppError::Usage("no completion endpoint configured (set ORACLE_LLM_URL or llm.url)".into()))?;
    let completion = CompletionConfig {
        endpoint_url,
        model: cfg.llm_model.clone(),
        max_tokens: cfg.llm_max_tokens,
        temperature: cfg.llm_temperature,
        timeout_secs: cfg.llm_timeout_secs,
        auth_token: cfg.llm_token.clone(),
    };
    completion.validate().map_err(AppError::from)?;

    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_ref())?;
    let m = load_single_match(&args.match_file)?;
    let side = if args.team == m.home_team {
        Side::Home
    } else if args.team == m.away_team {
        Side::Away
    } else {
        return Err(AppError::Usage(format!(
            "--team {} is neither {} nor {}",
            args.team, m.home_team, m.away_team
        )));
    };
    let roster = load_roster(args.roster.as_ref().or(cfg.roster.as_ref()))?;
    let features = assemble_features(
        &m,
        &vocab,
        &mean_strengths(&model),
        roster.as_ref(),
        &ImportanceTable::default(),
        Some(&model.stats),
    )?;
    let prediction = predict_score(&model, &features)?;
    let raw = integrated_gradients(&model, &features, side, cfg.ig_steps, &default_baseline())?;
    let attribution = build_report(
        &raw,
        &features.lineup,
        &vocab,
        roster.as_ref(),
        &m.match_id,
        side,
    )?;

    let bundle = PromptBundle {
        info: render_info(&m, &prediction),
        feat: DEFAULT_FEATURE_DESCRIPTIONS.trim_end().to_string(),
        explain: render_explain_section(&attribution),
        examples: default_examples(),
        team: args.team.clone(),
    };
    let prompt = build_prompt(&bundle)?;
    ensure_output_dir(&cfg.output_dir)?;
    write_artifact(&cfg.output_dir.join("prompt.txt"), &prompt)?;

    let text = generate_report(&prompt, &completion)?;
    write_artifact(&cfg.output_dir.join("report.txt"), &text)?;
    println!("{text}");
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, cfg: &AppConfig) -> Result<(), AppError> {
    let tournament = args
        .tournament
        .clone()
        .or_else(|| cfg.tournament.clone())
        .ok_or_else(|| AppError::Usage("no tournament file given (--tournament or config)".into()))?;
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_ref())?;
    let spec = TournamentSpec::load(&tournament)?;
    let roster = load_roster(args.roster.as_ref().or(cfg.roster.as_ref()))?;
    let state = simulate_tournament(
        &model,
        &spec,
        &vocab,
        roster.as_ref(),
        &ImportanceTable::default(),
    )?;

    ensure_output_dir(&cfg.output_dir)?;
    let json = serde_json::to_string_pretty(&state)
        .map_err(|e| AppError::Data(format!("tournament serialization: {e}")))?;
    write_artifact(&cfg.output_dir.join("tournament.json"), &json)?;
    let text = render_state_text(&state);
    write_artifact(&cfg.output_dir.join("tournament.txt"), &text)?;
    print!("{text}");
    Ok(())
}

// Category/Gender flag parsing lives here so clap stays out of core.
pub fn parse_category(s: &str) -> Result<Category, String> {
    match s {
        "clubs" => Ok(Category::Clubs),
        "national" => Ok(Category::National),
        other => Err(format!("must be clubs or national, got {other}")),
    }
}

pub fn parse_gender(s: &str) -> Result<Gender, String> {
    match s {
        "men" => Ok(Gender::Men),
        "women" => Ok(Gender::Women),
        other => Err(format!("must be men or women, got {other}")),
    }
}
