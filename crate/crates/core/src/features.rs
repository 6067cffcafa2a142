//! Feature engineering: player tokenization, the 11 numeric covariates and
//! their normalization. Together with the 32 lineup slots this yields the
//! model's 43 inputs.

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Category, Dataset, GeoPoint, RawMatch, MAX_LINEUP};

pub const LINEUP_SLOTS: usize = 2 * MAX_LINEUP; // 32
pub const COVARIATE_COUNT: usize = 11;
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Goals are divided by this before entering the loss.
pub const DEFAULT_TARGET_SCALE: f64 = 50.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("lineup has {0} players, max is {max}", max = MAX_LINEUP)]
    LineupTooLong(usize),
    #[error("unknown competition {competition:?} for {category}; known: {known:?}")]
    UnknownCompetition {
        competition: String,
        category: Category,
        known: Vec<String>,
    },
    #[error("invalid coordinates ({0}, {1})")]
    InvalidCoordinates(f64, f64),
    #[error("cannot fit normalization on an empty set")]
    EmptyInput,
    #[error("strength window must be >= 1")]
    BadWindow,
    #[error("cannot read roster {path}: {message}")]
    Roster { path: String, message: String },
}

/// Bijection between player full names and token ids. Id 0 is the reserved
/// null token and never maps to a name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlayerVocabulary {
    name_to_id: HashMap<String, u32>,
    names: Vec<String>, // index i holds the name for id i+1
}

impl PlayerVocabulary {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.name_to_id.get(name).copied()
    }

    /// Name for a token id; `None` for the null token or out-of-range ids.
    pub fn name(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.names.get(id as usize - 1).map(String::as_str)
    }

    fn insert(&mut self, name: &str) {
        if !self.name_to_id.contains_key(name) {
            self.names.push(name.to_string());
            self.name_to_id
                .insert(name.to_string(), self.names.len() as u32);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u32 + 1, n.as_str()))
    }
}

/// Assigns ids in first-appearance order across all lineups of the given
/// datasets (home before away within a match).
pub fn build_vocabulary<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> PlayerVocabulary {
    let mut vocab = PlayerVocabulary::default();
    for ds in datasets {
        for m in &ds.matches {
            for name in m.home_lineup.iter().chain(m.away_lineup.iter()) {
                vocab.insert(name);
            }
        }
    }
    vocab
}

/// The 32 token slots: home players in slots 0..16, away in 16..32,
/// padded with the null token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineupVector(pub [u32; LINEUP_SLOTS]);

impl LineupVector {
    pub fn null() -> Self {
        LineupVector([0; LINEUP_SLOTS])
    }
}

/// Encodes the two name lists into token slots. Names absent from the
/// vocabulary map to the null token.
pub fn encode_lineup(
    vocab: &PlayerVocabulary,
    home: &[String],
    away: &[String],
) -> Result<LineupVector, FeatureError> {
    if home.len() > MAX_LINEUP {
        return Err(FeatureError::LineupTooLong(home.len()));
    }
    if away.len() > MAX_LINEUP {
        return Err(FeatureError::LineupTooLong(away.len()));
    }
    let mut tokens = [0u32; LINEUP_SLOTS];
    for (i, name) in home.iter().enumerate() {
        tokens[i] = vocab.id(name).unwrap_or(0);
    }
    for (i, name) in away.iter().enumerate() {
        tokens[MAX_LINEUP + i] = vocab.id(name).unwrap_or(0);
    }
    Ok(LineupVector(tokens))
}

/// The 11 numeric covariates, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub day_of_week: f64,
    pub hour: f64,
    pub importance: f64,
    pub travel_distance_home: f64,
    pub travel_distance_away: f64,
    pub n_clubs_home: f64,
    pub n_clubs_away: f64,
    pub attack_home: f64,
    pub attack_away: f64,
    pub defense_home: f64,
    pub defense_away: f64,
}

pub const COVARIATE_NAMES: [&str; COVARIATE_COUNT] = [
    "day_of_week",
    "hour",
    "importance",
    "travel_distance_home",
    "travel_distance_away",
    "n_clubs_home",
    "n_clubs_away",
    "attack_home",
    "attack_away",
    "defense_home",
    "defense_away",
];

impl Covariates {
    pub fn to_array(&self) -> [f64; COVARIATE_COUNT] {
        [
            self.day_of_week,
            self.hour,
            self.importance,
            self.travel_distance_home,
            self.travel_distance_away,
            self.n_clubs_home,
            self.n_clubs_away,
            self.attack_home,
            self.attack_away,
            self.defense_home,
            self.defense_away,
        ]
    }

    pub fn from_array(a: [f64; COVARIATE_COUNT]) -> Self {
        Covariates {
            day_of_week: a[0],
            hour: a[1],
            importance: a[2],
            travel_distance_home: a[3],
            travel_distance_away: a[4],
            n_clubs_home: a[5],
            n_clubs_away: a[6],
            attack_home: a[7],
            attack_away: a[8],
            defense_home: a[9],
            defense_away: a[10],
        }
    }
}

/// One model input: standardized covariates plus the raw token slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Standardized covariate values in canonical order.
    pub covariates: [f64; COVARIATE_COUNT],
    pub lineup: LineupVector,
}

/// Per-covariate mean/std plus the goal target scale, fitted on training
/// data and persisted inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub means: [f64; COVARIATE_COUNT],
    pub stds: [f64; COVARIATE_COUNT],
    pub target_scale: f64,
}

impl NormalizationStats {
    /// Identity stats (mean 0, std 1) with the default target scale.
    pub fn identity() -> Self {
        NormalizationStats {
            means: [0.0; COVARIATE_COUNT],
            stds: [1.0; COVARIATE_COUNT],
            target_scale: DEFAULT_TARGET_SCALE,
        }
    }

    pub fn standardize(&self, c: &Covariates) -> [f64; COVARIATE_COUNT] {
        let raw = c.to_array();
        std::array::from_fn(|i| (raw[i] - self.means[i]) / self.stds[i])
    }

    pub fn destandardize(&self, z: &[f64; COVARIATE_COUNT]) -> Covariates {
        Covariates::from_array(std::array::from_fn(|i| z[i] * self.stds[i] + self.means[i]))
    }

    pub fn scale_goals(&self, goals: f64) -> f64 {
        goals / self.target_scale
    }

    pub fn unscale_goals(&self, scaled: f64) -> f64 {
        scaled * self.target_scale
    }
}

/// Per-covariate mean and population standard deviation; degenerate
/// covariates (zero variance) get std 1.
pub fn fit_normalization(
    rows: &[Covariates],
    target_scale: f64,
) -> Result<NormalizationStats, FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let n = rows.len() as f64;
    let mut means = [0.0; COVARIATE_COUNT];
    for r in rows {
        let a = r.to_array();
        for i in 0..COVARIATE_COUNT {
            means[i] += a[i];
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = [0.0; COVARIATE_COUNT];
    for r in rows {
        let a = r.to_array();
        for i in 0..COVARIATE_COUNT {
            let d = a[i] - means[i];
            stds[i] += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    Ok(NormalizationStats {
        means,
        stds,
        target_scale,
    })
}

/// Fits normalization over the raw covariates of every match in the
/// dataset.
pub fn fit_dataset_normalization(
    dataset: &Dataset,
    provider: &dyn StrengthProvider,
    roster: Option<&Roster>,
    importance: &ImportanceTable,
    target_scale: f64,
) -> Result<NormalizationStats, FeatureError> {
    let rows = dataset
        .matches
        .iter()
        .map(|m| raw_covariates(m, provider, roster, importance))
        .collect::<Result<Vec<_>, _>>()?;
    fit_normalization(&rows, target_scale)
}

/// Great-circle distance in kilometers (haversine, Earth radius 6371 km).
pub fn travel_distance(from: GeoPoint, to: GeoPoint) -> Result<f64, FeatureError> {
    for p in [from, to] {
        if !p.is_valid() {
            return Err(FeatureError::InvalidCoordinates(p.0, p.1));
        }
    }
    let (la1, lo1) = (from.lat().to_radians(), from.lon().to_radians());
    let (la2, lo2) = (to.lat().to_radians(), to.lon().to_radians());
    let dla = la2 - la1;
    let dlo = lo2 - lo1;
    let h = (dla / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlo / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// Competition importance lookup, keyed by category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceTable {
    national: HashMap<String, u8>,
    clubs: HashMap<String, u8>,
}

impl Default for ImportanceTable {
    fn default() -> Self {
        let national = [
            ("Olympic Games", 10),
            ("World championships", 9),
            ("European championships", 8),
            ("African cup", 7),
            ("Eurocup", 7),
            ("Asian cup", 6),
            ("Qualifiers", 6),
            ("Tournaments", 5),
            ("Emerging nations", 5),
            ("International Friendly Games", 4),
        ];
        let clubs = [
            ("EHF Champions League", 6),
            ("EHF European League", 5),
            ("EHF European Cup", 4),
            ("Regular championships", 3),
            ("National cups", 2),
            ("Friendly games", 1),
        ];
        ImportanceTable {
            national: national
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            clubs: clubs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl ImportanceTable {
    pub fn value(&self, competition: &str, category: Category) -> Result<u8, FeatureError> {
        let map = match category {
            Category::National => &self.national,
            Category::Clubs => &self.clubs,
        };
        map.get(competition).copied().ok_or_else(|| {
            let mut known: Vec<String> = map.keys().cloned().collect();
            known.sort();
            FeatureError::UnknownCompetition {
                competition: competition.to_string(),
                category,
                known,
            }
        })
    }
}

/// Importance under the default competition table.
pub fn importance_value(competition: &str, category: Category) -> Result<u8, FeatureError> {
    ImportanceTable::default().value(competition, category)
}

/// Player metadata from the optional roster file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub position: String,
    pub club: String,
    #[serde(default)]
    pub national_team: Option<String>,
}

/// Map of player full name to metadata (position, club, national team).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Roster(pub HashMap<String, RosterEntry>);

impl Roster {
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Roster {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| FeatureError::Roster {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn get(&self, name: &str) -> Option<&RosterEntry> {
        self.0.get(name)
    }

    /// Distinct clubs among the given players; players without a roster
    /// entry are ignored.
    pub fn distinct_clubs(&self, lineup: &[String]) -> usize {
        lineup
            .iter()
            .filter_map(|n| self.0.get(n).map(|e| e.club.as_str()))
            .collect::<std::collections::HashSet<_>>()
            .len()
    }
}

/// Number-of-clubs covariate: always 1 for club teams; for national teams,
/// distinct clubs of the lineup per the roster, defaulting to 1.
pub fn n_clubs(category: Category, lineup: &[String], roster: Option<&Roster>) -> u32 {
    match category {
        Category::Clubs => 1,
        Category::National => roster
            .map(|r| r.distinct_clubs(lineup))
            .filter(|&n| n > 0)
            .unwrap_or(1) as u32,
    }
}

/// Team attack/defense covariates for one match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchStrengths {
    pub attack_home: f64,
    pub attack_away: f64,
    pub defense_home: f64,
    pub defense_away: f64,
}

/// Source of team strength covariates. Externally estimated values can be
/// supplied in the match file; this trait provides the fallback.
pub trait StrengthProvider: Send + Sync {
    fn strengths(&self, m: &RawMatch) -> MatchStrengths;
}

/// Rolling mean of goals scored/conceded over a team's last `window`
/// matches with recorded scores; teams without history get the global means.
pub fn baseline_strengths(history: &Dataset, team: &str, window: usize) -> (f64, f64) {
    assert!(window >= 1, "strength window must be >= 1");
    let mut scored = Vec::new();
    let mut conceded = Vec::new();
    for m in &history.matches {
        let (Some(hg), Some(ag)) = (m.home_goals, m.away_goals) else {
            continue;
        };
        if m.home_team == team {
            scored.push(hg as f64);
            conceded.push(ag as f64);
        } else if m.away_team == team {
            scored.push(ag as f64);
            conceded.push(hg as f64);
        }
    }
    if scored.is_empty() {
        return global_means(history);
    }
    let take = window.min(scored.len());
    let attack = scored[scored.len() - take..].iter().sum::<f64>() / take as f64;
    let defense = conceded[conceded.len() - take..].iter().sum::<f64>() / take as f64;
    (attack, defense)
}

fn global_means(history: &Dataset) -> (f64, f64) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for m in &history.matches {
        if let (Some(hg), Some(ag)) = (m.home_goals, m.away_goals) {
            sum += (hg + ag) as f64;
            n += 2;
        }
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = sum / n as f64;
        (mean, mean)
    }
}

/// [`StrengthProvider`] backed by [`baseline_strengths`] over a history
/// dataset.
pub struct BaselineStrengths {
    history: Dataset,
    window: usize,
}

impl BaselineStrengths {
    pub fn new(history: Dataset, window: usize) -> Result<Self, FeatureError> {
        if window < 1 {
            return Err(FeatureError::BadWindow);
        }
        Ok(BaselineStrengths { history, window })
    }
}

impl StrengthProvider for BaselineStrengths {
    fn strengths(&self, m: &RawMatch) -> MatchStrengths {
        let (attack_home, defense_home) =
            baseline_strengths(&self.history, &m.home_team, self.window);
        let (attack_away, defense_away) =
            baseline_strengths(&self.history, &m.away_team, self.window);
        MatchStrengths {
            attack_home,
            attack_away,
            defense_home,
            defense_away,
        }
    }
}

/// Constant strengths, mainly for tests and tournament fixtures.
pub struct FixedStrengths(pub MatchStrengths);

impl StrengthProvider for FixedStrengths {
    fn strengths(&self, _m: &RawMatch) -> MatchStrengths {
        self.0
    }
}

/// Builds the raw (unstandardized) covariates for one match. Strength
/// values supplied in the match record take precedence over the provider.
pub fn raw_covariates(
    m: &RawMatch,
    provider: &dyn StrengthProvider,
    roster: Option<&Roster>,
    importance: &ImportanceTable,
) -> Result<Covariates, FeatureError> {
    let fallback = provider.strengths(m);
    Ok(Covariates {
        day_of_week: m.date_time.weekday().num_days_from_monday() as f64,
        hour: m.date_time.hour() as f64,
        importance: importance.value(&m.competition, m.category)? as f64,
        travel_distance_home: travel_distance(m.home_location, m.match_location)?,
        travel_distance_away: travel_distance(m.away_location, m.match_location)?,
        n_clubs_home: n_clubs(m.category, &m.home_lineup, roster) as f64,
        n_clubs_away: n_clubs(m.category, &m.away_lineup, roster) as f64,
        attack_home: m.attack_home.unwrap_or(fallback.attack_home),
        attack_away: m.attack_away.unwrap_or(fallback.attack_away),
        defense_home: m.defense_home.unwrap_or(fallback.defense_home),
        defense_away: m.defense_away.unwrap_or(fallback.defense_away),
    })
}

/// Full feature vector for one match: standardized covariates (identity
/// stats when none given) plus the encoded lineup.
pub fn assemble_features(
    m: &RawMatch,
    vocab: &PlayerVocabulary,
    provider: &dyn StrengthProvider,
    roster: Option<&Roster>,
    importance: &ImportanceTable,
    stats: Option<&NormalizationStats>,
) -> Result<FeatureVector, FeatureError> {
    let raw = raw_covariates(m, provider, roster, importance)?;
    let identity = NormalizationStats::identity();
    let stats = stats.unwrap_or(&identity);
    Ok(FeatureVector {
        covariates: stats.standardize(&raw),
        lineup: encode_lineup(vocab, &m.home_lineup, &m.away_lineup)?,
    })
}
