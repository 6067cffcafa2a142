//! Match data loading, lineup imputation and dataset splitting.
//!
//! The on-disk format is line-delimited JSON, one match per line (see
//! [`RawMatch`] for the schema). A flat CSV adapter is provided for
//! spreadsheet-friendly exports; lineups are `|`-joined there.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("split ratio must be in (0,1), got {0}")]
    InvalidRatio(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("api request failed: {0}")]
    Api(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Clubs,
    National,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Men,
    Women,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Category::Clubs => write!(f, "clubs"),
            Category::National => write!(f, "national"),
        }
    }
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gender::Men => write!(f, "men"),
            Gender::Women => write!(f, "women"),
        }
    }
}

/// Latitude/longitude in degrees, serialized as a `[lat, lon]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint(pub f64, pub f64);

impl GeoPoint {
    pub fn lat(&self) -> f64 {
        self.0
    }
    pub fn lon(&self) -> f64 {
        self.1
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.0) && (-180.0..=180.0).contains(&self.1)
    }
}

pub const MAX_LINEUP: usize = 16;

/// One historical or upcoming match as it appears in the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMatch {
    pub match_id: String,
    pub date_time: NaiveDateTime,
    pub competition: String,
    pub home_team: String,
    pub away_team: String,
    pub home_location: GeoPoint,
    pub away_location: GeoPoint,
    pub match_location: GeoPoint,
    #[serde(default)]
    pub home_lineup: Vec<String>,
    #[serde(default)]
    pub away_lineup: Vec<String>,
    #[serde(default)]
    pub home_goals: Option<u32>,
    #[serde(default)]
    pub away_goals: Option<u32>,
    pub category: Category,
    pub gender: Gender,
    pub season: String,
    /// Optional pre-computed strength covariates supplied with the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_home: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_away: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense_home: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense_away: Option<f64>,
    /// Provenance flags set by [`impute_lineups`]; the model ignores them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub home_lineup_imputed: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub away_lineup_imputed: bool,
}

impl RawMatch {
    /// Checks the per-row invariants; returns the offending field on failure.
    pub fn validate(&self) -> Result<(), String> {
        if self.home_lineup.len() > MAX_LINEUP {
            return Err(format!(
                "home_lineup has {} players, max is {MAX_LINEUP}",
                self.home_lineup.len()
            ));
        }
        if self.away_lineup.len() > MAX_LINEUP {
            return Err(format!(
                "away_lineup has {} players, max is {MAX_LINEUP}",
                self.away_lineup.len()
            ));
        }
        match (self.home_goals, self.away_goals) {
            (Some(_), None) => return Err("home_goals present but away_goals absent".into()),
            (None, Some(_)) => return Err("away_goals present but home_goals absent".into()),
            _ => {}
        }
        for (name, loc) in [
            ("home_location", &self.home_location),
            ("away_location", &self.away_location),
            ("match_location", &self.match_location),
        ] {
            if !loc.is_valid() {
                return Err(format!("{name} out of range: ({}, {})", loc.0, loc.1));
            }
        }
        Ok(())
    }

    pub fn has_both_lineups(&self) -> bool {
        !self.home_lineup.is_empty() && !self.away_lineup.is_empty()
    }
}

/// An ordered collection of matches sharing category and gender.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub matches: Vec<RawMatch>,
    pub category: Option<Category>,
    pub gender: Option<Gender>,
}

impl Dataset {
    /// Builds a dataset sorted by date, checking category/gender uniformity.
    pub fn new(mut matches: Vec<RawMatch>) -> Result<Self, IngestError> {
        for (i, m) in matches.iter().enumerate() {
            if let Some(first) = matches.first() {
                if m.category != first.category || m.gender != first.gender {
                    return Err(IngestError::Schema {
                        row: i,
                        message: format!(
                            "category/gender ({}, {}) differs from first row ({}, {})",
                            m.category, m.gender, first.category, first.gender
                        ),
                    });
                }
            }
        }
        matches.sort_by(|a, b| a.date_time.cmp(&b.date_time));
        let category = matches.first().map(|m| m.category);
        let gender = matches.first().map(|m| m.gender);
        Ok(Dataset {
            matches,
            category,
            gender,
        })
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Loads a line-delimited JSON match file, sorted by date.
///
/// Rows that fail to parse or violate an invariant are rejected with the
/// 1-based line number and offending field in the error.
pub fn load_matches(path: &Path) -> Result<Dataset, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut matches = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let m: RawMatch = serde_json::from_str(&line).map_err(|e| IngestError::Schema {
            row,
            message: e.to_string(),
        })?;
        m.validate()
            .map_err(|message| IngestError::Schema { row, message })?;
        matches.push(m);
    }
    Dataset::new(matches)
}

/// Flat CSV record mirroring [`RawMatch`]; lineups are `|`-joined names.
#[derive(Debug, Deserialize)]
struct CsvRow {
    match_id: String,
    date_time: NaiveDateTime,
    competition: String,
    home_team: String,
    away_team: String,
    home_lat: f64,
    home_lon: f64,
    away_lat: f64,
    away_lon: f64,
    match_lat: f64,
    match_lon: f64,
    #[serde(default)]
    home_lineup: String,
    #[serde(default)]
    away_lineup: String,
    #[serde(default)]
    home_goals: Option<u32>,
    #[serde(default)]
    away_goals: Option<u32>,
    category: Category,
    gender: Gender,
    season: String,
    #[serde(default)]
    attack_home: Option<f64>,
    #[serde(default)]
    attack_away: Option<f64>,
    #[serde(default)]
    defense_home: Option<f64>,
    #[serde(default)]
    defense_away: Option<f64>,
}

fn split_names(joined: &str) -> Vec<String> {
    joined
        .split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// CSV adapter for [`load_matches`].
pub fn load_matches_csv(path: &Path) -> Result<Dataset, IngestError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| IngestError::Api(e.to_string()))?;
    let mut matches = Vec::new();
    for (i, result) in reader.deserialize::<CsvRow>().enumerate() {
        let row = i + 2; // 1-based, after the header
        let r = result.map_err(|e| IngestError::Schema {
            row,
            message: e.to_string(),
        })?;
        let m = RawMatch {
            match_id: r.match_id,
            date_time: r.date_time,
            competition: r.competition,
            home_team: r.home_team,
            away_team: r.away_team,
            home_location: GeoPoint(r.home_lat, r.home_lon),
            away_location: GeoPoint(r.away_lat, r.away_lon),
            match_location: GeoPoint(r.match_lat, r.match_lon),
            home_lineup: split_names(&r.home_lineup),
            away_lineup: split_names(&r.away_lineup),
            home_goals: r.home_goals,
            away_goals: r.away_goals,
            category: r.category,
            gender: r.gender,
            season: r.season,
            attack_home: r.attack_home,
            attack_away: r.attack_away,
            defense_home: r.defense_home,
            defense_away: r.defense_away,
            home_lineup_imputed: false,
            away_lineup_imputed: false,
        };
        m.validate()
            .map_err(|message| IngestError::Schema { row, message })?;
        matches.push(m);
    }
    Dataset::new(matches)
}

/// Backfills empty lineups with the team's most recent non-empty lineup of
/// the same season. Idempotent; never copies backward in time or across
/// seasons.
pub fn impute_lineups(dataset: &Dataset) -> Dataset {
    use std::collections::HashMap;
    let mut last: HashMap<(String, String), Vec<String>> = HashMap::new();
    let mut out = dataset.clone();
    for m in &mut out.matches {
        let home_key = (m.home_team.clone(), m.season.clone());
        if m.home_lineup.is_empty() {
            if let Some(prev) = last.get(&home_key) {
                m.home_lineup = prev.clone();
                m.home_lineup_imputed = true;
            }
        } else {
            last.insert(home_key, m.home_lineup.clone());
        }
        let away_key = (m.away_team.clone(), m.season.clone());
        if m.away_lineup.is_empty() {
            if let Some(prev) = last.get(&away_key) {
                m.away_lineup = prev.clone();
                m.away_lineup_imputed = true;
            }
        } else {
            last.insert(away_key, m.away_lineup.clone());
        }
    }
    out
}

/// Keeps only matches where both lineups are non-empty (clubs data).
pub fn filter_nonempty_lineups(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    out.matches.retain(RawMatch::has_both_lineups);
    out
}

/// Chronological train/validation split: the earliest `floor(n * ratio)`
/// matches are training, the remainder validation. `_seed` is reserved for
/// an optional shuffled mode and currently unused.
pub fn split_train_validation(
    dataset: &Dataset,
    ratio: f64,
    _seed: u64,
) -> Result<(Dataset, Dataset), IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::InvalidRatio(ratio));
    }
    if dataset.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let n_train = (dataset.len() as f64 * ratio).floor() as usize;
    let mut train = dataset.clone();
    let val_matches = train.matches.split_off(n_train);
    let val = Dataset {
        matches: val_matches,
        category: dataset.category,
        gender: dataset.gender,
    };
    Ok((train, val))
}

/// Remote source of match data. Implementations must be shareable across
/// threads; concurrent fetches are allowed.
pub trait MatchApi: Send + Sync {
    fn fetch_matches(
        &self,
        category: Category,
        gender: Gender,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<RawMatch>, IngestError>;
}

/// File-backed fake for tests and offline runs: serves a JSONL fixture,
/// filtered by the requested category/gender/date range.
pub struct FileApi {
    path: std::path::PathBuf,
}

impl FileApi {
    pub fn new(path: impl Into<std::path::PathBuf>) -> Self {
        FileApi { path: path.into() }
    }
}

impl MatchApi for FileApi {
    fn fetch_matches(
        &self,
        category: Category,
        gender: Gender,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<RawMatch>, IngestError> {
        let ds = load_matches(&self.path)?;
        Ok(ds
            .matches
            .into_iter()
            .filter(|m| {
                m.category == category
                    && m.gender == gender
                    && m.date_time.date() >= from
                    && m.date_time.date() <= to
            })
            .collect())
    }
}

/// HTTP client for a hosted match API: GET `{base}/matches` returning a JSON
/// array of [`RawMatch`] records.
pub struct HttpApi {
    base_url: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpApi {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        HttpApi {
            base_url: base_url.into(),
            token,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl MatchApi for HttpApi {
    fn fetch_matches(
        &self,
        category: Category,
        gender: Gender,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<RawMatch>, IngestError> {
        let url = format!("{}/matches", self.base_url.trim_end_matches('/'));
        let mut req = self.client.get(&url).query(&[
            ("category", category.to_string()),
            ("gender", gender.to_string()),
            ("from", from.to_string()),
            ("to", to.to_string()),
        ]);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| IngestError::Api(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(IngestError::Api(format!("status {}", resp.status())));
        }
        let matches: Vec<RawMatch> = resp.json().map_err(|e| IngestError::Api(e.to_string()))?;
        for (i, m) in matches.iter().enumerate() {
            m.validate()
                .map_err(|message| IngestError::Schema { row: i, message })?;
        }
        Ok(matches)
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use chrono::NaiveDate;

    /// A one-match dataset whose home lineup is exactly `names`.
    pub(crate) fn dataset_with_lineup(names: &[&str]) -> Dataset {
        let mut m = RawMatch {
            match_id: "m1".into(),
            date_time: NaiveDate::from_ymd_opt(2024, 1, 1)
                .unwrap()
                .and_hms_opt(18, 0, 0)
                .unwrap(),
            competition: "Regular championships".into(),
            home_team: "A".into(),
            away_team: "B".into(),
            home_location: GeoPoint(48.0, 2.0),
            away_location: GeoPoint(45.0, 15.0),
            match_location: GeoPoint(48.0, 2.0),
            home_lineup: vec![],
            away_lineup: vec![],
            home_goals: Some(30),
            away_goals: Some(28),
            category: Category::Clubs,
            gender: Gender::Men,
            season: "2023/24".into(),
            attack_home: None,
            attack_away: None,
            defense_home: None,
            defense_away: None,
            home_lineup_imputed: false,
            away_lineup_imputed: false,
        };
        m.home_lineup = names.iter().map(|s| s.to_string()).collect();
        Dataset::new(vec![m]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::io::Write;

    pub(crate) fn mk_match(id: &str, day: u32, home: &str, away: &str) -> RawMatch {
        RawMatch {
            match_id: id.to_string(),
            date_time: NaiveDate::from_ymd_opt(2024, 1, day)
                .unwrap()
                .and_hms_opt(18, 0, 0)
                .unwrap(),
            competition: "Regular championships".into(),
            home_team: home.into(),
            away_team: away.into(),
            home_location: GeoPoint(48.0, 2.0),
            away_location: GeoPoint(45.0, 15.0),
            match_location: GeoPoint(48.0, 2.0),
            home_lineup: vec![],
            away_lineup: vec![],
            home_goals: Some(30),
            away_goals: Some(28),
            category: Category::Clubs,
            gender: Gender::Men,
            season: "2023/24".into(),
            attack_home: None,
            attack_away: None,
            defense_home: None,
            defense_away: None,
            home_lineup_imputed: false,
            away_lineup_imputed: false,
        }
    }

    fn write_jsonl(rows: &[RawMatch]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for r in rows {
            writeln!(f, "{}", serde_json::to_string(r).unwrap()).unwrap();
        }
        f
    }

    #[test]
    fn load_sorts_by_date() {
        let rows = vec![
            mk_match("b", 5, "A", "B"),
            mk_match("a", 1, "C", "D"),
            mk_match("c", 3, "E", "F"),
        ];
        let f = write_jsonl(&rows);
        let ds = load_matches(f.path()).unwrap();
        assert_eq!(ds.len(), 3);
        let ids: Vec<_> = ds.matches.iter().map(|m| m.match_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
    }

    #[test]
    fn load_rejects_half_present_goals() {
        let mut m = mk_match("a", 1, "A", "B");
        m.away_goals = None;
        let f = write_jsonl(&[m]);
        let err = load_matches(f.path()).unwrap_err();
        match err {
            IngestError::Schema { row, message } => {
                assert_eq!(row, 1);
                assert!(message.contains("away_goals"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let ds = load_matches(f.path()).unwrap();
        assert_eq!(ds.len(), 0);
        assert!(ds.category.is_none());
    }

    #[test]
    fn load_missing_file() {
        let err = load_matches(Path::new("/nonexistent/matches.jsonl")).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    #[test]
    fn impute_copies_last_lineup_forward() {
        let mut m1 = mk_match("m1", 1, "A", "B");
        m1.home_lineup = vec!["P1".into(), "P2".into()];
        let m2 = mk_match("m2", 2, "A", "B");
        let ds = Dataset::new(vec![m1, m2]).unwrap();
        let out = impute_lineups(&ds);
        assert_eq!(out.matches[1].home_lineup, vec!["P1", "P2"]);
        assert!(out.matches[1].home_lineup_imputed);
        assert!(!out.matches[0].home_lineup_imputed);
    }

    #[test]
    fn impute_no_source_stays_empty() {
        let ds = Dataset::new(vec![mk_match("m1", 1, "A", "B"), mk_match("m2", 2, "A", "B")])
            .unwrap();
        let out = impute_lineups(&ds);
        assert!(out.matches.iter().all(|m| m.home_lineup.is_empty()));
    }

    #[test]
    fn impute_respects_seasons() {
        let mut m1 = mk_match("m1", 1, "A", "B");
        m1.home_lineup = vec!["P1".into()];
        m1.season = "2022/23".into();
        let mut m2 = mk_match("m2", 2, "A", "B");
        m2.season = "2023/24".into();
        let ds = Dataset::new(vec![m1, m2]).unwrap();
        let out = impute_lineups(&ds);
        assert!(out.matches[1].home_lineup.is_empty());
    }

    #[test]
    fn impute_keeps_existing_lineups() {
        let mut m1 = mk_match("m1", 1, "A", "B");
        m1.home_lineup = vec!["P1".into()];
        let mut m2 = mk_match("m2", 2, "A", "B");
        m2.home_lineup = vec!["P9".into()];
        let ds = Dataset::new(vec![m1, m2]).unwrap();
        let out = impute_lineups(&ds);
        assert_eq!(out.matches[1].home_lineup, vec!["P9"]);
    }

    #[test]
    fn impute_is_idempotent() {
        let mut m1 = mk_match("m1", 1, "A", "B");
        m1.home_lineup = vec!["P1".into()];
        m1.away_lineup = vec!["Q1".into()];
        let m2 = mk_match("m2", 2, "B", "A");
        let ds = Dataset::new(vec![m1, m2]).unwrap();
        let once = impute_lineups(&ds);
        let twice = impute_lineups(&once);
        assert_eq!(once.matches, twice.matches);
    }

    #[test]
    fn filter_keeps_full_lineups_only() {
        let mut rows = Vec::new();
        for day in 1..=5 {
            let mut m = mk_match(&format!("m{day}"), day, "A", "B");
            if day != 2 && day != 4 {
                m.home_lineup = vec!["P".into()];
                m.away_lineup = vec!["Q".into()];
            }
            rows.push(m);
        }
        let ds = Dataset::new(rows).unwrap();
        let out = filter_nonempty_lineups(&ds);
        assert_eq!(out.len(), 3);
        let again = filter_nonempty_lineups(&out);
        assert_eq!(again.len(), 3);
    }

    #[test]
    fn split_chronological() {
        let rows: Vec<_> = (1..=10).map(|d| mk_match(&format!("m{d}"), d, "A", "B")).collect();
        let ds = Dataset::new(rows).unwrap();
        let (train, val) = split_train_validation(&ds, 0.8, 0).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(val.len(), 2);
        assert_eq!(train.matches[7].match_id, "m8");
        assert_eq!(val.matches[0].match_id, "m9");
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let ds = Dataset::new(vec![mk_match("m1", 1, "A", "B")]).unwrap();
        assert!(matches!(
            split_train_validation(&ds, 1.5, 0),
            Err(IngestError::InvalidRatio(_))
        ));
    }

    #[test]
    fn split_single_match_floor_rule() {
        let ds = Dataset::new(vec![mk_match("m1", 1, "A", "B")]).unwrap();
        let (train, val) = split_train_validation(&ds, 0.5, 0).unwrap();
        assert_eq!(train.len(), 0);
        assert_eq!(val.len(), 1);
    }

    #[test]
    fn file_api_filters() {
        let mut rows = vec![mk_match("m1", 1, "A", "B"), mk_match("m2", 10, "C", "D")];
        rows[1].date_time = NaiveDate::from_ymd_opt(2024, 3, 1)
            .unwrap()
            .and_hms_opt(12, 0, 0)
            .unwrap();
        let f = write_jsonl(&rows);
        let api = FileApi::new(f.path());
        let got = api
            .fetch_matches(
                Category::Clubs,
                Gender::Men,
                NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2024, 1, 31).unwrap(),
            )
            .unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].match_id, "m1");
    }

    #[test]
    fn csv_round_trip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "match_id,date_time,competition,home_team,away_team,home_lat,home_lon,away_lat,away_lon,match_lat,match_lon,home_lineup,away_lineup,home_goals,away_goals,category,gender,season,attack_home,attack_away,defense_home,defense_away"
        )
        .unwrap();
        writeln!(
            f,
            "m1,2024-01-05T18:00:00,League,A,B,48.0,2.0,45.0,15.0,48.0,2.0,P1|P2,Q1,30,28,clubs,men,2023/24,,,,"
        )
        .unwrap();
        let ds = load_matches_csv(f.path()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.matches[0].home_lineup, vec!["P1", "P2"]);
        assert_eq!(ds.matches[0].away_lineup, vec!["Q1"]);
        assert_eq!(ds.matches[0].home_goals, Some(30));
    }
}
