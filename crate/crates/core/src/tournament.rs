//! Olympic tournament simulation: two round-robin groups of six, standings
//! with tie-breaks, cross-group quarterfinal seeding and knockout
//! propagation down to the medals.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    assemble_features, FeatureError, ImportanceTable, PlayerVocabulary, Roster,
};
use crate::ingest::{Category, Gender, GeoPoint, RawMatch};
use crate::model::{predict_score, ModelError, ScoreModel};

#[derive(Debug, Error)]
pub enum TournamentError {
    #[error("duplicate team {0}")]
    DuplicateTeam(String),
    #[error("a group needs exactly 6 teams, got {0}")]
    WrongTeamCount(usize),
    #[error("unknown team {0}")]
    UnknownTeam(String),
    #[error("group incomplete: {team} has played {played} of {expected}")]
    IncompleteGroup {
        team: String,
        played: u32,
        expected: u32,
    },
    #[error("need 4 qualifiers per group, got {0}")]
    NotEnoughQualifiers(usize),
    #[error("tournament file invalid: {0}")]
    SpecInvalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub home: String,
    pub away: String,
}

/// All C(6,2)=15 fixtures of a six-team group, generated with the circle
/// method for a deterministic order.
pub fn round_robin(teams: &[String]) -> Result<Vec<Fixture>, TournamentError> {
    if teams.len() != 6 {
        return Err(TournamentError::WrongTeamCount(teams.len()));
    }
    for (i, t) in teams.iter().enumerate() {
        if teams[..i].contains(t) {
            return Err(TournamentError::DuplicateTeam(t.clone()));
        }
    }
    let n = teams.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut fixtures = Vec::with_capacity(n * (n - 1) / 2);
    for _round in 0..n - 1 {
        for i in 0..n / 2 {
            fixtures.push(Fixture {
                home: teams[order[i]].clone(),
                away: teams[order[n - 1 - i]].clone(),
            });
        }
        // rotate everything but the first slot
        let last = order.pop().unwrap();
        order.insert(1, last);
    }
    Ok(fixtures)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStanding {
    pub team: String,
    pub points: u32,
    pub goal_difference: i32,
    pub goals_scored: u32,
    pub played: u32,
}

impl GroupStanding {
    pub fn new(team: impl Into<String>) -> Self {
        GroupStanding {
            team: team.into(),
            points: 0,
            goal_difference: 0,
            goals_scored: 0,
            played: 0,
        }
    }
}

/// Applies one result under the 2/1/0 points scheme.
pub fn update_standings(
    standings: &mut [GroupStanding],
    fixture: &Fixture,
    home_goals: u32,
    away_goals: u32,
) -> Result<(), TournamentError> {
    let find = |standings: &[GroupStanding], team: &str| {
        standings
            .iter()
            .position(|s| s.team == team)
            .ok_or_else(|| TournamentError::UnknownTeam(team.to_string()))
    };
    let hi = find(standings, &fixture.home)?;
    let ai = find(standings, &fixture.away)?;
    let (hp, ap) = match home_goals.cmp(&away_goals) {
        std::cmp::Ordering::Greater => (2, 0),
        std::cmp::Ordering::Equal => (1, 1),
        std::cmp::Ordering::Less => (0, 2),
    };
    standings[hi].points += hp;
    standings[hi].goal_difference += home_goals as i32 - away_goals as i32;
    standings[hi].goals_scored += home_goals;
    standings[hi].played += 1;
    standings[ai].points += ap;
    standings[ai].goal_difference += away_goals as i32 - home_goals as i32;
    standings[ai].goals_scored += away_goals;
    standings[ai].played += 1;
    Ok(())
}

/// Orders a complete group: points desc, goal difference desc, goals scored
/// desc, then team name asc. The first four qualify.
pub fn rank_group(standings: &[GroupStanding]) -> Result<Vec<GroupStanding>, TournamentError> {
    let expected = standings.len() as u32 - 1;
    for s in standings {
        if s.played != expected {
            return Err(TournamentError::IncompleteGroup {
                team: s.team.clone(),
                played: s.played,
                expected,
            });
        }
    }
    let mut ranked = standings.to_vec();
    ranked.sort_by(|a, b| {
        b.points
            .cmp(&a.points)
            .then(b.goal_difference.cmp(&a.goal_difference))
            .then(b.goals_scored.cmp(&a.goals_scored))
            .then(a.team.cmp(&b.team))
    });
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub first: String,
    pub second: String,
}

/// Cross-group seeding A1-B4, A2-B3, B2-A3, B1-A4, in bracket order: the
/// winners of the first two pairings meet in one semifinal, the winners of
/// the last two in the other.
pub fn seed_quarterfinals(
    group_a: &[GroupStanding],
    group_b: &[GroupStanding],
) -> Result<[Pairing; 4], TournamentError> {
    for g in [group_a, group_b] {
        if g.len() < 4 {
            return Err(TournamentError::NotEnoughQualifiers(g.len()));
        }
    }
    let pair = |x: &GroupStanding, y: &GroupStanding| Pairing {
        first: x.team.clone(),
        second: y.team.clone(),
    };
    Ok([
        pair(&group_a[0], &group_b[3]),
        pair(&group_a[1], &group_b[2]),
        pair(&group_b[1], &group_a[2]),
        pair(&group_b[0], &group_a[3]),
    ])
}

/// Integer scores plus the raw model outputs kept for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub first: u32,
    pub second: u32,
    pub raw_first: f64,
    pub raw_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayedMatch {
    pub first: String,
    pub second: String,
    pub score: ScorePair,
}

impl PlayedMatch {
    /// Ties on integer scores break on the raw score, then on the
    /// first-listed team.
    pub fn winner(&self) -> &str {
        let s = &self.score;
        if s.first != s.second {
            if s.first > s.second {
                &self.first
            } else {
                &self.second
            }
        } else if s.raw_first >= s.raw_second {
            &self.first
        } else {
            &self.second
        }
    }

    pub fn loser(&self) -> &str {
        if self.winner() == self.first {
            &self.second
        } else {
            &self.first
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Medals {
    pub gold: String,
    pub silver: String,
    pub bronze: String,
    pub fourth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub quarterfinals: Vec<PlayedMatch>,
    pub semifinals: Vec<PlayedMatch>,
    pub final_match: PlayedMatch,
    pub bronze_match: PlayedMatch,
    pub medals: Medals,
}

/// Plays the knockout from the quarterfinal pairings: winners advance,
/// semifinal losers contest the bronze final.
pub fn play_knockout(
    quarterfinals: &[Pairing; 4],
    mut score_fn: impl FnMut(&str, &str) -> Result<ScorePair, TournamentError>,
) -> Result<Bracket, TournamentError> {
    let mut play = |first: &str, second: &str| -> Result<PlayedMatch, TournamentError> {
        Ok(PlayedMatch {
            first: first.to_string(),
            second: second.to_string(),
            score: score_fn(first, second)?,
        })
    };
    let qf: Vec<PlayedMatch> = quarterfinals
        .iter()
        .map(|p| play(&p.first, &p.second))
        .collect::<Result<_, _>>()?;
    let sf1 = play(qf[0].winner(), qf[1].winner())?;
    let sf2 = play(qf[2].winner(), qf[3].winner())?;
    let final_match = play(sf1.winner(), sf2.winner())?;
    let bronze_match = play(sf1.loser(), sf2.loser())?;
    let medals = Medals {
        gold: final_match.winner().to_string(),
        silver: final_match.loser().to_string(),
        bronze: bronze_match.winner().to_string(),
        fourth: bronze_match.loser().to_string(),
    };
    Ok(Bracket {
        semifinals: vec![sf1, sf2],
        quarterfinals: qf,
        final_match,
        bronze_match,
        medals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSpec {
    pub name: String,
    pub location: GeoPoint,
    #[serde(default)]
    pub lineup: Vec<String>,
    /// Optional externally estimated strengths; defaults to the training
    /// means when absent.
    #[serde(default)]
    pub attack: Option<f64>,
    #[serde(default)]
    pub defense: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub teams: Vec<TeamSpec>,
    /// Date/time of each of the 15 group fixtures, in circle-method order.
    pub fixture_times: Vec<NaiveDateTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoutTimes {
    pub quarterfinals: Vec<NaiveDateTime>,
    pub semifinals: Vec<NaiveDateTime>,
    pub final_match: NaiveDateTime,
    pub bronze_match: NaiveDateTime,
}

/// Tournament definition file: groups, venue and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentSpec {
    pub competition: String,
    pub gender: Gender,
    pub season: String,
    pub venue: GeoPoint,
    pub groups: Vec<GroupSpec>,
    pub knockout_times: KnockoutTimes,
}

impl TournamentSpec {
    pub fn load(path: &Path) -> Result<Self, TournamentError> {
        let text = std::fs::read_to_string(path).map_err(|e| TournamentError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let spec: TournamentSpec =
            serde_json::from_str(&text).map_err(|e| TournamentError::SpecInvalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TournamentError> {
        if self.groups.len() != 2 {
            return Err(TournamentError::SpecInvalid(format!(
                "need exactly 2 groups, got {}",
                self.groups.len()
            )));
        }
        for g in &self.groups {
            if g.teams.len() != 6 {
                return Err(TournamentError::WrongTeamCount(g.teams.len()));
            }
            if g.fixture_times.len() != 15 {
                return Err(TournamentError::SpecInvalid(format!(
                    "group {} has {} fixture times, need 15",
                    g.name,
                    g.fixture_times.len()
                )));
            }
        }
        if self.knockout_times.quarterfinals.len() != 4
            || self.knockout_times.semifinals.len() != 2
        {
            return Err(TournamentError::SpecInvalid(
                "knockout needs 4 quarterfinal and 2 semifinal times".into(),
            ));
        }
        Ok(())
    }

    fn team(&self, name: &str) -> Result<&TeamSpec, TournamentError> {
        self.groups
            .iter()
            .flat_map(|g| g.teams.iter())
            .find(|t| t.name == name)
            .ok_or_else(|| TournamentError::UnknownTeam(name.to_string()))
    }
}

/// Final state: ranked standings per group, all group results and the
/// knockout bracket with medals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentState {
    pub group_standings: Vec<(String, Vec<GroupStanding>)>,
    pub group_results: Vec<PlayedMatch>,
    pub bracket: Bracket,
}

/// Plays the full tournament with the model: 30 group fixtures, then the
/// knockout, every match at the tournament venue with the configured
/// competition (importance 10 for the Olympic Games).
pub fn simulate_tournament(
    model: &ScoreModel,
    spec: &TournamentSpec,
    vocab: &PlayerVocabulary,
    roster: Option<&Roster>,
    importance: &ImportanceTable,
) -> Result<TournamentState, TournamentError> {
    spec.validate()?;
    let score_match = |home: &str, away: &str, when: NaiveDateTime| -> Result<ScorePair, TournamentError> {
        let h = spec.team(home)?;
        let a = spec.team(away)?;
        let stats = &model.stats;
        let m = RawMatch {
            match_id: format!("{home} vs {away}"),
            date_time: when,
            competition: spec.competition.clone(),
            home_team: home.to_string(),
            away_team: away.to_string(),
            home_location: h.location,
            away_location: a.location,
            match_location: spec.venue,
            home_lineup: h.lineup.clone(),
            away_lineup: a.lineup.clone(),
            home_goals: None,
            away_goals: None,
            category: Category::National,
            gender: spec.gender,
            season: spec.season.clone(),
            attack_home: Some(h.attack.unwrap_or(stats.means[7])),
            attack_away: Some(a.attack.unwrap_or(stats.means[8])),
            defense_home: Some(h.defense.unwrap_or(stats.means[9])),
            defense_away: Some(a.defense.unwrap_or(stats.means[10])),
            home_lineup_imputed: false,
            away_lineup_imputed: false,
        };
        // strengths are always supplied above; the provider is never consulted
        let provider = crate::features::FixedStrengths(crate::features::MatchStrengths {
            attack_home: 0.0,
            attack_away: 0.0,
            defense_home: 0.0,
            defense_away: 0.0,
        });
        let f = assemble_features(&m, vocab, &provider, roster, importance, Some(stats))?;
        let p = predict_score(model, &f)?;
        Ok(ScorePair {
            first: p.home_goals,
            second: p.away_goals,
            raw_first: p.raw_home,
            raw_second: p.raw_away,
        })
    };

    let mut group_standings = Vec::new();
    let mut group_results = Vec::new();
    let mut ranked_groups = Vec::new();
    for group in &spec.groups {
        let teams: Vec<String> = group.teams.iter().map(|t| t.name.clone()).collect();
        let fixtures = round_robin(&teams)?;
        let mut standings: Vec<GroupStanding> =
            teams.iter().map(GroupStanding::new).collect();
        for (fixture, &when) in fixtures.iter().zip(&group.fixture_times) {
            let score = score_match(&fixture.home, &fixture.away, when)?;
            update_standings(&mut standings, fixture, score.first, score.second)?;
            group_results.push(PlayedMatch {
                first: fixture.home.clone(),
                second: fixture.away.clone(),
                score,
            });
        }
        let ranked = rank_group(&standings)?;
        group_standings.push((group.name.clone(), ranked.clone()));
        ranked_groups.push(ranked);
    }

    let quarterfinals = seed_quarterfinals(&ranked_groups[0], &ranked_groups[1])?;
    let kt = &spec.knockout_times;
    let mut times = kt
        .quarterfinals
        .iter()
        .chain(kt.semifinals.iter())
        .chain([&kt.final_match, &kt.bronze_match])
        .copied();
    let bracket = play_knockout(&quarterfinals, |first, second| {
        let when = times
            .next()
            .ok_or_else(|| TournamentError::SpecInvalid("ran out of knockout times".into()))?;
        score_match(first, second, when)
    })?;

    Ok(TournamentState {
        group_standings,
        group_results,
        bracket,
    })
}

/// Plain-text standings and bracket table.
pub fn render_state_text(state: &TournamentState) -> String {
    let mut out = String::new();
    for (name, standings) in &state.group_standings {
        out.push_str(&format!("Group {name}\n"));
        out.push_str("rank  team                  points  goal_difference  goals_scored\n");
        for (i, s) in standings.iter().enumerate() {
            out.push_str(&format!(
                "{:<5} {:<21} {:<7} {:<16} {}\n",
                i + 1,
                s.team,
                s.points,
                s.goal_difference,
                s.goals_scored
            ));
        }
        out.push('\n');
    }
    let round = |name: &str, matches: &[PlayedMatch], out: &mut String| {
        out.push_str(name);
        out.push('\n');
        for m in matches {
            out.push_str(&format!(
                "  {} {} - {} {}\n",
                m.first, m.score.first, m.score.second, m.second
            ));
        }
    };
    round("Quarterfinals", &state.bracket.quarterfinals, &mut out);
    round("Semifinals", &state.bracket.semifinals, &mut out);
    round("Final", std::slice::from_ref(&state.bracket.final_match), &mut out);
    round(
        "Bronze final",
        std::slice::from_ref(&state.bracket.bronze_match),
        &mut out,
    );
    let m = &state.bracket.medals;
    out.push_str(&format!(
        "\nGold: {}\nSilver: {}\nBronze: {}\nFourth: {}\n",
        m.gold, m.silver, m.bronze, m.fourth
    ));
    out
}
