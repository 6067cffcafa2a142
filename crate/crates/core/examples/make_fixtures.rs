//! Regenerates the bundled fixtures under fixtures/ from the synthetic
//! generator. Run from the workspace root:
//!
//!   cargo run -p oracle-core --example make_fixtures

use std::fmt::Write as _;
use std::path::Path;

use oracle_core::{
    Dataset, Gender, GeoPoint, GroupSpec, KnockoutTimes, PromptBundle, RawMatch, Roster,
    RosterEntry, SyntheticOptions, TeamSpec, TournamentSpec,
};

const TEAMS: usize = 12;
const PLAYERS_PER_TEAM: usize = 14;

const POSITIONS: [&str; 7] = [
    "goalkeeper",
    "left wing",
    "left back",
    "center back",
    "line player",
    "right back",
    "right wing",
];

fn write_jsonl(path: &Path, ds: &Dataset) {
    let mut out = String::new();
    for m in &ds.matches {
        writeln!(out, "{}", serde_json::to_string(m).unwrap()).unwrap();
    }
    std::fs::write(path, out).unwrap();
}

fn team_location(ds: &Dataset, team: &str) -> GeoPoint {
    ds.matches
        .iter()
        .find_map(|m| {
            if m.home_team == team {
                Some(m.home_location)
            } else if m.away_team == team {
                Some(m.away_location)
            } else {
                None
            }
        })
        .unwrap()
}

fn team_lineup(ds: &Dataset, team: &str) -> Vec<String> {
    ds.matches
        .iter()
        .find_map(|m| {
            if m.home_team == team {
                Some(m.home_lineup.clone())
            } else if m.away_team == team {
                Some(m.away_lineup.clone())
            } else {
                None
            }
        })
        .unwrap()
}

fn at(date: &str, time: &str) -> chrono::NaiveDateTime {
    format!("{date}T{time}:00").parse().unwrap()
}

fn main() {
    let dir = Path::new("fixtures");
    std::fs::create_dir_all(dir).unwrap();

    let opts = SyntheticOptions {
        seed: 7,
        national_teams: TEAMS,
        players_per_team: PLAYERS_PER_TEAM,
        national_matches: 96,
        clubs_matches: 256,
        gender: Gender::Men,
        noise_sd: 1.0,
        strength_noise_sd: 0.0,
        lineup_size: 14,
        emit_strengths: true,
    };
    let data = oracle_core::generate_synthetic(&opts).unwrap();
    write_jsonl(&dir.join("clubs.jsonl"), &data.clubs);
    write_jsonl(&dir.join("national.jsonl"), &data.national);

    // upcoming match: copy a played fixture and blank the goals
    let mut upcoming: RawMatch = data.national.matches[0].clone();
    upcoming.match_id = "upcoming-001".into();
    upcoming.home_goals = None;
    upcoming.away_goals = None;
    std::fs::write(
        dir.join("match.json"),
        serde_json::to_string_pretty(&upcoming).unwrap(),
    )
    .unwrap();

    let mut roster = Roster::default();
    for j in 0..TEAMS * PLAYERS_PER_TEAM {
        roster.0.insert(
            format!("Player {:03}", j),
            RosterEntry {
                position: POSITIONS[j % POSITIONS.len()].to_string(),
                club: format!("Club {}", j % TEAMS),
                national_team: Some(format!("Nation {}", j / PLAYERS_PER_TEAM)),
            },
        );
    }
    std::fs::write(
        dir.join("roster.json"),
        serde_json::to_string_pretty(&roster).unwrap(),
    )
    .unwrap();

    let group = |name: &str, first_team: usize, start_day: u32| GroupSpec {
        name: name.to_string(),
        teams: (first_team..first_team + 6)
            .map(|i| {
                let team = format!("Nation {i}");
                TeamSpec {
                    location: team_location(&data.national, &team),
                    lineup: team_lineup(&data.national, &team),
                    name: team,
                    attack: None,
                    defense: None,
                }
            })
            .collect(),
        fixture_times: (0..15)
            .map(|i| {
                at(
                    &format!("2024-07-{:02}", start_day + i / 3),
                    ["09:00", "14:00", "19:00"][(i % 3) as usize],
                )
            })
            .collect(),
    };
    let tournament = TournamentSpec {
        competition: "Olympic Games".into(),
        gender: Gender::Men,
        season: "2023-2024".into(),
        venue: GeoPoint(48.8566, 2.3522),
        groups: vec![group("A", 0, 25), group("B", 6, 26)],
        knockout_times: KnockoutTimes {
            quarterfinals: vec![
                at("2024-08-07", "09:30"),
                at("2024-08-07", "13:30"),
                at("2024-08-07", "17:30"),
                at("2024-08-07", "21:30"),
            ],
            semifinals: vec![at("2024-08-09", "16:30"), at("2024-08-09", "21:30")],
            final_match: at("2024-08-11", "13:30"),
            bronze_match: at("2024-08-11", "09:00"),
        },
    };
    std::fs::write(
        dir.join("tournament_men.json"),
        serde_json::to_string_pretty(&tournament).unwrap(),
    )
    .unwrap();

    let bundle = PromptBundle {
        info: "France vs Croatia at the Olympic Games on August 11, 13:30. Predicted score: France 35 - 24 Croatia.".into(),
        feat: oracle_core::DEFAULT_FEATURE_DESCRIPTIONS.trim_end().into(),
        explain: "Dika Mem (right back, France): 0.3127\nNedim Remili (right back, France): 0.2210\nimportance: 0.0500\nempty slot 16 covered by no player\nDomagoj Duvnjak (center back, Croatia): -0.1840".into(),
        team: "France".into(),
        examples: oracle_core::default_examples(),
    };
    std::fs::write(
        dir.join("prompt_bundle.json"),
        serde_json::to_string_pretty(&bundle).unwrap(),
    )
    .unwrap();

    println!("fixtures written to {}", dir.display());
}
