//! Deterministic synthetic match generator. Player skill is the latent
//! signal: each player carries an attack and a defense effect, scores are a
//! base rate plus the home lineup's attack minus the away lineup's defense
//! (and vice versa) with Gaussian noise. The same player pool appears in
//! both the club and the national datasets, so embeddings learned on the
//! larger club corpus transfer to the national one.

use chrono::{NaiveDate, NaiveDateTime};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{Category, Dataset, Gender, GeoPoint, IngestError, RawMatch};

#[derive(Debug, Clone)]
pub struct SyntheticOptions {
    pub seed: u64,
    pub national_teams: usize,
    pub players_per_team: usize,
    pub national_matches: usize,
    /// Club corpus size; by default eight times the national one.
    pub clubs_matches: usize,
    pub gender: Gender,
    /// Standard deviation of the goal noise, in goals.
    pub noise_sd: f64,
    /// Noise added to the reported attack/defense strengths. At 0 the
    /// strengths fully determine the scores; raise it to make the lineup
    /// embeddings carry the signal instead.
    pub strength_noise_sd: f64,
    /// Players fielded per match, sampled from the team pool. Values below
    /// the pool size make individual players (not just teams) matter.
    pub lineup_size: usize,
    /// When false, matches carry no attack/defense strengths at all and a
    /// strength provider must fill them in downstream. Useful to force the
    /// signal through the lineups.
    pub emit_strengths: bool,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            seed: 7,
            national_teams: 8,
            players_per_team: 14,
            national_matches: 64,
            clubs_matches: 512,
            gender: Gender::Men,
            noise_sd: 1.0,
            strength_noise_sd: 0.0,
            lineup_size: 14,
            emit_strengths: true,
        }
    }
}

#[derive(Debug, Clone)]
struct Player {
    name: String,
    attack: f64,
    defense: f64,
}

#[derive(Debug, Clone)]
struct Team {
    name: String,
    location: GeoPoint,
    players: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub clubs: Dataset,
    pub national: Dataset,
}

const BASE_GOALS: f64 = 27.0;
const NATIONAL_COMPETITIONS: [&str; 3] =
    ["International Friendly Games", "Qualifiers", "World championships"];
const CLUB_COMPETITIONS: [&str; 3] =
    ["Regular championships", "National cups", "Friendly games"];

/// Generates a club dataset and a national dataset over a shared player
/// pool. Deterministic for a given set of options.
pub fn generate(opts: &SyntheticOptions) -> Result<SyntheticData, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let skill = Normal::new(0.0, 1.5).unwrap();

    let total_players = opts.national_teams * opts.players_per_team;
    let players: Vec<Player> = (0..total_players)
        .map(|i| Player {
            name: format!("Player {:03}", i),
            attack: skill.sample(&mut rng),
            defense: skill.sample(&mut rng),
        })
        .collect();

    let location = |rng: &mut ChaCha8Rng| {
        GeoPoint(rng.gen_range(36.0..60.0), rng.gen_range(-9.0..25.0))
    };

    // national team i owns players [i*p, (i+1)*p)
    let national_teams: Vec<Team> = (0..opts.national_teams)
        .map(|i| Team {
            name: format!("Nation {}", i),
            location: location(&mut rng),
            players: (i * opts.players_per_team..(i + 1) * opts.players_per_team).collect(),
        })
        .collect();

    // club k mixes players across nations: player j plays for club j mod k
    let club_count = opts.national_teams;
    let clubs: Vec<Team> = (0..club_count)
        .map(|k| Team {
            name: format!("Club {}", k),
            location: location(&mut rng),
            players: (0..total_players).filter(|j| j % club_count == k).collect(),
        })
        .collect();

    let national = play_series(
        &national_teams,
        &players,
        opts.national_matches,
        Category::National,
        &NATIONAL_COMPETITIONS,
        opts,
        &mut rng,
    );
    let clubs = play_series(
        &clubs,
        &players,
        opts.clubs_matches,
        Category::Clubs,
        &CLUB_COMPETITIONS,
        opts,
        &mut rng,
    );

    Ok(SyntheticData {
        clubs: Dataset::new(clubs)?,
        national: Dataset::new(national)?,
    })
}

fn play_series(
    teams: &[Team],
    players: &[Player],
    count: usize,
    category: Category,
    competitions: &[&str],
    opts: &SyntheticOptions,
    rng: &mut ChaCha8Rng,
) -> Vec<RawMatch> {
    let noise = Normal::new(0.0, opts.noise_sd).unwrap();
    let strength_noise = Normal::new(0.0, opts.strength_noise_sd.max(1e-12)).unwrap();
    let start = NaiveDate::from_ymd_opt(2023, 9, 1).unwrap();
    let mut matches = Vec::with_capacity(count);
    for i in 0..count {
        let hi = rng.gen_range(0..teams.len());
        let ai = (hi + rng.gen_range(1..teams.len())) % teams.len();
        let (home, away) = (&teams[hi], &teams[ai]);

        let size = opts.lineup_size.min(crate::ingest::MAX_LINEUP);
        let mut fielded = |team: &Team| -> Vec<usize> {
            let mut pool = team.players.clone();
            pool.shuffle(rng);
            pool.truncate(size);
            pool.sort_unstable();
            pool
        };
        let home_players = fielded(home);
        let away_players = fielded(away);
        let lineup = |fielded: &[usize]| -> Vec<String> {
            fielded.iter().map(|&p| players[p].name.clone()).collect()
        };
        let strength = |fielded: &[usize], f: fn(&Player) -> f64| -> f64 {
            fielded.iter().map(|&p| f(&players[p])).sum()
        };
        let home_attack = strength(&home_players, |p| p.attack);
        let home_defense = strength(&home_players, |p| p.defense);
        let away_attack = strength(&away_players, |p| p.attack);
        let away_defense = strength(&away_players, |p| p.defense);

        let home_goals =
            (BASE_GOALS + 0.4 * home_attack - 0.3 * away_defense + noise.sample(rng)).max(0.0);
        let away_goals =
            (BASE_GOALS + 0.4 * away_attack - 0.3 * home_defense + noise.sample(rng)).max(0.0);

        let when: NaiveDateTime = start
            .checked_add_days(chrono::Days::new(i as u64 % 270))
            .unwrap()
            .and_hms_opt(rng.gen_range(14..21), [0, 30][rng.gen_range(0..2)], 0)
            .unwrap();

        matches.push(RawMatch {
            match_id: format!("{:?}-{:04}", category, i),
            date_time: when,
            competition: competitions[i % competitions.len()].to_string(),
            home_team: home.name.clone(),
            away_team: away.name.clone(),
            home_location: home.location,
            away_location: away.location,
            match_location: home.location,
            home_lineup: lineup(&home_players),
            away_lineup: lineup(&away_players),
            home_goals: Some(home_goals.round() as u32),
            away_goals: Some(away_goals.round() as u32),
            category,
            gender: opts.gender,
            season: "2023-2024".to_string(),
            attack_home: opts
                .emit_strengths
                .then(|| home_attack + strength_noise.sample(rng)),
            attack_away: opts
                .emit_strengths
                .then(|| away_attack + strength_noise.sample(rng)),
            defense_home: opts
                .emit_strengths
                .then(|| home_defense + strength_noise.sample(rng)),
            defense_away: opts
                .emit_strengths
                .then(|| away_defense + strength_noise.sample(rng)),
            home_lineup_imputed: false,
            away_lineup_imputed: false,
        });
    }
    matches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_vocabulary;

    #[test]
    fn deterministic_for_seed() {
        let opts = SyntheticOptions {
            national_matches: 20,
            clubs_matches: 40,
            ..SyntheticOptions::default()
        };
        let a = generate(&opts).unwrap();
        let b = generate(&opts).unwrap();
        assert_eq!(a.national.matches, b.national.matches);
        assert_eq!(a.clubs.matches, b.clubs.matches);
    }

    #[test]
    fn seeds_differ() {
        let base = SyntheticOptions {
            national_matches: 20,
            clubs_matches: 20,
            ..SyntheticOptions::default()
        };
        let a = generate(&base).unwrap();
        let b = generate(&SyntheticOptions { seed: 8, ..base }).unwrap();
        assert_ne!(a.national.matches, b.national.matches);
    }

    #[test]
    fn sizes_and_categories() {
        let opts = SyntheticOptions::default();
        let data = generate(&opts).unwrap();
        assert_eq!(data.national.matches.len(), 64);
        assert_eq!(data.clubs.matches.len(), 512);
        assert_eq!(data.national.category, Some(Category::National));
        assert_eq!(data.clubs.category, Some(Category::Clubs));
        for m in &data.national.matches {
            assert!(m.validate().is_ok());
            assert!(m.home_goals.is_some());
        }
    }

    #[test]
    fn player_pool_is_shared_across_categories() {
        let data = generate(&SyntheticOptions::default()).unwrap();
        let nat = build_vocabulary([&data.national]);
        let clubs = build_vocabulary([&data.clubs]);
        let shared = nat
            .iter()
            .filter(|(_, name)| clubs.id(name).is_some())
            .count();
        assert_eq!(shared, nat.len(), "every national player plays for a club");
    }

    #[test]
    fn scores_track_lineup_strength() {
        // correlation between supplied attack strength and scored goals
        // should be clearly positive: that is the learnable signal
        let data = generate(&SyntheticOptions::default()).unwrap();
        let pairs: Vec<(f64, f64)> = data
            .clubs
            .matches
            .iter()
            .map(|m| (m.attack_home.unwrap(), m.home_goals.unwrap() as f64))
            .collect();
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
        let sx = (pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * sy);
        assert!(corr > 0.5, "attack/goals correlation {corr}");
    }
}
