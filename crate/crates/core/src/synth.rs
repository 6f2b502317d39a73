//! Synthetic listening logs with a planted latent-factor ground truth.
//!
//! Stations are clusters in a latent space and songs are drawn around their
//! station's centroid. Each user has a latent taste vector, a few habitual
//! stations and a personal like threshold. Sessions pick one habitual
//! station and expose a handful of its songs; feedback follows the noisy
//! preference `dot(user, song)`:
//!
//! * a liked song gets `up` with probability `up_rate`, except that with
//!   probability `false_negative_rate` the user skips it anyway;
//! * a disliked song gets `down` with probability `down_rate`;
//! * independently, a fraction `skip_rate` of exposures are skips, of which
//!   a share `skip_dislike_mix` are skips of disliked songs and the rest are
//!   fatigue skips of songs the user likes.
//!
//! A fixed share of users never gives an `up`: their would-be `up`s become
//! skips.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    ingest_reader, Catalog, DatasetDescriptor, FeedbackEvent, FeedbackType, PairedTestCase, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::eval::{paired_accuracy, Scorer};
use crate::rng::{rng_for, stream, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_songs: usize,
    pub n_stations: usize,
    pub latent_dim: usize,
    /// Spread of station centroids in latent space.
    pub station_spread: f64,
    /// Spread of songs around their centroid.
    pub song_spread: f64,
    /// Spread of a per-song appeal term shared by all users and added to the
    /// preference.
    pub appeal_spread: f64,
    /// Standard deviation of the Gaussian noise added to the true preference
    /// before the like/dislike decision.
    pub affinity_noise: f64,
    pub up_rate: f64,
    pub down_rate: f64,
    pub skip_rate: f64,
    /// Share of spontaneous skips that target disliked songs; the rest are
    /// fatigue skips of liked songs.
    pub skip_dislike_mix: f64,
    pub skip_only_fraction: f64,
    pub false_negative_rate: f64,
    /// Exposure weight of the song at popularity rank `r` (0-based, within its
    /// station) is `(r + 1)^-popularity_exponent`; 0 gives uniform exposure.
    pub popularity_exponent: f64,
    /// Per-user exposure tilt: weights are further multiplied by
    /// `exp(exposure_sharpness * preference)`, so stations play more of what
    /// each listener likes.
    pub exposure_sharpness: f64,
    /// Quantile of the user's habitual-station preferences used as the
    /// like/dislike threshold.
    pub like_quantile: f64,
    /// Habitual stations per user.
    pub stations_per_user: usize,
    pub sessions_min: usize,
    pub sessions_max: usize,
    pub exposures_min: usize,
    pub exposures_max: usize,
    pub span_days: i64,
    pub start_timestamp: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 10_000,
            n_songs: 5_000,
            n_stations: 20,
            latent_dim: 4,
            station_spread: 1.0,
            song_spread: 0.5,
            appeal_spread: 0.5,
            affinity_noise: 0.1,
            up_rate: 0.7,
            down_rate: 0.5,
            skip_rate: 0.2,
            skip_dislike_mix: 0.8,
            skip_only_fraction: 0.32,
            false_negative_rate: 0.1,
            popularity_exponent: 0.0,
            exposure_sharpness: 0.0,
            like_quantile: 0.5,
            stations_per_user: 3,
            sessions_min: 4,
            sessions_max: 10,
            exposures_min: 3,
            exposures_max: 8,
            span_days: 180,
            start_timestamp: 1_700_000_000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("up_rate", self.up_rate),
            ("down_rate", self.down_rate),
            ("skip_rate", self.skip_rate),
            ("skip_dislike_mix", self.skip_dislike_mix),
            ("skip_only_fraction", self.skip_only_fraction),
            ("false_negative_rate", self.false_negative_rate),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.n_songs < 100 {
            return Err(Error::Config(format!(
                "n_songs must be at least 100, got {}",
                self.n_songs
            )));
        }
        if self.n_stations == 0 || self.n_stations > self.n_songs {
            return Err(Error::Config("n_stations must be in 1..=n_songs".into()));
        }
        if self.n_users == 0 || self.latent_dim == 0 {
            return Err(Error::Config("n_users and latent_dim must be positive".into()));
        }
        if self.stations_per_user == 0 || self.stations_per_user > self.n_stations {
            return Err(Error::Config("stations_per_user must be in 1..=n_stations".into()));
        }
        if self.sessions_min == 0
            || self.sessions_min > self.sessions_max
            || self.exposures_min == 0
            || self.exposures_min > self.exposures_max
        {
            return Err(Error::Config(
                "session/exposure ranges must be non-empty and positive".into(),
            ));
        }
        if self.popularity_exponent < 0.0 || self.appeal_spread < 0.0 || self.exposure_sharpness < 0.0 {
            return Err(Error::Config(
                "popularity_exponent, appeal_spread and exposure_sharpness must be non-negative".into(),
            ));
        }
        if !(self.like_quantile > 0.0 && self.like_quantile < 1.0) {
            return Err(Error::Config(format!(
                "like_quantile must be in (0, 1), got {}",
                self.like_quantile
            )));
        }
        if self.span_days <= 0 || self.affinity_noise < 0.0 {
            return Err(Error::Config(
                "span_days must be positive and affinity_noise non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// The planted world. Users, songs and stations are indexed by position and
/// named `u{i}`, `s{j}` and `st{k}` in the emitted file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub users: Vec<Vec<f64>>,
    pub songs: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    pub song_station: Vec<usize>,
    pub appeal: Vec<f64>,
    /// Per-user like threshold on the true preference.
    pub thresholds: Vec<f64>,
    pub skip_only: Vec<bool>,
}

impl GroundTruth {
    pub fn preference(&self, user: usize, song: usize) -> f64 {
        dot(&self.users[user], &self.songs[song]) + self.appeal[song]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Scorer using the true preferences, resolving catalog ids by name.
    pub fn scorer<'a>(&'a self, catalog: &Catalog) -> Result<TruthScorer<'a>> {
        let parse = |name: &str, prefix: &str, limit: usize| -> Result<usize> {
            name.strip_prefix(prefix)
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n < limit)
                .ok_or_else(|| Error::OutOfRange(format!("{name:?} is not a generated id")))
        };
        let users = catalog
            .users
            .names()
            .iter()
            .map(|n| parse(n, "u", self.users.len()))
            .collect::<Result<_>>()?;
        let songs = catalog
            .songs
            .names()
            .iter()
            .map(|n| parse(n, "s", self.songs.len()))
            .collect::<Result<_>>()?;
        Ok(TruthScorer {
            truth: self,
            users,
            songs,
        })
    }
}

pub struct TruthScorer<'a> {
    truth: &'a GroundTruth,
    users: Vec<usize>,
    songs: Vec<usize>,
}

impl Scorer for TruthScorer<'_> {
    type Query = usize;

    fn prepare(&self, context: &crate::data::UserSequence, _: crate::data::StationId) -> Result<usize> {
        self.users
            .get(context.user.0 as usize)
            .copied()
            .ok_or_else(|| Error::OutOfRange(format!("user id {}", context.user.0)))
    }

    fn score(&self, user: &usize, song: crate::data::SongId) -> f64 {
        self.truth.preference(*user, self.songs[song.0 as usize])
    }
}

/// Paired accuracy of the true preference scores.
pub fn oracle_accuracy(truth: &GroundTruth, catalog: &Catalog, cases: &[PairedTestCase]) -> Result<f64> {
    Ok(paired_accuracy(&truth.scorer(catalog)?, cases)?.accuracy)
}

/// One generated feedback event in generator indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthEvent {
    pub user: usize,
    pub song: usize,
    pub station: usize,
    pub feedback: FeedbackType,
    pub timestamp: i64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian(rng: &mut Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>()
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let dist = |c: &Vec<f64>| c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..centroids.len())
        .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
        .unwrap_or(0)
}

/// Draws the world (stations, songs, users) and then each user's history.
pub fn generate(config: &SynthConfig) -> Result<(Vec<SynthEvent>, GroundTruth)> {
    config.validate()?;
    let dim = config.latent_dim;
    let mut rng = rng_for(config.seed, &[stream::SYNTH_WORLD]);
    let centroids: Vec<Vec<f64>> = (0..config.n_stations)
        .map(|_| gaussian(&mut rng, dim, config.station_spread))
        .collect();
    let mut songs = Vec::with_capacity(config.n_songs);
    let mut song_station = Vec::with_capacity(config.n_songs);
    for j in 0..config.n_songs {
        let k = j % config.n_stations;
        // Resample until the song is nearest its own centroid; after enough
        // misses shrink the offset, which always terminates.
        let mut spread = config.song_spread;
        let song = loop {
            let mut found = None;
            for _ in 0..32 {
                let off = gaussian(&mut rng, dim, spread);
                let v: Vec<f64> = centroids[k].iter().zip(&off).map(|(c, o)| c + o).collect();
                if nearest(&centroids, &v) == k {
                    found = Some(v);
                    break;
                }
            }
            match found {
                Some(v) => break v,
                None => spread *= 0.5,
            }
        };
        songs.push(song);
        song_station.push(k);
    }
    let appeal: Vec<f64> = (0..config.n_songs)
        .map(|_| config.appeal_spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let users: Vec<Vec<f64>> = (0..config.n_users)
        .map(|_| gaussian(&mut rng, dim, 1.0 / (dim as f64).sqrt()))
        .collect();
    let n_skip_only = (config.skip_only_fraction * config.n_users as f64).round() as usize;
    let mut order: Vec<usize> = (0..config.n_users).collect();
    order.shuffle(&mut rng);
    let mut skip_only = vec![false; config.n_users];
    for &u in &order[..n_skip_only] {
        skip_only[u] = true;
    }
    let mut station_songs = vec![Vec::new(); config.n_stations];
    for (j, &k) in song_station.iter().enumerate() {
        station_songs[k].push(j);
    }

    let mut truth = GroundTruth {
        users,
        songs,
        centroids,
        song_station,
        appeal,
        thresholds: vec![0.0; config.n_users],
        skip_only,
    };
    // Songs are listed in popularity order within their station (generation
    // order is already random), so rank weights apply directly.
    let popularity: Vec<Vec<f64>> = station_songs
        .iter()
        .map(|songs| {
            (0..songs.len())
                .map(|r| ((r + 1) as f64).powf(-config.popularity_exponent))
                .collect()
        })
        .collect();
    let per_user: Vec<(f64, Vec<SynthEvent>)> = (0..config.n_users)
        .into_par_iter()
        .map(|u| simulate_user(config, &truth, &station_songs, &popularity, u))
        .collect();
    let mut events = Vec::new();
    for (u, (tau, evs)) in per_user.into_iter().enumerate() {
        truth.thresholds[u] = tau;
        events.extend(evs);
    }
    Ok((events, truth))
}

fn simulate_user(
    config: &SynthConfig,
    truth: &GroundTruth,
    station_songs: &[Vec<usize>],
    popularity: &[Vec<f64>],
    u: usize,
) -> (f64, Vec<SynthEvent>) {
    let mut rng = rng_for(config.seed, &[stream::SYNTH_USER, u as u64]);
    let taste = &truth.users[u];

    // Habitual stations: sampled without replacement with softmax weights
    // on the affinity to each station centroid.
    let mut weights: Vec<f64> = truth.centroids.iter().map(|c| dot(taste, c).exp()).collect();
    let mut habits = Vec::with_capacity(config.stations_per_user);
    for _ in 0..config.stations_per_user {
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if *w > 0.0 && r < *w {
                pick = k;
                break;
            }
            r -= w;
        }
        habits.push(pick);
        weights[pick] = 0.0;
    }

    let mut prefs: Vec<f64> = habits
        .iter()
        .flat_map(|&k| station_songs[k].iter().map(|&j| truth.preference(u, j)))
        .collect();
    prefs.sort_by(f64::total_cmp);
    let tau = prefs[((prefs.len() as f64 * config.like_quantile) as usize).min(prefs.len() - 1)];

    let exposure: Vec<WeightedIndex<f64>> = habits
        .iter()
        .map(|&k| {
            let songs = &station_songs[k];
            let prefs: Vec<f64> = songs.iter().map(|&j| truth.preference(u, j)).collect();
            let top = prefs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w = popularity[k]
                .iter()
                .zip(&prefs)
                .map(|(p, x)| p * (config.exposure_sharpness * (x - top)).exp());
            WeightedIndex::new(w).expect("stations are non-empty")
        })
        .collect();

    let n_sessions = rng.random_range(config.sessions_min..=config.sessions_max);
    let span = config.span_days * SECONDS_PER_DAY;
    let mut starts: Vec<i64> = (0..n_sessions)
        .map(|_| config.start_timestamp + rng.random_range(0..span))
        .collect();
    starts.sort_unstable();

    let skip_only = truth.skip_only[u];
    let mut liked_heard: Vec<usize> = Vec::new();
    let mut events = Vec::new();
    for start in starts {
        let h = rng.random_range(0..habits.len());
        let k = habits[h];
        let pool = &station_songs[k];
        let draw = &exposure[h];
        let mut ts = start;
        for _ in 0..rng.random_range(config.exposures_min..=config.exposures_max) {
            ts += rng.random_range(180..=240);
            let noisy = |rng: &mut Rng, j: usize| {
                truth.preference(u, j) + config.affinity_noise * Distribution::<f64>::sample(&StandardNormal, rng)
            };
            let mut emit = |song: usize, feedback: FeedbackType| {
                let feedback = if skip_only && feedback == FeedbackType::Up {
                    FeedbackType::Skip
                } else {
                    feedback
                };
                events.push(SynthEvent {
                    user: u,
                    song,
                    station: k,
                    feedback,
                    timestamp: ts,
                });
            };
            if rng.random::<f64>() < config.skip_rate {
                let dislike = rng.random::<f64>() < config.skip_dislike_mix;
                let mut song = None;
                if !dislike {
                    let own: Vec<usize> = liked_heard
                        .iter()
                        .copied()
                        .filter(|&j| truth.song_station[j] == k)
                        .collect();
                    song = own.choose(&mut rng).copied();
                }
                for _ in 0..64 {
                    if song.is_some() {
                        break;
                    }
                    let j = pool[draw.sample(&mut rng)];
                    if (noisy(&mut rng, j) > tau) != dislike {
                        song = Some(j);
                    }
                }
                if let Some(j) = song {
                    emit(j, FeedbackType::Skip);
                }
                continue;
            }
            let j = pool[draw.sample(&mut rng)];
            if noisy(&mut rng, j) > tau {
                if rng.random::<f64>() < config.false_negative_rate {
                    emit(j, FeedbackType::Skip);
                } else if rng.random::<f64>() < config.up_rate {
                    emit(j, FeedbackType::Up);
                    liked_heard.push(j);
                }
            } else if rng.random::<f64>() < config.down_rate {
                emit(j, FeedbackType::Down);
            }
        }
    }

    // Every user emits something; every user outside the skip-only cohort
    // has at least one `up` (their favourite habitual song, at their first
    // timestamp).
    let needs_up = !skip_only && !events.iter().any(|e| e.feedback == FeedbackType::Up);
    if events.is_empty() || needs_up {
        let k = habits[0];
        let best = station_songs[k]
            .iter()
            .copied()
            .max_by(|&a, &b| {
                truth
                    .preference(u, a)
                    .total_cmp(&truth.preference(u, b))
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        let ts = events.first().map_or(config.start_timestamp, |e| e.timestamp - 60);
        let feedback = if skip_only {
            FeedbackType::Skip
        } else {
            FeedbackType::Up
        };
        events.insert(
            0,
            SynthEvent {
                user: u,
                song: best,
                station: k,
                feedback,
                timestamp: ts,
            },
        );
    }
    (tau, events)
}

/// Descriptor matching [`write_events`] output.
pub fn descriptor() -> DatasetDescriptor {
    DatasetDescriptor {
        name: "synthetic".into(),
        ..DatasetDescriptor::default()
    }
}

/// Writes the standard ingestion format with a header line.
pub fn write_events<W: Write>(mut w: W, events: &[SynthEvent]) -> std::io::Result<()> {
    let mut line = String::new();
    writeln!(w, "user,song,station,feedback,timestamp")?;
    for e in events {
        line.clear();
        let _ = writeln!(
            line,
            "u{},s{},st{},{},{}",
            e.user,
            e.song,
            e.station,
            e.feedback.as_str(),
            e.timestamp
        );
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Generated corpus after a round trip through the ingestion path.
pub struct SynthCorpus {
    pub events: Vec<FeedbackEvent>,
    pub catalog: Catalog,
    pub truth: GroundTruth,
}

/// Generates, serializes and ingests a corpus in memory.
pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    let (raw, truth) = generate(config)?;
    let mut text = Vec::new();
    write_events(&mut text, &raw).map_err(|e| Error::io("<memory>", e))?;
    let mut catalog = Catalog::default();
    // Intern every generated song so catalog ids cover unheard songs too.
    for j in 0..config.n_songs {
        catalog.song(&format!("s{j}"));
    }
    let (events, _) = ingest_reader(text.as_slice(), &descriptor(), &mut catalog)?;
    Ok(SynthCorpus { events, catalog, truth })
}

/// Per-user count of events of each feedback type, by generator index.
pub fn feedback_counts(events: &[SynthEvent]) -> HashMap<usize, [usize; 3]> {
    let mut m: HashMap<usize, [usize; 3]> = HashMap::new();
    for e in events {
        let slot = match e.feedback {
            FeedbackType::Up => 0,
            FeedbackType::Down => 1,
            _ => 2,
        };
        m.entry(e.user).or_default()[slot] += 1;
    }
    m
}
