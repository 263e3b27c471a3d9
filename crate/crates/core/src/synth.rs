//! Synthetic rating corpora in the MovieLens-1M layout.
//!
//! Movie popularity follows a Zipf-Mandelbrot law, movies belong to taste
//! clusters, and each user prefers one cluster correlated with their
//! demographics. Every user rates at least `min_per_user` distinct movies and
//! the total number of ratings is hit exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::{normalize_stars, Catalog, ContentId, Dataset, Gender, Rating, UserProfile};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub users: usize,
    pub movies: usize,
    pub ratings: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Zipf-Mandelbrot exponent of movie popularity.
    pub zipf_exponent: f64,
    /// Zipf-Mandelbrot rank offset; flattens the head of the law.
    pub zipf_offset: f64,
    pub clusters: usize,
    /// Weight multiplier for movies in a user's preferred cluster.
    pub taste_boost: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    /// The headline shape of MovieLens-1M.
    fn default() -> Self {
        Self {
            users: 6040,
            movies: 3883,
            ratings: 1_000_209,
            min_per_user: 20,
            max_per_user: 2314,
            zipf_exponent: 1.1,
            zipf_offset: 60.0,
            clusters: 8,
            taste_boost: 3.0,
            seed: 20_030_601,
        }
    }
}

impl CorpusSpec {
    /// A small skewed corpus for quick experiments and tests.
    pub fn small() -> Self {
        Self {
            users: 400,
            movies: 200,
            ratings: 16_000,
            min_per_user: 20,
            max_per_user: 150,
            zipf_exponent: 1.0,
            zipf_offset: 5.0,
            clusters: 4,
            taste_boost: 3.0,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.movies == 0 {
            return Err(Error::Config("synthetic corpus needs users and movies".into()));
        }
        let cap = self.max_per_user.min(self.movies);
        if self.min_per_user > cap {
            return Err(Error::Config("min_per_user exceeds the per-user cap".into()));
        }
        if self.ratings < self.users * self.min_per_user || self.ratings > self.users * cap {
            return Err(Error::Config(format!(
                "{} ratings cannot be spread over {} users with {}..={} each",
                self.ratings, self.users, self.min_per_user, cap
            )));
        }
        if self.clusters == 0 {
            return Err(Error::Config("synthetic corpus needs at least one cluster".into()));
        }
        Ok(())
    }
}

const AGES: [(u8, f64); 7] = [
    (1, 222.0),
    (18, 1103.0),
    (25, 2096.0),
    (35, 1193.0),
    (45, 550.0),
    (50, 496.0),
    (56, 380.0),
];

fn pick_weighted<R: Rng + ?Sized, T: Copy>(rng: &mut R, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.random_range(0.0..total);
    for &(item, w) in items {
        if x < w {
            return item;
        }
        x -= w;
    }
    items[items.len() - 1].0
}

/// Per-user rating counts: at least `min`, at most `cap`, summing to `total`.
fn activity_counts<R: Rng + ?Sized>(rng: &mut R, spec: &CorpusSpec) -> Vec<usize> {
    let cap = spec.max_per_user.min(spec.movies);
    let lognormal = LogNormal::new(0.0, 0.9).expect("valid lognormal");
    let raw: Vec<f64> = (0..spec.users).map(|_| lognormal.sample(rng)).collect();
    let spare = (spec.ratings - spec.users * spec.min_per_user) as f64;
    let sum: f64 = raw.iter().sum();
    let mut counts: Vec<usize> = raw
        .iter()
        .map(|a| (spec.min_per_user + (a / sum * spare).floor() as usize).min(cap))
        .collect();
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..spec.users).collect();
    order.shuffle(rng);
    while assigned < spec.ratings {
        for &u in &order {
            if assigned == spec.ratings {
                break;
            }
            if counts[u] < cap {
                counts[u] += 1;
                assigned += 1;
            }
        }
    }
    counts
}

/// Builds the corpus in memory.
pub fn generate(spec: &CorpusSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Purpose::Corpus, 0);

    // Raw movie ids keep MovieLens-style gaps.
    let max_id = spec.movies + spec.movies / 56;
    let mut raw_ids: Vec<u32> = index::sample(&mut rng, max_id, spec.movies)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    raw_ids.sort_unstable();
    let catalog = Catalog::from_raw_ids(raw_ids.iter().copied());

    // Popularity rank -> dense content, so dense ids carry no popularity order.
    let mut by_rank: Vec<usize> = (0..spec.movies).collect();
    by_rank.shuffle(&mut rng);
    let mut popularity = vec![0.0; spec.movies];
    for (rank, &content) in by_rank.iter().enumerate() {
        popularity[content] = (rank as f64 + 1.0 + spec.zipf_offset).powf(-spec.zipf_exponent);
    }
    let cluster: Vec<usize> = (0..spec.movies).map(|_| rng.random_range(0..spec.clusters)).collect();
    let quality_law = Normal::new(3.6, 0.5).expect("valid normal");
    let quality: Vec<f64> = (0..spec.movies).map(|_| quality_law.sample(&mut rng)).collect();

    let mut users = BTreeMap::new();
    let mut preferred = Vec::with_capacity(spec.users);
    for u in 0..spec.users {
        let gender = if rng.random_bool(0.717) { Gender::Male } else { Gender::Female };
        let age = pick_weighted(&mut rng, &AGES);
        let occupation: u8 = rng.random_range(0..=20);
        let zip = format!("{:05}", rng.random_range(0..100_000u32));
        let age_rank = AGES.iter().position(|&(a, _)| a == age).unwrap_or(0);
        let demographic = (age_rank + 3 * (gender == Gender::Male) as usize + occupation as usize / 7)
            % spec.clusters;
        preferred.push(if rng.random_bool(0.7) {
            demographic
        } else {
            rng.random_range(0..spec.clusters)
        });
        users.insert(
            u as u32 + 1,
            UserProfile {
                gender,
                age,
                occupation,
                zip,
            },
        );
    }

    let counts = activity_counts(&mut rng, spec);
    let bias_law = Normal::new(0.0, 0.4).expect("valid normal");
    let noise_law = Normal::new(0.0, 0.9).expect("valid normal");
    let mut ratings = Vec::with_capacity(spec.ratings);
    for (u, &n) in counts.iter().enumerate() {
        let pref = preferred[u];
        let weight = |j: usize| {
            popularity[j] * if cluster[j] == pref { spec.taste_boost } else { 1.0 }
        };
        let picked = index::sample_weighted(&mut rng, spec.movies, weight, n)
            .map_err(|e| Error::Config(format!("weighted sampling failed: {e}")))?;
        let bias = bias_law.sample(&mut rng);
        let mut chosen: Vec<usize> = picked.into_iter().collect();
        chosen.sort_unstable();
        for j in chosen {
            let bonus = if cluster[j] == pref { 0.4 } else { 0.0 };
            let score = quality[j] + bias + bonus + noise_law.sample(&mut rng);
            let stars = score.round().clamp(1.0, 5.0) as u8;
            ratings.push(Rating {
                user: u as u32 + 1,
                content: ContentId(j),
                value: normalize_stars(stars),
            });
        }
    }
    Ok(Dataset {
        catalog,
        ratings,
        users,
    })
}

/// Writes `ratings.dat`, `users.dat` and `movies.dat` in MovieLens-1M layout.
pub fn write_movielens(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ratings = String::with_capacity(dataset.ratings.len() * 24);
    for (k, r) in dataset.ratings.iter().enumerate() {
        let stars = crate::dataset::denormalize(r.value);
        let _ = writeln!(
            ratings,
            "{}::{}::{}::{}",
            r.user,
            dataset.catalog.raw(r.content),
            stars,
            956_703_932 + k as u64
        );
    }
    let mut users = String::new();
    for (id, p) in &dataset.users {
        let g = match p.gender {
            Gender::Male => "M",
            Gender::Female => "F",
        };
        let _ = writeln!(users, "{}::{}::{}::{}::{}", id, g, p.age, p.occupation, p.zip);
    }
    let mut movies = String::new();
    for i in 0..dataset.catalog.len() {
        let raw = dataset.catalog.raw(ContentId(i));
        let _ = writeln!(movies, "{raw}::Movie {raw} (2000)::Drama");
    }
    for (name, body) in [("ratings.dat", ratings), ("users.dat", users), ("movies.dat", movies)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
