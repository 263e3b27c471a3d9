//! MovieLens-1M ingestion, per-vehicle partitioning and the rating /
//! personal-information matrices consumed by training and prediction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::{Array1, Array2, ArrayViewMut2};
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};

/// Dense content index into the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(pub usize);

/// Raw MovieLens user id; each one is a vehicle user (VU).
pub type UserId = u32;

/// Bijection between raw movie ids and dense content indices, ascending by
/// raw id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    raw_ids: Vec<u32>,
    index: HashMap<u32, usize>,
}

impl Catalog {
    pub fn from_raw_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let raw_ids: Vec<u32> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = raw_ids.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        Self { raw_ids, index }
    }

    pub fn len(&self) -> usize {
        self.raw_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_ids.is_empty()
    }

    pub fn dense(&self, raw: u32) -> Option<ContentId> {
        self.index.get(&raw).copied().map(ContentId)
    }

    pub fn raw(&self, id: ContentId) -> u32 {
        self.raw_ids[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: UserId,
    pub content: ContentId,
    /// Star rating scaled to [0, 1].
    pub value: f64,
}

/// Maps 1..=5 stars onto [0, 1].
pub fn normalize_stars(stars: u8) -> f64 {
    stars as f64 / 5.0
}

pub fn denormalize(value: f64) -> u8 {
    (value * 5.0).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub gender: Gender,
    /// MovieLens age bracket code (1, 18, 25, 35, 45, 50, 56).
    pub age: u8,
    /// Occupation code 0..=20.
    pub occupation: u8,
    pub zip: String,
}

const AGE_BRACKETS: [u8; 7] = [1, 18, 25, 35, 45, 50, 56];

impl UserProfile {
    /// Numeric feature vector: gender, age ordinal, occupation, leading zip
    /// digit, each scaled to [0, 1].
    pub fn features(&self) -> [f64; 4] {
        let gender = match self.gender {
            Gender::Female => 0.0,
            Gender::Male => 1.0,
        };
        let age = AGE_BRACKETS
            .iter()
            .position(|&a| a == self.age)
            .map(|i| i as f64 / (AGE_BRACKETS.len() - 1) as f64)
            .unwrap_or(0.0);
        let occupation = self.occupation.min(20) as f64 / 20.0;
        let zip = self
            .zip
            .chars()
            .next()
            .and_then(|c| c.to_digit(10))
            .map(|d| d as f64 / 9.0)
            .unwrap_or(0.0);
        [gender, age, occupation, zip]
    }
}

pub const PROFILE_FEATURES: usize = 4;

/// A loaded rating corpus.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub catalog: Catalog,
    pub ratings: Vec<Rating>,
    pub users: BTreeMap<UserId, UserProfile>,
}

impl Dataset {
    pub fn user_count(&self) -> usize {
        self.ratings.iter().map(|r| r.user).collect::<BTreeSet<_>>().len()
    }

    /// Restricts the corpus to the `cap` most-rated contents (ties by
    /// ascending raw id) and re-indexes the catalog densely.
    pub fn capped(&self, cap: usize) -> Dataset {
        if cap >= self.catalog.len() {
            return self.clone();
        }
        let mut counts = vec![0usize; self.catalog.len()];
        for r in &self.ratings {
            counts[r.content.0] += 1;
        }
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let kept: Vec<u32> = order[..cap].iter().map(|&i| self.catalog.raw_ids[i]).collect();
        let catalog = Catalog::from_raw_ids(kept);
        let ratings = self
            .ratings
            .iter()
            .filter_map(|r| {
                let raw = self.catalog.raw(r.content);
                catalog.dense(raw).map(|content| Rating { content, ..*r })
            })
            .collect();
        Dataset {
            catalog,
            ratings,
            users: self.users.clone(),
        }
    }
}

fn read_latin1_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .map(|line| {
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            line.iter().map(|&b| b as char).collect()
        })
        .collect())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, raw: &str, name: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid {name} `{raw}`")))
}

fn parse_users(path: &Path) -> Result<BTreeMap<UserId, UserProfile>> {
    let mut users = BTreeMap::new();
    for (i, line) in read_latin1_lines(path)?.iter().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split("::").collect();
        if parts.len() != 5 {
            return Err(parse_error(path, n, format!("expected 5 fields, found {}", parts.len())));
        }
        let id: UserId = field(path, n, parts[0], "user id")?;
        let gender = match parts[1].trim() {
            "M" => Gender::Male,
            "F" => Gender::Female,
            other => return Err(parse_error(path, n, format!("invalid gender `{other}`"))),
        };
        let profile = UserProfile {
            gender,
            age: field(path, n, parts[2], "age")?,
            occupation: field(path, n, parts[3], "occupation")?,
            zip: parts[4].trim().to_string(),
        };
        users.insert(id, profile);
    }
    Ok(users)
}

fn parse_movie_ids(path: &Path) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    for (i, line) in read_latin1_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw = line.split("::").next().unwrap_or_default();
        ids.push(field(path, i + 1, raw, "movie id")?);
    }
    Ok(ids)
}

fn parse_ratings(path: &Path) -> Result<Vec<(UserId, u32, u8)>> {
    let mut out = Vec::new();
    for (i, line) in read_latin1_lines(path)?.iter().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split("::").collect();
        if parts.len() != 4 {
            return Err(parse_error(path, n, format!("expected 4 fields, found {}", parts.len())));
        }
        let user: UserId = field(path, n, parts[0], "user id")?;
        let movie: u32 = field(path, n, parts[1], "movie id")?;
        let stars: u8 = field(path, n, parts[2], "rating")?;
        let _timestamp: u64 = field(path, n, parts[3], "timestamp")?;
        if !(1..=5).contains(&stars) {
            return Err(parse_error(path, n, format!("rating {stars} outside 1..=5")));
        }
        out.push((user, movie, stars));
    }
    Ok(out)
}

/// Loads `ratings.dat` and `users.dat`. The catalog spans the movies that
/// appear in the ratings.
pub fn load_movielens(ratings_path: &Path, users_path: &Path) -> Result<Dataset> {
    load_with_catalog(ratings_path, users_path, None)
}

/// Loads a MovieLens-1M directory. When `movies.dat` is present the catalog
/// covers every listed movie, rated or not.
pub fn load_movielens_dir(dir: &Path) -> Result<Dataset> {
    let movies = dir.join("movies.dat");
    let movie_ids = if movies.exists() {
        Some(parse_movie_ids(&movies)?)
    } else {
        None
    };
    load_with_catalog(&dir.join("ratings.dat"), &dir.join("users.dat"), movie_ids)
}

fn load_with_catalog(
    ratings_path: &Path,
    users_path: &Path,
    movie_ids: Option<Vec<u32>>,
) -> Result<Dataset> {
    let users = parse_users(users_path)?;
    let raw = parse_ratings(ratings_path)?;
    let catalog = match movie_ids {
        Some(ids) => Catalog::from_raw_ids(ids),
        None => Catalog::from_raw_ids(raw.iter().map(|&(_, m, _)| m)),
    };
    let mut ratings = Vec::with_capacity(raw.len());
    for (line, (user, movie, stars)) in raw.into_iter().enumerate() {
        let content = catalog.dense(movie).ok_or_else(|| {
            parse_error(
                ratings_path,
                line + 1,
                format!("movie {movie} missing from catalog"),
            )
        })?;
        ratings.push(Rating {
            user,
            content,
            value: normalize_stars(stars),
        });
    }
    Ok(Dataset {
        catalog,
        ratings,
        users,
    })
}

/// VU-by-content rating matrix. Stored sparsely; semantics are dense with
/// unrated entries equal to zero.
#[derive(Debug, Clone, Default)]
pub struct RatingMatrix {
    users: Vec<UserId>,
    rows: Vec<Vec<(usize, f64)>>,
    cols: usize,
}

impl RatingMatrix {
    /// One row per distinct user in `records`, ascending by user id.
    pub fn from_records(records: &[Rating], cols: usize) -> Self {
        let mut grouped: BTreeMap<UserId, BTreeMap<usize, f64>> = BTreeMap::new();
        for r in records {
            grouped.entry(r.user).or_default().insert(r.content.0, r.value);
        }
        let (users, rows) = grouped
            .into_iter()
            .map(|(u, row)| (u, row.into_iter().collect()))
            .unzip();
        Self { users, rows, cols }
    }

    pub fn from_dense(users: Vec<UserId>, dense: &Array2<f64>) -> Self {
        assert_eq!(users.len(), dense.nrows());
        let rows = dense
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self {
            users,
            rows,
            cols: dense.ncols(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn nonzero_count(&self, row: usize) -> usize {
        self.rows[row].iter().filter(|(_, v)| *v != 0.0).count()
    }

    pub fn row_entries(&self, row: usize) -> &[(usize, f64)] {
        &self.rows[row]
    }

    pub fn dense_row(&self, row: usize) -> Array1<f64> {
        let mut out = Array1::zeros(self.cols);
        for &(j, v) in &self.rows[row] {
            out[j] = v;
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), self.cols));
        let all: Vec<usize> = (0..self.rows.len()).collect();
        self.fill_rows(&all, out.view_mut());
        out
    }

    /// Writes the selected rows densely into `out` (len(rows) x cols).
    pub fn fill_rows(&self, rows: &[usize], mut out: ArrayViewMut2<f64>) {
        out.fill(0.0);
        for (k, &r) in rows.iter().enumerate() {
            for &(j, v) in &self.rows[r] {
                out[[k, j]] = v;
            }
        }
    }
}

/// Personal-information rows aligned with a rating matrix.
#[derive(Debug, Clone)]
pub struct PersonalInfoMatrix {
    pub users: Vec<UserId>,
    pub values: Array2<f64>,
}

impl PersonalInfoMatrix {
    pub fn for_users(users: &[UserId], profiles: &BTreeMap<UserId, UserProfile>) -> Self {
        let mut values = Array2::zeros((users.len(), PROFILE_FEATURES));
        for (i, u) in users.iter().enumerate() {
            match profiles.get(u) {
                Some(p) => {
                    for (j, f) in p.features().into_iter().enumerate() {
                        values[[i, j]] = f;
                    }
                }
                None => warn!("no profile for VU {u}; using zero features"),
            }
        }
        Self {
            users: users.to_vec(),
            values,
        }
    }
}

/// One vehicle's share of the corpus before the train/test split.
#[derive(Debug, Clone, Default)]
pub struct Partition {
    pub vu_ids: Vec<UserId>,
    pub records: Vec<Rating>,
}

/// Randomly splits the VUs into `n_vehicles` groups whose sizes differ by at
/// most one; each group carries every record of its VUs.
pub fn partition<R: Rng + ?Sized>(
    records: &[Rating],
    n_vehicles: usize,
    rng: &mut R,
) -> Result<Vec<Partition>> {
    if n_vehicles == 0 {
        return Err(Error::Config("partition count must be at least 1".into()));
    }
    let mut users: Vec<UserId> = records.iter().map(|r| r.user).collect::<BTreeSet<_>>().into_iter().collect();
    if n_vehicles > users.len() {
        return Err(Error::Config(format!(
            "{n_vehicles} partitions requested for {} VUs",
            users.len()
        )));
    }
    users.shuffle(rng);
    let mut slot_of = HashMap::with_capacity(users.len());
    let mut parts = vec![Partition::default(); n_vehicles];
    for (i, u) in users.into_iter().enumerate() {
        slot_of.insert(u, i % n_vehicles);
        parts[i % n_vehicles].vu_ids.push(u);
    }
    for r in records {
        parts[slot_of[&r.user]].records.push(*r);
    }
    for p in &mut parts {
        p.vu_ids.sort_unstable();
    }
    Ok(parts)
}

/// A vehicle's private data after the train/test split, with the matrices
/// derived from it.
#[derive(Debug, Clone)]
pub struct LocalData {
    pub vu_ids: Vec<UserId>,
    pub train: Vec<Rating>,
    pub test: Vec<Rating>,
    /// Training rows, one per VU with training records.
    pub train_matrix: RatingMatrix,
    /// Rows built from the testing set; input to popularity prediction.
    pub test_matrix: RatingMatrix,
    pub test_info: PersonalInfoMatrix,
    /// Distinct contents of the testing set, ascending.
    pub test_contents: Vec<ContentId>,
}

impl LocalData {
    pub fn new(
        vu_ids: Vec<UserId>,
        train: Vec<Rating>,
        test: Vec<Rating>,
        catalog_size: usize,
        profiles: &BTreeMap<UserId, UserProfile>,
    ) -> Self {
        let train_matrix = RatingMatrix::from_records(&train, catalog_size);
        let test_matrix = RatingMatrix::from_records(&test, catalog_size);
        let test_info = PersonalInfoMatrix::for_users(test_matrix.users(), profiles);
        let test_contents = test
            .iter()
            .map(|r| r.content)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self {
            vu_ids,
            train,
            test,
            train_matrix,
            test_matrix,
            test_info,
            test_contents,
        }
    }

    /// Number of training records, the `d_i` of the aggregation weights.
    pub fn data_size(&self) -> usize {
        self.train.len()
    }
}

/// Exact split: `floor(train_frac * n)` records go to training, chosen
/// uniformly at random; the rest form the testing set.
pub fn split_train_test<R: Rng + ?Sized>(
    part: &Partition,
    train_frac: f64,
    catalog_size: usize,
    profiles: &BTreeMap<UserId, UserProfile>,
    rng: &mut R,
) -> Result<LocalData> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let n = part.records.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "cannot split {n} record(s) into train and test"
        )));
    }
    // Guard against 0.998 * 1000 evaluating to 997.999...
    let n_train = ((train_frac * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let by_key = |a: &Rating, b: &Rating| a.user.cmp(&b.user).then(a.content.cmp(&b.content));
    let mut train: Vec<Rating> = order[..n_train].iter().map(|&i| part.records[i]).collect();
    let mut test: Vec<Rating> = order[n_train..].iter().map(|&i| part.records[i]).collect();
    train.sort_by(by_key);
    test.sort_by(by_key);
    Ok(LocalData::new(part.vu_ids.clone(), train, test, catalog_size, profiles))
}

/// Draws `min(f, |distinct test contents|)` distinct contents uniformly from
/// the vehicle's testing set.
pub fn generate_requests<R: Rng + ?Sized>(
    local: &LocalData,
    rng: &mut R,
    f_per_vehicle: usize,
) -> Vec<ContentId> {
    let pool = &local.test_contents;
    if pool.is_empty() {
        if f_per_vehicle > 0 {
            warn!("vehicle has an empty testing set; no requests generated");
        }
        return Vec::new();
    }
    let k = f_per_vehicle.min(pool.len());
    index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A MovieLens-1M directory.
    MovieLens(PathBuf),
    /// The built-in synthetic corpus.
    Synthetic(crate::synth::CorpusSpec),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn records(users: u32, per_user: usize) -> Vec<Rating> {
        (1..=users)
            .flat_map(|u| {
                (0..per_user).map(move |c| Rating {
                    user: u,
                    content: ContentId(c),
                    value: 0.8,
                })
            })
            .collect()
    }

    #[test]
    fn parses_movielens_format() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(
            dir.path(),
            "ratings.dat",
            "1::1193::5::978300760\r\n1::661::3::978302109\n2::1193::1::978298413\n",
        );
        let u = write(dir.path(), "users.dat", "1::F::1::10::48067\n2::M::56::16::70072\n");
        let ds = load_movielens(&r, &u).unwrap();
        assert_eq!(ds.ratings.len(), 3);
        assert_eq!(ds.catalog.len(), 2);
        assert_eq!(ds.user_count(), 2);
        assert_eq!(ds.catalog.raw(ContentId(0)), 661);
        assert_eq!(ds.ratings[0].value, 1.0);
        assert!((ds.ratings[1].value - 0.6).abs() < 1e-15);
        assert_eq!(ds.users[&2].gender, Gender::Male);
        assert_eq!(ds.users[&1].features(), [0.0, 0.0, 0.5, 4.0 / 9.0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "ratings.dat", "1::1::5::1\n1::2::x::1\n");
        let u = write(dir.path(), "users.dat", "1::F::1::10::48067\n");
        match load_movielens(&r, &u) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let r = write(dir.path(), "ratings.dat", "1::1::6::1\n");
        assert!(matches!(load_movielens(&r, &u), Err(Error::Parse { line: 1, .. })));
        let missing = dir.path().join("nope.dat");
        assert!(matches!(load_movielens(&missing, &u), Err(Error::Io { .. })));
    }

    #[test]
    fn movies_file_extends_catalog() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "ratings.dat", "1::5::4::1\n");
        write(dir.path(), "users.dat", "1::F::1::10::48067\n");
        write(dir.path(), "movies.dat", "1::Toy Story (1995)::Animation\n5::Heat (1995)::Action\n9::X::Y\n");
        let ds = load_movielens_dir(dir.path()).unwrap();
        assert_eq!(ds.catalog.len(), 3);
        assert_eq!(ds.ratings[0].content, ContentId(1));
    }

    #[test]
    fn normalization_round_trips() {
        for s in 1..=5u8 {
            assert_eq!(denormalize(normalize_stars(s)), s);
        }
        assert_eq!(normalize_stars(5), 1.0);
    }

    #[test]
    fn capping_keeps_most_rated() {
        let mut ds = Dataset {
            catalog: Catalog::from_raw_ids([10, 20, 30]),
            ..Default::default()
        };
        for (u, c) in [(1, 2), (2, 2), (3, 2), (1, 0), (2, 0), (1, 1)] {
            ds.ratings.push(Rating {
                user: u,
                content: ContentId(c),
                value: 0.2,
            });
        }
        let capped = ds.capped(2);
        assert_eq!(capped.catalog.len(), 2);
        assert_eq!(capped.catalog.raw(ContentId(0)), 10);
        assert_eq!(capped.catalog.raw(ContentId(1)), 30);
        assert_eq!(capped.ratings.len(), 5);
    }

    #[test]
    fn partition_is_balanced_set_partition() {
        let recs = records(10, 3);
        let parts = partition(&recs, 4, &mut stream(1, Purpose::Partition, 0)).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.vu_ids.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<UserId> = parts.iter().flat_map(|p| p.vu_ids.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (1..=10).collect::<Vec<_>>());
        assert_eq!(parts.iter().map(|p| p.records.len()).sum::<usize>(), 30);
        for p in &parts {
            assert!(p.records.iter().all(|r| p.vu_ids.contains(&r.user)));
        }
        let again = partition(&recs, 4, &mut stream(1, Purpose::Partition, 0)).unwrap();
        for (a, b) in parts.iter().zip(&again) {
            assert_eq!(a.vu_ids, b.vu_ids);
        }
        let single = partition(&recs, 1, &mut stream(1, Purpose::Partition, 0)).unwrap();
        assert_eq!(single[0].vu_ids.len(), 10);
        assert!(partition(&recs, 11, &mut stream(1, Purpose::Partition, 0)).is_err());
    }

    #[test]
    fn split_uses_floor_arithmetic() {
        let part = Partition {
            vu_ids: (1..=100).collect(),
            records: records(100, 10),
        };
        let profiles = BTreeMap::new();
        let local = split_train_test(&part, 0.998, 10, &profiles, &mut stream(1, Purpose::Split, 0)).unwrap();
        assert_eq!((local.train.len(), local.test.len()), (998, 2));
        let mut all: Vec<(UserId, ContentId)> =
            local.train.iter().chain(&local.test).map(|r| (r.user, r.content)).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 1000);

        let tiny = Partition {
            vu_ids: vec![1],
            records: records(1, 2),
        };
        let local = split_train_test(&tiny, 0.5, 2, &profiles, &mut stream(1, Purpose::Split, 0)).unwrap();
        assert_eq!((local.train.len(), local.test.len()), (1, 1));

        let one = Partition {
            vu_ids: vec![1],
            records: records(1, 1),
        };
        assert!(matches!(
            split_train_test(&one, 0.5, 1, &profiles, &mut stream(1, Purpose::Split, 0)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn requests_are_capped_distinct_and_from_test_set() {
        let test: Vec<Rating> = [3usize, 7, 9, 7]
            .iter()
            .enumerate()
            .map(|(u, &c)| Rating {
                user: u as u32,
                content: ContentId(c),
                value: 1.0,
            })
            .collect();
        let local = LocalData::new(vec![0, 1, 2, 3], vec![], test, 10, &BTreeMap::new());
        let mut rng = stream(1, Purpose::Requests, 0);
        let mut req = generate_requests(&local, &mut rng, 10);
        req.sort();
        assert_eq!(req, vec![ContentId(3), ContentId(7), ContentId(9)]);
        assert!(generate_requests(&local, &mut rng, 0).is_empty());
        for _ in 0..50 {
            let r = generate_requests(&local, &mut rng, 2);
            assert_eq!(r.len(), 2);
            assert_ne!(r[0], r[1]);
            assert!(r.iter().all(|c| local.test_contents.contains(c)));
        }
        let empty = LocalData::new(vec![], vec![], vec![], 10, &BTreeMap::new());
        assert!(generate_requests(&empty, &mut rng, 5).is_empty());
    }

    #[test]
    fn rating_matrix_dense_view() {
        let recs = vec![
            Rating { user: 9, content: ContentId(1), value: 0.4 },
            Rating { user: 2, content: ContentId(0), value: 1.0 },
            Rating { user: 9, content: ContentId(2), value: 0.2 },
        ];
        let m = RatingMatrix::from_records(&recs, 3);
        assert_eq!(m.users(), &[2, 9]);
        assert_eq!(m.nonzero_count(1), 2);
        let d = m.to_dense();
        assert_eq!(d, ndarray::arr2(&[[1.0, 0.0, 0.0], [0.0, 0.4, 0.2]]));
        let back = RatingMatrix::from_dense(vec![2, 9], &d);
        assert_eq!(back.to_dense(), d);
    }
}
