//! Popular-content prediction from reconstructed ratings: active VUs, their
//! nearest neighbors by cosine similarity, per-vehicle interest counts and
//! the RSU-level aggregate.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};

use crate::autoencoder::AeModel;
use crate::dataset::{ContentId, PersonalInfoMatrix, RatingMatrix};
use crate::error::{Error, Result};
use crate::mobility::VehicleId;

/// One vehicle's predicted interests, descending by count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterestSet {
    pub vehicle: VehicleId,
    pub contents: Vec<(ContentId, usize)>,
}

/// RSU-level popular contents, descending by count, ties by ascending id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopularContents {
    pub items: Vec<(ContentId, usize)>,
}

impl PopularContents {
    pub fn from_ids(ids: impl IntoIterator<Item = ContentId>) -> Self {
        Self {
            items: ids.into_iter().map(|c| (c, 1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<ContentId> {
        self.items.iter().map(|(c, _)| *c).collect()
    }

    /// Zero-based popularity rank of `content`.
    pub fn rank_of(&self, content: ContentId) -> Option<usize> {
        self.items.iter().position(|(c, _)| *c == content)
    }

    /// Comma-separated `content_id,count` lines for debugging dumps.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("content_id,count\n");
        for (c, n) in &self.items {
            s.push_str(&format!("{},{}\n", c.0, n));
        }
        s
    }
}

/// Row-wise reconstruction of `r` by the global model.
pub fn reconstruct(model: &AeModel, r: &RatingMatrix) -> Result<Array2<f64>> {
    if r.n_cols() != model.input_dim() {
        return Err(Error::dimension("rating matrix", model.input_dim(), r.n_cols()));
    }
    let (_, x_hat) = model.forward_batch(r.to_dense().view())?;
    Ok(x_hat)
}

/// Row indices of the `ceil(n / m)` VUs with the most nonzero ratings,
/// ties by ascending VU id.
pub fn select_active_vus(r: &RatingMatrix, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Config("popularity: m must be >= 1".into()));
    }
    let n = r.n_rows();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| {
        r.nonzero_count(b)
            .cmp(&r.nonzero_count(a))
            .then(r.users()[a].cmp(&r.users()[b]))
    });
    rows.truncate(n.div_ceil(m));
    Ok(rows)
}

pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dimension("cosine similarity", a.len(), b.len()));
    }
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("cosine similarity of a zero vector".into()));
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Reconstructed ratings with the personal-information columns appended.
pub fn combine(r_hat: &Array2<f64>, info: &PersonalInfoMatrix) -> Result<Array2<f64>> {
    if r_hat.nrows() != info.values.nrows() {
        return Err(Error::dimension("personal information rows", r_hat.nrows(), info.values.nrows()));
    }
    concatenate(Axis(1), &[r_hat.view(), info.values.view()])
        .map_err(|e| Error::Domain(format!("cannot combine matrices: {e}")))
}

/// The `k` rows most similar to row `query` of `h`, excluding the query.
/// Ties by ascending VU id; zero vectors count as similarity 0.
pub fn k_neighbors(query: usize, h: ArrayView2<f64>, users: &[u32], k: usize) -> Vec<usize> {
    let q = h.row(query);
    let mut degenerate = 0usize;
    let mut scored: Vec<(usize, f64)> = (0..h.nrows())
        .filter(|&j| j != query)
        .map(|j| {
            let s = cosine_similarity(q, h.row(j)).unwrap_or_else(|_| {
                degenerate += 1;
                0.0
            });
            (j, s)
        })
        .collect();
    if degenerate > 0 {
        warn!("{degenerate} zero-vector similarities treated as 0");
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(users[a.0].cmp(&users[b.0])));
    scored.truncate(k);
    scored.into_iter().map(|(j, _)| j).collect()
}

/// Top `f_c` entries of a count map, descending, ties by ascending id.
fn top_counts(counts: BTreeMap<ContentId, usize>, f_c: usize) -> Vec<(ContentId, usize)> {
    let mut items: Vec<(ContentId, usize)> = counts.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    items.truncate(f_c);
    items
}

/// A vehicle's interested contents: for every active VU take its `k`
/// neighbors in `[R_hat | info]`, then count per content the neighbors (each
/// neighbor once) holding a nonzero raw rating in `r`.
pub fn predict_interested(
    vehicle: VehicleId,
    r: &RatingMatrix,
    r_hat: &Array2<f64>,
    info: &PersonalInfoMatrix,
    m: usize,
    k: usize,
    f_c: usize,
) -> Result<InterestSet> {
    if r_hat.dim() != (r.n_rows(), r.n_cols()) {
        return Err(Error::dimension("reconstruction", r.n_rows() * r.n_cols(), r_hat.len()));
    }
    let active = select_active_vus(r, m)?;
    if active.is_empty() {
        return Ok(InterestSet {
            vehicle,
            contents: Vec::new(),
        });
    }
    let h = combine(r_hat, info)?;
    let neighbors: BTreeSet<usize> = active
        .iter()
        .flat_map(|&a| k_neighbors(a, h.view(), r.users(), k))
        .collect();
    let mut counts = BTreeMap::new();
    for n in neighbors {
        for &(j, v) in r.row_entries(n) {
            if v != 0.0 {
                *counts.entry(ContentId(j)).or_insert(0) += 1;
            }
        }
    }
    Ok(InterestSet {
        vehicle,
        contents: top_counts(counts, f_c),
    })
}

/// Sums counts across vehicles and keeps the `f_c` most popular.
pub fn aggregate_popular(sets: &[InterestSet], f_c: usize) -> PopularContents {
    let mut counts = BTreeMap::new();
    for s in sets {
        for &(c, n) in &s.contents {
            *counts.entry(c).or_insert(0) += n;
        }
    }
    PopularContents {
        items: top_counts(counts, f_c),
    }
}
