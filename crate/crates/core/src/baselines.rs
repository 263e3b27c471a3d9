//! Comparison placement schemes: random, c-epsilon-greedy, Thompson sampling
//! and random placement from the predicted popular contents.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::dataset::ContentId;
use crate::drl::{random_from_popular, CacheState};
use crate::error::{Error, Result};
use crate::popularity::PopularContents;

/// Neighbor cache: `c` uniform draws from the catalog minus `local`.
fn neighbor_from_rest<R: Rng + ?Sized>(
    local: &[ContentId],
    catalog_size: usize,
    c: usize,
    rng: &mut R,
) -> Vec<ContentId> {
    let taken: BTreeSet<ContentId> = local.iter().copied().collect();
    let rest: Vec<ContentId> = (0..catalog_size).map(ContentId).filter(|x| !taken.contains(x)).collect();
    index::sample(rng, rest.len(), c.min(rest.len()))
        .into_iter()
        .map(|i| rest[i])
        .collect()
}

fn check_catalog(catalog_size: usize, c: usize) -> Result<()> {
    if c == 0 || catalog_size < 2 * c {
        return Err(Error::Config(format!(
            "capacity {c} needs a catalog of at least {} contents, got {catalog_size}",
            2 * c
        )));
    }
    Ok(())
}

/// `c` uniform contents locally, `c` more from the remainder next door.
pub fn random_policy<R: Rng + ?Sized>(catalog_size: usize, c: usize, rng: &mut R) -> Result<CacheState> {
    check_catalog(catalog_size, c)?;
    let local: Vec<ContentId> = index::sample(rng, catalog_size, c).into_iter().map(ContentId).collect();
    let neighbor = neighbor_from_rest(&local, catalog_size, c, rng);
    Ok(CacheState { local, neighbor })
}

/// Caches the most requested contents so far, exploring with probability
/// `eps`.
#[derive(Debug, Clone)]
pub struct CEpsGreedy {
    pub counts: Vec<u64>,
    pub eps: f64,
}

impl CEpsGreedy {
    pub fn new(catalog_size: usize, eps: f64) -> Self {
        Self {
            counts: vec![0; catalog_size],
            eps,
        }
    }

    /// Returns the placement and whether this round explored.
    pub fn place<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> Result<(CacheState, bool)> {
        let n = self.counts.len();
        check_catalog(n, c)?;
        if self.eps > 0.0 && rng.random::<f64>() < self.eps {
            return Ok((random_policy(n, c, rng)?, true));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        let local: Vec<ContentId> = order[..c].iter().map(|&i| ContentId(i)).collect();
        let neighbor = neighbor_from_rest(&local, n, c, rng);
        Ok((CacheState { local, neighbor }, false))
    }

    /// Adds this round's requests to the cumulative counts.
    pub fn observe(&mut self, requests: &[ContentId]) {
        for r in requests {
            self.counts[r.0] += 1;
        }
    }
}

/// Per-content Beta posteriors over "a cached copy gets requested".
#[derive(Debug, Clone)]
pub struct ThompsonSampling {
    pub hits: Vec<u64>,
    pub misses: Vec<u64>,
}

impl ThompsonSampling {
    pub fn new(catalog_size: usize) -> Self {
        Self {
            hits: vec![0; catalog_size],
            misses: vec![0; catalog_size],
        }
    }

    /// Samples every posterior and caches the `c` largest draws.
    pub fn place<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> Result<CacheState> {
        let n = self.hits.len();
        check_catalog(n, c)?;
        let draws: Vec<f64> = (0..n)
            .map(|i| {
                Beta::new(self.hits[i] as f64 + 1.0, self.misses[i] as f64 + 1.0)
                    .expect("positive parameters")
                    .sample(rng)
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| draws[b].total_cmp(&draws[a]).then(a.cmp(&b)));
        let local: Vec<ContentId> = order[..c].iter().map(|&i| ContentId(i)).collect();
        let neighbor = neighbor_from_rest(&local, n, c, rng);
        Ok(CacheState { local, neighbor })
    }

    /// Each locally cached content scores a hit if requested at least once
    /// this round and a miss otherwise.
    pub fn observe(&mut self, local: &[ContentId], requests: &[ContentId]) {
        let requested: BTreeSet<ContentId> = requests.iter().copied().collect();
        for c in local {
            if requested.contains(c) {
                self.hits[c.0] += 1;
            } else {
                self.misses[c.0] += 1;
            }
        }
    }
}

/// Random placement restricted to the predicted popular contents.
pub fn cafr_no_drl<R: Rng + ?Sized>(
    popular: &PopularContents,
    c: usize,
    catalog_size: usize,
    rng: &mut R,
) -> Result<CacheState> {
    check_catalog(catalog_size, c)?;
    Ok(random_from_popular(popular, c, catalog_size, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand_distr::Zipf;

    #[test]
    fn random_policy_examples() {
        let mut rng = stream(1, Purpose::Placement, 0);
        let cs = random_policy(10, 5, &mut rng).unwrap();
        let all: BTreeSet<_> = cs.local.iter().chain(&cs.neighbor).collect();
        assert_eq!(all.len(), 10);
        cs.check(5, None).unwrap();
        let a = random_policy(50, 5, &mut stream(9, Purpose::Placement, 0)).unwrap();
        let b = random_policy(50, 5, &mut stream(9, Purpose::Placement, 0)).unwrap();
        assert_eq!(a, b);
        assert!(random_policy(9, 5, &mut rng).is_err());
    }

    #[test]
    fn random_policy_is_uniform() {
        let (n, c, draws) = (20usize, 5usize, 10_000usize);
        let mut rng = stream(2, Purpose::Placement, 0);
        let mut freq = vec![0usize; n];
        for _ in 0..draws {
            for x in random_policy(n, c, &mut rng).unwrap().local {
                freq[x.0] += 1;
            }
        }
        let p = c as f64 / n as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for f in freq {
            assert!((f as f64 - draws as f64 * p).abs() < 3.5 * sd, "{f}");
        }
    }

    #[test]
    fn greedy_takes_most_requested() {
        let mut g = CEpsGreedy::new(4, 0.0);
        g.observe(&[0, 0, 0, 0, 0, 1, 1, 1, 2].map(ContentId));
        let mut rng = stream(3, Purpose::Placement, 0);
        let (cs, explored) = g.place(2, &mut rng).unwrap();
        assert!(!explored);
        assert_eq!(cs.local, vec![ContentId(0), ContentId(1)]);
        cs.check(2, None).unwrap();
    }

    #[test]
    fn greedy_explores_at_rate_eps() {
        let g = CEpsGreedy::new(30, 0.1);
        let mut rng = stream(4, Purpose::Placement, 0);
        let explored = (0..10_000).filter(|_| g.place(3, &mut rng).unwrap().1).count();
        assert!((explored as f64 / 1e4 - 0.1).abs() < 0.01, "{explored}");
        let always = CEpsGreedy::new(30, 1.0);
        assert!((0..100).all(|_| always.place(3, &mut rng).unwrap().1));
    }

    #[test]
    fn thompson_prefers_hit_content() {
        let mut t = ThompsonSampling::new(2);
        t.hits[0] = 10;
        t.misses[1] = 10;
        let mut rng = stream(5, Purpose::Placement, 0);
        let wins = (0..10_000)
            .filter(|_| {
                let a = Beta::new(11.0, 1.0).unwrap().sample(&mut rng);
                let b = Beta::new(1.0, 11.0).unwrap().sample(&mut rng);
                a > b
            })
            .count();
        assert!(wins > 9_900);
        let mut ranked_first = 0;
        let mut big = ThompsonSampling::new(4);
        big.hits[0] = 10;
        big.misses[1] = 10;
        for _ in 0..10_000 {
            let cs = big.place(1, &mut rng).unwrap();
            ranked_first += (cs.local[0] != ContentId(1)) as usize;
        }
        assert!(ranked_first > 9_900);
    }

    #[test]
    fn thompson_update_counts() {
        let mut t = ThompsonSampling::new(5);
        t.observe(&[ContentId(0), ContentId(1)], &[ContentId(0), ContentId(0), ContentId(3)]);
        assert_eq!(t.hits, vec![1, 0, 0, 0, 0]);
        assert_eq!(t.misses, vec![0, 1, 0, 0, 0]);
    }

    #[test]
    fn fresh_thompson_is_uniform() {
        let t = ThompsonSampling::new(10);
        let mut rng = stream(6, Purpose::Placement, 0);
        let mut freq = [0usize; 10];
        for _ in 0..10_000 {
            freq[t.place(1, &mut rng).unwrap().local[0].0] += 1;
        }
        assert!(freq.iter().all(|&f| (f as f64 - 1000.0).abs() < 120.0), "{freq:?}");
    }

    #[test]
    fn cafr_without_drl_stays_in_popular() {
        let mut rng = stream(7, Purpose::Placement, 0);
        let popular = PopularContents::from_ids((0..10).map(|i| ContentId(3 * i)));
        let cs = cafr_no_drl(&popular, 5, 100, &mut rng).unwrap();
        let all: BTreeSet<_> = cs.local.iter().chain(&cs.neighbor).copied().collect();
        assert_eq!(all, popular.ids().into_iter().collect());
        for _ in 0..100 {
            let p = PopularContents::from_ids((0..14).map(|i| ContentId(2 * i)));
            let cs = cafr_no_drl(&p, 5, 100, &mut rng).unwrap();
            assert!(cs.local.iter().chain(&cs.neighbor).all(|x| x.0 % 2 == 0 && x.0 < 28));
        }
    }

    #[test]
    fn popular_placement_beats_random_on_skewed_requests() {
        let (n, c) = (200usize, 10usize);
        let zipf = Zipf::new(n as f64, 1.0).unwrap();
        let popular = PopularContents::from_ids((0..2 * c).map(ContentId));
        let mut rng = stream(8, Purpose::Placement, 0);
        let (mut hits_pop, mut hits_rand) = (0usize, 0usize);
        for _ in 0..200 {
            let requests: Vec<ContentId> = (0..50).map(|_| ContentId(zipf.sample(&mut rng) as usize - 1)).collect();
            let pop = cafr_no_drl(&popular, c, n, &mut rng).unwrap();
            let rnd = random_policy(n, c, &mut rng).unwrap();
            hits_pop += requests.iter().filter(|r| pop.local.contains(r)).count();
            hits_rand += requests.iter().filter(|r| rnd.local.contains(r)).count();
        }
        assert!(hits_pop > 2 * hits_rand, "{hits_pop} vs {hits_rand}");
    }
}
