//! Cooperative cache placement with a dueling DQN.
//!
//! The local RSU holds `c` contents ordered by predicted popularity and the
//! neighboring RSU holds `c` others. Each slot the agent either keeps the
//! local list or swaps its `n` least popular entries for random popular
//! contents; the reward is the exponentially weighted delay of the round's
//! recorded requests under the resulting placement.

mod net;
mod replay;

pub use net::{combine_dueling, DuelingNet, ACTIONS};
pub use replay::{ReplayBuffer, ReplayTuple};

use std::collections::{BTreeSet, HashMap};

use log::{debug, warn};
use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::channel::LinkRates;
use crate::dataset::ContentId;
use crate::error::{Error, Result};
use crate::popularity::PopularContents;

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub replay_capacity: usize,
    /// Minibatch size `I`.
    pub batch_size: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Target network sync period `M`, in slots.
    pub target_sync: usize,
    pub episodes: usize,
    pub slots_per_episode: usize,
    /// Swap size `n`; `None` means `max(1, c / 10)`.
    pub swap_n: Option<usize>,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of all slots over which epsilon decays linearly.
    pub eps_decay_frac: f64,
    pub hidden: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 10_000,
            batch_size: 32,
            gamma: 0.99,
            learning_rate: 0.01,
            target_sync: 20,
            episodes: 20,
            slots_per_episode: 100,
            swap_n: None,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_frac: 0.5,
            hidden: 64,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_sync == 0 {
            return Err(Error::Config("drl: batch, replay capacity and sync period must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("drl: gamma must be in [0, 1)".into()));
        }
        if self.episodes == 0 || self.slots_per_episode == 0 || self.hidden == 0 {
            return Err(Error::Config("drl: episodes, slots and hidden width must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("drl: learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return Err(Error::Config("drl: epsilon bounds must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn swap_size(&self, c: usize) -> usize {
        self.swap_n.unwrap_or((c / 10).max(1))
    }

    /// Linear decay from `eps_start` to `eps_end` over the first
    /// `eps_decay_frac` of all slots.
    pub fn epsilon(&self, global_slot: usize) -> f64 {
        let total = (self.episodes * self.slots_per_episode) as f64;
        let span = (self.eps_decay_frac * total).max(1.0);
        let frac = (global_slot as f64 / span).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Delay weights and sizes of the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub content_bits: f64,
    pub wired_rate_bps: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            lambda1: 0.0001,
            lambda2: 0.4,
            lambda3: 0.5999,
            content_bits: 800.0,
            wired_rate_bps: 15e6,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let sum = self.lambda1 + self.lambda2 + self.lambda3;
        if (sum - 1.0).abs() > 1e-9 || self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(Error::Config("reward: lambdas must be >= 0 and sum to 1".into()));
        }
        if !(self.content_bits > 0.0) || !(self.wired_rate_bps > 0.0) {
            return Err(Error::Config("reward: content size and wired rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Local,
    Neighbor,
    Mbs,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Local, Tier::Neighbor, Tier::Mbs];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Local => "local",
            Tier::Neighbor => "neighbor",
            Tier::Mbs => "mbs",
        }
    }
}

/// A recorded request: index of the requesting vehicle into the rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub vehicle: usize,
    pub content: ContentId,
}

/// Contents held by the local RSU (descending popularity) and its neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    pub local: Vec<ContentId>,
    pub neighbor: Vec<ContentId>,
}

impl CacheState {
    pub fn tier_of(&self, content: ContentId) -> Tier {
        if self.local.contains(&content) {
            Tier::Local
        } else if self.neighbor.contains(&content) {
            Tier::Neighbor
        } else {
            Tier::Mbs
        }
    }

    /// Checks disjointness, sizes, and (when given) that the local list is
    /// drawn from `popular` in descending popularity.
    pub fn check(&self, c: usize, popular: Option<&PopularContents>) -> Result<()> {
        let local: BTreeSet<_> = self.local.iter().collect();
        let neighbor: BTreeSet<_> = self.neighbor.iter().collect();
        if local.len() != self.local.len() || neighbor.len() != self.neighbor.len() {
            return Err(Error::Domain("cache holds duplicate contents".into()));
        }
        if !local.is_disjoint(&neighbor) {
            return Err(Error::Domain("local and neighbor caches overlap".into()));
        }
        if self.local.len() != c || self.neighbor.len() != c {
            return Err(Error::Domain(format!(
                "cache sizes {}/{} differ from capacity {c}",
                self.local.len(),
                self.neighbor.len()
            )));
        }
        if let Some(p) = popular {
            let ranks: Option<Vec<usize>> = self.local.iter().map(|&x| p.rank_of(x)).collect();
            match ranks {
                Some(r) if r.windows(2).all(|w| w[0] < w[1]) => {}
                _ => return Err(Error::Domain("local cache is not sorted by popularity".into())),
            }
        }
        Ok(())
    }
}

/// Normalized popularity ranks of the local contents in slot order.
pub fn encode_state(cs: &CacheState, popular: &PopularContents) -> Vec<f64> {
    encode_ranked(cs, popular.len(), &rank_map(popular))
}

fn encode_ranked(cs: &CacheState, n_popular: usize, rank: &HashMap<ContentId, usize>) -> Vec<f64> {
    let denom = (n_popular.max(2) - 1) as f64;
    cs.local
        .iter()
        .map(|c| rank.get(c).map_or(1.0, |&r| r as f64 / denom))
        .collect()
}

/// Epsilon-greedy choice. Slot 1 of each episode always relocates; argmax
/// ties relocate.
pub fn select_action<R: Rng + ?Sized>(q: [f64; ACTIONS], epsilon: f64, rng: &mut R, slot: usize) -> usize {
    if slot == 1 {
        return 1;
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..ACTIONS);
    }
    if q[0] > q[1] {
        0
    } else {
        1
    }
}

fn sort_by_rank(contents: &mut [ContentId], rank: &HashMap<ContentId, usize>) {
    contents.sort_by_key(|c| rank.get(c).copied().unwrap_or(usize::MAX));
}

fn rank_map(popular: &PopularContents) -> HashMap<ContentId, usize> {
    popular.items.iter().enumerate().map(|(i, (c, _))| (*c, i)).collect()
}

/// Draws up to `k` distinct elements of `pool` uniformly.
fn draw<R: Rng + ?Sized>(rng: &mut R, pool: &[ContentId], k: usize) -> Vec<ContentId> {
    index::sample(rng, pool.len(), k.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Applies `a`: relocation swaps the `n` least popular local contents for
/// random popular contents not cached locally. The neighbor cache is always
/// redrawn from the popular contents not cached locally.
pub fn apply_action<R: Rng + ?Sized>(
    cs: &CacheState,
    a: usize,
    popular: &PopularContents,
    n: usize,
    rng: &mut R,
) -> CacheState {
    let rank = rank_map(popular);
    apply_action_ranked(cs, a, popular, &rank, n, rng)
}

fn apply_action_ranked<R: Rng + ?Sized>(
    cs: &CacheState,
    a: usize,
    popular: &PopularContents,
    rank: &HashMap<ContentId, usize>,
    n: usize,
    rng: &mut R,
) -> CacheState {
    let c = cs.local.len();
    let mut local = cs.local.clone();
    // Popular contents not in `held`, in rank order.
    let outside = |held: &[ContentId]| -> Vec<ContentId> {
        let mut taken = vec![false; popular.len()];
        for x in held {
            if let Some(&r) = rank.get(x) {
                taken[r] = true;
            }
        }
        popular
            .items
            .iter()
            .zip(taken)
            .filter(|(_, t)| !t)
            .map(|((x, _), _)| *x)
            .collect()
    };
    if a == 1 {
        let pool = outside(&local);
        if pool.len() < n {
            warn!("only {} contents available to swap, wanted {n}", pool.len());
        }
        let incoming = draw(rng, &pool, n);
        sort_by_rank(&mut local, rank);
        local.truncate(c - incoming.len());
        local.extend(incoming);
        sort_by_rank(&mut local, rank);
    }
    let neighbor = draw(rng, &outside(&local), c);
    CacheState { local, neighbor }
}

/// Delay of one fetch through `tier`; infinite when the needed link is dead.
pub fn transmission_delay(tier: Tier, rates: &LinkRates, p: &RewardParams) -> f64 {
    let over = |rate: f64| if rate > 0.0 { p.content_bits / rate } else { f64::INFINITY };
    match tier {
        Tier::Local => over(rates.rsu_bps),
        Tier::Neighbor => over(rates.rsu_bps) + p.content_bits / p.wired_rate_bps,
        Tier::Mbs => over(rates.mbs_bps),
    }
}

/// Reward of one fetch through `tier`.
pub fn request_reward(tier: Tier, rates: &LinkRates, p: &RewardParams) -> f64 {
    match tier {
        Tier::Local => (-p.lambda1 * transmission_delay(Tier::Local, rates, p)).exp(),
        Tier::Neighbor => {
            let hop = transmission_delay(Tier::Local, rates, p);
            let total = transmission_delay(Tier::Neighbor, rates, p);
            (-(p.lambda1 * hop + p.lambda2 * total)).exp()
        }
        Tier::Mbs => (-p.lambda3 * transmission_delay(Tier::Mbs, rates, p)).exp(),
    }
}

/// Sum of per-request rewards under placement `cs`.
pub fn slot_reward(cs: &CacheState, requests: &[Request], rates: &[LinkRates], p: &RewardParams) -> f64 {
    requests
        .iter()
        .map(|r| request_reward(cs.tier_of(r.content), &rates[r.vehicle], p))
        .sum()
}

/// `r + gamma * max_a Q'(s_next, a)`.
pub fn target_q(target: &DuelingNet, s_next: &[f64], r: f64, gamma: f64) -> Result<f64> {
    let q = target.q_values(s_next)?;
    Ok(r + gamma * q[0].max(q[1]))
}

/// One gradient step on the mean squared TD error; returns the loss before
/// the update.
pub fn train_step(
    net: &mut DuelingNet,
    target: &DuelingNet,
    batch: &[&ReplayTuple],
    cfg: &DqnConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("empty training batch".into()));
    }
    let d = net.input_dim();
    let mut x = Array2::zeros((batch.len(), d));
    let mut x_next = Array2::zeros((batch.len(), d));
    let mut actions = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        if t.s.len() != d || t.s_next.len() != d {
            return Err(Error::dimension("replay state", d, t.s.len().min(t.s_next.len())));
        }
        x.row_mut(i).assign(&ndarray::aview1(&t.s));
        x_next.row_mut(i).assign(&ndarray::aview1(&t.s_next));
        actions.push(t.a);
    }
    // Same arithmetic as `target_q`, batched.
    let q_next = target.q_batch(x_next.view())?;
    let ys: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| t.r + cfg.gamma * q_next[[i, 0]].max(q_next[[i, 1]]))
        .collect();
    let (loss, grad) = net.loss_and_gradient(x.view(), &actions, &ys)?;
    net.descend(cfg.learning_rate, &grad);
    Ok(loss)
}

/// Per-episode training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Mean raw reward per slot.
    pub mean_reward: f64,
    /// Mean reward per slot after scaling to the attainable range.
    pub mean_scaled_reward: f64,
    /// Mean fraction of requests served by the local RSU.
    pub hit_rate: f64,
    /// Mean training loss over the episode's updates (NaN if none).
    pub mean_loss: f64,
    /// Fraction of slots that relocated.
    pub relocate_frac: f64,
}

#[derive(Debug, Clone)]
pub struct Optimization {
    /// Placement of the best-reward slot.
    pub best: CacheState,
    pub best_reward: f64,
    pub curves: Vec<EpisodeStats>,
    pub episodes_to_converge: usize,
    /// Number of target-network syncs performed.
    pub target_syncs: usize,
    pub train_steps: usize,
}

/// Per-episode CSV: `episode,mean_reward,hit_rate,loss`.
pub fn curves_csv(curves: &[EpisodeStats]) -> String {
    let mut s = String::from("episode,mean_reward,hit_rate,loss\n");
    for e in curves {
        s.push_str(&format!("{},{},{},{}\n", e.episode, e.mean_reward, e.hit_rate, e.mean_loss));
    }
    s
}

/// Smooths with a centered moving average of width `w` (shrinking at the
/// edges).
pub fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// First episode (1-based) from which the smoothed curve stays within
/// `tol` (relative) of its plateau, the mean of the last quarter.
pub fn episodes_to_converge(curve: &[f64], tol: f64) -> usize {
    if curve.is_empty() {
        return 0;
    }
    let s = smooth(curve, 3);
    let tail = (s.len() / 4).max(1);
    let plateau = s[s.len() - tail..].iter().sum::<f64>() / tail as f64;
    let band = tol * plateau.abs().max(1e-12);
    let mut first = s.len();
    for i in (0..s.len()).rev() {
        if (s[i] - plateau).abs() <= band {
            first = i;
        } else {
            break;
        }
    }
    first + 1
}

/// The round's request table with precomputed per-tier rewards.
struct RewardTable {
    /// `(popularity rank or None, [local, neighbor, mbs] reward)`
    entries: Vec<(Option<usize>, [f64; 3])>,
    lo: f64,
    hi: f64,
}

impl RewardTable {
    fn new(
        requests: &[Request],
        rates: &[LinkRates],
        rank: &HashMap<ContentId, usize>,
        p: &RewardParams,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(requests.len());
        let (mut lo, mut hi) = (0.0, 0.0);
        for r in requests {
            let link = rates.get(r.vehicle).ok_or_else(|| {
                Error::Domain(format!("request from vehicle {} without link rates", r.vehicle))
            })?;
            let terms = Tier::ALL.map(|t| request_reward(t, link, p));
            let best = if rank.contains_key(&r.content) {
                terms.iter().copied().fold(f64::MIN, f64::max)
            } else {
                terms[2]
            };
            let worst = if rank.contains_key(&r.content) {
                terms.iter().copied().fold(f64::MAX, f64::min)
            } else {
                terms[2]
            };
            lo += worst;
            hi += best;
            entries.push((rank.get(&r.content).copied(), terms));
        }
        Ok(Self { entries, lo, hi })
    }

    /// `(raw reward, local hits)` of a placement given as rank-indexed tiers.
    fn evaluate(&self, tier_by_rank: &[u8]) -> (f64, usize) {
        let mut reward = 0.0;
        let mut hits = 0;
        for (rank, terms) in &self.entries {
            let t = rank.map_or(2, |r| tier_by_rank[r] as usize);
            reward += terms[t];
            hits += (t == 0) as usize;
        }
        (reward, hits)
    }

    fn scale(&self, raw: f64) -> f64 {
        if self.hi > self.lo {
            (raw - self.lo) / (self.hi - self.lo)
        } else {
            0.0
        }
    }
}

fn tiers_by_rank(cs: &CacheState, rank: &HashMap<ContentId, usize>, out: &mut [u8]) {
    out.fill(2);
    for c in &cs.neighbor {
        out[rank[c]] = 1;
    }
    for c in &cs.local {
        out[rank[c]] = 0;
    }
}

/// Trains a fresh dueling DQN on this round's requests and returns the best
/// placement seen.
///
/// The learner sees rewards affinely rescaled to `[0, 1]` over the range
/// attainable by any placement; the policy is unaffected and the update
/// magnitudes no longer depend on the raw reward's tiny spread.
pub fn run_optimization<R: Rng + ?Sized>(
    popular: &PopularContents,
    c: usize,
    requests: &[Request],
    rates: &[LinkRates],
    cfg: &DqnConfig,
    reward: &RewardParams,
    rng: &mut R,
) -> Result<Optimization> {
    cfg.validate()?;
    if c == 0 || popular.len() < 2 * c {
        return Err(Error::Config(format!(
            "placement needs at least 2c = {} popular contents, got {}",
            2 * c,
            popular.len()
        )));
    }
    let n = cfg.swap_size(c);
    if n >= c && c > 1 {
        return Err(Error::Config(format!("swap size {n} must be below capacity {c}")));
    }
    let rank = rank_map(popular);
    let table = RewardTable::new(requests, rates, &rank, reward)?;
    let ids = popular.ids();
    let total_requests = requests.len().max(1) as f64;

    let mut net = DuelingNet::init(rng, c, cfg.hidden);
    let mut target = net.clone();
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut tiers = vec![2u8; popular.len()];
    let mut best: Option<(f64, CacheState)> = None;
    let mut curves = Vec::with_capacity(cfg.episodes);
    let mut global_slot = 0usize;
    let mut target_syncs = 0;
    let mut train_steps = 0;

    for episode in 1..=cfg.episodes {
        let mut local = draw(rng, &ids, c);
        sort_by_rank(&mut local, &rank);
        let rest: Vec<ContentId> = ids.iter().copied().filter(|x| !local.contains(x)).collect();
        let mut state = CacheState {
            neighbor: draw(rng, &rest, c),
            local,
        };
        let (mut sum_r, mut sum_scaled, mut sum_hits, mut sum_loss, mut losses) = (0.0, 0.0, 0.0, 0.0, 0);
        let mut relocations = 0usize;
        for slot in 1..=cfg.slots_per_episode {
            let s_enc = encode_ranked(&state, popular.len(), &rank);
            let q = net.q_values(&s_enc)?;
            let a = select_action(q, cfg.epsilon(global_slot), rng, slot);
            relocations += a;
            let next = apply_action_ranked(&state, a, popular, &rank, n, rng);
            tiers_by_rank(&next, &rank, &mut tiers);
            let (raw, hits) = table.evaluate(&tiers);
            let scaled = table.scale(raw);
            buffer.push(ReplayTuple {
                s: s_enc,
                a,
                r: scaled,
                s_next: encode_ranked(&next, popular.len(), &rank),
            });
            if buffer.len() > cfg.batch_size {
                let batch = buffer.sample(rng, cfg.batch_size);
                let loss = train_step(&mut net, &target, &batch, cfg)?;
                if !loss.is_finite() {
                    return Err(Error::Domain(format!("DQN loss diverged at slot {global_slot}")));
                }
                sum_loss += loss;
                losses += 1;
                train_steps += 1;
            }
            global_slot += 1;
            if global_slot.is_multiple_of(cfg.target_sync) {
                target = net.clone();
                target_syncs += 1;
            }
            sum_r += raw;
            sum_scaled += scaled;
            sum_hits += hits as f64 / total_requests;
            if best.as_ref().is_none_or(|(b, _)| raw > *b) {
                best = Some((raw, next.clone()));
            }
            state = next;
        }
        let slots = cfg.slots_per_episode as f64;
        curves.push(EpisodeStats {
            episode,
            mean_reward: sum_r / slots,
            mean_scaled_reward: sum_scaled / slots,
            hit_rate: sum_hits / slots,
            mean_loss: if losses > 0 { sum_loss / losses as f64 } else { f64::NAN },
            relocate_frac: relocations as f64 / slots,
        });
    }
    let scaled: Vec<f64> = curves.iter().map(|e| e.mean_scaled_reward).collect();
    let converge = episodes_to_converge(&scaled, 0.05);
    let (best_reward, best) = best.expect("at least one slot");
    debug!("placement: best reward {best_reward:.6}, converged at episode {converge}");
    Ok(Optimization {
        best,
        best_reward,
        curves,
        episodes_to_converge: converge,
        target_syncs,
        train_steps,
    })
}

/// Random placement from the popular list: `c` local, `c` neighbor. Pads
/// with random catalog contents when fewer than `2c` are popular.
pub fn random_from_popular<R: Rng + ?Sized>(
    popular: &PopularContents,
    c: usize,
    catalog_size: usize,
    rng: &mut R,
) -> CacheState {
    let pool = padded_popular(popular, c, catalog_size, rng);
    let rank = rank_map(&pool);
    let ids = pool.ids();
    let mut local = draw(rng, &ids, c);
    sort_by_rank(&mut local, &rank);
    let rest: Vec<ContentId> = ids.iter().copied().filter(|x| !local.contains(x)).collect();
    CacheState {
        neighbor: draw(rng, &rest, c),
        local,
    }
}

/// `popular` extended with random catalog contents up to `2c` entries.
pub fn padded_popular<R: Rng + ?Sized>(
    popular: &PopularContents,
    c: usize,
    catalog_size: usize,
    rng: &mut R,
) -> PopularContents {
    let want = (2 * c).min(catalog_size);
    if popular.len() >= want {
        return popular.clone();
    }
    warn!(
        "{} popular contents for capacity {c}; padding with random catalog contents",
        popular.len()
    );
    let have: BTreeSet<ContentId> = popular.ids().into_iter().collect();
    let mut others: Vec<ContentId> = (0..catalog_size).map(ContentId).filter(|x| !have.contains(x)).collect();
    others.shuffle(rng);
    let mut out = popular.clone();
    out.items.extend(others.into_iter().take(want - popular.len()).map(|c| (c, 0)));
    out
}

#[cfg(test)]
mod tests;
