use super::*;
use crate::rng::{stream, Purpose};
use approx::assert_abs_diff_eq;

fn popular(n: usize) -> PopularContents {
    PopularContents {
        items: (0..n).map(|i| (ContentId(10 + i), n - i)).collect(),
    }
}

fn ids(v: &[usize]) -> Vec<ContentId> {
    v.iter().map(|&i| ContentId(i)).collect()
}

fn rates(rsu: f64, mbs: f64) -> LinkRates {
    LinkRates {
        rsu_bps: rsu,
        mbs_bps: mbs,
    }
}

#[test]
fn encoding_examples() {
    let p = popular(6);
    let top = CacheState {
        local: ids(&[10, 11, 12]),
        neighbor: ids(&[13, 14, 15]),
    };
    let e = encode_state(&top, &p);
    assert_eq!(e.len(), 3);
    assert_eq!(e, vec![0.0, 0.2, 0.4]);
    let other = CacheState {
        local: ids(&[10, 11, 12]),
        neighbor: ids(&[15, 14, 13]),
    };
    assert_eq!(encode_state(&other, &p), e);
}

#[test]
fn action_selection() {
    let mut rng = stream(1, Purpose::Drl, 0);
    assert_eq!(select_action([0.2, 0.9], 0.0, &mut rng, 5), 1);
    assert_eq!(select_action([0.9, 0.2], 0.0, &mut rng, 5), 0);
    assert_eq!(select_action([0.5, 0.5], 0.0, &mut rng, 5), 1);
    assert_eq!(select_action([9.0, 0.0], 0.0, &mut rng, 1), 1);
    let ones: usize = (0..10_000).map(|_| select_action([9.0, 0.0], 1.0, &mut rng, 2)).sum();
    // Binomial(10^4, 1/2): 3 sigma = 150.
    assert!((ones as i64 - 5000).abs() < 150, "{ones}");
}

#[test]
fn keep_action_preserves_local() {
    let p = popular(8);
    let cs = CacheState {
        local: ids(&[11, 13]),
        neighbor: ids(&[10, 12]),
    };
    let mut rng = stream(2, Purpose::Drl, 0);
    let next = apply_action(&cs, 0, &p, 1, &mut rng);
    assert_eq!(next.local, cs.local);
    next.check(2, Some(&p)).unwrap();
}

#[test]
fn relocation_swaps_least_popular() {
    let p = popular(6);
    let cs = CacheState {
        local: ids(&[10, 11, 12]),
        neighbor: ids(&[13, 14, 15]),
    };
    let mut seen = BTreeSet::new();
    for seed in 0..50 {
        let mut rng = stream(seed, Purpose::Drl, 0);
        let next = apply_action(&cs, 1, &p, 1, &mut rng);
        assert_eq!(&next.local[..2], &ids(&[10, 11])[..]);
        assert!([13, 14, 15].contains(&next.local[2].0));
        seen.insert(next.local[2]);
        next.check(3, Some(&p)).unwrap();
    }
    assert_eq!(seen.len(), 3);
}

#[test]
fn delay_examples() {
    let p = RewardParams::default();
    let r = rates(800.0, 1e5);
    assert_abs_diff_eq!(transmission_delay(Tier::Local, &r, &p), 1.0, epsilon = 1e-15);
    let wired = transmission_delay(Tier::Neighbor, &r, &p) - transmission_delay(Tier::Local, &r, &p);
    assert_abs_diff_eq!(wired, 5.333e-5, epsilon = 1e-8);
    assert!(transmission_delay(Tier::Neighbor, &r, &p) > transmission_delay(Tier::Local, &r, &p));
    assert!(transmission_delay(Tier::Mbs, &rates(1.0, 0.0), &p).is_infinite());
}

#[test]
fn reward_examples() {
    let free = RewardParams {
        wired_rate_bps: f64::INFINITY,
        ..RewardParams::default()
    };
    let cs = CacheState {
        local: ids(&[1]),
        neighbor: ids(&[2]),
    };
    let reqs: Vec<Request> = [1, 2, 3, 1]
        .iter()
        .map(|&c| Request {
            vehicle: 0,
            content: ContentId(c),
        })
        .collect();
    let inf = [rates(f64::INFINITY, f64::INFINITY)];
    assert_eq!(slot_reward(&cs, &reqs, &inf, &free), 4.0);

    let p = RewardParams::default();
    let one = [Request {
        vehicle: 0,
        content: ContentId(9),
    }];
    assert_abs_diff_eq!(slot_reward(&cs, &one, &[rates(1e6, 800.0)], &p), 0.5489, epsilon = 1e-4);
}

#[test]
fn moving_a_request_to_local_never_hurts() {
    let p = RewardParams::default();
    let mut rng = stream(3, Purpose::Drl, 0);
    for _ in 0..1000 {
        let rsu = rng.random_range(1e2..1e7);
        let mbs = rng.random_range(1e2..1e7);
        let r = rates(rsu, mbs);
        if transmission_delay(Tier::Local, &r, &p) <= transmission_delay(Tier::Mbs, &r, &p) {
            assert!(request_reward(Tier::Local, &r, &p) >= request_reward(Tier::Mbs, &r, &p));
        }
        let x = request_reward(Tier::Neighbor, &r, &p);
        assert!(x > 0.0 && x <= 1.0);
    }
}

#[test]
fn target_values() {
    let mut net = DuelingNet::zeros(2, 3);
    net.b_value = 1.0;
    assert_abs_diff_eq!(target_q(&net, &[0.0, 0.0], 0.5, 0.99).unwrap(), 1.49, epsilon = 1e-12);
    assert_eq!(target_q(&net, &[0.3, 0.1], 0.5, 0.0).unwrap(), 0.5);
    let mut shifted = net.clone();
    shifted.b_adv += 7.0;
    assert_eq!(
        target_q(&shifted, &[0.3, 0.1], 0.5, 0.9).unwrap(),
        target_q(&net, &[0.3, 0.1], 0.5, 0.9).unwrap()
    );
}

#[test]
fn exact_targets_give_zero_loss_and_no_update() {
    let mut net = DuelingNet::zeros(2, 4);
    net.b_value = 0.75;
    net.b_adv[1] = 0.5;
    let target = net.clone();
    let s = vec![0.1, 0.7];
    let q = net.q_values(&s).unwrap();
    let cfg = DqnConfig {
        gamma: 0.0,
        ..DqnConfig::default()
    };
    let t = ReplayTuple {
        s: s.clone(),
        a: 1,
        r: q[1],
        s_next: s,
    };
    let before = net.clone();
    assert_eq!(train_step(&mut net, &target, &[&t], &cfg).unwrap(), 0.0);
    assert_eq!(net, before);
}

#[test]
fn smoothing_and_convergence() {
    assert_eq!(smooth(&[0.0, 3.0, 6.0, 9.0], 3), vec![1.5, 3.0, 6.0, 7.5]);
    let curve: Vec<f64> = (0..20).map(|i| if i < 8 { i as f64 / 8.0 } else { 1.0 }).collect();
    let e = episodes_to_converge(&curve, 0.05);
    assert!((8..=10).contains(&e), "{e}");
    assert_eq!(episodes_to_converge(&[1.0; 5], 0.05), 1);
}

fn toy() -> (PopularContents, Vec<Request>, Vec<LinkRates>) {
    let p = popular(6);
    let reqs = vec![
        Request { vehicle: 0, content: ContentId(10) },
        Request { vehicle: 1, content: ContentId(11) },
        Request { vehicle: 2, content: ContentId(10) },
        Request { vehicle: 2, content: ContentId(11) },
    ];
    let r = vec![rates(2e3, 1e3), rates(4e3, 2e3), rates(1e3, 1.5e3)];
    (p, reqs, r)
}

#[test]
fn optimization_finds_requested_contents() {
    let (p, reqs, r) = toy();
    let cfg = DqnConfig::default();
    let mut rng = stream(5, Purpose::Drl, 0);
    let out = run_optimization(&p, 2, &reqs, &r, &cfg, &RewardParams::default(), &mut rng).unwrap();
    assert_eq!(out.best.local, ids(&[10, 11]));
    out.best.check(2, Some(&p)).unwrap();
    assert_eq!(out.curves.len(), cfg.episodes);
    assert!(out.curves.iter().skip(1).all(|e| e.mean_loss.is_finite()));
    let total = cfg.episodes * cfg.slots_per_episode;
    assert_eq!(out.train_steps, total - cfg.batch_size);
    assert_eq!(out.target_syncs, total / cfg.target_sync);
    for e in &out.curves {
        assert!(e.mean_reward > 0.0 && e.mean_reward <= reqs.len() as f64);
    }
}

#[test]
fn optimization_rejects_short_popular_list() {
    let (p, reqs, r) = toy();
    let mut rng = stream(6, Purpose::Drl, 0);
    let err = run_optimization(&p, 4, &reqs, &r, &DqnConfig::default(), &RewardParams::default(), &mut rng);
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn padding_fills_to_twice_capacity() {
    let mut rng = stream(7, Purpose::Drl, 0);
    let p = PopularContents::from_ids(ids(&[3, 4]));
    let padded = padded_popular(&p, 3, 50, &mut rng);
    assert_eq!(padded.len(), 6);
    assert_eq!(&padded.ids()[..2], &ids(&[3, 4])[..]);
    let cs = random_from_popular(&p, 3, 50, &mut rng);
    cs.check(3, None).unwrap();
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn advantage_shift_leaves_q_unchanged(v in -5.0f64..5.0, a0 in -5.0f64..5.0, a1 in -5.0f64..5.0, k in -10.0f64..10.0) {
            let q = combine_dueling(v, [a0, a1]);
            let s = combine_dueling(v, [a0 + k, a1 + k]);
            prop_assert!((q[0] - s[0]).abs() < 1e-12 && (q[1] - s[1]).abs() < 1e-12);
        }

        #[test]
        fn actions_keep_cache_invariants(seed in 0u64..500, c in 1usize..6, extra in 0usize..6, a in 0usize..2) {
            let p = popular(2 * c + extra);
            let mut rng = stream(seed, Purpose::Drl, 0);
            let cs = random_from_popular(&p, c, 100, &mut rng);
            let n = (c / 10).max(1).min(c.saturating_sub(1)).max(1);
            let next = apply_action(&cs, a, &p, n, &mut rng);
            prop_assert!(next.check(c, Some(&p)).is_ok());
        }
    }
}
