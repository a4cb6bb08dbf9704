use std::collections::VecDeque;

use pcnlab::network::{NetworkState, OrientedEdge, Outcome, Transaction};
use pcnlab::seed::rng_from;
use pcnlab::{NoiseMechanism, RouteView};
use proptest::prelude::*;
use rand::Rng;

/// Random simple graph with scrambled public balances, built from a seed.
fn random_network(n: usize, density: f64, seed: u64) -> NetworkState {
    let mut rng = rng_from(seed, &[]);
    let mut net = NetworkState::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                let cap = rng.random_range(1..=20u64);
                let bal = rng.random_range(0..=cap);
                let idx = net.add_channel(a, b, cap, bal).unwrap();
                if rng.random_bool(0.5) {
                    let p = rng.random_range(0..=cap);
                    net.channel_mut(idx).set_public(a, p).unwrap();
                }
            }
        }
    }
    net
}

fn mechanism(kind: u8, alpha: f64) -> NoiseMechanism {
    match kind % 3 {
        0 => NoiseMechanism::all_or_nothing(alpha),
        1 => NoiseMechanism::alternating(alpha),
        _ => NoiseMechanism::iid(alpha),
    }
    .unwrap()
}

/// Hop distance from `s` to `d` over oriented edges whose public balance covers `amount`.
fn bfs_distance(net: &NetworkState, s: usize, d: usize, amount: u64) -> Option<usize> {
    let mut dist = vec![usize::MAX; net.node_count()];
    dist[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        for &(y, ch) in net.neighbors(x) {
            if dist[y] == usize::MAX && net.channel(ch).public_balance(x) >= amount {
                dist[y] = dist[x] + 1;
                q.push_back(y);
            }
        }
    }
    (dist[d] != usize::MAX).then_some(dist[d])
}

fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn capacity_is_conserved_over_a_run(
        n in 2usize..8, seed in any::<u64>(), kind in any::<u8>(), alpha in 0.0f64..=1.0, steps in 1usize..40,
    ) {
        let mut net = random_network(n, 0.6, seed);
        let m = mechanism(kind, alpha);
        let mut rng = rng_from(seed, &[1]);
        for i in 0..steps {
            let s = rng.random_range(0..n);
            let d = (s + rng.random_range(1..n)) % n;
            let tx = Transaction::new(s, d, rng.random_range(0..6), i as u64);
            let path = net.find_route(&tx, &mut rng);
            net.execute(&tx, path.as_ref(), &m, &mut rng).unwrap();
            for c in net.channels() {
                prop_assert_eq!(c.true_balance(c.u) + c.true_balance(c.v), c.capacity);
                prop_assert_eq!(c.public_balance(c.u) + c.public_balance(c.v), c.capacity);
            }
        }
        prop_assert!(net.check_invariants().is_ok());
    }

    #[test]
    fn execution_is_local_atomic_and_truthful_on_the_trace(
        n in 2usize..8, seed in any::<u64>(), kind in any::<u8>(), alpha in 0.0f64..=1.0,
        amount in 0u64..12,
    ) {
        let mut net = random_network(n, 0.7, seed);
        let m = mechanism(kind, alpha);
        let mut rng = rng_from(seed, &[2]);
        let s = rng.random_range(0..n);
        let d = (s + rng.random_range(1..n)) % n;
        let tx = Transaction::new(s, d, amount, 0);
        let path = net.find_route(&tx, &mut rng);
        let before = net.clone();
        let outcome = net.execute(&tx, path.as_ref(), &m, &mut rng).unwrap();
        match outcome {
            Outcome::Succeeded(q) => {
                let path = path.unwrap();
                for e in &q {
                    prop_assert!(path.contains_edge(*e));
                    let ch = net.channel_between(e.from, e.to).unwrap();
                    prop_assert!(net.channel(ch).is_truthful());
                }
                for (idx, c) in net.channels().iter().enumerate() {
                    let on_path = path.contains_edge(OrientedEdge::new(c.u, c.v))
                        || path.contains_edge(OrientedEdge::new(c.v, c.u));
                    if !on_path {
                        prop_assert_eq!(c, before.channel(idx));
                    }
                }
            }
            Outcome::FailedTrueBalance | Outcome::FailedNoRoute => prop_assert_eq!(&net, &before),
        }
    }

    #[test]
    fn routes_are_admissible_and_shortest(
        n in 2usize..9, seed in any::<u64>(), amount in 0u64..12, density in 0.2f64..0.9,
    ) {
        let net = random_network(n, density, seed);
        let mut rng = rng_from(seed, &[3]);
        let s = rng.random_range(0..n);
        let d = (s + rng.random_range(1..n)) % n;
        let tx = Transaction::new(s, d, amount, 0);
        let oracle = bfs_distance(&net, s, d, amount);
        match net.find_route_with(&tx, RouteView::Public, &mut rng) {
            None => prop_assert_eq!(oracle, None),
            Some(p) => {
                prop_assert_eq!(p.source(), s);
                prop_assert_eq!(p.destination(), d);
                prop_assert!(net.check_path(&p).is_ok());
                for e in p.edges() {
                    let ch = net.channel_between(e.from, e.to).unwrap();
                    prop_assert!(net.channel(ch).public_balance(e.from) >= amount);
                }
                prop_assert_eq!(Some(p.len()), oracle);
            }
        }
    }
}

#[test]
fn route_avoids_thin_edge() {
    // A=0, B=1, C=2, D=3, E=4; E->C carries only 2 tokens.
    let net = NetworkState::from_channels(
        5,
        [(0, 1, 10, 5), (1, 2, 10, 5), (0, 3, 10, 5), (3, 4, 10, 5), (4, 2, 10, 2)],
    )
    .unwrap();
    let tx = Transaction::new(0, 2, 3, 0);
    let p = net.find_route(&tx, &mut rng_from(1, &[])).unwrap();
    assert_eq!(p.nodes(), [0, 1, 2]);
}

#[test]
fn payment_moves_alice_and_bob() {
    let mut net = NetworkState::from_channels(3, [(0, 1, 6, 4), (1, 2, 10, 5)]).unwrap();
    let tx = Transaction::new(0, 2, 3, 0);
    let mut rng = rng_from(2, &[]);
    let p = net.find_route(&tx, &mut rng).unwrap();
    let m = NoiseMechanism::all_or_nothing(1.0).unwrap();
    assert!(net.execute(&tx, Some(&p), &m, &mut rng).unwrap().is_success());
    let ab = net.channel(net.channel_between(0, 1).unwrap());
    assert_eq!((ab.true_balance(0), ab.true_balance(1)), (1, 5));
}
