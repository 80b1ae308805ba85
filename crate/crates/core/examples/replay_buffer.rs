//! Shows the two-buffer replay store: every batch is split evenly between
//! demo and online transitions, and online successes only join the demo
//! buffer when they beat the current median demo length.

use residrl::residual::{demo_gate, ReplayStore, Transition};
use residrl::seed;

fn trajectory(len: usize, tag: f64) -> Vec<Transition> {
    (0..len)
        .map(|i| Transition {
            obs: vec![tag, i as f64],
            base_action: [0.0; 3],
            residual_action: [0.0; 3],
            reward: if i + 1 == len { 1.0 } else { 0.0 },
            done: i + 1 == len,
            next_obs: vec![tag, i as f64 + 1.0],
            next_base_action: [0.0; 3],
        })
        .collect()
}

fn main() {
    let mut store = ReplayStore::new(4, 1000);
    for (k, len) in [30, 24, 40, 28].into_iter().enumerate() {
        store.push_demo(trajectory(len, k as f64));
    }
    println!("demo lengths {:?}, median {:?}", store.demo_lengths(), store.demo_median());

    for len in [26, 29, 12] {
        let admitted = store.offer_demo(&trajectory(len, 9.0));
        println!(
            "online success of {len} steps: gate {} -> {} (lengths now {:?})",
            demo_gate(len, &store.demo_lengths()),
            if admitted { "admitted" } else { "rejected" },
            store.demo_lengths()
        );
    }

    for t in trajectory(50, 100.0) {
        store.push_online(t);
    }
    let mut rng = seed::stream(0, "replay-example", 0);
    for _ in 0..3 {
        let (batch, counts) = store.symmetric_sample(64, &mut rng);
        println!("batch of {}: {} demo + {} online", batch.len(), counts.demo, counts.online);
    }
}
