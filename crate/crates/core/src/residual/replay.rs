//! Demonstration and online buffers with symmetric batch sampling.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::seed::Rng;

/// One step of experience with the observation already encoded.
///
/// Actions are recorded before clamping, exactly as the policies produced
/// them.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub base_action: [f64; 3],
    pub residual_action: [f64; 3],
    /// 1 on the step that reached success, 0 otherwise.
    pub reward: f64,
    /// True when the episode terminated on this step (success or abort).
    pub done: bool,
    pub next_obs: Vec<f64>,
    pub next_base_action: [f64; 3],
}

/// Median of a multiset; the mean of the two central values for even sizes.
pub fn median(lengths: &[usize]) -> Option<f64> {
    if lengths.is_empty() {
        return None;
    }
    let mut v = lengths.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 })
}

/// Admits a successful trajectory iff it is strictly shorter than the median
/// demo length. An empty multiset admits nothing.
pub fn demo_gate(traj_len: usize, demo_lengths: &[usize]) -> bool {
    median(demo_lengths).is_some_and(|m| (traj_len as f64) < m)
}

/// Where a sampled batch came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleCounts {
    pub demo: usize,
    pub online: usize,
}

#[derive(Clone, Debug)]
pub struct ReplayStore {
    demo: Vec<(u64, Vec<Transition>)>,
    /// Cumulative transition counts over `demo`, for flat indexing.
    demo_offsets: Vec<usize>,
    demo_capacity: usize,
    next_demo_id: u64,
    online: VecDeque<Transition>,
    online_capacity: usize,
}

impl ReplayStore {
    /// `demo_capacity` counts trajectories, `online_capacity` transitions.
    pub fn new(demo_capacity: usize, online_capacity: usize) -> Self {
        assert!(demo_capacity > 0 && online_capacity > 0);
        ReplayStore {
            demo: Vec::new(),
            demo_offsets: vec![0],
            demo_capacity,
            next_demo_id: 0,
            online: VecDeque::new(),
            online_capacity,
        }
    }

    pub fn demo_len(&self) -> usize {
        *self.demo_offsets.last().unwrap()
    }

    pub fn online_len(&self) -> usize {
        self.online.len()
    }

    pub fn demo_trajectories(&self) -> usize {
        self.demo.len()
    }

    /// One length per demo trajectory currently held.
    pub fn demo_lengths(&self) -> Vec<usize> {
        self.demo.iter().map(|(_, t)| t.len()).collect()
    }

    pub fn demo_median(&self) -> Option<f64> {
        median(&self.demo_lengths())
    }

    fn reindex(&mut self) {
        self.demo_offsets.clear();
        self.demo_offsets.push(0);
        let mut acc = 0;
        for (_, t) in &self.demo {
            acc += t.len();
            self.demo_offsets.push(acc);
        }
    }

    /// Appends a demo trajectory. Over capacity, the longest trajectory is
    /// evicted, the oldest among equally long ones.
    pub fn push_demo(&mut self, traj: Vec<Transition>) {
        assert!(!traj.is_empty(), "empty demo trajectory");
        self.demo.push((self.next_demo_id, traj));
        self.next_demo_id += 1;
        while self.demo.len() > self.demo_capacity {
            let victim = self
                .demo
                .iter()
                .enumerate()
                .max_by(|(_, (ia, a)), (_, (ib, b))| a.len().cmp(&b.len()).then(ib.cmp(ia)))
                .map(|(i, _)| i)
                .unwrap();
            self.demo.remove(victim);
        }
        self.reindex();
    }

    /// Applies the median gate and admits the trajectory when it passes.
    pub fn offer_demo(&mut self, traj: &[Transition]) -> bool {
        let admit = demo_gate(traj.len(), &self.demo_lengths());
        if admit {
            self.push_demo(traj.to_vec());
        }
        admit
    }

    pub fn push_online(&mut self, t: Transition) {
        if self.online.len() == self.online_capacity {
            self.online.pop_front();
        }
        self.online.push_back(t);
    }

    pub fn demo_at(&self, flat: usize) -> &Transition {
        let k = self.demo_offsets.partition_point(|&o| o <= flat) - 1;
        &self.demo[k].1[flat - self.demo_offsets[k]]
    }

    pub fn online_at(&self, i: usize) -> &Transition {
        &self.online[i]
    }

    /// Draws `batch_size / 2` transitions uniformly with replacement from
    /// each buffer, demos first. With an empty online buffer the whole batch
    /// comes from the demos. Returns the flat indices as `(is_demo, index)`.
    pub fn symmetric_indices(&self, batch_size: usize, rng: &mut Rng) -> (Vec<(bool, usize)>, SampleCounts) {
        assert!(batch_size % 2 == 0, "batch size must be even");
        assert!(self.demo_len() > 0, "demo buffer is empty");
        let (n_demo, n_online) =
            if self.online.is_empty() { (batch_size, 0) } else { (batch_size / 2, batch_size / 2) };
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..n_demo {
            out.push((true, rng.random_range(0..self.demo_len())));
        }
        for _ in 0..n_online {
            out.push((false, rng.random_range(0..self.online.len())));
        }
        (out, SampleCounts { demo: n_demo, online: n_online })
    }

    pub fn symmetric_sample(&self, batch_size: usize, rng: &mut Rng) -> (Vec<&Transition>, SampleCounts) {
        let (idx, counts) = self.symmetric_indices(batch_size, rng);
        let batch = idx.into_iter().map(|(d, i)| if d { self.demo_at(i) } else { self.online_at(i) }).collect();
        (batch, counts)
    }
}
