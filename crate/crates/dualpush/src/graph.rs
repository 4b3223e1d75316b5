//! Time-varying directed communication graphs.
//!
//! A run consumes a sequence of digraph snapshots, one per round. Every node
//! always talks to itself, so self-loops are implicit and never stored. From
//! a snapshot we build the column-stochastic mixing matrix
//!
//! ```text
//!   D[i][j] = 1 / d_j   if j = i or j -> i is an edge,   0 otherwise,
//! ```
//!
//! where `d_j` counts j's out-neighbors including itself. Column j splits
//! into `d_j` equal shares, which is what makes push-sum work on directed
//! graphs where nobody knows their in-degree.
//!
//! Convergence of the mixing process needs joint connectivity over time: for
//! window length B, the union of every aligned block of B consecutive
//! snapshots (plus self-loops) must be strongly connected. The checker here
//! verifies exactly that property over a finite horizon.

use crate::matrix::Matrix;
use crate::Error;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round's directed graph on nodes `0..m`. Edges are stored sorted and
/// deduplicated; self-loops are implicit by definition and rejected as input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigraphSnapshot {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl DigraphSnapshot {
    pub fn new(m: usize, mut edges: Vec<(usize, usize)>) -> Result<Self, Error> {
        if m == 0 {
            return Err(Error::Dimension("a snapshot needs at least one node".into()));
        }
        for &(from, to) in &edges {
            if from >= m || to >= m {
                return Err(Error::Dimension(format!(
                    "edge ({from}, {to}) out of range for {m} nodes"
                )));
            }
            if from == to {
                return Err(Error::Dimension(format!(
                    "explicit self-loop ({from}, {from}); self-loops are implicit"
                )));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(DigraphSnapshot { m, edges })
    }

    /// Directed cycle 0 -> 1 -> ... -> m-1 -> 0 (empty for m = 1).
    pub fn ring(m: usize) -> Result<Self, Error> {
        let edges = if m > 1 {
            (0..m).map(|i| (i, (i + 1) % m)).collect()
        } else {
            Vec::new()
        };
        DigraphSnapshot::new(m, edges)
    }

    /// All ordered pairs, the fastest-mixing snapshot.
    pub fn complete(m: usize) -> Result<Self, Error> {
        let mut edges = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        DigraphSnapshot::new(m, edges)
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Out-degree of j, counting the implicit self-loop.
    pub fn out_degree(&self, j: usize) -> usize {
        1 + self.edges.iter().filter(|&&(from, _)| from == j).count()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.binary_search(&(from, to)).is_ok()
    }

    /// Edge-union of snapshots over the same node set.
    pub fn union<'a>(snaps: impl IntoIterator<Item = &'a DigraphSnapshot>) -> Result<Self, Error> {
        let mut iter = snaps.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::Dimension("union of zero snapshots".into()))?;
        let m = first.m;
        let mut edges = first.edges.clone();
        for s in iter {
            if s.m != m {
                return Err(Error::Dimension(format!(
                    "union over mismatched node counts {m} and {}",
                    s.m
                )));
            }
            edges.extend_from_slice(&s.edges);
        }
        DigraphSnapshot::new(m, edges)
    }

    /// Strong connectivity including the implicit self-loops (which never
    /// affect it). Every node must reach node 0 and be reachable from it.
    pub fn is_strongly_connected(&self) -> bool {
        if self.m == 1 {
            return true;
        }
        let mut fwd = vec![Vec::new(); self.m];
        let mut bwd = vec![Vec::new(); self.m];
        for &(from, to) in &self.edges {
            fwd[from].push(to);
            bwd[to].push(from);
        }
        reaches_all(&fwd) && reaches_all(&bwd)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == adj.len()
}

/// Column-stochastic mixing weights for one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    inner: Matrix,
}

impl WeightMatrix {
    pub fn order(&self) -> usize {
        self.inner.rows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.order()).map(|i| self.inner.get(i, j)).sum()
    }

    /// One mixing step for scalar per-node values, row i accumulated over
    /// ascending j.
    pub fn mix_scalars(&self, vals: &[f64]) -> Vec<f64> {
        debug_assert_eq!(vals.len(), self.order());
        self.inner.mul_vec(vals)
    }

    /// One mixing step for vector-valued per-node states.
    pub fn mix_vectors(&self, vals: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.order();
        debug_assert_eq!(vals.len(), m);
        let p = vals.first().map_or(0, Vec::len);
        let mut out = vec![vec![0.0; p]; m];
        for i in 0..m {
            for j in 0..m {
                let w = self.inner.get(i, j);
                if w != 0.0 {
                    for k in 0..p {
                        out[i][k] += w * vals[j][k];
                    }
                }
            }
        }
        out
    }
}

/// `D[i][j] = 1/d_j` on the diagonal and along stored edges `j -> i`. Each
/// column holds `d_j` copies of the same share, so column sums are 1 up to a
/// final rounding.
pub fn build_weights(snap: &DigraphSnapshot) -> WeightMatrix {
    let m = snap.node_count();
    let mut mat = Matrix::zeros(m, m);
    for j in 0..m {
        let share = 1.0 / snap.out_degree(j) as f64;
        mat.set(j, j, share);
        for &(from, to) in snap.edges() {
            if from == j {
                mat.set(to, j, share);
            }
        }
    }
    WeightMatrix { inner: mat }
}

/// A deterministic rule producing the snapshot for each round.
#[derive(Clone, Debug)]
pub enum GraphSchedule {
    /// The same snapshot every round.
    Static { snapshot: DigraphSnapshot },
    /// A single rotating edge: round t activates `t mod m -> (t+1) mod m`.
    /// Any aligned window of m rounds unions to the full directed cycle.
    RingRotation { m: usize },
    /// Random edges per round, drawn fresh for each aligned window of the
    /// given length; a random spanning cycle is spread over the window so
    /// every window union is strongly connected. Fully determined by the
    /// seed.
    RandomWindow { m: usize, window: u64, seed: u64 },
    /// Cycles through an explicit list of snapshots.
    Periodic { snapshots: Vec<DigraphSnapshot> },
}

impl GraphSchedule {
    pub fn ring(m: usize) -> Result<Self, Error> {
        Ok(GraphSchedule::Static { snapshot: DigraphSnapshot::ring(m)? })
    }

    pub fn periodic(snapshots: Vec<DigraphSnapshot>) -> Result<Self, Error> {
        if snapshots.is_empty() {
            return Err(Error::Dimension("periodic schedule needs snapshots".into()));
        }
        let m = snapshots[0].node_count();
        if snapshots.iter().any(|s| s.node_count() != m) {
            return Err(Error::Dimension("periodic snapshots disagree on node count".into()));
        }
        Ok(GraphSchedule::Periodic { snapshots })
    }

    pub fn random_window(m: usize, window: u64, seed: u64) -> Result<Self, Error> {
        if window == 0 {
            return Err(Error::Dimension("window length must be positive".into()));
        }
        if m == 0 {
            return Err(Error::Dimension("schedule needs at least one node".into()));
        }
        Ok(GraphSchedule::RandomWindow { m, window, seed })
    }

    pub fn node_count(&self) -> usize {
        match self {
            GraphSchedule::Static { snapshot } => snapshot.node_count(),
            GraphSchedule::RingRotation { m } => *m,
            GraphSchedule::RandomWindow { m, .. } => *m,
            GraphSchedule::Periodic { snapshots } => snapshots[0].node_count(),
        }
    }

    /// Window length at which the schedule is jointly connected by
    /// construction.
    pub fn natural_window(&self) -> u64 {
        match self {
            GraphSchedule::Static { .. } => 1,
            GraphSchedule::RingRotation { m } => *m as u64,
            GraphSchedule::RandomWindow { window, .. } => *window,
            GraphSchedule::Periodic { snapshots } => snapshots.len() as u64,
        }
    }

    pub fn snapshot(&self, t: u64) -> DigraphSnapshot {
        match self {
            GraphSchedule::Static { snapshot } => snapshot.clone(),
            GraphSchedule::RingRotation { m } => {
                let m = *m;
                if m == 1 {
                    return DigraphSnapshot::new(1, Vec::new()).unwrap();
                }
                let from = (t % m as u64) as usize;
                let to = ((t + 1) % m as u64) as usize;
                DigraphSnapshot::new(m, vec![(from, to)]).unwrap()
            }
            GraphSchedule::RandomWindow { m, window, seed } => {
                random_window_snapshot(*m, *window, *seed, t)
            }
            GraphSchedule::Periodic { snapshots } => {
                snapshots[(t % snapshots.len() as u64) as usize].clone()
            }
        }
    }
}

/// Regenerates window `t / window` of the random schedule and returns the
/// snapshot for round t. Each window draws a random spanning cycle, assigns
/// each of its edges to a uniformly random round of the window, and sprinkles
/// `ceil(m/3)` extra random edges into every round.
fn random_window_snapshot(m: usize, window: u64, seed: u64, t: u64) -> DigraphSnapshot {
    if m == 1 {
        return DigraphSnapshot::new(1, Vec::new()).unwrap();
    }
    let k = t / window;
    let offset = (t % window) as usize;
    let mut rng = window_rng(seed, k);

    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut rounds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); window as usize];
    for i in 0..m {
        let edge = (perm[i], perm[(i + 1) % m]);
        let slot = rng.gen_range(0..window) as usize;
        rounds[slot].push(edge);
    }
    let extra = m.div_ceil(3);
    for slot_edges in rounds.iter_mut() {
        for _ in 0..extra {
            let from = rng.gen_range(0..m);
            let mut to = rng.gen_range(0..m - 1);
            if to >= from {
                to += 1;
            }
            slot_edges.push((from, to));
        }
    }
    DigraphSnapshot::new(m, rounds[offset].clone()).unwrap()
}

fn window_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&k.to_le_bytes());
    bytes[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// True iff the union of every complete aligned window `[kB, kB + B)` with
/// `kB + B <= horizon` (plus implicit self-loops) is strongly connected.
/// Vacuously true when the horizon holds no complete window.
pub fn check_b_strong_connectivity(sched: &GraphSchedule, b: u64, horizon: u64) -> Result<bool, Error> {
    if b == 0 {
        return Err(Error::Dimension("window length must be positive".into()));
    }
    let mut k = 0u64;
    while k * b + b <= horizon {
        let snaps: Vec<DigraphSnapshot> = (0..b).map(|r| sched.snapshot(k * b + r)).collect();
        if !DigraphSnapshot::union(snaps.iter())?.is_strongly_connected() {
            return Ok(false);
        }
        k += 1;
    }
    Ok(true)
}
