#![allow(dead_code)]

use nagame::linalg;
use nagame::{ConvexSet, CostParams, GameSpec, Network, PrimitiveSet, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
    let l = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(0.5..1.5)
        } else if i > j {
            rng.random_range(-0.5..0.5)
        } else {
            0.0
        }
    });
    SpdMatrix::new(&l * l.transpose()).unwrap()
}

pub fn random_box(n: usize, rng: &mut ChaCha8Rng) -> ConvexSet {
    let lo = DVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
    let hi = DVector::from_fn(n, |i, _| lo[i] + rng.random_range(0.2..2.0));
    ConvexSet::from_primitive(PrimitiveSet::boxed(lo, hi).unwrap()).unwrap()
}

fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn random_derangement(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let p = random_permutation(n, rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

/// Convex combination of permutation matrices with random weights.
fn birkhoff(n: usize, perms: &[Vec<usize>], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let w: Vec<f64> = perms.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut p = DMatrix::zeros(n, n);
    for (perm, wk) in perms.iter().zip(&w) {
        for (i, &j) in perm.iter().enumerate() {
            p[(i, j)] += wk / total;
        }
    }
    p
}

/// Doubly stochastic with zero diagonal: a mixture of derangements.
pub fn zero_diagonal_network(n: usize, rng: &mut ChaCha8Rng) -> Network {
    let perms: Vec<Vec<usize>> = (0..3).map(|_| random_derangement(n, rng)).collect();
    Network::new(birkhoff(n, &perms, rng)).unwrap()
}

/// Doubly stochastic and primitive: identity and the cyclic shift plus
/// random permutations.
pub fn primitive_doubly_stochastic(n: usize, rng: &mut ChaCha8Rng) -> Network {
    let mut perms = vec![(0..n).collect::<Vec<_>>(), (0..n).map(|i| (i + 1) % n).collect()];
    for _ in 0..rng.random_range(0..3) {
        perms.push(random_permutation(n, rng));
    }
    Network::new(birkhoff(n, &perms, rng)).unwrap()
}

/// Symmetric doubly stochastic: Metropolis–Hastings weights on a random
/// graph (connected through a spanning path when `connected`).
pub fn symmetric_doubly_stochastic(m: usize, connected: bool, rng: &mut ChaCha8Rng) -> Network {
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let link = (connected && j == i + 1) || rng.random::<f64>() < 0.3;
            adj[i][j] = link;
            adj[j][i] = link;
        }
    }
    Network::metropolis(&adj).unwrap()
}

/// Random game satisfying `Mᵢ ≻ 0` on a zero-diagonal doubly stochastic
/// network: `qᵢλ_min(Q) > ‖C‖₂`.
pub fn random_row_one_game(rng: &mut ChaCha8Rng) -> GameSpec {
    let n_agents = rng.random_range(2..=10);
    let n = rng.random_range(1..=3);
    let q_matrix = random_spd(n, rng);
    let c_matrix = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let need = linalg::spectral_norm(&c_matrix) / q_matrix.min_eigenvalue();
    let q: Vec<f64> = (0..n_agents).map(|_| need * rng.random_range(1.1..2.0)).collect();
    let c: Vec<DVector<f64>> = (0..n_agents)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let sets = (0..n_agents).map(|_| random_box(n, rng)).collect();
    let costs = CostParams::new(q_matrix, c_matrix, q, c).unwrap();
    GameSpec::new(costs, sets, zero_diagonal_network(n_agents, rng), 1).unwrap()
}

/// Random starting signal inside the union of the agents' boxes.
pub fn random_signal(game: &GameSpec, rng: &mut ChaCha8Rng) -> nagame::StackedSignal {
    let n = game.dim();
    let agents: Vec<DVector<f64>> = game
        .sets()
        .iter()
        .map(|s| {
            let (lo, hi) = s.bounding_box().unwrap();
            DVector::from_fn(n, |r, _| rng.random_range(lo[r]..=hi[r]))
        })
        .collect();
    nagame::StackedSignal::from_agents(&agents).unwrap()
}
