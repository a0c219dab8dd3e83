#![allow(dead_code)]

pub mod fd;
pub mod oracle;

use dagnn::{Dag, Edge};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random DAG with `1..=n_max` nodes, each forward pair joined with
/// probability `p`, then relabeled by a random permutation so that node
/// indices carry no ordering information. Features are uniform in
/// `[-1, 1]` of width `dim`.
pub fn random_dag(seed: u64, n_max: usize, p: f64, edge_types: usize, dim: usize) -> Dag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=n_max);
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push(Edge::new(label[i], label[j], rng.gen_range(0..edge_types)));
            }
        }
    }
    let features = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    Dag::new(n, edges, features).expect("forward edges form a DAG")
}

pub fn random_permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// `reach[u][v]` is true when a directed path of at least one edge leads
/// from `u` to `v`, found by depth-first search from every node.
pub fn reachability(dag: &Dag) -> Vec<Vec<bool>> {
    let n = dag.num_nodes();
    let mut reach = vec![vec![false; n]; n];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack: Vec<usize> = dag.successors(s).to_vec();
        while let Some(v) = stack.pop() {
            if !row[v] {
                row[v] = true;
                stack.extend_from_slice(dag.successors(v));
            }
        }
    }
    reach
}

/// Node count of the longest directed path, by enumerating every path.
pub fn longest_path_brute_force(dag: &Dag) -> usize {
    fn walk(dag: &Dag, v: usize) -> usize {
        1 + dag.successors(v).iter().map(|&u| walk(dag, u)).max().unwrap_or(0)
    }
    (0..dag.num_nodes()).map(|v| walk(dag, v)).max().unwrap_or(0)
}
