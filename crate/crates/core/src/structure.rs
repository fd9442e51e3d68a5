//! Class-structure checks that must pass before any solve: the target states
//! are absorbing, and the target is lower reachable from every other state.

use std::collections::VecDeque;

use serde::Serialize;

use crate::model::{Model, ValueFunction};
use crate::ops::apply_lower;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorbingCheck {
    pub absorbing: bool,
    /// Pairs `(x, y)` with `x` in the target and `upper(x, y) > 0`.
    pub violations: Vec<(usize, usize)>,
}

/// Every member has a zero row on the target iff all upper bounds out of the
/// target vanish.
pub fn check_absorbing(model: &Model) -> AbsorbingCheck {
    let set = model.rates();
    let n = model.n_states();
    let violations: Vec<_> = model
        .target()
        .members()
        .into_iter()
        .flat_map(|x| (0..n).filter(move |&y| y != x).map(move |y| (x, y)))
        .filter(|&(x, y)| set.upper(x, y) > 0.0)
        .collect();
    AbsorbingCheck {
        absorbing: violations.is_empty(),
        violations,
    }
}

/// Result of the lower-reachability search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachabilityCertificate {
    /// Per state; target states count as reachable.
    pub reachable: Vec<bool>,
    /// For each reachable non-target state, a shortest path `x_1, ..., x_{n+1}`
    /// ending in the target with a positive lower rate on every step.
    pub witnesses: Vec<Option<Vec<usize>>>,
}

impl ReachabilityCertificate {
    pub fn all_reachable(&self) -> bool {
        self.reachable.iter().all(|&r| r)
    }

    pub fn unreachable_states(&self) -> Vec<usize> {
        (0..self.reachable.len())
            .filter(|&x| !self.reachable[x])
            .collect()
    }
}

/// Threshold on `Q_lower 1_y (x)` for an edge `x -> y`. The bounds are read,
/// not computed, so exact zero is the right cut.
const REACH_EPS: f64 = 0.0;

/// Directed edges `x -> y` with `Q_lower 1_y (x) > 0`, as an adjacency matrix.
pub fn lower_edges(model: &Model) -> Vec<Vec<bool>> {
    let n = model.n_states();
    let mut edges = vec![vec![false; n]; n];
    for y in 0..n {
        let col = apply_lower(model.rates(), &ValueFunction::unit(n, y));
        for x in 0..n {
            if x != y && col[x] > REACH_EPS {
                edges[x][y] = true;
            }
        }
    }
    edges
}

/// Backward breadth-first search from the target over the lower edges.
pub fn check_lower_reachability(model: &Model) -> ReachabilityCertificate {
    let n = model.n_states();
    let target = model.target();
    let edges = lower_edges(model);
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut reachable: Vec<bool> = (0..n).map(|x| target.contains(x)).collect();
    let mut queue: VecDeque<usize> = target.members().into();
    while let Some(y) = queue.pop_front() {
        for x in 0..n {
            if !reachable[x] && edges[x][y] {
                reachable[x] = true;
                next[x] = Some(y);
                queue.push_back(x);
            }
        }
    }
    let witnesses = (0..n)
        .map(|x| {
            if target.contains(x) || !reachable[x] {
                return None;
            }
            let mut path = vec![x];
            let mut cur = x;
            while let Some(y) = next[cur] {
                path.push(y);
                cur = y;
            }
            Some(path)
        })
        .collect();
    ReachabilityCertificate {
        reachable,
        witnesses,
    }
}
