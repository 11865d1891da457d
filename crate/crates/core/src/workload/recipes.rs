//! Parametrized DAG shapes with a single entry and a single exit task.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DagFamily {
    /// Mosaic-style fan out, pairwise overlap stage, reduction, second fan out and final merge.
    Montage,
    /// Groups of two-stage pipelines joined per group, twice.
    Ligo,
    /// Many independent tasks merged into one, next to a few short pipelines.
    Sipht,
}

impl DagFamily {
    pub const ALL: [DagFamily; 3] = [DagFamily::Montage, DagFamily::Ligo, DagFamily::Sipht];

    /// Smallest graph the recipe can build.
    pub fn min_size(self) -> usize {
        match self {
            DagFamily::Montage => 5,
            DagFamily::Ligo => 8,
            DagFamily::Sipht => 7,
        }
    }
}

/// Task count and edges of a graph over tasks `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagShape {
    pub tasks: usize,
    pub edges: Vec<(u32, u32)>,
}

struct Builder {
    next: u32,
    edges: Vec<(u32, u32)>,
}

impl Builder {
    fn new() -> Self {
        Builder { next: 0, edges: Vec::new() }
    }

    fn node(&mut self, parents: &[u32]) -> u32 {
        let id = self.next;
        self.next += 1;
        for &p in parents {
            self.edges.push((p, id));
        }
        id
    }

    fn finish(mut self) -> DagShape {
        self.edges.sort_unstable();
        self.edges.dedup();
        DagShape { tasks: self.next as usize, edges: self.edges }
    }
}

/// Builds a `family` graph with `size` tasks (at least the family minimum).
pub fn build(family: DagFamily, size: usize) -> DagShape {
    let n = size.max(family.min_size());
    match family {
        DagFamily::Montage => montage(n),
        DagFamily::Ligo => ligo(n),
        DagFamily::Sipht => sipht(n),
    }
}

fn montage(n: usize) -> DagShape {
    let k = ((n - 3) / 3).max(1);
    let diffs = n - 3 - 2 * k;
    let mut b = Builder::new();
    let entry = b.node(&[]);
    let proj: Vec<u32> = (0..k).map(|_| b.node(&[entry])).collect();
    let diff: Vec<u32> = (0..diffs)
        .map(|d| {
            let (x, y) = (proj[d % k], proj[(d + 1) % k]);
            if x == y {
                b.node(&[x])
            } else {
                b.node(&[x, y])
            }
        })
        .collect();
    let fit = if diff.is_empty() { b.node(&proj) } else { b.node(&diff) };
    let back: Vec<u32> = proj.iter().map(|&p| b.node(&[fit, p])).collect();
    b.node(&back);
    b.finish()
}

fn ligo(n: usize) -> DagShape {
    let total = |p: usize| 2 + 4 * p + 2 * p.div_ceil(5);
    let mut p = ((n - 2) / 4).max(1);
    while p > 1 && total(p) > n {
        p -= 1;
    }
    let pad = n - total(p);
    let groups = p.div_ceil(5);
    let mut b = Builder::new();
    let entry = b.node(&[]);
    let mut second_joins = Vec::new();
    for g in 0..groups {
        let chains = (g * 5..((g + 1) * 5).min(p)).count();
        let mut firsts = Vec::new();
        for _ in 0..chains {
            let a = b.node(&[entry]);
            firsts.push(b.node(&[a]));
        }
        if g == 0 {
            for _ in 0..pad {
                firsts.push(b.node(&[entry]));
            }
        }
        let join = b.node(&firsts);
        let mut seconds = Vec::new();
        for _ in 0..chains {
            let c = b.node(&[join]);
            seconds.push(b.node(&[c]));
        }
        second_joins.push(b.node(&seconds));
    }
    b.node(&second_joins);
    b.finish()
}

fn sipht(n: usize) -> DagShape {
    let chains = ((n - 4) / 5).clamp(1, 6);
    let wide = n - 4 - 2 * chains;
    let mut b = Builder::new();
    let entry = b.node(&[]);
    let many: Vec<u32> = (0..wide).map(|_| b.node(&[entry])).collect();
    let concat = b.node(&many);
    let mut ends = vec![concat];
    for _ in 0..chains {
        let a = b.node(&[entry]);
        ends.push(b.node(&[a]));
    }
    let annotate = b.node(&ends);
    b.node(&[annotate]);
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dag;

    fn single_entry_exit(shape: &DagShape) -> bool {
        let edges: Vec<(usize, usize)> = shape.edges.iter().map(|&(p, c)| (p as usize, c as usize)).collect();
        let dag = Dag::from_edges(shape.tasks, &edges);
        let exits = (0..shape.tasks).filter(|&v| dag.children[v].is_empty()).count();
        dag.is_acyclic() && dag.roots().count() == 1 && exits == 1
    }

    #[test]
    fn sizes_are_exact_and_shapes_valid() {
        for family in DagFamily::ALL {
            for n in family.min_size()..300 {
                let s = build(family, n);
                assert_eq!(s.tasks, n, "{family:?} {n}");
                assert!(single_entry_exit(&s), "{family:?} {n}");
            }
        }
    }
}
