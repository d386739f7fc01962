//! Incremental closure of the observes preorder on a QC set.
//!
//! QCs with the same block type and author form a chain ordered by
//! `(slot, z)`; within a chain a higher position observes every lower one.
//! Each position therefore carries a watermark per chain: the highest key in
//! that chain it observes. Points-to edges between blocks are added as they
//! become known and the watermarks of everything upstream are joined.

use std::collections::{BTreeMap, HashMap};

pub type Pos = usize;

/// Chain and key of a QC position; key 0 means "nothing observed".
pub fn key_of(z: u8, slot: u64) -> u64 {
    slot * 3 + z as u64 + 1
}

#[derive(Clone, Debug)]
pub struct ObservesIndex {
    chains: usize,
    ids: HashMap<(usize, u64), Pos>,
    chain: Vec<usize>,
    key: Vec<u64>,
    is_two: Vec<bool>,
    reach: Vec<Vec<u64>>,
    by_chain: Vec<BTreeMap<u64, Pos>>,
    final_wm: Vec<u64>,
}

impl ObservesIndex {
    pub fn new(chains: usize) -> Self {
        ObservesIndex {
            chains,
            ids: HashMap::new(),
            chain: Vec::new(),
            key: Vec::new(),
            is_two: Vec::new(),
            reach: Vec::new(),
            by_chain: vec![BTreeMap::new(); chains],
            final_wm: vec![0; chains],
        }
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn get(&self, chain: usize, key: u64) -> Option<Pos> {
        self.ids.get(&(chain, key)).copied()
    }

    pub fn chain_of(&self, p: Pos) -> usize {
        self.chain[p]
    }

    pub fn key_of(&self, p: Pos) -> u64 {
        self.key[p]
    }

    /// Adds a position, returning it and whether it is new.
    pub fn insert(&mut self, chain: usize, key: u64, is_two: bool) -> (Pos, bool) {
        if let Some(p) = self.get(chain, key) {
            return (p, false);
        }
        let mut reach = match self.by_chain[chain].range(..key).next_back() {
            Some((_, &below)) => self.reach[below].clone(),
            None => vec![0; self.chains],
        };
        reach[chain] = reach[chain].max(key);
        let p = self.chain.len();
        self.ids.insert((chain, key), p);
        self.chain.push(chain);
        self.key.push(key);
        self.is_two.push(is_two);
        if is_two {
            join(&mut self.final_wm, &reach);
        }
        self.reach.push(reach);
        self.by_chain[chain].insert(key, p);
        (p, true)
    }

    /// Records `x ⪰ y` and closes transitively.
    pub fn add_edge(&mut self, x: Pos, y: Pos) {
        if covers(&self.reach[x], &self.reach[y]) {
            return;
        }
        let (cx, kx) = (self.chain[x], self.key[x]);
        let add = self.reach[y].clone();
        for w in 0..self.reach.len() {
            if self.reach[w][cx] >= kx && !covers(&self.reach[w], &add) {
                join(&mut self.reach[w], &add);
                if self.is_two[w] {
                    join(&mut self.final_wm, &add);
                }
            }
        }
    }

    pub fn observes(&self, x: Pos, y: Pos) -> bool {
        self.reach[x][self.chain[y]] >= self.key[y]
    }

    /// Some 2-position observes `p`.
    pub fn is_final(&self, p: Pos) -> bool {
        self.final_wm[self.chain[p]] >= self.key[p]
    }

    fn tops(&self) -> impl Iterator<Item = Pos> + '_ {
        self.by_chain.iter().filter_map(|m| m.values().next_back().copied())
    }

    fn top_keys(&self) -> Vec<u64> {
        self.by_chain.iter().map(|m| m.keys().next_back().copied().unwrap_or(0)).collect()
    }

    /// Positions not strictly observed by any other position.
    pub fn tips(&self) -> Vec<Pos> {
        let tops: Vec<Pos> = self.tops().collect();
        let mut out = Vec::new();
        for &t in &tops {
            let dominated = tops.iter().any(|&u| u != t && self.observes(u, t) && !self.observes(t, u));
            if dominated {
                continue;
            }
            // Lower positions in the same chain that are equivalent to the top.
            let c = self.chain[t];
            for (_, &p) in self.by_chain[c].iter() {
                if p == t || self.observes(p, t) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Positions observing every position.
    pub fn single_tips(&self) -> Vec<Pos> {
        let tk = self.top_keys();
        let mut out: Vec<Pos> = self.tops().filter(|&t| covers(&self.reach[t], &tk)).collect();
        let mut lower = Vec::new();
        for &t in &out {
            for (_, &p) in self.by_chain[self.chain[t]].iter() {
                if p != t && covers(&self.reach[p], &tk) {
                    lower.push(p);
                }
            }
        }
        out.extend(lower);
        out
    }
}

fn covers(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

fn join(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x = (*x).max(*y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference closure: explicit relation matrix, Floyd–Warshall style.
    fn brute(positions: &[(usize, u64, bool)], edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let n = positions.len();
        let mut r = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                r[i][j] = positions[i].0 == positions[j].0 && positions[i].1 >= positions[j].1;
            }
        }
        for &(x, y) in edges {
            r[x][y] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if r[i][k] {
                    for j in 0..n {
                        if r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(usize, u64, bool),
        Edge(usize, usize),
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        proptest::collection::vec(
            prop_oneof![
                (0usize..4, 1u64..7, any::<bool>()).prop_map(|(c, k, t)| Op::Insert(c, k, t)),
                (0usize..20, 0usize..20).prop_map(|(x, y)| Op::Edge(x, y)),
            ],
            1..40,
        )
    }

    proptest! {
        #[test]
        fn matches_brute_force_closure(ops in ops()) {
            let mut idx = ObservesIndex::new(4);
            let mut positions: Vec<(usize, u64, bool)> = Vec::new();
            let mut edges = Vec::new();
            for op in ops {
                match op {
                    Op::Insert(c, k, t) => {
                        let (p, new) = idx.insert(c, k, t);
                        if new {
                            positions.push((c, k, t));
                        }
                        prop_assert_eq!(positions[p].0, c);
                    }
                    Op::Edge(x, y) if x < positions.len() && y < positions.len() => {
                        idx.add_edge(x, y);
                        edges.push((x, y));
                    }
                    Op::Edge(..) => {}
                }
                let r = brute(&positions, &edges);
                let n = positions.len();
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(idx.observes(i, j), r[i][j], "{} {}", i, j);
                    }
                    let fin = (0..n).any(|w| positions[w].2 && r[w][i]);
                    prop_assert_eq!(idx.is_final(i), fin);
                }
                let mut tips: Vec<Pos> = (0..n).filter(|&i| !(0..n).any(|j| r[j][i] && !r[i][j])).collect();
                let mut got = idx.tips();
                got.sort();
                tips.sort();
                prop_assert_eq!(got, tips);
                let mut singles: Vec<Pos> = (0..n).filter(|&i| (0..n).all(|j| r[i][j])).collect();
                let mut got = idx.single_tips();
                got.sort();
                singles.sort();
                prop_assert_eq!(got, singles);
            }
        }
    }

    #[test]
    fn chain_order_and_edges() {
        let mut idx = ObservesIndex::new(3);
        let (a0, _) = idx.insert(1, key_of(0, 0), false);
        let (a2, _) = idx.insert(1, key_of(1, 2), false);
        assert!(idx.observes(a2, a0));
        assert!(!idx.observes(a0, a2));
        let (g, _) = idx.insert(0, key_of(1, 0), false);
        assert_eq!(idx.tips().len(), 2);
        assert!(idx.single_tips().is_empty());
        idx.add_edge(a0, g);
        assert!(idx.observes(a2, g));
        assert_eq!(idx.single_tips(), vec![a2]);
        assert!(!idx.is_final(g));
        let (f, _) = idx.insert(1, key_of(2, 2), true);
        assert!(idx.is_final(g) && idx.is_final(a2) && idx.is_final(f));
    }
}
