//! Maximum-cardinality matching in general graphs (Edmonds' blossom
//! algorithm) with a lexicographic preference over edges.

const NIL: usize = usize::MAX;

struct Matcher {
    adj: Vec<Vec<usize>>,
    mate: Vec<usize>,
    alive: Vec<bool>,
    used: Vec<bool>,
    parent: Vec<usize>,
    base: Vec<usize>,
    blossom: Vec<bool>,
    lca_mark: Vec<u64>,
    stamp: u64,
    touched: Vec<usize>,
    in_touched: Vec<bool>,
}

impl Matcher {
    fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        Self {
            adj,
            mate: vec![NIL; n],
            alive: vec![true; n],
            used: vec![false; n],
            parent: vec![NIL; n],
            base: (0..n).collect(),
            blossom: vec![false; n],
            lca_mark: vec![0; n],
            stamp: 0,
            touched: Vec::new(),
            in_touched: vec![false; n],
        }
    }

    fn touch(&mut self, v: usize) {
        if !self.in_touched[v] {
            self.in_touched[v] = true;
            self.touched.push(v);
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.used[v] = false;
            self.parent[v] = NIL;
            self.base[v] = v;
            self.blossom[v] = false;
            self.in_touched[v] = false;
        }
        self.touched.clear();
    }

    fn lca(&mut self, mut a: usize, mut b: usize) -> usize {
        self.stamp += 1;
        loop {
            a = self.base[a];
            self.lca_mark[a] = self.stamp;
            if self.mate[a] == NIL {
                break;
            }
            a = self.parent[self.mate[a]];
        }
        loop {
            b = self.base[b];
            if self.lca_mark[b] == self.stamp {
                return b;
            }
            b = self.parent[self.mate[b]];
        }
    }

    fn mark_path(&mut self, mut v: usize, b: usize, mut child: usize) {
        while self.base[v] != b {
            let m = self.mate[v];
            let (bv, bm) = (self.base[v], self.base[m]);
            self.blossom[bv] = true;
            self.blossom[bm] = true;
            self.parent[v] = child;
            child = m;
            v = self.parent[m];
        }
    }

    /// Searches for an augmenting path from the free vertex `root` over live
    /// vertices and returns its other end.
    fn find_path(&mut self, root: usize) -> Option<usize> {
        self.reset();
        self.touch(root);
        self.used[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for i in 0..self.adj[v].len() {
                let to = self.adj[v][i];
                if !self.alive[to] || self.base[v] == self.base[to] || self.mate[v] == to {
                    continue;
                }
                if to == root || (self.mate[to] != NIL && self.parent[self.mate[to]] != NIL) {
                    let cur = self.lca(v, to);
                    for &t in &self.touched {
                        self.blossom[t] = false;
                    }
                    self.mark_path(v, cur, to);
                    self.mark_path(to, cur, v);
                    for idx in 0..self.touched.len() {
                        let t = self.touched[idx];
                        if self.blossom[self.base[t]] {
                            self.base[t] = cur;
                            if !self.used[t] {
                                self.used[t] = true;
                                queue.push_back(t);
                            }
                        }
                    }
                } else if self.parent[to] == NIL {
                    self.touch(to);
                    self.parent[to] = v;
                    if self.mate[to] == NIL {
                        return Some(to);
                    }
                    let next = self.mate[to];
                    self.touch(next);
                    self.used[next] = true;
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn augment(&mut self, end: usize) {
        let mut v = end;
        while v != NIL {
            let pv = self.parent[v];
            let ppv = self.mate[pv];
            self.mate[v] = pv;
            self.mate[pv] = v;
            v = ppv;
        }
    }

    fn try_augment_from(&mut self, root: usize) -> bool {
        match self.find_path(root) {
            Some(end) => {
                self.augment(end);
                true
            }
            None => false,
        }
    }
}

/// Picks a maximum-cardinality matching of the graph on `n` vertices whose
/// edges, listed from most to least preferred, form the lexicographically
/// smallest sequence among all maximum matchings. Returns the indices of the
/// chosen edges in preference order. Self-loops are never chosen.
pub fn lexmin_max_matching(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let proper: Vec<(usize, usize)> = edges.iter().copied().filter(|(u, v)| u != v).collect();
    let mut m = Matcher::new(n, &proper);
    for v in 0..n {
        if m.mate[v] == NIL && !m.adj[v].is_empty() {
            m.try_augment_from(v);
        }
    }

    let mut chosen = Vec::new();
    for (idx, &(u, v)) in edges.iter().enumerate() {
        if u == v || !m.alive[u] || !m.alive[v] {
            continue;
        }
        let (mu, mv) = (m.mate[u], m.mate[v]);
        let accept = if mu == v {
            true
        } else if mu == NIL || mv == NIL {
            // at most one endpoint can be free, otherwise the edge would augment
            for p in [mu, mv] {
                if p != NIL {
                    m.mate[p] = NIL;
                }
            }
            true
        } else {
            // both matched elsewhere: the partners lose their edges and one
            // augmenting path must restore the size minus one
            m.alive[u] = false;
            m.alive[v] = false;
            m.mate[mu] = NIL;
            m.mate[mv] = NIL;
            if m.try_augment_from(mu) || m.try_augment_from(mv) {
                true
            } else {
                m.alive[u] = true;
                m.alive[v] = true;
                m.mate[mu] = u;
                m.mate[mv] = v;
                false
            }
        };
        if accept {
            m.mate[u] = v;
            m.mate[v] = u;
            m.alive[u] = false;
            m.alive[v] = false;
            chosen.push(idx);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// All matchings by recursion over edges; returns the maximum size and
    /// the lexicographically smallest index list among maximum ones.
    fn brute(n: usize, edges: &[(usize, usize)]) -> (usize, Vec<usize>) {
        fn rec(i: usize, edges: &[(usize, usize)], used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (usize, Vec<usize>)) {
            if i == edges.len() {
                if cur.len() > best.0 || (cur.len() == best.0 && *cur < best.1) {
                    *best = (cur.len(), cur.clone());
                }
                return;
            }
            let (u, v) = edges[i];
            if u != v && !used[u] && !used[v] {
                used[u] = true;
                used[v] = true;
                cur.push(i);
                rec(i + 1, edges, used, cur, best);
                cur.pop();
                used[u] = false;
                used[v] = false;
            }
            rec(i + 1, edges, used, cur, best);
        }
        let mut best = (0, Vec::new());
        rec(0, edges, &mut vec![false; n], &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn greedy_would_lose_a_pair() {
        // path a-b-c-d with the middle edge preferred
        let edges = [(1, 2), (0, 1), (2, 3)];
        assert_eq!(lexmin_max_matching(4, &edges), vec![1, 2]);
    }

    #[test]
    fn odd_cycle_with_tail() {
        // triangle 0-1-2 with tails 2-3 and 0-4; maximum needs both tails
        let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (0, 4)];
        let got = lexmin_max_matching(5, &edges);
        assert_eq!(got, brute(5, &edges).1);
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn blossom_needed_for_augmentation() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 5), (2, 6), (6, 7)];
        let got = lexmin_max_matching(8, &edges);
        assert_eq!(got, brute(8, &edges).1);
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn empty_and_loops() {
        assert!(lexmin_max_matching(0, &[]).is_empty());
        assert!(lexmin_max_matching(2, &[(1, 1)]).is_empty());
    }

    fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..=12).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
            (Just(n), proptest::sample::subsequence(pairs.clone(), 0..=pairs.len().min(16)).prop_shuffle())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]
        #[test]
        fn matches_exhaustive_oracle((n, edges) in graph()) {
            let got = lexmin_max_matching(n, &edges);
            let (size, lex) = brute(n, &edges);
            prop_assert_eq!(got.len(), size);
            prop_assert_eq!(got, lex);
        }
    }
}
