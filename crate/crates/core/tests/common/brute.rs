use rotscore::matching::LabeledTree;

/// Exhaustive counterpart of the greedy matcher: every injective child
/// pairing at unordered nodes is tried and the best sum kept.
pub struct Brute<'a> {
    pub g: &'a LabeledTree,
    pub r: &'a LabeledTree,
    pub alpha: f64,
}

impl Brute<'_> {
    fn best_pairing(&self, g: usize, r: usize) -> (f64, Vec<(usize, usize)>) {
        let gc = self.g.children(g);
        let rc = self.r.children(r);
        if self.g.is_ordered(g) || self.r.is_ordered(r) {
            let p: Vec<(usize, usize)> = gc.iter().copied().zip(rc.iter().copied()).collect();
            return (p.iter().map(|&(a, b)| self.score(a, b)).sum(), p);
        }
        fn rec(me: &Brute, gc: &[usize], rc: &[usize], i: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, best: &mut (f64, Vec<(usize, usize)>)) {
            if i == gc.len() {
                let s: f64 = cur.iter().map(|&(a, b)| me.score(a, b)).sum();
                if s > best.0 + 1e-12 {
                    *best = (s, cur.clone());
                }
                return;
            }
            // leave gc[i] unpaired
            rec(me, gc, rc, i + 1, used, cur, best);
            for j in 0..rc.len() {
                if !used[j] {
                    used[j] = true;
                    cur.push((gc[i], rc[j]));
                    rec(me, gc, rc, i + 1, used, cur, best);
                    cur.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, Vec::new());
        rec(self, gc, rc, 0, &mut vec![false; rc.len()], &mut Vec::new(), &mut best);
        best
    }

    fn score(&self, g: usize, r: usize) -> f64 {
        let m = if self.g.label(g) == self.r.label(r) { 1.0 } else { 0.0 };
        let (ng, nr) = (self.g.children(g).len(), self.r.children(r).len());
        if ng == 0 && nr == 0 {
            return m;
        }
        self.alpha * m + (1.0 - self.alpha) * self.best_pairing(g, r).0 / ng.max(nr) as f64
    }

    pub fn matched_reference(&self) -> usize {
        let mut set = std::collections::BTreeSet::new();
        fn collect(me: &Brute, g: usize, r: usize, set: &mut std::collections::BTreeSet<usize>) {
            set.insert(r);
            for (a, b) in me.best_pairing(g, r).1 {
                if me.g.label(a) == me.r.label(b) {
                    collect(me, a, b, set);
                }
            }
        }
        for g in 0..self.g.len() {
            let mut best = (0, f64::NEG_INFINITY);
            for r in 0..self.r.len() {
                let s = self.score(g, r);
                if s > best.1 {
                    best = (r, s);
                }
            }
            if self.g.label(g) == self.r.label(best.0) {
                collect(self, g, best.0, &mut set);
            }
        }
        set.len()
    }
}

