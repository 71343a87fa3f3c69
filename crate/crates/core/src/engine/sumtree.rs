/// Complete binary tree of non-negative weights with O(log n) update and
/// proportional sampling. Internal nodes are recomputed from their children
/// on every update, so no rounding drift accumulates.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(n: usize) -> Self {
        let leaves = n.max(1).next_power_of_two();
        SumTree { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn from_weights(w: &[f64]) -> Self {
        let mut t = SumTree::new(w.len());
        t.nodes[t.leaves..t.leaves + w.len()].copy_from_slice(w);
        for i in (1..t.leaves).rev() {
            t.nodes[i] = t.nodes[2 * i] + t.nodes[2 * i + 1];
        }
        t
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0);
        let mut k = self.leaves + i;
        self.nodes[k] = w;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf `i` with `prefix(i) <= u < prefix(i + 1)`, for `u` in `[0, total)`.
    ///
    /// Returns `None` only if rounding lands on a zero-weight leaf.
    pub fn find(&self, mut u: f64) -> Option<usize> {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        (self.nodes[k] > 0.0).then_some(k - self.leaves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_lookup() {
        let mut t = SumTree::from_weights(&[1.0, 0.0, 2.0, 3.0, 0.5]);
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.5), Some(0));
        assert_eq!(t.find(1.0), Some(2));
        assert_eq!(t.find(3.5), Some(3));
        assert_eq!(t.find(6.2), Some(4));
        t.set(3, 0.0);
        assert_eq!(t.total(), 3.5);
        assert_eq!(t.find(3.2), Some(4));
        assert_eq!(t.get(2), 2.0);
    }

    #[test]
    fn zero_weight_leaves_are_never_returned() {
        let t = SumTree::from_weights(&[0.0, 1.0, 0.0]);
        for i in 0..100 {
            let u = i as f64 / 100.0;
            assert_eq!(t.find(u), Some(1));
        }
    }
}
