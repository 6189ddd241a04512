//! Fenwick tree over nonnegative weights for O(log n) weighted sampling.

#[derive(Debug, Clone)]
pub struct PrefixSumTree {
    // 1-based Fenwick array; tree[0] is unused.
    tree: Vec<f64>,
    // Largest power of two not exceeding len, for the descent in `find`.
    top_bit: usize,
}

impl PrefixSumTree {
    pub fn new(weights: &[f64]) -> Self {
        let len = weights.len();
        let mut tree = vec![0.0; len + 1];
        tree[1..].copy_from_slice(weights);
        for i in 1..=len {
            let parent = i + (i & i.wrapping_neg());
            if parent <= len {
                tree[parent] += tree[i];
            }
        }
        let top_bit = if len == 0 { 0 } else { 1 << (usize::BITS - 1 - len.leading_zeros()) };
        Self { tree, top_bit }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds `delta` to entry `idx`.
    pub fn add(&mut self, idx: usize, delta: f64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of entries `0..end`.
    pub fn prefix_sum(&self, end: usize) -> f64 {
        let mut i = end;
        let mut sum = 0.0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    ///
    /// Targets at or beyond the total clamp to the last index.
    pub fn find(&self, mut target: f64) -> usize {
        let mut pos = 0;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(self.len() - 1)
    }
}
