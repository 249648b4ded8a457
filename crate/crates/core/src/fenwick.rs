//! Fenwick (binary indexed) tree over f64 weights with prefix-sum sampling.

/// One-based Fenwick tree; index 0 is unused.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
    len: usize,
}

impl Fenwick {
    pub fn new(len: usize) -> Self {
        Fenwick {
            tree: vec![0.0; len + 1],
            len,
        }
    }

    pub fn from_weights(weights: &[f64]) -> Self {
        let mut f = Fenwick::new(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            f.add(i + 1, w);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds `delta` to position `i` (1-based).
    pub fn add(&mut self, i: usize, delta: f64) {
        debug_assert!(i >= 1 && i <= self.len);
        let mut i = i;
        while i <= self.len {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of positions `1..=i`.
    pub fn prefix_sum(&self, i: usize) -> f64 {
        let mut i = i.min(self.len);
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix_sum(self.len)
    }

    /// Smallest index `i` with `prefix_sum(i) > target`, assuming nonnegative
    /// weights. `target` must be below the total.
    pub fn select(&self, target: f64) -> usize {
        let mut i = 0usize;
        let mut rem = target;
        let mut mask = self.len.next_power_of_two();
        while mask > 0 {
            let next = i + mask;
            if next <= self.len && self.tree[next] <= rem {
                rem -= self.tree[next];
                i = next;
            }
            mask >>= 1;
        }
        (i + 1).min(self.len)
    }
}
