//! Fenwick (binary indexed) tree over non-negative integer weights, used to sample a
//! vertex proportionally to its discordant degree in O(log n).

#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<u64>,
    n: usize,
}

impl Fenwick {
    pub fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
            n,
        }
    }

    pub fn from_weights(weights: &[u64]) -> Self {
        let mut f = Fenwick::new(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            f.add(i, w as i64);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Adds `delta` to the weight at `i` (the result must stay non-negative).
    pub fn add(&mut self, i: usize, delta: i64) {
        let mut i = i + 1;
        while i <= self.n {
            self.tree[i] = (self.tree[i] as i64 + delta) as u64;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of weights over `0..=i`.
    pub fn prefix(&self, i: usize) -> u64 {
        let mut i = i + 1;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    pub fn total(&self) -> u64 {
        if self.n == 0 {
            0
        } else {
            self.prefix(self.n - 1)
        }
    }

    /// Smallest index i with prefix(i) > target; requires target < total().
    pub fn select(&self, target: u64) -> usize {
        debug_assert!(target < self.total());
        let mut idx = 0usize;
        let mut rem = target;
        let mut mask = self.n.next_power_of_two();
        while mask > 0 {
            let next = idx + mask;
            if next <= self.n && self.tree[next] <= rem {
                rem -= self.tree[next];
                idx = next;
            }
            mask >>= 1;
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_and_select_agree_with_linear_scan() {
        let weights = [3u64, 0, 5, 1, 0, 0, 7, 2];
        let f = Fenwick::from_weights(&weights);
        assert_eq!(f.total(), 18);
        let mut acc = 0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            assert_eq!(f.prefix(i), acc);
        }
        // Every target lands on the index owning that weight slice.
        let mut expect = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            for _ in 0..w {
                expect.push(i);
            }
        }
        for (t, &e) in expect.iter().enumerate() {
            assert_eq!(f.select(t as u64), e, "target {t}");
        }
    }

    #[test]
    fn updates_move_mass() {
        let mut f = Fenwick::from_weights(&[1, 1, 1]);
        f.add(1, 4);
        f.add(0, -1);
        assert_eq!(f.total(), 6);
        assert_eq!(f.select(0), 1);
        assert_eq!(f.select(4), 1);
        assert_eq!(f.select(5), 2);
    }
}
