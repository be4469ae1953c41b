/// Binary sum tree over a fixed number of leaves. Leaf `i` holds a
/// non-negative mass; `find` maps a point in `[0, total)` to the leaf whose
/// prefix interval contains it.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf index for `x`; values at or past the total land on the last
    /// leaf with positive mass.
    pub fn find(&self, mut x: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if x < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                x -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_track_updates() {
        let mut t = SumTree::new(5);
        for (i, v) in [1.0, 2.0, 3.0, 4.0, 5.0].into_iter().enumerate() {
            t.set(i, v);
        }
        assert_eq!(t.total(), 15.0);
        t.set(2, 0.5);
        assert_eq!(t.total(), 12.5);
        assert_eq!(t.get(2), 0.5);
    }

    #[test]
    fn find_follows_prefix_sums() {
        let mut t = SumTree::new(3);
        t.set(0, 1.0);
        t.set(1, 3.0);
        t.set(2, 2.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 1);
        assert_eq!(t.find(3.999), 1);
        assert_eq!(t.find(4.0), 2);
        assert_eq!(t.find(6.0), 2);
        assert_eq!(t.find(100.0), 2);
    }
}
