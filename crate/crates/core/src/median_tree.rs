//! Approximate medians through trees of medians.
//!
//! Members are grouped into contiguous blocks of `fan_in`; each block
//! reports its lower median to an aggregator, and the aggregators repeat the
//! process until one value remains. Communication is logarithmic in the
//! number of leaves instead of linear.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("median of an empty list")]
    Empty,
    #[error("tree planned for {expected} leaves, got {actual} values")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid tree shape: {0}")]
    Shape(String),
}

/// Aggregation layout over leaves `0..num_leaves`.
///
/// `levels[0]` holds every leaf; `levels[k + 1]` holds the aggregators of
/// the blocks of `levels[k]`. The last level has exactly one member, the
/// root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreePlan {
    pub num_leaves: usize,
    pub fan_in: usize,
    pub depth: usize,
    rotation: usize,
    levels: Vec<Vec<u32>>,
}

impl TreePlan {
    /// Aggregator of each block is its lowest-id member.
    pub fn new(num_leaves: usize, fan_in: usize) -> Result<Self, TreeError> {
        Self::rotated(num_leaves, fan_in, 0)
    }

    /// Same blocks as [`TreePlan::new`], but the aggregator of a block of
    /// length `len` is its `rotation % len`-th member. Trees with different
    /// rotations spread aggregation work over different nodes while keeping
    /// identical grouping.
    pub fn rotated(num_leaves: usize, fan_in: usize, rotation: usize) -> Result<Self, TreeError> {
        if num_leaves == 0 {
            return Err(TreeError::Shape("a tree needs at least one leaf".into()));
        }
        if fan_in < 2 {
            return Err(TreeError::Shape(format!("fan-in {fan_in} < 2")));
        }
        let mut levels = vec![(0..num_leaves as u32).collect::<Vec<_>>()];
        while levels.last().expect("non-empty").len() > 1 {
            let next = levels
                .last()
                .expect("non-empty")
                .chunks(fan_in)
                .map(|block| block[rotation % block.len()])
                .collect();
            levels.push(next);
        }
        Ok(TreePlan { num_leaves, fan_in, depth: levels.len() - 1, rotation, levels })
    }

    pub fn members(&self, level: usize) -> &[u32] {
        &self.levels[level]
    }

    pub fn root(&self) -> u32 {
        self.levels[self.depth][0]
    }

    fn position(&self, level: usize, node: u32) -> Option<usize> {
        self.levels.get(level)?.binary_search(&node).ok()
    }

    /// Block containing `node` at `level`, if `node` is a member there.
    pub fn block(&self, level: usize, node: u32) -> Option<&[u32]> {
        if level >= self.depth {
            return None;
        }
        let pos = self.position(level, node)?;
        let members = &self.levels[level];
        let start = pos / self.fan_in * self.fan_in;
        Some(&members[start..(start + self.fan_in).min(members.len())])
    }

    /// Aggregator that `node` reports to at `level`.
    pub fn parent_of(&self, level: usize, node: u32) -> Option<u32> {
        let block = self.block(level, node)?;
        Some(block[self.rotation % block.len()])
    }

    /// Whether `node` aggregates a block at `level`.
    pub fn aggregates(&self, level: usize, node: u32) -> bool {
        level < self.depth && self.position(level + 1, node).is_some()
    }
}

/// Closed-form view of [`TreePlan::rotated`] that answers membership and
/// parent queries in `O(depth)` without materializing the levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeShape {
    pub num_leaves: usize,
    pub fan_in: usize,
    pub rotation: usize,
    pub depth: usize,
}

impl TreeShape {
    pub fn new(num_leaves: usize, fan_in: usize, rotation: usize) -> Result<Self, TreeError> {
        if num_leaves == 0 {
            return Err(TreeError::Shape("a tree needs at least one leaf".into()));
        }
        if fan_in < 2 {
            return Err(TreeError::Shape(format!("fan-in {fan_in} < 2")));
        }
        let mut depth = 0;
        let mut m = num_leaves;
        while m > 1 {
            m = m.div_ceil(fan_in);
            depth += 1;
        }
        Ok(TreeShape { num_leaves, fan_in, rotation, depth })
    }

    /// Number of members at `level`.
    pub fn count(&self, level: usize) -> usize {
        (0..level).fold(self.num_leaves, |m, _| m.div_ceil(self.fan_in))
    }

    fn block_len_at(&self, count: usize, block: usize) -> usize {
        (count - block * self.fan_in).min(self.fan_in)
    }

    /// Index of `node` among the members of `level`.
    pub fn position(&self, level: usize, node: u32) -> Option<usize> {
        let mut idx = node as usize;
        if idx >= self.num_leaves || level > self.depth {
            return None;
        }
        let mut count = self.num_leaves;
        for _ in 0..level {
            let block = idx / self.fan_in;
            let len = self.block_len_at(count, block);
            if idx - block * self.fan_in != self.rotation % len {
                return None;
            }
            idx = block;
            count = count.div_ceil(self.fan_in);
        }
        Some(idx)
    }

    /// Leaf id of the `idx`-th member of `level`.
    pub fn member(&self, level: usize, idx: usize) -> u32 {
        let counts: Vec<usize> = (0..=level).map(|l| self.count(l)).collect();
        let mut idx = idx;
        for l in (0..level).rev() {
            let len = self.block_len_at(counts[l], idx);
            idx = idx * self.fan_in + self.rotation % len;
        }
        idx as u32
    }

    /// Length of the block containing `node` at `level`.
    pub fn block_len(&self, level: usize, node: u32) -> Option<usize> {
        if level >= self.depth {
            return None;
        }
        let pos = self.position(level, node)?;
        Some(self.block_len_at(self.count(level), pos / self.fan_in))
    }

    pub fn parent(&self, level: usize, node: u32) -> Option<u32> {
        if level >= self.depth {
            return None;
        }
        let pos = self.position(level, node)?;
        Some(self.member(level + 1, pos / self.fan_in))
    }

    pub fn aggregates(&self, level: usize, node: u32) -> bool {
        level < self.depth && self.position(level + 1, node).is_some()
    }

    pub fn root(&self) -> u32 {
        self.member(self.depth, 0)
    }
}

/// Lower median: the element at index `(len - 1) / 2` of the sorted values.
pub fn median<T: Ord + Clone>(values: &[T]) -> Result<T, TreeError> {
    if values.is_empty() {
        return Err(TreeError::Empty);
    }
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable(mid);
    Ok(m.clone())
}

/// Evaluates the tree bottom-up; the result is always one of the inputs.
pub fn tree_median<T: Ord + Clone>(values: &[T], plan: &TreePlan) -> Result<T, TreeError> {
    if values.len() != plan.num_leaves {
        return Err(TreeError::LengthMismatch { expected: plan.num_leaves, actual: values.len() });
    }
    let mut current = values.to_vec();
    for _ in 0..plan.depth {
        current = current
            .chunks(plan.fan_in)
            .map(median)
            .collect::<Result<_, _>>()?;
    }
    debug_assert_eq!(current.len(), 1);
    Ok(current.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn depths() {
        assert_eq!(TreePlan::new(1000, 10).unwrap().depth, 3);
        assert_eq!(TreePlan::new(100, 10).unwrap().depth, 2);
        assert_eq!(TreePlan::new(1, 7).unwrap().depth, 0);
        assert_eq!(TreePlan::new(64, 8).unwrap().depth, 2);
        assert_eq!(TreePlan::new(65_536, 16).unwrap().depth, 4);
        assert_eq!(TreePlan::new(1024, 16).unwrap().depth, 3);
        assert!(TreePlan::new(10, 1).is_err());
        assert!(TreePlan::new(0, 4).is_err());
    }

    #[test]
    fn blocks_and_parents() {
        let plan = TreePlan::new(10, 4).unwrap();
        assert_eq!(plan.members(1), &[0, 4, 8]);
        assert_eq!(plan.members(2), &[0]);
        assert_eq!(plan.block(0, 9).unwrap(), &[8, 9]);
        assert_eq!(plan.parent_of(0, 9), Some(8));
        assert_eq!(plan.parent_of(1, 8), Some(0));
        assert_eq!(plan.parent_of(1, 9), None);
        assert!(plan.aggregates(0, 4));
        assert!(!plan.aggregates(1, 4));
        assert_eq!(plan.root(), 0);
    }

    #[test]
    fn rotation_moves_aggregators() {
        let plan = TreePlan::rotated(32, 16, 3).unwrap();
        assert_eq!(plan.members(1), &[3, 19]);
        assert_eq!(plan.members(2), &[19]);
        assert_eq!(plan.parent_of(0, 0), Some(3));
        assert_eq!(plan.parent_of(1, 3), Some(19));
        // Short last block wraps the rotation.
        let plan = TreePlan::rotated(18, 16, 5).unwrap();
        assert_eq!(plan.members(1), &[5, 17]);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&(1..=9).collect::<Vec<_>>()).unwrap(), 5);
        assert_eq!(median(&(1..=10).collect::<Vec<_>>()).unwrap(), 5);
        assert_eq!(median(&[7]).unwrap(), 7);
        assert_eq!(median::<u32>(&[]), Err(TreeError::Empty));
    }

    #[test]
    fn tree_median_errors_and_trivia() {
        let plan = TreePlan::new(5, 2).unwrap();
        assert!(matches!(
            tree_median(&[1, 2, 3], &plan),
            Err(TreeError::LengthMismatch { expected: 5, actual: 3 })
        ));
        let plan = TreePlan::new(6, 3).unwrap();
        assert_eq!(tree_median(&[4; 6], &plan).unwrap(), 4);
    }

    /// Brute-force check: over random permutations of 1..=100 the tree median
    /// always lands between the 25th and 75th percentile.
    #[test]
    fn tree_median_of_permutations_stays_central() {
        let plan = TreePlan::new(100, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v: Vec<u32> = (1..=100).collect();
        let mut sum = 0u64;
        for _ in 0..10_000 {
            v.shuffle(&mut rng);
            let m = tree_median(&v, &plan).unwrap();
            assert!((25..=75).contains(&m), "tree median {m}");
            sum += m as u64;
        }
        // Two rounds of lower medians of ten pull the result below 50.
        let mean = sum as f64 / 10_000.0;
        assert!((40.0..50.0).contains(&mean), "mean tree median {mean}");
    }

    proptest! {
        #[test]
        fn tree_median_returns_an_input(values in prop::collection::vec(any::<u16>(), 1..300), fan in 2usize..20) {
            let plan = TreePlan::new(values.len(), fan).unwrap();
            let m = tree_median(&values, &plan).unwrap();
            prop_assert!(values.contains(&m));
        }

        #[test]
        fn wide_tree_is_exact_median(values in prop::collection::vec(any::<u32>(), 1..200)) {
            let plan = TreePlan::new(values.len(), values.len().max(2)).unwrap();
            prop_assert_eq!(tree_median(&values, &plan).unwrap(), median(&values).unwrap());
        }

        #[test]
        fn closed_form_matches_plan(n in 1usize..3000, fan in 2usize..20, rot in 0usize..20) {
            let plan = TreePlan::rotated(n, fan, rot).unwrap();
            let shape = TreeShape::new(n, fan, rot).unwrap();
            prop_assert_eq!(shape.depth, plan.depth);
            prop_assert_eq!(shape.root(), plan.root());
            for level in 0..=plan.depth {
                let members = plan.members(level);
                prop_assert_eq!(shape.count(level), members.len());
                for (i, &m) in members.iter().enumerate() {
                    prop_assert_eq!(shape.member(level, i), m);
                    prop_assert_eq!(shape.position(level, m), Some(i));
                    prop_assert_eq!(shape.parent(level, m), plan.parent_of(level, m));
                    prop_assert_eq!(shape.aggregates(level, m), plan.aggregates(level, m));
                    prop_assert_eq!(shape.block_len(level, m), plan.block(level, m).map(|b| b.len()));
                }
            }
            for x in 0..n as u32 {
                for level in 1..=plan.depth {
                    prop_assert_eq!(shape.position(level, x).is_some(), plan.members(level).contains(&x));
                }
            }
        }

        #[test]
        fn plan_shape(n in 1usize..5000, fan in 2usize..40, rot in 0usize..40) {
            let plan = TreePlan::rotated(n, fan, rot).unwrap();
            let mut expected_depth = 0;
            let mut m = n;
            while m > 1 { m = m.div_ceil(fan); expected_depth += 1; }
            prop_assert_eq!(plan.depth, expected_depth);
            prop_assert_eq!(plan.members(plan.depth).len(), 1);
            for level in 0..plan.depth {
                for &x in plan.members(level) {
                    let p = plan.parent_of(level, x).unwrap();
                    prop_assert!(plan.members(level + 1).contains(&p));
                }
            }
        }
    }
}
