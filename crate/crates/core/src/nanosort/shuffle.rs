use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use super::ConfigError;
use crate::netsim::NodeId;

/// Uniform random permutation of `items`, cut into `num_nodes` equal runs.
pub fn initial_shuffle<T, R: Rng + ?Sized>(
    mut items: Vec<T>,
    num_nodes: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>, ConfigError> {
    if num_nodes == 0 || !items.len().is_multiple_of(num_nodes) {
        return Err(ConfigError(format!(
            "{} keys cannot be split evenly over {num_nodes} nodes",
            items.len()
        )));
    }
    items.shuffle(rng);
    let per = items.len() / num_nodes;
    let mut out = Vec::with_capacity(num_nodes);
    let mut rest = items.into_iter();
    for _ in 0..num_nodes {
        out.push(rest.by_ref().take(per).collect());
    }
    Ok(out)
}

/// Splits a node range into `b` contiguous equal sub-ranges, bucket `i`
/// owning the `i`-th.
pub fn node_partition(group: Range<NodeId>, b: usize) -> Result<Vec<Range<NodeId>>, ConfigError> {
    let len = group.len();
    if b == 0 || !len.is_multiple_of(b) {
        return Err(ConfigError(format!("group of {len} nodes does not split into {b} parts")));
    }
    let step = (len / b) as NodeId;
    Ok((0..b as NodeId).map(|i| group.start + i * step..group.start + (i + 1) * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_chunks_preserve_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parts = initial_shuffle((0..1_048_576u32).collect(), 65_536, &mut rng).unwrap();
        assert_eq!(parts.len(), 65_536);
        assert!(parts.iter().all(|p| p.len() == 16));
        let mut all: Vec<u32> = parts.into_iter().flatten().collect();
        assert_ne!(all[..16], (0..16).collect::<Vec<_>>()[..]);
        all.sort_unstable();
        assert!(all.iter().enumerate().all(|(i, &v)| v == i as u32));
    }

    #[test]
    fn one_node_gets_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parts = initial_shuffle(vec![3, 1, 2], 1, &mut rng).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].len(), 3);
        assert!(initial_shuffle(vec![1, 2, 3], 2, &mut rng).is_err());
    }

    #[test]
    fn partitions() {
        assert_eq!(node_partition(0..16, 4).unwrap(), vec![0..4, 4..8, 8..12, 12..16]);
        assert_eq!(node_partition(0..4, 4).unwrap(), vec![0..1, 1..2, 2..3, 3..4]);
        let p = node_partition(4096..8192, 16).unwrap();
        assert_eq!(p.len(), 16);
        assert!(p.iter().all(|r| r.len() == 256));
        assert_eq!(p[15], 7936..8192);
        assert!(node_partition(0..10, 4).is_err());
    }
}
