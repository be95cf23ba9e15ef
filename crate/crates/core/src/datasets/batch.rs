use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic batch schedule over `len` items.
///
/// Each epoch is a permutation derived from `(seed, epoch)`; the trailing
/// `len % batch_size` items of an epoch are dropped so every batch is full.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchOrder {
    len: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
}

impl BatchOrder {
    pub fn new(len: usize, batch_size: usize, seed: u64, shuffle: bool) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if len < batch_size {
            return Err(Error::invalid(format!(
                "{len} items cannot fill a batch of {batch_size}"
            )));
        }
        Ok(Self {
            len,
            batch_size,
            seed,
            shuffle,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len / self.batch_size
    }

    pub fn epoch_permutation(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len).collect();
        if self.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch);
            order.shuffle(&mut rng);
        }
        order
    }

    /// Indices of the `index`-th batch of the endless stream.
    pub fn batch(&self, index: u64) -> Vec<usize> {
        let per_epoch = self.batches_per_epoch() as u64;
        let epoch = index / per_epoch;
        let start = (index % per_epoch) as usize * self.batch_size;
        self.epoch_permutation(epoch)[start..start + self.batch_size].to_vec()
    }

    /// Batches of one epoch.
    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = Vec<usize>> {
        let perm = self.epoch_permutation(epoch);
        let bs = self.batch_size;
        (0..self.batches_per_epoch()).map(move |b| perm[b * bs..(b + 1) * bs].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_partial_batches() {
        let order = BatchOrder::new(10, 4, 0, true).unwrap();
        assert_eq!(order.batches_per_epoch(), 2);
        assert_eq!(order.epoch(0).count(), 2);
        assert!(BatchOrder::new(10, 0, 0, true).is_err());
        assert!(BatchOrder::new(3, 4, 0, true).is_err());
    }

    #[test]
    fn same_seed_same_order() {
        let a = BatchOrder::new(20, 3, 7, true).unwrap();
        let b = BatchOrder::new(20, 3, 7, true).unwrap();
        assert_eq!(a.epoch(2).collect::<Vec<_>>(), b.epoch(2).collect::<Vec<_>>());
        assert_eq!(a.batch(13), b.batch(13));
        assert_eq!(a.batch(6 + 1), a.epoch(1).nth(1).unwrap());
    }

    #[test]
    fn unshuffled_is_identity() {
        let o = BatchOrder::new(5, 2, 1, false).unwrap();
        assert_eq!(o.epoch(3).collect::<Vec<_>>(), vec![vec![0, 1], vec![2, 3]]);
    }
}
