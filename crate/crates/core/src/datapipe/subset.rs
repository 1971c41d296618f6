//! Deterministic stratified subsets.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeedStream;

use super::{Dataset, DatasetSlice, Split};

/// Stratified sample of `size` indices from the whole dataset.
pub fn stratified_subset(
    ds: &Dataset,
    size: usize,
    split: Split,
    seed: SeedStream,
) -> Result<DatasetSlice> {
    let all: Vec<usize> = (0..ds.len()).collect();
    stratified_subset_of(ds, &all, size, split, seed)
}

/// Stratified sample of `size` indices drawn without replacement from `pool`.
///
/// Each class gets `floor(size * n_c / n)` items; the remainder goes one at
/// a time to classes visited in a seeded random order. On a balanced pool
/// every class count is within one of `size / K`.
pub fn stratified_subset_of(
    ds: &Dataset,
    pool: &[usize],
    size: usize,
    split: Split,
    seed: SeedStream,
) -> Result<DatasetSlice> {
    if size > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "subset of {size} requested from {} items",
            pool.len()
        )));
    }
    let k = ds.num_classes;
    if size < k {
        log::warn!("subset of {size} cannot cover all {k} classes");
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in pool {
        if i >= ds.len() {
            return Err(Error::InvalidArgument(format!(
                "pool index {i} out of range"
            )));
        }
        by_class[ds.labels()[i]].push(i);
    }
    let n = pool.len().max(1);
    let mut quota: Vec<usize> = by_class.iter().map(|c| size * c.len() / n).collect();
    let mut remainder = size - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut seed.derive("remainder").rng());
    while remainder > 0 {
        let before = remainder;
        for &c in &order {
            if remainder > 0 && quota[c] < by_class[c].len() {
                quota[c] += 1;
                remainder -= 1;
            }
        }
        debug_assert!(remainder < before);
    }
    let mut indices = Vec::with_capacity(size);
    for (c, members) in by_class.iter_mut().enumerate() {
        members.sort_unstable();
        let mut rng = seed.derive("class").derive_index(c as u64).rng();
        let (chosen, _) = members.partial_shuffle(&mut rng, quota[c]);
        indices.extend_from_slice(chosen);
    }
    indices.sort_unstable();
    Ok(DatasetSlice {
        name: ds.name.clone(),
        split,
        class_histogram: ds.class_histogram(&indices),
        indices,
    })
}

/// Splits off a stratified validation slice of `val_size`; the remaining
/// indices are returned as the training pool.
pub fn split_validation(
    ds: &Dataset,
    val_size: usize,
    seed: SeedStream,
) -> Result<(DatasetSlice, DatasetSlice)> {
    let val = stratified_subset(ds, val_size, Split::Val, seed)?;
    let mut in_val = vec![false; ds.len()];
    for &i in &val.indices {
        in_val[i] = true;
    }
    let indices: Vec<usize> = (0..ds.len()).filter(|&i| !in_val[i]).collect();
    let pool = DatasetSlice {
        name: ds.name.clone(),
        split: Split::Train,
        class_histogram: ds.class_histogram(&indices),
        indices,
    };
    Ok((pool, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::ImageShape;
    use proptest::prelude::*;

    fn balanced(per_class: usize, k: usize) -> Dataset {
        let labels: Vec<usize> = (0..per_class * k).map(|i| i % k).collect();
        let shape = ImageShape {
            height: 1,
            width: 1,
            channels: 1,
        };
        Dataset::new("t", shape, k, vec![0; labels.len()], labels).unwrap()
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = balanced(50, 10);
        let a = stratified_subset(&ds, 73, Split::Train, SeedStream::new(1)).unwrap();
        let b = stratified_subset(&ds, 73, Split::Train, SeedStream::new(1)).unwrap();
        let c = stratified_subset(&ds, 73, Split::Train, SeedStream::new(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn validation_split_is_disjoint_and_complete() {
        let ds = balanced(30, 10);
        let (pool, val) = split_validation(&ds, 50, SeedStream::new(3)).unwrap();
        assert_eq!(val.class_histogram, vec![5; 10]);
        assert_eq!(pool.len() + val.len(), ds.len());
        assert!(val
            .indices
            .iter()
            .all(|i| pool.indices.binary_search(i).is_err()));
    }

    #[test]
    fn too_large_and_tiny_requests() {
        let ds = balanced(2, 10);
        assert!(stratified_subset(&ds, 21, Split::Train, SeedStream::new(0)).is_err());
        let s = stratified_subset(&ds, 3, Split::Train, SeedStream::new(0)).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.class_histogram.iter().filter(|&&c| c == 1).count(), 3);
        assert_eq!(
            stratified_subset(&ds, 20, Split::Train, SeedStream::new(0))
                .unwrap()
                .len(),
            20
        );
    }

    #[test]
    fn imbalanced_pool_stays_proportional() {
        let mut labels = vec![0; 90];
        labels.extend(vec![1; 10]);
        let ds = Dataset::new(
            "t",
            ImageShape {
                height: 1,
                width: 1,
                channels: 1,
            },
            2,
            vec![0; 100],
            labels,
        )
        .unwrap();
        let s = stratified_subset(&ds, 20, Split::Train, SeedStream::new(4)).unwrap();
        assert_eq!(s.class_histogram, vec![18, 2]);
    }

    proptest! {
        #[test]
        fn balanced_counts_within_one(size in 0usize..=400, seed in any::<u64>()) {
            let ds = balanced(40, 10);
            let s = stratified_subset(&ds, size, Split::Train, SeedStream::new(seed)).unwrap();
            prop_assert_eq!(s.len(), size);
            prop_assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
            let target = size as f64 / 10.0;
            for &c in &s.class_histogram {
                prop_assert!((c as f64 - target).abs() < 1.0 + 1e-9);
            }
        }
    }
}
