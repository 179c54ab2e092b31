use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// One cross-validation fold. Both index lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Shuffled k-fold split of `0..n`. The first `n % k` folds get one extra
/// test instance.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "kfold needs 2 <= k <= n (n={n}, k={k})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test: Vec<usize> = order[start..start + size].to_vec();
        test.sort_unstable();
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train = (0..n).filter(|&i| !in_test[i]).collect();
        folds.push(FoldSplit {
            train_indices: train,
            test_indices: test,
        });
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leave_one_out_shape() {
        let folds = kfold(10, 10, 3).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.test_indices.len() == 1));
    }

    #[test]
    fn uneven_sizes() {
        let folds = kfold(12, 10, 3).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.test_indices.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 1, 1, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(kfold(37, 5, 11).unwrap(), kfold(37, 5, 11).unwrap());
        assert_ne!(kfold(37, 5, 11).unwrap(), kfold(37, 5, 12).unwrap());
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kfold(5, 6, 0).is_err());
        assert!(kfold(5, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn test_sets_partition_indices(n in 2usize..80, k_raw in 2usize..12, seed in any::<u64>()) {
            let k = k_raw.min(n);
            let folds = kfold(n, k, seed).unwrap();
            let mut seen = vec![0usize; n];
            for f in &folds {
                prop_assert_eq!(f.train_indices.len() + f.test_indices.len(), n);
                for &i in &f.test_indices {
                    seen[i] += 1;
                    prop_assert!(f.train_indices.binary_search(&i).is_err());
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.test_indices.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
