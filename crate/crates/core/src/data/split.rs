use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Chronological 5:1:1 split over window indices, rounded toward train.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
}

pub fn split_chrono(n_windows: usize) -> Result<SplitSpec> {
    if n_windows < 7 {
        return Err(Error::Config(format!(
            "need at least 7 windows for a 5:1:1 split, got {n_windows}"
        )));
    }
    let part = n_windows / 7;
    let train = n_windows - 2 * part;
    Ok(SplitSpec {
        train: (0, train),
        val: (train, train + part),
        test: (train + part, n_windows),
    })
}

impl SplitSpec {
    pub fn train_len(&self) -> usize {
        self.train.1 - self.train.0
    }
    pub fn val_len(&self) -> usize {
        self.val.1 - self.val.0
    }
    pub fn test_len(&self) -> usize {
        self.test.1 - self.test.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_ratio_seven() {
        let s = split_chrono(7).unwrap();
        assert_eq!((s.train_len(), s.val_len(), s.test_len()), (5, 1, 1));
    }

    #[test]
    fn exact_ratio_seven_hundred() {
        let s = split_chrono(700).unwrap();
        assert_eq!((s.train_len(), s.val_len(), s.test_len()), (500, 100, 100));
    }

    #[test]
    fn rounding_goes_to_train() {
        let s = split_chrono(10).unwrap();
        assert_eq!((s.train_len(), s.val_len(), s.test_len()), (8, 1, 1));
    }

    #[test]
    fn too_few_windows_is_config_error() {
        assert!(split_chrono(6).is_err());
    }

    proptest! {
        #[test]
        fn splits_are_disjoint_ordered_and_cover(n in 7usize..5000) {
            let s = split_chrono(n).unwrap();
            prop_assert_eq!(s.train.0, 0);
            prop_assert_eq!(s.train.1, s.val.0);
            prop_assert_eq!(s.val.1, s.test.0);
            prop_assert_eq!(s.test.1, n);
            prop_assert!(s.val_len() >= 1 && s.test_len() >= 1);
            prop_assert!(s.train_len() >= s.val_len() * 5);
        }
    }
}
