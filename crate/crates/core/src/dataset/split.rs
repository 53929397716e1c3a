use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DatasetError};

/// Seeded image-level split into `(train, test)`.
///
/// The train part holds `round(train_fraction * n)` images chosen by a
/// seeded shuffle; both parts keep the original image order.
pub fn split_dataset(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::FractionOutOfRange(train_fraction));
    }
    let n = dataset.images().len();
    let train_len = (train_fraction * n as f64).round() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..train_len] {
        in_train[i] = true;
    }

    let (mut train, mut test) = (
        Vec::with_capacity(train_len),
        Vec::with_capacity(n - train_len),
    );
    for (record, &t) in dataset.images().iter().zip(&in_train) {
        if t {
            train.push(record.clone());
        } else {
            test.push(record.clone());
        }
    }
    let registry = dataset.registry().clone();
    Ok((
        Dataset::new(registry.clone(), train)?,
        Dataset::new(registry, test)?,
    ))
}
