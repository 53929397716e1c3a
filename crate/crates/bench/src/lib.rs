//! Synthetic workloads shared by the benchmarks.

use platter_core::detect::{stub_detect, DetectorConfig};
use platter_core::{
    BoundingBox, ClassRegistry, Dataset, DetectionSet, GroundTruthBox, ImageRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A dataset of `images` images with up to `max_boxes` boxes each, and a
/// noisy stub detector's output for it.
pub fn workload(
    images: usize,
    classes: usize,
    max_boxes: usize,
    seed: u64,
) -> (Dataset, Vec<DetectionSet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let registry = ClassRegistry::new((0..classes).map(|c| format!("dish{c}")).collect())
        .expect("distinct names");
    let records: Vec<ImageRecord> = (0..images)
        .map(|i| {
            let boxes = (0..rng.random_range(0..=max_boxes))
                .map(|_| GroundTruthBox {
                    class_id: rng.random_range(0..classes),
                    bbox: BoundingBox::new(
                        rng.random(),
                        rng.random(),
                        rng.random_range(0.05..0.5),
                        rng.random_range(0.05..0.5),
                    )
                    .expect("valid box"),
                })
                .collect();
            ImageRecord::new(format!("img{i:06}"), boxes)
        })
        .collect();
    let config = DetectorConfig {
        drop_rate: 0.1,
        jitter: 0.05,
        class_flip_rate: 0.1,
        seed,
    };
    let sets = records
        .iter()
        .map(|r| stub_detect(r, &config, classes).expect("valid config"))
        .collect();
    (
        Dataset::new(registry, records).expect("valid dataset"),
        sets,
    )
}
