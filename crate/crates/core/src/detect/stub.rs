use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DetectionSet, PredictedBox};
use crate::dataset::{BoundingBox, ImageRecord};

/// Noise knobs for the ground-truth replaying detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DetectorConfig {
    /// Probability that a ground-truth box is not reported.
    pub drop_rate: f64,
    /// Maximum shift of each box coordinate, in normalized units.
    pub jitter: f64,
    /// Probability that a reported box carries a different class.
    pub class_flip_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid detector config: {0}")]
pub struct InvalidDetectorConfig(&'static str);

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), InvalidDetectorConfig> {
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(InvalidDetectorConfig("drop_rate must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.class_flip_rate) {
            return Err(InvalidDetectorConfig("class_flip_rate must lie in [0, 1]"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(InvalidDetectorConfig("jitter must be finite and >= 0"));
        }
        Ok(())
    }

    fn noise_level(&self) -> f64 {
        (self.drop_rate + self.class_flip_rate + self.jitter).min(1.0)
    }
}

/// Per-image seed, so output does not depend on the order images are visited.
fn image_seed(seed: u64, image_id: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(image_id.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

/// Replays an image's ground truth as detections, perturbed per `config`.
///
/// Confidence is `1 - u * noise / 2` with `u` uniform in `[0, 1)` and
/// `noise = min(1, drop_rate + class_flip_rate + jitter)`, so a noiseless
/// config reports every box at confidence 1.
pub fn stub_detect(
    record: &ImageRecord,
    config: &DetectorConfig,
    num_classes: usize,
) -> Result<DetectionSet, InvalidDetectorConfig> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(config.seed, &record.image_id));
    let noise = config.noise_level();
    let mut predictions = Vec::with_capacity(record.boxes.len());

    for gt in &record.boxes {
        // Fixed number of draws per box keeps streams aligned across configs.
        let drop: f64 = rng.random();
        let flip: f64 = rng.random();
        let other: usize = rng.random_range(0..num_classes.max(2) - 1);
        let shifts: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        let conf_u: f64 = rng.random();

        if drop < config.drop_rate {
            continue;
        }
        let class_id = if num_classes > 1 && flip < config.class_flip_rate {
            // Uniform over the other classes.
            if other >= gt.class_id {
                other + 1
            } else {
                other
            }
        } else {
            gt.class_id
        };
        let bbox = if config.jitter > 0.0 {
            let d = |u: f64| config.jitter * (2.0 * u - 1.0);
            let b = &gt.bbox;
            BoundingBox {
                cx: (b.cx + d(shifts[0])).clamp(0.0, 1.0),
                cy: (b.cy + d(shifts[1])).clamp(0.0, 1.0),
                w: (b.w + d(shifts[2])).clamp(1e-6, 1.0),
                h: (b.h + d(shifts[3])).clamp(1e-6, 1.0),
            }
        } else {
            gt.bbox
        };
        predictions.push(PredictedBox {
            class_id,
            confidence: 1.0 - conf_u * noise / 2.0,
            bbox,
        });
    }
    Ok(DetectionSet::new(record.image_id.clone(), predictions).with_source("stub"))
}
