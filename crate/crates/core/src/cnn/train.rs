use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::CnnParams;
use super::net::{forward, loss_and_grads, Batch, Mode};
use super::CnnError;
use crate::dataset::{augment, AugmentParams, LabeledDataset, SplitIndices};
use crate::image::GrayImage;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 15,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: &str| Err(CnnError::InvalidHyper(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

/// One line of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch (regularisation included).
    pub loss: f64,
    pub val_accuracy: f64,
}

/// Stacks images into a batch, mapping white paper to 0 and full ink to 1.
pub fn images_to_batch(images: &[&GrayImage], side: usize) -> Result<Batch<f32>, CnnError> {
    let mut data = Vec::with_capacity(images.len() * side * side);
    for img in images {
        if img.width() != side || img.height() != side {
            return Err(CnnError::ImageSize {
                width: img.width(),
                height: img.height(),
                side,
            });
        }
        data.extend(img.pixels().iter().map(|&v| (255 - v) as f32 / 255.0));
    }
    Batch::new(images.len(), side, data)
}

const EVAL_BATCH: usize = 256;

/// Class probabilities for each image, in eval mode.
pub fn predict_proba(params: &CnnParams<f32>, images: &[&GrayImage]) -> Result<Vec<Vec<f32>>, CnnError> {
    let k = params.arch.n_classes();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let batch = images_to_batch(chunk, params.arch.input_side)?;
        let f = forward(params, &batch, Mode::Eval)?;
        out.extend(f.probs.chunks(k).map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Predictions and accuracy on `indices` of `data`.
pub fn evaluate(params: &CnnParams<f32>, data: &LabeledDataset, indices: &[usize]) -> Result<(Vec<u8>, f64), CnnError> {
    let mut preds = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let imgs: Vec<&GrayImage> = chunk.iter().map(|&i| &data.images[i]).collect();
        let batch = images_to_batch(&imgs, params.arch.input_side)?;
        preds.extend(forward(params, &batch, Mode::Eval)?.predictions());
    }
    let correct = preds.iter().zip(indices).filter(|(p, &i)| **p == data.labels[i]).count();
    let acc = if indices.is_empty() {
        0.0
    } else {
        correct as f64 / indices.len() as f64
    };
    Ok((preds, acc))
}

/// Mini-batch SGD with momentum over the training split, augmenting every
/// image on the fly. Validation accuracy is measured after each epoch.
///
/// Every random draw is keyed by `(hyper.seed, epoch, position)`, so a run
/// is reproducible bit for bit.
pub fn train(
    mut params: CnnParams<f32>,
    data: &LabeledDataset,
    split: &SplitIndices,
    hyper: &TrainHyper,
    aug: &AugmentParams,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(CnnParams<f32>, Vec<EpochRecord>), CnnError> {
    hyper.validate()?;
    aug.validate().map_err(|e| CnnError::InvalidHyper(e.to_string()))?;
    let side = params.arch.input_side;
    let lr = hyper.learning_rate as f32;
    let mu = hyper.momentum as f32;
    let mut velocity = params.zeros_like();
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let epoch_seed = seed::derive_seed(hyper.seed, epoch as u64);
        let mut order = split.train.clone();
        order.shuffle(&mut seed::child_rng(epoch_seed, 0));
        let aug_seed = seed::derive_seed(epoch_seed, 1);
        let drop_seed = seed::derive_seed(epoch_seed, 2);

        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (j, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let augmented: Vec<GrayImage> = chunk
                .iter()
                .enumerate()
                .map(|(p, &i)| {
                    let pos = (j * hyper.batch_size + p) as u64;
                    augment(&data.images[i], aug, &mut seed::child_rng(aug_seed, pos))
                })
                .collect();
            let refs: Vec<&GrayImage> = augmented.iter().collect();
            let batch = images_to_batch(&refs, side)?;
            let labels: Vec<u8> = chunk.iter().map(|&i| data.labels[i]).collect();

            let mut rng = seed::child_rng(drop_seed, j as u64);
            let (loss, grads) = loss_and_grads(&params, &batch, &labels, Mode::Train(&mut rng))?;
            loss_sum += loss;
            batches += 1;

            for ((p, v), g) in params.tensors.iter_mut().zip(velocity.tensors.iter_mut()).zip(&grads.tensors) {
                for ((w, vel), &gr) in p.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                    *vel = mu * *vel - lr * gr;
                    *w += *vel;
                }
            }
        }
        let (_, val_accuracy) = evaluate(&params, data, &split.val)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            loss: if batches > 0 { loss_sum / batches as f64 } else { 0.0 },
            val_accuracy,
        };
        progress(&rec);
        history.push(rec);
    }
    Ok((params, history))
}

/// JSON-lines rendering of a history.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;
    use crate::cnn::CnnArch;

    const SIDE: usize = 32;

    /// 3 classes of dark shapes on white: horizontal bar, vertical bar, square.
    fn shapes(n: usize, seed_: u64) -> LabeledDataset {
        let mut rng = seed::rng(seed_);
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 3) as u8;
            let (w, h) = match class {
                0 => (16, 4),
                1 => (4, 16),
                _ => (10, 10),
            };
            let x0 = rng.gen_range(2..SIDE - w - 1);
            let y0 = rng.gen_range(2..SIDE - h - 1);
            let mut img = GrayImage::filled(SIDE, SIDE, 255);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    img.set(x, y, rng.gen_range(0..60));
                }
            }
            images.push(img);
            labels.push(class);
        }
        LabeledDataset::new(images, labels).unwrap()
    }

    fn all_train(n: usize) -> SplitIndices {
        SplitIndices {
            train: (0..n).collect(),
            val: (0..n.min(30)).collect(),
            test: Vec::new(),
            seed: 0,
        }
    }

    #[test]
    fn zero_epochs_leave_params_untouched() {
        let data = shapes(30, 1);
        let params = CnnParams::<f32>::init(&CnnArch::reduced(SIDE), 4).unwrap();
        let hyper = TrainHyper {
            epochs: 0,
            ..Default::default()
        };
        let (after, history) = train(params.clone(), &data, &all_train(30), &hyper, &AugmentParams::none(), |_| {}).unwrap();
        assert_eq!(after, params);
        assert!(history.is_empty());
    }

    #[test]
    fn small_three_class_set_is_learned() {
        let data = shapes(300, 2);
        let split = all_train(300);
        let params = CnnParams::<f32>::init(&CnnArch {
            input_side: SIDE,
            ..CnnArch::standard()
        }, 5).unwrap();
        let hyper = TrainHyper {
            epochs: 20,
            seed: 3,
            ..Default::default()
        };
        let (params, history) = train(params, &data, &split, &hyper, &AugmentParams::none(), |_| {}).unwrap();
        assert_eq!(history.len(), 20);
        assert_eq!(history.last().unwrap().epoch, 20);
        let (_, acc) = evaluate(&params, &data, &split.train).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn training_is_reproducible() {
        let data = shapes(60, 3);
        let split = all_train(60);
        let hyper = TrainHyper {
            epochs: 2,
            seed: 9,
            ..Default::default()
        };
        let run = || {
            let params = CnnParams::<f32>::init(&CnnArch::reduced(SIDE), 6).unwrap();
            train(params, &data, &split, &hyper, &AugmentParams::default(), |_| {}).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn batch_maps_paper_to_zero_and_ink_to_one() {
        let mut img = GrayImage::filled(SIDE, SIDE, 255);
        img.set(3, 4, 0);
        let b = images_to_batch(&[&img], SIDE).unwrap();
        assert_eq!(b.data[4 * SIDE + 3], 1.0);
        assert_eq!(b.data.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(images_to_batch(&[&GrayImage::filled(5, 5, 0)], SIDE).is_err());
    }

    #[test]
    fn history_is_one_json_object_per_line() {
        let h = vec![
            EpochRecord {
                epoch: 1,
                loss: 0.5,
                val_accuracy: 0.75,
            },
            EpochRecord {
                epoch: 2,
                loss: 0.25,
                val_accuracy: 0.875,
            },
        ];
        let text = history_jsonl(&h);
        let back: Vec<EpochRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, h);
    }
}
