use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::numkernel::{argmax_rows, mlp_backward, mlp_forward, Matrix, MlpClassifier};
use crate::rng::{Rng, Stream};
use crate::scalar::Scalar;

use super::adam::{adam_step, AdamState};
use super::loss::Objective;
use super::record::{fingerprint_labels, fingerprint_model, EpochStats, RunRecord};
use super::TrainConfig;

/// He-normal weights (`std = √(2 / fan_in)`) and zero biases.
pub fn init_model<T: Scalar>(layer_dims: &[usize], seed: u64) -> Result<MlpClassifier<T>> {
    let mut model = MlpClassifier::zeros(layer_dims)?;
    let mut rng = Rng::for_stream(seed, Stream::Init);
    for layer in model.layers_mut() {
        let std = (2.0 / layer.weights.rows() as f64).sqrt();
        for w in layer.weights.data_mut() {
            *w = T::lit(std * rng.normal());
        }
    }
    Ok(model)
}

pub fn predict<T: Scalar>(model: &MlpClassifier<T>, x: &Matrix<T>) -> Result<Vec<usize>> {
    Ok(argmax_rows(&model.logits(x)?))
}

/// Final model and its training history.
#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub model: MlpClassifier<T>,
    pub record: RunRecord,
}

/// Trains on the observed training labels and scores every epoch on the clean test labels.
///
/// With a hierarchy in the config this runs the weighted two-level objective,
/// even at `alpha = 1`. Without one, `alpha` must be 1 and the plain FLAT loss is used.
pub fn train<T: Scalar>(dataset: &LabeledDataset, config: &TrainConfig) -> Result<RunRecord> {
    train_model::<T>(dataset, config).map(|t| t.record)
}

/// FLAT training that never touches a hierarchy, whatever the config carries.
pub fn train_flat<T: Scalar>(dataset: &LabeledDataset, config: &TrainConfig) -> Result<RunRecord> {
    let flat = TrainConfig {
        alpha: 1.0,
        hierarchy: None,
        ..config.clone()
    };
    run::<T>(dataset, &flat, Objective::Flat).map(|t| t.record)
}

pub fn train_model<T: Scalar>(dataset: &LabeledDataset, config: &TrainConfig) -> Result<Trained<T>> {
    config.validate()?;
    let objective = match &config.hierarchy {
        Some(h) => Objective::Hierarchical {
            hierarchy: h,
            alpha: config.alpha,
        },
        None => Objective::Flat,
    };
    run(dataset, config, objective)
}

fn run<T: Scalar>(
    dataset: &LabeledDataset,
    config: &TrainConfig,
    objective: Objective<'_>,
) -> Result<Trained<T>> {
    config.validate()?;
    let k = dataset.num_classes();
    if let Some(h) = &config.hierarchy {
        if h.num_fine() != k {
            return Err(Error::invalid(format!(
                "hierarchy covers {} fine classes but the dataset has {k}",
                h.num_fine()
            )));
        }
    }
    if dataset.train_indices().is_empty() || dataset.test_indices().is_empty() {
        return Err(Error::invalid("training needs non-empty train and test splits"));
    }

    let mut model = init_model::<T>(&config.layer_dims(dataset.dim(), k), config.seed)?;
    let mut adam = AdamState::new(&model);
    let adam_cfg = config.adam();
    let x_train: Matrix<T> = dataset.train_features();
    let y_train = dataset.train_noisy_labels();
    let x_test: Matrix<T> = dataset.test_features();
    let y_test = dataset.test_clean_labels();

    let mut record = RunRecord {
        seed: config.seed,
        config: config.clone(),
        epochs: Vec::with_capacity(config.epochs),
        correctness: Vec::with_capacity(config.epochs),
        init_fingerprint: fingerprint_model(&model),
        label_fingerprint: fingerprint_labels(&y_train),
    };

    let mut shuffle = Rng::for_stream(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let n = y_train.len() as f64;
    for epoch in 1..=config.epochs {
        let lr = T::lit(config.learning_rate_at(epoch));
        shuffle.shuffle(&mut order);
        let (mut total, mut fine, mut coarse) = (0.0, 0.0, 0.0);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let xb = x_train.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
            let (logits, cache) = mlp_forward(&model, &xb)?;
            let (loss, d_logits) = objective.evaluate(&logits, &yb)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {b}",
                    loss.total
                )));
            }
            let grads = mlp_backward(&model, &cache, &d_logits)?;
            adam_step(&mut model, &grads, &mut adam, lr, &adam_cfg)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            let w = batch.len() as f64;
            total += loss.total.as_f64() * w;
            fine += loss.fine.as_f64() * w;
            coarse += loss.coarse.as_f64() * w;
        }
        let predictions = predict(&model, &x_test)?;
        let bits: Vec<bool> = predictions.iter().zip(&y_test).map(|(p, y)| p == y).collect();
        let correct = bits.iter().filter(|&&b| b).count();
        record.epochs.push(EpochStats {
            epoch,
            train_loss: total / n,
            fine_loss: fine / n,
            coarse_loss: coarse / n,
            test_accuracy: correct as f64 / y_test.len() as f64,
        });
        record.correctness.push(bits);
    }
    Ok(Trained { model, record })
}
