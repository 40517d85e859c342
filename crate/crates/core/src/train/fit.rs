use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Adam, Example, TrainConfig};
use crate::dsp::{pre_emphasis, AudioSignal};
use crate::error::{Error, Result};
use crate::eval::{compute_eer, compute_min_dcf, CostModel, Label};
use crate::model::{score_utterance, Aasist3Model};
use crate::numerics::nn::cross_entropy;
use crate::numerics::{apply_buffer_updates, Ctx, Tape};

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_eer: Option<f64>,
    pub dev_min_dcf: Option<f64>,
    /// Mean negative log probability of the true class on dev.
    pub dev_loss: Option<f64>,
    /// Whether this epoch produced the retained model.
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev EER, ties going to the
    /// lower dev loss (the last epoch when there is no dev set).
    pub model: Aasist3Model,
    pub history: Vec<EpochMetrics>,
}

/// `len` samples starting at `start`, wrapping around the end of `x`.
pub fn crop_cyclic(x: &[f64], start: usize, len: usize) -> Vec<f64> {
    (0..len).map(|i| x[(start + i) % x.len()]).collect()
}

fn random_crop(x: &[f64], len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let start = if x.len() > len { rng.random_range(0..=x.len() - len) } else { 0 };
    crop_cyclic(x, start, len)
}

/// Forward, backward and one optimizer update on a batch of pre-emphasized
/// waveforms of equal length. Returns the batch loss before the update.
pub fn train_step(
    model: &mut Aasist3Model,
    adam: &mut Adam,
    waveforms: &[&[f64]],
    labels: &[usize],
    class_weights: &[f64; 2],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut ctx = Ctx::new(Tape::new(), model.params(), true, rng);
    let logits = model.forward(&mut ctx, waveforms)?;
    let loss = cross_entropy(&ctx.tape, &logits, labels, class_weights)?;
    let value = loss.value().item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    let grads = ctx.tape.backward(&loss)?;
    let grads = ctx.param_grads(&grads);
    let updates = ctx.take_buffer_updates();
    drop(ctx);
    adam.step(model.params_mut(), &grads)?;
    apply_buffer_updates(model.params_mut(), updates)?;
    Ok(value)
}

struct DevMetrics {
    eer: f64,
    min_dcf: f64,
    loss: f64,
}

fn dev_metrics(model: &Aasist3Model, dev: &[Example]) -> Result<DevMetrics> {
    let scored: Vec<(f64, Label)> = dev
        .iter()
        .map(|e| Ok((score_utterance(model, &e.audio)?, e.label)))
        .collect::<Result<_>>()?;
    let loss = scored
        .iter()
        .map(|&(p, label)| {
            let q = if label == Label::Bonafide { p } else { 1.0 - p };
            -q.max(f64::MIN_POSITIVE).ln()
        })
        .sum::<f64>()
        / scored.len() as f64;
    Ok(DevMetrics {
        eer: compute_eer(&scored)?.rate,
        min_dcf: compute_min_dcf(&scored, &CostModel::default())?.cost,
        loss,
    })
}

/// Mini-batch training on random fixed-length crops. `on_epoch` sees each
/// epoch's metrics and the current model, e.g. for periodic checkpoints.
pub fn train_loop<F>(
    mut model: Aasist3Model,
    train: &[Example],
    dev: &[Example],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochMetrics, &Aasist3Model) -> Result<()>,
{
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let coeff = model.config().frontend.pre_emphasis;
    let crop = model.config().inference.chunk_samples();
    let emphasized: Vec<AudioSignal> = train
        .iter()
        .map(|e| pre_emphasis(&e.audio, coeff))
        .collect::<Result<_>>()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let mut adam = Adam::new(config);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<((f64, f64), Aasist3Model)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut data_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let crops: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| random_crop(emphasized[i].samples(), crop, &mut data_rng))
                .collect();
            let waves: Vec<&[f64]> = crops.iter().map(Vec::as_slice).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train[i].label.class_index()).collect();
            let loss = train_step(
                &mut model,
                &mut adam,
                &waves,
                &labels,
                &config.class_weights,
                &mut dropout_rng,
            )?;
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let dev_stats = if dev.is_empty() { None } else { Some(dev_metrics(&model, dev)?) };
        let key = dev_stats.as_ref().map(|d| (d.eer, d.loss));
        let improved = match (key, &best) {
            (None, _) | (Some(_), None) => true,
            (Some(k), Some((b, _))) => k < *b,
        };
        if improved {
            best = Some((key.unwrap_or((f64::INFINITY, f64::INFINITY)), model.clone()));
        }
        let dev_eer = dev_stats.as_ref().map(|d| d.eer);
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            dev_eer,
            dev_min_dcf: dev_stats.as_ref().map(|d| d.min_dcf),
            dev_loss: dev_stats.as_ref().map(|d| d.loss),
            best: improved,
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.5}, dev EER {}",
            dev_eer.map_or("n/a".into(), |e| format!("{:.4}%", 100.0 * e))
        );
        on_epoch(&metrics, &model)?;
        history.push(metrics);
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, history })
}
