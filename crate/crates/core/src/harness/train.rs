use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::data::InstructionRecord;
use crate::error::Result;
use crate::lm::{argmax, Tokenizer};
use crate::model::{answer_token_accuracy, Model, Sample, Trainer};
use crate::param::ParamStore;
use crate::tensor::Tensor;
use crate::video::VideoClip;

use super::Config;

/// Token ids of the decoder query: the instruction, then the transcript
/// after a separator when the record carries one.
pub fn query_ids(instruction: &str, speech: Option<&str>) -> Result<Vec<usize>> {
    let mut ids = Tokenizer.tokenize(instruction)?;
    if let Some(s) = speech {
        ids.push(Tokenizer::SEP);
        ids.extend(Tokenizer.tokenize(s)?);
    }
    Ok(ids)
}

pub fn make_sample(record: &InstructionRecord, clip: VideoClip) -> Result<Sample> {
    Ok(Sample {
        clip,
        query: query_ids(&record.instruction, record.speech.as_deref())?,
        answer: Tokenizer.tokenize(&record.answer)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetAccuracy,
    MaxSteps,
    Epochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema: u32,
    pub samples: usize,
    pub steps: usize,
    pub stop: StopReason,
    /// `(step, loss)` at every evaluation point.
    pub losses: Vec<(usize, f64)>,
    /// `(step, greedy answer-token accuracy)` whenever it was measured.
    pub accuracy: Vec<(usize, f64)>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Frozen `llm.*` weights after training equal those before, bit for bit.
    pub frozen_base_unchanged: bool,
    /// Before the first update the adapted model produced exactly the logits
    /// of a model built without adapters from the same seed.
    pub step0_matches_base: bool,
    pub total_params: usize,
    pub trainable_params: usize,
    pub seconds: f64,
}

/// Share of answer tokens (plus EOS) predicted correctly with the true prefix
/// fed in.
pub fn teacher_forced_accuracy(model: &Model, store: &ParamStore, s: &Sample) -> Result<f64> {
    let mut g = Graph::new();
    let v = model.encode(&mut g, store, &s.clip)?;
    let logits = model.decoder.forward(&mut g, store, Some(v), &s.query, &s.answer)?;
    let t = g.value(logits);
    let targets = s.answer.iter().copied().chain([Tokenizer::EOS]);
    let hits = targets.enumerate().filter(|&(i, id)| argmax(t.row(i)) == id).count();
    Ok(hits as f64 / (s.answer.len() + 1) as f64)
}

pub fn greedy_accuracy(model: &Model, store: &ParamStore, samples: &[Sample], max_new_tokens: usize) -> Result<f64> {
    let mut sum = 0.0;
    for s in samples {
        let out = model.greedy_decode(store, &s.clip, &s.query, max_new_tokens)?;
        sum += answer_token_accuracy(&out, &s.answer);
    }
    Ok(sum / samples.len().max(1) as f64)
}

fn first_logits(model: &Model, store: &ParamStore, s: &Sample) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = model.encode(&mut g, store, &s.clip)?;
    let logits = model.decoder.forward(&mut g, store, Some(v), &s.query, &s.answer)?;
    Ok(g.value(logits).clone())
}

fn frozen_llm(store: &ParamStore) -> Vec<(String, Tensor)> {
    store
        .iter()
        .filter(|(_, p)| p.name.starts_with("llm.") && !p.trainable)
        .map(|(_, p)| (p.name.clone(), p.value.clone()))
        .collect()
}

/// Builds a model from `rng` and trains it on `samples`.
///
/// Every `eval_every` steps the teacher-forced accuracy is measured; only
/// when it reaches `target_accuracy` is the slower greedy accuracy computed
/// and used as the stopping test. `log` receives one line per evaluation.
pub fn train(cfg: &Config, samples: &[Sample], rng: &mut ChaCha8Rng, log: &mut dyn FnMut(&str)) -> Result<(Model, ParamStore, TrainReport)> {
    let clock = Instant::now();
    let mcfg = cfg.model_config();
    let mut base_rng = rng.clone();
    let (model, mut store) = Model::new(mcfg, rng)?;
    let step0_matches_base = match samples.first() {
        Some(s) if mcfg.decoder.lora_rank > 0 => {
            let mut base_cfg = mcfg;
            base_cfg.decoder.lora_rank = 0;
            let (base, base_store) = Model::new(base_cfg, &mut base_rng)?;
            first_logits(&model, &store, s)? == first_logits(&base, &base_store, s)?
        }
        _ => true,
    };
    let frozen_before = frozen_llm(&store);
    let mut trainer = Trainer::new(&store, cfg.adamw(), cfg.schedule());
    let batch = cfg.batch_size.clamp(1, samples.len().max(1));
    let per_epoch = samples.len().div_ceil(batch);
    let step_cap = cfg.max_steps.min(cfg.epochs.saturating_mul(per_epoch));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::new();
    let mut accuracy = Vec::new();
    let mut stop = if step_cap == cfg.max_steps { StopReason::MaxSteps } else { StopReason::Epochs };
    let mut last_loss = f64::NAN;
    let mut last_acc = None;
    let mut step = 0;
    while step < step_cap {
        let pos = step % per_epoch;
        if pos == 0 && batch < samples.len() {
            order.shuffle(rng);
        }
        let chunk: Vec<Sample> = order[pos * batch..((pos + 1) * batch).min(samples.len())]
            .iter()
            .map(|&i| samples[i].clone())
            .collect();
        last_loss = trainer.train_step(&model, &mut store, &chunk)?;
        step += 1;
        last_acc = None;
        if step % cfg.eval_every.max(1) == 0 || step == step_cap {
            losses.push((step, last_loss));
            let mut tf = 0.0;
            for s in samples {
                tf += teacher_forced_accuracy(&model, &store, s)?;
            }
            tf /= samples.len() as f64;
            let mut line = format!("step {step} loss {last_loss:.4} teacher-forced {tf:.3}");
            if tf >= cfg.target_accuracy {
                let acc = greedy_accuracy(&model, &store, samples, cfg.max_new_tokens)?;
                accuracy.push((step, acc));
                last_acc = Some(acc);
                line.push_str(&format!(" greedy {acc:.3}"));
                if acc >= cfg.target_accuracy {
                    log(&line);
                    stop = StopReason::TargetAccuracy;
                    break;
                }
            }
            log(&line);
        }
    }
    let final_accuracy = match last_acc {
        Some(a) => a,
        None => {
            let a = greedy_accuracy(&model, &store, samples, cfg.max_new_tokens)?;
            accuracy.push((step, a));
            a
        }
    };
    let frozen_base_unchanged = frozen_before == frozen_llm(&store);
    let report = TrainReport {
        schema: crate::data::SCHEMA_VERSION,
        samples: samples.len(),
        steps: step,
        stop,
        losses,
        accuracy,
        final_loss: last_loss,
        final_accuracy,
        frozen_base_unchanged,
        step0_matches_base,
        total_params: store.numel(),
        trainable_params: store.numel_where(|p| p.trainable),
        seconds: clock.elapsed().as_secs_f64(),
    };
    Ok((model, store, report))
}
