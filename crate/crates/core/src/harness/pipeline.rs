//! File-based stages. Every artifact is JSON or JSONL carrying `schema`,
//! except frame dumps and checkpoints, which have their own headers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::checkpoint;
use crate::data::{
    build_dataset, dataset_stats, read_annotations, read_instructions, write_jsonl, DatasetStats, InstructionRecord, TemplateSet,
    SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::lm::Tokenizer;
use crate::model::{Model, Sample};
use crate::parser::parse_for_task;
use crate::video::{load_frames, save_frames, VideoClip};
use crate::video_qformer::{compression_rate, make_windows, token_count, WindowMode};

use super::eval::{Prediction, RawOutput};
use super::synth::{render_video, synth_corpus, SynthEvent, SynthVideo, SyntheticSpec};
use super::train::{make_sample, train, TrainReport};
use super::Config;

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const CLIPS_DIR: &str = "clips";

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    write_jsonl(&mut w, items)?;
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_clip(clips_dir: &Path, video: &str) -> Result<VideoClip> {
    load_frames(&clips_dir.join(format!("{video}.frames")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub schema: u32,
    pub spec: SyntheticSpec,
    pub videos: Vec<SynthVideo>,
    pub stats: DatasetStats,
}

/// Writes `annotations.jsonl`, one frame dump per video under `clips/` and
/// `synth.json` into `out_dir`.
pub fn synth_stage(cfg: &Config, out_dir: &Path, rng: &mut ChaCha8Rng) -> Result<SynthSummary> {
    let spec = SyntheticSpec {
        videos: cfg.videos,
        min_duration: cfg.min_duration,
        max_duration: cfg.max_duration,
        events_per_video: cfg.events_per_video,
        frames: cfg.frames,
        resolution: cfg.resolution,
        tasks: cfg.tasks.clone(),
        strict: cfg.strict,
    };
    let corpus = synth_corpus(&spec, rng)?;
    let clips = out_dir.join(CLIPS_DIR);
    fs::create_dir_all(&clips)?;
    for (v, clip) in corpus.videos.iter().zip(&corpus.clips) {
        save_frames(clip, &clips.join(format!("{}.frames", v.id)))?;
    }
    write_lines(&out_dir.join(ANNOTATIONS_FILE), &corpus.records)?;
    let summary = SynthSummary {
        schema: SCHEMA_VERSION,
        spec,
        stats: dataset_stats(&corpus.records),
        videos: corpus.videos,
    };
    write_json(&out_dir.join("synth.json"), &summary)?;
    Ok(summary)
}

/// Annotations in, instruction records out; returns statistics of the input.
pub fn build_data_stage(annotations: &Path, templates: Option<&Path>, seed: u64, out: &Path) -> Result<DatasetStats> {
    let records = read_annotations(open(annotations)?)?;
    let set = match templates {
        Some(p) => TemplateSet::from_json(&fs::read_to_string(p)?)?,
        None => TemplateSet::builtin(),
    };
    let built = build_dataset(&records, &set, seed)?;
    write_lines(out, &built)?;
    Ok(dataset_stats(&records))
}

fn load_samples(instructions: &[InstructionRecord], clips_dir: &Path) -> Result<Vec<Sample>> {
    instructions
        .iter()
        .map(|r| make_sample(r, load_clip(clips_dir, &r.video)?))
        .collect()
}

/// Trains on every instruction record and writes the checkpoint plus two
/// sidecars: `<checkpoint>.config` (the resolved config) and
/// `<checkpoint>.report.json`.
pub fn train_stage(
    cfg: &Config,
    instructions: &Path,
    clips_dir: &Path,
    checkpoint_out: &Path,
    rng: &mut ChaCha8Rng,
    log: &mut dyn FnMut(&str),
) -> Result<TrainReport> {
    let records = read_instructions(open(instructions)?)?;
    if records.is_empty() {
        return Err(Error::Empty("instruction file"));
    }
    let samples = load_samples(&records, clips_dir)?;
    let (_, store, report) = train(cfg, &samples, rng, log)?;
    if let Some(dir) = checkpoint_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    checkpoint::save(&store, checkpoint_out)?;
    fs::write(sidecar(checkpoint_out, ".config"), cfg.to_string())?;
    write_json(&sidecar(checkpoint_out, ".report.json"), &report)?;
    Ok(report)
}

/// Rebuilds the model described by `cfg` and loads `checkpoint` into it.
pub fn load_model(cfg: &Config, checkpoint_path: &Path, rng: &mut ChaCha8Rng) -> Result<(Model, crate::param::ParamStore)> {
    let (model, mut store) = Model::new(cfg.model_config(), rng)?;
    checkpoint::load_into(&mut store, checkpoint_path)?;
    Ok((model, store))
}

/// Greedy generation for every instruction record.
pub fn infer_stage(cfg: &Config, checkpoint_path: &Path, instructions: &Path, clips_dir: &Path, out: &Path, rng: &mut ChaCha8Rng) -> Result<Vec<RawOutput>> {
    let (model, store) = load_model(cfg, checkpoint_path, rng)?;
    let records = read_instructions(open(instructions)?)?;
    let mut outputs = Vec::with_capacity(records.len());
    for r in &records {
        let s = make_sample(r, load_clip(clips_dir, &r.video)?)?;
        let ids = model.greedy_decode(&store, &s.clip, &s.query, cfg.max_new_tokens)?;
        outputs.push(RawOutput {
            schema: SCHEMA_VERSION,
            video: r.video.clone(),
            task: r.task,
            query: r.query.clone(),
            duration: Some(s.clip.duration),
            text: Tokenizer.detokenize(&ids),
        });
    }
    write_lines(out, &outputs)?;
    Ok(outputs)
}

/// Parses raw outputs. Lines need `task` and `text`; `duration`, `video` and
/// `query` are optional. Text that yields nothing is recorded as a miss.
pub fn parse_stage(input: &Path, out: &Path) -> Result<Vec<Prediction>> {
    let mut preds = Vec::new();
    for (n, line) in open(input)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawOutput = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}:{}: {e}", input.display(), n + 1)))?;
        let parsed = parse_for_task(raw.task, &raw.text, raw.duration);
        preds.push(Prediction {
            schema: SCHEMA_VERSION,
            video: raw.video,
            task: raw.task,
            query: raw.query,
            miss: parsed.is_miss(),
            parsed,
        });
    }
    write_lines(out, &preds)?;
    Ok(preds)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line)?;
        if p.schema != SCHEMA_VERSION {
            return Err(Error::Schema {
                expected: SCHEMA_VERSION,
                found: p.schema,
            });
        }
        out.push(p);
    }
    Ok(out)
}

pub fn eval_stage(predictions: &Path, references: &Path, hit_threshold: f64, out: Option<&Path>) -> Result<super::EvalReport> {
    let preds = read_predictions(predictions)?;
    let refs = read_annotations(open(references)?)?;
    let report = super::evaluate(&preds, &refs, hit_threshold)?;
    if let Some(o) = out {
        write_json(o, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub schema: u32,
    pub frames: usize,
    pub patches_per_frame: usize,
    pub window_len: usize,
    pub stride: usize,
    pub queries_per_window: usize,
    pub mode: WindowMode,
    /// Windows and video tokens under `mode`.
    pub windows: usize,
    pub video_tokens: usize,
    pub video_tokens_sliding: usize,
    pub video_tokens_fixed: usize,
    /// `S·N_P / N_V`, independent of the frame count.
    pub rate_sliding: f64,
    /// `T·N_P / N_V`.
    pub rate_fixed: f64,
}

pub fn token_budget(cfg: &Config) -> Result<TokenBudget> {
    cfg.validate()?;
    let n_p = cfg.model_config().frame.num_patches()?;
    let sliding = cfg.sliding();
    let fixed = crate::video_qformer::SlidingConfig {
        mode: WindowMode::Fixed,
        ..sliding
    };
    let as_sliding = crate::video_qformer::SlidingConfig {
        mode: WindowMode::Sliding,
        ..sliding
    };
    Ok(TokenBudget {
        schema: SCHEMA_VERSION,
        frames: cfg.frames,
        patches_per_frame: n_p,
        window_len: cfg.window_len,
        stride: cfg.stride,
        queries_per_window: cfg.video_queries,
        mode: cfg.window_mode,
        windows: make_windows(cfg.frames, &sliding)?.len(),
        video_tokens: token_count(cfg.frames, &sliding)?,
        video_tokens_sliding: token_count(cfg.frames, &as_sliding)?,
        video_tokens_fixed: token_count(cfg.frames, &fixed)?,
        rate_sliding: compression_rate(cfg.frames, n_p, cfg.video_queries, cfg.stride, WindowMode::Sliding)?,
        rate_fixed: compression_rate(cfg.frames, n_p, cfg.video_queries, cfg.stride, WindowMode::Fixed)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSummary {
    pub schema: u32,
    pub passed: bool,
    pub frames: usize,
    pub video_tokens: usize,
    pub query_tokens: usize,
    pub answer_tokens: usize,
    pub parameters: usize,
    pub report: GradCheckReport,
}

/// Central differences through the whole model (frames to loss) on one
/// synthetic grounding sample. Adapter `B` matrices are randomized first so
/// the adapter path carries gradient.
pub fn grad_check_stage(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<GradCheckSummary> {
    cfg.validate()?;
    let (model, mut store) = Model::new(cfg.model_config(), rng)?;
    for p in store.iter_mut() {
        if p.name.ends_with("lora_b") {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-0.05..0.05);
            }
        }
    }
    let duration = 12.0;
    let event = SynthEvent {
        pattern: 2,
        start: 3,
        end: 8,
    };
    let clip = render_video(duration, &[event], cfg.frames, cfg.resolution, true)?;
    let sample = Sample {
        clip,
        query: Tokenizer.tokenize("When does the green block appear?")?,
        answer: Tokenizer.tokenize("3 - 8 seconds.")?,
    };
    let video_tokens = model.video_tokens(&store, &sample.clip)?.len();
    let seed = rng.gen();
    let report = grad_check(
        &mut store,
        |s: &crate::param::ParamStore, g: &mut Graph| model.sample_loss(g, s, &sample),
        cfg.grad_epsilon,
        cfg.grad_samples,
        seed,
    )?;
    Ok(GradCheckSummary {
        schema: SCHEMA_VERSION,
        passed: report.passed(),
        frames: cfg.frames,
        video_tokens,
        query_tokens: sample.query.len(),
        answer_tokens: sample.answer.len(),
        parameters: store.numel(),
        report,
    })
}
