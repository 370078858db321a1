//! Browser bindings: token budget, response parsing and segment IoU.
//! Results cross the boundary as JSON strings.

use chronoframe::data::Task;
use chronoframe::harness::{token_budget, Config, Profile};
use chronoframe::parser::parse_for_task;
use chronoframe::segment::{iou, Segment};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Token budget for the full-size encoder with the given frame count and
/// window settings. `mode` is `sliding` or `fixed`.
#[wasm_bindgen]
pub fn tokens(frames: usize, window_len: usize, stride: usize, queries: usize, mode: &str) -> Result<String, JsValue> {
    budget_json(frames, window_len, stride, queries, mode).map_err(js_err)
}

fn budget_json(frames: usize, window_len: usize, stride: usize, queries: usize, mode: &str) -> chronoframe::Result<String> {
    let mut cfg = Config::for_profile(Profile::Paper);
    cfg.set("frames", &frames.to_string())?;
    cfg.set("window_len", &window_len.to_string())?;
    cfg.set("stride", &stride.to_string())?;
    cfg.set("video_queries", &queries.to_string())?;
    cfg.set("window_mode", mode)?;
    Ok(serde_json::to_string(&token_budget(&cfg)?)?)
}

/// Parses model text for `task` (`grounding`, `dense_captioning`, ...).
/// A negative `duration` means unknown.
#[wasm_bindgen]
pub fn parse(task: &str, text: &str, duration: f64) -> Result<String, JsValue> {
    let task: Task = task.parse().map_err(js_err)?;
    let d = (duration >= 0.0).then_some(duration);
    serde_json::to_string(&parse_for_task(task, text, d)).map_err(js_err)
}

#[wasm_bindgen]
pub fn segment_iou(a_start: f64, a_end: f64, b_start: f64, b_end: f64) -> Result<f64, JsValue> {
    let a = Segment::new(a_start, a_end).map_err(js_err)?;
    let b = Segment::new(b_start, b_end).map_err(js_err)?;
    Ok(iou(&a, &b))
}
