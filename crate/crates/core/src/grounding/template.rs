//! Instruction rendering and response parsing for the citation interface.

use crate::error::{Error, Result};
use crate::proposal::EvidencePool;
use crate::syndata::{num_steps, step_time};

const SYSTEM: &str = "You are a multimodal AI assistant. Follow the user instruction and produce the answer.";
const VISION_START: &str = "<|vision_start|>";
const VISION_END: &str = "<|vision_end|>";
const VIDEO_PAD: &str = "<|video_pad|>";
const CITE_MARKER: &str = "Corresponding span:";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptMode {
    /// The query text is used verbatim as the question.
    Train,
    /// The query text is wrapped as "During what time, can you see {query}".
    Inference,
}

pub fn span_token(k: usize) -> String {
    format!("<Span_{k}>")
}

/// Renders the full chat prompt for one query over a pool of `k` units with
/// `m` evidence tokens each. The video stream shows one placeholder per
/// pooled timestep, stamped with the timestep's center time.
pub fn serialize_instruction(pool: &EvidencePool, query_text: &str, mode: PromptMode, k: usize, m: usize) -> Result<String> {
    if query_text.trim().is_empty() {
        return Err(Error::Empty("query text"));
    }
    if pool.k() != k {
        return Err(Error::Config(format!("pool {} has {} units, expected K={k}", pool.video_id, pool.k())));
    }
    if let Some(u) = pool.units.iter().find(|u| u.tokens.rows() != m) {
        return Err(Error::Config(format!(
            "unit {} of pool {} has {} evidence tokens, expected M={m}",
            u.span_id,
            pool.video_id,
            u.tokens.rows()
        )));
    }
    let mut s = String::new();
    s.push_str("<|im_start|>system\n");
    s.push_str(SYSTEM);
    s.push_str("\n<|im_end|>\n\n<|im_start|>user\n");
    for i in 0..num_steps(pool.duration_s, pool.fps) {
        let t = step_time(i, pool.fps, pool.duration_s);
        s.push_str(&format!("<{t:.1} seconds>{VISION_START}{VIDEO_PAD}{VISION_END}"));
    }
    s.push_str("\n\n");
    s.push_str(&format!(
        "Here are {k} candidate event spans extracted from the video. Each candidate provides (1) its time range and \
         (2) {m} visual span tokens. You MUST cite exactly one span id token at the end of your answer.\n"
    ));
    let pads = VIDEO_PAD.repeat(m);
    for u in &pool.units {
        s.push_str(&format!(
            "Candidate {}: from {:.1} seconds to {:.1} seconds, {} {VISION_START}{pads}{VISION_END}\n",
            u.span_id,
            u.interval.0,
            u.interval.1,
            span_token(u.span_id)
        ));
    }
    s.push('\n');
    match mode {
        PromptMode::Train => s.push_str(query_text),
        PromptMode::Inference => {
            s.push_str("During what time, can you see ");
            s.push_str(query_text);
            s.push('.');
        }
    }
    if mode == PromptMode::Train {
        s.push(',');
    }
    s.push_str(" Please answer naturally, and finally cite exactly ONE candidate span id token:");
    for id in 1..=k {
        s.push(' ');
        s.push_str(&span_token(id));
    }
    s.push_str(" .\n<|im_end|>");
    Ok(s)
}

/// Answer sentence stating an interval.
pub fn render_answer(query_text: &str, interval: (f64, f64)) -> String {
    format!(
        "The moment showing {} is from {:.1} seconds to {:.1} seconds",
        query_text.trim(),
        interval.0,
        interval.1
    )
}

/// `{answer}. Corresponding span: <Span_k>.`
pub fn render_response(answer: &str, cited_id: usize) -> String {
    format!("{answer}. {CITE_MARKER} {}.", span_token(cited_id))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedResponse {
    pub answer: String,
    pub cited_id: usize,
    pub interval: Option<(f64, f64)>,
}

/// Numeric ids of every `<Span_k>` token, in order of appearance.
fn citations(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("<Span_") {
        let tail = &rest[pos + 6..];
        let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() && tail[digits.len()..].starts_with('>') {
            // Ids too large for usize are still citations, just invalid ones.
            out.push(digits.parse().unwrap_or(usize::MAX));
        }
        rest = tail;
    }
    out
}

fn parse_seconds(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Last "from X seconds to Y seconds" phrase in `text`.
fn find_interval(text: &str) -> Option<(f64, f64)> {
    let mut best = None;
    let mut search = 0;
    while let Some(rel) = text[search..].find("from ") {
        let start = search + rel + 5;
        search = start;
        let tail = &text[start..];
        let Some(a_end) = tail.find(" seconds to ") else { continue };
        let after = &tail[a_end + " seconds to ".len()..];
        let Some(b_end) = after.find(" seconds") else { continue };
        if let (Some(a), Some(b)) = (parse_seconds(&tail[..a_end]), parse_seconds(&after[..b_end])) {
            best = Some((a, b));
        }
    }
    best
}

/// Extracts the answer, the single cited id and any stated interval.
pub fn parse_response(text: &str, k: usize) -> Result<ParsedResponse> {
    let ids = citations(text);
    let cited_id = match ids.as_slice() {
        [] => return Err(Error::NoCitation),
        [id] => *id,
        many => return Err(Error::MultipleCitations(many.len())),
    };
    if cited_id == 0 || cited_id > k {
        return Err(Error::InvalidSpanId { id: cited_id, k });
    }
    let answer = match text.find(CITE_MARKER) {
        Some(pos) => text[..pos].trim_end(),
        None => text.split("<Span_").next().unwrap_or("").trim_end(),
    };
    let answer = answer.strip_suffix('.').unwrap_or(answer).trim().to_string();
    let interval = find_interval(&answer);
    Ok(ParsedResponse {
        answer,
        cited_id,
        interval,
    })
}
