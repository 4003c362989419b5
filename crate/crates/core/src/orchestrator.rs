//! One conversation turn: retrieval, optional data dispatch, and answer synthesis.

use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dispatch::{emit_function_schemas, DispatchError, FunctionCall, Registry};
use crate::gazetteer::Gazetteer;
use crate::intent::{parse_query, ParseError, Stat, StructuredQuery};
use crate::model::{FigureRef, Provenance, ResponseMeta, SubCallError, ToolResponse, Variable};
use crate::render::fixed2;
use crate::retrieval::{DocStore, SearchHit, WebResult, WebSearch};

/// Most tool calls executed from a single model reply.
const MAX_TOOL_CALLS: usize = 4;

const SYSTEM_PROMPT: &str = "You answer questions about coastal water levels, sea level and sea surface \
temperature. Call the provided functions to obtain data. Report numbers exactly as the functions return \
them, with their units, datum, station and dataset. Do not invent values.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Deterministic,
    ModelBacked,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "deterministic" | "template" => Ok(Mode::Deterministic),
            "modelbacked" | "model" => Ok(Mode::ModelBacked),
            _ => Err(format!("unknown mode '{s}'; expected deterministic or model_backed")),
        }
    }
}

/// What the parser made of the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuredPlan {
    Query { query: StructuredQuery },
    /// No template matched; a model may still pick a function.
    DeferredToModel { diagnostic: String },
    Rejected { error: String, diagnostic: String },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnPlan {
    pub run_web: bool,
    pub run_docs: bool,
    pub structured: StructuredPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitationKind {
    Dataset,
    Document,
    Web,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub kind: CitationKind,
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub mode: Mode,
    /// Set when model text was replaced by the template answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub figures: Vec<FigureRef>,
    pub data: Value,
    pub citations: Vec<Citation>,
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ResponseMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<SubCallError>,
    pub notes: Vec<String>,
    pub plan: TurnPlan,
    pub synthesis: Synthesis,
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error("{0}")]
    Parse(ParseError),
    #[error("{error}")]
    Dispatch {
        error: DispatchError,
        partial: Box<Answer>,
    },
    #[error("model-backed mode is not configured: {0}")]
    ModelUnavailable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("chat endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("malformed chat response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    /// JSON-encoded arguments, as the wire protocol carries them.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatReply {
    pub content: Option<String>,
    pub tool_calls: Vec<ToolCallRequest>,
}

/// A chat-completions-with-tools endpoint.
pub trait ChatModel: Send + Sync {
    fn complete(&self, messages: &[Value], tools: &[Value]) -> Result<ChatReply, ChatError>;
}

/// Parses `choices[0].message` of a chat-completions response.
pub fn parse_chat_reply(body: &Value) -> Result<ChatReply, ChatError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ChatError::BadResponse("missing choices[0].message".into()))?;
    let content = msg.get("content").and_then(Value::as_str).map(str::to_string);
    let tool_calls = msg
        .get("tool_calls")
        .and_then(Value::as_array)
        .map(|calls| {
            calls
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let f = c.get("function").unwrap_or(c);
                    let arguments = match f.get("arguments") {
                        Some(Value::String(s)) => s.clone(),
                        Some(other) => other.to_string(),
                        None => "{}".into(),
                    };
                    ToolCallRequest {
                        id: c.get("id").and_then(Value::as_str).map_or_else(|| format!("call_{i}"), str::to_string),
                        name: f.get("name").and_then(Value::as_str).unwrap_or_default().to_string(),
                        arguments,
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(ChatReply { content, tool_calls })
}

/// HTTP adapter for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpChatModel {
    url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatModel {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ChatError::Unavailable(e.to_string()))?;
        Ok(HttpChatModel {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            client,
        })
    }
}

impl ChatModel for HttpChatModel {
    fn complete(&self, messages: &[Value], tools: &[Value]) -> Result<ChatReply, ChatError> {
        let mut body = json!({ "model": self.model, "messages": messages, "temperature": 0 });
        if !tools.is_empty() {
            body["tools"] = json!(tools);
        }
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ChatError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let value: Value = resp.json().map_err(|e| ChatError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            return Err(ChatError::Unavailable(format!("HTTP {status}: {value}")));
        }
        parse_chat_reply(&value)
    }
}

fn decimal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^0-9A-Za-z.])(-?[0-9]+\.[0-9]+)(?:[^0-9.]|\.(?:[^0-9]|$)|$)").unwrap())
}

/// Decimal literals in `text`, in order. Version-like tokens such as `1.2.3` are skipped.
pub fn decimal_literals(text: &str) -> Vec<String> {
    let re = decimal_re();
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(c) = re.captures_at(text, pos) {
        let m = c.get(1).unwrap();
        out.push(m.as_str().to_string());
        // The trailing context may start the next literal.
        pos = m.end();
    }
    out
}

fn collect_numbers(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.extend(n.as_f64()),
        Value::Array(a) => a.iter().for_each(|x| collect_numbers(x, out)),
        Value::Object(m) => m
            .iter()
            .filter(|(k, _)| k.as_str() != "series")
            .for_each(|(_, x)| collect_numbers(x, out)),
        _ => {}
    }
}

/// Checks every decimal literal in `text` against the numbers in `data`,
/// compared at the literal's own precision. Returns the first literal without a match.
pub fn check_grounding(text: &str, data: &Value) -> Result<(), String> {
    let mut numbers = Vec::new();
    collect_numbers(data, &mut numbers);
    for lit in decimal_literals(text) {
        let digits = lit.split('.').nth(1).map_or(0, str::len);
        let target = lit.trim_start_matches('-');
        let found = numbers.iter().any(|n| {
            let s = format!("{:.*}", digits, n.abs());
            s == target
        });
        if !found {
            return Err(lit);
        }
    }
    Ok(())
}

/// Runs turns against a registry, a document store and a web-search adapter.
pub struct Orchestrator {
    registry: Arc<Registry>,
    gazetteer: Arc<Gazetteer>,
    docs: Arc<DocStore>,
    web: Arc<dyn WebSearch>,
    model: Option<Arc<dyn ChatModel>>,
    top_k: usize,
    reference_time: Option<DateTime<Utc>>,
}

impl Orchestrator {
    pub fn new(registry: Arc<Registry>, gazetteer: Arc<Gazetteer>, docs: Arc<DocStore>, web: Arc<dyn WebSearch>) -> Self {
        Orchestrator {
            registry,
            gazetteer,
            docs,
            web,
            model: None,
            top_k: crate::retrieval::DEFAULT_TOP_K,
            reference_time: None,
        }
    }

    pub fn with_model(mut self, model: Arc<dyn ChatModel>) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k.max(1);
        self
    }

    /// Fixes "now" for relative time expressions such as "last year".
    pub fn with_reference_time(mut self, t: DateTime<Utc>) -> Self {
        self.reference_time = Some(t);
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn docs(&self) -> &DocStore {
        &self.docs
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    fn now(&self) -> DateTime<Utc> {
        self.reference_time.unwrap_or_else(Utc::now)
    }

    pub fn plan(&self, user_text: &str) -> TurnPlan {
        let structured = match parse_query(user_text, &self.gazetteer, self.now()) {
            Ok(query) => StructuredPlan::Query { query },
            Err(ParseError::EmptyQuery) => StructuredPlan::None,
            Err(e @ ParseError::UnsupportedIntent(_)) => StructuredPlan::DeferredToModel {
                diagnostic: e.to_string(),
            },
            Err(e) => StructuredPlan::Rejected {
                error: e.kind().to_string(),
                diagnostic: e.to_string(),
            },
        };
        TurnPlan {
            run_web: true,
            run_docs: true,
            structured,
        }
    }

    pub fn run_turn(&self, user_text: &str, mode: Mode) -> Result<Answer, TurnError> {
        if mode == Mode::ModelBacked && self.model.is_none() {
            return Err(TurnError::ModelUnavailable("no chat model endpoint configured".into()));
        }
        let plan = self.plan(user_text);
        match &plan.structured {
            StructuredPlan::Rejected { .. } => {
                return Err(TurnError::Parse(
                    parse_query(user_text, &self.gazetteer, self.now()).expect_err("plan rejected the query"),
                ))
            }
            StructuredPlan::None => return Ok(self.clarification(plan, mode)),
            _ => {}
        }
        let query = match &plan.structured {
            StructuredPlan::Query { query } => Some(query.clone()),
            _ => None,
        };
        let (web, docs, data) = std::thread::scope(|s| {
            let web = s.spawn(|| plan.run_web.then(|| self.web.search(user_text)));
            let docs = s.spawn(|| plan.run_docs.then(|| self.docs.search(user_text, self.top_k).unwrap_or_default()));
            let data = query.as_ref().map(|q| self.registry.dispatch_structured(q));
            (
                web.join().unwrap_or(None),
                docs.join().unwrap_or_default().unwrap_or_default(),
                data,
            )
        });
        let mut notes = Vec::new();
        let web = match web {
            Some(Ok(r)) => r,
            Some(Err(e)) => {
                notes.push(format!("{e}; answered from documents and data only"));
                Vec::new()
            }
            None => Vec::new(),
        };
        let retrieval = Retrieved { docs, web, notes };

        match (mode, data) {
            (_, Some(Err(error))) => {
                let partial = self.assemble(plan.clone(), mode, None, &retrieval, Vec::new());
                Err(TurnError::Dispatch {
                    error,
                    partial: Box::new(partial),
                })
            }
            (Mode::Deterministic, data) => Ok(self.assemble(plan, mode, data.map(|d| d.unwrap()), &retrieval, Vec::new())),
            (Mode::ModelBacked, Some(Ok(resp))) => {
                let q = query.expect("data implies a query");
                Ok(self.model_phrase(user_text, plan, &q, resp, retrieval))
            }
            (Mode::ModelBacked, None) => Ok(self.model_deferred(user_text, plan, retrieval)),
        }
    }

    fn clarification(&self, plan: TurnPlan, mode: Mode) -> Answer {
        Answer {
            text: "Please ask about a place and a time, for example the maximum water level in Boston in 2024, \
                   monthly mean sea level at Virginia Key in 2022, or sea surface temperature in the Gulf of Mexico \
                   on 2019-12-31."
                .into(),
            figures: Vec::new(),
            data: Value::Null,
            citations: Vec::new(),
            provenance: Vec::new(),
            tool: None,
            errors: Vec::new(),
            notes: vec!["empty question; no retrieval or data request was made".into()],
            plan,
            synthesis: Synthesis { mode, fallback: None },
        }
    }

    fn assemble(
        &self,
        plan: TurnPlan,
        mode: Mode,
        resp: Option<ToolResponse>,
        retrieval: &Retrieved,
        mut extra_notes: Vec<String>,
    ) -> Answer {
        let query = match &plan.structured {
            StructuredPlan::Query { query } => Some(query),
            _ => None,
        };
        let mut text = String::new();
        if let (Some(q), Some(r)) = (query, &resp) {
            if let Some(lead) = lead_sentence(q, r) {
                text.push_str(&lead);
                text.push(' ');
            }
            text.push_str(&r.text);
        } else if resp.is_none() {
            text.push_str(match &plan.structured {
                StructuredPlan::DeferredToModel { .. } => {
                    "No data function matches this question, so the answer draws on retrieved sources only."
                }
                _ => "No data could be retrieved for this question.",
            });
        } else if let Some(r) = &resp {
            text.push_str(&r.text);
        }
        text.push_str(&retrieval.source_text());
        let mut notes = retrieval.notes.clone();
        notes.append(&mut extra_notes);
        if let Some(r) = &resp {
            for e in &r.others.errors {
                notes.push(format!("{}: {} ({})", e.location, e.message, e.error));
            }
        }
        let mut citations = Vec::new();
        if let Some(r) = &resp {
            for p in &r.others.provenance {
                if !citations.iter().any(|c: &Citation| c.id == p.dataset_id && c.kind == CitationKind::Dataset) {
                    citations.push(Citation {
                        kind: CitationKind::Dataset,
                        id: p.dataset_id.clone(),
                        title: p.source_name.clone(),
                        url: None,
                        year: None,
                    });
                }
            }
        }
        citations.extend(retrieval.citations());
        Answer {
            text,
            figures: resp.as_ref().map(|r| r.images.clone()).unwrap_or_default(),
            data: resp.as_ref().map(|r| r.json_data.clone()).unwrap_or(Value::Null),
            citations,
            provenance: resp.as_ref().map(|r| r.others.provenance.clone()).unwrap_or_default(),
            errors: resp.as_ref().map(|r| r.others.errors.clone()).unwrap_or_default(),
            tool: resp.map(|r| r.others),
            notes,
            plan,
            synthesis: Synthesis { mode, fallback: None },
        }
    }

    fn model(&self) -> &dyn ChatModel {
        self.model.as_deref().expect("checked in run_turn")
    }

    /// The parser already chose the call: show the model the result and let it phrase the answer.
    fn model_phrase(&self, user_text: &str, plan: TurnPlan, q: &StructuredQuery, resp: ToolResponse, retrieval: Retrieved) -> Answer {
        let call_id = "call_0".to_string();
        let calls = self.registry.lower(q).unwrap_or_default();
        let arguments = calls
            .first()
            .map(|(_, c)| c.arguments.to_string())
            .unwrap_or_else(|| "{}".into());
        let messages = vec![
            json!({"role": "system", "content": SYSTEM_PROMPT}),
            json!({"role": "user", "content": retrieval.context(user_text)}),
            json!({"role": "assistant", "content": null, "tool_calls": [{
                "id": call_id, "type": "function",
                "function": {"name": resp.others.function, "arguments": arguments},
            }]}),
            json!({"role": "tool", "tool_call_id": call_id, "content": tool_message(&resp)}),
        ];
        let template = self.assemble(plan, Mode::ModelBacked, Some(resp), &retrieval, Vec::new());
        self.finish_with_model(messages, template, &retrieval)
    }

    /// No template matched: offer the tools and run at most one round of calls.
    fn model_deferred(&self, user_text: &str, plan: TurnPlan, retrieval: Retrieved) -> Answer {
        let tools = emit_function_schemas(&self.registry);
        let mut messages = vec![
            json!({"role": "system", "content": SYSTEM_PROMPT}),
            json!({"role": "user", "content": retrieval.context(user_text)}),
        ];
        let first = match self.model().complete(&messages, &tools) {
            Ok(r) => r,
            Err(e) => {
                let mut a = self.assemble(plan, Mode::ModelBacked, None, &retrieval, Vec::new());
                a.synthesis.fallback = Some(format!("ModelUnavailable: {e}"));
                return a;
            }
        };
        if first.tool_calls.is_empty() {
            let template = self.assemble(plan, Mode::ModelBacked, None, &retrieval, Vec::new());
            return self.accept_model_text(first.content, template, &retrieval);
        }
        messages.push(json!({
            "role": "assistant", "content": first.content,
            "tool_calls": first.tool_calls.iter().map(|c| json!({
                "id": c.id, "type": "function", "function": {"name": c.name, "arguments": c.arguments},
            })).collect::<Vec<_>>(),
        }));
        let mut results: Vec<(String, ToolResponse)> = Vec::new();
        let mut errors = Vec::new();
        for (i, call) in first.tool_calls.iter().enumerate() {
            let outcome = if i >= MAX_TOOL_CALLS {
                Err(DispatchError::InvalidQuery(format!("more than {MAX_TOOL_CALLS} tool calls in one reply")))
            } else {
                FunctionCall::from_tool_call(&json!({"name": call.name, "arguments": call.arguments}))
                    .and_then(|fc| self.registry.dispatch(&fc))
            };
            let content = match outcome {
                Ok(resp) => {
                    let c = tool_message(&resp);
                    results.push((call.id.clone(), resp));
                    c
                }
                Err(e) => {
                    errors.push(SubCallError {
                        location: call.name.clone(),
                        error: e.kind().to_string(),
                        message: e.to_string(),
                    });
                    e.to_json().to_string()
                }
            };
            messages.push(json!({"role": "tool", "tool_call_id": call.id, "content": content}));
        }
        let merged = merge_tool_results(results);
        let mut plan = plan;
        if let Some(r) = &merged {
            plan.structured = StructuredPlan::DeferredToModel {
                diagnostic: format!("model called {}", r.others.function),
            };
        }
        let mut template = self.assemble(plan, Mode::ModelBacked, merged, &retrieval, Vec::new());
        template.errors.extend(errors.iter().cloned());
        for e in &errors {
            template.notes.push(format!("tool call {} rejected: {}", e.location, e.message));
        }
        self.finish_with_model(messages, template, &retrieval)
    }

    fn finish_with_model(&self, messages: Vec<Value>, template: Answer, retrieval: &Retrieved) -> Answer {
        match self.model().complete(&messages, &[]) {
            Ok(reply) => self.accept_model_text(reply.content, template, retrieval),
            Err(e) => {
                let mut a = template;
                a.synthesis.fallback = Some(format!("ModelUnavailable: {e}"));
                a
            }
        }
    }

    /// Keeps the model's wording only if every decimal it states is in the data.
    fn accept_model_text(&self, content: Option<String>, template: Answer, retrieval: &Retrieved) -> Answer {
        let mut a = template;
        let Some(text) = content.filter(|t| !t.trim().is_empty()) else {
            a.synthesis.fallback = Some("EmptySynthesis: model returned no text".into());
            return a;
        };
        if !a.data.is_null() {
            if let Err(lit) = check_grounding(&text, &a.data) {
                a.synthesis.fallback = Some(format!(
                    "SynthesisNumericMismatch: model stated {lit}, which is not in the returned data"
                ));
                a.notes.push("model wording replaced by the template answer".into());
                return a;
            }
        }
        a.text = format!("{}{}", text.trim(), retrieval.source_text());
        a
    }
}

fn tool_message(resp: &ToolResponse) -> String {
    let mut data = resp.json_data.clone();
    strip_series(&mut data);
    json!({
        "text": resp.text,
        "json_data": data,
        "unit": resp.others.unit,
        "provenance": resp.others.provenance.iter().map(|p| json!({
            "source": p.source_name, "dataset": p.dataset_id, "station_or_grid": p.station_or_grid,
            "datum": p.datum,
        })).collect::<Vec<_>>(),
    })
    .to_string()
}

fn strip_series(v: &mut Value) {
    if let Value::Object(m) = v {
        m.remove("series");
        m.values_mut().for_each(strip_series);
    }
}

fn merge_tool_results(mut results: Vec<(String, ToolResponse)>) -> Option<ToolResponse> {
    if results.len() <= 1 {
        return results.pop().map(|(_, r)| r);
    }
    let mut data = Map::new();
    let mut text = Vec::new();
    let mut first = results[0].1.clone();
    first.images.clear();
    first.others.provenance.clear();
    for (id, r) in results {
        data.insert(id, r.json_data);
        text.push(r.text);
        first.images.extend(r.images);
        first.others.provenance.extend(r.others.provenance);
    }
    first.text = text.join(" ");
    first.json_data = Value::Object(data);
    Some(first)
}

struct Retrieved {
    docs: Vec<SearchHit>,
    web: Vec<WebResult>,
    notes: Vec<String>,
}

impl Retrieved {
    fn source_text(&self) -> String {
        let mut s = String::new();
        if !self.docs.is_empty() {
            let mut seen = Vec::new();
            for h in &self.docs {
                let label = match h.chunk.year {
                    Some(y) => format!("{} ({y})", h.chunk.title),
                    None => h.chunk.title.clone(),
                };
                if !seen.contains(&label) {
                    seen.push(label);
                }
            }
            s.push_str(&format!(" Related documents: {}.", seen.join("; ")));
        }
        if !self.web.is_empty() {
            let items: Vec<String> = self.web.iter().map(|w| format!("{} <{}>", w.title, w.url)).collect();
            s.push_str(&format!(" Web: {}.", items.join("; ")));
        }
        s
    }

    fn citations(&self) -> Vec<Citation> {
        let mut out: Vec<Citation> = Vec::new();
        for h in &self.docs {
            let id = format!("{}#{}", h.chunk.doc_id, h.chunk.chunk_index);
            out.push(Citation {
                kind: CitationKind::Document,
                id,
                title: h.chunk.title.clone(),
                url: (!h.chunk.origin.is_empty()).then(|| h.chunk.origin.clone()),
                year: h.chunk.year,
            });
        }
        for w in &self.web {
            if !out.iter().any(|c| c.kind == CitationKind::Web && c.id == w.url) {
                out.push(Citation {
                    kind: CitationKind::Web,
                    id: w.url.clone(),
                    title: w.title.clone(),
                    url: Some(w.url.clone()),
                    year: None,
                });
            }
        }
        out
    }

    fn context(&self, user_text: &str) -> String {
        let mut s = user_text.to_string();
        if !self.docs.is_empty() {
            s.push_str("\n\nRetrieved passages:");
            for h in &self.docs {
                s.push_str(&format!("\n- [{}] {}", h.chunk.title, h.chunk.text));
            }
        }
        if !self.web.is_empty() {
            s.push_str("\n\nWeb results:");
            for w in &self.web {
                s.push_str(&format!("\n- {} ({}): {}", w.title, w.url, w.snippet));
            }
        }
        s
    }
}

/// A one-sentence answer to the statistic the question asked for.
fn lead_sentence(q: &StructuredQuery, r: &ToolResponse) -> Option<String> {
    let d = &r.json_data;
    let unit = r.others.unit.map(|u| u.symbol()).unwrap_or_default();
    let place = d
        .get("location")
        .or_else(|| d.get("region"))
        .and_then(Value::as_str)
        .unwrap_or_default();
    let when = match (q.variable, d.get("date").and_then(Value::as_str)) {
        (Variable::SeaSurfaceTemperature, Some(day)) => format!("on {day}"),
        _ => format!("from {} to {}", q.time.start.format("%Y-%m-%d"), q.time.end.format("%Y-%m-%d")),
    };
    let datum = d
        .get("datum")
        .and_then(Value::as_str)
        .map(|x| format!(" relative to {x}"))
        .unwrap_or_default();
    let station = d
        .pointer("/station/id")
        .and_then(Value::as_str)
        .map(|id| format!(" (station {id})"))
        .unwrap_or_default();
    let noun = match (q.variable, d.get("interval").and_then(Value::as_str)) {
        (Variable::WaterLevel, Some("hourly")) => "hourly water level".to_string(),
        (Variable::WaterLevel, Some(_)) => "six-minute water level".to_string(),
        (v, _) => v.label().to_string(),
    };
    let num = |k: &str| d.get(k).and_then(Value::as_f64);
    let time = |k: &str| {
        d.get(k)
            .and_then(Value::as_str)
            .and_then(|t| DateTime::parse_from_rfc3339(t).ok())
            .map(|t| format!(", at {}", t.with_timezone(&Utc).format("%Y-%m-%d %H:%M UTC")))
            .unwrap_or_default()
    };
    let cell = |k: &str| {
        d.get(k)
            .map(|p| format!(", at ({}, {})", fixed2(p["lat"].as_f64().unwrap_or_default()), fixed2(p["lon"].as_f64().unwrap_or_default())))
            .unwrap_or_default()
    };
    let sst = q.variable == Variable::SeaSurfaceTemperature;
    let s = match q.stat {
        Stat::Max => format!(
            "The maximum {noun} at {place}{station} {when} was {} {unit}{datum}{}.",
            fixed2(num("max")?),
            if sst { cell("argmax") } else { time("argmax_time") }
        ),
        Stat::Min => format!(
            "The minimum {noun} at {place}{station} {when} was {} {unit}{datum}{}.",
            fixed2(num("min")?),
            if sst { cell("argmin") } else { time("argmin_time") }
        ),
        Stat::Mean => format!("The mean {noun} at {place}{station} {when} was {} {unit}{datum}.", fixed2(num("mean")?)),
        Stat::Std => format!(
            "The standard deviation of {noun} at {place}{station} {when} was {} {unit}.",
            fixed2(num("std")?)
        ),
        Stat::Trend => {
            let rate = d.pointer("/trend/slope_mm_per_year").and_then(Value::as_f64)?;
            format!("The least-squares change rate of {noun} at {place}{station} {when} was {} mm/yr.", fixed2(rate))
        }
        Stat::FullSeries | Stat::Compare => return None,
    };
    Some(s.replace(" at  ", " at ").replace("  ", " "))
}
