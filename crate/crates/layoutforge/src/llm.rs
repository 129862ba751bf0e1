//! External estimation/refinement backends over an OpenAI-compatible
//! chat-completion endpoint: prompt templates, transport, response
//! parsing, and the [`Refiner`] adapter.
//!
//! The bridge never forges geometry: every layout it returns was parsed
//! from endpoint text, or an error is raised.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assets::BackgroundAssets;
use crate::error::{AttemptRecord, Error, Result};
use crate::layout::{Layout, Taxonomy};
use crate::markup::{layout_to_markup, markup_to_layout};
use crate::refine::{Refiner, RoundContext, RoundResult};
use crate::render::{render_layout, RenderStyle};

/// Endpoint settings; see [`EndpointConfig::from_env`] for the environment
/// variable names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to but excluding `/chat/completions`.
    pub base_url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub model: String,
    /// Extra attempts after a parse failure; the parse error is appended
    /// to the retry prompt.
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Log request/response bodies to stderr (API key redacted).
    pub trace: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080/v1".to_string(),
            api_key: None,
            model: "default".to_string(),
            max_retries: 2,
            timeout_secs: 120,
            trace: false,
        }
    }
}

impl EndpointConfig {
    /// Read `LAYOUTFORGE_LLM_BASE_URL`, `LAYOUTFORGE_LLM_API_KEY`, and
    /// `LAYOUTFORGE_LLM_MODEL`.
    pub fn from_env() -> Result<Self> {
        let base_url = std::env::var("LAYOUTFORGE_LLM_BASE_URL").map_err(|_| Error::Endpoint {
            message: "LAYOUTFORGE_LLM_BASE_URL not set".into(),
            attempts: 0,
        })?;
        let model = std::env::var("LAYOUTFORGE_LLM_MODEL").map_err(|_| Error::Endpoint {
            message: "LAYOUTFORGE_LLM_MODEL not set".into(),
            attempts: 0,
        })?;
        Ok(Self {
            base_url,
            api_key: std::env::var("LAYOUTFORGE_LLM_API_KEY").ok(),
            model,
            ..Default::default()
        })
    }
}

/// One chat request: a system preamble, the user instruction, and an
/// optional PNG attachment.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub system: String,
    pub user_text: String,
    pub image_png_base64: Option<String>,
}

/// Transport behind the bridge; tests substitute scripted responses.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, cfg: &EndpointConfig, request: &ChatRequest) -> Result<String>;
}

/// Blocking HTTP transport speaking the chat-completions JSON protocol.
pub struct HttpChatTransport {
    client: reqwest::blocking::Client,
}

impl HttpChatTransport {
    pub fn new(timeout_secs: u64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::Endpoint {
                message: e.to_string(),
                attempts: 0,
            })?;
        Ok(Self { client })
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, cfg: &EndpointConfig, request: &ChatRequest) -> Result<String> {
        let mut content = vec![serde_json::json!({"type": "text", "text": request.user_text})];
        if let Some(b64) = &request.image_png_base64 {
            content.push(serde_json::json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{b64}")}
            }));
        }
        let body = serde_json::json!({
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": content},
            ],
        });
        if cfg.trace {
            eprintln!(
                "[llm] POST {}/chat/completions (api key {})\n{body}",
                cfg.base_url.trim_end_matches('/'),
                if cfg.api_key.is_some() { "redacted" } else { "absent" },
            );
        }
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = &cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Endpoint {
            message: e.to_string(),
            attempts: 1,
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Endpoint {
            message: e.to_string(),
            attempts: 1,
        })?;
        if cfg.trace {
            eprintln!("[llm] {status}\n{text}");
        }
        if !status.is_success() {
            return Err(Error::Endpoint {
                message: format!("HTTP {status}: {text}"),
                attempts: 1,
            });
        }
        let value: serde_json::Value = serde_json::from_str(&text)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| Error::Endpoint {
                message: "response has no choices[0].message.content".into(),
                attempts: 1,
            })
    }
}

/// Prompt template with `{slot}` placeholders. Templates are versioned by
/// content hash in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub instruction: String,
}

/// Values substituted into a [`PromptTemplate`].
#[derive(Debug, Clone, Default)]
pub struct TemplateSlots {
    pub category_list: String,
    pub constraint: String,
    pub layout_markup: String,
    pub ecot_slot: String,
}

impl PromptTemplate {
    /// Template for producing an initial layout from a background image.
    pub fn estimation_default() -> Self {
        Self {
            preamble: "You are a graphic designer placing elements on a poster background. \
                       Produce layouts that are readable, balanced, and respect the image content."
                .into(),
            instruction: "Design a layout for the attached background image.\n\
                          Available element categories: {category_list}.\n\
                          {constraint}\n\
                          Keep elements aligned, avoid overlaps, keep text off busy regions, \
                          and place underlays beneath the elements they back.\n\
                          Answer with exactly one layout block in this form:\n\
                          <layout canvas_w=\"W\" canvas_h=\"H\">\n  \
                          <el class=\"category\" l=\"0.1000\" t=\"0.1000\" w=\"0.2000\" h=\"0.1000\"/>\n\
                          </layout>\n\
                          Coordinates are fractions of the canvas with four decimals."
                .into(),
        }
    }

    /// Template for critiquing and refining an existing layout.
    pub fn refinement_default() -> Self {
        Self {
            preamble: "You are a graphic designer reviewing a draft poster layout. \
                       The attached image shows the current layout drawn over the background."
                .into(),
            instruction: "Improve the current layout:\n{layout_markup}\n\
                          Available element categories: {category_list}.\n\
                          {constraint}\n\
                          First evaluate the draft against these rules: elements must not \
                          overlap; every underlay must cover an element; elements must not \
                          cover the salient object in the background; elements must align \
                          with each other. {ecot_slot}\n\
                          State the violations you found (or that the layout is fine), then \
                          answer with exactly one corrected layout block:\n\
                          <layout canvas_w=\"W\" canvas_h=\"H\">\n  \
                          <el class=\"category\" l=\"0.1000\" t=\"0.1000\" w=\"0.2000\" h=\"0.1000\"/>\n\
                          </layout>"
                .into(),
        }
    }

    pub fn render(&self, slots: &TemplateSlots) -> String {
        self.instruction
            .replace("{category_list}", &slots.category_list)
            .replace("{constraint}", &slots.constraint)
            .replace("{layout_markup}", &slots.layout_markup)
            .replace("{ecot_slot}", &slots.ecot_slot)
    }

    /// Content hash for run manifests.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.preamble.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.instruction.as_bytes());
        hex_lower(&hasher.finalize())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::file(path, e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(path, e))
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Required category multiset for constraint-based generation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryConstraint {
    pub counts: BTreeMap<String, usize>,
}

impl CategoryConstraint {
    pub fn new(counts: impl IntoIterator<Item = (String, usize)>) -> Self {
        Self {
            counts: counts.into_iter().filter(|(_, n)| *n > 0).collect(),
        }
    }

    pub fn of_layout(layout: &Layout) -> Self {
        let mut counts = BTreeMap::new();
        for el in &layout.elements {
            *counts.entry(el.category.name.clone()).or_insert(0) += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Human-readable form for prompts, e.g. `2 x text, 1 x underlay`.
    pub fn describe(&self) -> String {
        self.counts
            .iter()
            .map(|(name, n)| format!("{n} x {name}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Exact multiset check; errors name the missing and extra categories.
    pub fn check(&self, layout: &Layout) -> Result<()> {
        let got = Self::of_layout(layout);
        if got == *self {
            return Ok(());
        }
        let mut missing = Vec::new();
        let mut extra = Vec::new();
        let names: std::collections::BTreeSet<&String> =
            self.counts.keys().chain(got.counts.keys()).collect();
        for name in names {
            let want = self.counts.get(name).copied().unwrap_or(0);
            let have = got.counts.get(name).copied().unwrap_or(0);
            if have < want {
                missing.push(format!("{name} x{}", want - have));
            } else if have > want {
                extra.push(format!("{name} x{}", have - want));
            }
        }
        Err(Error::ConstraintViolation { missing, extra })
    }
}

fn encode_png_base64(image: &image::RgbImage) -> Result<String> {
    let mut bytes = Vec::new();
    image.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    Ok(BASE64.encode(bytes))
}

fn category_list(taxonomy: &Taxonomy) -> String {
    taxonomy.names().collect::<Vec<_>>().join(", ")
}

fn retry_prompt(base: &str, error: &Error) -> String {
    format!(
        "{base}\n\nYour previous reply could not be parsed: {error}. \
         Reply with exactly one <layout> block in the required attribute format."
    )
}

/// Ask the endpoint for an initial layout given the background image and an
/// optional exact category constraint. Parse failures are retried up to
/// `cfg.max_retries` times with the error appended to the prompt; a
/// constraint violation fails immediately.
pub fn estimate_via_llm(
    assets: &BackgroundAssets,
    constraint: Option<&CategoryConstraint>,
    taxonomy: &Taxonomy,
    template: &PromptTemplate,
    transport: &dyn ChatTransport,
    cfg: &EndpointConfig,
) -> Result<Layout> {
    let (w, h) = assets.image.dimensions();
    let constraint_text = match constraint {
        Some(c) => format!(
            "The canvas is {w}x{h} pixels. Place exactly these elements: {}.",
            c.describe()
        ),
        None => format!("The canvas is {w}x{h} pixels."),
    };
    let slots = TemplateSlots {
        category_list: category_list(taxonomy),
        constraint: constraint_text,
        ..Default::default()
    };
    let image_b64 = encode_png_base64(&assets.image)?;
    let base_prompt = template.render(&slots);

    let mut prompt = base_prompt.clone();
    let mut log: Vec<AttemptRecord> = Vec::new();
    for attempt in 0..=cfg.max_retries {
        let request = ChatRequest {
            system: template.preamble.clone(),
            user_text: prompt.clone(),
            image_png_base64: Some(image_b64.clone()),
        };
        let reply = match transport.complete(cfg, &request) {
            Ok(r) => r,
            Err(e) => {
                log.push(AttemptRecord {
                    attempt: attempt + 1,
                    detail: format!("transport: {e}"),
                });
                continue;
            }
        };
        match markup_to_layout(&reply, taxonomy) {
            Ok(parsed) => {
                if let Some(c) = constraint {
                    c.check(&parsed.layout)?;
                }
                return Ok(parsed.layout);
            }
            Err(e) => {
                prompt = retry_prompt(&base_prompt, &e);
                log.push(AttemptRecord {
                    attempt: attempt + 1,
                    detail: format!("parse: {e}"),
                });
            }
        }
    }
    Err(Error::RetriesExhausted { log })
}

/// One refinement exchange: render the current layout onto the background,
/// send it with the layout markup, and split the reply into the evaluation
/// text (everything before the layout block) and the refined layout.
pub fn refine_via_llm(
    assets: &BackgroundAssets,
    layout: &Layout,
    taxonomy: &Taxonomy,
    template: &PromptTemplate,
    style: &RenderStyle,
    transport: &dyn ChatTransport,
    cfg: &EndpointConfig,
) -> Result<(String, Layout)> {
    let visual_prompt = render_layout(assets, layout, style)?;
    let image_b64 = encode_png_base64(&visual_prompt)?;
    let slots = TemplateSlots {
        category_list: category_list(taxonomy),
        constraint: format!(
            "Keep exactly the same elements ({}).",
            CategoryConstraint::of_layout(layout).describe()
        ),
        layout_markup: layout_to_markup(layout),
        ecot_slot: String::new(),
    };
    let base_prompt = template.render(&slots);

    let mut prompt = base_prompt.clone();
    let mut log: Vec<AttemptRecord> = Vec::new();
    for attempt in 0..=cfg.max_retries {
        let request = ChatRequest {
            system: template.preamble.clone(),
            user_text: prompt.clone(),
            image_png_base64: Some(image_b64.clone()),
        };
        let reply = match transport.complete(cfg, &request) {
            Ok(r) => r,
            Err(e) => {
                log.push(AttemptRecord {
                    attempt: attempt + 1,
                    detail: format!("transport: {e}"),
                });
                continue;
            }
        };
        match markup_to_layout(&reply, taxonomy) {
            Ok(parsed) => {
                let evaluation = reply
                    .find("<layout")
                    .map(|pos| reply[..pos].trim().to_string())
                    .unwrap_or_default();
                return Ok((evaluation, parsed.layout));
            }
            Err(e) => {
                prompt = retry_prompt(&base_prompt, &e);
                log.push(AttemptRecord {
                    attempt: attempt + 1,
                    detail: format!("parse: {e}"),
                });
            }
        }
    }
    Err(Error::RetriesExhausted { log })
}

/// [`Refiner`] backed by a chat endpoint. Construct one per sample
/// session; the transport may be shared.
pub struct LlmRefiner {
    pub transport: Arc<dyn ChatTransport>,
    pub endpoint: EndpointConfig,
    pub taxonomy: Taxonomy,
    pub template: PromptTemplate,
    pub style: RenderStyle,
}

impl LlmRefiner {
    pub fn new(transport: Arc<dyn ChatTransport>, endpoint: EndpointConfig, taxonomy: Taxonomy) -> Self {
        Self {
            transport,
            endpoint,
            taxonomy,
            template: PromptTemplate::refinement_default(),
            style: RenderStyle::default(),
        }
    }
}

impl Refiner for LlmRefiner {
    fn name(&self) -> &str {
        "llm"
    }

    fn refine_round(&mut self, ctx: &RoundContext<'_>) -> Result<RoundResult> {
        let assets = ctx.assets.ok_or(Error::BackgroundRequired)?;
        let (evaluation, layout) = refine_via_llm(
            assets,
            ctx.layout,
            &self.taxonomy,
            &self.template,
            &self.style,
            self.transport.as_ref(),
            &self.endpoint,
        )?;
        Ok(RoundResult { evaluation, layout })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::solid_assets;
    use crate::layout::{Element, ElementCategory};
    use std::sync::Mutex;

    struct MockTransport {
        replies: Mutex<Vec<Result<String>>>,
        requests: Mutex<Vec<ChatRequest>>,
    }

    impl MockTransport {
        fn new(replies: Vec<Result<String>>) -> Self {
            Self {
                replies: Mutex::new(replies),
                requests: Mutex::new(Vec::new()),
            }
        }
    }

    impl ChatTransport for MockTransport {
        fn complete(&self, _cfg: &EndpointConfig, request: &ChatRequest) -> Result<String> {
            self.requests.lock().unwrap().push(request.clone());
            let mut replies = self.replies.lock().unwrap();
            if replies.is_empty() {
                return Err(Error::Endpoint {
                    message: "no scripted reply".into(),
                    attempts: 1,
                });
            }
            replies.remove(0)
        }
    }

    fn fixed_markup() -> String {
        "<layout canvas_w=\"100\" canvas_h=\"100\">\n  \
         <el class=\"text\" l=\"0.1000\" t=\"0.1000\" w=\"0.2000\" h=\"0.1000\"/>\n  \
         <el class=\"underlay\" l=\"0.0500\" t=\"0.0500\" w=\"0.3000\" h=\"0.2000\"/>\n\
         </layout>"
            .to_string()
    }

    fn cfg() -> EndpointConfig {
        EndpointConfig {
            max_retries: 2,
            ..Default::default()
        }
    }

    #[test]
    fn estimate_parses_valid_reply() {
        let transport = MockTransport::new(vec![Ok(fixed_markup())]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let layout = estimate_via_llm(
            &assets,
            None,
            &Taxonomy::default_poster(),
            &PromptTemplate::estimation_default(),
            &transport,
            &cfg(),
        )
        .unwrap();
        assert_eq!(layout.len(), 2);
        assert_eq!(layout.canvas_w, 100);
        // image was attached
        let reqs = transport.requests.lock().unwrap();
        assert!(reqs[0].image_png_base64.is_some());
    }

    #[test]
    fn estimate_retries_parse_failures_then_errors() {
        let transport = MockTransport::new(vec![
            Ok("no markup at all".into()),
            Ok("still nothing".into()),
            Ok("garbage".into()),
        ]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let err = estimate_via_llm(
            &assets,
            None,
            &Taxonomy::default_poster(),
            &PromptTemplate::estimation_default(),
            &transport,
            &cfg(),
        )
        .unwrap_err();
        match err {
            Error::RetriesExhausted { log } => {
                assert_eq!(log.len(), 3);
                assert!(log.iter().all(|a| a.detail.contains("parse")));
                assert_eq!(log.last().unwrap().attempt, 3);
            }
            other => panic!("unexpected error {other}"),
        }
        // retry prompts carried the parse error
        let reqs = transport.requests.lock().unwrap();
        assert_eq!(reqs.len(), 3);
        assert!(reqs[1].user_text.contains("could not be parsed"));
    }

    #[test]
    fn estimate_recovers_on_retry() {
        let transport = MockTransport::new(vec![Ok("oops".into()), Ok(fixed_markup())]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let layout = estimate_via_llm(
            &assets,
            None,
            &Taxonomy::default_poster(),
            &PromptTemplate::estimation_default(),
            &transport,
            &cfg(),
        )
        .unwrap();
        assert_eq!(layout.len(), 2);
    }

    #[test]
    fn estimate_enforces_constraint() {
        let transport = MockTransport::new(vec![Ok(fixed_markup())]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let constraint = CategoryConstraint::new([
            ("text".to_string(), 2),
            ("logo".to_string(), 1),
        ]);
        let err = estimate_via_llm(
            &assets,
            Some(&constraint),
            &Taxonomy::default_poster(),
            &PromptTemplate::estimation_default(),
            &transport,
            &cfg(),
        )
        .unwrap_err();
        match err {
            Error::ConstraintViolation { missing, extra } => {
                assert_eq!(missing, vec!["logo x1", "text x1"]);
                assert_eq!(extra, vec!["underlay x1"]);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn constraint_satisfied_passes() {
        let transport = MockTransport::new(vec![Ok(fixed_markup())]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let constraint = CategoryConstraint::new([
            ("text".to_string(), 1),
            ("underlay".to_string(), 1),
        ]);
        assert!(estimate_via_llm(
            &assets,
            Some(&constraint),
            &Taxonomy::default_poster(),
            &PromptTemplate::estimation_default(),
            &transport,
            &cfg(),
        )
        .is_ok());
    }

    #[test]
    fn refine_splits_evaluation_and_layout() {
        let reply = format!("{}\n{}", crate::principles::PASS_TEXT, fixed_markup());
        let transport = MockTransport::new(vec![Ok(reply)]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let input = Layout::new(
            vec![Element::new(ElementCategory::text("text"), 0.1, 0.1, 0.2, 0.1).unwrap()],
            100,
            100,
        )
        .unwrap();
        let (evaluation, layout) = refine_via_llm(
            &assets,
            &input,
            &Taxonomy::default_poster(),
            &PromptTemplate::refinement_default(),
            &RenderStyle::default(),
            &transport,
            &cfg(),
        )
        .unwrap();
        assert_eq!(evaluation, crate::principles::PASS_TEXT);
        assert_eq!(layout.len(), 2);
        // the prompt embedded the current layout markup
        let reqs = transport.requests.lock().unwrap();
        assert!(reqs[0].user_text.contains("<layout canvas_w=\"100\""));
    }

    #[test]
    fn refine_missing_layout_block_exhausts_retries() {
        let transport = MockTransport::new(vec![
            Ok("there is element overlap in the current poster".into()),
            Ok("sorry".into()),
            Ok("still sorry".into()),
        ]);
        let assets = solid_assets(100, 100, [0, 0, 0], None);
        let input = Layout::new(
            vec![Element::new(ElementCategory::text("text"), 0.1, 0.1, 0.2, 0.1).unwrap()],
            100,
            100,
        )
        .unwrap();
        let err = refine_via_llm(
            &assets,
            &input,
            &Taxonomy::default_poster(),
            &PromptTemplate::refinement_default(),
            &RenderStyle::default(),
            &transport,
            &cfg(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RetriesExhausted { .. }));
    }

    #[test]
    fn template_hash_stable_and_sensitive() {
        let a = PromptTemplate::estimation_default();
        let b = PromptTemplate::estimation_default();
        assert_eq!(a.hash(), b.hash());
        let c = PromptTemplate {
            preamble: a.preamble.clone(),
            instruction: format!("{} extra", a.instruction),
        };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn template_slots_render() {
        let t = PromptTemplate {
            preamble: "p".into(),
            instruction: "cats: {category_list}; c: {constraint}; m: {layout_markup}".into(),
        };
        let s = TemplateSlots {
            category_list: "a, b".into(),
            constraint: "place 2".into(),
            layout_markup: "<layout/>".into(),
            ecot_slot: String::new(),
        };
        assert_eq!(t.render(&s), "cats: a, b; c: place 2; m: <layout/>");
    }

    #[test]
    fn constraint_describe_and_roundtrip() {
        let c = CategoryConstraint::new([("text".into(), 2), ("logo".into(), 1)]);
        assert_eq!(c.describe(), "1 x logo, 2 x text");
        assert_eq!(c.total(), 3);
    }
}
