//! Prompt rendering and the completion-endpoint client used to turn a
//! prediction plus its attributions into a natural-language match report.
//!
//! The prompt template and the two default few-shot reports ship as text
//! assets; both can be overridden with files at runtime.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::{AttributionReport, EntryKind};
use crate::ingest::RawMatch;
use crate::model::Prediction;

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../assets/prompt_template.txt");
pub const DEFAULT_FEATURE_DESCRIPTIONS: &str = include_str!("../assets/covariate_glossary.txt");

const PLACEHOLDERS: [&str; 5] = ["{info}", "{feat}", "{explain}", "{team}", "{examples}"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("prompt bundle field {0} is empty")]
    EmptyField(&'static str),
    #[error("rendered prompt still contains placeholder {0}")]
    Placeholder(String),
    #[error("completion config invalid: {0}")]
    Config(String),
    #[error("completion request failed: {0}")]
    Transport(String),
    #[error("completion endpoint returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
}

/// The two default few-shot reports, in order.
pub fn default_examples() -> Vec<String> {
    vec![
        include_str!("../assets/report_example_1.txt").trim_end().to_string(),
        include_str!("../assets/report_example_2.txt").trim_end().to_string(),
    ]
}

/// Everything needed to render the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    /// Match context: teams, competition, date/time, predicted score.
    pub info: String,
    /// Feature descriptions with positive-attribution meanings.
    pub feat: String,
    /// Feature/attribution listing.
    pub explain: String,
    /// Team the report addresses.
    pub team: String,
    /// Few-shot example reports, rendered as `Report N: ...` in order.
    pub examples: Vec<String>,
}

impl PromptBundle {
    fn validate(&self) -> Result<(), ReportError> {
        for (name, value) in [
            ("info", &self.info),
            ("feat", &self.feat),
            ("explain", &self.explain),
            ("team", &self.team),
        ] {
            if value.trim().is_empty() {
                return Err(ReportError::EmptyField(name));
            }
        }
        if self.examples.is_empty() {
            return Err(ReportError::EmptyField("examples"));
        }
        Ok(())
    }
}

/// Renders the default template; see [`build_prompt_with_template`].
pub fn build_prompt(bundle: &PromptBundle) -> Result<String, ReportError> {
    build_prompt_with_template(DEFAULT_PROMPT_TEMPLATE, bundle)
}

/// Substitutes every placeholder site and verifies that none survive.
/// Pure: byte-identical output for identical inputs.
pub fn build_prompt_with_template(
    template: &str,
    bundle: &PromptBundle,
) -> Result<String, ReportError> {
    bundle.validate()?;
    let examples = bundle
        .examples
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Report {}: {}", i + 1, text))
        .collect::<Vec<_>>()
        .join("\n\n");
    // single pass so substituted values are never rescanned
    let values: [(&str, &str); 5] = [
        ("{info}", &bundle.info),
        ("{feat}", &bundle.feat),
        ("{explain}", &bundle.explain),
        ("{examples}", &examples),
        ("{team}", &bundle.team),
    ];
    let mut prompt = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(pos) = rest.find('{') {
        prompt.push_str(&rest[..pos]);
        rest = &rest[pos..];
        for (name, value) in values {
            if rest.starts_with(name) {
                prompt.push_str(value);
                rest = &rest[name.len()..];
                continue 'outer;
            }
        }
        prompt.push('{');
        rest = &rest[1..];
    }
    prompt.push_str(rest);
    for p in PLACEHOLDERS {
        if prompt.contains(p) {
            return Err(ReportError::Placeholder(p.to_string()));
        }
    }
    Ok(prompt)
}

/// Match context line for the `{info}` section. Uses only the rounded
/// predicted goals, never attribution values.
pub fn render_info(m: &RawMatch, prediction: &Prediction) -> String {
    format!(
        "{} vs {} at the {} on {}. Predicted score: {} {} - {} {}.",
        m.home_team,
        m.away_team,
        m.competition,
        m.date_time.format("%B %-d, %H:%M"),
        m.home_team,
        prediction.home_goals,
        prediction.away_goals,
        m.away_team,
    )
}

/// Attribution listing for the `{explain}` section: one line per entry,
/// players with their position and team when known, values to 4 decimals.
/// Empty lineup slots are omitted to keep the prompt short.
pub fn render_explain_section(report: &AttributionReport) -> String {
    let mut lines = Vec::new();
    for e in &report.entries {
        match &e.kind {
            EntryKind::EmptySlot => continue,
            EntryKind::Player {
                position: Some(position),
                team: Some(team),
            } => lines.push(format!(
                "{} ({}, {}): {:.4}",
                e.feature_name, position, team, e.attribution
            )),
            _ => lines.push(format!("{}: {:.4}", e.feature_name, e.attribution)),
        }
    }
    lines.join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub endpoint_url: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout_secs: u64,
    #[serde(default)]
    pub auth_token: Option<String>,
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(ReportError::Config("endpoint_url is empty".into()));
        }
        if self.max_tokens < 1 {
            return Err(ReportError::Config("max_tokens must be >= 1".into()));
        }
        if self.timeout_secs == 0 {
            return Err(ReportError::Config("timeout must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

/// Counting semaphore bounding in-flight completion requests.
struct Permits {
    available: Mutex<usize>,
    cond: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            available: Mutex::new(n.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cond.wait(n).unwrap();
        }
        *n -= 1;
    }

    fn release(&self) {
        *self.available.lock().unwrap() += 1;
        self.cond.notify_one();
    }
}

/// Blocking client for a completions endpoint. Safe to share across
/// threads; concurrent requests are capped by `max_concurrent`.
pub struct CompletionClient {
    config: CompletionConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
}

impl CompletionClient {
    pub fn new(config: CompletionConfig, max_concurrent: usize) -> Result<Self, ReportError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ReportError::Transport(e.to_string()))?;
        Ok(CompletionClient {
            config,
            client,
            permits: Permits::new(max_concurrent),
        })
    }

    /// POSTs `{model, prompt, max_tokens, temperature}` and returns the
    /// completion text, retrying once on a transient failure (timeout,
    /// connect error or 5xx).
    pub fn generate(&self, prompt: &str) -> Result<String, ReportError> {
        self.permits.acquire();
        let result = self.generate_once(prompt).or_else(|e| {
            if is_transient(&e) {
                self.generate_once(prompt)
            } else {
                Err(e)
            }
        });
        self.permits.release();
        result
    }

    fn generate_once(&self, prompt: &str) -> Result<String, ReportError> {
        let body = CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
        };
        let mut req = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(token) = &self.config.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| ReportError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ReportError::Transport(e.to_string()))?;
        if !status.is_success() {
            let excerpt: String = text.chars().take(200).collect();
            return Err(ReportError::Status {
                status: status.as_u16(),
                body: excerpt,
            });
        }
        parse_completion(&text)
    }
}

fn is_transient(e: &ReportError) -> bool {
    match e {
        ReportError::Transport(_) => true,
        ReportError::Status { status, .. } => *status >= 500,
        _ => false,
    }
}

/// Accepts both the legacy completions shape (`choices[0].text`) and the
/// chat shape (`choices[0].message.content`).
fn parse_completion(text: &str) -> Result<String, ReportError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ReportError::Malformed("no choices in response".into()))?;
    choice
        .get("text")
        .and_then(|t| t.as_str())
        .or_else(|| {
            choice
                .get("message")
                .and_then(|m| m.get("content"))
                .and_then(|c| c.as_str())
        })
        .map(String::from)
        .ok_or_else(|| ReportError::Malformed("choice has neither text nor message.content".into()))
}

/// One-shot convenience wrapper around [`CompletionClient`].
pub fn generate_report(prompt: &str, config: &CompletionConfig) -> Result<String, ReportError> {
    CompletionClient::new(config.clone(), 1)?.generate(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn bundle() -> PromptBundle {
        PromptBundle {
            info: "France vs Croatia at the Olympic Games on August 11, 13:30. Predicted score: France 35 - 24 Croatia.".into(),
            feat: DEFAULT_FEATURE_DESCRIPTIONS.trim_end().into(),
            explain: "Dika Mem (right back, France): 0.3127\nimportance: 0.0500".into(),
            team: "France".into(),
            examples: default_examples(),
        }
    }

    #[test]
    fn prompt_has_template_head_and_sections() {
        let prompt = build_prompt(&bundle()).unwrap();
        assert!(prompt.starts_with("<s>[INST] You are a sport assistant for a handball team."));
        assert!(prompt.contains("# Instructions"));
        assert!(prompt.contains("# Examples"));
        assert!(prompt.ends_with("[/INST]\n"));
    }

    #[test]
    fn prompt_substitutes_team_everywhere() {
        let prompt = build_prompt(&bundle()).unwrap();
        assert!(!prompt.contains("{team}"));
        // the instructions address the team at several sites
        assert!(prompt.matches("France").count() >= 4);
    }

    #[test]
    fn prompt_contains_each_default_report_once() {
        let prompt = build_prompt(&bundle()).unwrap();
        assert_eq!(prompt.matches("Report 1:").count(), 1);
        assert_eq!(prompt.matches("Report 2:").count(), 1);
        assert!(prompt.contains("Magnus Saugstrup"));
        assert!(prompt.contains("Sarah Bouktit"));
    }

    #[test]
    fn prompt_is_pure() {
        let a = build_prompt(&bundle()).unwrap();
        let b = build_prompt(&bundle()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prompt_rejects_empty_field() {
        let mut b = bundle();
        b.explain = String::new();
        assert!(matches!(
            build_prompt(&b),
            Err(ReportError::EmptyField("explain"))
        ));
    }

    #[test]
    fn prompt_rejects_leftover_placeholder() {
        let err = build_prompt_with_template("{info} {feat} {explain} {team} {examples} {info}", &{
            let mut b = bundle();
            b.info = "{feat}".into(); // sneaks a placeholder back in
            b
        })
        .unwrap_err();
        assert!(matches!(err, ReportError::Placeholder(_)));
    }

    #[test]
    fn explain_section_formats() {
        use crate::explain::{AttributionEntry, AttributionReport, Side};
        let report = AttributionReport {
            match_id: "final".into(),
            team_explained: Side::Home,
            entries: vec![
                AttributionEntry {
                    feature_name: "Dika Mem".into(),
                    attribution: 0.3127,
                    kind: EntryKind::Player {
                        position: Some("right back".into()),
                        team: Some("France".into()),
                    },
                },
                AttributionEntry {
                    feature_name: "importance".into(),
                    attribution: 0.05,
                    kind: EntryKind::Covariate,
                },
                AttributionEntry {
                    feature_name: "empty slot 7".into(),
                    attribution: 0.0,
                    kind: EntryKind::EmptySlot,
                },
            ],
            baseline_output: 0.0,
            input_output: 1.0,
        };
        let text = render_explain_section(&report);
        assert_eq!(
            text,
            "Dika Mem (right back, France): 0.3127\nimportance: 0.0500"
        );
    }

    /// Minimal single-use HTTP server for client tests.
    fn fake_endpoint(
        responses: Vec<(u16, String)>,
        delay: Option<Duration>,
    ) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else {
                    break;
                };
                let mut buf = [0u8; 8192];
                let _ = stream.read(&mut buf);
                if let Some(d) = delay {
                    std::thread::sleep(d);
                }
                let reason = if status == 200 { "OK" } else { "Error" };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
                served += 1;
            }
            served
        });
        (format!("http://{addr}/v1/completions"), handle)
    }

    fn config(url: String) -> CompletionConfig {
        CompletionConfig {
            endpoint_url: url,
            model: "test-model".into(),
            max_tokens: 256,
            temperature: 0.7,
            timeout_secs: 2,
            auth_token: None,
        }
    }

    #[test]
    fn generate_returns_completion_text() {
        let body = r#"{"choices":[{"text":"the echoed report"}]}"#.to_string();
        let (url, handle) = fake_endpoint(vec![(200, body)], None);
        let out = generate_report("hello", &config(url)).unwrap();
        assert_eq!(out, "the echoed report");
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn generate_parses_chat_shape() {
        let body = r#"{"choices":[{"message":{"content":"chat text"}}]}"#.to_string();
        let (url, handle) = fake_endpoint(vec![(200, body)], None);
        assert_eq!(generate_report("p", &config(url)).unwrap(), "chat text");
        handle.join().unwrap();
    }

    #[test]
    fn generate_fails_after_one_retry_on_500() {
        let err_body = r#"{"error":"boom"}"#.to_string();
        let (url, handle) = fake_endpoint(vec![(500, err_body.clone()), (500, err_body)], None);
        let err = generate_report("p", &config(url)).unwrap_err();
        assert!(matches!(err, ReportError::Status { status: 500, .. }));
        assert_eq!(handle.join().unwrap(), 2); // retried exactly once
    }

    #[test]
    fn generate_recovers_on_retry() {
        let (url, handle) = fake_endpoint(
            vec![
                (500, "{}".to_string()),
                (200, r#"{"choices":[{"text":"ok"}]}"#.to_string()),
            ],
            None,
        );
        assert_eq!(generate_report("p", &config(url)).unwrap(), "ok");
        handle.join().unwrap();
    }

    #[test]
    fn generate_times_out() {
        let body = r#"{"choices":[{"text":"late"}]}"#.to_string();
        let (url, _handle) = fake_endpoint(
            vec![(200, body.clone()), (200, body)],
            Some(Duration::from_secs(5)),
        );
        let mut cfg = config(url);
        cfg.timeout_secs = 1;
        let err = generate_report("p", &cfg).unwrap_err();
        assert!(matches!(err, ReportError::Transport(_)));
    }

    #[test]
    fn generate_rejects_malformed_response() {
        let (url, handle) = fake_endpoint(vec![(200, "not json".to_string())], None);
        let err = generate_report("p", &config(url)).unwrap_err();
        assert!(matches!(err, ReportError::Malformed(_)));
        handle.join().unwrap();
    }

    #[test]
    fn config_validation() {
        let mut cfg = config("http://localhost:1/x".into());
        cfg.max_tokens = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config("http://localhost:1/x".into());
        cfg.timeout_secs = 0;
        assert!(cfg.validate().is_err());
        assert!(config("http://localhost:1/x".into()).validate().is_ok());
    }
}
