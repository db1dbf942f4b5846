use std::sync::Arc;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::oracle::OracleAgent;
use super::{Agent, AgentError, EvalRequest, EvaluatorError};

fn default_kind() -> AgentKind {
    AgentKind::Remote
}
fn default_timeout() -> f64 {
    60.0
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff() -> f64 {
    0.5
}
fn default_parallelism() -> usize {
    super::DEFAULT_PARALLELISM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Remote,
    Oracle,
}

/// One ensemble member. Credentials are read from the environment variable
/// named by `api_key_env`, never stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: AgentKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub agents: Vec<AgentConfig>,
}

impl AgentsConfig {
    pub fn from_json(text: &str) -> Result<Self, EvaluatorError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            EvaluatorError::Config(format!(
                "agents config at `{}` (line {}, column {}): {}",
                e.path(),
                e.inner().line(),
                e.inner().column(),
                e.inner()
            ))
        })?;
        if cfg.agents.is_empty() {
            return Err(EvaluatorError::Config(
                "agents config lists no agents".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, EvaluatorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EvaluatorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Chat-completion client for an OpenAI-style endpoint.
pub struct RemoteAgent {
    name: String,
    url: String,
    model: String,
    api_key: Option<String>,
    max_attempts: u32,
    backoff_base: Duration,
    http: ureq::Agent,
}

impl std::fmt::Debug for RemoteAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteAgent")
            .field("name", &self.name)
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteAgent {
    /// Fails when the endpoint is incomplete or the named credential is unset.
    pub fn from_config(cfg: &AgentConfig) -> Result<Self, EvaluatorError> {
        let base = cfg
            .base_url
            .as_deref()
            .filter(|u| !u.is_empty())
            .ok_or_else(|| {
                EvaluatorError::Config(format!("agent `{}`: base_url is required", cfg.name))
            })?;
        let model = cfg.model.clone().ok_or_else(|| {
            EvaluatorError::Config(format!("agent `{}`: model is required", cfg.name))
        })?;
        let api_key = match cfg.api_key_env.as_deref() {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                EvaluatorError::Config(format!(
                    "agent `{}`: environment variable {var} is not set",
                    cfg.name
                ))
            })?),
            None => None,
        };
        if !(cfg.timeout_secs > 0.0 && cfg.timeout_secs.is_finite()) || cfg.max_attempts == 0 {
            return Err(EvaluatorError::Config(format!(
                "agent `{}`: timeout and attempts must be positive",
                cfg.name
            )));
        }
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            name: cfg.name.clone(),
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            model,
            api_key,
            max_attempts: cfg.max_attempts,
            backoff_base: Duration::from_secs_f64(cfg.backoff_base_secs.max(0.0)),
            http,
        })
    }

    fn body(&self, request: &EvalRequest<'_>) -> Result<Value, AgentError> {
        let png = request
            .image
            .canvas
            .to_png()
            .map_err(|e| AgentError::Malformed(e.to_string()))?;
        let data = base64::engine::general_purpose::STANDARD.encode(png);
        Ok(json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}
                ]
            }]
        }))
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, AgentError)> {
        let mut req = self.http.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (true, AgentError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, AgentError::Status(status)));
        }
        if !(200..300).contains(&status) {
            return Err((false, AgentError::Status(status)));
        }
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| (true, AgentError::Transport(e.to_string())))?;
        message_text(&v).ok_or_else(|| {
            (
                false,
                AgentError::Malformed("no choices[0].message.content".into()),
            )
        })
    }
}

fn message_text(v: &Value) -> Option<String> {
    let content = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

impl Agent for RemoteAgent {
    fn id(&self) -> &str {
        &self.name
    }

    fn respond(&self, request: &EvalRequest<'_>) -> Result<String, AgentError> {
        let body = self.body(request)?;
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((false, e)) => return Err(e),
                Err((true, e)) => {
                    log::warn!(
                        "agent {} view {}: attempt {attempt}/{} failed: {e}",
                        self.name,
                        request.camera.id,
                        self.max_attempts
                    );
                    last = e.to_string();
                    if attempt < self.max_attempts {
                        thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(AgentError::Exhausted {
            attempts: self.max_attempts,
            last,
        })
    }
}

/// Instantiates every configured agent, failing on the first bad entry.
pub fn build_agents(cfg: &AgentsConfig) -> Result<Vec<Arc<dyn Agent>>, EvaluatorError> {
    if cfg.agents.is_empty() {
        return Err(EvaluatorError::Config("no agents configured".into()));
    }
    cfg.agents
        .iter()
        .map(|a| -> Result<Arc<dyn Agent>, EvaluatorError> {
            Ok(match a.kind {
                AgentKind::Oracle => Arc::new(OracleAgent::new(a.name.clone())),
                AgentKind::Remote => Arc::new(RemoteAgent::from_config(a)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AgentConfig {
        AgentConfig {
            name: "m".into(),
            kind: AgentKind::Remote,
            base_url: Some("http://127.0.0.1:9".into()),
            model: Some("x".into()),
            api_key_env: None,
            timeout_secs: 60.0,
            max_attempts: 3,
            backoff_base_secs: 0.5,
        }
    }

    #[test]
    fn missing_credential_is_config_error() {
        let mut c = cfg();
        c.api_key_env = Some("VQA_MPC_TEST_SURELY_UNSET_KEY".into());
        assert!(matches!(
            RemoteAgent::from_config(&c),
            Err(EvaluatorError::Config(_))
        ));
    }

    #[test]
    fn missing_url_is_config_error() {
        let mut c = cfg();
        c.base_url = None;
        assert!(RemoteAgent::from_config(&c).is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let c: AgentsConfig =
            serde_json::from_str(r#"{"agents":[{"name":"a","base_url":"http://h","model":"m"}]}"#)
                .unwrap();
        assert_eq!(c.parallelism, 6);
        assert_eq!(c.agents[0].max_attempts, 3);
        assert_eq!(c.agents[0].timeout_secs, 60.0);
        assert_eq!(c.agents[0].kind, AgentKind::Remote);
    }

    #[test]
    fn content_parts_joined() {
        let v = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(message_text(&v).as_deref(), Some("ab"));
    }
}
