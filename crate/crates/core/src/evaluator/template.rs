use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::response::ANSWER_SCHEMA;
use super::{EvaluatorError, SubQuestionKey, Weights};

/// Placeholders the user skeleton may reference.
pub const PLACEHOLDERS: [&str; 6] = [
    "task_description",
    "step",
    "trajectory_ids",
    "camera_id",
    "subquestions",
    "view_question",
];

const DEFAULT_TEXT: &str = include_str!("../../assets/template_v1.txt");
const DEFAULT_WEIGHTS: &str = include_str!("../../assets/weights_v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQuestion {
    pub key: SubQuestionKey,
    pub text: String,
    pub weight: f64,
}

/// A versioned evaluation template: prompt text plus weighted sub-questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTemplate {
    pub version: u32,
    pub system_prompt: String,
    pub user_prompt_skeleton: String,
    pub rules: String,
    /// Always in `SubQuestionKey::ALL` order.
    pub subquestions: Vec<SubQuestion>,
    pub view_question: String,
}

impl EvalTemplate {
    pub fn weights(&self) -> Weights {
        let mut a = [0.0; 4];
        for q in &self.subquestions {
            a[q.key.index()] = q.weight;
        }
        Weights::from_array(a)
    }

    pub fn set_weights(&mut self, w: Weights) {
        for q in &mut self.subquestions {
            q.weight = w.get(q.key);
        }
    }

    pub fn validate(&self) -> Result<(), EvaluatorError> {
        let keys: Vec<SubQuestionKey> = self.subquestions.iter().map(|q| q.key).collect();
        if keys != SubQuestionKey::ALL {
            return Err(EvaluatorError::Template(format!(
                "sub-questions must be exactly {:?}, got {keys:?}",
                SubQuestionKey::ALL
            )));
        }
        self.weights().validate()?;
        for name in placeholders(&self.user_prompt_skeleton)? {
            if !PLACEHOLDERS.contains(&name.as_str()) {
                return Err(EvaluatorError::UnboundPlaceholder(name));
            }
        }
        Ok(())
    }

    /// The text file form (without weights).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[system]\n{}\n", self.system_prompt);
        let _ = writeln!(out, "[user]\n{}\n", self.user_prompt_skeleton);
        let _ = writeln!(out, "[rules]\n{}\n", self.rules);
        out.push_str("[subquestions]\n");
        for q in &self.subquestions {
            let _ = writeln!(out, "{}: {}", q.key, q.text);
        }
        let _ = writeln!(out, "\n[view]\n{}", self.view_question);
        out
    }

    pub fn weights_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.weights()).expect("weights serialize");
        s.push('\n');
        s
    }
}

fn placeholders(text: &str) -> Result<Vec<String>, EvaluatorError> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| EvaluatorError::Template("unterminated `{{` in user prompt".into()))?;
        out.push(after[..end].trim().to_string());
        rest = &after[end + 2..];
    }
    Ok(out)
}

fn substitute(
    text: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, EvaluatorError> {
    let mut out = String::with_capacity(text.len() * 2);
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| EvaluatorError::Template("unterminated `{{` in user prompt".into()))?;
        let name = after[..end].trim();
        out.push_str(
            &lookup(name).ok_or_else(|| EvaluatorError::UnboundPlaceholder(name.to_string()))?,
        );
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Parses the sectioned text form together with its weights document.
pub fn parse_template(
    version: u32,
    text: &str,
    weights_json: &str,
) -> Result<EvalTemplate, EvaluatorError> {
    let weights: Weights = serde_json::from_str(weights_json)
        .map_err(|e| EvaluatorError::Template(format!("weights file: {e}")))?;
    let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        let t = line.trim_end();
        if t.starts_with('[') && t.ends_with(']') && !t.contains(' ') {
            let name = t[1..t.len() - 1].to_string();
            if sections.iter().any(|(n, _)| *n == name) {
                return Err(EvaluatorError::Template(format!(
                    "duplicate section [{name}]"
                )));
            }
            sections.push((name, Vec::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push(line);
        } else if !t.is_empty() {
            return Err(EvaluatorError::Template(format!(
                "text before the first section: `{t}`"
            )));
        }
    }
    let take = |name: &str| -> Result<String, EvaluatorError> {
        sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, body)| body.join("\n").trim_matches('\n').to_string())
            .ok_or_else(|| EvaluatorError::Template(format!("missing section [{name}]")))
    };
    for (name, _) in &sections {
        if !["system", "user", "rules", "subquestions", "view"].contains(&name.as_str()) {
            return Err(EvaluatorError::Template(format!(
                "unknown section [{name}]"
            )));
        }
    }
    let mut texts: [Option<String>; 4] = Default::default();
    for line in take("subquestions")?
        .lines()
        .filter(|l| !l.trim().is_empty())
    {
        let (key, q) = line.split_once(':').ok_or_else(|| {
            EvaluatorError::Template(format!("sub-question line without `key:` prefix: `{line}`"))
        })?;
        let key = SubQuestionKey::parse(key.trim()).ok_or_else(|| {
            EvaluatorError::Template(format!("unknown sub-question `{}`", key.trim()))
        })?;
        if texts[key.index()].replace(q.trim().to_string()).is_some() {
            return Err(EvaluatorError::Template(format!(
                "sub-question `{key}` listed twice"
            )));
        }
    }
    let subquestions = SubQuestionKey::ALL
        .into_iter()
        .map(|key| {
            let text = texts[key.index()]
                .clone()
                .ok_or_else(|| EvaluatorError::Template(format!("sub-question `{key}` missing")))?;
            Ok(SubQuestion {
                key,
                text,
                weight: weights.get(key),
            })
        })
        .collect::<Result<Vec<_>, EvaluatorError>>()?;
    let tpl = EvalTemplate {
        version,
        system_prompt: take("system")?,
        user_prompt_skeleton: take("user")?,
        rules: take("rules")?,
        subquestions,
        view_question: take("view")?,
    };
    tpl.validate()?;
    Ok(tpl)
}

/// The bundled version-1 template.
pub fn default_template() -> EvalTemplate {
    parse_template(1, DEFAULT_TEXT, DEFAULT_WEIGHTS).expect("bundled template is valid")
}

/// `template_v<N>.txt` and `weights_v<N>.json`.
pub fn template_file_names(version: u32) -> (String, String) {
    (
        format!("template_v{version}.txt"),
        format!("weights_v{version}.json"),
    )
}

fn version_from_path(path: &Path) -> Option<u32> {
    path.file_name()?
        .to_str()?
        .strip_prefix("template_v")?
        .strip_suffix(".txt")?
        .parse()
        .ok()
}

fn read(path: &Path) -> Result<String, EvaluatorError> {
    fs::read_to_string(path).map_err(|source| EvaluatorError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads `template_v<N>.txt` and the sibling `weights_v<N>.json`.
pub fn load_template(path: impl AsRef<Path>) -> Result<EvalTemplate, EvaluatorError> {
    let path = path.as_ref();
    let version = version_from_path(path).ok_or_else(|| {
        EvaluatorError::Template(format!(
            "{}: file name must be template_v<N>.txt",
            path.display()
        ))
    })?;
    let text = read(path)?;
    let weights_path = path.with_file_name(template_file_names(version).1);
    let weights = read(&weights_path)?;
    parse_template(version, &text, &weights)
}

/// Writes both files into `dir`, returning their paths.
pub fn save_template(
    dir: impl AsRef<Path>,
    tpl: &EvalTemplate,
) -> Result<(PathBuf, PathBuf), EvaluatorError> {
    let (t, w) = template_file_names(tpl.version);
    let tp = dir.as_ref().join(t);
    let wp = dir.as_ref().join(w);
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| EvaluatorError::Io { path, source }
    };
    fs::write(&tp, tpl.to_text()).map_err(io(&tp))?;
    fs::write(&wp, tpl.weights_json()).map_err(io(&wp))?;
    Ok((tp, wp))
}

fn format_weight(w: f64) -> String {
    let s = format!("{w:.4}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

/// Fills the user skeleton and appends the rules and the answer format.
pub fn instantiate_prompt(
    tpl: &EvalTemplate,
    task: &str,
    step: u32,
    traj_ids: &[u32],
    camera_id: &str,
) -> Result<String, EvaluatorError> {
    let ids = traj_ids
        .iter()
        .map(|id| format!("T{id}"))
        .collect::<Vec<_>>()
        .join(", ");
    let subquestions = tpl
        .subquestions
        .iter()
        .map(|q| {
            format!(
                "- {} (weight {}): {}",
                q.key.answer_label(),
                format_weight(q.weight),
                q.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let user = substitute(&tpl.user_prompt_skeleton, |name| match name {
        "task_description" => Some(task.to_string()),
        "step" => Some(step.to_string()),
        "trajectory_ids" => Some(ids.clone()),
        "camera_id" => Some(camera_id.to_string()),
        "subquestions" => Some(subquestions.clone()),
        "view_question" => Some(tpl.view_question.clone()),
        _ => None,
    })?;
    Ok(format!(
        "{}\n\n{}\n\nRules:\n{}\n- Reply with exactly one fenced block tagged `scores`, one T line per trajectory id:\n{}",
        tpl.system_prompt, user, tpl.rules, ANSWER_SCHEMA
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_weights() {
        let t = default_template();
        assert_eq!(t.version, 1);
        assert_eq!(t.weights(), Weights::default());
    }

    #[test]
    fn text_round_trip() {
        let t = default_template();
        let back = parse_template(1, &t.to_text(), &t.weights_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn ids_and_camera_appear() {
        let t = default_template();
        let p = instantiate_prompt(&t, "reach the cup", 4, &[3, 5], "view2").unwrap();
        assert!(p.contains("T3, T5"));
        assert!(p.contains("view2"));
        assert!(p.contains(&t.rules));
        assert!(p.contains("```scores"));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn unknown_placeholder_named() {
        let mut t = default_template();
        t.user_prompt_skeleton.push_str(" {{goal_pose}}");
        match instantiate_prompt(&t, "x", 0, &[1], "view1") {
            Err(EvaluatorError::UnboundPlaceholder(n)) => assert_eq!(n, "goal_pose"),
            other => panic!("{other:?}"),
        }
        assert!(t.validate().is_err());
    }

    #[test]
    fn bad_weights_rejected() {
        let t = default_template();
        let err = parse_template(
            1,
            &t.to_text(),
            r#"{"safety":0.5,"task_align":0.35,"efficiency":0.2,"physical":0.2}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = default_template();
        t.version = 7;
        let (tp, _) = save_template(dir.path(), &t).unwrap();
        assert!(tp.ends_with("template_v7.txt"));
        assert_eq!(load_template(&tp).unwrap(), t);
    }
}
