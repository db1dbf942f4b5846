use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{AgentResponse, GripperCommand, Signals, SubQuestionKey, SubScores};

/// The answer format every prompt asks for.
pub const ANSWER_SCHEMA: &str = "```scores
T<id>: safety=<0-10> task=<0-10> eff=<0-10> phys=<0-10>
view=<0-10>
signals: transition=<0|1> gripper=<open|close|hold> complete=<0|1>
```";

const FENCE_TAG: &str = "```scores";

/// Renders the structured fields as an answer block.
pub fn render_answer(r: &AgentResponse) -> String {
    let mut out = String::from("```scores\n");
    for (id, s) in &r.scores {
        let _ = writeln!(
            out,
            "T{id}: safety={} task={} eff={} phys={}",
            s.safety, s.task_align, s.efficiency, s.physical
        );
    }
    let _ = writeln!(out, "view={}", r.q_view);
    let _ = writeln!(
        out,
        "signals: transition={} gripper={} complete={}",
        u8::from(r.signals.subtask_transition),
        r.signals.gripper.as_str(),
        u8::from(r.signals.task_complete)
    );
    out.push_str("```");
    out
}

fn extract_block(raw: &str) -> Result<Vec<&str>, String> {
    let mut blocks = Vec::new();
    let mut lines = raw.lines();
    while let Some(line) = lines.next() {
        if line.trim() != FENCE_TAG {
            continue;
        }
        let mut body = Vec::new();
        let mut closed = false;
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                closed = true;
                break;
            }
            body.push(inner);
        }
        if !closed {
            return Err("unterminated scores block".into());
        }
        blocks.push(body);
    }
    match blocks.len() {
        0 => Err("no scores block".into()),
        1 => Ok(blocks.pop().expect("one block")),
        n => Err(format!("{n} scores blocks, expected one")),
    }
}

fn score(value: &str, what: &str) -> Result<u8, String> {
    let v: i64 = value
        .parse()
        .map_err(|_| format!("{what}: `{value}` is not an integer"))?;
    if !(0..=i64::from(SubScores::MAX)).contains(&v) {
        return Err(format!("{what}: {v} outside 0-10"));
    }
    Ok(v as u8)
}

fn flag(value: &str, what: &str) -> Result<bool, String> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("{what}: `{value}` is not 0 or 1")),
    }
}

fn key_values(text: &str) -> Result<Vec<(&str, &str)>, String> {
    text.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{tok}`"))
        })
        .collect()
}

fn parse_trajectory_line(id: u32, rest: &str) -> Result<SubScores, String> {
    let mut vals: [Option<u8>; 4] = [None; 4];
    for (k, v) in key_values(rest)? {
        let key = SubQuestionKey::ALL
            .into_iter()
            .find(|q| q.answer_label() == k)
            .ok_or_else(|| format!("T{id}: unknown field `{k}`"))?;
        if vals[key.index()]
            .replace(score(v, &format!("T{id} {k}"))?)
            .is_some()
        {
            return Err(format!("T{id}: field `{k}` repeated"));
        }
    }
    let mut out = [0u8; 4];
    for key in SubQuestionKey::ALL {
        out[key.index()] =
            vals[key.index()].ok_or_else(|| format!("T{id}: missing `{}`", key.answer_label()))?;
    }
    Ok(SubScores::from_array(out))
}

fn parse_signals(rest: &str) -> Result<Signals, String> {
    let (mut t, mut g, mut c) = (None, None, None);
    for (k, v) in key_values(rest)? {
        let dup = match k {
            "transition" => t.replace(flag(v, "transition")?).is_some(),
            "complete" => c.replace(flag(v, "complete")?).is_some(),
            "gripper" => g
                .replace(
                    GripperCommand::parse(v)
                        .ok_or_else(|| format!("gripper: `{v}` is not open|close|hold"))?,
                )
                .is_some(),
            _ => return Err(format!("signals: unknown field `{k}`")),
        };
        if dup {
            return Err(format!("signals: field `{k}` repeated"));
        }
    }
    Ok(Signals {
        subtask_transition: t.ok_or("signals: missing transition")?,
        gripper: g.ok_or("signals: missing gripper")?,
        task_complete: c.ok_or("signals: missing complete")?,
    })
}

fn parse_block(
    body: &[&str],
    expected_ids: &[u32],
) -> Result<(BTreeMap<u32, SubScores>, u8, Signals), String> {
    let mut scores = BTreeMap::new();
    let mut q_view = None;
    let mut signals = None;
    for line in body.iter().map(|l| l.trim()).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("signals:") {
            if signals.replace(parse_signals(rest)?).is_some() {
                return Err("signals line repeated".into());
            }
        } else if let Some(v) = line.strip_prefix("view=") {
            if q_view.replace(score(v.trim(), "view")?).is_some() {
                return Err("view line repeated".into());
            }
        } else if let Some((head, rest)) = line.split_once(':') {
            let id: u32 = head
                .strip_prefix('T')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| format!("unrecognized line `{line}`"))?;
            if !expected_ids.contains(&id) {
                return Err(format!("unexpected trajectory id T{id}"));
            }
            if scores
                .insert(id, parse_trajectory_line(id, rest)?)
                .is_some()
            {
                return Err(format!("T{id} scored twice"));
            }
        } else {
            return Err(format!("unrecognized line `{line}`"));
        }
    }
    if let Some(missing) = expected_ids.iter().find(|id| !scores.contains_key(id)) {
        return Err(format!("no scores for T{missing}"));
    }
    Ok((
        scores,
        q_view.ok_or("missing view line")?,
        signals.ok_or("missing signals line")?,
    ))
}

/// Parses a raw answer. Any violation yields a non-responsive response that
/// keeps the raw text and a note saying what was wrong.
pub fn parse_response(
    agent_id: &str,
    camera_id: &str,
    raw: &str,
    expected_ids: &[u32],
) -> AgentResponse {
    let parsed = extract_block(raw).and_then(|body| parse_block(&body, expected_ids));
    match parsed {
        Ok((scores, q_view, signals)) => AgentResponse {
            agent_id: agent_id.to_string(),
            camera_id: camera_id.to_string(),
            scores,
            q_view,
            signals,
            raw_text: raw.to_string(),
            responsive: true,
            note: None,
        },
        Err(note) => AgentResponse::non_responsive(agent_id, camera_id, raw.to_string(), note),
    }
}
