//! Report serialization: a line-oriented text form and a JSON form.
//!
//! JSON layout (stable): `{"records": [record...], "summary": {...}}` where a
//! record is
//! `{kind, machine, abstract_machine, event, invariant, verdict, states,
//! scope, elapsed_ms, note, trace}` and `trace` is `null` or a list of
//! `{event, binding: {param: value}, state: {var: value}}` steps (plus
//! `abstract_state` for refinement checks). Values use the `CARRIER.k`
//! atom notation.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{CheckReport, Trace, Verdict};
use crate::engine::{Universe, Value};

#[derive(Serialize)]
pub struct StepRecord {
    pub event: String,
    pub binding: BTreeMap<String, String>,
    pub state: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abstract_state: Option<BTreeMap<String, String>>,
}

#[derive(Serialize)]
pub struct Record {
    pub kind: String,
    pub machine: String,
    pub abstract_machine: Option<String>,
    pub event: Option<String>,
    pub invariant: Option<String>,
    pub verdict: Verdict,
    pub states: usize,
    pub scope: String,
    pub elapsed_ms: u64,
    pub note: Option<String>,
    pub trace: Option<Vec<StepRecord>>,
}

#[derive(Serialize, Default)]
pub struct Summary {
    pub holds: usize,
    pub violated: usize,
    pub scope_exhausted: usize,
}

pub fn summarize(reports: &[CheckReport]) -> Summary {
    let mut s = Summary::default();
    for r in reports {
        match r.verdict {
            Verdict::Holds => s.holds += 1,
            Verdict::Violated => s.violated += 1,
            Verdict::ScopeExhausted => s.scope_exhausted += 1,
        }
    }
    s
}

pub fn trace_steps(t: &Trace) -> Vec<StepRecord> {
    let show = |pairs: &[(String, Value)]| -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.clone(), t.show(v))).collect()
    };
    t.steps
        .iter()
        .map(|s| StepRecord {
            event: s.event.clone(),
            binding: show(&s.binding),
            state: show(&s.post),
            abstract_state: s.abstract_post.as_deref().map(show),
        })
        .collect()
}

pub fn record(r: &CheckReport) -> Record {
    Record {
        kind: r.obligation.kind.to_string(),
        machine: r.obligation.machine.clone(),
        abstract_machine: r.obligation.abstract_machine.clone(),
        event: r.obligation.event.clone(),
        invariant: r.obligation.invariant_label.clone(),
        verdict: r.verdict,
        states: r.states_explored,
        scope: r.scope.clone(),
        elapsed_ms: r.elapsed.as_millis() as u64,
        note: r.note.clone(),
        trace: r.counterexample.as_ref().map(trace_steps),
    }
}

pub fn to_json(reports: &[CheckReport]) -> serde_json::Value {
    serde_json::json!({
        "records": reports.iter().map(record).collect::<Vec<_>>(),
        "summary": summarize(reports),
    })
}

fn paint(s: &str, code: &str, color: bool) -> String {
    if color {
        format!("\x1b[{code}m{s}\x1b[0m")
    } else {
        s.to_string()
    }
}

/// One line per obligation; violated obligations are followed by their
/// counterexample, listing only the variables each step changes.
pub fn to_text(reports: &[CheckReport], color: bool) -> String {
    let mut out = String::new();
    for r in reports {
        let verdict = match r.verdict {
            Verdict::Holds => paint("holds", "32", color),
            Verdict::Violated => paint("VIOLATED", "31;1", color),
            Verdict::ScopeExhausted => paint("scope-exhausted", "33", color),
        };
        let _ = write!(out, "{verdict:<8} {}", r.obligation.id());
        if let Some(a) = &r.obligation.abstract_machine {
            let _ = write!(out, " (refines {a})");
        }
        let _ = write!(out, " [states {}]", r.states_explored);
        if let Some(n) = &r.note {
            let _ = write!(out, " -- {n}");
        }
        out.push('\n');
        if let (Verdict::Violated, Some(t)) = (r.verdict, &r.counterexample) {
            write_trace(&mut out, t);
        }
    }
    let s = summarize(reports);
    let _ = writeln!(
        out,
        "{} obligations: {} hold, {} violated, {} scope-exhausted",
        reports.len(),
        s.holds,
        s.violated,
        s.scope_exhausted
    );
    out
}

pub fn write_trace(out: &mut String, t: &Trace) {
    if t.is_empty() {
        out.push_str("    no witness: the event fires in no reachable state\n");
        return;
    }
    let _ = writeln!(out, "    counterexample ({} steps from the empty state):", t.len());
    let mut prev: BTreeMap<&str, &Value> = BTreeMap::new();
    for (i, s) in t.steps.iter().enumerate() {
        let args: Vec<String> = s.binding.iter().map(|(k, v)| format!("{k}={}", t.show(v))).collect();
        let _ = writeln!(out, "    {}. {}({})", i + 1, s.event, args.join(", "));
        for (k, v) in &s.post {
            let changed = match prev.get(k.as_str()) {
                Some(old) => *old != v,
                None => !v.is_empty() || !matches!(v, Value::Set(_)),
            };
            if changed {
                let _ = writeln!(out, "         {k} = {}", t.show(v));
            }
            prev.insert(k, v);
        }
    }
}

/// Parse a value written in the report notation.
pub fn parse_value(s: &str, u: &Universe) -> Result<Value, String> {
    let toks = tokenize(s)?;
    let mut p = ValueParser { toks, pos: 0, u };
    let v = p.value()?;
    if p.pos != p.toks.len() {
        return Err(format!("trailing input in value '{s}'"));
    }
    Ok(v)
}

fn tokenize(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if "{}(),".contains(c) {
            out.push(c.to_string());
            chars.next();
        } else if s[i..].starts_with("|->") {
            out.push("|->".into());
            for _ in 0..3 {
                chars.next();
            }
        } else if c.is_alphanumeric() || c == '_' {
            let mut w = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_alphanumeric() || c == '_' || c == '.' {
                    w.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(w);
        } else {
            return Err(format!("unexpected character '{c}' in value '{s}'"));
        }
    }
    Ok(out)
}

struct ValueParser<'a> {
    toks: Vec<String>,
    pos: usize,
    u: &'a Universe,
}

impl ValueParser<'_> {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> Result<String, String> {
        let t = self.toks.get(self.pos).cloned().ok_or("unexpected end of value")?;
        self.pos += 1;
        Ok(t)
    }

    fn value(&mut self) -> Result<Value, String> {
        let mut v = self.primary()?;
        while self.peek() == Some("|->") {
            self.pos += 1;
            v = Value::pair(v, self.primary()?);
        }
        Ok(v)
    }

    fn primary(&mut self) -> Result<Value, String> {
        let t = self.next()?;
        match t.as_str() {
            "{" => {
                let mut items = Vec::new();
                if self.peek() == Some("}") {
                    self.pos += 1;
                    return Ok(Value::empty());
                }
                loop {
                    items.push(self.value()?);
                    match self.next()?.as_str() {
                        "," => continue,
                        "}" => break,
                        other => return Err(format!("expected ',' or '}}', found '{other}'")),
                    }
                }
                Ok(Value::set_from(items))
            }
            "(" => {
                let v = self.value()?;
                match self.next()?.as_str() {
                    ")" => Ok(v),
                    other => Err(format!("expected ')', found '{other}'")),
                }
            }
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            atom => self.u.parse_atom(atom).ok_or_else(|| format!("unknown atom '{atom}'")),
        }
    }
}

/// One trace step as read back: event name and parameter binding.
pub type TraceInput = (String, Vec<(String, Value)>);

/// Steps of a trace file: either a full JSON report (the first record that
/// carries a non-empty trace is used) or a bare list of steps.
pub fn parse_trace(json: &str, u: &Universe) -> Result<Vec<TraceInput>, String> {
    let doc: serde_json::Value = serde_json::from_str(json).map_err(|e| format!("invalid JSON: {e}"))?;
    let steps = match &doc {
        serde_json::Value::Array(a) => a.clone(),
        serde_json::Value::Object(o) => {
            let records = o
                .get("records")
                .and_then(|r| r.as_array())
                .ok_or("expected a 'records' array or a list of steps")?;
            records
                .iter()
                .filter_map(|r| r.get("trace").and_then(|t| t.as_array()))
                .find(|t| !t.is_empty())
                .cloned()
                .ok_or("no record carries a trace")?
        }
        _ => return Err("expected a JSON object or array".into()),
    };
    let mut out = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        let event = s
            .get("event")
            .and_then(|e| e.as_str())
            .ok_or_else(|| format!("step {}: missing 'event'", i + 1))?;
        let mut binding = Vec::new();
        if let Some(b) = s.get("binding").and_then(|b| b.as_object()) {
            for (k, v) in b {
                let text = v.as_str().ok_or_else(|| format!("step {}: binding '{k}' is not a string", i + 1))?;
                binding.push((k.clone(), parse_value(text, u).map_err(|e| format!("step {}: {e}", i + 1))?));
            }
        }
        out.push((event.to_string(), binding));
    }
    Ok(out)
}
