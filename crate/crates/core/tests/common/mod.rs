#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use ubdb::ast::RefinementChain;
use ubdb::checker::{CheckOptions, CheckReport, Verdict};
use ubdb::engine::Scope;
use ubdb::resolve::{resolve, ResolvedChain};

pub fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models").join(name)
}

pub fn model_text(name: &str) -> String {
    std::fs::read_to_string(model_path(name)).expect("bundled model")
}

pub fn parse(src: &str) -> RefinementChain {
    match ubdb::parser::parse_chain(src) {
        Ok(c) => c,
        Err(d) => panic!("parse failed: {}", d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")),
    }
}

pub fn load_str(src: &str) -> ResolvedChain {
    let chain = parse(src);
    let r = match resolve(&chain) {
        Ok(r) => r,
        Err(e) => panic!("resolve failed: {}", e.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")),
    };
    let diags = ubdb::types::typecheck(&r);
    assert!(diags.is_empty(), "type errors: {}", diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"));
    r
}

pub fn load(name: &str) -> ResolvedChain {
    load_str(&model_text(name))
}

pub fn sres() -> ResolvedChain {
    load("sres.ubdb")
}

pub fn default_opts(chain: &ResolvedChain) -> CheckOptions {
    CheckOptions::new(Scope::default_for(chain))
}

pub fn uniform_opts(chain: &ResolvedChain, k: usize) -> CheckOptions {
    CheckOptions::new(Scope::uniform(chain, k))
}

/// Reports that do not hold, rendered for assertion messages.
pub fn failures(reports: &[CheckReport]) -> String {
    let bad: Vec<CheckReport> = reports.iter().filter(|r| r.verdict != Verdict::Holds).cloned().collect();
    ubdb::checker::report::to_text(&bad, false)
}

pub fn find<'a>(reports: &'a [CheckReport], id: &str) -> &'a CheckReport {
    reports
        .iter()
        .find(|r| r.obligation.id() == id)
        .unwrap_or_else(|| panic!("no obligation {id}; have {:?}", reports.iter().map(|r| r.obligation.id()).collect::<Vec<_>>()))
}

/// Delete the line containing `needle` (exactly one must match).
pub fn without_line(src: &str, needle: &str) -> String {
    let hits = src.lines().filter(|l| l.contains(needle)).count();
    assert_eq!(hits, 1, "expected one line containing {needle:?}");
    let mut out: String = src.lines().filter(|l| !l.contains(needle)).collect::<Vec<_>>().join("\n");
    out.push('\n');
    out
}

/// Replace the single occurrence of `from`.
pub fn replace_once(src: &str, from: &str, to: &str) -> String {
    assert_eq!(src.matches(from).count(), 1, "expected one occurrence of {from:?}");
    src.replacen(from, to, 1)
}
