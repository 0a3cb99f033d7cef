use super::{LintFinding, Severity};
use crate::ast::{ClassKind, EventKind, LayerLabel, VarRole};
use crate::resolve::ResolvedChain;

fn class_layer(kind: ClassKind) -> LayerLabel {
    match kind {
        ClassKind::Primary => LayerLabel::Structure,
        ClassKind::Secondary => LayerLabel::Secondary,
        ClassKind::Attribute => LayerLabel::AttributeClasses,
        ClassKind::Historical => LayerLabel::Historical,
    }
}

/// Compare what each machine introduces against its declared layer. The
/// `other` label opts a machine out of ordering checks.
pub fn lint_layering(chain: &ResolvedChain) -> Vec<LintFinding> {
    let mut out = Vec::new();
    let mut sequence = Vec::new();
    let mut previous: Option<(&str, LayerLabel)> = None;
    for m in &chain.source.machines {
        let Some(layer) = m.layer else {
            sequence.push(format!("{} (unlabelled)", m.name));
            continue;
        };
        sequence.push(format!("{} {}", m.name, layer.as_str()));
        if layer == LayerLabel::Other {
            continue;
        }
        if let Some((prev_name, prev)) = previous {
            if layer < prev {
                out.push(LintFinding::new(
                    "layer-regression",
                    Severity::Warning,
                    &m.name,
                    format!(
                        "layer '{}' follows '{}' of {prev_name}; layers should not go backwards",
                        layer.as_str(),
                        prev.as_str()
                    ),
                ));
            }
        }
        previous = Some((&m.name, layer));

        for v in &m.variables {
            match v.role {
                VarRole::ClassInstanceSet => {
                    let kind = v.class_kind().expect("class typing");
                    let home = class_layer(kind);
                    if home > layer {
                        out.push(LintFinding::new(
                            "layer-order",
                            Severity::Warning,
                            &v.name,
                            format!(
                                "{} class introduced in {} (layer '{}'); it belongs in the '{}' layer or later",
                                kind.as_str(),
                                m.name,
                                layer.as_str(),
                                home.as_str()
                            ),
                        ));
                    }
                }
                VarRole::Attribute if layer == LayerLabel::Structure => {
                    out.push(LintFinding::new(
                        "mixed-layer",
                        Severity::Info,
                        &v.name,
                        format!("attribute introduced with the structure in {}; a separate attributes refinement is preferred", m.name),
                    ));
                }
                _ => {}
            }
        }
        for ev in &m.events {
            if ev.kind == EventKind::Query && ev.link.is_none() && layer < LayerLabel::Queries {
                out.push(LintFinding::new(
                    "query-layer",
                    Severity::Warning,
                    &ev.name,
                    format!(
                        "query event introduced in {} (layer '{}'); queries belong in a later refinement",
                        m.name,
                        layer.as_str()
                    ),
                ));
            }
        }
    }
    if !sequence.is_empty() {
        let subject = chain.source.machines.last().map(|m| m.name.clone()).unwrap_or_default();
        out.push(LintFinding::new(
            "layer-sequence",
            Severity::Info,
            subject,
            sequence.join(" -> "),
        ));
    }
    out
}
