//! Human-readable rule lists.

use std::fmt::Write;

use crate::model::{Condition, FeatureSelector, Prediction, Sign, TreeLayout};
use crate::pipeline::RuleListModel;
use crate::Result;

use super::document::RuleListDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Text,
    Json,
    Tree,
}

fn selector_name(s: FeatureSelector, names: Option<&[String]>) -> String {
    match s {
        FeatureSelector::Axis(p) => match names.and_then(|n| n.get(p)) {
            Some(name) => name.clone(),
            None => format!("x[{p}]"),
        },
        FeatureSelector::Shapelet(id) => format!("dist(x, s_{id})"),
    }
}

fn prediction_name(m: &RuleListModel, p: Prediction) -> String {
    match p {
        Prediction::Class(c) => m.class_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
        Prediction::Value(v) => format!("{v:.4}"),
    }
}

fn condition_tuple(c: &Condition, names: Option<&[String]>) -> String {
    format!(
        "({}, {}, {})",
        selector_name(c.selector, names),
        c.threshold,
        c.sign.symbol()
    )
}

/// One rule per line: condition tuples, prediction and training coverage.
pub fn render_text(m: &RuleListModel, names: Option<&[String]>) -> String {
    let mut out = String::new();
    for r in &m.rules {
        let conds: Vec<String> = r
            .conditions
            .iter()
            .filter(|c| !c.is_vacuous())
            .map(|c| condition_tuple(c, names))
            .collect();
        let lhs = if conds.is_empty() {
            "(always)".to_string()
        } else {
            conds.join(", ")
        };
        let _ = writeln!(out, "{lhs} -> {} [{}]", prediction_name(m, r.prediction), r.coverage);
    }
    let _ = writeln!(out, "otherwise -> {}", prediction_name(m, m.fallback));
    out
}

fn render_layout(m: &RuleListModel, node: &TreeLayout, depth: usize, names: Option<&[String]>, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        TreeLayout::Leaf(j) => {
            let r = &m.rules[*j];
            let _ = writeln!(out, "{pad}-> {} [{}]", prediction_name(m, r.prediction), r.coverage);
        }
        TreeLayout::Branch { splitting, left, right } => {
            let name = selector_name(splitting.selector, names);
            let t = splitting.threshold();
            let _ = writeln!(out, "{pad}if {name} {} {t}", Sign::Le.symbol());
            render_layout(m, left, depth + 1, names, out);
            let _ = writeln!(out, "{pad}else ({name} {} {t})", Sign::Gt.symbol());
            render_layout(m, right, depth + 1, names, out);
        }
    }
}

/// Nested if/else layout, or `None` when the rules do not form a complete
/// binary tree.
pub fn render_tree(m: &RuleListModel, names: Option<&[String]>) -> Option<String> {
    let layout = TreeLayout::build(&m.rules)?;
    let mut out = String::new();
    render_layout(m, &layout, 0, names, &mut out);
    Some(out)
}

pub fn render_rule_list(m: &RuleListModel, format: RenderFormat, names: Option<&[String]>) -> Result<String> {
    Ok(match format {
        RenderFormat::Text => render_text(m, names),
        RenderFormat::Json => serde_json::to_string_pretty(&RuleListDocument::from_model(m))? + "\n",
        RenderFormat::Tree => match render_tree(m, names) {
            Some(s) => s,
            None => format!(
                "# the rules do not form a complete decision tree; showing the list\n{}",
                render_text(m, names)
            ),
        },
    })
}
