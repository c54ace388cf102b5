//! Readers, interchange documents and rendering.

mod data;
mod document;
mod render;

pub use data::{align_classes, read_tabular_csv, read_ucr_tsv, read_ucr_tsv_with_classes, CsvOptions, TabularRead};
pub use document::{
    format_threshold, load_ensemble, load_model, save_ensemble, save_model, ConditionDoc, EnsembleDocument, RuleDoc,
    RuleListDocument, SelectorDoc, ShapeletDoc, ThresholdDoc, TreeDoc, FORMAT_VERSION,
};
pub use render::{render_rule_list, render_text, render_tree, RenderFormat};
