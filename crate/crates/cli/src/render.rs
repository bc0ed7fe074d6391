//! Aligned plain-text rendering of a cloud response.

use tagcube_core::query::format_number;
use tagcube_core::{CloudResponse, LayoutEntry};

/// One line per tag in layout order: term, weight, and `*` repeated once per
/// font bucket. Hint tokens are not shown.
pub fn text(response: &CloudResponse) -> String {
    let tags: Vec<(&str, String, u32)> = response
        .layout
        .entries()
        .iter()
        .filter_map(|e| match e {
            LayoutEntry::Tag {
                term,
                weight,
                bucket,
            } => Some((term.as_str(), format_number(*weight), *bucket)),
            _ => None,
        })
        .collect();
    let term_width = tags.iter().map(|t| t.0.chars().count()).max().unwrap_or(0);
    let weight_width = tags.iter().map(|t| t.1.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (term, weight, bucket) in tags {
        let pad = term_width - term.chars().count();
        out.push_str(&format!(
            "{term}{}  {weight:>weight_width$}  {}\n",
            " ".repeat(pad),
            "*".repeat(bucket as usize)
        ));
    }
    out
}
