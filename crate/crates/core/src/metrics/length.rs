use crate::sentence::split_text;

/// (whitespace word count, sentence count).
pub fn length_stats(summary: &str) -> (usize, usize) {
    (summary.split_whitespace().count(), split_text(summary).len())
}
