use std::collections::HashSet;

use crate::analysis::Analyzer;

pub const MARK_OPEN: &str = "⟦";
pub const MARK_CLOSE: &str = "⟧";
pub const DEFAULT_WINDOW: usize = 30;

/// A window of `window` whitespace-delimited words around the first word
/// matching a query term, with matches wrapped in `⟦…⟧`.
///
/// Matching uses `analyzer`, so "Fox!" matches the term "fox". When nothing
/// matches the leading window is returned.
pub fn make_snippet(analyzer: &Analyzer, text: &str, terms: &HashSet<String>, window: usize) -> String {
    if window == 0 {
        return String::new();
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut scratch = Vec::new();
    // Only words up to the first match and inside the window are analyzed.
    let first_match = words
        .iter()
        .position(|word| highlight(analyzer, word, terms, &mut scratch).is_some());
    let (start, end) = match first_match {
        Some(center) => {
            let end = (center.saturating_sub(window / 2) + window).min(words.len());
            (end.saturating_sub(window), end)
        }
        None => (0, window.min(words.len())),
    };
    let mut out = String::new();
    for (i, word) in words[start..end].iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let rendered = if first_match.is_some_and(|m| start + i >= m) {
            highlight(analyzer, word, terms, &mut scratch)
        } else {
            None
        };
        out.push_str(rendered.as_deref().unwrap_or(word));
    }
    out
}

/// `word` with matching segments wrapped in marks, or `None` if nothing matches.
fn highlight(analyzer: &Analyzer, word: &str, terms: &HashSet<String>, scratch: &mut Vec<String>) -> Option<String> {
    let mut rendered: Option<String> = None;
    let mut last = 0;
    for (offset, segment) in analyzer.segments(word) {
        scratch.clear();
        analyzer.normalize_segment(segment, scratch);
        if scratch.iter().any(|t| terms.contains(t)) {
            let out = rendered.get_or_insert_with(|| String::with_capacity(word.len() + 8));
            out.push_str(&word[last..offset]);
            out.push_str(MARK_OPEN);
            out.push_str(segment);
            out.push_str(MARK_CLOSE);
            last = offset + segment.len();
        }
    }
    rendered.map(|mut out| {
        out.push_str(&word[last..]);
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AnalyzerConfig;

    fn snippet(text: &str, terms: &[&str], window: usize) -> String {
        let analyzer = Analyzer::new(&AnalyzerConfig::default()).unwrap();
        let terms = terms.iter().map(|t| t.to_string()).collect();
        make_snippet(&analyzer, text, &terms, window)
    }

    #[test]
    fn centered_on_first_match() {
        assert_eq!(snippet("x y fox z", &["fox"], 3), "y ⟦fox⟧ z");
    }

    #[test]
    fn empty_text() {
        assert_eq!(snippet("", &["fox"], 3), "");
    }

    #[test]
    fn no_match_gives_leading_window() {
        assert_eq!(snippet("a b c d e", &["zzz"], 3), "a b c");
    }

    #[test]
    fn window_clamped_at_edges() {
        assert_eq!(snippet("fox a b c", &["fox"], 3), "⟦fox⟧ a b");
        assert_eq!(snippet("a b c fox", &["fox"], 3), "b c ⟦fox⟧");
        assert_eq!(snippet("fox", &["fox"], 30), "⟦fox⟧");
    }

    #[test]
    fn marks_only_matching_segment_and_all_matches() {
        assert_eq!(snippet("The Fox! and fox-hole", &["fox"], 30), "The ⟦Fox⟧! and ⟦fox⟧-hole");
    }
}
