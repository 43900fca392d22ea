use std::ops::Range;

const TERMINATORS: [char; 6] = ['.', '!', '?', '。', '！', '？'];

pub fn is_terminator(c: char) -> bool {
    TERMINATORS.contains(&c)
}

/// Byte ranges of the sentences in `text`.
///
/// A sentence ends after a terminator that is followed by whitespace or the
/// end of the text. The whitespace run after the break separates sentences
/// and belongs to neither; whitespace-only pieces are not reported.
pub fn segment_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_terminator(c) {
            continue;
        }
        let end = i + c.len_utf8();
        match chars.peek() {
            Some(&(_, next)) if !next.is_whitespace() => continue,
            _ => {}
        }
        push_span(text, start..end, &mut spans);
        start = end;
        while let Some(&(j, w)) = chars.peek() {
            if !w.is_whitespace() {
                break;
            }
            start = j + w.len_utf8();
            chars.next();
        }
    }
    push_span(text, start..text.len(), &mut spans);
    spans
}

fn push_span(text: &str, span: Range<usize>, spans: &mut Vec<Range<usize>>) {
    if !text[span.clone()].trim().is_empty() {
        spans.push(span);
    }
}

pub fn segment_sentences(text: &str) -> Vec<String> {
    segment_spans(text)
        .into_iter()
        .map(|r| text[r].to_string())
        .collect()
}
