//! Python `repr` style string lists, e.g. `['a', "Bishop's"]`.
//!
//! Facts and answers are rendered this way in prompts and traces, matching
//! what `str(list_of_str)` produces in Python.

/// Python's `repr` of a single `str`.
pub fn repr_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Python's `repr` of a `list[str]`.
pub fn format_list<S: AsRef<str>>(items: &[S]) -> String {
    let inner: Vec<String> = items.iter().map(|s| repr_str(s.as_ref())).collect();
    format!("[{}]", inner.join(", "))
}

fn parse_str(chars: &[char], pos: &mut usize) -> Option<String> {
    let quote = *chars.get(*pos)?;
    if quote != '\'' && quote != '"' {
        return None;
    }
    *pos += 1;
    let mut out = String::new();
    while let Some(&c) = chars.get(*pos) {
        *pos += 1;
        if c == quote {
            return Some(out);
        }
        if c != '\\' {
            out.push(c);
            continue;
        }
        let esc = *chars.get(*pos)?;
        *pos += 1;
        match esc {
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            't' => out.push('\t'),
            '\\' | '\'' | '"' => out.push(esc),
            'x' => {
                let hex: String = chars.get(*pos..*pos + 2)?.iter().collect();
                *pos += 2;
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).ok()?)?);
            }
            other => {
                out.push('\\');
                out.push(other);
            }
        }
    }
    None
}

fn skip_ws(chars: &[char], pos: &mut usize) {
    while chars.get(*pos).is_some_and(|c| c.is_whitespace()) {
        *pos += 1;
    }
}

/// Parses a complete list literal; surrounding whitespace is allowed but
/// nothing else. Returns `None` on any syntax error.
pub fn parse_list(text: &str) -> Option<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    skip_ws(&chars, &mut pos);
    if chars.get(pos) != Some(&'[') {
        return None;
    }
    pos += 1;
    let mut items = Vec::new();
    skip_ws(&chars, &mut pos);
    if chars.get(pos) == Some(&']') {
        pos += 1;
    } else {
        loop {
            skip_ws(&chars, &mut pos);
            items.push(parse_str(&chars, &mut pos)?);
            skip_ws(&chars, &mut pos);
            match chars.get(pos) {
                Some(',') => pos += 1,
                Some(']') => {
                    pos += 1;
                    break;
                }
                _ => return None,
            }
        }
    }
    skip_ws(&chars, &mut pos);
    (pos == chars.len()).then_some(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matches_python_repr() {
        assert_eq!(format_list(&["a", "b"]), "['a', 'b']");
        assert_eq!(format_list(&["Bishop's"]), "[\"Bishop's\"]");
        assert_eq!(format_list(&["both ' and \""]), r#"['both \' and "']"#);
        assert_eq!(format_list::<&str>(&[]), "[]");
        assert_eq!(repr_str("tab\there"), r"'tab\there'");
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(parse_list("Morus worked for X."), None);
        assert_eq!(parse_list("['a'"), None);
        assert_eq!(parse_list("['a'] trailing"), None);
        assert_eq!(parse_list(" [ 'a' ,\"b\" ] "), Some(vec!["a".into(), "b".into()]));
    }

    proptest! {
        #[test]
        fn round_trips(items in proptest::collection::vec(any::<String>(), 0..6)) {
            prop_assert_eq!(parse_list(&format_list(&items)), Some(items));
        }
    }
}
