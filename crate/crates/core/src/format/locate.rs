//! Maps JSON pointers back to line/column positions in the source text.
//!
//! The scanner assumes syntactically valid JSON (the document has already
//! been parsed) and only tracks offsets; it never builds values.

/// 1-based line and column of byte `offset` in `text`.
pub fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Position of the value at `pointer` (RFC 6901 form, e.g. `/mas/agents/1`).
/// Falls back to the deepest existing ancestor.
pub fn locate(text: &str, pointer: &str) -> (usize, usize) {
    let segments: Vec<String> = pointer
        .split('/')
        .skip(1)
        .map(|s| s.replace("~1", "/").replace("~0", "~"))
        .collect();
    let mut s = Scanner { text: text.as_bytes(), pos: 0 };
    s.ws();
    let mut found = s.pos;
    for seg in &segments {
        match s.child(seg) {
            Some(p) => {
                found = p;
                s.pos = p;
            }
            None => break,
        }
    }
    position(text, found)
}

struct Scanner<'a> {
    text: &'a [u8],
    pos: usize,
}

impl Scanner<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn string(&mut self) -> Option<String> {
        let start = self.pos;
        if self.peek() != Some(b'"') {
            return None;
        }
        self.pos += 1;
        while let Some(c) = self.peek() {
            self.pos += 1;
            match c {
                b'\\' => self.pos += 1,
                b'"' => {
                    let raw = std::str::from_utf8(&self.text[start..self.pos]).ok()?;
                    return serde_json::from_str(raw).ok();
                }
                _ => {}
            }
        }
        None
    }

    fn skip_value(&mut self) {
        self.ws();
        match self.peek() {
            Some(b'"') => {
                self.string();
            }
            Some(b'{') | Some(b'[') => {
                let mut depth = 0usize;
                while let Some(c) = self.peek() {
                    match c {
                        b'"' => {
                            self.string();
                            continue;
                        }
                        b'{' | b'[' => depth += 1,
                        b'}' | b']' => {
                            depth -= 1;
                            if depth == 0 {
                                self.pos += 1;
                                return;
                            }
                        }
                        _ => {}
                    }
                    self.pos += 1;
                }
            }
            _ => {
                while self.peek().is_some_and(|c| !matches!(c, b',' | b'}' | b']') && !c.is_ascii_whitespace()) {
                    self.pos += 1;
                }
            }
        }
    }

    /// Offset of the child value named `seg` of the value at the cursor.
    fn child(&mut self, seg: &str) -> Option<usize> {
        self.ws();
        match self.peek()? {
            b'{' => {
                self.pos += 1;
                loop {
                    self.ws();
                    if self.peek()? == b'}' {
                        return None;
                    }
                    let key = self.string()?;
                    self.ws();
                    if self.peek()? != b':' {
                        return None;
                    }
                    self.pos += 1;
                    self.ws();
                    if key == seg {
                        return Some(self.pos);
                    }
                    self.skip_value();
                    self.ws();
                    if self.peek()? == b',' {
                        self.pos += 1;
                    }
                }
            }
            b'[' => {
                let want: usize = seg.parse().ok()?;
                self.pos += 1;
                let mut i = 0;
                loop {
                    self.ws();
                    if self.peek()? == b']' {
                        return None;
                    }
                    if i == want {
                        return Some(self.pos);
                    }
                    self.skip_value();
                    self.ws();
                    if self.peek()? == b',' {
                        self.pos += 1;
                    }
                    i += 1;
                }
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "{\n  \"a\": {\"b\": [1, {\"c\": \"x\\\"}\"}, 3]},\n  \"d\": true\n}";

    #[test]
    fn finds_nested_values() {
        assert_eq!(locate(DOC, ""), (1, 1));
        assert_eq!(locate(DOC, "/a"), (2, 8));
        assert_eq!(locate(DOC, "/a/b/1/c"), (2, 24));
        assert_eq!(locate(DOC, "/a/b/2"), (2, 33));
        assert_eq!(locate(DOC, "/d"), (3, 8));
    }

    #[test]
    fn missing_segments_fall_back_to_ancestor() {
        assert_eq!(locate(DOC, "/a/zz"), locate(DOC, "/a"));
        assert_eq!(locate(DOC, "/a/b/9"), locate(DOC, "/a/b"));
    }

    #[test]
    fn positions_are_one_based() {
        assert_eq!(position("", 0), (1, 1));
        assert_eq!(position("ab\ncd", 4), (2, 2));
    }
}
