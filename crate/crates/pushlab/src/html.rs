//! Tag-regular HTML scanning shared by the browser model and the stylesheet
//! rewriter. This is deliberately not a spec-grade parser: it recognizes
//! tags with quoted attribute values, which is sufficient for recorded and
//! synthetic documents. Malformed tags are skipped.

/// One recognized tag with its byte span in the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag {
    pub name: String,
    /// Attribute (name, value) pairs, names lowercased.
    pub attrs: Vec<(String, String)>,
    /// Byte offset of the opening `<`.
    pub start: usize,
    /// Byte offset one past the closing `>`.
    pub end: usize,
    pub is_closing: bool,
}

impl Tag {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attrs.iter().any(|(n, _)| n == name)
    }
}

/// Scan all complete tags within `input`. A tag whose `>` lies beyond the
/// end of the input is not returned, so scanning is monotone over prefixes.
pub fn scan_tags(input: &[u8]) -> Vec<Tag> {
    let mut tags = Vec::new();
    let mut pos = 0;
    while pos < input.len() {
        if input[pos] != b'<' {
            pos += 1;
            continue;
        }
        // Comments are opaque.
        if input[pos..].starts_with(b"<!--") {
            match find(input, pos + 4, b"-->") {
                Some(end) => {
                    pos = end + 3;
                    continue;
                }
                None => break,
            }
        }
        match parse_tag(input, pos) {
            Some(tag) => {
                let end = tag.end;
                let skip_raw = !tag.is_closing && (tag.name == "script" || tag.name == "style");
                let name = tag.name.clone();
                tags.push(tag);
                pos = end;
                // Raw-text elements: skip to the matching close tag so that
                // `<` inside script bodies is not misread.
                if skip_raw {
                    let close = format!("</{name}");
                    match find_ascii_ci(input, pos, close.as_bytes()) {
                        Some(p) => pos = p,
                        None => break,
                    }
                }
            }
            None => pos += 1,
        }
    }
    tags
}

fn find(haystack: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from >= haystack.len() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn find_ascii_ci(haystack: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from >= haystack.len() || needle.is_empty() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle))
        .map(|p| p + from)
}

fn parse_tag(input: &[u8], start: usize) -> Option<Tag> {
    let mut pos = start + 1;
    let is_closing = input.get(pos) == Some(&b'/');
    if is_closing {
        pos += 1;
    }
    let name_start = pos;
    while pos < input.len() && (input[pos].is_ascii_alphanumeric() || input[pos] == b'!') {
        pos += 1;
    }
    if pos == name_start {
        return None;
    }
    let name = String::from_utf8_lossy(&input[name_start..pos]).to_lowercase();

    let mut attrs = Vec::new();
    loop {
        while pos < input.len() && input[pos].is_ascii_whitespace() {
            pos += 1;
        }
        match input.get(pos) {
            None => return None, // tag not complete within input
            Some(b'>') => {
                return Some(Tag {
                    name,
                    attrs,
                    start,
                    end: pos + 1,
                    is_closing,
                });
            }
            Some(b'/') => {
                pos += 1;
            }
            Some(_) => {
                let attr_start = pos;
                while pos < input.len()
                    && !input[pos].is_ascii_whitespace()
                    && !matches!(input[pos], b'=' | b'>' | b'/')
                {
                    pos += 1;
                }
                if pos == attr_start {
                    return None;
                }
                let attr_name = String::from_utf8_lossy(&input[attr_start..pos]).to_lowercase();
                while pos < input.len() && input[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if input.get(pos) == Some(&b'=') {
                    pos += 1;
                    while pos < input.len() && input[pos].is_ascii_whitespace() {
                        pos += 1;
                    }
                    let quote = match input.get(pos) {
                        Some(&q @ (b'"' | b'\'')) => {
                            pos += 1;
                            Some(q)
                        }
                        _ => None,
                    };
                    let val_start = pos;
                    match quote {
                        Some(q) => {
                            while pos < input.len() && input[pos] != q {
                                pos += 1;
                            }
                            if pos >= input.len() {
                                return None;
                            }
                            attrs.push((
                                attr_name,
                                String::from_utf8_lossy(&input[val_start..pos]).into_owned(),
                            ));
                            pos += 1;
                        }
                        None => {
                            while pos < input.len()
                                && !input[pos].is_ascii_whitespace()
                                && input[pos] != b'>'
                            {
                                pos += 1;
                            }
                            attrs.push((
                                attr_name,
                                String::from_utf8_lossy(&input[val_start..pos]).into_owned(),
                            ));
                        }
                    }
                } else {
                    attrs.push((attr_name, String::new()));
                }
            }
        }
    }
}

/// Byte offset where the document's head region ends: the `</head>` tag or
/// the first `<body` tag, whichever comes first. `None` if neither is
/// present in the input yet.
pub fn head_end(tags: &[Tag]) -> Option<usize> {
    tags.iter()
        .find(|t| (t.is_closing && t.name == "head") || (!t.is_closing && t.name == "body"))
        .map(|t| t.start)
}

/// True when a `link` tag is a stylesheet reference.
pub fn is_stylesheet(tag: &Tag) -> bool {
    tag.name == "link"
        && tag
            .attr("rel")
            .map(|r| r.eq_ignore_ascii_case("stylesheet"))
            .unwrap_or(false)
        && tag.attr("href").is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scans_basic_tags_with_attrs() {
        let doc = br#"<html><head><link rel="stylesheet" href="/a.css"></head><body><img src='x.png'></body></html>"#;
        let tags = scan_tags(doc);
        let link = tags.iter().find(|t| t.name == "link").unwrap();
        assert_eq!(link.attr("href"), Some("/a.css"));
        assert!(is_stylesheet(link));
        let img = tags.iter().find(|t| t.name == "img").unwrap();
        assert_eq!(img.attr("src"), Some("x.png"));
    }

    #[test]
    fn incomplete_tag_excluded() {
        let doc = b"<head><link rel=\"stylesheet\" href=\"/a.css";
        let tags = scan_tags(doc);
        assert!(tags.iter().all(|t| t.name != "link"));
    }

    #[test]
    fn head_end_at_close_head_or_body() {
        let doc = b"<head><title>x</title></head><body>";
        let tags = scan_tags(doc);
        assert_eq!(head_end(&tags), Some(22));
        let doc2 = b"<html><body><p>";
        let tags2 = scan_tags(doc2);
        assert_eq!(head_end(&tags2), Some(6));
    }

    #[test]
    fn script_bodies_are_opaque() {
        let doc = b"<script src=\"a.js\"></script><script>if (1 < 2) { x = \"<img src='fake.png'>\"; }</script><img src=\"real.png\">";
        let tags = scan_tags(doc);
        let imgs: Vec<_> = tags.iter().filter(|t| t.name == "img").collect();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].attr("src"), Some("real.png"));
    }

    #[test]
    fn unquoted_and_boolean_attrs() {
        let doc = b"<script src=app.js async></script>";
        let tags = scan_tags(doc);
        let script = &tags[0];
        assert_eq!(script.attr("src"), Some("app.js"));
        assert!(script.has_attr("async"));
    }
}
