//! Recorded request/response archive: HAR ingestion, origin grouping by IP
//! (the basis for connection coalescing), request matching for replay,
//! pushability, and content relocation onto a single origin.
//!
//! On disk an archive is JSON-lines: a manifest line followed by one
//! exchange per line with the body base64-encoded.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::hpack::HeaderList;

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceType {
    Html,
    Css,
    Js,
    Image,
    Font,
    Other,
}

/// Deterministic content-type prefix mapping.
pub fn resource_type_from_content_type(content_type: &str) -> ResourceType {
    let ct = content_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    if ct.starts_with("text/html") {
        ResourceType::Html
    } else if ct.starts_with("text/css") {
        ResourceType::Css
    } else if ct.contains("javascript") || ct == "application/ecmascript" {
        ResourceType::Js
    } else if ct.starts_with("image/") {
        ResourceType::Image
    } else if ct.starts_with("font/") || ct.contains("opentype") || ct.contains("truetype") {
        ResourceType::Font
    } else {
        ResourceType::Other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub method: String,
    pub scheme: String,
    pub authority: String,
    /// Path including the query string.
    pub path: String,
    pub headers: HeaderList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub status: u16,
    pub headers: HeaderList,
    #[serde(with = "body_base64")]
    pub body: Vec<u8>,
}

/// The replay unit: one request/response pair with its origin identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub request: RecordedRequest,
    pub response: RecordedResponse,
    pub origin_ip: String,
    pub resource_type: ResourceType,
}

impl RecordedExchange {
    pub fn url(&self) -> String {
        format!(
            "{}://{}{}",
            self.request.scheme, self.request.authority, self.request.path
        )
    }

    fn path_without_query(&self) -> &str {
        self.request.path.split('?').next().unwrap_or("")
    }

    fn query(&self) -> &str {
        match self.request.path.split_once('?') {
            Some((_, q)) => q,
            None => "",
        }
    }
}

mod body_base64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(body: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&base64::engine::general_purpose::STANDARD.encode(body))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

/// All exchanges recorded behind one server IP; `authorities` is the name
/// set a coalescing certificate would carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OriginGroup {
    pub ip: String,
    pub authorities: BTreeSet<String>,
    /// Indices into the archive's exchange list, in recording order.
    pub exchanges: Vec<usize>,
}

/// Immutable after load; import and relocation produce new archives.
#[derive(Debug, Clone, Default)]
pub struct Archive {
    exchanges: Vec<RecordedExchange>,
    groups: BTreeMap<String, OriginGroup>,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("import error: {0}")]
    ImportError(String),
    #[error("no recorded response for {authority}{path}")]
    NotFound { authority: String, path: String },
    #[error("unknown authority {0}")]
    UnknownAuthority(String),
    #[error("relocation path collision: {0} and {1} both map to {2}")]
    RelocateError(String, String, String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("archive format error: {0}")]
    Format(String),
}

/// Non-fatal findings from import (entries kept with caveats).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportWarning(pub String);

impl Archive {
    pub fn from_exchanges(exchanges: Vec<RecordedExchange>) -> Self {
        let mut archive = Archive {
            exchanges,
            groups: BTreeMap::new(),
        };
        archive.rebuild_groups();
        archive
    }

    fn rebuild_groups(&mut self) {
        self.groups.clear();
        for (idx, exchange) in self.exchanges.iter().enumerate() {
            let group = self
                .groups
                .entry(exchange.origin_ip.clone())
                .or_insert_with(|| OriginGroup {
                    ip: exchange.origin_ip.clone(),
                    authorities: BTreeSet::new(),
                    exchanges: Vec::new(),
                });
            group.authorities.insert(exchange.request.authority.clone());
            group.exchanges.push(idx);
        }
    }

    pub fn exchanges(&self) -> &[RecordedExchange] {
        &self.exchanges
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }

    pub fn groups(&self) -> impl Iterator<Item = &OriginGroup> {
        self.groups.values()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_for_authority(&self, authority: &str) -> Option<&OriginGroup> {
        self.groups
            .values()
            .find(|g| g.authorities.contains(authority))
    }

    /// The base document: the first recorded HTML exchange.
    pub fn base_document(&self) -> Option<&RecordedExchange> {
        self.exchanges
            .iter()
            .find(|e| e.resource_type == ResourceType::Html)
    }

    pub fn find_by_url(&self, url: &str) -> Option<&RecordedExchange> {
        self.exchanges.iter().find(|e| e.url() == url)
    }

    /// Replay matching: exact (authority, path-with-query) first, then the
    /// same authority+path with the longest common query prefix, recording
    /// order breaking ties.
    pub fn match_request(
        &self,
        authority: &str,
        path_with_query: &str,
    ) -> Result<&RecordedExchange, ArchiveError> {
        if let Some(hit) = self
            .exchanges
            .iter()
            .find(|e| e.request.authority == authority && e.request.path == path_with_query)
        {
            return Ok(hit);
        }
        let path = path_with_query.split('?').next().unwrap_or("");
        let query = match path_with_query.split_once('?') {
            Some((_, q)) => q,
            None => "",
        };
        // Earliest-recorded candidate wins ties, so strictly-greater only.
        let mut best: Option<(&RecordedExchange, usize)> = None;
        for e in self
            .exchanges
            .iter()
            .filter(|e| e.request.authority == authority && e.path_without_query() == path)
        {
            let score = common_prefix_len(e.query(), query);
            if best.map(|(_, s)| score > s).unwrap_or(true) {
                best = Some((e, score));
            }
        }
        best.map(|(e, _)| e).ok_or_else(|| ArchiveError::NotFound {
            authority: authority.to_string(),
            path: path_with_query.to_string(),
        })
    }

    /// Exchanges reachable over the base document's connection under
    /// coalescing: same origin group, base document excluded.
    pub fn pushable_set(
        &self,
        entry_authority: &str,
    ) -> Result<Vec<&RecordedExchange>, ArchiveError> {
        let group = self
            .group_for_authority(entry_authority)
            .ok_or_else(|| ArchiveError::UnknownAuthority(entry_authority.to_string()))?;
        let base_idx = self.exchanges.iter().position(|e| {
            e.resource_type == ResourceType::Html && e.request.authority == entry_authority
        });
        Ok(group
            .exchanges
            .iter()
            .filter(|&&idx| Some(idx) != base_idx)
            .map(|&idx| &self.exchanges[idx])
            .collect())
    }

    /// Rehost every exchange under `target_authority`'s group, folding the
    /// original authority into the path and rewriting HTML references.
    pub fn relocate(&self, target_authority: &str) -> Result<Archive, ArchiveError> {
        let target_group = self
            .group_for_authority(target_authority)
            .ok_or_else(|| ArchiveError::UnknownAuthority(target_authority.to_string()))?;
        let target_ip = target_group.ip.clone();

        // New path per exchange; detect collisions before building.
        let mut new_paths: Vec<String> = Vec::with_capacity(self.exchanges.len());
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for exchange in &self.exchanges {
            let new_path = if exchange.request.authority == target_authority {
                exchange.request.path.clone()
            } else {
                format!("/{}{}", exchange.request.authority, exchange.request.path)
            };
            if let Some(prev_url) = seen.get(&new_path) {
                return Err(ArchiveError::RelocateError(
                    prev_url.clone(),
                    exchange.url(),
                    new_path,
                ));
            }
            seen.insert(new_path.clone(), exchange.url());
            new_paths.push(new_path);
        }

        // URL rewrites applied inside HTML bodies.
        let mut rewrites: Vec<(String, String)> = Vec::new();
        for exchange in &self.exchanges {
            if exchange.request.authority != target_authority {
                for scheme in ["https", "http"] {
                    rewrites.push((
                        format!("{}://{}", scheme, exchange.request.authority),
                        format!("/{}", exchange.request.authority),
                    ));
                }
            }
        }
        rewrites.sort();
        rewrites.dedup();

        let exchanges = self
            .exchanges
            .iter()
            .zip(new_paths)
            .map(|(exchange, path)| {
                let mut out = exchange.clone();
                out.request.authority = target_authority.to_string();
                out.request.path = path;
                out.origin_ip = target_ip.clone();
                if out.resource_type == ResourceType::Html {
                    let mut body = String::from_utf8_lossy(&out.response.body).into_owned();
                    for (from, to) in &rewrites {
                        body = body.replace(from.as_str(), to.as_str());
                    }
                    out.response.body = body.into_bytes();
                }
                out
            })
            .collect();
        Ok(Archive::from_exchanges(exchanges))
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let manifest = Manifest {
            version: ARCHIVE_FORMAT_VERSION,
            origins: self
                .groups
                .iter()
                .map(|(ip, g)| (ip.clone(), g.authorities.iter().cloned().collect()))
                .collect(),
        };
        serde_json::to_writer(&mut file, &manifest).map_err(fmt_err)?;
        file.write_all(b"\n")?;
        for exchange in &self.exchanges {
            serde_json::to_writer(&mut file, exchange).map_err(fmt_err)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Archive, ArchiveError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let manifest_line = lines
            .next()
            .ok_or_else(|| ArchiveError::Format("empty archive file".into()))??;
        let _manifest: Manifest = serde_json::from_str(&manifest_line).map_err(fmt_err)?;
        let mut exchanges = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            exchanges.push(serde_json::from_str(&line).map_err(fmt_err)?);
        }
        Ok(Archive::from_exchanges(exchanges))
    }
}

fn fmt_err(e: serde_json::Error) -> ArchiveError {
    ArchiveError::Format(e.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    origins: BTreeMap<String, Vec<String>>,
}

fn common_prefix_len(a: &str, b: &str) -> usize {
    a.bytes().zip(b.bytes()).take_while(|(x, y)| x == y).count()
}

// ---------------------------------------------------------------------------
// HAR 1.2 ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct HarDocument {
    log: HarLog,
}

#[derive(Debug, Deserialize)]
struct HarLog {
    entries: Vec<HarEntry>,
}

#[derive(Debug, Deserialize)]
struct HarEntry {
    request: HarRequest,
    response: HarResponse,
    #[serde(rename = "serverIPAddress")]
    server_ip: Option<String>,
}

#[derive(Debug, Deserialize)]
struct HarRequest {
    method: String,
    url: String,
    #[serde(default)]
    headers: Vec<HarHeader>,
}

#[derive(Debug, Deserialize)]
struct HarResponse {
    status: u16,
    #[serde(default)]
    headers: Vec<HarHeader>,
    #[serde(default)]
    content: HarContent,
}

#[derive(Debug, Deserialize)]
struct HarHeader {
    name: String,
    value: String,
}

#[derive(Debug, Deserialize, Default)]
struct HarContent {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    encoding: Option<String>,
    #[serde(rename = "mimeType", default)]
    mime_type: Option<String>,
}

/// Build an archive from a HAR 1.2 document. `ip_map` is the sidecar
/// hostname → IP map used when entries lack `serverIPAddress`.
pub fn import_har(
    har_json: &str,
    ip_map: Option<&BTreeMap<String, String>>,
) -> Result<(Archive, Vec<ImportWarning>), ArchiveError> {
    let doc: HarDocument = serde_json::from_str(har_json)
        .map_err(|e| ArchiveError::ImportError(format!("malformed HAR: {e}")))?;
    let mut exchanges = Vec::new();
    let mut warnings = Vec::new();

    for (i, entry) in doc.log.entries.iter().enumerate() {
        let url = Url::parse(&entry.request.url)
            .map_err(|e| ArchiveError::ImportError(format!("entry {i}: bad URL: {e}")))?;
        let authority = url
            .host_str()
            .ok_or_else(|| ArchiveError::ImportError(format!("entry {i}: URL has no host")))?
            .to_string();
        let path = match url.query() {
            Some(q) => format!("{}?{}", url.path(), q),
            None => url.path().to_string(),
        };

        let ip = entry
            .server_ip
            .clone()
            .filter(|ip| !ip.is_empty())
            .or_else(|| ip_map.and_then(|m| m.get(&authority).cloned()))
            .ok_or_else(|| {
                ArchiveError::ImportError(format!(
                    "entry {i}: no server IP for {authority} and no sidecar mapping"
                ))
            })?;

        let body = match (
            &entry.response.content.text,
            &entry.response.content.encoding,
        ) {
            (Some(text), Some(enc)) if enc.eq_ignore_ascii_case("base64") => {
                base64::engine::general_purpose::STANDARD
                    .decode(text)
                    .map_err(|e| ArchiveError::ImportError(format!("entry {i}: bad base64: {e}")))?
            }
            (Some(text), _) => text.clone().into_bytes(),
            (None, _) => {
                if !matches!(entry.response.status, 204 | 304) {
                    warnings.push(ImportWarning(format!(
                        "entry {i} ({}) has no response body; kept empty",
                        entry.request.url
                    )));
                }
                Vec::new()
            }
        };

        let response_headers = HeaderList(
            entry
                .response
                .headers
                .iter()
                .map(|h| (h.name.to_ascii_lowercase(), h.value.clone()))
                .collect(),
        );
        let content_type = response_headers
            .get("content-type")
            .map(str::to_string)
            .or_else(|| entry.response.content.mime_type.clone())
            .unwrap_or_default();

        let mut request_headers = HeaderList::new();
        request_headers.push(":method", entry.request.method.to_ascii_uppercase());
        request_headers.push(":scheme", url.scheme());
        request_headers.push(":authority", authority.clone());
        request_headers.push(":path", path.clone());
        for h in &entry.request.headers {
            let name = h.name.to_ascii_lowercase();
            if !name.starts_with(':') && name != "host" && name != "connection" {
                request_headers.push(name, h.value.clone());
            }
        }

        exchanges.push(RecordedExchange {
            request: RecordedRequest {
                method: entry.request.method.to_ascii_uppercase(),
                scheme: url.scheme().to_string(),
                authority,
                path,
                headers: request_headers,
            },
            response: RecordedResponse {
                status: entry.response.status,
                headers: response_headers,
                body,
            },
            origin_ip: ip,
            resource_type: resource_type_from_content_type(&content_type),
        });
    }

    Ok((Archive::from_exchanges(exchanges), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exchange(authority: &str, path: &str, ip: &str, ct: &str, body: &[u8]) -> RecordedExchange {
        RecordedExchange {
            request: RecordedRequest {
                method: "GET".into(),
                scheme: "https".into(),
                authority: authority.into(),
                path: path.into(),
                headers: HeaderList::from_pairs(vec![
                    (":method", "GET"),
                    (":scheme", "https"),
                    (":authority", authority),
                    (":path", path),
                ]),
            },
            response: RecordedResponse {
                status: 200,
                headers: HeaderList::from_pairs(vec![("content-type", ct)]),
                body: body.to_vec(),
            },
            origin_ip: ip.into(),
            resource_type: resource_type_from_content_type(ct),
        }
    }

    fn har_with(entries: &[(&str, &str, &str)]) -> String {
        let entries: Vec<serde_json::Value> = entries
            .iter()
            .map(|(url, ip, ct)| {
                serde_json::json!({
                    "request": {"method": "GET", "url": url, "headers": []},
                    "response": {
                        "status": 200,
                        "headers": [{"name": "Content-Type", "value": ct}],
                        "content": {"text": "body", "mimeType": ct}
                    },
                    "serverIPAddress": ip
                })
            })
            .collect();
        serde_json::json!({"log": {"version": "1.2", "entries": entries}}).to_string()
    }

    #[test]
    fn content_type_mapping() {
        assert_eq!(
            resource_type_from_content_type("text/html; charset=utf-8"),
            ResourceType::Html
        );
        assert_eq!(
            resource_type_from_content_type("text/css"),
            ResourceType::Css
        );
        assert_eq!(
            resource_type_from_content_type("application/javascript"),
            ResourceType::Js
        );
        assert_eq!(
            resource_type_from_content_type("image/png"),
            ResourceType::Image
        );
        assert_eq!(
            resource_type_from_content_type("application/x-font-opentype"),
            ResourceType::Font
        );
        assert_eq!(
            resource_type_from_content_type("application/json"),
            ResourceType::Other
        );
    }

    #[test]
    fn har_entries_on_one_ip_form_one_group() {
        let har = har_with(&[
            ("https://a.example/", "1.1.1.1", "text/html"),
            ("https://a.example/s.css", "1.1.1.1", "text/css"),
            (
                "https://a.example/x.js",
                "1.1.1.1",
                "application/javascript",
            ),
        ]);
        let (archive, warnings) = import_har(&har, None).unwrap();
        assert_eq!(archive.group_count(), 1);
        assert_eq!(archive.len(), 3);
        assert!(warnings.is_empty());
    }

    #[test]
    fn hostnames_sharing_an_ip_coalesce() {
        let har = har_with(&[
            ("https://a.example/", "1.1.1.1", "text/html"),
            ("https://cdn.example/s.css", "1.1.1.1", "text/css"),
        ]);
        let (archive, _) = import_har(&har, None).unwrap();
        assert_eq!(archive.group_count(), 1);
        let group = archive.groups().next().unwrap();
        assert_eq!(group.authorities.len(), 2);
    }

    #[test]
    fn missing_ip_without_sidecar_is_an_error() {
        let har = serde_json::json!({"log": {"entries": [{
            "request": {"method": "GET", "url": "https://a.example/", "headers": []},
            "response": {"status": 200, "headers": [], "content": {"text": "x"}}
        }]}})
        .to_string();
        assert!(matches!(
            import_har(&har, None),
            Err(ArchiveError::ImportError(_))
        ));
        let mut map = BTreeMap::new();
        map.insert("a.example".to_string(), "9.9.9.9".to_string());
        assert!(import_har(&har, Some(&map)).is_ok());
    }

    #[test]
    fn missing_body_keeps_entry_with_warning() {
        let har = serde_json::json!({"log": {"entries": [{
            "request": {"method": "GET", "url": "https://a.example/", "headers": []},
            "response": {"status": 200, "headers": [], "content": {}},
            "serverIPAddress": "1.1.1.1"
        }]}})
        .to_string();
        let (archive, warnings) = import_har(&har, None).unwrap();
        assert_eq!(archive.len(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn exact_match_wins() {
        let archive = Archive::from_exchanges(vec![exchange(
            "a.example",
            "/index.html",
            "1.1.1.1",
            "text/html",
            b"hi",
        )]);
        assert!(archive.match_request("a.example", "/index.html").is_ok());
        assert!(matches!(
            archive.match_request("a.example", "/missing"),
            Err(ArchiveError::NotFound { .. })
        ));
    }

    #[test]
    fn longest_query_prefix_wins() {
        let archive = Archive::from_exchanges(vec![
            exchange("a.example", "/a?x=1&y=3", "1.1.1.1", "text/css", b"one"),
            exchange("a.example", "/a?z=9", "1.1.1.1", "text/css", b"two"),
        ]);
        // Brute-force oracle: candidate with the longest common query prefix.
        let request_query = "x=1&y=2";
        let oracle = archive
            .exchanges()
            .iter()
            .max_by_key(|e| common_prefix_len(e.query(), request_query))
            .unwrap()
            .clone();
        let hit = archive.match_request("a.example", "/a?x=1&y=2").unwrap();
        assert_eq!(hit, &oracle);
        assert_eq!(hit.response.body, b"one");
    }

    #[test]
    fn query_prefix_tie_breaks_by_recording_order() {
        let archive = Archive::from_exchanges(vec![
            exchange("a.example", "/a?p=1", "1.1.1.1", "text/css", b"first"),
            exchange("a.example", "/a?p=2", "1.1.1.1", "text/css", b"second"),
        ]);
        let hit = archive.match_request("a.example", "/a?q=0").unwrap();
        assert_eq!(hit.response.body, b"first");
    }

    #[test]
    fn pushable_excludes_third_party_and_base() {
        let mut exchanges = vec![exchange(
            "a.example",
            "/",
            "1.1.1.1",
            "text/html",
            b"<html>",
        )];
        for i in 0..4 {
            exchanges.push(exchange(
                "a.example",
                &format!("/r{i}.css"),
                "1.1.1.1",
                "text/css",
                b"x",
            ));
        }
        for i in 0..6 {
            exchanges.push(exchange(
                "third.example",
                &format!("/t{i}.js"),
                "2.2.2.2",
                "application/javascript",
                b"x",
            ));
        }
        let archive = Archive::from_exchanges(exchanges);
        assert_eq!(archive.pushable_set("a.example").unwrap().len(), 4);
    }

    #[test]
    fn base_alone_in_group_has_empty_pushable_set() {
        let archive = Archive::from_exchanges(vec![
            exchange("a.example", "/", "1.1.1.1", "text/html", b"<html>"),
            exchange(
                "third.example",
                "/x.js",
                "2.2.2.2",
                "application/javascript",
                b"x",
            ),
        ]);
        assert!(archive.pushable_set("a.example").unwrap().is_empty());
    }

    #[test]
    fn relocate_merges_groups_and_rewrites_references() {
        let archive = Archive::from_exchanges(vec![
            exchange(
                "a.example",
                "/",
                "1.1.1.1",
                "text/html",
                b"<html><head><link rel=\"stylesheet\" href=\"https://cdn.example/a.css\"></head></html>",
            ),
            exchange("cdn.example", "/a.css", "2.2.2.2", "text/css", b"css"),
            exchange("img.example", "/b.png", "3.3.3.3", "image/png", b"png"),
        ]);
        let relocated = archive.relocate("a.example").unwrap();
        assert_eq!(relocated.group_count(), 1);
        let body = String::from_utf8_lossy(&relocated.exchanges()[0].response.body).into_owned();
        assert!(body.contains("\"/cdn.example/a.css\""), "body = {body}");
        assert!(relocated
            .match_request("a.example", "/cdn.example/a.css")
            .is_ok());
        // Relocation preserves the multiset of non-HTML bodies.
        assert_eq!(relocated.exchanges()[1].response.body, b"css");
        assert_eq!(relocated.exchanges()[2].response.body, b"png");
    }

    #[test]
    fn relocate_single_group_archive_is_idempotent() {
        let archive = Archive::from_exchanges(vec![
            exchange("a.example", "/", "1.1.1.1", "text/html", b"<html></html>"),
            exchange("a.example", "/a.css", "1.1.1.1", "text/css", b"css"),
        ]);
        let relocated = archive.relocate("a.example").unwrap();
        assert_eq!(relocated.exchanges(), archive.exchanges());
    }

    #[test]
    fn relocate_detects_path_collisions() {
        let archive = Archive::from_exchanges(vec![
            exchange(
                "a.example",
                "/cdn.example/a.css",
                "1.1.1.1",
                "text/css",
                b"one",
            ),
            exchange("cdn.example", "/a.css", "2.2.2.2", "text/css", b"two"),
        ]);
        assert!(matches!(
            archive.relocate("a.example"),
            Err(ArchiveError::RelocateError(..))
        ));
    }

    #[test]
    fn partition_property() {
        let har = har_with(&[
            ("https://a.example/", "1.1.1.1", "text/html"),
            ("https://b.example/x", "2.2.2.2", "text/css"),
            ("https://c.example/y", "2.2.2.2", "image/png"),
        ]);
        let (archive, _) = import_har(&har, None).unwrap();
        let total: usize = archive.groups().map(|g| g.exchanges.len()).sum();
        assert_eq!(total, archive.len());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("site.jsonl");
        let archive = Archive::from_exchanges(vec![
            exchange(
                "a.example",
                "/",
                "1.1.1.1",
                "text/html",
                b"<html>\xff</html>",
            ),
            exchange("a.example", "/s.css", "1.1.1.1", "text/css", b"body{}"),
        ]);
        archive.save(&path).unwrap();
        let loaded = Archive::load(&path).unwrap();
        assert_eq!(loaded.exchanges(), archive.exchanges());
        assert_eq!(loaded.group_count(), archive.group_count());
    }
}
