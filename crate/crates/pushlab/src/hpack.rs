//! HPACK header compression, static-table subset (RFC 7541).
//!
//! The encoder emits indexed representations for exact static-table matches
//! and literal-without-indexing otherwise (static name index when the name
//! matches), never Huffman. The decoder additionally accepts incremental
//! indexing and never-indexed literals, dynamic table size updates, and
//! Huffman-coded strings, but keeps no dynamic table: an index beyond the
//! static table is a decode error.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordered list of header fields; pseudo-headers first, names lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeaderList(pub Vec<(String, String)>);

impl HeaderList {
    pub fn new() -> Self {
        HeaderList(Vec::new())
    }

    pub fn from_pairs<N: Into<String>, V: Into<String>>(pairs: Vec<(N, V)>) -> Self {
        HeaderList(
            pairs
                .into_iter()
                .map(|(n, v)| (n.into(), v.into()))
                .collect(),
        )
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Check the HeaderList invariants: lowercase names, pseudo-headers
    /// before all regular fields.
    pub fn validate(&self) -> Result<(), HpackError> {
        let mut seen_regular = false;
        for (name, _) in &self.0 {
            if name.bytes().any(|b| b.is_ascii_uppercase()) {
                return Err(HpackError::InvalidHeader(format!(
                    "uppercase byte in field name {name:?}"
                )));
            }
            if name.starts_with(':') {
                if seen_regular {
                    return Err(HpackError::InvalidHeader(format!(
                        "pseudo-header {name:?} after regular fields"
                    )));
                }
            } else {
                seen_regular = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HpackError {
    #[error("invalid header list: {0}")]
    InvalidHeader(String),
    #[error("decode error: {0}")]
    DecodeError(String),
}

/// Static table, RFC 7541 Appendix A (1-based index = position + 1).
static STATIC_TABLE: &[(&str, &str)] = &[
    (":authority", ""),
    (":method", "GET"),
    (":method", "POST"),
    (":path", "/"),
    (":path", "/index.html"),
    (":scheme", "http"),
    (":scheme", "https"),
    (":status", "200"),
    (":status", "204"),
    (":status", "206"),
    (":status", "304"),
    (":status", "400"),
    (":status", "404"),
    (":status", "500"),
    ("accept-charset", ""),
    ("accept-encoding", "gzip, deflate"),
    ("accept-language", ""),
    ("accept-ranges", ""),
    ("accept", ""),
    ("access-control-allow-origin", ""),
    ("age", ""),
    ("allow", ""),
    ("authorization", ""),
    ("cache-control", ""),
    ("content-disposition", ""),
    ("content-encoding", ""),
    ("content-language", ""),
    ("content-length", ""),
    ("content-location", ""),
    ("content-range", ""),
    ("content-type", ""),
    ("cookie", ""),
    ("date", ""),
    ("etag", ""),
    ("expect", ""),
    ("expires", ""),
    ("from", ""),
    ("host", ""),
    ("if-match", ""),
    ("if-modified-since", ""),
    ("if-none-match", ""),
    ("if-range", ""),
    ("if-unmodified-since", ""),
    ("last-modified", ""),
    ("link", ""),
    ("location", ""),
    ("max-forwards", ""),
    ("proxy-authenticate", ""),
    ("proxy-authorization", ""),
    ("range", ""),
    ("referer", ""),
    ("refresh", ""),
    ("retry-after", ""),
    ("server", ""),
    ("set-cookie", ""),
    ("strict-transport-security", ""),
    ("transfer-encoding", ""),
    ("user-agent", ""),
    ("vary", ""),
    ("via", ""),
    ("www-authenticate", ""),
];

fn static_index(name: &str, value: &str) -> Option<usize> {
    STATIC_TABLE
        .iter()
        .position(|&(n, v)| n == name && v == value)
        .map(|p| p + 1)
}

fn static_name_index(name: &str) -> Option<usize> {
    STATIC_TABLE
        .iter()
        .position(|&(n, _)| n == name)
        .map(|p| p + 1)
}

/// Encode an integer with an N-bit prefix (RFC 7541 §5.1).
fn encode_int(out: &mut Vec<u8>, prefix_bits: u8, first_byte_flags: u8, mut value: usize) {
    let max_prefix = (1usize << prefix_bits) - 1;
    if value < max_prefix {
        out.push(first_byte_flags | value as u8);
        return;
    }
    out.push(first_byte_flags | max_prefix as u8);
    value -= max_prefix;
    while value >= 128 {
        out.push((value % 128 + 128) as u8);
        value /= 128;
    }
    out.push(value as u8);
}

fn decode_int(bytes: &[u8], pos: &mut usize, prefix_bits: u8) -> Result<usize, HpackError> {
    let max_prefix = (1usize << prefix_bits) - 1;
    let first = *bytes
        .get(*pos)
        .ok_or_else(|| HpackError::DecodeError("truncated integer".into()))?;
    *pos += 1;
    let mut value = (first as usize) & max_prefix;
    if value < max_prefix {
        return Ok(value);
    }
    let mut shift = 0u32;
    loop {
        let byte = *bytes
            .get(*pos)
            .ok_or_else(|| HpackError::DecodeError("truncated integer continuation".into()))?;
        *pos += 1;
        value = value
            .checked_add(((byte & 0x7f) as usize) << shift)
            .ok_or_else(|| HpackError::DecodeError("integer overflow".into()))?;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
        if shift > 28 {
            return Err(HpackError::DecodeError("integer too long".into()));
        }
    }
}

fn encode_string(out: &mut Vec<u8>, s: &str) {
    encode_int(out, 7, 0x00, s.len()); // H bit clear: raw octets
    out.extend_from_slice(s.as_bytes());
}

fn decode_string(bytes: &[u8], pos: &mut usize) -> Result<String, HpackError> {
    let huffman = bytes
        .get(*pos)
        .map(|b| b & 0x80 != 0)
        .ok_or_else(|| HpackError::DecodeError("truncated string".into()))?;
    let len = decode_int(bytes, pos, 7)?;
    if *pos + len > bytes.len() {
        return Err(HpackError::DecodeError("truncated string literal".into()));
    }
    let raw = &bytes[*pos..*pos + len];
    *pos += len;
    let octets = if huffman {
        huffman_decode(raw)?
    } else {
        raw.to_vec()
    };
    String::from_utf8(octets).map_err(|_| HpackError::DecodeError("non-UTF-8 field".into()))
}

/// Encode a header list. Deterministic: equal input, equal output.
pub fn hpack_encode(headers: &HeaderList) -> Result<Vec<u8>, HpackError> {
    headers.validate()?;
    let mut out = Vec::new();
    for (name, value) in headers.iter() {
        if let Some(idx) = static_index(name, value) {
            encode_int(&mut out, 7, 0x80, idx); // indexed field
            continue;
        }
        // Literal without indexing (0000 prefix), static name index if any.
        if let Some(idx) = static_name_index(name) {
            encode_int(&mut out, 4, 0x00, idx);
        } else {
            out.push(0x00);
            encode_string(&mut out, name);
        }
        encode_string(&mut out, value);
    }
    Ok(out)
}

/// Byte size of the encoded header block; used by the simulator.
pub fn encoded_len(headers: &HeaderList) -> usize {
    hpack_encode(headers).map(|b| b.len()).unwrap_or(0)
}

/// Decode a header block into fields in wire order.
pub fn hpack_decode(bytes: &[u8]) -> Result<HeaderList, HpackError> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while pos < bytes.len() {
        let first = bytes[pos];
        if first & 0x80 != 0 {
            // Indexed header field.
            let idx = decode_int(bytes, &mut pos, 7)?;
            let (name, value) = lookup_static(idx)?;
            fields.push((name.to_string(), value.to_string()));
        } else if first & 0xc0 == 0x40 {
            // Literal with incremental indexing; decoded, not retained.
            let idx = decode_int(bytes, &mut pos, 6)?;
            fields.push(decode_literal(bytes, &mut pos, idx)?);
        } else if first & 0xe0 == 0x20 {
            // Dynamic table size update; no dynamic table, accepted and ignored.
            decode_int(bytes, &mut pos, 5)?;
        } else {
            // Literal without indexing (0000) or never indexed (0001).
            let idx = decode_int(bytes, &mut pos, 4)?;
            fields.push(decode_literal(bytes, &mut pos, idx)?);
        }
    }
    Ok(HeaderList(fields))
}

fn lookup_static(index: usize) -> Result<(&'static str, &'static str), HpackError> {
    if index == 0 {
        return Err(HpackError::DecodeError("index 0 is invalid".into()));
    }
    STATIC_TABLE
        .get(index - 1)
        .copied()
        .ok_or_else(|| HpackError::DecodeError(format!("index {index} beyond static table")))
}

fn decode_literal(
    bytes: &[u8],
    pos: &mut usize,
    name_index: usize,
) -> Result<(String, String), HpackError> {
    let name = if name_index == 0 {
        decode_string(bytes, pos)?
    } else {
        lookup_static(name_index)?.0.to_string()
    };
    let value = decode_string(bytes, pos)?;
    Ok((name, value))
}

/// Huffman code table, RFC 7541 Appendix B: (code, bit length) per symbol
/// 0..=256 (256 is EOS).
static HUFFMAN_TABLE: [(u32, u8); 257] = [
    (0x1ff8, 13),
    (0x7fffd8, 23),
    (0xfffffe2, 28),
    (0xfffffe3, 28),
    (0xfffffe4, 28),
    (0xfffffe5, 28),
    (0xfffffe6, 28),
    (0xfffffe7, 28),
    (0xfffffe8, 28),
    (0xffffea, 24),
    (0x3ffffffc, 30),
    (0xfffffe9, 28),
    (0xfffffea, 28),
    (0x3ffffffd, 30),
    (0xfffffeb, 28),
    (0xfffffec, 28),
    (0xfffffed, 28),
    (0xfffffee, 28),
    (0xfffffef, 28),
    (0xffffff0, 28),
    (0xffffff1, 28),
    (0xffffff2, 28),
    (0x3ffffffe, 30),
    (0xffffff3, 28),
    (0xffffff4, 28),
    (0xffffff5, 28),
    (0xffffff6, 28),
    (0xffffff7, 28),
    (0xffffff8, 28),
    (0xffffff9, 28),
    (0xffffffa, 28),
    (0xffffffb, 28),
    (0x14, 6),
    (0x3f8, 10),
    (0x3f9, 10),
    (0xffa, 12),
    (0x1ff9, 13),
    (0x15, 6),
    (0xf8, 8),
    (0x7fa, 11),
    (0x3fa, 10),
    (0x3fb, 10),
    (0xf9, 8),
    (0x7fb, 11),
    (0xfa, 8),
    (0x16, 6),
    (0x17, 6),
    (0x18, 6),
    (0x0, 5),
    (0x1, 5),
    (0x2, 5),
    (0x19, 6),
    (0x1a, 6),
    (0x1b, 6),
    (0x1c, 6),
    (0x1d, 6),
    (0x1e, 6),
    (0x1f, 6),
    (0x5c, 7),
    (0xfb, 8),
    (0x7ffc, 15),
    (0x20, 6),
    (0xffb, 12),
    (0x3fc, 10),
    (0x1ffa, 13),
    (0x21, 6),
    (0x5d, 7),
    (0x5e, 7),
    (0x5f, 7),
    (0x60, 7),
    (0x61, 7),
    (0x62, 7),
    (0x63, 7),
    (0x64, 7),
    (0x65, 7),
    (0x66, 7),
    (0x67, 7),
    (0x68, 7),
    (0x69, 7),
    (0x6a, 7),
    (0x6b, 7),
    (0x6c, 7),
    (0x6d, 7),
    (0x6e, 7),
    (0x6f, 7),
    (0x70, 7),
    (0x71, 7),
    (0x72, 7),
    (0xfc, 8),
    (0x73, 7),
    (0xfd, 8),
    (0x1ffb, 13),
    (0x7fff0, 19),
    (0x1ffc, 13),
    (0x3ffc, 14),
    (0x22, 6),
    (0x7ffd, 15),
    (0x3, 5),
    (0x23, 6),
    (0x4, 5),
    (0x24, 6),
    (0x5, 5),
    (0x25, 6),
    (0x26, 6),
    (0x27, 6),
    (0x6, 5),
    (0x74, 7),
    (0x75, 7),
    (0x28, 6),
    (0x29, 6),
    (0x2a, 6),
    (0x7, 5),
    (0x2b, 6),
    (0x76, 7),
    (0x2c, 6),
    (0x8, 5),
    (0x9, 5),
    (0x2d, 6),
    (0x77, 7),
    (0x78, 7),
    (0x79, 7),
    (0x7a, 7),
    (0x7b, 7),
    (0x7ffe, 15),
    (0x7fc, 11),
    (0x3ffd, 14),
    (0x1ffd, 13),
    (0xffffffc, 28),
    (0xfffe6, 20),
    (0x3fffd2, 22),
    (0xfffe7, 20),
    (0xfffe8, 20),
    (0x3fffd3, 22),
    (0x3fffd4, 22),
    (0x3fffd5, 22),
    (0x7fffd9, 23),
    (0x3fffd6, 22),
    (0x7fffda, 23),
    (0x7fffdb, 23),
    (0x7fffdc, 23),
    (0x7fffdd, 23),
    (0x7fffde, 23),
    (0xffffeb, 24),
    (0x7fffdf, 23),
    (0xffffec, 24),
    (0xffffed, 24),
    (0x3fffd7, 22),
    (0x7fffe0, 23),
    (0xffffee, 24),
    (0x7fffe1, 23),
    (0x7fffe2, 23),
    (0x7fffe3, 23),
    (0x7fffe4, 23),
    (0x1fffdc, 21),
    (0x3fffd8, 22),
    (0x7fffe5, 23),
    (0x3fffd9, 22),
    (0x7fffe6, 23),
    (0x7fffe7, 23),
    (0xffffef, 24),
    (0x3fffda, 22),
    (0x1fffdd, 21),
    (0xfffe9, 20),
    (0x3fffdb, 22),
    (0x3fffdc, 22),
    (0x7fffe8, 23),
    (0x7fffe9, 23),
    (0x1fffde, 21),
    (0x7fffea, 23),
    (0x3fffdd, 22),
    (0x3fffde, 22),
    (0xfffff0, 24),
    (0x1fffdf, 21),
    (0x3fffdf, 22),
    (0x7fffeb, 23),
    (0x7fffec, 23),
    (0x1fffe0, 21),
    (0x1fffe1, 21),
    (0x3fffe0, 22),
    (0x1fffe2, 21),
    (0x7fffed, 23),
    (0x3fffe1, 22),
    (0x7fffee, 23),
    (0x7fffef, 23),
    (0xfffea, 20),
    (0x3fffe2, 22),
    (0x3fffe3, 22),
    (0x3fffe4, 22),
    (0x7ffff0, 23),
    (0x3fffe5, 22),
    (0x3fffe6, 22),
    (0x7ffff1, 23),
    (0x3ffffe0, 26),
    (0x3ffffe1, 26),
    (0xfffeb, 20),
    (0x7fff1, 19),
    (0x3fffe7, 22),
    (0x7ffff2, 23),
    (0x3fffe8, 22),
    (0x1ffffec, 25),
    (0x3ffffe2, 26),
    (0x3ffffe3, 26),
    (0x3ffffe4, 26),
    (0x7ffffde, 27),
    (0x7ffffdf, 27),
    (0x3ffffe5, 26),
    (0xfffff1, 24),
    (0x1ffffed, 25),
    (0x7fff2, 19),
    (0x1fffe3, 21),
    (0x3ffffe6, 26),
    (0x7ffffe0, 27),
    (0x7ffffe1, 27),
    (0x3ffffe7, 26),
    (0x7ffffe2, 27),
    (0xfffff2, 24),
    (0x1fffe4, 21),
    (0x1fffe5, 21),
    (0x3ffffe8, 26),
    (0x3ffffe9, 26),
    (0xffffffd, 28),
    (0x7ffffe3, 27),
    (0x7ffffe4, 27),
    (0x7ffffe5, 27),
    (0xfffec, 20),
    (0xfffff3, 24),
    (0xfffed, 20),
    (0x1fffe6, 21),
    (0x3fffe9, 22),
    (0x1fffe7, 21),
    (0x1fffe8, 21),
    (0x7ffff3, 23),
    (0x3fffea, 22),
    (0x3fffeb, 22),
    (0x1ffffee, 25),
    (0x1ffffef, 25),
    (0xfffff4, 24),
    (0xfffff5, 24),
    (0x3ffffea, 26),
    (0x7ffff4, 23),
    (0x3ffffeb, 26),
    (0x7ffffe6, 27),
    (0x3ffffec, 26),
    (0x3ffffed, 26),
    (0x7ffffe7, 27),
    (0x7ffffe8, 27),
    (0x7ffffe9, 27),
    (0x7ffffea, 27),
    (0x7ffffeb, 27),
    (0xffffffe, 28),
    (0x7ffffec, 27),
    (0x7ffffed, 27),
    (0x7ffffee, 27),
    (0x7ffffef, 27),
    (0x7fffff0, 27),
    (0x3ffffee, 26),
    (0x3fffffff, 30),
];

fn huffman_decode_map() -> &'static HashMap<(u32, u8), u16> {
    static MAP: OnceLock<HashMap<(u32, u8), u16>> = OnceLock::new();
    MAP.get_or_init(|| {
        HUFFMAN_TABLE
            .iter()
            .enumerate()
            .map(|(sym, &(code, bits))| ((code, bits), sym as u16))
            .collect()
    })
}

/// Decode a Huffman-coded string literal (RFC 7541 §5.2).
fn huffman_decode(bytes: &[u8]) -> Result<Vec<u8>, HpackError> {
    let map = huffman_decode_map();
    let mut out = Vec::new();
    let mut code: u32 = 0;
    let mut bits: u8 = 0;
    for &byte in bytes {
        for shift in (0..8).rev() {
            code = (code << 1) | ((byte >> shift) & 1) as u32;
            bits += 1;
            if bits > 30 {
                return Err(HpackError::DecodeError("invalid Huffman code".into()));
            }
            if let Some(&sym) = map.get(&(code, bits)) {
                if sym == 256 {
                    return Err(HpackError::DecodeError("EOS symbol in Huffman data".into()));
                }
                out.push(sym as u8);
                code = 0;
                bits = 0;
            }
        }
    }
    // Trailing padding must be a prefix of EOS: at most 7 one-bits.
    if bits >= 8 || code != (1u32 << bits) - 1 {
        return Err(HpackError::DecodeError("invalid Huffman padding".into()));
    }
    Ok(out)
}
