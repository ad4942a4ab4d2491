//! Token escaping for the canonical text serializations.
//!
//! Fields are tab separated, identity attributes are `name=value` pairs joined
//! by `;`. Every byte outside the unreserved set is written as `%XX` with
//! uppercase hex. Decoding is strict: a token is accepted only if re-encoding
//! it reproduces the input byte for byte.

use std::fmt::Write as _;

fn unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"-_.~'+!*()/@:#".contains(&b)
}

pub fn escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for &b in raw.as_bytes() {
        if unreserved(b) {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

pub fn unescape(token: &str) -> Option<String> {
    let bytes = token.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes.get(i + 1..i + 3)?;
            if !hex.iter().all(|b| matches!(b, b'0'..=b'9' | b'A'..=b'F')) {
                return None;
            }
            let v = u8::from_str_radix(std::str::from_utf8(hex).ok()?, 16).ok()?;
            out.push(v);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    let s = String::from_utf8(out).ok()?;
    (escape(&s) == token).then_some(s)
}
