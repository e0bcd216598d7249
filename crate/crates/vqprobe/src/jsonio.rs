//! Deterministic JSON emission.
//!
//! Emitted artifacts (store headers, checkpoints, reports, dictionaries)
//! must be byte-identical across reruns, so serialization is hand-rolled:
//! field order is the call order, floats are always printed with 9
//! significant digits (`{:.8e}`), and indentation is fixed at two spaces.
//! Reading uses serde_json, which does not care about any of this.

/// Formats a finite float with 9 significant digits.
///
/// 9 digits round-trip any f32 exactly and pin every f64 artifact to a
/// stable textual form.
pub fn fmt_float(x: f64) -> String {
    debug_assert!(x.is_finite(), "refusing to serialize non-finite float");
    format!("{:.8e}", x)
}

fn escape_into(buf: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '"' => buf.push_str("\\\""),
            '\\' => buf.push_str("\\\\"),
            '\n' => buf.push_str("\\n"),
            '\r' => buf.push_str("\\r"),
            '\t' => buf.push_str("\\t"),
            c if (c as u32) < 0x20 => buf.push_str(&format!("\\u{:04x}", c as u32)),
            c => buf.push(c),
        }
    }
}

/// Incremental writer for JSON objects and arrays with fixed layout.
pub struct JsonWriter {
    buf: String,
    /// One entry per open container; true once it holds at least one item.
    comma: Vec<bool>,
    /// Set right after `key()`: the next value attaches inline.
    pending_key: bool,
}

impl JsonWriter {
    pub fn new() -> Self {
        JsonWriter { buf: String::new(), comma: Vec::new(), pending_key: false }
    }

    fn indent(&mut self) {
        for _ in 0..self.comma.len() {
            self.buf.push_str("  ");
        }
    }

    /// Comma/newline bookkeeping before any new entry. A value following a
    /// key stays on the key's line.
    fn next_entry(&mut self) {
        if self.pending_key {
            self.pending_key = false;
            return;
        }
        if let Some(c) = self.comma.last_mut() {
            if *c {
                self.buf.push(',');
            }
            *c = true;
            self.buf.push('\n');
            self.indent();
        }
    }

    pub fn begin_obj(&mut self) -> &mut Self {
        self.next_entry();
        self.buf.push('{');
        self.comma.push(false);
        self
    }

    pub fn end_obj(&mut self) -> &mut Self {
        let had = self.comma.pop().expect("unbalanced end_obj");
        if had {
            self.buf.push('\n');
            self.indent();
        }
        self.buf.push('}');
        self
    }

    pub fn begin_arr(&mut self) -> &mut Self {
        self.next_entry();
        self.buf.push('[');
        self.comma.push(false);
        self
    }

    pub fn end_arr(&mut self) -> &mut Self {
        let had = self.comma.pop().expect("unbalanced end_arr");
        if had {
            self.buf.push('\n');
            self.indent();
        }
        self.buf.push(']');
        self
    }

    pub fn key(&mut self, name: &str) -> &mut Self {
        debug_assert!(!self.pending_key, "key after key");
        self.next_entry();
        self.buf.push('"');
        escape_into(&mut self.buf, name);
        self.buf.push_str("\": ");
        self.pending_key = true;
        self
    }

    fn raw_value(&mut self, v: &str) {
        self.next_entry();
        self.buf.push_str(v);
    }

    pub fn str_val(&mut self, v: &str) -> &mut Self {
        let mut s = String::from("\"");
        escape_into(&mut s, v);
        s.push('"');
        self.raw_value(&s);
        self
    }

    pub fn uint(&mut self, v: u64) -> &mut Self {
        self.raw_value(&v.to_string());
        self
    }

    pub fn int(&mut self, v: i64) -> &mut Self {
        self.raw_value(&v.to_string());
        self
    }

    pub fn float(&mut self, v: f64) -> &mut Self {
        self.raw_value(&fmt_float(v));
        self
    }

    pub fn boolean(&mut self, v: bool) -> &mut Self {
        self.raw_value(if v { "true" } else { "false" });
        self
    }

    /// Array of floats on one line; keeps large numeric payloads compact.
    pub fn float_row(&mut self, row: &[f64]) -> &mut Self {
        let mut s = String::from("[");
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&fmt_float(*x));
        }
        s.push(']');
        self.raw_value(&s);
        self
    }

    pub fn uint_row(&mut self, row: &[u64]) -> &mut Self {
        let mut s = String::from("[");
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&x.to_string());
        }
        s.push(']');
        self.raw_value(&s);
        self
    }

    pub fn finish(mut self) -> String {
        debug_assert!(self.comma.is_empty(), "unbalanced containers at finish");
        self.buf.push('\n');
        self.buf
    }
}
