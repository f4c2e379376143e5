//! Line-oriented bulk format: `<canonical-key> FWD <face>` or
//! `<canonical-key> XLT <target>`. Blank lines and `#` comments are skipped.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{FaceId, FibAction, HptFib, HptFibEntry};
use crate::identifier::IdError;

#[derive(Debug, Error)]
pub enum FibTextError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Identifier { line: usize, source: IdError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn parse_line(line_no: usize, line: &str) -> Result<Option<HptFibEntry>, FibTextError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let syntax = |msg: &str| FibTextError::Syntax {
        line: line_no,
        msg: msg.to_string(),
    };
    let id_err = |source| FibTextError::Identifier {
        line: line_no,
        source,
    };
    let mut parts = line.split_whitespace();
    let (Some(key), Some(op), Some(arg), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(syntax(
            "expected `<key> FWD <face>` or `<key> XLT <target>`",
        ));
    };
    let key = key.parse().map_err(id_err)?;
    match op {
        "FWD" => {
            let face = arg.parse().map_err(|_| syntax("face must be an integer"))?;
            Ok(Some(HptFibEntry::forward(key, FaceId(face))))
        }
        "XLT" => Ok(Some(HptFibEntry::translate(
            key,
            arg.parse().map_err(id_err)?,
        ))),
        other => Err(syntax(&format!("unknown action {other:?}"))),
    }
}

impl HptFib {
    pub fn load_text<R: BufRead>(&mut self, reader: R) -> Result<usize, FibTextError> {
        for (i, line) in reader.lines().enumerate() {
            if let Some(e) = parse_line(i + 1, &line?)? {
                self.insert(e);
            }
        }
        Ok(self.len())
    }

    /// Writes all entries sorted by key.
    pub fn dump_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut lines: Vec<String> = self
            .entries()
            .map(|e| match e.action {
                FibAction::Forward(f) => format!("{} FWD {}", e.key, f),
                FibAction::Translate(t) => format!("{} XLT {}", e.key, t),
            })
            .collect();
        lines.sort();
        for l in lines {
            writeln!(out, "{l}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_dump() {
        let text = "# routes\nccn:/a/b FWD 3\n\nid:/alice XLT ip:10.0.0.7\nip:10.0.0.0/8 FWD 1\n";
        let mut fib = HptFib::new();
        assert_eq!(fib.load_text(text.as_bytes()).unwrap(), 3);
        let mut out = Vec::new();
        fib.dump_text(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "ccn:/a/b FWD 3\nid:/alice XLT ip:10.0.0.7\nip:10.0.0.0/8 FWD 1\n"
        );
    }

    #[test]
    fn syntax_errors_carry_line() {
        let mut fib = HptFib::new();
        let err = fib
            .load_text("ccn:/a FWD 1\nccn:/b JMP 2\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, FibTextError::Syntax { line: 2, .. }), "{err}");
        let err = fib.load_text("ccn:/a FWD x".as_bytes()).unwrap_err();
        assert!(matches!(err, FibTextError::Syntax { line: 1, .. }));
        let err = fib
            .load_text("ccn:/a XLT ip:999.0.0.1".as_bytes())
            .unwrap_err();
        assert!(matches!(err, FibTextError::Identifier { line: 1, .. }));
        assert!(parse_line(1, "ccn:/a FWD").is_err());
    }
}
