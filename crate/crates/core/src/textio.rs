//! Small helpers shared by the line-oriented text formats.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Non-empty, comment-stripped lines with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub(crate) struct LineCursor<'a> {
    pub path: &'a Path,
    pub line: usize,
}

impl LineCursor<'_> {
    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, msg)
    }

    pub fn num<T: FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse {what} from '{tok}'")))
    }

    pub fn finite(&self, tok: Option<&str>, what: &str) -> Result<f64> {
        let v: f64 = self.num(tok, what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("{what} must be finite")))
        }
    }

    /// Parses `name=value` and checks the name.
    pub fn keyed<T: FromStr>(&self, tok: Option<&str>, name: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {name}=")))?;
        let value = tok
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected {name}=<value>, found '{tok}'")))?;
        value
            .parse()
            .map_err(|_| self.err(format!("cannot parse {name} from '{value}'")))
    }

    pub fn done<'b>(&self, mut toks: impl Iterator<Item = &'b str>) -> Result<()> {
        match toks.next() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected trailing token '{t}'"))),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes via a sibling temporary file and renames, so a failed run never
/// leaves a partial output behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp: PathBuf = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
