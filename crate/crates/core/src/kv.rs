//! Flat `name = value` documents.
//!
//! One entry per line, `#` starts a comment, and a line `@include <path>`
//! pulls in another document (resolved relative to the including file)
//! whose entries may be overridden by later lines.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: String,
    line: usize,
}

/// A parsed key-value document with per-entry source locations.
#[derive(Clone, Debug, Default)]
pub struct KvDoc {
    entries: BTreeMap<String, Entry>,
    origin: String,
}

impl KvDoc {
    /// Parses a document with no include support.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut doc = KvDoc { origin: origin.to_string(), ..Default::default() };
        doc.merge_text(text, origin, None, 0)?;
        Ok(doc)
    }

    /// Loads a document from disk, following `@include` directives.
    pub fn load(path: &Path) -> Result<Self> {
        let mut doc = KvDoc { origin: path.display().to_string(), ..Default::default() };
        doc.merge_file(path, 0)?;
        Ok(doc)
    }

    fn merge_file(&mut self, path: &Path, depth: usize) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.to_path_buf())
            } else {
                e.into()
            }
        })?;
        let origin = path.display().to_string();
        self.merge_text(&text, &origin, path.parent(), depth)
    }

    fn merge_text(&mut self, text: &str, origin: &str, dir: Option<&Path>, depth: usize) -> Result<()> {
        let mut included = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { path: origin.to_string(), line: line_no, msg };
            if let Some(rest) = line.strip_prefix("@include") {
                let Some(dir) = dir else {
                    return Err(err("@include is only allowed in files".into()));
                };
                if included {
                    return Err(err("only one @include directive is allowed".into()));
                }
                if depth > 0 {
                    return Err(err("included documents may not include others".into()));
                }
                let target = rest.trim();
                if target.is_empty() {
                    return Err(err("@include needs a path".into()));
                }
                included = true;
                self.merge_file(&dir.join(target), depth + 1)
                    .map_err(|e| err(format!("while including {target}: {e}")))?;
                continue;
            }
            let Some((name, value)) = line.split_once('=') else {
                return Err(err(format!("expected `name = value`, found `{line}`")));
            };
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(err(format!("invalid parameter name `{name}`")));
            }
            self.entries.insert(
                name.to_string(),
                Entry { value: value.trim().to_string(), origin: origin.to_string(), line: line_no },
            );
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|e| e.value.as_str())
    }

    /// Parses `name` if present.
    pub fn get<T: FromStr>(&self, name: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(name) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| Error::Parse {
                path: e.origin.clone(),
                line: e.line,
                msg: format!("bad value for `{name}`: {err}"),
            }),
        }
    }

    /// Parses `name` or reports it as missing.
    pub fn require<T: FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(name)?.ok_or_else(|| Error::Parse {
            path: self.origin.clone(),
            line: 0,
            msg: format!("missing required parameter `{name}`"),
        })
    }

    /// Overwrites `*slot` when `name` is present.
    pub fn set<T: FromStr>(&self, name: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(name)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on the first key not listed in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (name, e) in &self.entries {
            if !known.contains(&name.as_str()) {
                return Err(Error::Parse {
                    path: e.origin.clone(),
                    line: e.line,
                    msg: format!("unknown parameter `{name}`"),
                });
            }
        }
        Ok(())
    }

    /// Resolves a path-valued entry relative to the file that defined it.
    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let e = self.entries.get(name)?;
        let p = PathBuf::from(&e.value);
        if p.is_absolute() {
            return Some(p);
        }
        let base = Path::new(&e.origin).parent().unwrap_or(Path::new("."));
        Some(base.join(p))
    }
}

/// Builds a document in insertion order.
#[derive(Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn put(&mut self, name: &str, value: impl Display) -> &mut Self {
        self.out.push_str(&format!("{name} = {value}\n"));
        self
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_line_numbers() {
        let doc = KvDoc::parse("# header\na = 1.5\n\nb=true # trailing\n", "t").unwrap();
        assert_eq!(doc.require::<f64>("a").unwrap(), 1.5);
        assert!(doc.require::<bool>("b").unwrap());

        let err = KvDoc::parse("a = 1\nnot a pair\n", "cfg.kv").unwrap_err();
        assert_eq!(err.to_string(), "cfg.kv:2: expected `name = value`, found `not a pair`");

        let doc = KvDoc::parse("a = 1\nb = x\n", "cfg.kv").unwrap();
        let err = doc.require::<f64>("b").unwrap_err();
        assert!(err.to_string().starts_with("cfg.kv:2:"), "{err}");
        assert!(doc.reject_unknown(&["a"]).is_err());
    }

    #[test]
    fn include_is_overridden_by_later_lines() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("base.kv"), "a = 1\nb = 2\n").unwrap();
        std::fs::write(dir.path().join("top.kv"), "@include base.kv\nb = 3\n").unwrap();
        let doc = KvDoc::load(&dir.path().join("top.kv")).unwrap();
        assert_eq!(doc.require::<i32>("a").unwrap(), 1);
        assert_eq!(doc.require::<i32>("b").unwrap(), 3);

        std::fs::write(dir.path().join("bad.kv"), "@include base.kv\n@include base.kv\n").unwrap();
        assert!(KvDoc::load(&dir.path().join("bad.kv")).is_err());
    }

    #[test]
    fn floats_roundtrip_through_writer() {
        let x: f64 = 0.1 + 0.2;
        let text = KvWriter::default().put("x", x).finish();
        let doc = KvDoc::parse(&text, "w").unwrap();
        assert_eq!(doc.require::<f64>("x").unwrap().to_bits(), x.to_bits());
    }
}
