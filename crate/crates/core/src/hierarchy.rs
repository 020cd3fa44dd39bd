//! Slash-delimited type inventories: `/person`, `/person/artist`, ...
//!
//! A `TypeHierarchy` assigns every type path a dense index `0..k`. Paths are
//! kept in lexicographic order, which puts every parent before its children
//! because a parent is a strict prefix of its child.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TypeHierarchy {
    paths: Vec<String>,
    parent: Vec<Option<usize>>,
    index: HashMap<String, usize>,
}

impl TypeHierarchy {
    /// Builds a hierarchy from explicit type paths. Parents that are implied
    /// by a path but never listed are inserted automatically; listing the
    /// same path twice is an error.
    pub fn from_paths<I, S>(paths: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut all: Vec<String> = Vec::new();
        for (lineno, raw) in paths.into_iter().enumerate() {
            let path = raw.as_ref().trim_end_matches(['\r', '\n']).to_string();
            if path.is_empty() {
                continue;
            }
            check_path_syntax(&path).map_err(|e| match e {
                Error::Hierarchy(msg) => Error::Hierarchy(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
            if seen.insert(path.clone(), lineno).is_some() {
                return Err(Error::Hierarchy(format!(
                    "line {}: duplicate type path {path}",
                    lineno + 1
                )));
            }
            for anc in ancestor_paths(&path) {
                if !seen.contains_key(&anc) && !all.contains(&anc) {
                    all.push(anc);
                }
            }
            all.push(path);
        }
        if all.is_empty() {
            return Err(Error::Hierarchy("no type paths given".into()));
        }
        all.sort();
        all.dedup();

        let index: HashMap<String, usize> = all
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let parent = all
            .iter()
            .map(|p| parent_path(p).map(|pp| index[&pp]))
            .collect();
        Ok(TypeHierarchy {
            paths: all,
            parent,
            index,
        })
    }

    /// Reads a hierarchy file: one type path per line, UTF-8.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_paths(text.lines())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for p in &self.paths {
            writeln!(out, "{p}").expect("write to string");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Number of types, counting implied parents.
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, idx: usize) -> &str {
        &self.paths[idx]
    }

    pub fn paths(&self) -> &[String] {
        &self.paths
    }

    pub fn index_of(&self, path: &str) -> Option<usize> {
        self.index.get(path).copied()
    }

    /// Parent index, `None` for root types. Parents always have a smaller
    /// index than their children.
    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    /// Indices of all strict ancestors, nearest first.
    pub fn ancestors(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parent[idx];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }

    /// The type itself plus all its ancestors, sorted by index.
    pub fn expand_path(&self, idx: usize) -> Vec<usize> {
        let mut out = self.ancestors(idx);
        out.push(idx);
        out.sort_unstable();
        out
    }

    pub fn is_strict_ancestor(&self, anc: usize, idx: usize) -> bool {
        self.ancestors(idx).contains(&anc)
    }

    fn check_members(&self, candidates: &[usize]) -> Result<()> {
        for &c in candidates {
            if c >= self.len() {
                return Err(Error::UnknownType(format!(
                    "index {c} out of range for {} types",
                    self.len()
                )));
            }
        }
        Ok(())
    }

    /// Checks that every member's parent is also in the set.
    pub fn check_closed(&self, candidates: &[usize]) -> Result<()> {
        self.check_members(candidates)?;
        for &c in candidates {
            if let Some(p) = self.parent[c] {
                if !candidates.contains(&p) {
                    return Err(Error::validation(format!(
                        "candidate set not ancestor-closed: {} present without parent {}",
                        self.paths[c], self.paths[p]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Members of an ancestor-closed candidate set that have no descendant
    /// in the set, sorted and deduplicated. These are the types the sample
    /// might actually carry.
    pub fn terminal_types(&self, candidates: &[usize]) -> Result<Vec<usize>> {
        if candidates.is_empty() {
            return Err(Error::validation("candidate set is empty"));
        }
        self.check_closed(candidates)?;
        let mut out: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&c| {
                !candidates
                    .iter()
                    .any(|&other| other != c && self.is_strict_ancestor(c, other))
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// A sample is clean when its candidates pin down exactly one terminal
    /// type.
    pub fn is_clean(&self, candidates: &[usize]) -> Result<bool> {
        Ok(self.terminal_types(candidates)?.len() == 1)
    }
}

fn check_path_syntax(path: &str) -> Result<()> {
    if !path.starts_with('/') {
        return Err(Error::Hierarchy(format!(
            "type path must start with '/': {path}"
        )));
    }
    if path.len() == 1 || path.ends_with('/') || path.contains("//") {
        return Err(Error::Hierarchy(format!("malformed type path: {path}")));
    }
    Ok(())
}

/// `/a/b/c` -> `[/a, /a/b]`, outermost first.
fn ancestor_paths(path: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let segments: Vec<&str> = path[1..].split('/').collect();
    for seg in &segments[..segments.len() - 1] {
        cur.push('/');
        cur.push_str(seg);
        out.push(cur.clone());
    }
    out
}

fn parent_path(path: &str) -> Option<String> {
    path.rfind('/').filter(|&i| i > 0).map(|i| path[..i].to_string())
}
