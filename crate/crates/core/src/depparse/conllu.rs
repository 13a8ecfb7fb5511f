//! Ten-column CoNLL-U (and CoNLL-X, whose fourth column is read as the
//! coarse tag). Multiword ranges and empty nodes are skipped.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{DepTree, TreeError};

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("sentence starting at line {line}: {source}")]
    Tree { line: usize, source: TreeError },
}

fn malformed(line: usize, msg: impl Into<String>) -> ConlluError {
    ConlluError::Malformed { line, msg: msg.into() }
}

#[derive(Default)]
struct Pending {
    start_line: usize,
    words: Vec<String>,
    upos: Vec<String>,
    heads: Vec<usize>,
    deprels: Vec<String>,
}

impl Pending {
    fn finish(self) -> Result<DepTree, ConlluError> {
        let tree = DepTree {
            words: self.words,
            upos: self.upos,
            heads: self.heads.iter().map(|&h| h.checked_sub(1)).collect(),
            deprels: self.deprels,
        };
        tree.check_acyclic().map_err(|source| ConlluError::Tree {
            line: self.start_line,
            source,
        })?;
        Ok(tree)
    }
}

/// Parses CoNLL-U text. Trees with several roots or crossing arcs are
/// accepted (see [`DepTree::is_single_rooted`] and
/// [`DepTree::is_projective`]); cycles and out-of-range heads are errors.
pub fn read_conllu_str(text: &str) -> Result<Vec<DepTree>, ConlluError> {
    let mut out = Vec::new();
    let mut cur = Pending::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() {
            if !cur.words.is_empty() {
                out.push(std::mem::take(&mut cur).finish()?);
            }
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 10 {
            return Err(malformed(line, format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| malformed(line, format!("bad token id {:?}", cols[0])))?;
        if cur.words.is_empty() {
            cur.start_line = line;
        }
        if id != cur.words.len() + 1 {
            return Err(malformed(line, format!("token id {id} out of sequence")));
        }
        let head: usize = cols[6].parse().map_err(|_| malformed(line, format!("bad head {:?}", cols[6])))?;
        cur.words.push(cols[1].to_string());
        cur.upos.push(cols[3].to_string());
        cur.heads.push(head);
        cur.deprels.push(cols[7].to_string());
    }
    if !cur.words.is_empty() {
        out.push(cur.finish()?);
    }
    Ok(out)
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Vec<DepTree>, ConlluError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConlluError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_conllu_str(&text)
}

pub fn write_conllu_string(trees: &[DepTree]) -> String {
    let mut s = String::new();
    for t in trees {
        for i in 0..t.len() {
            let head = t.heads[i].map_or(0, |h| h + 1);
            let rel = t.deprels.get(i).map_or("_", String::as_str);
            let rel = if rel.is_empty() { "_" } else { rel };
            writeln!(s, "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_", i + 1, t.words[i], t.upos[i], head, rel).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_conllu(trees: &[DepTree], path: impl AsRef<Path>) -> Result<(), ConlluError> {
    let path = path.as_ref();
    std::fs::write(path, write_conllu_string(trees)).map_err(|source| ConlluError::Io {
        path: path.display().to_string(),
        source,
    })
}
