//! Pretrained word vectors in the common text and binary layouts.
//!
//! Both layouts start with an ASCII `vocab_size dim` line. The text layout
//! follows with `term v1 ... vdim` per line; the binary layout follows with,
//! per entry, the term bytes, one space, `dim` little-endian `f32` values and
//! an optional newline.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::lexicons::Loaded;
use crate::{Diagnostic, Error, Result, Scalar};

/// Dense term → vector table. Lookups try the exact term first, then its
/// lowercase form.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    index: HashMap<String, usize>,
    terms: Vec<String>,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            index: HashMap::new(),
            terms: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Insert a vector; returns `false` (and keeps the first vector) when the
    /// term is already present.
    pub fn insert(&mut self, term: impl Into<String>, vector: &[T]) -> bool {
        assert_eq!(vector.len(), self.dim, "vector dimension mismatch");
        let term = term.into();
        if self.index.contains_key(&term) {
            return false;
        }
        self.index.insert(term.clone(), self.terms.len());
        self.terms.push(term);
        self.data.extend_from_slice(vector);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `None` for out-of-vocabulary terms; there is no default vector.
    pub fn get(&self, term: &str) -> Option<&[T]> {
        if let Some(&i) = self.index.get(term) {
            return Some(self.row(i));
        }
        let lower = term.to_lowercase();
        if lower != term {
            self.index.get(&lower).map(|&i| self.row(i))
        } else {
            None
        }
    }

    pub fn contains(&self, term: &str) -> bool {
        self.get(term).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> + '_ {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), self.row(i)))
    }

    /// Copy with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            dim: self.dim,
            index: self.index.clone(),
            terms: self.terms.clone(),
            data: self.data.iter().map(|&x| x * factor).collect(),
        }
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (term, vector) in self.iter() {
            write!(out, "{term}")?;
            for x in vector {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (term, vector) in self.iter() {
            out.write_all(term.as_bytes())?;
            out.write_all(b" ")?;
            for x in vector {
                let value = x.to_f32().unwrap_or(f32::NAN);
                out.write_all(&value.to_le_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    Text,
    Binary,
    /// `.bin` extension means binary, anything else text.
    #[default]
    Auto,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "binary" => Ok(Self::Binary),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Config(format!("unknown embedding format `{other}`"))),
        }
    }
}

fn keep(filter: Option<&HashSet<String>>, term: &str) -> bool {
    filter.is_none_or(|f| f.contains(term) || f.contains(&term.to_lowercase()))
}

/// Load vectors, keeping only terms in `filter` (or their lowercase forms)
/// when one is given.
pub fn load_embeddings<T: Scalar>(
    path: &Path,
    format: EmbeddingFormat,
    filter: Option<&HashSet<String>>,
) -> Result<Loaded<EmbeddingStore<T>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let binary = match format {
        EmbeddingFormat::Binary => true,
        EmbeddingFormat::Text => false,
        EmbeddingFormat::Auto => path.extension().is_some_and(|e| e == "bin"),
    };
    let result = if binary {
        read_binary(reader, filter)
    } else {
        read_text(reader, filter)
    };
    result.map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::DimensionMismatch { line, .. } => Error::parse(path, line, e.to_string()),
        Error::Parse { line, message, .. } => Error::parse(path, line, message),
        other => other,
    })
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let n = parts.next()?.parse().ok()?;
    let dim = parts.next()?.parse().ok()?;
    if parts.next().is_some() || dim == 0 {
        return None;
    }
    Some((n, dim))
}

/// Text layout. A file whose first line is already a vector row (GloVe
/// style) is accepted too; its dimension comes from that row.
pub fn read_text<T: Scalar, R: BufRead>(
    reader: R,
    filter: Option<&HashSet<String>>,
) -> Result<Loaded<EmbeddingStore<T>>> {
    let mut lines = reader.lines().enumerate().peekable();
    let mut expected_rows = None;
    let mut store: Option<EmbeddingStore<T>> = None;
    if let Some((_, Ok(first))) = lines.peek() {
        if let Some((n, dim)) = parse_header(first) {
            expected_rows = Some(n);
            store = Some(EmbeddingStore::new(dim));
            lines.next();
        }
    }

    let mut diagnostics = Vec::new();
    let mut rows = 0usize;
    let mut buf = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let Some(term) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        let store = store.get_or_insert_with(|| EmbeddingStore::new(values.len().max(1)));
        if values.len() != store.dim() {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: store.dim(),
                found: values.len(),
            });
        }
        if !keep(filter, term) {
            continue;
        }
        buf.clear();
        for v in values {
            let x: T = v
                .parse()
                .map_err(|_| Error::parse("<embeddings>", line_no, format!("bad number `{v}`")))?;
            buf.push(x);
        }
        if !store.insert(term, &buf) {
            log::warn!("duplicate embedding term `{term}` at line {line_no}; keeping the first");
            diagnostics.push(Diagnostic::new(line_no, format!("duplicate term `{term}`")));
        }
    }
    if let Some(n) = expected_rows {
        if n != rows {
            diagnostics.push(Diagnostic::new(
                1,
                format!("header announces {n} rows, file has {rows}"),
            ));
        }
    }
    let store = store.ok_or_else(|| Error::parse("<embeddings>", 1, "empty embedding file"))?;
    Ok(Loaded {
        value: store,
        diagnostics,
        dropped_multiword: 0,
    })
}

/// Binary layout; see the module docs.
pub fn read_binary<T: Scalar, R: BufRead>(
    mut reader: R,
    filter: Option<&HashSet<String>>,
) -> Result<Loaded<EmbeddingStore<T>>> {
    let io = |e| Error::io("<embeddings>", e);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io)?;
    let (n, dim) = parse_header(&header)
        .ok_or_else(|| Error::parse("<embeddings>", 1, "expected `vocab_size dim` header"))?;

    let mut store = EmbeddingStore::new(dim);
    let mut diagnostics = Vec::new();
    let mut term = Vec::new();
    let mut raw = vec![0u8; 4 * dim];
    let mut values = Vec::with_capacity(dim);
    for entry in 0..n {
        // Entry numbers stand in for line numbers in diagnostics.
        let entry_no = entry + 2;
        term.clear();
        loop {
            let mut byte = [0u8; 1];
            match reader.read(&mut byte).map_err(io)? {
                0 => {
                    return Err(Error::parse(
                        "<embeddings>",
                        entry_no,
                        format!("file ends after {entry} of {n} entries"),
                    ))
                }
                _ if byte[0] == b' ' => break,
                _ if byte[0] == b'\n' && term.is_empty() => continue,
                _ => term.push(byte[0]),
            }
        }
        reader.read_exact(&mut raw).map_err(|_| {
            Error::parse(
                "<embeddings>",
                entry_no,
                format!("truncated vector for entry {}", entry + 1),
            )
        })?;
        let word = String::from_utf8_lossy(&term).into_owned();
        if !keep(filter, &word) {
            continue;
        }
        values.clear();
        values.extend(raw.chunks_exact(4).map(|c| {
            let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            T::from_f32(x).unwrap_or_else(T::nan)
        }));
        if !store.insert(word.clone(), &values) {
            diagnostics.push(Diagnostic::new(entry_no, format!("duplicate term `{word}`")));
        }
    }
    Ok(Loaded {
        value: store,
        diagnostics,
        dropped_multiword: 0,
    })
}

/// Cosine similarity, clamped to `[-1, 1]`. `None` when either vector is zero.
///
/// # Panics
///
/// If the slices differ in length.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Option<T> {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different dimensions");
    let (mut dot, mut uu, mut vv) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in u.iter().zip(v) {
        dot = dot + a * b;
        uu = uu + a * a;
        vv = vv + b * b;
    }
    if uu == T::zero() || vv == T::zero() {
        return None;
    }
    let c = dot / (uu.sqrt() * vv.sqrt());
    Some(c.max(-T::one()).min(T::one()))
}

pub fn norm<T: Scalar>(u: &[T]) -> T {
    u.iter().map(|&x| x * x).sum::<T>().sqrt()
}
