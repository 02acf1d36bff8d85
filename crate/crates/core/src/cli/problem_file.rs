//! Flat `key = value` problem files.
//!
//! ```text
//! l = 2
//! q1 = "(w1 - z1)*conj(w1 - z1) - 1"
//! seed.base = "z=(1, 0); w=(2)"
//! path.quarter = "(cos(t), sin(t)) on [0, 1.5707963267948966] project"
//! expect.base = "(z1 + 1)"
//! tol.trace = 1e-6
//! ```

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use thiserror::Error;

use crate::expr::{parse, Dims, ExprError, Expression, Point, C64};
use crate::geometry::Problem;
use crate::linalg::CVec;
use crate::tracer::PathSpec;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error(transparent)]
    Invalid(#[from] crate::Error),
}

type Result<T> = std::result::Result<T, FileError>;

#[derive(Clone, Debug)]
pub struct NamedPath {
    pub source: String,
    pub spec: PathSpec,
}

/// A loaded and validated problem file.
#[derive(Clone, Debug)]
pub struct ProblemFile {
    pub name: String,
    pub problem: Problem,
    /// In file order.
    pub seeds: Vec<(String, Point)>,
    pub paths: Vec<(String, NamedPath)>,
    /// Closed forms `w = f(z)` keyed by seed name.
    pub expect: BTreeMap<String, Vec<Expression>>,
    pub tol: BTreeMap<String, f64>,
}

impl ProblemFile {
    pub fn seed(&self, name: &str) -> Option<&Point> {
        self.seeds.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn path(&self, name: &str) -> Option<&NamedPath> {
        self.paths.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn tol_or(&self, key: &str, default: f64) -> f64 {
        self.tol.get(key).copied().unwrap_or(default)
    }
}

pub fn load(path: &FsPath) -> Result<ProblemFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FileError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_str(&name, &text)
}

/// A raw entry: value text plus its 1-based position.
struct Entry {
    line: usize,
    column: usize,
    value: String,
}

impl Entry {
    fn err(&self, offset: usize, message: impl Into<String>) -> FileError {
        FileError::Syntax { line: self.line, column: self.column + offset, message: message.into() }
    }

    /// Contents of a quoted value, with the column offset of its first char.
    fn quoted(&self) -> Result<(&str, usize)> {
        let v = self.value.as_str();
        if v.len() < 2 || !v.starts_with('"') || !v.ends_with('"') {
            return Err(self.err(0, "expected a quoted string"));
        }
        Ok((&v[1..v.len() - 1], 1))
    }

    fn expr(&self, src: &str, offset: usize, dims: Dims) -> Result<Expression> {
        parse(src, dims).map_err(|e| match e {
            ExprError::Syntax { pos, msg } => self.err(offset + pos, msg),
            other => self.err(offset, other.to_string()),
        })
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

pub fn parse_str(name: &str, text: &str) -> Result<ProblemFile> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        let Some(eq) = line.find('=') else {
            return Err(FileError::Syntax { line: ln + 1, column: lead + 1, message: "expected `key = value`".into() });
        };
        let key = line[..eq].trim().to_string();
        let after = &line[eq + 1..];
        let vstart = eq + 1 + (after.len() - after.trim_start().len());
        let value = after.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(FileError::Syntax { line: ln + 1, column: lead + 1, message: "empty key or value".into() });
        }
        if entries.contains_key(&key) {
            return Err(FileError::Syntax { line: ln + 1, column: lead + 1, message: format!("duplicate key `{key}`") });
        }
        order.push(key.clone());
        entries.insert(key, Entry { line: ln + 1, column: vstart + 1, value });
    }

    let int = |k: &str| -> Result<usize> {
        let e = entries.get(k).ok_or_else(|| FileError::MissingKey(k.into()))?;
        e.value.parse::<usize>().map_err(|_| e.err(0, format!("`{k}` must be a non-negative integer")))
    };
    let (l, m, c, d, tau) = (int("l")?, int("m")?, int("c")?, int("d")?, int("tau")?);

    let mut p = Vec::new();
    let mut q = Vec::new();
    for (prefix, count, dims, out) in [("p", c, Dims::new(l, 0), &mut p), ("q", d, Dims::new(l, m), &mut q)] {
        for i in 1..=count {
            let k = format!("{prefix}{i}");
            let e = entries.get(&k).ok_or_else(|| FileError::MissingKey(k.clone()))?;
            let (src, off) = e.quoted()?;
            out.push(e.expr(src, off, dims)?);
        }
    }
    let problem = Problem::new(l, m, c, d, tau, p, q)?;

    let mut file = ProblemFile {
        name: name.to_string(),
        problem,
        seeds: Vec::new(),
        paths: Vec::new(),
        expect: BTreeMap::new(),
        tol: BTreeMap::new(),
    };
    for key in &order {
        let e = &entries[key];
        if ["l", "m", "c", "d", "tau"].contains(&key.as_str()) {
            continue;
        }
        if let Some(i) = indexed(key, "p") {
            if i == 0 || i > c {
                return Err(e.err(0, format!("`{key}` is outside p1..p{c}")));
            }
            continue;
        }
        if let Some(i) = indexed(key, "q") {
            if i == 0 || i > d {
                return Err(e.err(0, format!("`{key}` is outside q1..q{d}")));
            }
            continue;
        }
        let Some((kind, tail)) = key.split_once('.') else {
            return Err(e.err(0, format!("unknown key `{key}`")));
        };
        if tail.is_empty() {
            return Err(e.err(0, format!("`{key}` needs a name")));
        }
        match kind {
            "seed" => file.seeds.push((tail.into(), parse_seed(e, l, m)?)),
            "path" => file.paths.push((tail.into(), parse_path(e, l)?)),
            "expect" => {
                let (src, off) = e.quoted()?;
                let items = parse_tuple(e, src, off)?;
                if items.len() != m {
                    return Err(e.err(off, format!("expected {m} components, got {}", items.len())));
                }
                let ex = items.iter().map(|(s, o)| e.expr(s, *o, Dims::new(l, 0))).collect::<Result<Vec<_>>>()?;
                file.expect.insert(tail.into(), ex);
            }
            "tol" => {
                let v: f64 = e.value.parse().map_err(|_| e.err(0, "tolerance must be a number"))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(e.err(0, "tolerance must be finite and non-negative"));
                }
                file.tol.insert(tail.into(), v);
            }
            _ => return Err(e.err(0, format!("unknown key `{key}`"))),
        }
    }
    Ok(file)
}

fn indexed(key: &str, prefix: &str) -> Option<usize> {
    let rest = key.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Split `( a, b(c, d), e )` at top-level commas. Returns trimmed items
/// with their offsets relative to the start of `src` plus `base`.
fn parse_tuple(e: &Entry, src: &str, base: usize) -> Result<Vec<(String, usize)>> {
    let (inner, ioff, rest) = paren_group(e, src, base)?;
    if !rest.trim().is_empty() {
        return Err(e.err(base + src.len() - rest.len(), "unexpected text after `)`"));
    }
    Ok(split_top(inner, ioff))
}

/// Leading parenthesized group of `src`: its interior, the interior's offset,
/// and the remainder after `)`.
fn paren_group<'s>(e: &Entry, src: &'s str, base: usize) -> Result<(&'s str, usize, &'s str)> {
    let lead = src.len() - src.trim_start().len();
    let s = &src[lead..];
    if !s.starts_with('(') {
        return Err(e.err(base + lead, "expected `(`"));
    }
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((&s[1..i], base + lead + 1, &s[i + 1..]));
                }
            }
            _ => {}
        }
    }
    Err(e.err(base + lead, "unbalanced parentheses"))
}

fn split_top(inner: &str, off: usize) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut push = |a: usize, b: usize| {
        let piece = &inner[a..b];
        let lead = piece.len() - piece.trim_start().len();
        out.push((piece.trim().to_string(), off + a + lead));
    };
    for (i, ch) in inner.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                push(start, i);
                start = i + 1;
            }
            _ => {}
        }
    }
    push(start, inner.len());
    out
}

/// Complex literal `a`, `bi`, `a+bi`, `a-bi` (`i` alone means `1i`).
pub fn parse_complex(text: &str) -> Option<C64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let Some(body) = s.strip_suffix('i') else {
        return finite(s.parse().ok()?).map(|re| C64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (finite(body[..k].parse().ok()?)?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => finite(t.parse().ok()?)?,
    };
    Some(C64::new(re, im))
}

fn parse_seed(e: &Entry, l: usize, m: usize) -> Result<Point> {
    let (src, off) = e.quoted()?;
    let mut z: Option<CVec> = None;
    let mut w: Option<CVec> = None;
    let mut pos = 0;
    for part in src.split(';') {
        let here = off + pos;
        pos += part.len() + 1;
        let Some((name, val)) = part.split_once('=') else {
            return Err(e.err(here, "expected `z=(...)` or `w=(...)`"));
        };
        let voff = here + name.len() + 1;
        let items = parse_tuple(e, val, voff)?;
        let mut vals = Vec::with_capacity(items.len());
        for (s, o) in &items {
            vals.push(parse_complex(s).ok_or_else(|| e.err(*o, format!("bad complex literal `{s}`")))?);
        }
        let (slot, want) = match name.trim() {
            "z" => (&mut z, l),
            "w" => (&mut w, m),
            other => return Err(e.err(here, format!("unknown seed component `{other}`"))),
        };
        if vals.len() != want {
            return Err(e.err(voff, format!("expected {want} components, got {}", vals.len())));
        }
        if slot.is_some() {
            return Err(e.err(here, "component given twice"));
        }
        *slot = Some(CVec::from_vec(vals));
    }
    match (z, w) {
        (Some(z), Some(w)) => Ok(Point::new(z, w)),
        _ => Err(e.err(off, "seed needs both z and w")),
    }
}

fn parse_path(e: &Entry, l: usize) -> Result<NamedPath> {
    let (src, off) = e.quoted()?;
    let (inner, ioff, rest) = paren_group(e, src, off)?;
    let items = split_top(inner, ioff);
    if items.len() != l {
        return Err(e.err(ioff, format!("expected {l} components, got {}", items.len())));
    }
    for (s, o) in &items {
        e.expr(s, *o, Dims::path())?;
    }
    let roff = off + src.len() - rest.len();
    let rest_t = rest.trim();
    let Some(after_on) = rest_t.strip_prefix("on") else {
        return Err(e.err(roff, "expected `on [t0, t1]`"));
    };
    let after_on = after_on.trim_start();
    let (Some(open), Some(close)) = (after_on.find('['), after_on.find(']')) else {
        return Err(e.err(roff, "expected `[t0, t1]`"));
    };
    if open != 0 || close < open {
        return Err(e.err(roff, "expected `[t0, t1]`"));
    }
    let bounds: Vec<&str> = after_on[1..close].split(',').map(str::trim).collect();
    let nums: Vec<f64> = bounds.iter().filter_map(|b| b.parse::<f64>().ok()).filter(|v| v.is_finite()).collect();
    if bounds.len() != 2 || nums.len() != 2 || nums[0] >= nums[1] {
        return Err(e.err(roff, "interval must be `[t0, t1]` with finite t0 < t1"));
    }
    let project = match after_on[close + 1..].trim() {
        "" => false,
        "project" => true,
        other => return Err(e.err(roff, format!("unexpected `{other}`"))),
    };
    let srcs: Vec<&str> = items.iter().map(|(s, _)| s.as_str()).collect();
    let spec = PathSpec::parse(&srcs, nums[0], nums[1], project)?;
    Ok(NamedPath { source: src.to_string(), spec })
}
