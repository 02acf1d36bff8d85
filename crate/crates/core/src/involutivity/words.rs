//! Bracket words over a frame and its conjugate, and the transverse recipe.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::field::{CVector, Chart, Field, RealPart};
use crate::error::{Error, Result};
use crate::geometry::Problem;
use crate::linalg::{self, CMat, CVec};

/// A candidate is kept only if it adds a component of at least this size
/// outside the current span. Finite-difference brackets that vanish
/// analytically come out at about 1e-8.
pub const SPAN_GAIN_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub idx: usize,
    pub bar: bool,
}

impl Letter {
    fn from_rank(k: usize, r: usize) -> Letter {
        Letter { idx: k % r, bar: k >= r }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Word {
    Letter(Letter),
    Bracket(Box<Word>, Box<Word>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alphabet {
    S,
    N,
}

impl Word {
    pub fn letter(idx: usize, bar: bool) -> Word {
        Word::Letter(Letter { idx, bar })
    }

    pub fn bracket(a: Word, b: Word) -> Word {
        Word::Bracket(Box::new(a), Box::new(b))
    }

    pub fn len(&self) -> usize {
        match self {
            Word::Letter(_) => 1,
            Word::Bracket(a, b) => a.len() + b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_field(&self, alphabet: Alphabet) -> Field {
        match self {
            Word::Letter(l) => {
                let f = match alphabet {
                    Alphabet::S => Field::S(l.idx),
                    Alphabet::N => Field::N(l.idx),
                };
                if l.bar {
                    f.conj()
                } else {
                    f
                }
            }
            Word::Bracket(a, b) => Field::bracket(a.to_field(alphabet), b.to_field(alphabet)),
        }
    }

    pub fn display(&self, alphabet: Alphabet) -> String {
        let sym = match alphabet {
            Alphabet::S => 's',
            Alphabet::N => 'n',
        };
        match self {
            Word::Letter(l) if l.bar => format!("{sym}bar{}", l.idx + 1),
            Word::Letter(l) => format!("{sym}{}", l.idx + 1),
            Word::Bracket(a, b) => format!("[{},{}]", a.display(alphabet), b.display(alphabet)),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display(Alphabet::N))
    }
}

/// Right-normed bracket words of lengths `2..=max_len` over `r` letters and
/// their conjugates.
///
/// Length 2 keeps `[a,b]` with `a < b`; length 3 keeps `[x,[y,z]]` with
/// `y < z` and `x <= z`, which is a basis of the degree-3 part of the free
/// Lie algebra. Longer words are all right-normed extensions; duplicates
/// there are tolerated.
pub fn enumerate_words(r: usize, max_len: usize) -> Vec<Word> {
    let k = 2 * r;
    let lt = |i: usize| Word::Letter(Letter::from_rank(i, r));
    let mut out = Vec::new();
    let mut prev: Vec<Word> = Vec::new();
    for len in 2..=max_len {
        let mut cur = Vec::new();
        match len {
            2 => {
                for a in 0..k {
                    for b in a + 1..k {
                        cur.push(Word::bracket(lt(a), lt(b)));
                    }
                }
            }
            3 => {
                for y in 0..k {
                    for z in y + 1..k {
                        for x in 0..=z {
                            cur.push(Word::bracket(lt(x), Word::bracket(lt(y), lt(z))));
                        }
                    }
                }
            }
            _ => {
                for x in 0..k {
                    for w in &prev {
                        cur.push(Word::bracket(lt(x), w.clone()));
                    }
                }
            }
        }
        out.extend(cur.iter().cloned());
        prev = cur;
    }
    out
}

/// One transverse field: a real combination of a bracket word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeEntry {
    pub word: Word,
    pub part: RealPart,
}

impl RecipeEntry {
    pub fn to_field(&self, alphabet: Alphabet) -> Field {
        Field::Real(Box::new(self.word.to_field(alphabet)), self.part)
    }

    pub fn display(&self, alphabet: Alphabet) -> String {
        let w = self.word.display(alphabet);
        match self.part {
            RealPart::Sum => format!("{w} + conj({w})"),
            RealPart::Diff => format!("i({w} - conj({w}))"),
        }
    }
}

/// Words defining `t_1..t_c` over `s` (and `T_1..T_c` over `n`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseRecipe {
    pub entries: Vec<RecipeEntry>,
    /// Smallest singular value of `{s, s̄, t}` at the point it was found.
    pub min_sv: f64,
}

impl TransverseRecipe {
    pub fn fields(&self, alphabet: Alphabet) -> Vec<Field> {
        self.entries.iter().map(|e| e.to_field(alphabet)).collect()
    }
}

/// Columns `[s_i; 0]` and `[0; conj s_i]` of the horizontal frame at the
/// chart base, stacked as `[hol; anti]`.
fn horizontal_columns(s: &CMat) -> Vec<CVec> {
    let l = s.nrows();
    let mut cols = Vec::new();
    for i in 0..s.ncols() {
        cols.push(CVector::holomorphic(s.column(i).into_owned()).stacked());
    }
    for i in 0..s.ncols() {
        cols.push(CVector { hol: CVec::zeros(l), anti: s.column(i).map(|c| c.conj()) }.stacked());
    }
    cols
}

fn as_matrix(cols: &[CVec], rows: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Norm of the part of `v` orthogonal to the orthonormal columns `q`.
fn gain(q: &[CVec], v: &CVec) -> (f64, CVec) {
    let mut r = v.clone();
    for _ in 0..2 {
        for e in q {
            let c = e.dotc(&r);
            r -= e * c;
        }
    }
    (r.norm(), r)
}

/// Smallest singular value of `{s_i, s̄_i, t_j}` at the chart base for the
/// stacked transverse values `t`.
pub fn span_min_sv(s: &CMat, t: &[CVector]) -> f64 {
    let mut cols = horizontal_columns(s);
    cols.extend(t.iter().map(|v| v.stacked()));
    linalg::min_singular_value(&as_matrix(&cols, 2 * s.nrows()))
}

/// Greedy search for `c` real bracket combinations completing
/// `{s_i, s̄_i}` to a basis of ℂT_zS.
pub fn find_transverse_recipe(prob: &Problem, z0: &CVec) -> Result<TransverseRecipe> {
    let chart = Chart::on_s(prob, z0)?;
    let s = chart.horizontal(z0.as_slice())?;
    let r = prob.rank_h();
    let target = 2 * prob.l - prob.c;
    let mut ortho: Vec<CVec> = Vec::new();
    for col in horizontal_columns(&s) {
        let (g, rem) = gain(&ortho, &col);
        ortho.push(rem / crate::expr::C64::new(g, 0.0));
    }
    let mut entries = Vec::new();
    let mut values = Vec::new();
    'search: for w in enumerate_words(r, prob.tau) {
        let x = chart.at_base(&w.to_field(Alphabet::S))?;
        for part in [RealPart::Sum, RealPart::Diff] {
            if ortho.len() >= target {
                break 'search;
            }
            let xb = x.conj();
            let cand = match part {
                RealPart::Sum => x.clone() + xb,
                RealPart::Diff => (x.clone() - xb) * crate::expr::C64::i(),
            };
            let v = cand.stacked();
            let (g, rem) = gain(&ortho, &v);
            if g > SPAN_GAIN_TOL * v.norm().max(1.0) {
                ortho.push(rem / crate::expr::C64::new(g, 0.0));
                entries.push(RecipeEntry { word: w.clone(), part });
                values.push(cand);
            }
        }
    }
    if ortho.len() < target {
        return Err(Error::TypeDefect { tau: prob.tau });
    }
    let min_sv = span_min_sv(&s, &values);
    if min_sv <= prob.tol.rank_tol {
        return Err(Error::TypeDefect { tau: prob.tau });
    }
    Ok(TransverseRecipe { entries, min_sv })
}

/// Re-check a recipe at another point of S.
pub fn recipe_min_sv(prob: &Problem, recipe: &TransverseRecipe, z: &CVec) -> Result<f64> {
    let chart = Chart::on_s(prob, z)?;
    let s = chart.horizontal(z.as_slice())?;
    let t = recipe
        .fields(Alphabet::S)
        .iter()
        .map(|f| chart.at_base(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(span_min_sv(&s, &t))
}
