//! Brackets of the frame fields on a chart of M: membership of brackets in
//! V ⊕ V̄, involutivity of N, and the wedge-determinant condition on
//! commutators.

mod field;
mod words;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{CVector, Chart, CustomFn, Field, RealPart, H_FD};
pub use words::{
    enumerate_words, find_transverse_recipe, recipe_min_sv, span_min_sv, Alphabet, Letter, RecipeEntry,
    TransverseRecipe, Word, SPAN_GAIN_TOL,
};

use crate::error::{Error, Result};
use crate::expr::{gradient, Point, C64};
use crate::geometry::{LiftSystem, Problem};
use crate::linalg::{self, CMat, CVec};

/// Default cap on the number of word tuples in the wedge check.
pub const TUPLE_CAP: usize = 100_000;
/// Words shorter than this in norm are treated as zero.
const ZERO_WORD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

/// A residual check over a family of items.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub verdict: Verdict,
    pub max_residual: f64,
    pub tol: f64,
    pub items: Vec<(String, f64)>,
}

impl ResidualReport {
    fn vacuous(tol: f64) -> Self {
        ResidualReport { verdict: Verdict::Vacuous, max_residual: 0.0, tol, items: Vec::new() }
    }

    fn from_items(items: Vec<(String, f64)>, tol: f64) -> Self {
        let max_residual = items.iter().map(|(_, r)| *r).fold(0.0, f64::max);
        let verdict = if max_residual <= tol { Verdict::Pass } else { Verdict::Fail };
        ResidualReport { verdict, max_residual, tol, items }
    }
}

/// Norm of the part of `v` outside V ⊕ V̄, with V spanned by the orthonormal
/// columns of `vb` (w-block only).
fn outside_v(prob: &Problem, vb: &CMat, v: &CVector) -> f64 {
    let (l, m) = (prob.l, prob.m);
    let z = v.block(0, l);
    let w = v.block(l, m);
    let vc = vb.map(|c| c.conj());
    let hol_out = &w.hol - vb * (vb.adjoint() * &w.hol);
    let anti_out = &w.anti - &vc * (vc.adjoint() * &w.anti);
    (z.hol.norm_squared() + z.anti.norm_squared() + hol_out.norm_squared() + anti_out.norm_squared()).sqrt()
}

/// `[T, v_i + v̄_j]` stays in V ⊕ V̄ for the commutator `T` of the `n`-frame.
/// Vacuous when m = d.
pub fn check_lemma1(chart: &Chart, word: &Word, tol: f64) -> Result<ResidualReport> {
    let prob = chart.prob;
    if prob.m == prob.d {
        return Ok(ResidualReport::vacuous(tol));
    }
    let t = word.to_field(Alphabet::N);
    let vb = chart.vertical(&chart.base)?;
    let k = vb.ncols();
    let mut items = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let v = Field::Combo(vec![(C64::new(1.0, 0.0), Field::V(i)), (C64::new(1.0, 0.0), Field::V(j).conj())]);
            let br = chart.commutator(&t, &v)?;
            items.push((format!("[{word}, v{} + vbar{}]", i + 1, j + 1), outside_v(prob, &vb, &br)));
        }
    }
    Ok(ResidualReport::from_items(items, tol))
}

/// `[n_i, n_j]` lies in N at the chart base, for all `i < j`. The residual of
/// a pair is the largest of: least-squares misfit against the N frame, the
/// antiholomorphic part, and the violation of the lifting rows.
pub fn check_n_involutive(chart: &Chart, tol: f64) -> Result<ResidualReport> {
    let prob = chart.prob;
    let r = prob.rank_h();
    if r < 2 {
        return Ok(ResidualReport::vacuous(tol));
    }
    let frame = chart.n_frame(&chart.base)?;
    let sys = LiftSystem::at(prob, &chart.base_point())?;
    let pairs: Vec<(usize, usize)> = (0..r).tuple_combinations().collect();
    let items = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<(String, f64)> {
            let v = chart.commutator(&Field::N(i), &Field::N(j))?;
            Ok((format!("[n{}, n{}]", i + 1, j + 1), n_membership(prob, &sys, &frame, &v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::from_items(items, tol))
}

fn n_membership(prob: &Problem, sys: &LiftSystem, frame: &CMat, v: &CVector) -> f64 {
    let l = prob.l;
    let rhs = CMat::from_column_slice(v.len(), 1, v.hol.as_slice());
    let fit = linalg::lstsq(frame, &rhs, prob.tol.rank_tol).residual;
    let hz = v.hol.rows(0, l).into_owned();
    let hw = v.hol.rows(l, prob.m).into_owned();
    let rows = (&sys.on_a * hz + &sys.on_b * hw).norm();
    fit.max(v.anti.norm()).max(rows)
}

/// Outcome of the wedge-determinant check on commutators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    /// Largest normalized determinant over tuples and `k`.
    pub max_residual: f64,
    pub tol: f64,
    /// Longest word length checked.
    pub max_len: usize,
    pub words: usize,
    pub tuples: usize,
    pub worst: Vec<String>,
    pub note: String,
}

/// Pairing of a (1,0)-form given by its coefficients with a complex vector.
fn pair(form: &CVec, v: &CVector) -> C64 {
    form.iter().zip(v.hol.iter()).map(|(a, b)| a * b).sum()
}

/// The determinant condition on `∂p_1..∂p_c, ∂q_k` paired with every
/// `(c+1)`-tuple of commutators of lengths `2..=max_len` at `(z0, w0)`.
pub fn check_condition_i(
    prob: &Problem,
    z0: &CVec,
    w0: &CVec,
    max_len: usize,
    tol: f64,
    cap: usize,
) -> Result<Certificate> {
    let r = prob.rank_h();
    let mut cert = Certificate {
        verdict: Verdict::Fail,
        max_residual: f64::NAN,
        tol,
        max_len,
        words: 0,
        tuples: 0,
        worst: Vec::new(),
        note: String::new(),
    };
    let dim = prob.n_dimension(z0, w0)?;
    if dim != r {
        cert.note = format!("dim N = {dim}, expected {r}; frames do not exist");
        return Ok(cert);
    }
    let x = Point::new(z0.clone(), w0.clone());
    let chart = Chart::on_m(prob, &x)?;
    let all = enumerate_words(r, max_len);
    let values = all.par_iter().map(|w| chart.at_base(&w.to_field(Alphabet::N))).collect::<Result<Vec<_>>>()?;
    let (words, values): (Vec<Word>, Vec<CVector>) =
        all.into_iter().zip(values).filter(|(_, v)| v.norm() > ZERO_WORD).unzip();
    cert.words = words.len();
    let k = prob.c + 1;
    if words.len() < k {
        cert.verdict = Verdict::Vacuous;
        cert.max_residual = 0.0;
        cert.note = format!("only {} nonzero commutators, need {k}", words.len());
        return Ok(cert);
    }
    let count = binomial(words.len(), k);
    if count.is_none_or(|n| n > cap) {
        return Err(Error::CombinatorialBudget { count: count.unwrap_or(usize::MAX), cap });
    }
    let n = prob.l + prob.m;
    let flat = x.flat();
    let mut forms = Vec::new();
    for p in &prob.p {
        let g = gradient(p, z0.as_slice())?;
        let mut f = CVec::zeros(n);
        f.rows_mut(0, prob.l).copy_from(&CVec::from_vec(g.hol));
        forms.push(f);
    }
    let mut qforms = Vec::new();
    for q in &prob.q {
        qforms.push(CVec::from_vec(gradient(q, &flat)?.hol));
    }
    let tuples: Vec<Vec<usize>> = (0..words.len()).combinations(k).collect();
    cert.tuples = tuples.len() * qforms.len();
    let pnorm: f64 = forms.iter().map(|f| f.norm()).product();
    let (best, worst) = tuples
        .par_iter()
        .flat_map_iter(|tup| {
            let forms = &forms;
            let values = &values;
            qforms.iter().enumerate().map(move |(kq, qf)| {
                let mut mat = CMat::zeros(k, k);
                for (j, &w) in tup.iter().enumerate() {
                    for (i, f) in forms.iter().enumerate() {
                        mat[(i, j)] = pair(f, &values[w]);
                    }
                    mat[(k - 1, j)] = pair(qf, &values[w]);
                }
                let scale: f64 = pnorm * qf.norm() * tup.iter().map(|&w| values[w].norm()).product::<f64>();
                (mat.determinant().norm() / scale, (kq, tup.clone()))
            })
        })
        .reduce(|| (0.0, (0, Vec::new())), |a, b| if b.0 > a.0 { b } else { a });
    cert.max_residual = best;
    cert.worst = worst.1.iter().map(|&w| words[w].to_string()).collect();
    if !cert.worst.is_empty() {
        cert.worst.push(format!("q{}", worst.0 + 1));
    }
    cert.verdict = if best <= tol { Verdict::Pass } else { Verdict::Fail };
    cert.note = format!("commutators of length 2..={max_len}");
    Ok(cert)
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    const SPHERE2: &str = "z1*conj(z1)+z2*conj(z2)-1";

    fn example1() -> Problem {
        Problem::from_sources(2, 1, 2, &[SPHERE2], &["(w1-z1)*conj(w1-z1)-1"]).unwrap()
    }

    #[test]
    fn lemma1_vacuous_when_m_equals_d() {
        let p = example1();
        let x = Point::from_slices(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0)]);
        let ch = Chart::on_m(&p, &x).unwrap();
        let w = Word::bracket(Word::letter(0, false), Word::letter(0, true));
        let rep = check_lemma1(&ch, &w, 1e-4).unwrap();
        assert_eq!(rep.verdict, Verdict::Vacuous);
        assert_eq!(rep.max_residual, 0.0);
    }

    #[test]
    fn lemma1_on_sphere_fibers() {
        let p = Problem::from_sources(2, 2, 2, &[SPHERE2], &["w1*conj(w1)+w2*conj(w2)-1"]).unwrap();
        let x = Point::from_slices(&[c(0.6, 0.0), c(0.0, 0.8)], &[c(0.6, 0.0), c(0.0, 0.8)]);
        let ch = Chart::on_m(&p, &x).unwrap();
        for h in [2e-4, 1e-4] {
            let ch = ch.clone().with_step(h);
            let w = Word::bracket(Word::letter(0, false), Word::letter(0, true));
            let rep = check_lemma1(&ch, &w, 1e-4).unwrap();
            assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
        }
        let rep = check_lemma1(&ch, &Word::letter(0, false), 1e-4).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn involutivity_on_s5() {
        let p = Problem::from_sources(
            3,
            1,
            2,
            &["z1*conj(z1)+z2*conj(z2)+z3*conj(z3)-1"],
            &["(w1-z1)*conj(w1-z1)-1"],
        )
        .unwrap();
        let a = 1.0 / 3f64.sqrt();
        let z = [c(a, 0.0), c(0.0, a), c(-a, 0.0)];
        let x = Point::from_slices(&z, &[c(a, 0.0) + c(0.6, 0.8)]);
        let ch = Chart::on_m(&p, &x).unwrap();
        let rep = check_n_involutive(&ch, 1e-4).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
        assert_eq!(rep.items.len(), 1);
        let rep = check_n_involutive(&Chart::on_m(&example1(), &Point::from_slices(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0)])).unwrap(), 1e-4).unwrap();
        assert_eq!(rep.verdict, Verdict::Vacuous);
    }

    #[test]
    fn projection_identity_for_words() {
        let p = example1();
        let x = Point::from_slices(&[c(0.6, 0.0), c(0.0, 0.8)], &[c(0.6, 1.0)]);
        let chm = Chart::on_m(&p, &x).unwrap();
        let chs = Chart::on_s(&p, &x.z).unwrap();
        for w in enumerate_words(1, 3) {
            let vm = chm.at_base(&w.to_field(Alphabet::N)).unwrap();
            let vs = chs.at_base(&w.to_field(Alphabet::S)).unwrap();
            assert!((vm.block(0, 2) - vs).norm() <= 1e-4, "{w}");
        }
    }

    #[test]
    fn condition_i_pass_and_fail() {
        let z = CVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let cert = check_condition_i(&example1(), &z, &CVec::from_vec(vec![c(0.6, 1.0)]), 3, 1e-3, TUPLE_CAP).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass, "{cert:?}");
        assert!(cert.max_residual <= 1e-4);
        let ce = Problem::from_sources(2, 1, 2, &[SPHERE2], &["(w1-conj(z1))*conj(w1-conj(z1))-1"]).unwrap();
        let cert = check_condition_i(&ce, &z, &CVec::from_vec(vec![c(0.6, 1.0)]), 3, 1e-3, TUPLE_CAP).unwrap();
        assert_eq!(cert.verdict, Verdict::Fail, "{cert:?}");
        assert!(cert.max_residual > 1e-2, "{cert:?}");
    }

    #[test]
    fn condition_i_vacuous_and_budget() {
        let z = CVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let w = CVec::from_vec(vec![c(0.6, 1.0)]);
        // one word of length 2 only, c + 1 = 2 needed
        let cert = check_condition_i(&example1(), &z, &w, 2, 1e-3, TUPLE_CAP).unwrap();
        assert_eq!(cert.verdict, Verdict::Vacuous);
        assert!(matches!(
            check_condition_i(&example1(), &z, &w, 3, 1e-3, 1),
            Err(Error::CombinatorialBudget { .. })
        ));
    }
}
