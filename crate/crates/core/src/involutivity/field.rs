//! Complex vector fields on S or M realized through a chart, and their
//! brackets by central differences.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{Point, C64};
use crate::geometry::{LiftSystem, Problem, Space};
use crate::linalg::{self, CMat, CVec};

/// Default central-difference step.
pub const H_FD: f64 = 1e-4;
/// Overlap below which a frame is treated as having jumped.
const MIN_OVERLAP: f64 = 0.5;

/// Ambient coefficients of a complex vector: `Σ hol_k ∂/∂ζ_k + anti_k ∂/∂ζ̄_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector {
    pub hol: CVec,
    pub anti: CVec,
}

impl CVector {
    pub fn zeros(n: usize) -> Self {
        CVector { hol: CVec::zeros(n), anti: CVec::zeros(n) }
    }

    pub fn holomorphic(hol: CVec) -> Self {
        let n = hol.len();
        CVector { hol, anti: CVec::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.hol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hol.is_empty()
    }

    pub fn conj(&self) -> Self {
        CVector { hol: self.anti.map(|c| c.conj()), anti: self.hol.map(|c| c.conj()) }
    }

    pub fn norm(&self) -> f64 {
        (self.hol.norm_squared() + self.anti.norm_squared()).sqrt()
    }

    /// Stack as `[hol; anti]`.
    pub fn stacked(&self) -> CVec {
        let n = self.len();
        CVec::from_fn(2 * n, |i, _| if i < n { self.hol[i] } else { self.anti[i - n] })
    }

    /// Coordinates `range` of both parts.
    pub fn block(&self, start: usize, len: usize) -> CVector {
        CVector { hol: self.hol.rows(start, len).into_owned(), anti: self.anti.rows(start, len).into_owned() }
    }

    /// Real displacement directions `(δR, δI)` with `X = X_R + i X_I`.
    fn real_parts(&self) -> (CVec, CVec) {
        let ca = self.anti.map(|c| c.conj());
        let re = (&self.hol + &ca) * C64::new(0.5, 0.0);
        let im = (&self.hol - &ca) * C64::new(0.0, -0.5);
        (re, im)
    }
}

impl Add for CVector {
    type Output = CVector;
    fn add(self, o: CVector) -> CVector {
        CVector { hol: self.hol + o.hol, anti: self.anti + o.anti }
    }
}

impl Sub for CVector {
    type Output = CVector;
    fn sub(self, o: CVector) -> CVector {
        CVector { hol: self.hol - o.hol, anti: self.anti - o.anti }
    }
}

impl Mul<C64> for CVector {
    type Output = CVector;
    fn mul(self, s: C64) -> CVector {
        CVector { hol: self.hol * s, anti: self.anti * s }
    }
}

/// Which real combination of a field and its conjugate to take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RealPart {
    /// `X + X̄`
    Sum,
    /// `i(X - X̄)`
    Diff,
}

pub type CustomFn = Arc<dyn Fn(&[C64]) -> Result<CVector> + Send + Sync>;

/// A vector field, evaluated at points of the chart's manifold.
#[derive(Clone)]
pub enum Field {
    /// Horizontal frame `s_i` (on S).
    S(usize),
    /// Null-bundle frame `n_i` (on M).
    N(usize),
    /// Vertical frame `v_j` (on M).
    V(usize),
    Conj(Box<Field>),
    Bracket(Box<Field>, Box<Field>),
    Combo(Vec<(C64, Field)>),
    Real(Box<Field>, RealPart),
    Custom(CustomFn),
}

impl Field {
    pub fn conj(self) -> Field {
        Field::Conj(Box::new(self))
    }

    pub fn bracket(a: Field, b: Field) -> Field {
        Field::Bracket(Box::new(a), Box::new(b))
    }

    pub fn custom(f: impl Fn(&[C64]) -> Result<CVector> + Send + Sync + 'static) -> Field {
        Field::Custom(Arc::new(f))
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::S(i) => write!(f, "s{}", i + 1),
            Field::N(i) => write!(f, "n{}", i + 1),
            Field::V(i) => write!(f, "v{}", i + 1),
            Field::Conj(a) => write!(f, "conj({a:?})"),
            Field::Bracket(a, b) => write!(f, "[{a:?},{b:?}]"),
            Field::Combo(terms) => {
                f.write_str("(")?;
                for (k, (c, t)) in terms.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{c}*{t:?}")?;
                }
                f.write_str(")")
            }
            Field::Real(a, RealPart::Sum) => write!(f, "re2({a:?})"),
            Field::Real(a, RealPart::Diff) => write!(f, "im2({a:?})"),
            Field::Custom(_) => f.write_str("custom"),
        }
    }
}

/// A neighborhood of a base point of S or M, with frames gauged to the base.
///
/// Pointwise frames are only canonical up to a unitary change of basis that
/// can jump between nearby points. Every frame evaluated through the chart
/// is rotated onto the frame at the base point, which makes the fields
/// smooth near the base.
#[derive(Clone, Debug)]
pub struct Chart<'a> {
    pub prob: &'a Problem,
    pub space: Space,
    pub base: Vec<C64>,
    /// Orthonormal real basis of the tangent space at the base, rows laid out
    /// as `(Re x, Im x)`.
    pub tangent: DMatrix<f64>,
    h_anchor: CMat,
    v_anchor: CMat,
    /// Central-difference step.
    pub h_fd: f64,
}

impl<'a> Chart<'a> {
    /// Chart on S at `z`.
    pub fn on_s(prob: &'a Problem, z: &CVec) -> Result<Self> {
        Chart::new(prob, Space::S, z.as_slice())
    }

    /// Chart on M at `x`.
    pub fn on_m(prob: &'a Problem, x: &Point) -> Result<Self> {
        Chart::new(prob, Space::M, &x.flat())
    }

    pub fn new(prob: &'a Problem, space: Space, base: &[C64]) -> Result<Self> {
        if base.len() != prob.n_coords(space) {
            return Err(Error::Dimension(format!(
                "chart base has {} coordinates, expected {}",
                base.len(),
                prob.n_coords(space)
            )));
        }
        let r = prob
            .constraint_values(space, base)?
            .iter()
            .fold(0.0f64, |a, b| a.max(b.abs()));
        if r > prob.tol.on_tol {
            return Err(Error::OffManifold { residual: r });
        }
        let (jac, _) = prob.real_jacobian(space, base)?;
        let (tangent, min_sv) = linalg::real_null_space(&jac);
        if min_sv <= prob.tol.rank_tol {
            return Err(Error::RankDefect { what: "real jacobian", min_sv });
        }
        let z = CVec::from_column_slice(&base[..prob.l]);
        let h_anchor = prob.horizontal_basis_unchecked(&z)?.mat;
        let v_anchor = match space {
            Space::S => CMat::zeros(0, 0),
            Space::M => {
                let x = Point::from_flat(base, prob.l);
                LiftSystem::at(prob, &x)?.vertical.mat
            }
        };
        Ok(Chart { prob, space, base: base.to_vec(), tangent, h_anchor, v_anchor, h_fd: H_FD })
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h_fd = h;
        self
    }

    pub fn n_coords(&self) -> usize {
        self.prob.n_coords(self.space)
    }

    pub fn base_point(&self) -> Point {
        match self.space {
            Space::S => Point::from_slices(&self.base, &[]),
            Space::M => Point::from_flat(&self.base, self.prob.l),
        }
    }

    /// Chart map `u ↦ project(base + Σ u_α e_α)`.
    pub fn map(&self, u: &[f64]) -> Result<Vec<C64>> {
        let n = self.n_coords();
        let step = &self.tangent * nalgebra::DVector::from_column_slice(u);
        let x: Vec<C64> = (0..n).map(|k| self.base[k] + C64::new(step[k], step[n + k])).collect();
        Ok(self.prob.project(self.space, &x, false)?.0)
    }

    fn aligned(&self, q: CMat, anchor: &CMat) -> Result<CMat> {
        let (out, overlap) = linalg::align_to(&q, anchor);
        if overlap < MIN_OVERLAP {
            return Err(Error::FrameDiscontinuity { overlap });
        }
        Ok(out)
    }

    /// Horizontal basis at `z`, gauged to the base.
    pub fn horizontal(&self, z: &[C64]) -> Result<CMat> {
        let z = CVec::from_column_slice(z);
        let q = self.prob.horizontal_basis_unchecked(&z)?.mat;
        self.aligned(q, &self.h_anchor)
    }

    fn require_m(&self) -> Result<()> {
        if self.space != Space::M {
            return Err(Error::Dimension("field needs a chart on M".into()));
        }
        Ok(())
    }

    /// Null-bundle frame `n_i = (s_i, b_i)` at `x`, gauged to the base.
    pub fn n_frame(&self, x: &[C64]) -> Result<CMat> {
        self.require_m()?;
        let l = self.prob.l;
        let s = self.horizontal(&x[..l])?;
        let sys = LiftSystem::at(self.prob, &Point::from_flat(x, l))?;
        Ok(sys.frame(&s)?.mat)
    }

    /// Vertical frame at `x`, gauged to the base.
    pub fn vertical(&self, x: &[C64]) -> Result<CMat> {
        self.require_m()?;
        let sys = LiftSystem::at(self.prob, &Point::from_flat(x, self.prob.l))?;
        self.aligned(sys.vertical.mat, &self.v_anchor)
    }

    pub fn eval(&self, f: &Field, x: &[C64]) -> Result<CVector> {
        let n = self.n_coords();
        Ok(match f {
            Field::S(i) => {
                if self.space != Space::S {
                    return Err(Error::Dimension("s-fields live on S".into()));
                }
                let s = self.horizontal(x)?;
                CVector::holomorphic(column(&s, *i)?)
            }
            Field::N(i) => CVector::holomorphic(column(&self.n_frame(x)?, *i)?),
            Field::V(j) => {
                let v = self.vertical(x)?;
                let mut hol = CVec::zeros(n);
                hol.rows_mut(self.prob.l, self.prob.m).copy_from(&column(&v, *j)?);
                CVector::holomorphic(hol)
            }
            Field::Conj(a) => self.eval(a, x)?.conj(),
            Field::Bracket(a, b) => self.commutator_at(a, b, x)?,
            Field::Combo(terms) => {
                let mut acc = CVector::zeros(n);
                for (c, t) in terms {
                    acc = acc + self.eval(t, x)? * *c;
                }
                acc
            }
            Field::Real(a, part) => {
                let v = self.eval(a, x)?;
                let vb = v.conj();
                match part {
                    RealPart::Sum => v + vb,
                    RealPart::Diff => (v - vb) * C64::i(),
                }
            }
            Field::Custom(g) => {
                let v = g(x)?;
                if v.len() != n {
                    return Err(Error::Dimension(format!("custom field has length {}, expected {n}", v.len())));
                }
                v
            }
        })
    }

    fn displaced(&self, x: &[C64], dir: &CVec, eps: f64) -> Result<Vec<C64>> {
        let y: Vec<C64> = x.iter().zip(dir.iter()).map(|(a, d)| a + d * eps).collect();
        Ok(self.prob.project(self.space, &y, false)?.0)
    }

    /// Derivative of the real displacement direction `dir` applied to `f`.
    fn directional(&self, f: &Field, x: &[C64], dir: &CVec) -> Result<CVector> {
        let norm = dir.norm();
        if norm < 1e-300 {
            return Ok(CVector::zeros(self.n_coords()));
        }
        let unit = dir / C64::new(norm, 0.0);
        let h = self.h_fd;
        let plus = self.eval(f, &self.displaced(x, &unit, h)?)?;
        let minus = self.eval(f, &self.displaced(x, &unit, -h)?)?;
        Ok((plus - minus) * C64::new(norm / (2.0 * h), 0.0))
    }

    /// `X(F)` for the complex vector `X` at `x`, applied to the coefficients of `f`.
    pub fn derivative(&self, f: &Field, x: &[C64], along: &CVector) -> Result<CVector> {
        let (re, im) = along.real_parts();
        Ok(self.directional(f, x, &re)? + self.directional(f, x, &im)? * C64::i())
    }

    fn commutator_at(&self, a: &Field, b: &Field, x: &[C64]) -> Result<CVector> {
        let va = self.eval(a, x)?;
        let vb = self.eval(b, x)?;
        Ok(self.derivative(b, x, &va)? - self.derivative(a, x, &vb)?)
    }

    /// `[X, Y]` at the base point.
    pub fn commutator(&self, a: &Field, b: &Field) -> Result<CVector> {
        self.commutator_at(a, b, &self.base)
    }

    /// Value of `f` at the base point.
    pub fn at_base(&self, f: &Field) -> Result<CVector> {
        self.eval(f, &self.base)
    }
}

fn column(m: &CMat, i: usize) -> Result<CVec> {
    if i >= m.ncols() {
        return Err(Error::Dimension(format!("frame index {} out of range (rank {})", i + 1, m.ncols())));
    }
    Ok(m.column(i).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sphere() -> Problem {
        Problem::from_sources(2, 1, 2, &["z1*conj(z1)+z2*conj(z2)-1"], &["(w1-z1)*conj(w1-z1)-1"]).unwrap()
    }

    /// s = conj(z2) ∂z1 - conj(z1) ∂z2 on S³.
    fn hand_s() -> Field {
        Field::custom(|x| Ok(CVector::holomorphic(CVec::from_vec(vec![x[1].conj(), -x[0].conj()]))))
    }

    #[test]
    fn chart_center_is_base() {
        let p = sphere();
        let ch = Chart::on_s(&p, &CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        assert_eq!(ch.tangent.ncols(), 3);
        assert_eq!(ch.map(&[0.0, 0.0, 0.0]).unwrap(), ch.base);
        let y = ch.map(&[0.1, -0.05, 0.02]).unwrap();
        assert!(p.constraint_values(Space::S, &y).unwrap()[0].abs() <= 1e-12);
    }

    #[test]
    fn s3_bracket_matches_closed_form() {
        let p = sphere();
        let ch = Chart::on_s(&p, &CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        let s = hand_s();
        let v = ch.commutator(&s, &s.clone().conj()).unwrap();
        let want = CVector {
            hol: CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            anti: CVec::from_vec(vec![c(-1.0, 0.0), c(0.0, 0.0)]),
        };
        assert!((v - want).norm() <= 1e-5);
    }

    #[test]
    fn antisymmetry_and_bilinearity() {
        let p = sphere();
        let x = Point::from_slices(&[c(0.6, 0.0), c(0.0, 0.8)], &[c(0.6, 1.0)]);
        let ch = Chart::on_m(&p, &x).unwrap();
        let n = Field::N(0);
        let nb = Field::N(0).conj();
        assert_eq!(ch.commutator(&n, &n).unwrap().norm(), 0.0);
        let ab = ch.commutator(&n, &nb).unwrap();
        let ba = ch.commutator(&nb, &n).unwrap();
        assert!((ab.clone() + ba).norm() <= 1e-10);
        let two = Field::Combo(vec![(c(2.0, 0.0), Field::N(0))]);
        let ab2 = ch.commutator(&two, &nb).unwrap();
        assert!((ab2 - ab * c(2.0, 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn frame_fields_are_continuous_and_conjugate() {
        let p = sphere();
        let x = Point::from_slices(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0)]);
        let ch = Chart::on_m(&p, &x).unwrap();
        let n0 = ch.at_base(&Field::N(0)).unwrap();
        let f = p.frame_n(&x.z, &x.w).unwrap();
        assert!((n0.hol.clone() - f.column(0)).norm() < 1e-14);
        let nb = ch.at_base(&Field::N(0).conj()).unwrap();
        assert_eq!(nb, n0.conj());
        let mut diffs = Vec::new();
        for h in [1e-4, 5e-5] {
            let y = ch.map(&[h, 0.0, 0.0, 0.0]).unwrap();
            let n1 = ch.eval(&Field::N(0), &y).unwrap();
            diffs.push((n1 - n0.clone()).norm());
        }
        assert!(diffs[0] <= 1e-2);
        assert!((diffs[0] / diffs[1] - 2.0).abs() < 0.1);
    }

    #[test]
    fn frames_stay_smooth_where_canonical_phase_rule_is_singular() {
        // At z = (1, 0) the first component of s vanishes, so the pointwise
        // phase rule flips between nearby points; the gauge must not.
        let p = sphere();
        let ch = Chart::on_s(&p, &CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        let s0 = ch.at_base(&Field::S(0)).unwrap();
        for dir in 0..3 {
            let mut u = [0.0; 3];
            u[dir] = 1e-4;
            let y = ch.map(&u).unwrap();
            let s1 = ch.eval(&Field::S(0), &y).unwrap();
            assert!((s1 - s0.clone()).norm() < 1e-3);
        }
    }
}
