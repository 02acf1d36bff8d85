//! Pointwise linear algebra on S and M: horizontal and vertical bases, the
//! lifting system that defines the null bundle N, fiber Levi
//! nondegeneracy, and Newton projection onto the manifolds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{gradient, jet2, parse, Dims, Expression, Jet2, Point, C64};
use crate::linalg::{self, CMat, CVec};

const NEWTON_MAX_ITER: usize = 50;

/// Default numerical tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Singular values at or below this count as zero.
    pub rank_tol: f64,
    /// Residual allowed for a point to count as on S or M.
    pub on_tol: f64,
    /// Residual Newton projection drives to.
    pub proj_tol: f64,
    /// Least-squares residual allowed in lifting systems and membership tests.
    pub lift_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank_tol: 1e-8, on_tol: 1e-8, proj_tol: 1e-12, lift_tol: 1e-8 }
    }
}

/// Which manifold a flat coordinate vector lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// S ⊂ ℂ^ℓ, coordinates `z`.
    S,
    /// M ⊂ S × ℂ^m, coordinates `(z, w)`.
    M,
}

/// Defining data for S = {p = 0} and M = {(z, w) : z ∈ S, q = 0}.
#[derive(Clone, Debug)]
pub struct Problem {
    pub l: usize,
    pub m: usize,
    pub c: usize,
    pub d: usize,
    pub tau: usize,
    pub p: Vec<Expression>,
    pub q: Vec<Expression>,
    pub tol: Tolerances,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisTag {
    Z,
    W,
    ZW,
}

/// Columns are coefficient vectors of (1,0) tangent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    pub mat: CMat,
    pub tag: BasisTag,
}

impl Basis {
    pub fn dim(&self) -> usize {
        self.mat.ncols()
    }

    pub fn column(&self, i: usize) -> CVec {
        self.mat.column(i).into_owned()
    }
}

impl Problem {
    pub fn new(
        l: usize,
        m: usize,
        c: usize,
        d: usize,
        tau: usize,
        p: Vec<Expression>,
        q: Vec<Expression>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        if l < 2 {
            return bad(format!("l = {l}, need l >= 2"));
        }
        if m < 1 {
            return bad(format!("m = {m}, need m >= 1"));
        }
        if c < 1 || c >= l {
            return bad(format!("c = {c}, need 1 <= c < l"));
        }
        if d < 1 || d > m {
            return bad(format!("d = {d}, need 1 <= d <= m"));
        }
        if tau < 2 {
            return bad(format!("tau = {tau}, need tau >= 2"));
        }
        if p.len() != c {
            return bad(format!("expected {c} p-expressions, got {}", p.len()));
        }
        if q.len() != d {
            return bad(format!("expected {d} q-expressions, got {}", q.len()));
        }
        for e in &p {
            if e.dims != Dims::new(l, 0) {
                return bad("p-expressions must be parsed in z only".into());
            }
        }
        for e in &q {
            if e.dims != Dims::new(l, m) {
                return bad("q-expressions must be parsed in (z, w)".into());
            }
        }
        Ok(Problem { l, m, c, d, tau, p, q, tol: Tolerances::default() })
    }

    /// Build from expression sources.
    pub fn from_sources(l: usize, m: usize, tau: usize, p: &[&str], q: &[&str]) -> Result<Self> {
        let p = p.iter().map(|s| parse(s, Dims::new(l, 0))).collect::<std::result::Result<Vec<_>, _>>()?;
        let q = q.iter().map(|s| parse(s, Dims::new(l, m))).collect::<std::result::Result<Vec<_>, _>>()?;
        let (c, d) = (p.len(), q.len());
        Problem::new(l, m, c, d, tau, p, q)
    }

    /// Dimension of H^S.
    pub fn rank_h(&self) -> usize {
        self.l - self.c
    }

    pub fn n_coords(&self, space: Space) -> usize {
        match space {
            Space::S => self.l,
            Space::M => self.l + self.m,
        }
    }

    /// Defining-function values (p then q for M).
    pub fn constraint_values(&self, space: Space, x: &[C64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.c + self.d);
        for p in &self.p {
            out.push(p.eval(&x[..self.l])?.re);
        }
        if space == Space::M {
            for q in &self.q {
                out.push(q.eval(x)?.re);
            }
        }
        Ok(out)
    }

    /// Real Jacobian of the constraints with respect to (Re x, Im x).
    pub fn real_jacobian(&self, space: Space, x: &[C64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let n = self.n_coords(space);
        let k = self.c + if space == Space::M { self.d } else { 0 };
        let mut j = DMatrix::zeros(k, 2 * n);
        let mut vals = Vec::with_capacity(k);
        let mut put_row = |row: usize, g: &crate::expr::Gradient, offset: usize| {
            for (idx, (h, a)) in g.hol.iter().zip(&g.anti).enumerate() {
                j[(row, offset + idx)] = (h + a).re;
                j[(row, n + offset + idx)] = (C64::i() * (h - a)).re;
            }
        };
        for (row, p) in self.p.iter().enumerate() {
            let g = gradient(p, &x[..self.l])?;
            put_row(row, &g, 0);
            vals.push(g.value.re);
        }
        if space == Space::M {
            for (r, q) in self.q.iter().enumerate() {
                let g = gradient(q, x)?;
                put_row(self.c + r, &g, 0);
                vals.push(g.value.re);
            }
        }
        Ok((j, vals))
    }

    /// Membership residuals `(p_i(z), q_k(z, w))`.
    pub fn residuals(&self, x: &Point) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_point(x)?;
        let all = self.constraint_values(Space::M, &x.flat())?;
        let (p, q) = all.split_at(self.c);
        Ok((p.to_vec(), q.to_vec()))
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.z.len() != self.l || x.w.len() != self.m {
            return Err(Error::Dimension(format!(
                "point has ({}, {}) coordinates, problem has ({}, {})",
                x.z.len(),
                x.w.len(),
                self.l,
                self.m
            )));
        }
        Ok(())
    }

    /// Minimum-norm Newton projection of flat coordinates onto S or M.
    ///
    /// With `fixed_z` (M only) just `w` moves and only the q-constraints are
    /// solved. Returns the projected coordinates and the iteration count.
    pub fn project(&self, space: Space, x0: &[C64], fixed_z: bool) -> Result<(Vec<C64>, usize)> {
        let n = self.n_coords(space);
        let fixed_z = fixed_z && space == Space::M;
        let mut x = x0.to_vec();
        let residual_of = |v: &[f64]| -> f64 {
            let skip = if fixed_z { self.c } else { 0 };
            v.iter().skip(skip).fold(0.0, |a, b| a.max(b.abs()))
        };
        let (mut jac, mut vals) = self.real_jacobian(space, &x)?;
        let mut res = residual_of(&vals);
        if res <= self.tol.proj_tol {
            return Ok((x, 0));
        }
        let mut polished = false;
        let mut best = res;
        for iter in 1..=NEWTON_MAX_ITER {
            let (rows, cols) = if fixed_z { (self.c..jac.nrows(), (self.l, self.m)) } else { (0..jac.nrows(), (0, n)) };
            let (c0, cn) = cols;
            let mut sub = DMatrix::zeros(rows.len(), 2 * cn);
            for (ri, r) in rows.clone().enumerate() {
                for k in 0..cn {
                    sub[(ri, k)] = jac[(r, c0 + k)];
                    sub[(ri, cn + k)] = jac[(r, n + c0 + k)];
                }
            }
            let rhs = DVector::from_iterator(rows.len(), rows.clone().map(|r| -vals[r]));
            let step = linalg::real_min_norm_solve(&sub, &rhs, 1e-14);
            for k in 0..cn {
                x[c0 + k] += C64::new(step[k], step[cn + k]);
            }
            let (j2, v2) = self.real_jacobian(space, &x)?;
            jac = j2;
            vals = v2;
            res = residual_of(&vals);
            if !res.is_finite() || (iter > 3 && res > 10.0 * best) {
                return Err(Error::NewtonDiverged { iterations: iter, residual: res });
            }
            best = best.min(res);
            if res <= self.tol.proj_tol {
                if polished || res <= 1e-15 {
                    return Ok((x, iter));
                }
                polished = true;
            }
        }
        if res <= self.tol.proj_tol {
            return Ok((x, NEWTON_MAX_ITER));
        }
        Err(Error::NewtonDiverged { iterations: NEWTON_MAX_ITER, residual: res })
    }

    /// Project a point onto M; with `fixed_z` only `w` moves.
    pub fn project_to_m(&self, x0: &Point, fixed_z: bool) -> Result<Point> {
        self.check_point(x0)?;
        let (x, _) = self.project(Space::M, &x0.flat(), fixed_z)?;
        Ok(Point::from_flat(&x, self.l))
    }

    /// Project `z` onto S by Newton on the p-constraints alone.
    pub fn project_to_s(&self, z: &CVec) -> Result<CVec> {
        let (x, _) = self.project(Space::S, z.as_slice(), false)?;
        Ok(CVec::from_vec(x))
    }

    fn require_on_s(&self, z: &CVec) -> Result<()> {
        let r = self.constraint_values(Space::S, z.as_slice())?.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if r > self.tol.on_tol {
            return Err(Error::OffManifold { residual: r });
        }
        Ok(())
    }

    fn require_on_m(&self, x: &Point) -> Result<()> {
        self.check_point(x)?;
        let r = self.constraint_values(Space::M, &x.flat())?.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if r > self.tol.on_tol {
            return Err(Error::OffManifold { residual: r });
        }
        Ok(())
    }

    /// The c×ℓ matrix (∂p_j/∂z_i).
    pub fn dp(&self, z: &CVec) -> Result<CMat> {
        let mut a = CMat::zeros(self.c, self.l);
        for (j, p) in self.p.iter().enumerate() {
            let g = gradient(p, z.as_slice())?;
            for i in 0..self.l {
                a[(j, i)] = g.hol[i];
            }
        }
        Ok(a)
    }

    /// Orthonormal basis of H^S_z, canonical up to the fixed phase rule.
    pub fn horizontal_basis(&self, z: &CVec) -> Result<Basis> {
        self.require_on_s(z)?;
        self.horizontal_basis_unchecked(z)
    }

    pub(crate) fn horizontal_basis_unchecked(&self, z: &CVec) -> Result<Basis> {
        let a = self.dp(z)?;
        let (mat, min_sv) = linalg::null_space(&a);
        if min_sv <= self.tol.rank_tol {
            return Err(Error::RankDefect { what: "dp", min_sv });
        }
        Ok(Basis { mat, tag: BasisTag::Z })
    }

    /// Jets of every q at `x`.
    pub fn q_jets(&self, x: &Point) -> Result<Vec<Jet2>> {
        self.q.iter().map(|q| jet2(q, x).map_err(Error::from)).collect()
    }

    /// Orthonormal basis of V(z, w); empty when m = d.
    pub fn vertical_basis(&self, z: &CVec, w: &CVec) -> Result<Basis> {
        let x = Point::new(z.clone(), w.clone());
        self.require_on_m(&x)?;
        let jets = self.q_jets(&x)?;
        vertical_from_jets(self, &jets)
    }

    /// Levi nondegeneracy of the fiber M_z at w via the homogeneous lifting
    /// system. Returns the verdict and the smallest singular value.
    pub fn fiber_levi_nondegenerate(&self, z: &CVec, w: &CVec, tol: f64) -> Result<(bool, f64)> {
        let x = Point::new(z.clone(), w.clone());
        self.require_on_m(&x)?;
        let sys = LiftSystem::at(self, &x)?;
        let sv = sys.homogeneous_min_sv();
        Ok((sv > tol, sv))
    }

    /// Unique `b` with Σa_i∂z_i + Σb_j∂w_j ∈ N(z, w).
    pub fn lift_horizontal(&self, z: &CVec, w: &CVec, a: &CVec) -> Result<CVec> {
        let x = Point::new(z.clone(), w.clone());
        self.require_on_m(&x)?;
        let s = self.horizontal_basis_unchecked(z)?;
        let dev = (a - &s.mat * (s.mat.adjoint() * a)).norm();
        if dev > self.tol.lift_tol * a.norm().max(1.0) {
            return Err(Error::NotHorizontal { deviation: dev });
        }
        let sys = LiftSystem::at(self, &x)?;
        let b = sys.lift(&CMat::from_column_slice(self.l, 1, a.as_slice()))?;
        Ok(b.column(0).into_owned())
    }

    /// Complex dimension of N(z, w) from the joint system in (α, b) with
    /// a = Σα_i s_i.
    pub fn n_dimension(&self, z: &CVec, w: &CVec) -> Result<usize> {
        let x = Point::new(z.clone(), w.clone());
        self.require_on_m(&x)?;
        let s = self.horizontal_basis_unchecked(z)?;
        let sys = LiftSystem::at(self, &x)?;
        Ok(sys.n_dimension(&s.mat, self.tol.rank_tol))
    }

    /// Basis n_i = (s_i, lift(s_i)) of N(z, w).
    pub fn frame_n(&self, z: &CVec, w: &CVec) -> Result<Basis> {
        let x = Point::new(z.clone(), w.clone());
        self.require_on_m(&x)?;
        let s = self.horizontal_basis_unchecked(z)?;
        let sys = LiftSystem::at(self, &x)?;
        sys.frame(&s.mat)
    }
}

fn vertical_from_jets(prob: &Problem, jets: &[Jet2]) -> Result<Basis> {
    let mut a = CMat::zeros(prob.d, prob.m);
    for (k, j) in jets.iter().enumerate() {
        a.row_mut(k).copy_from(&j.dw.transpose());
    }
    let (mat, min_sv) = linalg::null_space(&a);
    if min_sv <= prob.tol.rank_tol {
        return Err(Error::RankDefect { what: "dwq", min_sv });
    }
    Ok(Basis { mat, tag: BasisTag::W })
}

/// The linear system for `b` at a point of M: first-order rows
/// `∂q_k/∂z · a + ∂q_k/∂w · b = 0` and Levi rows
/// `⟨∂̄∂q_k, (a∂z + b∂w) ∧ v̄^j⟩ = 0`, written `B b = -A a`.
#[derive(Clone, Debug)]
pub struct LiftSystem {
    /// Coefficients on `b`: (d + d(m-d)) × m.
    pub on_b: CMat,
    /// Coefficients on `a`: (d + d(m-d)) × ℓ.
    pub on_a: CMat,
    pub vertical: Basis,
    pub jets: Vec<Jet2>,
    rank_tol: f64,
    lift_tol: f64,
}

impl LiftSystem {
    pub fn at(prob: &Problem, x: &Point) -> Result<Self> {
        let jets = prob.q_jets(x)?;
        let vertical = vertical_from_jets(prob, &jets)?;
        let (d, m, l) = (prob.d, prob.m, prob.l);
        let nv = vertical.dim();
        let rows = d + d * nv;
        let mut on_b = CMat::zeros(rows, m);
        let mut on_a = CMat::zeros(rows, l);
        for (k, j) in jets.iter().enumerate() {
            on_b.row_mut(k).copy_from(&j.dw.transpose());
            on_a.row_mut(k).copy_from(&j.dz.transpose());
            let vh = vertical.mat.adjoint();
            let levi_w = &vh * &j.h_wbar_w;
            let levi_z = &vh * &j.h_wbar_z;
            for jj in 0..nv {
                let r = d + k * nv + jj;
                on_b.row_mut(r).copy_from(&levi_w.row(jj));
                on_a.row_mut(r).copy_from(&levi_z.row(jj));
            }
        }
        Ok(LiftSystem { on_b, on_a, vertical, jets, rank_tol: prob.tol.rank_tol, lift_tol: prob.tol.lift_tol })
    }

    /// Smallest singular value of the homogeneous system; zero when it has
    /// fewer rows than unknowns.
    pub fn homogeneous_min_sv(&self) -> f64 {
        if self.on_b.nrows() < self.on_b.ncols() {
            return 0.0;
        }
        linalg::min_singular_value(&self.on_b)
    }

    /// Solve for `b` for each column of `a`.
    pub fn lift(&self, a: &CMat) -> Result<CMat> {
        let sv = self.homogeneous_min_sv();
        if sv <= self.rank_tol {
            return Err(Error::NDimensionDefect { min_sv: sv });
        }
        let rhs = -(&self.on_a * a);
        let sol = linalg::lstsq(&self.on_b, &rhs, self.rank_tol);
        let scale = a.norm().max(1.0);
        if sol.residual > self.lift_tol * scale {
            return Err(Error::Inconsistent { residual: sol.residual });
        }
        Ok(sol.x)
    }

    pub fn frame(&self, s: &CMat) -> Result<Basis> {
        let b = self.lift(s)?;
        let (l, r) = s.shape();
        let m = b.nrows();
        let mut mat = CMat::zeros(l + m, r);
        mat.view_mut((0, 0), (l, r)).copy_from(s);
        mat.view_mut((l, 0), (m, r)).copy_from(&b);
        Ok(Basis { mat, tag: BasisTag::ZW })
    }

    pub fn n_dimension(&self, s: &CMat, tol: f64) -> usize {
        let rows = self.on_b.nrows();
        let (r, m) = (s.ncols(), self.on_b.ncols());
        let mut k = CMat::zeros(rows, r + m);
        k.view_mut((0, 0), (rows, r)).copy_from(&(&self.on_a * s));
        k.view_mut((0, r), (rows, m)).copy_from(&self.on_b);
        r + m - linalg::rank(&k, tol)
    }

    /// Levi pairing Σ X_i conj(Y_σ) ∂²q_k/∂ζ̄_σ∂ζ_i over all of (z, w).
    pub fn levi(&self, k: usize, x_hol: &CVec, y_hol: &CVec) -> C64 {
        let j = &self.jets[k];
        let l = j.dz.len();
        let (xz, xw) = (x_hol.rows(0, l), x_hol.rows(l, x_hol.len() - l));
        let (yz, yw) = (y_hol.rows(0, l), y_hol.rows(l, y_hol.len() - l));
        let mut acc = C64::new(0.0, 0.0);
        acc += (yz.adjoint() * &j.h_zbar_z * xz)[(0, 0)];
        acc += (yz.adjoint() * &j.h_zbar_w * xw)[(0, 0)];
        acc += (yw.adjoint() * &j.h_wbar_z * xz)[(0, 0)];
        acc += (yw.adjoint() * &j.h_wbar_w * xw)[(0, 0)];
        acc
    }
}
