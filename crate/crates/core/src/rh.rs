//! The φ-form of M along traced graphs, its CR normalization, and the
//! convexity pairing for hypersurface fibers.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::expr::{gradient, Expression, Point, C64};
use crate::geometry::Problem;
use crate::linalg::{CMat, CVec};
use crate::tracer::LeafMesh;

/// Smallest `|C|` accepted before forming `1/C`.
pub const C_MIN: f64 = 1e-10;

/// Maximal minors `φ_I = det(∂q_k/∂w_{i_j})` of the d×m matrix `∂_w q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiForm {
    /// Increasing column tuples (0-based), in lexicographic order.
    pub tuples: Vec<Vec<usize>>,
    pub values: Vec<C64>,
}

impl PhiForm {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn index_of(&self, tuple: &[usize]) -> Option<usize> {
        self.tuples.iter().position(|t| t == tuple)
    }
}

fn dwq(prob: &Problem, x: &Point) -> Result<CMat> {
    let flat = x.flat();
    let mut a = CMat::zeros(prob.d, prob.m);
    for (k, q) in prob.q.iter().enumerate() {
        let g = gradient(q, &flat)?;
        for j in 0..prob.m {
            a[(k, j)] = g.hol[prob.l + j];
        }
    }
    Ok(a)
}

pub fn phi_form(prob: &Problem, z: &CVec, w: &CVec) -> Result<PhiForm> {
    let a = dwq(prob, &Point::new(z.clone(), w.clone()))?;
    let tuples: Vec<Vec<usize>> = (0..prob.m).combinations(prob.d).collect();
    let values = tuples
        .iter()
        .map(|t| CMat::from_fn(prob.d, prob.d, |r, c| a[(r, t[c])]).determinant())
        .collect();
    Ok(PhiForm { tuples, values })
}

/// φ-form at every mesh point of a filled mesh.
pub fn phi_on_mesh(prob: &Problem, mesh: &LeafMesh) -> Result<Vec<PhiForm>> {
    mesh.graph()?.iter().map(|p| phi_form(prob, &p.z, &p.w)).collect()
}

fn scalars(v: impl Iterator<Item = C64>) -> Vec<CVec> {
    v.map(|c| CVec::from_element(1, c)).collect()
}

/// `max |φ_I s̄{φ_J} - φ_J s̄{φ_I}|` over the mesh, for tuple indices `i`, `j`.
pub fn lemma4_residual(prob: &Problem, mesh: &LeafMesh, i: usize, j: usize) -> Result<f64> {
    if mesh.h > 1e-2 {
        return Err(Error::MeshTooCoarse { step: mesh.h });
    }
    let phis = phi_on_mesh(prob, mesh)?;
    let n = phis.first().map_or(0, |p| p.tuples.len());
    if i >= n || j >= n {
        return Err(Error::Dimension(format!("tuple index out of range ({n} tuples)")));
    }
    let fi = scalars(phis.iter().map(|p| p.values[i]));
    let fj = scalars(phis.iter().map(|p| p.values[j]));
    let di = mesh.sbar(&fi);
    let dj = mesh.sbar(&fj);
    let mut worst = 0.0f64;
    for (c, &o) in mesh.offsets.iter().enumerate() {
        for k in 0..di[c].len() {
            let r = fi[o][0] * dj[c][k][0] - fj[o][0] * di[c][k][0];
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}

/// Largest [`lemma4_residual`] over all tuple pairs; zero with a single tuple.
pub fn lemma4_max(prob: &Problem, mesh: &LeafMesh) -> Result<f64> {
    let n = (0..prob.m).combinations(prob.d).count();
    let mut worst = 0.0f64;
    for (i, j) in (0..n).tuple_combinations() {
        worst = worst.max(lemma4_residual(prob, mesh, i, j)?);
    }
    Ok(worst)
}

/// How the CR multipliers `h_I` are chosen.
#[derive(Clone, Debug)]
pub enum Normalization {
    /// `h ≡ 1` on the single minor; requires d = m.
    Canonical,
    /// User expressions in `z`, one per tuple.
    Expressions(Vec<Expression>),
    /// `h_i = f_i` (d = 1).
    Graph,
}

/// Values of `C = Σ h_I φ_I(z, f(z))` on the mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub values: Vec<C64>,
    pub choice: String,
    pub min_abs: f64,
}

pub fn normalize_c(prob: &Problem, mesh: &LeafMesh, h: &Normalization) -> Result<Normalizer> {
    let graph = mesh.graph()?;
    let phis = graph.iter().map(|p| phi_form(prob, &p.z, &p.w)).collect::<Result<Vec<_>>>()?;
    let (values, choice): (Vec<C64>, String) = if prob.d == prob.m {
        (phis.iter().map(|p| p.values[0]).collect(), "canonical h = 1".into())
    } else {
        match h {
            Normalization::Canonical => {
                return Err(Error::InvalidProblem("canonical normalizer needs d = m; supply h".into()))
            }
            Normalization::Graph => {
                if prob.d != 1 {
                    return Err(Error::WrongCodimension { d: prob.d });
                }
                let v = graph
                    .iter()
                    .zip(&phis)
                    .map(|(p, phi)| p.w.iter().zip(&phi.values).map(|(f, v)| f * v).sum())
                    .collect();
                (v, "h_i = f_i".into())
            }
            Normalization::Expressions(hs) => {
                let n = phis.first().map_or(0, |p| p.tuples.len());
                if hs.len() != n {
                    return Err(Error::Dimension(format!("{} h-expressions for {n} tuples", hs.len())));
                }
                let mut v = Vec::with_capacity(graph.len());
                for (p, phi) in graph.iter().zip(&phis) {
                    let mut acc = C64::new(0.0, 0.0);
                    for (e, f) in hs.iter().zip(&phi.values) {
                        acc += e.eval(p.z.as_slice())? * f;
                    }
                    v.push(acc);
                }
                (v, "user h".into())
            }
        }
    };
    let min_abs = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    let bad = values.iter().filter(|v| v.norm() < C_MIN).count();
    if bad > 0 {
        return Err(Error::NormalizerVanishes { count: bad, min: min_abs });
    }
    Ok(Normalizer { values, choice, min_abs })
}

/// `(1/C) φ_I(z, f(z))` at every mesh point.
pub fn normalized_phi(prob: &Problem, mesh: &LeafMesh, c: &Normalizer, i: usize) -> Result<Vec<C64>> {
    let phis = phi_on_mesh(prob, mesh)?;
    Ok(phis.iter().zip(&c.values).map(|(p, cv)| p.values[i] / cv).collect())
}

/// Largest `|s̄ g|` of scalar mesh values over centers and horizontal directions.
pub fn cr_check(mesh: &LeafMesh, values: &[C64]) -> Result<f64> {
    if mesh.h > 1e-2 {
        return Err(Error::MeshTooCoarse { step: mesh.h });
    }
    if values.len() != mesh.points.len() {
        return Err(Error::Dimension(format!("{} values for {} mesh points", values.len(), mesh.points.len())));
    }
    Ok(mesh.max_sbar(&scalars(values.iter().copied())))
}

/// `min |Σ f_i ∂q_1/∂w_i (z, f(z))|` over the mesh (d = 1 only).
pub fn convex_pairing(prob: &Problem, mesh: &LeafMesh) -> Result<f64> {
    if prob.d != 1 {
        return Err(Error::WrongCodimension { d: prob.d });
    }
    let graph = mesh.graph()?;
    let mut worst = f64::INFINITY;
    for p in &graph {
        let a = dwq(prob, p)?;
        let s: C64 = p.w.iter().enumerate().map(|(i, f)| f * a[(0, i)]).sum();
        worst = worst.min(s.norm());
    }
    Ok(worst)
}
