//! Leaf construction: lift tangents of S into M through `{n, n̄, T}`,
//! integrate along paths with RK4 and fiber projection, and measure
//! holonomy and the CR defect of traced graphs.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Dims, Expression, Point, C64};
use crate::geometry::{Problem, Space};
use crate::involutivity::{find_transverse_recipe, Alphabet, Chart, TransverseRecipe};
use crate::linalg::{self, CMat, CVec};

/// Step of the four-point velocity stencil for projected paths.
const VEL_H: f64 = 1e-4;
/// Largest seed distance from M that is silently repaired.
const SEED_MAX: f64 = 1e-2;
/// Default mesh stencil step.
pub const MESH_H: f64 = 1e-4;

/// A parametrized path in S.
pub trait Path: Sync {
    fn domain(&self) -> (f64, f64);
    fn point(&self, prob: &Problem, t: f64) -> Result<CVec>;
    fn velocity(&self, prob: &Problem, t: f64) -> Result<CVec>;
}

fn fd_velocity(prob: &Problem, path: &dyn Path, t: f64) -> Result<CVec> {
    let h = VEL_H;
    let f = |s: f64| path.point(prob, t + s * h);
    let v = (f(-2.0)? - f(2.0)? + (f(1.0)? - f(-1.0)?) * C64::new(8.0, 0.0)) / C64::new(12.0 * h, 0.0);
    Ok(v)
}

/// Path given by expressions in `t`, optionally snapped onto S.
#[derive(Clone, Debug)]
pub struct PathSpec {
    pub exprs: Vec<Expression>,
    pub t0: f64,
    pub t1: f64,
    pub project: bool,
}

impl PathSpec {
    pub fn parse(sources: &[&str], t0: f64, t1: f64, project: bool) -> Result<Self> {
        let exprs = sources
            .iter()
            .map(|s| crate::expr::parse(s, Dims::path()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(PathSpec { exprs, t0, t1, project })
    }

    fn raw(&self, prob: &Problem, t: f64) -> Result<CVec> {
        if self.exprs.len() != prob.l {
            return Err(Error::Dimension(format!("path has {} components, l = {}", self.exprs.len(), prob.l)));
        }
        let v = self.exprs.iter().map(|e| e.eval_t(t)).collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(CVec::from_vec(v))
    }
}

impl Path for PathSpec {
    fn domain(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    fn point(&self, prob: &Problem, t: f64) -> Result<CVec> {
        let z = self.raw(prob, t)?;
        if self.project {
            prob.project_to_s(&z)
        } else {
            Ok(z)
        }
    }

    fn velocity(&self, prob: &Problem, t: f64) -> Result<CVec> {
        if self.project {
            return fd_velocity(prob, self, t);
        }
        let v = self.exprs.iter().map(|e| e.deriv_t(t).map(|d| d.1)).collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(CVec::from_vec(v))
    }
}

/// Straight chord from `a` to `b` on `[0, 1]`, Newton-projected onto S. On
/// spheres this is normalized linear interpolation.
#[derive(Clone, Debug)]
pub struct Chord {
    pub a: CVec,
    pub b: CVec,
}

impl Path for Chord {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn point(&self, prob: &Problem, t: f64) -> Result<CVec> {
        let z = &self.a * C64::new(1.0 - t, 0.0) + &self.b * C64::new(t, 0.0);
        prob.project_to_s(&z)
    }

    fn velocity(&self, prob: &Problem, t: f64) -> Result<CVec> {
        fd_velocity(prob, self, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// Project `w` back onto the fiber after every step.
    pub project_steps: bool,
    /// Largest accepted q-residual after projection.
    pub trace_tol: f64,
    /// Lift condition number that triggers a new transverse recipe.
    pub recipe_cond_max: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { project_steps: true, trace_tol: 1e-9, recipe_cond_max: 1e6 }
    }
}

/// Output of [`lift_real_tangent`].
#[derive(Clone, Debug, PartialEq)]
pub struct Lift {
    /// z-velocity (the input tangent).
    pub u: CVec,
    /// w-velocity.
    pub v: CVec,
    /// Condition number of the decomposition basis.
    pub condition: f64,
    /// Misfit of `u` in the span of `{s, s̄, π T}`.
    pub z_defect: f64,
}

/// Lift a real tangent `u` of S at `z` to the real tangent of the leaf
/// through `(z, w)`.
pub fn lift_real_tangent(prob: &Problem, z: &CVec, w: &CVec, u: &CVec, recipe: &TransverseRecipe) -> Result<Lift> {
    let scale = u.norm().max(1.0);
    let dp = prob.dp(z)?;
    let tangency = (&dp * u).iter().fold(0.0f64, |a, c| a.max(c.re.abs()));
    if tangency > 1e-8 * scale {
        return Err(Error::NotTangent { defect: tangency });
    }
    let x = Point::new(z.clone(), w.clone());
    let chart = Chart::on_m(prob, &x)?;
    let n = chart.n_frame(&chart.base)?;
    let t = recipe
        .fields(Alphabet::N)
        .iter()
        .map(|f| chart.at_base(f))
        .collect::<Result<Vec<_>>>()?;
    let (l, r, c) = (prob.l, prob.rank_h(), t.len());
    let mut a = CMat::zeros(2 * l, 2 * r + c);
    for i in 0..r {
        for k in 0..l {
            a[(k, i)] = n[(k, i)];
            a[(l + k, r + i)] = n[(k, i)].conj();
        }
    }
    for (j, tj) in t.iter().enumerate() {
        for k in 0..l {
            a[(k, 2 * r + j)] = tj.hol[k];
            a[(l + k, 2 * r + j)] = tj.anti[k];
        }
    }
    let rhs = CMat::from_fn(2 * l, 1, |k, _| if k < l { u[k] } else { u[k - l].conj() });
    let sol = linalg::lstsq(&a, &rhs, 0.0);
    if sol.min_sv() <= prob.tol.rank_tol {
        return Err(Error::BasisDegenerate { min_sv: sol.min_sv() });
    }
    let coef = sol.x.column(0);
    let mut defect = 0.0f64;
    for i in 0..r {
        defect = defect.max((coef[r + i] - coef[i].conj()).norm());
    }
    for j in 0..c {
        defect = defect.max(coef[2 * r + j].im.abs());
    }
    if defect > 1e-8 * scale {
        return Err(Error::NonRealLift { defect });
    }
    let mut hol = CVec::zeros(l + prob.m);
    for i in 0..r {
        hol += n.column(i) * coef[i];
    }
    for (j, tj) in t.iter().enumerate() {
        hol += &tj.hol * C64::new(coef[2 * r + j].re, 0.0);
    }
    let z_defect = (hol.rows(0, l) - u).norm();
    Ok(Lift { u: u.clone(), v: hol.rows(l, prob.m).into_owned(), condition: sol.condition(), z_defect })
}

/// Sampled leaf over a path.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafTrace {
    pub t: Vec<f64>,
    pub z: Vec<CVec>,
    pub w: Vec<CVec>,
    pub q_residual: Vec<f64>,
    pub condition: Vec<f64>,
    /// Number of times the transverse recipe was rebuilt on the way.
    pub recipe_rebuilds: usize,
}

impl LeafTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_w(&self) -> &CVec {
        self.w.last().expect("trace has at least the seed")
    }

    pub fn max_residual(&self) -> f64 {
        self.q_residual.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `t,re_z1,im_z1,...,re_wm,im_wm,q_residual`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let l = self.z.first().map_or(0, |z| z.len());
        let m = self.w.first().map_or(0, |w| w.len());
        let mut head = vec!["t".to_string()];
        for i in 1..=l {
            head.push(format!("re_z{i}"));
            head.push(format!("im_z{i}"));
        }
        for j in 1..=m {
            head.push(format!("re_w{j}"));
            head.push(format!("im_w{j}"));
        }
        head.push("q_residual".into());
        writeln!(out, "{}", head.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:.16e}", self.t[k])];
            for c in self.z[k].iter().chain(self.w[k].iter()) {
                row.push(format!("{:.16e}", c.re));
                row.push(format!("{:.16e}", c.im));
            }
            row.push(format!("{:.16e}", self.q_residual[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Sequential leaf integrator holding the current transverse recipe.
pub struct Tracer<'a> {
    pub prob: &'a Problem,
    pub recipe: TransverseRecipe,
    pub opts: TraceOptions,
    rebuilds: usize,
}

impl<'a> Tracer<'a> {
    pub fn new(prob: &'a Problem, z0: &CVec, opts: TraceOptions) -> Result<Self> {
        let recipe = find_transverse_recipe(prob, z0)?;
        Ok(Tracer { prob, recipe, opts, rebuilds: 0 })
    }

    pub fn with_recipe(prob: &'a Problem, recipe: TransverseRecipe, opts: TraceOptions) -> Self {
        Tracer { prob, recipe, opts, rebuilds: 0 }
    }

    /// Lift, rebuilding the recipe at `z` when the decomposition degrades.
    pub fn lift(&mut self, z: &CVec, w: &CVec, u: &CVec) -> Result<Lift> {
        match lift_real_tangent(self.prob, z, w, u, &self.recipe) {
            Ok(l) if l.condition <= self.opts.recipe_cond_max => Ok(l),
            Ok(_) | Err(Error::BasisDegenerate { .. }) => {
                self.recipe = find_transverse_recipe(self.prob, z)?;
                self.rebuilds += 1;
                lift_real_tangent(self.prob, z, w, u, &self.recipe)
            }
            Err(e) => Err(e),
        }
    }

    fn fiber(&self, z: &CVec, w: &CVec) -> Result<CVec> {
        let p = self.prob.project_to_m(&Point::new(z.clone(), w.clone()), true)?;
        Ok(p.w)
    }

    fn q_residual(&self, z: &CVec, w: &CVec) -> Result<f64> {
        let (_, q) = self.prob.residuals(&Point::new(z.clone(), w.clone()))?;
        Ok(q.iter().fold(0.0f64, |a, b| a.max(b.abs())))
    }

    /// Leaf velocity at parameter `t` for state `w`; the field is evaluated at
    /// the fiber projection of `w`.
    fn rhs(&mut self, path: &dyn Path, t: f64, w: &CVec) -> Result<(CVec, f64)> {
        let z = path.point(self.prob, t)?;
        let zd = path.velocity(self.prob, t)?;
        let wp = self.fiber(&z, w)?;
        let l = self.lift(&z, &wp, &zd)?;
        Ok((l.v, l.condition))
    }

    /// Classical RK4 on `w` along `path` from `seed`.
    pub fn trace(&mut self, seed: &Point, path: &dyn Path, steps: usize) -> Result<LeafTrace> {
        let prob = self.prob;
        let seed = prepare_seed(prob, seed)?;
        let (t0, t1) = path.domain();
        let z0 = path.point(prob, t0)?;
        let gap = (&z0 - &seed.z).norm();
        if gap > 1e-8 {
            return Err(Error::PathMismatch { distance: gap });
        }
        let steps = steps.max(1);
        let dt = (t1 - t0) / steps as f64;
        let mut w = seed.w.clone();
        let mut out = LeafTrace {
            t: vec![t0],
            z: vec![z0.clone()],
            w: vec![w.clone()],
            q_residual: vec![self.q_residual(&z0, &w)?],
            condition: Vec::with_capacity(steps + 1),
            recipe_rebuilds: 0,
        };
        let half = C64::new(dt / 2.0, 0.0);
        // compensated (Kahan) update of the state
        let mut comp = CVec::zeros(w.len());
        for k in 0..steps {
            let t = t0 + k as f64 * dt;
            let tn = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
            let (k1, cond) = self.rhs(path, t, &w)?;
            if k == 0 {
                out.condition.push(cond);
            }
            let (k2, _) = self.rhs(path, t + dt / 2.0, &(&w + &k1 * half))?;
            let (k3, _) = self.rhs(path, t + dt / 2.0, &(&w + &k2 * half))?;
            let (k4, _) = self.rhs(path, tn, &(&w + &k3 * C64::new(dt, 0.0)))?;
            let incr = (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
            let zn = path.point(prob, tn)?;
            let y = incr - &comp;
            let mut wn = &w + &y;
            comp = (&wn - &w) - y;
            if self.opts.project_steps {
                let wp = self.fiber(&zn, &wn)?;
                if wp != wn {
                    comp.fill(C64::new(0.0, 0.0));
                }
                wn = wp;
            }
            let res = self.q_residual(&zn, &wn)?;
            if self.opts.project_steps && res > self.opts.trace_tol {
                return Err(Error::StepRejected { t: tn, residual: res });
            }
            w = wn;
            out.t.push(tn);
            out.z.push(zn);
            out.w.push(w.clone());
            out.q_residual.push(res);
            out.condition.push(cond);
        }
        out.recipe_rebuilds = self.rebuilds;
        Ok(out)
    }
}

/// Check the seed distance and snap it onto M (z onto S, then w onto the fiber).
pub fn prepare_seed(prob: &Problem, seed: &Point) -> Result<Point> {
    let (p, q) = prob.residuals(seed)?;
    let dist = p.iter().chain(q.iter()).fold(0.0f64, |a, b| a.max(b.abs()));
    if dist > SEED_MAX {
        return Err(Error::SeedRejected { distance: dist });
    }
    if dist <= prob.tol.proj_tol {
        return Ok(seed.clone());
    }
    let z = if p.iter().any(|v| v.abs() > prob.tol.proj_tol) { prob.project_to_s(&seed.z)? } else { seed.z.clone() };
    prob.project_to_m(&Point::new(z, seed.w.clone()), true)
}

/// Trace a leaf from `seed` along `path`.
pub fn trace_leaf(prob: &Problem, seed: &Point, path: &dyn Path, steps: usize, opts: TraceOptions) -> Result<LeafTrace> {
    let seed = prepare_seed(prob, seed)?;
    Tracer::new(prob, &seed.z, opts)?.trace(&seed, path, steps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Holonomy {
    /// `|w(t1) - w(t0)|`
    pub gap: f64,
    pub trace: LeafTrace,
}

pub fn holonomy(prob: &Problem, seed: &Point, lp: &dyn Path, steps: usize, opts: TraceOptions) -> Result<Holonomy> {
    let (t0, t1) = lp.domain();
    let close = (lp.point(prob, t1)? - lp.point(prob, t0)?).norm();
    if close > 1e-10 {
        return Err(Error::LoopNotClosed { gap: close });
    }
    let trace = trace_leaf(prob, seed, lp, steps, opts)?;
    let gap = (trace.last_w() - &trace.w[0]).norm();
    Ok(Holonomy { gap, trace })
}

/// One row of a foliation table.
#[derive(Clone, Debug, PartialEq)]
pub struct FoliateRow {
    pub z: CVec,
    pub w: Option<CVec>,
    pub max_residual: f64,
    pub error: Option<Error>,
}

/// Trace one leaf per target along chords from the seed, in parallel.
pub fn foliate(prob: &Problem, seed: &Point, targets: &[CVec], steps: usize, opts: TraceOptions) -> Result<Vec<FoliateRow>> {
    let seed = prepare_seed(prob, seed)?;
    let recipe = find_transverse_recipe(prob, &seed.z)?;
    let rows = targets
        .par_iter()
        .map(|z| {
            let run = || -> Result<LeafTrace> {
                if (z - &seed.z).norm() < 1e-14 {
                    let r = prob.residuals(&seed)?.1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                    return Ok(LeafTrace {
                        t: vec![0.0],
                        z: vec![seed.z.clone()],
                        w: vec![seed.w.clone()],
                        q_residual: vec![r],
                        condition: vec![],
                        recipe_rebuilds: 0,
                    });
                }
                let chord = Chord { a: seed.z.clone(), b: z.clone() };
                Tracer::with_recipe(prob, recipe.clone(), opts).trace(&seed, &chord, steps)
            };
            match run() {
                Ok(tr) => FoliateRow { z: z.clone(), w: Some(tr.last_w().clone()), max_residual: tr.max_residual(), error: None },
                Err(e) => FoliateRow { z: z.clone(), w: None, max_residual: f64::NAN, error: Some(e) },
            }
        })
        .collect();
    Ok(rows)
}

/// Centers on S with Wirtinger stencils along each horizontal direction:
/// `z ± hσ` and `z ± h·iσ`, projected onto S.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafMesh {
    pub centers: Vec<CVec>,
    /// Horizontal directions per center.
    pub dirs: Vec<Vec<CVec>>,
    pub h: f64,
    /// All stencil points; center `c` starts at `offsets[c]` with the center
    /// itself, followed by four points per direction.
    pub points: Vec<CVec>,
    pub offsets: Vec<usize>,
    /// Traced values `f(z)` once filled.
    pub values: Vec<Option<CVec>>,
}

impl LeafMesh {
    pub fn new(prob: &Problem, centers: &[CVec], h: f64) -> Result<Self> {
        if h > 1e-2 {
            return Err(Error::MeshTooCoarse { step: h });
        }
        let mut points = Vec::new();
        let mut offsets = Vec::new();
        let mut dirs = Vec::new();
        for z in centers {
            offsets.push(points.len());
            points.push(z.clone());
            let s = prob.horizontal_basis(z)?;
            let mut ds = Vec::new();
            for i in 0..s.dim() {
                let sigma = s.column(i);
                for d in [sigma.clone(), &sigma * C64::i()] {
                    for sign in [1.0, -1.0] {
                        points.push(prob.project_to_s(&(z + &d * C64::new(sign * h, 0.0)))?);
                    }
                }
                ds.push(sigma);
            }
            dirs.push(ds);
        }
        let values = vec![None; points.len()];
        Ok(LeafMesh { centers: centers.to_vec(), dirs, h, points, offsets, values })
    }

    /// Trace every stencil point from `seed`. Returns the failed rows.
    pub fn fill(&mut self, prob: &Problem, seed: &Point, steps: usize, opts: TraceOptions) -> Result<Vec<FoliateRow>> {
        let rows = foliate(prob, seed, &self.points, steps, opts)?;
        let mut failed = Vec::new();
        for (k, row) in rows.into_iter().enumerate() {
            self.values[k] = row.w.clone();
            if row.error.is_some() {
                failed.push(row);
            }
        }
        Ok(failed)
    }

    pub fn set_values(&mut self, values: Vec<CVec>) -> Result<()> {
        if values.len() != self.points.len() {
            return Err(Error::Dimension(format!("{} values for {} mesh points", values.len(), self.points.len())));
        }
        self.values = values.into_iter().map(Some).collect();
        Ok(())
    }

    /// Graph points `(z, f(z))`.
    pub fn graph(&self) -> Result<Vec<Point>> {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(z, w)| match w {
                Some(w) => Ok(Point::new(z.clone(), w.clone())),
                None => Err(Error::MeshIncomplete { failed: self.values.iter().filter(|v| v.is_none()).count() }),
            })
            .collect()
    }

    /// Wirtinger `s̄`-derivatives `½(D_σ g + i D_{iσ} g)` of per-point values,
    /// one vector per center and direction.
    pub fn sbar(&self, vals: &[CVec]) -> Vec<Vec<CVec>> {
        let h2 = C64::new(2.0 * self.h, 0.0);
        self.offsets
            .iter()
            .zip(&self.dirs)
            .map(|(&o, ds)| {
                (0..ds.len())
                    .map(|i| {
                        let b = o + 1 + 4 * i;
                        let d_re = (&vals[b] - &vals[b + 1]) / h2;
                        let d_im = (&vals[b + 2] - &vals[b + 3]) / h2;
                        (d_re + d_im * C64::i()) * C64::new(0.5, 0.0)
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest `|s̄ g|` over centers and directions.
    pub fn max_sbar(&self, vals: &[CVec]) -> f64 {
        self.sbar(vals).iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// CR defect of the traced map: largest `|s̄ f|` over the mesh.
pub fn cr_residual(mesh: &LeafMesh) -> Result<f64> {
    let g = mesh.graph()?;
    let vals: Vec<CVec> = g.into_iter().map(|p| p.w).collect();
    Ok(mesh.max_sbar(&vals))
}

/// Sample points of S near `z0` by Gaussian ambient perturbation and projection.
pub fn sample_near<R: rand::Rng>(prob: &Problem, z0: &CVec, radius: f64, count: usize, rng: &mut R) -> Result<Vec<CVec>> {
    use rand_distr::{Distribution, StandardNormal};
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 100 * count.max(1) {
            return Err(Error::NewtonDiverged { iterations: tries, residual: f64::NAN });
        }
        let d = CVec::from_fn(z0.len(), |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) * radius
        });
        if let Ok(z) = prob.project_to_s(&(z0 + d)) {
            if prob.constraint_values(Space::S, z.as_slice()).is_ok() {
                out.push(z);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }
    fn v(xs: &[C64]) -> CVec {
        CVec::from_column_slice(xs)
    }

    const SPHERE: &str = "z1*conj(z1)+z2*conj(z2)-1";

    fn example1() -> Problem {
        Problem::from_sources(2, 1, 2, &[SPHERE], &["(w1-z1)*conj(w1-z1)-1"]).unwrap()
    }

    fn great_circle() -> PathSpec {
        PathSpec::parse(&["cos(t)", "sin(t)"], 0.0, FRAC_PI_2, false).unwrap()
    }

    #[test]
    fn lift_examples() {
        let p = example1();
        let z = v(&[c(0.0, 0.0), c(1.0, 0.0)]);
        let w = v(&[c(1.0, 0.0)]);
        let rec = find_transverse_recipe(&p, &z).unwrap();
        let l = lift_real_tangent(&p, &z, &w, &v(&[c(1.0, 0.0), c(0.0, 0.0)]), &rec).unwrap();
        assert!((l.v[0] - c(1.0, 0.0)).norm() < 1e-9, "{l:?}");
        assert!(l.z_defect <= 1e-10);
        let l = lift_real_tangent(&p, &z, &w, &v(&[c(0.0, 0.0), c(0.0, 0.0)]), &rec).unwrap();
        assert_eq!(l.v[0].norm(), 0.0);
        // not tangent to S
        assert!(matches!(
            lift_real_tangent(&p, &z, &w, &v(&[c(0.0, 0.0), c(1.0, 0.0)]), &rec),
            Err(Error::NotTangent { .. })
        ));
    }

    #[test]
    fn quarter_circle_matches_closed_form() {
        let p = example1();
        let seed = Point::from_slices(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(2.0, 0.0)]);
        let tr = trace_leaf(&p, &seed, &great_circle(), 200, TraceOptions::default()).unwrap();
        let err = tr.t.iter().zip(&tr.w).map(|(t, w)| (w[0] - c(t.cos() + 1.0, 0.0)).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "{err}");
        assert!(tr.max_residual() <= 1e-9);
    }

    #[test]
    fn constant_path_keeps_w() {
        let p = example1();
        let seed = Point::from_slices(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(2.0, 0.0)]);
        let path = PathSpec::parse(&["1", "0"], 0.0, 1.0, false).unwrap();
        let tr = trace_leaf(&p, &seed, &path, 10, TraceOptions::default()).unwrap();
        assert!((tr.last_w() - &seed.w).norm() < 1e-14);
    }

    #[test]
    fn seed_and_path_checks() {
        let p = example1();
        let far = Point::from_slices(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(2.5, 0.0)]);
        assert!(matches!(trace_leaf(&p, &far, &great_circle(), 10, TraceOptions::default()), Err(Error::SeedRejected { .. })));
        let other = Point::from_slices(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0)]);
        assert!(matches!(trace_leaf(&p, &other, &great_circle(), 10, TraceOptions::default()), Err(Error::PathMismatch { .. })));
        let open = PathSpec::parse(&["cos(t)", "sin(t)"], 0.0, 1.0, false).unwrap();
        let seed = Point::from_slices(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(2.0, 0.0)]);
        assert!(matches!(holonomy(&p, &seed, &open, 10, TraceOptions::default()), Err(Error::LoopNotClosed { .. })));
    }

    #[test]
    fn zero_length_loop_has_no_holonomy() {
        let p = example1();
        let lp = PathSpec::parse(&["cos(t)", "sin(t)"], 0.3, 0.3, false).unwrap();
        let seed = Point::from_slices(&[c(0.3f64.cos(), 0.0), c(0.3f64.sin(), 0.0)], &[c(0.3f64.cos() + 1.0, 0.0)]);
        let h = holonomy(&p, &seed, &lp, 4, TraceOptions::default()).unwrap();
        assert_eq!(h.gap, 0.0);
    }

    #[test]
    fn foliate_and_mesh() {
        let p = example1();
        let seed = Point::from_slices(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(2.0, 0.0)]);
        let r = 1.0 / 2f64.sqrt();
        let targets = vec![seed.z.clone(), v(&[c(r, 0.0), c(0.0, r)])];
        let rows = foliate(&p, &seed, &targets, 100, TraceOptions::default()).unwrap();
        assert_eq!(rows[0].w.as_ref().unwrap(), &seed.w);
        assert!((rows[1].w.as_ref().unwrap()[0] - c(r + 1.0, 0.0)).norm() < 1e-6);
        let mut mesh = LeafMesh::new(&p, &targets[1..], MESH_H).unwrap();
        assert!(mesh.fill(&p, &seed, 100, TraceOptions::default()).unwrap().is_empty());
        assert!(cr_residual(&mesh).unwrap() <= 1e-3);
        assert!(matches!(LeafMesh::new(&p, &targets, 0.1), Err(Error::MeshTooCoarse { .. })));
    }

    #[test]
    fn csv_header_and_rows() {
        let p = example1();
        let seed = Point::from_slices(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(2.0, 0.0)]);
        let tr = trace_leaf(&p, &seed, &great_circle(), 4, TraceOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,re_z1,im_z1,re_z2,im_z2,re_w1,im_w1,q_residual");
        assert_eq!(lines.count(), 5);
    }
}
