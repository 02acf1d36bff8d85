use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::problem_file::{NamedPath, ProblemFile};
use super::report::{Record, Report, Status};
use crate::error::Error;
use crate::expr::{Expression, Point, C64};
use crate::geometry::{LiftSystem, Problem};
use crate::involutivity::{
    check_condition_i, check_lemma1, check_n_involutive, find_transverse_recipe, Chart, ResidualReport, Verdict,
    TUPLE_CAP,
};
use crate::linalg::{CMat, CVec};
use crate::rh::{self, Normalization};
use crate::tracer::{self, FoliateRow, LeafMesh, LeafTrace, TraceOptions, MESH_H};

/// Radius of the Gaussian perturbation used to pick targets and mesh centers
/// around a seed.
pub const SAMPLE_RADIUS: f64 = 0.3;

/// Settings shared by all commands. `tol` overrides the tolerance of the
/// command's headline check.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub seed: Option<String>,
    pub path: Option<String>,
    pub steps: Option<usize>,
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub rng_seed: u64,
}

/// Default tolerances, overridable by `tol.<key>` in the problem file.
pub const DEFAULT_TOLS: &[(&str, f64)] = &[
    ("levi", 1e-8),
    ("lift", 1e-10),
    ("lemma1", 1e-4),
    ("involutive", 1e-4),
    ("condition_i", 1e-3),
    ("residual", 1e-9),
    ("trace", 1e-6),
    ("holonomy", 1e-6),
    ("cr", 1e-3),
    ("lemma4", 1e-3),
    ("phi_cr", 1e-6),
    ("phi_nonzero", 1e-8),
    ("pairing", 1e-8),
];

struct Ctx<'a> {
    file: &'a ProblemFile,
    opts: &'a Options,
    headline: &'static str,
}

impl Ctx<'_> {
    fn prob(&self) -> &Problem {
        &self.file.problem
    }

    fn tol(&self, key: &str) -> f64 {
        if key == self.headline {
            if let Some(t) = self.opts.tol {
                return t;
            }
        }
        let default = DEFAULT_TOLS.iter().find(|(k, _)| *k == key).map_or(0.0, |(_, v)| *v);
        self.file.tol_or(key, default)
    }

    fn trace_opts(&self) -> TraceOptions {
        TraceOptions { trace_tol: self.tol("residual"), ..TraceOptions::default() }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.opts.rng_seed)
    }

    fn seed(&self) -> std::result::Result<(String, Point), Record> {
        let found = match &self.opts.seed {
            Some(n) => self.file.seed(n).map(|p| (n.clone(), p.clone())),
            None => self.file.seeds.first().cloned(),
        };
        found.ok_or_else(|| Record::error("seed", "no such seed in the problem file"))
    }

    /// The named path, or the first path starting at `z` (closed if `closed`).
    fn path(&self, z: &CVec, closed: bool) -> std::result::Result<(String, NamedPath), Record> {
        if let Some(n) = &self.opts.path {
            return self.file.path(n).map(|p| (n.clone(), p.clone())).ok_or_else(|| Record::error("path", "no such path"));
        }
        let prob = self.prob();
        let fits = |p: &NamedPath| -> bool {
            let start = tracer::Path::point(&p.spec, prob, p.spec.t0);
            let end = tracer::Path::point(&p.spec, prob, p.spec.t1);
            match (start, end) {
                (Ok(a), Ok(b)) => (&a - z).norm() <= 1e-8 && (!closed || (&b - &a).norm() <= 1e-10),
                _ => false,
            }
        };
        self.file
            .paths
            .iter()
            .find(|(_, p)| fits(p))
            .cloned()
            .ok_or_else(|| Record::error("path", "no path in the file starts at the seed"))
    }

    fn expect_error(&self, seed: &str, pts: &[(CVec, CVec)]) -> Option<Record> {
        let ex = self.file.expect.get(seed)?;
        Some(match max_expect_error(ex, pts) {
            Ok(e) => Record::at_most("max_error", e, self.tol("trace"), format!("against expect.{seed}")),
            Err(e) => Record::error("max_error", e),
        })
    }
}

fn max_expect_error(ex: &[Expression], pts: &[(CVec, CVec)]) -> crate::Result<f64> {
    let mut worst = 0.0f64;
    for (z, w) in pts {
        for (e, wi) in ex.iter().zip(w.iter()) {
            worst = worst.max((e.eval(z.as_slice())? - wi).norm());
        }
    }
    Ok(worst)
}

fn from_residual(name: String, rep: &ResidualReport) -> Record {
    let status = match rep.verdict {
        Verdict::Pass => Status::Pass,
        Verdict::Fail => Status::Fail,
        Verdict::Vacuous => Status::Vacuous,
    };
    let worst = rep.items.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|(n, _)| n.clone()).unwrap_or_default();
    Record::new(name, status, rep.max_residual, rep.tol, worst)
}

/// Missing frames are a property of the instance, not a tool failure.
fn failed(name: String, e: Error) -> Record {
    match e {
        Error::NDimensionDefect { .. } | Error::RankDefect { .. } | Error::NormalizerVanishes { .. } => {
            Record { status: Status::Fail, ..Record::error(name, e) }
        }
        _ => Record::error(name, e),
    }
}

fn finish(command: &str, file: &ProblemFile, records: Vec<Record>, start: Instant) -> Report {
    Report::new(command, &file.name, records, start.elapsed().as_secs_f64())
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    CVec::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// Points of M obtained by projecting Gaussian ambient points.
pub fn sample_on_m(prob: &Problem, count: usize, rng: &mut ChaCha8Rng) -> crate::Result<Vec<Point>> {
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 50 * count.max(1) {
            return Err(Error::NewtonDiverged { iterations: tries, residual: f64::NAN });
        }
        let z = gaussian(prob.l, rng);
        let w = gaussian(prob.m, rng);
        let Ok(z) = prob.project_to_s(&z) else { continue };
        if let Ok(x) = prob.project_to_m(&Point::new(z, w), true) {
            out.push(x);
        }
    }
    Ok(out)
}

fn check_point(ctx: &Ctx, x: &Point, label: &str) -> Vec<Record> {
    let prob = ctx.prob();
    let tag = |n: &str| format!("{n}@{label}");
    let r = prob.rank_h();
    let mut out = Vec::new();
    out.push(match prob.n_dimension(&x.z, &x.w) {
        Ok(dim) => {
            let st = if dim == r { Status::Pass } else { Status::Fail };
            Record::new(tag("n_dimension"), st, dim as f64, r as f64, format!("dim N = {dim}, l - c = {r}"))
        }
        Err(e) => Record::error(tag("n_dimension"), e),
    });
    out.push(match prob.fiber_levi_nondegenerate(&x.z, &x.w, ctx.tol("levi")) {
        Ok((_, sv)) => {
            let st = if sv > ctx.tol("levi") { Status::Pass } else { Status::Fail };
            Record::new(tag("levi"), st, sv, ctx.tol("levi"), "smallest singular value of the lift system")
        }
        Err(e) => Record::error(tag("levi"), e),
    });
    out.push(
        match LiftSystem::at(prob, x).and_then(|s| s.lift(&CMat::zeros(prob.l, 1))) {
            Ok(b) => Record::at_most(tag("lift"), b.norm(), ctx.tol("lift"), "homogeneous lift"),
            Err(e) => failed(tag("lift"), e),
        },
    );
    let chart = match Chart::on_m(prob, x) {
        Ok(c) => c,
        Err(e) => {
            out.push(Record::error(tag("chart"), e));
            return out;
        }
    };
    if prob.m > prob.d {
        match find_transverse_recipe(prob, &x.z) {
            Ok(recipe) => {
                for (i, entry) in recipe.entries.iter().enumerate() {
                    let name = tag(&format!("lemma1[{}]", i + 1));
                    out.push(match check_lemma1(&chart, &entry.word, ctx.tol("lemma1")) {
                        Ok(rep) => from_residual(name, &rep),
                        Err(e) => failed(name, e),
                    });
                }
            }
            Err(e) => out.push(Record::error(tag("lemma1"), e)),
        }
    } else {
        out.push(Record::vacuous(tag("lemma1"), "m = d"));
    }
    out.push(match check_n_involutive(&chart, ctx.tol("involutive")) {
        Ok(rep) => from_residual(tag("involutive"), &rep),
        Err(e) => failed(tag("involutive"), e),
    });
    let tol = ctx.tol("condition_i");
    out.push(match check_condition_i(prob, &x.z, &x.w, prob.tau + 1, tol, TUPLE_CAP) {
        Ok(cert) => {
            let st = match cert.verdict {
                Verdict::Pass => Status::Pass,
                Verdict::Fail => Status::Fail,
                Verdict::Vacuous => Status::Vacuous,
            };
            let details = if cert.worst.is_empty() { cert.note.clone() } else { format!("{}; worst {}", cert.note, cert.worst.join(" ")) };
            Record::new(tag("condition_i"), st, cert.max_residual, tol, details)
        }
        Err(e) => Record::error(tag("condition_i"), e),
    });
    out
}

/// Geometry and bracket checks at the file's seeds and at sampled points of M.
pub fn cmd_check(file: &ProblemFile, opts: &Options) -> Report {
    let start = Instant::now();
    let ctx = Ctx { file, opts, headline: "condition_i" };
    let n = opts.samples.unwrap_or(8);
    let mut records = Vec::new();
    let mut pts: Vec<(String, Point)> = Vec::new();
    for (name, seed) in &file.seeds {
        match tracer::prepare_seed(ctx.prob(), seed) {
            Ok(x) => pts.push((format!("seed.{name}"), x)),
            Err(e) => records.push(Record::error(format!("seed.{name}"), e)),
        }
    }
    match sample_on_m(ctx.prob(), n, &mut ctx.rng()) {
        Ok(s) => pts.extend(s.into_iter().enumerate().map(|(k, x)| (k.to_string(), x))),
        Err(e) => records.push(Record::error("sampling", e)),
    }
    records.extend(pts.par_iter().map(|(label, x)| check_point(&ctx, x, label)).collect::<Vec<_>>().concat());
    finish("check", file, records, start)
}

/// Trace one leaf from a seed along a path.
pub fn cmd_trace(file: &ProblemFile, opts: &Options) -> (Report, Option<LeafTrace>) {
    let start = Instant::now();
    let ctx = Ctx { file, opts, headline: "trace" };
    let (sname, seed) = match ctx.seed() {
        Ok(s) => s,
        Err(r) => return (finish("trace", file, vec![r], start), None),
    };
    let (pname, path) = match ctx.path(&seed.z, false) {
        Ok(p) => p,
        Err(r) => return (finish("trace", file, vec![r], start), None),
    };
    let steps = opts.steps.unwrap_or(1000);
    match tracer::trace_leaf(ctx.prob(), &seed, &path.spec, steps, ctx.trace_opts()) {
        Ok(tr) => {
            let mut records = vec![Record::at_most(
                "q_residual",
                tr.max_residual(),
                ctx.tol("residual"),
                format!("seed {sname}, path {pname}, {steps} steps, {} recipe rebuilds", tr.recipe_rebuilds),
            )];
            let pts: Vec<(CVec, CVec)> = tr.z.iter().cloned().zip(tr.w.iter().cloned()).collect();
            records.extend(ctx.expect_error(&sname, &pts));
            (finish("trace", file, records, start), Some(tr))
        }
        Err(e) => (finish("trace", file, vec![failed("trace".into(), e)], start), None),
    }
}

/// Holonomy around a closed path, at `N` and `2N` steps.
pub fn cmd_holonomy(file: &ProblemFile, opts: &Options) -> Report {
    let start = Instant::now();
    let ctx = Ctx { file, opts, headline: "holonomy" };
    let (sname, seed) = match ctx.seed() {
        Ok(s) => s,
        Err(r) => return finish("holonomy", file, vec![r], start),
    };
    let (pname, path) = match ctx.path(&seed.z, true) {
        Ok(p) => p,
        Err(r) => return finish("holonomy", file, vec![r], start),
    };
    let steps = opts.steps.unwrap_or(1000);
    let run = |n| tracer::holonomy(ctx.prob(), &seed, &path.spec, n, ctx.trace_opts());
    let rec = match (run(steps), run(2 * steps)) {
        (Ok(a), Ok(b)) => Record::at_most(
            "holonomy",
            b.gap,
            ctx.tol("holonomy"),
            format!("seed {sname}, loop {pname}: gap {:.3e} at {steps} steps, {:.3e} at {} steps", a.gap, b.gap, 2 * steps),
        ),
        (Err(e), _) | (_, Err(e)) => failed("holonomy".into(), e),
    };
    finish("holonomy", file, vec![rec], start)
}

/// Leaves through sampled targets near the seed, traced along chords.
pub fn cmd_foliate(file: &ProblemFile, opts: &Options) -> (Report, Vec<FoliateRow>) {
    let start = Instant::now();
    let ctx = Ctx { file, opts, headline: "trace" };
    let (sname, seed) = match ctx.seed() {
        Ok(s) => s,
        Err(r) => return (finish("foliate", file, vec![r], start), Vec::new()),
    };
    let prob = ctx.prob();
    let targets = tracer::sample_near(prob, &seed.z, SAMPLE_RADIUS, opts.samples.unwrap_or(8), &mut ctx.rng());
    let rows = targets.and_then(|t| tracer::foliate(prob, &seed, &t, opts.steps.unwrap_or(200), ctx.trace_opts()));
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return (finish("foliate", file, vec![Record::error("foliate", e)], start), Vec::new()),
    };
    let mut records = Vec::new();
    let mut pts = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let name = format!("leaf@{k}");
        match (&row.w, &row.error) {
            (Some(w), None) => {
                records.push(Record::at_most(name, row.max_residual, ctx.tol("residual"), "q-residual along the chord"));
                pts.push((row.z.clone(), w.clone()));
            }
            (_, Some(e)) => records.push(failed(name, e.clone())),
            (None, None) => records.push(Record::error(name, "no value")),
        }
    }
    records.extend(ctx.expect_error(&sname, &pts));
    (finish("foliate", file, records, start), rows)
}

/// CR and normalizer checks on a mesh of traced leaves around the seed.
pub fn cmd_verify(file: &ProblemFile, opts: &Options) -> Report {
    let start = Instant::now();
    let ctx = Ctx { file, opts, headline: "cr" };
    let (sname, seed) = match ctx.seed() {
        Ok(s) => s,
        Err(r) => return finish("verify", file, vec![r], start),
    };
    let prob = ctx.prob();
    let mesh = tracer::sample_near(prob, &seed.z, SAMPLE_RADIUS, opts.samples.unwrap_or(4), &mut ctx.rng())
        .and_then(|c| LeafMesh::new(prob, &c, MESH_H))
        .and_then(|mut m| {
            let bad = m.fill(prob, &seed, opts.steps.unwrap_or(200), ctx.trace_opts())?;
            match bad.into_iter().next() {
                Some(row) => Err(row.error.unwrap_or(Error::MeshIncomplete { failed: 1 })),
                None => Ok(m),
            }
        });
    let mesh = match mesh {
        Ok(m) => m,
        Err(e) => return finish("verify", file, vec![failed("mesh".into(), e)], start),
    };
    let mut records = vec![match tracer::cr_residual(&mesh) {
        Ok(v) => Record::at_most("cr_residual", v, ctx.tol("cr"), format!("{} centers, h = {:e}", mesh.centers.len(), mesh.h)),
        Err(e) => Record::error("cr_residual", e),
    }];
    if let Ok(graph) = mesh.graph() {
        let pts: Vec<(CVec, CVec)> = graph.into_iter().map(|p| (p.z, p.w)).collect();
        records.extend(ctx.expect_error(&sname, &pts));
    }
    records.extend(rh_records(&ctx, &mesh));
    finish("verify", file, records, start)
}

fn rh_records(ctx: &Ctx, mesh: &LeafMesh) -> Vec<Record> {
    let prob = ctx.prob();
    let mut out = Vec::new();
    let phis = match rh::phi_on_mesh(prob, mesh) {
        Ok(p) => p,
        Err(e) => return vec![Record::error("phi", e)],
    };
    let smallest = phis.iter().map(|p| p.max_abs()).fold(f64::INFINITY, f64::min);
    out.push(Record::at_least("phi_nonzero", smallest, ctx.tol("phi_nonzero"), "min over mesh of max |phi_I|"));
    let ntuples = phis.first().map_or(0, |p| p.tuples.len());
    out.push(if ntuples < 2 {
        Record::vacuous("lemma4", "single tuple")
    } else {
        match rh::lemma4_max(prob, mesh) {
            Ok(v) => Record::at_most("lemma4", v, ctx.tol("lemma4"), format!("{ntuples} tuples")),
            Err(e) => Record::error("lemma4", e),
        }
    });
    let choice = if prob.d == prob.m {
        Some(Normalization::Canonical)
    } else if prob.d == 1 {
        Some(Normalization::Graph)
    } else {
        None
    };
    match choice.map(|h| rh::normalize_c(prob, mesh, &h)) {
        None => out.push(Record::vacuous("phi_cr", "no normalizer h for 1 < d < m")),
        Some(Err(e)) => out.push(failed("phi_cr".into(), e)),
        Some(Ok(c)) => {
            for (i, t) in phis[0].tuples.iter().enumerate() {
                let label: Vec<String> = t.iter().map(|j| (j + 1).to_string()).collect();
                let name = format!("phi_cr[{}]", label.join(","));
                let rec = rh::normalized_phi(prob, mesh, &c, i)
                    .and_then(|v| rh::cr_check(mesh, &v))
                    .map(|v| Record::at_most(&name, v, ctx.tol("phi_cr"), format!("{}, min |C| = {:.3e}", c.choice, c.min_abs)));
                out.push(rec.unwrap_or_else(|e| Record::error(name, e)));
            }
        }
    }
    if prob.d == 1 {
        out.push(match rh::convex_pairing(prob, mesh) {
            Ok(v) => Record::at_least("pairing", v, ctx.tol("pairing"), "min |sum f_i dq/dw_i|"),
            Err(e) => Record::error("pairing", e),
        });
    }
    out
}

/// CSV of foliation rows: target `z`, value `w` (empty on failure), residual, error.
pub fn write_foliate_csv<W: Write>(rows: &[FoliateRow], mut out: W) -> std::io::Result<()> {
    let Some(first) = rows.first() else { return Ok(()) };
    let l = first.z.len();
    let m = rows.iter().find_map(|r| r.w.as_ref().map(|w| w.len())).unwrap_or(0);
    let mut head = Vec::new();
    for i in 1..=l {
        head.push(format!("re_z{i},im_z{i}"));
    }
    for i in 1..=m {
        head.push(format!("re_w{i},im_w{i}"));
    }
    writeln!(out, "{},max_residual,error", head.join(","))?;
    for r in rows {
        let mut cells: Vec<String> = r.z.iter().map(|c| format!("{:.16e},{:.16e}", c.re, c.im)).collect();
        match &r.w {
            Some(w) => cells.extend(w.iter().map(|c| format!("{:.16e},{:.16e}", c.re, c.im))),
            None => cells.extend(std::iter::repeat_n(",".to_string(), m)),
        }
        let err = r.error.as_ref().map(|e| e.to_string().replace(',', ";")).unwrap_or_default();
        writeln!(out, "{},{:.16e},{}", cells.join(","), r.max_residual, err)?;
    }
    Ok(())
}
