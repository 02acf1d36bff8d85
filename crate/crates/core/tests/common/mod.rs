#![allow(dead_code)]

use std::path::PathBuf;

use crfol::cli::{load, ProblemFile};
use crfol::expr::{gradient, jet2, parse, Dims, Expression, Point, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.prob"))
}

pub fn corpus(name: &str) -> ProblemFile {
    load(&corpus_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Random complex rational expression in z1, z2, w1. Denominators are
/// bounded below by 1.
fn random_rational(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..5) {
            0 => "z1".into(),
            1 => "z2".into(),
            2 => "w1".into(),
            3 => "conj(z2)".into(),
            _ => {
                let re = rng.random_range(-8i32..=8) as f64 / 4.0;
                let im = rng.random_range(-8i32..=8) as f64 / 4.0;
                format!("({re}+{im}*i)")
            }
        };
    }
    let a = random_rational(rng, depth - 1);
    match rng.random_range(0..7) {
        0 => format!("({a})+({})", random_rational(rng, depth - 1)),
        1 => format!("({a})-({})", random_rational(rng, depth - 1)),
        2 => format!("({a})*({})", random_rational(rng, depth - 1)),
        3 => format!("({a})/(1+abs2({}))", random_rational(rng, depth - 1)),
        4 => format!("conj({a})"),
        5 => format!("({a})^2"),
        _ => format!("(1+abs2({a}))^-1"),
    }
}

/// Two random complex rational parts `a`, `b` of the real test function
/// `re(a) + |b|^2`.
pub fn random_parts(rng: &mut ChaCha8Rng) -> (String, String) {
    (random_rational(rng, 3), random_rational(rng, 3))
}

fn eval_real(e: &Expression, x: &[f64]) -> f64 {
    let pts: Vec<C64> = x.chunks(2).map(|p| c(p[0], p[1])).collect();
    e.eval(&pts).unwrap().re
}

/// Fourth-order central difference of `f` along real coordinate `k`.
fn d1(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[k] += s * h;
        f(&y)
    };
    (at(-2.0) - at(2.0) + 8.0 * (at(1.0) - at(-1.0))) / (12.0 * h)
}

/// Worst relative block error and worst symmetry defect for one expression.
pub struct JetCheck {
    pub source: String,
    pub rel_error: f64,
    pub symmetry: f64,
}

pub fn check_jet(a: &str, b: &str, x: &Point) -> JetCheck {
    let dims = Dims::new(2, 1);
    let src = format!("re({a}) + abs2({b})");
    let e = parse(&src, dims).unwrap();
    let jet = jet2(&e, x).unwrap();
    let n = 3;
    let flat = x.flat();
    let xr: Vec<f64> = flat.iter().flat_map(|v| [v.re, v.im]).collect();
    let f = |y: &[f64]| eval_real(&e, y);
    let h = 1e-3;
    // real gradient and Hessian by finite differences only
    let g: Vec<f64> = (0..2 * n).map(|k| d1(&f, &xr, k, h)).collect();
    let hess = |a: usize, b: usize| d1(&|y: &[f64]| d1(&f, y, b, h), &xr, a, h);
    let wirt = |k: usize| c(0.5 * g[2 * k], -0.5 * g[2 * k + 1]);
    let mixed = |s: usize, i: usize| {
        let (xs, ys, xi, yi) = (2 * s, 2 * s + 1, 2 * i, 2 * i + 1);
        c(hess(xs, xi) + hess(ys, yi), hess(ys, xi) - hess(xs, yi)) * 0.25
    };
    let rel = |ad: Vec<C64>, fd: Vec<C64>| {
        let diff: f64 = ad.iter().zip(&fd).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = ad.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        diff / scale.max(1.0)
    };
    let value_err = (jet.value - f(&xr)).abs() / jet.value.abs().max(1.0);
    let dz = rel(jet.dz.iter().copied().collect(), (0..2).map(wirt).collect());
    let dw = rel(jet.dw.iter().copied().collect(), vec![wirt(2)]);
    let block = |m: &nalgebra::DMatrix<C64>, rows: &[usize], cols: &[usize]| {
        let mut ad = Vec::new();
        let mut fd = Vec::new();
        for (r, &s) in rows.iter().enumerate() {
            for (k, &i) in cols.iter().enumerate() {
                ad.push(m[(r, k)]);
                fd.push(mixed(s, i));
            }
        }
        rel(ad, fd)
    };
    let (zi, wi) = ([0, 1], [2]);
    let rel_error = [
        value_err,
        dz,
        dw,
        block(&jet.h_zbar_z, &zi, &zi),
        block(&jet.h_zbar_w, &zi, &wi),
        block(&jet.h_wbar_z, &wi, &zi),
        block(&jet.h_wbar_w, &wi, &wi),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    // reality: anti = conj(hol); Hermitian mixed Hessian
    let gr = gradient(&e, &flat).unwrap();
    let mut sym = gr.value.im.abs();
    for (a, b) in gr.hol.iter().zip(&gr.anti) {
        sym = sym.max((a.conj() - b).norm());
    }
    for s in 0..2 {
        for i in 0..2 {
            sym = sym.max((jet.h_zbar_z[(s, i)].conj() - jet.h_zbar_z[(i, s)]).norm());
        }
        sym = sym.max((jet.h_zbar_w[(s, 0)].conj() - jet.h_wbar_z[(0, s)]).norm());
    }
    sym = sym.max(jet.h_wbar_w[(0, 0)].im.abs());
    // conjugation: the gradient of conj(g) swaps and conjugates the blocks
    let g1 = parse(a, dims).unwrap();
    let g2 = parse(&format!("conj({a})"), dims).unwrap();
    let (a, b) = (gradient(&g1, &flat).unwrap(), gradient(&g2, &flat).unwrap());
    sym = sym.max((a.value.conj() - b.value).norm());
    for k in 0..n {
        sym = sym.max((a.hol[k].conj() - b.anti[k]).norm()).max((a.anti[k].conj() - b.hol[k]).norm());
    }
    JetCheck { source: src, rel_error, symmetry: sym }
}

/// Run the jet oracle on `count` random expressions at random points.
pub fn jet_suite(count: usize, seed: u64) -> Vec<JetCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (a, b) = random_parts(&mut rng);
            let mut r = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let x = Point::from_slices(&[r(), r()], &[r()]);
            check_jet(&a, &b, &x)
        })
        .collect()
}
