use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use slitkit::freeboundary::tip_coefficient;
use slitkit::neumann::constant_t;
use slitkit::solver::{solve_fd, BoundaryData, Domain, GridSpec, Rhs};
use slitkit::whitney::{build_mollifier, whitney_extend, YPolynomial};
use slitkit::xrpoly::single_free;
use slitkit::{gamma_jet, rat, solve_approximating, GammaJet, Poly, SlitGeometry, XRPolynomial};

fn symbolic(c: &mut Criterion) {
    let flat = GammaJet::flat(3, 2);
    c.bench_function("solve_approximating flat n=3 k=2", |b| {
        b.iter(|| {
            for mu in [vec![1, 0, 1], vec![0, 0, 2], vec![2, 1, 0]] {
                let p = solve_approximating(&flat, &XRPolynomial::zero(3), &single_free(mu, rat(1, 1)), 2).unwrap();
                black_box(p);
            }
        })
    });
    let curved = gamma_jet(&SlitGeometry::parabola(), &[rat(0, 1)], 3).unwrap();
    c.bench_function("solve_approximating parabola k=2", |b| {
        b.iter(|| solve_approximating(&curved, &XRPolynomial::zero(2), &single_free(vec![0, 2], rat(1, 1)), 2).unwrap())
    });
    let q = BTreeMap::from([(vec![2, 0], rat(1, 1)), (vec![1, 0], rat(-3, 2))]);
    c.bench_function("constant_t n=2 k=2", |b| b.iter(|| constant_t(2, 2, black_box(&q), &BTreeMap::new()).unwrap()));
}

fn whitney(c: &mut Criterion) {
    let geom = SlitGeometry::parabola();
    let m = build_mollifier(2, 1).unwrap();
    let q = YPolynomial::new(Poly::monomial(vec![2, 0], 1.0)).unwrap();
    let pts: Vec<Vec<f64>> = (0..16).map(|j| vec![0.3, 0.1 + 0.01 * j as f64]).collect();
    c.bench_function("whitney_extend 16 points", |b| b.iter(|| whitney_extend(&q, &geom, &m, black_box(&pts)).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let phi = |t: f64| (t / 2.0).cos();
    c.bench_function("tip_coefficient", |b| b.iter(|| tip_coefficient(black_box(0.3), &phi).unwrap()));
    let spec = GridSpec { h: 1.0 / 64.0, domain: Domain::unit_disc(1), split: true };
    let geom = SlitGeometry::flat(1);
    let mut g = c.benchmark_group("solve_fd");
    g.sample_size(10);
    g.bench_function("flat n=1 h=1/64", |b| {
        b.iter(|| solve_fd(&geom, &BoundaryData::cos_half(), &Rhs::zero(1), black_box(&spec)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, symbolic, whitney, solvers);
criterion_main!(benches);
