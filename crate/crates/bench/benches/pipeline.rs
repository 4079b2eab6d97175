use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lqr_influence::influence::{exact_loto_cost_shift_from, score_all};
use lqr_influence::linalg::{solve_dare, solve_dlyap};
use lqr_influence::lqr::{riccati_artifacts_with, ArtifactOptions};
use lqr_influence::sysid::{fit_ridge, Solver};
use lqr_influence::systems::SystemKind;
use lqr_influence_bench::Fixture;

const LAMBDA: f64 = 1e-3;

fn options(solver: Solver) -> ArtifactOptions {
    ArtifactOptions {
        solver,
        residual_channel: true,
    }
}

// the amortized path: fit, artifacts and every score
fn score_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_pipeline");
    for kind in SystemKind::ALL {
        let f = Fixture::new(kind, 0);
        for solver in [Solver::Dense, Solver::Cg] {
            let id = BenchmarkId::new(kind.name(), format!("{solver:?}").to_lowercase());
            group.bench_with_input(id, &f, |b, f| {
                b.iter(|| {
                    let fit = fit_ridge(&f.data, LAMBDA).unwrap();
                    let art =
                        riccati_artifacts_with(&fit, &f.q, &f.r, fit.w_hat(), options(solver))
                            .unwrap();
                    black_box(score_all(&fit, &art).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn exact_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_sweep");
    group.sample_size(10);
    for kind in [SystemKind::DcMotor, SystemKind::Msd] {
        let f = Fixture::new(kind, 0);
        let fit = fit_ridge(&f.data, LAMBDA).unwrap();
        let base = riccati_artifacts_with(&fit, &f.q, &f.r, fit.w_hat(), options(Solver::Dense))
            .unwrap()
            .cost;
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &f, |b, f| {
            b.iter(|| {
                for k in 0..f.data.num_trajectories() {
                    black_box(
                        exact_loto_cost_shift_from(&f.data, LAMBDA, &f.q, &f.r, k, base).unwrap(),
                    );
                }
            })
        });
    }
    group.finish();
}

fn riccati_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernels");
    for kind in [SystemKind::DcMotor, SystemKind::Msd] {
        let f = Fixture::new(kind, 0);
        let fit = fit_ridge(&f.data, LAMBDA).unwrap();
        let (a, b) = (fit.a_hat(), fit.b_hat());
        group.bench_function(BenchmarkId::new("dare", kind.name()), |bch| {
            bch.iter(|| black_box(solve_dare(&a, &b, &f.q, &f.r).unwrap()))
        });
        let art =
            riccati_artifacts_with(&fit, &f.q, &f.r, fit.w_hat(), options(Solver::Dense)).unwrap();
        group.bench_function(BenchmarkId::new("lyapunov", kind.name()), |bch| {
            bch.iter(|| black_box(solve_dlyap(&art.acl, fit.w_hat()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, score_pipeline, exact_sweep, riccati_kernels);
criterion_main!(benches);
