use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lorentz_bench::{angles, kernel_points};
use lorentz_core::billiard::transfer_map;
use lorentz_core::initial::InitialData;
use lorentz_core::kernel::{p_simple, sample_mu, sample_p};
use lorentz_core::solver::{init_field, step, Discretization, Grids, StepOptions};
use lorentz_core::Direction;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernel(c: &mut Criterion) {
    let pts = kernel_points(1024);
    c.bench_function("p_simple x1024", |b| {
        b.iter(|| {
            pts.iter()
                .map(|&(s, h, hp)| p_simple(s, h, hp))
                .sum::<f64>()
        })
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("sample_p", |b| {
        b.iter(|| sample_p(black_box(0.3), &mut rng))
    });
    c.bench_function("sample_mu", |b| b.iter(|| sample_mu(&mut rng)));
}

fn billiard(c: &mut Criterion) {
    let dirs: Vec<Direction> = angles(64).into_iter().map(Direction::from_angle).collect();
    for r in [1e-2, 1e-4] {
        c.bench_function(&format!("transfer_map r={r:e} x64"), |b| {
            b.iter(|| {
                dirs.iter()
                    .filter_map(|&w| transfer_map(0.2, w, black_box(r)).ok())
                    .count()
            })
        });
    }
}

fn solver(c: &mut Criterion) {
    let disc = Discretization::new(Grids::reduced()).unwrap();
    let f = init_field(&InitialData::cosine(0.5), &disc);
    let dt = disc.dt_limit();
    let mut g = c.benchmark_group("solver");
    g.sample_size(10);
    g.bench_function("step reduced grid", |b| {
        b.iter(|| step(&disc, &f, dt, StepOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernel, billiard, solver);
criterion_main!(benches);
