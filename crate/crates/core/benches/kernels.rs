//! Criterion benches for the data-parallel kernels.
//!
//! Built with the default `parallel` feature the kernels run on rayon;
//! each bench also has a `*/threads-1` variant pinned to a single-thread
//! pool for an in-run comparison. Re-running with
//! `cargo bench --no-default-features` measures the plain sequential code
//! path without any rayon machinery.

use criterion::{criterion_group, criterion_main, Criterion};

use svda_core::fem::{build_mesh, h1_gram, DiffusivityField, HeatStepper, NodalField, RadiationBc};
use svda_core::ml::{build_training_set, gradient, ModelConfig};
use svda_core::observation::{build_patch_grid, ObservableSpace, ObservationSeries};
use svda_core::reduction::pod;
use svda_core::rng::SplitMix64;

fn with_modes(c: &mut Criterion, name: &str, mut f: impl FnMut() + Send) {
    c.bench_function(&format!("{name}/default"), |b| b.iter(&mut f));
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        c.bench_function(&format!("{name}/threads-1"), |b| {
            b.iter(|| pool.install(&mut f))
        });
    }
}

fn bench_assembly(c: &mut Criterion) {
    let mesh = build_mesh(64, 64);
    with_modes(c, "assemble_h1_gram_64x64", || {
        std::hint::black_box(h1_gram(&mesh));
    });
}

fn bench_representers(c: &mut Criterion) {
    let mesh = build_mesh(32, 32);
    let chol = h1_gram(&mesh).cholesky("gram").unwrap();
    let patches = build_patch_grid(&mesh, 11, 0.05).unwrap();
    with_modes(c, "representers_121_sensors_32x32", || {
        std::hint::black_box(ObservableSpace::build(&mesh, patches.clone(), &chol).unwrap());
    });
}

fn bench_pod(c: &mut Criterion) {
    let mesh = build_mesh(32, 32);
    let gram = h1_gram(&mesh);
    let mut rng = SplitMix64::new(7);
    let snapshots: Vec<NodalField> = (0..50)
        .map(|_| {
            NodalField::from_vec(
                (0..mesh.node_count())
                    .map(|_| rng.next_symmetric(1.0))
                    .collect(),
            )
        })
        .collect();
    with_modes(c, "pod_50_snapshots_32x32", || {
        std::hint::black_box(pod(&snapshots, &gram, 4).unwrap());
    });
}

fn bench_batch_gradient(c: &mut Criterion) {
    let m = 121;
    let rows = 50;
    let mut rng = SplitMix64::new(11);
    let series = ObservationSeries {
        times: (0..rows).map(|k| k as f64).collect(),
        rows: (0..rows)
            .map(|k| {
                nalgebra::DVector::from_fn(m, |i, _| {
                    293.15
                        + 0.002 * k as f64
                        + 0.01 * (i as f64 * 0.3).sin()
                        + 1e-4 * rng.next_symmetric(1.0)
                })
            })
            .collect(),
    };
    let tset = build_training_set(&series, rows, 1).unwrap();
    let config = ModelConfig {
        lookback: 1,
        seed: 3,
        ..Default::default()
    };
    let model = svda_core::ml::train(
        &tset,
        &ModelConfig {
            epochs: 1,
            ..config
        },
    )
    .unwrap();
    with_modes(c, "batch_gradient_49x121", || {
        std::hint::black_box(gradient(&model, &tset));
    });
}

fn bench_heat_step(c: &mut Criterion) {
    // inherently sequential; included as the scale reference
    let mesh = build_mesh(32, 32);
    let d = DiffusivityField::bimaterial(&mesh, 15.0).unwrap();
    let bc = RadiationBc::new(5.67e-8, 3e-3, 303.15).unwrap();
    let stepper = HeatStepper::new(&mesh, 1.25e-2, &d, bc);
    let u = NodalField::constant(mesh.node_count(), 293.15);
    c.bench_function("implicit_euler_step_32x32", |b| {
        b.iter(|| std::hint::black_box(stepper.step(&u, 1).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_assembly,
    bench_representers,
    bench_pod,
    bench_batch_gradient,
    bench_heat_step
);
criterion_main!(benches);
