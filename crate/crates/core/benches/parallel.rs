use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use radspec_core::potentials::RadialProfile;
use radspec_core::spectra::{exact_harmonic_spectrum, radial_fd_spectrum, SolverParams, Spectrum};
use radspec_core::traces::extract_invariants;
use radspec_core::UniformGrid;

fn forward(profile: &RadialProfile) -> Spectrum {
    radial_fd_spectrum(profile, 0.02, 1.0, SolverParams::new(3.0, 2000)).unwrap()
}

fn extract(spectra: &[Spectrum], grid: &UniformGrid) -> usize {
    extract_invariants(spectra, grid, 0.02).unwrap().a_est.len()
}

// With the parallel feature, "sequential" runs inside a one-thread pool;
// without it the core is sequential already and only that arm exists.
#[cfg(feature = "parallel")]
struct Pool(rayon::ThreadPool);
#[cfg(not(feature = "parallel"))]
struct Pool;

impl Pool {
    fn new(threads: Option<usize>) -> Self {
        #[cfg(feature = "parallel")]
        {
            let mut b = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                b = b.num_threads(t);
            }
            Pool(b.build().unwrap())
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Pool
        }
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        #[cfg(feature = "parallel")]
        return self.0.install(f);
        #[cfg(not(feature = "parallel"))]
        f()
    }
}

fn arms() -> Vec<(&'static str, Pool)> {
    if radspec_core::is_parallel() {
        vec![("sequential", Pool::new(Some(1))), ("parallel", Pool::new(None))]
    } else {
        vec![("sequential", Pool::new(None))]
    }
}

fn bench(c: &mut Criterion) {
    let profile = RadialProfile::power_law(2, 1.0, 2.0, 1.0).unwrap();
    let spectra: Vec<Spectrum> = (0..8)
        .map(|k| exact_harmonic_spectrum(2, 0.05 * 0.125f64.powf(k as f64 / 7.0), 1.05).unwrap())
        .collect();
    let grid = UniformGrid::new(0.0, 1.0, 201).unwrap();

    let mut g = c.benchmark_group("radial_fd_spectrum");
    g.sample_size(10);
    for (name, pool) in arms() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| pool.run(|| forward(&profile))));
    }
    g.finish();

    let mut g = c.benchmark_group("extract_invariants");
    g.sample_size(10);
    for (name, pool) in arms() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| pool.run(|| extract(&spectra, &grid))));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
