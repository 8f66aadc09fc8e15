//! Encoder forward and contrastive backward passes, one thread against all
//! available threads.
//!
//! With `--no-default-features` the crate has no rayon and only the
//! sequential path is measured, under the `sequential` label:
//!
//! ```text
//! cargo bench -p crlplus-core --bench parallel
//! cargo bench -p crlplus-core --bench parallel --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use crlplus_core::contrastive::{encoder_supcon_grad, LossConfig};
use crlplus_core::encoder::{EncodeMode, EncoderConfig, EncoderModel};
use crlplus_core::numerics::SeededRng;

const DOCS: usize = 32;

fn setup() -> (EncoderModel, Vec<Vec<u32>>, Vec<usize>) {
    let cfg = EncoderConfig {
        vocab_size: 500,
        ..EncoderConfig::default()
    };
    let model = EncoderModel::init(cfg, 1).unwrap();
    let mut rng = SeededRng::new(1, 2);
    let rows = (0..DOCS)
        .map(|_| {
            (0..24 + rng.below(40))
                .map(|_| 2 + rng.below(498) as u32)
                .collect()
        })
        .collect();
    let labels = (0..DOCS).map(|i| i % 4).collect();
    (model, rows, labels)
}

fn passes(c: &mut Criterion, label: &str, run: &dyn Fn(&mut (dyn FnMut() + Send))) {
    let (model, rows, labels) = setup();
    let slices: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
    let loss = LossConfig::default();
    let masks = SeededRng::new(3, 4);

    let mut group = c.benchmark_group("encoder");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("encode", label), |b| {
        run(&mut || {
            b.iter(|| {
                model
                    .encode_rows(&slices, &EncodeMode::Deterministic)
                    .unwrap()
            })
        })
    });
    group.bench_function(BenchmarkId::new("supcon_grad", label), |b| {
        run(&mut || {
            b.iter(|| encoder_supcon_grad(&model, &slices, &labels, 2, &masks, &loss).unwrap())
        })
    });
    group.finish();
}

#[cfg(feature = "parallel")]
fn bench(c: &mut Criterion) {
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    passes(c, "1 thread", &|f| one.install(f));
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let label = format!("{} threads", all.current_num_threads());
    passes(c, &label, &|f| all.install(f));
}

#[cfg(not(feature = "parallel"))]
fn bench(c: &mut Criterion) {
    passes(c, "sequential", &|f| f());
}

criterion_group!(benches, bench);
criterion_main!(benches);
