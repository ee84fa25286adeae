use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kclg_bench::{engine, params};
use kclg_core::observables::{fluctuation_field, Term, TermAccumulator, TestFunction, TestWeights};

fn accumulators(c: &mut Criterion) {
    let n = 64;
    let p = params(n, 8);
    let h = TestFunction::gaussian(0.0, 1.0);
    let w = TestWeights::gradient_of(&h, n, p.ring);
    let terms = [
        ("none", None),
        ("bgp2-inner", Some(Term::Bgp2Inner { ell: 16 })),
        ("rest", Some(Term::Rest { eps: 0.25 })),
        ("lemma62", Some(Term::Lemma62 { y: 2, z: 5 })),
    ];
    let mut group = c.benchmark_group("accumulated run t = 0.02");
    group.sample_size(20);
    for (name, term) in terms {
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut e = engine(n, 8, 5);
                match &term {
                    Some(t) => {
                        let mut acc = TermAccumulator::new(t.clone(), w.clone(), &p).unwrap();
                        e.run_observed(0.02, &[], &mut acc);
                        black_box(acc.value())
                    }
                    None => black_box(e.run_observed(0.02, &[], &mut ()).events as f64),
                }
            })
        });
    }
    group.finish();
}

fn field(c: &mut Criterion) {
    let p = params(256, 8);
    let h = TestFunction::gaussian(0.0, 1.0);
    let e = engine(256, 8, 1);
    c.bench_function("fluctuation field L = 2048", |b| {
        b.iter(|| fluctuation_field(black_box(e.configuration()), &h, &p, 0.0))
    });
}

criterion_group!(benches, accumulators, field);
criterion_main!(benches);
