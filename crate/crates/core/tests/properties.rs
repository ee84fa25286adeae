use kclg_core::config::{is_blocked, locate_cluster};
use kclg_core::kmc::{run_trajectory, Engine};
use kclg_core::local::{centered_expansion, LocalFunction};
use kclg_core::observables::{replay, time_integral_term, Term, TermAccumulator, TestFunction, TestWeights};
use kclg_core::path::{bfs_reachability_oracle, build_exchange_path, path_length_constant};
use kclg_core::rational::{q, qi};
use kclg_core::rng::stream_rng;
use kclg_core::{BoxSpec, Configuration, Error, ModelParams};
use num_rational::Ratio;
use proptest::prelude::*;

fn occupations(len: std::ops::Range<usize>) -> impl Strategy<Value = Configuration> {
    prop::collection::vec(0u8..=1, len).prop_map(Configuration::from_occupation)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exchange_is_an_involution_preserving_count(cfg in occupations(6..40), x in 0i64..80, y in 0i64..80) {
        prop_assume!((x - y).rem_euclid(cfg.len() as i64) != 0);
        let e = cfg.exchange(x, y);
        prop_assert_eq!(e.count(), cfg.count());
        prop_assert_eq!(e.exchange(x, y), cfg.clone());
        prop_assert_eq!(e.get(x), cfg.get(y));
    }

    #[test]
    fn constraint_ignores_the_bond_sites(cfg in occupations(12..40), x in 0i64..40, m in 2usize..5) {
        let c = cfg.constraint(x, m);
        let flipped = cfg.exchange(x, x + 1);
        prop_assert_eq!(flipped.constraint(x, m), c);
        let mut other = cfg.clone();
        other.set(x, 1 - cfg.get(x));
        prop_assert_eq!(other.constraint(x, m), c);
        prop_assert!(c as usize <= m);
    }

    #[test]
    fn blocked_means_no_mobile_cluster_anywhere(cfg in occupations(10..30), m in 2usize..4) {
        if is_blocked(&cfg, m) {
            let len = cfg.len();
            for a in 0..len as i64 {
                prop_assert!(locate_cluster(&cfg, BoxSpec::new(a, len - 1), m).is_none());
            }
        }
    }

    #[test]
    fn centered_expansion_reproduces_any_function(vals in prop::collection::vec(-5i64..=5, 16), num in 1i64..9) {
        let rho = q(num, 10);
        let f = LocalFunction::new(-1, 4, vals.iter().map(|&v| qi(v)).collect()).unwrap();
        let e = centered_expansion(&f, &rho).unwrap();
        prop_assert!(e.to_local(&rho).unwrap().same_function(&f).unwrap());
        prop_assert_eq!(e.coefficient(&[]), f.expectation(&rho));
    }

    #[test]
    fn paths_are_legal_exact_and_reuse_bonds_boundedly(
        cfg in occupations(24..64),
        m in 2usize..4,
        y in 0i64..10,
        gap in 1i64..8,
        offset in 0i64..4,
        box_len in 3usize..14,
        left in any::<bool>(),
    ) {
        let len = cfg.len() as i64;
        let z = y + gap;
        let bx = if left {
            BoxSpec::new(y - offset - 1 - box_len as i64, box_len)
        } else {
            BoxSpec::new(z + offset, box_len)
        };
        prop_assume!(box_len >= m && (bx.last() - bx.first()).abs() + gap + offset + 2 < len);
        match build_exchange_path(&cfg, y, z, bx, m) {
            Ok(p) => {
                let end = p.replay(&cfg).unwrap();
                prop_assert_eq!(end, cfg.exchange(y, z));
                prop_assert!(p.max_bond_usage() <= 2 * (m + 1));
                prop_assert!(p.len() <= path_length_constant(m) * p.window_len());
            }
            Err(Error::NoCluster) => prop_assert!(locate_cluster(&cfg, bx, m).is_none()),
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }

    #[test]
    fn good_windows_are_reachable_and_never_shorter_than_bfs(
        cfg in occupations(24..32),
        y in 0i64..4,
        gap in 1i64..4,
        box_len in 3usize..8,
    ) {
        let z = y + gap;
        let bx = BoxSpec::new(z, box_len);
        let window = BoxSpec::new(y - 1, (bx.last() - y + 1) as usize);
        prop_assume!(window.length <= 16 && cfg.get(y) != cfg.get(z));
        if let Ok(p) = build_exchange_path(&cfg, y, z, bx, 2) {
            let r = bfs_reachability_oracle(&cfg, y, z, window, 2).unwrap();
            prop_assert!(r.reachable);
            prop_assert!(p.len() >= r.shortest.unwrap());
        }
    }

    #[test]
    fn trajectories_conserve_particles_and_replay(seed in 0u64..1000, b in -1.0f64..1.0) {
        let p = ModelParams::new(2, Ratio::new(1, 2), b, 1.0, 4, 32).unwrap();
        let traj = run_trajectory(&p, 0.3, 0.1, seed, 1).unwrap();
        prop_assert!(traj.events.windows(2).all(|w| w[0].time < w[1].time));
        for (t, snap) in traj.sampling_times.iter().zip(&traj.snapshots) {
            prop_assert_eq!(snap.count(), traj.initial.count());
            prop_assert_eq!(&traj.configuration_at(*t), snap);
        }
        prop_assert_eq!(traj, run_trajectory(&p, 0.3, 0.1, seed, 1).unwrap());
    }

    #[test]
    fn incremental_integrals_agree_with_static_sums(seed in 0u64..200, y in 1i64..4) {
        let p = ModelParams::new(2, Ratio::new(2, 3), 0.8, 1.0, 4, 32).unwrap();
        let traj = run_trajectory(&p, 0.2, 0.05, seed, 0).unwrap();
        let h = TestFunction::hermite(1, 0.0, 0.8);
        for term in [Term::Lemma62 { y, z: y + 2 }, Term::Bgp2Inner { ell: 3 }, Term::Current] {
            let w = TestWeights::gradient_of(&h, 4, 32);
            let fast = time_integral_term(&traj, &term, &p, &w).unwrap();
            let mut stat = TermAccumulator::new(term.clone(), w.clone(), &p).unwrap();
            let mut cfg = traj.initial.clone();
            let (mut clock, mut reference) = (0.0, 0.0);
            for e in &traj.events {
                reference += stat.evaluate(&cfg) * (e.time - clock);
                clock = e.time;
                cfg.exchange_in_place(e.bond as i64, e.bond as i64 + 1);
            }
            reference += stat.evaluate(&cfg) * (traj.t_max - clock);
            prop_assert!((fast - reference).abs() < 1e-9 * (1.0 + reference.abs()));
        }
    }
}

#[test]
fn rate_table_exact_after_long_run() {
    for m in [2usize, 3] {
        let p = ModelParams::new(m, Ratio::new(3, 4), 0.5, 1.0, 8, 64).unwrap();
        let mut e = Engine::from_equilibrium(&p, 11, 0).unwrap().with_locality_checks(true);
        for _ in 0..100_000 {
            if e.step().is_err() {
                break;
            }
        }
        assert!(e.verify_rate_table());
    }
}

#[test]
fn replay_observer_matches_live_run() {
    let p = ModelParams::new(2, Ratio::new(2, 3), 1.0, 1.0, 8, 64).unwrap();
    let h = TestFunction::gaussian(0.0, 1.0);
    let w = TestWeights::gradient_of(&h, 8, 64);
    let times = [0.0, 0.05, 0.1];
    let mut live = TermAccumulator::new(Term::Rest { eps: 0.5 }, w.clone(), &p).unwrap();
    let mut engine = Engine::new(&p, kclg_core::config::sample_equilibrium(&p, 0), stream_rng(0, 1)).unwrap();
    let initial = engine.configuration().clone();
    let mut rec = kclg_core::kmc::Recorder::default();
    engine.run_observed(0.1, &times, &mut (&mut live, &mut rec));
    let traj = kclg_core::Trajectory {
        initial,
        events: rec.events,
        sampling_times: times.to_vec(),
        snapshots: rec.snapshots,
        t_max: 0.1,
        blocked_at: None,
    };
    let mut again = TermAccumulator::new(Term::Rest { eps: 0.5 }, w, &p).unwrap();
    replay(&traj, &mut again);
    assert_eq!(live.samples(), again.samples());
    assert_eq!(live.value(), again.value());
}
