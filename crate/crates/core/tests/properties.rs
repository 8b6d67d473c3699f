use irs_wet::dynamic_sca::{self, audit, surrogate_eta_ub, surrogate_f_lb};
use irs_wet::experiments::{emit_csv, parse_csv, run_scenario, ConfigFile, RunRecord, Scheme, Sweep};
use irs_wet::static_sdr::{fairness_objective, solve_sdr_upper_bound, static_energies};
use irs_wet::{tdma, ChannelRealization, EhParams, SystemConfig, C64};
use proptest::prelude::*;

fn phases(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(0.0..std::f64::consts::TAU, n)
        .prop_map(|v| v.into_iter().map(|a| C64::from_polar(1.0, a)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn received_power_respects_triangle_ceiling(seed in 0u64..1000, th in phases(8)) {
        let cfg = SystemConfig::reference(8, 3);
        let ch = ChannelRealization::sample(&cfg, seed).unwrap();
        for k in 0..3 {
            let p = ch.received_rf_power(k, &th, 10.0).unwrap();
            let ceil = 10.0 * (ch.h_d[k].norm() + ch.q.row(k).iter().map(|q| q.norm()).sum::<f64>()).powi(2);
            prop_assert!(p >= 0.0);
            prop_assert!(p <= ceil * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dc_power_is_increasing_and_bounded(p in 0.0..1.0f64, dp in 1e-6..0.1f64) {
        let eh = EhParams::default();
        let lo = eh.dc_power(p).unwrap();
        let hi = eh.dc_power(p + dp).unwrap();
        prop_assert!(lo >= 0.0 && hi < eh.m);
        // Past the knee the sigmoid term drops below machine precision.
        prop_assert!(hi > lo || (hi == lo && lo >= eh.m - 1e-12));
    }

    #[test]
    fn harvester_inverse_round_trips(frac in 0.0..0.999f64) {
        let eh = EhParams::default();
        let phi = frac * eh.m;
        let p = eh.required_rf_power(phi).unwrap();
        prop_assert!((eh.dc_power(p).unwrap() - phi).abs() <= 1e-9 * eh.m);
    }

    #[test]
    fn scalar_surrogates_are_global_bounds(
        z in 1e-3..50.0f64, tau in 0.0..5.0f64, zr in 1e-3..50.0f64, tr in 0.0..5.0f64,
        p in 0.0..5.0f64, pr in 0.0..5.0f64,
    ) {
        prop_assert!(surrogate_f_lb(z, tau, zr, tr).unwrap() <= tau / (1.0 + z) + 1e-9);
        prop_assert!(surrogate_eta_ub(p, tau, pr, tr) >= -(p - tau).powi(2) - 1e-9);
    }

    #[test]
    fn csv_round_trips_arbitrary_records(
        recs in prop::collection::vec(
            (0usize..6, 1usize..100, 0usize..10, any::<u64>(), 0.0..1.0f64, any::<f64>(), prop::option::of(1usize..50), 0usize..500, 0.0..1e6f64, "[a-z ,\"]{0,12}"),
            0..8,
        )
    ) {
        let records: Vec<RunRecord> = recs
            .into_iter()
            .map(|(s, k, j, seed, e, total, rank, iterations, wall_ms, status)| RunRecord {
                scheme: Scheme::ALL[s],
                k,
                j,
                seed,
                e_joules: e,
                total_energy_joules: if total.is_nan() { 0.0 } else { total },
                rank,
                iterations,
                wall_ms,
                status,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&records, &path).unwrap();
        prop_assert_eq!(parse_csv(&path).unwrap(), records);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relaxation_bounds_random_static_patterns(seed in 0u64..10_000) {
        let cfg = SystemConfig::reference(6, 3);
        let ch = ChannelRealization::sample(&cfg, seed).unwrap();
        let eh = vec![EhParams::default(); 3];
        let sdr = solve_sdr_upper_bound(&ch, &eh, &cfg).unwrap();
        prop_assert!(sdr.bisection_iterations <= 40);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        for _ in 0..100 {
            let th: Vec<C64> = (0..6).map(|_| C64::from_polar(1.0, rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU))).collect();
            let e = fairness_objective(&static_energies(&ch, &eh, &cfg, &th, sdr.power).unwrap(), &cfg.fairness_weights);
            prop_assert!(e <= sdr.e_upper * (1.0 + 1e-6));
        }
    }

    #[test]
    fn dynamic_runs_are_feasible_and_monotone(seed in 0u64..10_000, k in 1usize..5, j in 1usize..4) {
        let cfg = SystemConfig::reference(6, k);
        let ch = ChannelRealization::sample(&cfg, seed).unwrap();
        let eh = vec![EhParams::default(); k];
        let sol = dynamic_sca::solve_dynamic(&ch, &eh, &cfg, j).unwrap();
        for w in sol.history.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-6));
        }
        let a = audit(&ch, &eh, &cfg, &sol.schedule).unwrap();
        prop_assert!(a.max_violation <= 1e-6);
        prop_assert!(sol.schedule.n_slots() <= j);
    }

    #[test]
    fn dynamic_with_k_slots_never_loses_to_tdma(seed in 0u64..10_000, k in 1usize..5) {
        let cfg = SystemConfig::reference(6, k);
        let ch = ChannelRealization::sample(&cfg, seed).unwrap();
        let eh = vec![EhParams::default(); k];
        let t = tdma::solve_tdma(&ch, &eh, &cfg).unwrap();
        let d = dynamic_sca::solve_dynamic(&ch, &eh, &cfg, k).unwrap();
        prop_assert!(d.e >= t.e - 1e-6 * t.e);
        prop_assert!(audit(&ch, &eh, &cfg, &t.schedule).unwrap().max_violation <= 1e-6);
    }
}

#[test]
fn direct_channel_power_matches_path_loss() {
    let cfg = SystemConfig::reference(1, 1);
    let n = 5000;
    let mut sum = 0.0;
    let mut expected = 0.0;
    for seed in 0..n {
        let ch = ChannelRealization::sample(&cfg, seed).unwrap();
        sum += ch.h_d[0].norm_sqr();
        expected += ch.direct_gain[0];
    }
    let ratio = sum / expected;
    assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn static_sca_record_is_the_single_slot_dynamic_path() {
    let mut f = ConfigFile::desk();
    f.n_elements = 6;
    f.n_ers = 3;
    f.n_realizations = 2;
    f.sweep = "none".into();
    f.schemes = vec![Scheme::StaticSca];
    let sc = f.scenario().unwrap();
    let recs = run_scenario(&sc).unwrap();
    for r in recs {
        let ch = ChannelRealization::sample(&sc.config, r.seed).unwrap();
        let sol = dynamic_sca::solve_dynamic(&ch, &vec![sc.eh; 3], &sc.config, 1).unwrap();
        assert_eq!(sol.e.to_bits(), r.e_joules.to_bits());
    }
}

#[test]
fn rank_is_nondecreasing_in_k_on_average() {
    let mut f = ConfigFile::desk();
    f.n_elements = 16;
    f.n_realizations = 6;
    f.gr_samples = 10;
    f.schemes = vec![Scheme::UpperBound];
    let mut sc = f.scenario().unwrap();
    let grid = vec![1, 4, 12];
    sc.sweep = Sweep::K(grid.clone());
    let recs = run_scenario(&sc).unwrap();
    let means: Vec<f64> = grid
        .iter()
        .map(|&k| {
            let v: Vec<f64> = recs.iter().filter(|r| r.k == k).map(|r| r.rank.unwrap() as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    // Spearman correlation of K against mean rank.
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| {
                let below = v.iter().filter(|y| *y < x).count() as f64;
                let ties = v.iter().filter(|y| *y == x).count() as f64;
                below + (ties + 1.0) / 2.0
            })
            .collect()
    };
    let kx: Vec<f64> = grid.iter().map(|&k| k as f64).collect();
    let (rx, ry) = (ranks(&kx), ranks(&means));
    let m = (rx.len() as f64 + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    assert!(cov > 0.0, "mean ranks {means:?}");
}
