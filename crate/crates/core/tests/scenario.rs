use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use proptest::prelude::*;

use pathspin::apparatus::parse_apparatus;
use pathspin::nri::{hv_bound_check, TSIRELSON};
use pathspin::scenario::{
    default_sweep_grid, enumerate_hv_table, evolved_subensembles, nosignal_between,
    optimize_scenario, run_scenario, run_scenario_spec, sweep_wing1_angle, Overrides,
};
use pathspin::shots::{read_counts_csv, SamplerConfig};
use pathspin::states::{concurrence, Wing1Setting};
use pathspin::nri::Constraint;

const FIG1: &str = include_str!("../fixtures/fig1.apparatus");
const FIG1_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fig1.apparatus");
const GOLDEN: &str = include_str!("../fixtures/fig1_counts.csv");

fn with_setting(s: Wing1Setting) -> Overrides {
    Overrides { wing1: Some(s), ..Default::default() }
}

#[test]
fn golden_counts_are_reproduced() {
    let report = run_scenario(FIG1_PATH, &Overrides::default()).unwrap();
    let frozen = read_counts_csv(GOLDEN.as_bytes()).unwrap();
    assert_eq!(report.count_records(), frozen);
}

#[test]
fn sampled_correlations_within_five_sigma() {
    let report = run_scenario(FIG1_PATH, &Overrides::default()).unwrap();
    let n = report.provenance.shots as f64;
    for sub in &report.subensembles {
        let free = sub.optima.iter().find(|o| o.constraint == Constraint::FreeSpin).unwrap();
        for (exact, sampled) in [(sub.exact, sub.sampled.value), (free.value, sub.sampled_optimum.value)] {
            for (e, est) in exact.correlations().iter().zip(sampled.correlations()) {
                let se = ((1.0 - e * e) / n).sqrt().max(1.0 / n);
                assert!((e - est).abs() <= 5.0 * se, "{e} vs {est}");
            }
        }
    }
}

#[test]
fn setting_a_gives_entangled_violating_subensembles() {
    let r = run_scenario(FIG1_PATH, &with_setting(Wing1Setting::A)).unwrap();
    assert_eq!(r.subensembles.len(), 2);
    for sub in &r.subensembles {
        assert!((sub.concurrence - 1.0).abs() < 1e-12);
        assert!((sub.max_abs_s - 2.0 * SQRT_2).abs() < 1e-6);
        assert!((sub.tsirelson_max - TSIRELSON).abs() < 1e-9);
        assert!((sub.weight - 0.5).abs() < 1e-12);
    }
    assert!((r.weight_sum - 1.0).abs() < 1e-12);
}

#[test]
fn setting_b_gives_product_subensembles() {
    let r = run_scenario(FIG1_PATH, &with_setting(Wing1Setting::B)).unwrap();
    for sub in &r.subensembles {
        assert!(sub.concurrence < 1e-12);
        assert!((sub.max_abs_s - 2.0).abs() < 1e-9, "{}", sub.max_abs_s);
        assert!(sub.optima.iter().all(|o| o.s.abs() <= 2.0 + 1e-9));
    }
}

#[test]
fn angle_zero_reproduces_setting_b() {
    let spec = parse_apparatus(FIG1).unwrap();
    let b = evolved_subensembles(&spec, Wing1Setting::B).unwrap();
    let x = evolved_subensembles(&spec, Wing1Setting::Angle(0.0)).unwrap();
    for (p, q) in b.iter().zip(&x) {
        assert_eq!(p.state, q.state);
        assert_eq!(p.weight, q.weight);
    }
    let rb = run_scenario_spec(&spec, &with_setting(Wing1Setting::B)).unwrap();
    let rx = run_scenario_spec(&spec, &with_setting(Wing1Setting::Angle(0.0))).unwrap();
    assert_eq!(rb.subensembles, rx.subensembles);
}

#[test]
fn reports_are_deterministic() {
    let o = Overrides { seed: Some(7), shots: Some(5000), ..Default::default() };
    let a = serde_json::to_string(&run_scenario(FIG1_PATH, &o).unwrap()).unwrap();
    let b = serde_json::to_string(&run_scenario(FIG1_PATH, &o).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = Overrides { seed: Some(8), ..o };
    let c = serde_json::to_string(&run_scenario(FIG1_PATH, &other).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn report_carries_provenance() {
    let r = run_scenario(FIG1_PATH, &Overrides { shots: Some(1000), ..Default::default() }).unwrap();
    let spec = parse_apparatus(FIG1).unwrap();
    assert_eq!(r.provenance.config_hash, spec.content_hash());
    assert_eq!(r.provenance.config_hash.len(), 64);
    assert_eq!(r.provenance.seed, 42);
    assert_eq!(r.provenance.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn nosignal_residuals_are_symmetric() {
    let spec = parse_apparatus(FIG1).unwrap();
    let cfg = SamplerConfig::new(42, 100_000).unwrap();
    let ab = nosignal_between(&spec, Wing1Setting::A, Wing1Setting::B, &cfg).unwrap();
    let ba = nosignal_between(&spec, Wing1Setting::B, Wing1Setting::A, &cfg).unwrap();
    assert!(ab.exact_ok());
    assert_eq!(ab.rho_residual, ba.rho_residual);
    assert_eq!(ab.detector_residual, ba.detector_residual);
    assert_eq!(ab.sampled, ba.sampled);
    assert!(ab.sampled.within_5_sigma);
}

#[test]
fn sweep_examples() {
    let spec = parse_apparatus(FIG1).unwrap();
    let rows = sweep_wing1_angle(&spec, &[0.0, PI / 4.0, PI / 2.0]).unwrap();
    assert!(rows[0].concurrence_plus < 1e-12 && rows[0].concurrence_minus < 1e-12);
    assert!((rows[1].concurrence_plus - FRAC_1_SQRT_2).abs() < 1e-9);
    assert!((rows[1].concurrence_minus - FRAC_1_SQRT_2).abs() < 1e-9);
    assert!((rows[2].concurrence_plus - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_smax_is_monotone_in_concurrence() {
    let spec = parse_apparatus(FIG1).unwrap();
    let mut points: Vec<(f64, f64)> = sweep_wing1_angle(&spec, &default_sweep_grid(19))
        .unwrap()
        .iter()
        .flat_map(|r| [(r.concurrence_plus, r.smax_plus), (r.concurrence_minus, r.smax_minus)])
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in points.windows(2) {
        assert!(w[1].1 >= w[0].1 - 1e-9, "{w:?}");
    }
}

#[test]
fn hv_summary_matches_bound_check() {
    let t = enumerate_hv_table().unwrap();
    assert_eq!(t.rows.len(), 16);
    assert!(t.rows.iter().all(|r| r.value.abs() == 2));
    let all = pathspin::nri::enumerate_noncontextual();
    let max = all
        .iter()
        .map(|(hv, _)| hv_bound_check(&[(*hv, 1.0)]).unwrap().abs())
        .fold(0.0, f64::max);
    assert_eq!(t.max_abs_s, max);
    assert_eq!(t.summary(), "max |S| over noncontextual models = 2");
}

#[test]
fn optimize_covers_requested_constraints() {
    let spec = parse_apparatus(FIG1).unwrap();
    let r = optimize_scenario(&spec, &Overrides::default(), &Constraint::ALL).unwrap();
    assert_eq!(r.entries.len(), 6);
    for e in &r.entries {
        let expected = match e.optimum.constraint {
            Constraint::PaperLiteral => 2.0,
            _ => TSIRELSON,
        };
        assert!((e.optimum.s.abs() - expected).abs() < 1e-6, "{e:?}");
    }
}

fn apparatus_text(mirrors: usize, theta: f64, spins: [(f64, f64); 2], bs2: [f64; 2]) -> String {
    let dir = |(p, a): (f64, f64)| {
        format!("({},{},{})", p.sin() * a.cos(), p.sin() * a.sin(), p.cos())
    };
    let setting = |t: f64| format!("{}:{}", t.cos(), t.sin());
    format!(
        "[source]\nwing1_setting = A\n[pipeline]\nbs1\nsf axis=x\n{}bs2 gamma={} delta={}\n\
         [measurement]\nspin_dirs = {}, {}\nbs2_settings = {}, {}\n",
        "mirror\n".repeat(mirrors),
        theta.cos(),
        theta.sin(),
        dir(spins[0]),
        dir(spins[1]),
        setting(bs2[0]),
        setting(bs2[1]),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dichotomy_holds_for_any_phase_free_apparatus(
        mirrors in 0usize..4,
        theta in 0.0..(2.0 * PI),
        p1 in 0.0..PI, a1 in 0.0..(2.0 * PI),
        p2 in 0.0..PI, a2 in 0.0..(2.0 * PI),
        t1 in 0.0..PI, t2 in 0.0..PI,
    ) {
        let text = apparatus_text(mirrors, theta, [(p1, a1), (p2, a2)], [t1, t2]);
        let spec = parse_apparatus(&text).unwrap();
        for sub in evolved_subensembles(&spec, Wing1Setting::A).unwrap() {
            prop_assert!((concurrence(&sub.state).unwrap() - 1.0).abs() <= 1e-12);
        }
        for sub in evolved_subensembles(&spec, Wing1Setting::B).unwrap() {
            prop_assert!(concurrence(&sub.state).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn report_invariants_hold(
        alpha in 0.0..PI,
        seed in any::<u64>(),
        theta in 0.0..(2.0 * PI),
        t1 in 0.0..PI, t2 in 0.0..PI,
    ) {
        let text = apparatus_text(2, theta, [(0.0, 0.0), (PI / 2.0, 0.0)], [t1, t2]);
        let spec = parse_apparatus(&text).unwrap();
        let o = Overrides {
            seed: Some(seed),
            shots: Some(500),
            wing1: Some(Wing1Setting::Angle(alpha)),
            ..Default::default()
        };
        let r = run_scenario_spec(&spec, &o).unwrap();
        prop_assert!((r.weight_sum - 1.0).abs() <= 1e-12);
        for sub in &r.subensembles {
            for e in sub.exact.correlations().iter().chain(sub.sampled.value.correlations().iter()) {
                prop_assert!(e.abs() <= 1.0 + 1e-9);
            }
            prop_assert!(sub.max_abs_s <= sub.tsirelson_max + 1e-6);
        }
    }
}
