//! Property tests for model invariants that hold over whole parameter
//! ranges rather than at hand-picked points.

use proptest::prelude::*;

use dynmargin::io::cli::{parse_margins_csv_text, write_margins_csv_to};
use dynmargin::margin::CollapseCause;
use dynmargin::montecarlo::{histogram, RecordCause, TrialRecord};
use dynmargin::stochastic::power::{pv_power, PvCurveParams};
use dynmargin::stochastic::special::beta_reg;
use dynmargin::stochastic::transform::{beta_transform, weibull_transform, BetaParams, WeibullParams};
use dynmargin::stochastic::{ou_init, ou_step, channel_stream, OuParams, OuScheme};

fn unit_ou(alpha: f64) -> OuParams {
    OuParams::new(alpha, (2.0 * alpha).sqrt(), 1.0)
}

proptest! {
    #[test]
    fn weibull_transform_monotone_and_positive(
        lambda in 0.5f64..20.0,
        k in 0.5f64..5.0,
        alpha in 1e-5f64..2.0,
        eta_lo in -6.0f64..6.0,
        delta in 0.0f64..3.0,
    ) {
        let params = WeibullParams { lambda, k, alpha_w: alpha };
        let ou = unit_ou(alpha);
        let lo = weibull_transform(eta_lo, &params, &ou);
        let hi = weibull_transform(eta_lo + delta, &params, &ou);
        prop_assert!(lo > 0.0);
        prop_assert!(hi >= lo);
    }

    #[test]
    fn beta_transform_monotone_in_unit_interval(
        p in 0.2f64..5.0,
        q in 0.2f64..5.0,
        alpha in 1e-5f64..2.0,
        eta_lo in -5.0f64..5.0,
        delta in 0.0f64..2.0,
    ) {
        let params = BetaParams { p, q, alpha_s: alpha };
        let ou = unit_ou(alpha);
        let lo = beta_transform(eta_lo, &params, &ou).unwrap();
        let hi = beta_transform(eta_lo + delta, &params, &ou).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo);
    }

    // Shape/tail ranges where the quantile is representable in f64: for
    // q < 0.5 and u -> 1 the true root falls between 1 and its f64
    // neighbor, so no float can satisfy the bound there.
    #[test]
    fn beta_inverse_round_trip_within_1e8(
        p in 0.5f64..4.0,
        q in 0.5f64..4.0,
        eta in -4.5f64..4.5,
    ) {
        let params = BetaParams { p, q, alpha_s: 0.5 };
        let ou = unit_ou(0.5);
        let s = beta_transform(eta, &params, &ou).unwrap();
        let u = dynmargin::stochastic::special::std_normal_cdf(eta);
        prop_assert!((beta_reg(p, q, s) - u).abs() < 1e-8);
    }

    #[test]
    fn pv_curve_continuous_and_nondecreasing(
        r_c in 10.0f64..500.0,
        extra in 1.0f64..2000.0,
        p_rated in 1.0f64..2000.0,
        s_frac in 0.0f64..2.0,
    ) {
        let params = PvCurveParams { r_c, r_std: r_c + extra, p_rated };
        // Branch agreement at the breakpoints within 1e-12 of rated.
        let at_rc = pv_power(r_c, &params).unwrap();
        let quad = r_c * r_c * p_rated / (r_c * params.r_std);
        prop_assert!((at_rc - quad).abs() <= 1e-12 * p_rated);
        let at_std = pv_power(params.r_std, &params).unwrap();
        prop_assert!((at_std - p_rated).abs() <= 1e-12 * p_rated);
        // Nondecreasing across a random neighborhood.
        let s = s_frac * params.r_std;
        let h = 1e-3 * params.r_std;
        let a = pv_power(s, &params).unwrap();
        let b = pv_power(s + h, &params).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn noiseless_channels_are_constant_or_decaying(
        alpha in 0.01f64..5.0,
        beta in 0.0f64..10.0,
        dt in 0.001f64..0.5,
        x0 in -10.0f64..10.0,
    ) {
        let params = OuParams::new(alpha, beta, 0.0);
        let mut em = ou_init(&params, channel_stream(1, 0, 0));
        prop_assert_eq!(em.value, 0.0);
        em.value = x0;
        let mut exact = em.clone();
        ou_step(&mut em, &params, dt, OuScheme::EulerMaruyama);
        ou_step(&mut exact, &params, dt, OuScheme::ExactOu);
        prop_assert!((em.value - x0 * (1.0 - alpha * dt)).abs() < 1e-12 * x0.abs().max(1.0));
        prop_assert!((exact.value - x0 * (-alpha * dt).exp()).abs() < 1e-12 * x0.abs().max(1.0));
    }

    #[test]
    fn histogram_counts_are_conserved(
        margins in prop::collection::vec(0.0f64..1000.0, 0..300),
        n_skip in 0usize..20,
        bin in 1.0f64..100.0,
    ) {
        let mut records: Vec<TrialRecord> = margins
            .iter()
            .enumerate()
            .map(|(i, &m)| TrialRecord {
                trial: i as u64,
                base_seed: 0,
                margin_mw: Some(m),
                cause: RecordCause::Collapse(CollapseCause::AlgebraicDivergence),
                t_collapse: Some(m / 5.0),
                floor_events: 0,
            })
            .collect();
        for i in 0..n_skip {
            records.push(TrialRecord {
                trial: (margins.len() + i) as u64,
                base_seed: 0,
                margin_mw: None,
                cause: RecordCause::NoCollapse,
                t_collapse: None,
                floor_events: 0,
            });
        }
        let bins = histogram(&records, bin);
        let total: u64 = bins.iter().map(|(_, c)| c).sum();
        prop_assert_eq!(total, margins.len() as u64);
        // Left edges ascend in fixed increments.
        for w in bins.windows(2) {
            prop_assert!((w[1].0 - w[0].0 - bin).abs() < 1e-9);
        }
    }

    #[test]
    fn margins_csv_round_trips(
        rows in prop::collection::vec(
            (0u64..10_000, prop::option::of(0.0f64..2000.0), 0u64..50),
            0..40,
        ),
    ) {
        let records: Vec<TrialRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (seed, margin, floors))| TrialRecord {
                trial: i as u64,
                base_seed: *seed,
                margin_mw: *margin,
                cause: match margin {
                    Some(_) => RecordCause::Collapse(CollapseCause::JacobianSignChange),
                    None => RecordCause::NoCollapse,
                },
                t_collapse: margin.map(|m| m / 5.52),
                floor_events: *floors,
            })
            .collect();
        let mut buf = Vec::new();
        write_margins_csv_to(&mut buf, &records).unwrap();
        let parsed = parse_margins_csv_text(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(parsed, records);
    }
}

#[test]
fn ltc_invariants_over_random_voltage_paths() {
    use dynmargin::devices::ltc::{ltc_step, Ltc, LtcState};
    use rand::{Rng, SeedableRng};
    let ltc = Ltc {
        controlled_bus: 1,
        branch: 0,
        v_ref: 1.0,
        deadband: 0.01,
        tap_min: 0.9,
        tap_max: 1.1,
        initial_delay: 20.0,
        subsequent_delay: 5.0,
        tap_rate: 0.01,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let mut state = LtcState::new(1.0);
        for _ in 0..2000 {
            let v = 1.0 + rng.random_range(-0.06..0.06);
            let prev = state;
            state = ltc_step(&ltc, &state, v, 0.05);
            assert!(state.tap >= ltc.tap_min && state.tap <= ltc.tap_max);
            if (v - ltc.v_ref).abs() <= ltc.deadband {
                assert_eq!(state.tap, prev.tap, "tap must hold inside the deadband");
            }
        }
    }
}
