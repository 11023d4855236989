use proptest::prelude::*;
use vlsf_core::bounds::{
    feasibility_floor, gaussian_power, is_feasible, log_power_constant, lower_bound_trajectory,
    renyi_log_moment, renyi_log_moment_trajectory, upper_bound_trajectory, ReferenceParams,
};
use vlsf_core::channel::{derive_seed, gen_codebook, sample_fading, ChannelParams, Trace};
use vlsf_core::decoder::{CampaignStats, Outcome, StoppingRecord};
use vlsf_core::linalg::{
    ar1_eigenvalues, ar1_logdet, ar1_precision_quadform, dense, log_normal_pdf, seq_gaussian_logpdf,
};
use vlsf_core::stats::clopper_pearson;

fn rho_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0..0.95f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feasibility_is_monotone(r in 1.01..10.0f64, sigma_h2 in 0.01..20.0f64, rho in 0.0..0.95f64, shrink in 0.0..1.0f64) {
        if is_feasible(r, sigma_h2, rho) {
            prop_assert!(is_feasible(r, sigma_h2, rho * shrink));
            prop_assert!(is_feasible(r, sigma_h2 * 1.5, rho));
        }
        prop_assert_eq!(is_feasible(r, sigma_h2, rho), sigma_h2 > feasibility_floor(r, rho));
    }

    #[test]
    fn eigenvalues_within_spectral_bounds(n in 1usize..60, rho in rho_strategy()) {
        let ev = ar1_eigenvalues(n, rho).unwrap();
        let (lo, hi) = ((1.0 - rho) / (1.0 + rho), (1.0 + rho) / (1.0 - rho));
        for &l in &ev {
            prop_assert!(l >= lo * (1.0 - 1e-12) && l <= hi * (1.0 + 1e-12), "{l} outside [{lo}, {hi}]");
        }
        prop_assert!((ev.iter().sum::<f64>() - n as f64).abs() < 1e-9 * n as f64);
        let log_sum: f64 = ev.iter().map(|l| l.ln()).sum();
        prop_assert!((log_sum - ar1_logdet(n, rho).unwrap()).abs() < 1e-8 * (1.0 + log_sum.abs()));
    }

    #[test]
    fn logdet_matches_dense(n in 1usize..=8, rho in prop_oneof![Just(0.0), Just(0.3), Just(0.5), Just(0.9), 0.0..0.99f64]) {
        let want = dense::logdet(&dense::ar1_matrix(n, rho));
        prop_assert!((ar1_logdet(n, rho).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn quadform_matches_dense_inverse(rho in rho_strategy(), v in prop::collection::vec(-5.0..5.0f64, 1..12)) {
        let want = dense::inverse_quadform(&dense::ar1_matrix(v.len(), rho), &v);
        let got = ar1_precision_quadform(rho, &v).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-12), "{got} vs {want}");
    }

    #[test]
    fn sequential_density_is_prefix_consistent(
        rho in rho_strategy(),
        sigma_z2 in 0.05..5.0f64,
        pairs in prop::collection::vec((-4.0..4.0f64, -6.0..6.0f64), 1..10),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let full = seq_gaussian_logpdf(&x, &y, rho, sigma_z2).unwrap();
        for n in 1..=x.len() {
            let prefix = seq_gaussian_logpdf(&x[..n], &y[..n], rho, sigma_z2).unwrap();
            prop_assert!((prefix[n - 1] - full[n - 1]).abs() < 1e-9);
            let cov = dense::conditional_cov(&x[..n], rho, sigma_z2);
            let want = dense::gaussian_logpdf(&cov, &y[..n]);
            prop_assert!((full[n - 1] - want).abs() < 1e-8 * (1.0 + want.abs()), "n {n}: {} vs {want}", full[n - 1]);
        }
    }

    #[test]
    fn gaussian_power_identity(s in 1.0001..20.0f64, v in 0.01..50.0f64, y in -10.0..10.0f64) {
        let lhs = log_normal_pdf(y, v).exp().powf(s);
        let rhs = gaussian_power(y, v, s);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(f64::MIN_POSITIVE), "{lhs} vs {rhs}");
        prop_assert!(log_power_constant(1.0, v).abs() < 1e-15);
    }

    #[test]
    fn renyi_routes_agree(rho in 0.0..0.8f64, r in 1.1..6.0f64, excess in 1.01..3.0f64, n in 1usize..40) {
        let sigma_h2 = excess * feasibility_floor(r, rho).max(0.1);
        prop_assume!(is_feasible(r, sigma_h2, rho));
        let traj = renyi_log_moment_trajectory(n, rho, sigma_h2, r).unwrap();
        let direct = renyi_log_moment(n, rho, sigma_h2, r).unwrap();
        prop_assert!((traj[n - 1] - direct).abs() < 1e-9 * (1.0 + direct.abs()));
        prop_assert!(direct >= -1e-12);
    }

    #[test]
    fn upper_bound_dominates_lower(seed in any::<u64>(), rho in 0.0..0.8f64, snr in 0.5..200.0f64, r in 1.2..6.0f64, excess in 1.02..3.0f64) {
        let ch = ChannelParams::with_snr(rho, 1.0, snr).unwrap();
        let sigma_h2 = excess * feasibility_floor(r, rho).max(0.2);
        let params = ReferenceParams::new(r, sigma_h2, rho).unwrap();
        let tr = Trace::random(8, &ch, seed).unwrap();
        let psi = lower_bound_trajectory(&tr.x, &tr.y, &params, &ch).unwrap();
        let phi = upper_bound_trajectory(&tr.x, &tr.y, sigma_h2, &ch).unwrap();
        for n in 0..8 {
            prop_assert!(psi.value[n] <= phi.value[n], "n {}: {} > {}", n + 1, psi.value[n], phi.value[n]);
        }
    }

    #[test]
    fn penalties_do_not_depend_on_the_trace(a in any::<u64>(), b in any::<u64>()) {
        let ch = ChannelParams::with_snr(0.3, 1.0, 100.0).unwrap();
        let params = ReferenceParams::new(4.0, 1.4625, 0.3).unwrap();
        let (ta, tb) = (Trace::random(12, &ch, a).unwrap(), Trace::random(12, &ch, b).unwrap());
        let la = lower_bound_trajectory(&ta.x, &ta.y, &params, &ch).unwrap();
        let lb = lower_bound_trajectory(&tb.x, &tb.y, &params, &ch).unwrap();
        prop_assert_eq!(la.penalty, lb.penalty);
        let ua = upper_bound_trajectory(&ta.x, &ta.y, 1.4625, &ch).unwrap();
        let ub = upper_bound_trajectory(&tb.x, &tb.y, 1.4625, &ch).unwrap();
        prop_assert_eq!(ua.penalty, ub.penalty);
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>(), rho in 0.0..1.0f64) {
        prop_assert_eq!(sample_fading(20, rho, seed).unwrap(), sample_fading(20, rho, seed).unwrap());
        prop_assert_eq!(gen_codebook(3, 5, 2.0, seed).unwrap(), gen_codebook(3, 5, 2.0, seed).unwrap());
        prop_assert_ne!(derive_seed(seed, 0), derive_seed(seed, 1));
    }

    #[test]
    fn clopper_pearson_brackets_rate(trials in 1u64..5000, frac in 0.0..1.0f64) {
        let k = ((trials as f64) * frac).floor() as u64;
        let (lo, hi) = clopper_pearson(k, trials, 0.95).unwrap();
        let p = k as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0, "{k}/{trials}: [{lo}, {hi}]");
    }

    #[test]
    fn campaign_aggregation_is_order_independent(
        outcomes in prop::collection::vec((0u8..4, 1usize..50), 1..60),
        rotate in 0usize..60,
    ) {
        let records: Vec<StoppingRecord> = outcomes
            .iter()
            .map(|&(o, tau)| {
                let outcome = [Outcome::Correct, Outcome::WrongMessage, Outcome::Ambiguous, Outcome::Truncated][o as usize];
                StoppingRecord {
                    message: 0,
                    tau: (outcome != Outcome::Truncated).then_some(tau),
                    decoded: None,
                    outcome,
                    trajectory_peak: 0.0,
                    seed: 0,
                }
            })
            .collect();
        let mut rotated = records.clone();
        rotated.rotate_left(rotate % records.len());
        let a = CampaignStats::from_records(&records).unwrap();
        let b = CampaignStats::from_records(&rotated).unwrap();
        prop_assert_eq!(a.errors, b.errors);
        prop_assert_eq!(&a.tau_histogram, &b.tau_histogram);
        prop_assert_eq!((a.ci_low, a.ci_high), (b.ci_low, b.ci_high));
        prop_assert!((a.mean_tau - b.mean_tau).abs() < 1e-12 || (a.mean_tau.is_nan() && b.mean_tau.is_nan()));
        prop_assert_eq!(a.errors, a.wrong_message + a.ambiguous + a.truncations);
    }
}

#[test]
fn renyi_rate_converges_monotonically() {
    for &(rho, sigma_h2, r) in &[(0.3, 1.5, 2.0), (0.3, 1.4625, 4.0), (0.5, 3.5, 3.0)] {
        let limit = vlsf_core::bounds::szego_rate(rho, sigma_h2, r).unwrap();
        let traj = renyi_log_moment_trajectory(1000, rho, sigma_h2, r).unwrap();
        let gaps: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| (traj[n - 1] / n as f64 - limit).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
