use paqkd::channel::{propagate, ChannelConfig};
use paqkd::encoding::make_packet;
use paqkd::keyrate::{v_b, KeyRateInputs};
use paqkd::pipeline::{run_packet, PipelineConfig};
use paqkd::polarization::{
    apply_transform, jones_matrix, sample_uniform_transform, DualPolState, PolarizationParams,
};
use paqkd::receiver::{measure, DetectorConfig};
use paqkd::stats::{covariance, linear_regression, mean, sample_variance};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided one-sample KS statistic against `N(0, var)`.
fn ks_statistic(xs: &[f64], var: f64) -> f64 {
    let dist = Normal::new(0.0, var.sqrt()).unwrap();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn transformed(params: PolarizationParams, v_a: f64, n: usize, seed: u64) -> Vec<DualPolState> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = jones_matrix(params).unwrap();
    make_packet(&mut rng, 0, v_a, n)
        .unwrap()
        .pulses
        .iter()
        .map(|s| apply_transform(&m, s).unwrap())
        .collect()
}

#[test]
fn transformed_quadratures_stay_gaussian() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for k in 0..5 {
        let params = sample_uniform_transform(&mut rng);
        let out = transformed(params, 1.16, 20_000, 100 + k);
        for q in 0..4 {
            let xs: Vec<f64> = out.iter().map(|s| s.quadratures()[q]).collect();
            let d = ks_statistic(&xs, 1.16);
            assert!(d < ks_critical_1pct(xs.len()), "{params:?} quadrature {q}: D = {d}");
        }
    }
}

#[test]
fn transformed_quadratures_are_uncorrelated() {
    let out = transformed(PolarizationParams::new(0.84, 2.28, -0.05), 1.16, 100_000, 5);
    let cols: Vec<Vec<f64>> = (0..4).map(|q| out.iter().map(|s| s.quadratures()[q]).collect()).collect();
    let bound = 4.0 * 1.16 / (out.len() as f64).sqrt();
    for i in 0..4 {
        for j in (i + 1)..4 {
            let c = covariance(&cols[i], &cols[j]);
            assert!(c.abs() < bound, "cov({i},{j}) = {c}");
        }
    }
}

#[test]
fn difference_of_output_polarizations_has_twice_the_variance() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for k in 0..4 {
        let params = sample_uniform_transform(&mut rng);
        let out = transformed(params, 1.16, 100_000, 200 + k);
        let msd = mean(&out.iter().map(|s| (s.h.x - s.v.x).powi(2)).collect::<Vec<_>>());
        assert!((msd / (2.0 * 1.16) - 1.0).abs() < 0.03, "{params:?}: {msd}");
    }
}

#[test]
fn receiver_variance_matches_formula_over_grid() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    for &v_a in &[0.5, 1.16, 5.0] {
        for &t in &[0.1, 0.5, 1.0] {
            for &xi in &[0.0, 0.0328, 0.2] {
                let cfg = ChannelConfig { t, xi, v_a };
                let det = DetectorConfig::default();
                let params = sample_uniform_transform(&mut rng);
                let pkt = make_packet(&mut rng, 0, v_a, 60_000).unwrap();
                let xs: Vec<f64> = pkt
                    .pulses
                    .iter()
                    .map(|e| {
                        let out = propagate(e, params, &cfg).unwrap();
                        measure(&out, &det, &cfg, &mut rng).unwrap().x_bh
                    })
                    .collect();
                let expected = v_b(&KeyRateInputs {
                    v_a,
                    t,
                    xi,
                    ..Default::default()
                });
                let got = sample_variance(&xs);
                // ~6 standard errors of a variance estimate from 60k draws
                assert!((got / expected - 1.0).abs() < 0.035, "v_a={v_a} t={t} xi={xi}: {got} vs {expected}");
            }
        }
    }
}

#[test]
fn receiver_variance_does_not_depend_on_rotation() {
    let cfg = PipelineConfig::default();
    let mut thetas = Vec::new();
    let mut vbs = Vec::new();
    for id in 0..300 {
        let (_, rec) = run_packet(&cfg, id).unwrap();
        thetas.push(rec.truth.theta);
        vbs.push(rec.v_b_x);
    }
    let fit = linear_regression(&thetas, &vbs);
    assert!(fit.slope.abs() < 3.0 * fit.slope_std_err, "{fit:?}");
}
