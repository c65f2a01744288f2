//! Receiver variance, R^2 bounds and the asymptotic secret fraction for
//! Gaussian-modulated coherent states with heterodyne (dual-quadrature)
//! detection, collective Gaussian attacks and a trusted detector.
//!
//! With `V = V_A + 1`:
//!
//! ```text
//! chi_line = 1/T - 1 + xi
//! chi_het  = (1 + (1 - eta) + 2 v_el) / eta
//! chi_tot  = chi_line + chi_het / T
//! I_AB     = log2((V + chi_tot) / (1 + chi_tot))
//! ```
//!
//! Eve's information is `G((l1-1)/2) + G((l2-1)/2) - G((l3-1)/2) - G((l4-1)/2)`
//! with the symplectic eigenvalues below. The electronic noise `v_el` is the
//! receiver's `epsilon`.

use serde::Serialize;

use crate::channel::transmission_from_distance;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateInputs {
    pub v_a: f64,
    pub t: f64,
    pub xi: f64,
    pub eta: f64,
    pub epsilon: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
}

impl Default for KeyRateInputs {
    fn default() -> Self {
        Self {
            v_a: 1.16,
            t: 1.0,
            xi: 0.0328,
            eta: 0.5,
            epsilon: 0.024,
            beta: 0.95,
        }
    }
}

impl KeyRateInputs {
    pub fn validate(&self) -> Result<()> {
        ensure(self.v_a >= 0.0 && self.v_a.is_finite(), || format!("v_a must be non-negative, got {}", self.v_a))?;
        ensure(self.t > 0.0 && self.t <= 1.0, || format!("t must lie in (0, 1], got {}", self.t))?;
        ensure(self.xi >= 0.0 && self.xi.is_finite(), || format!("xi must be non-negative, got {}", self.xi))?;
        ensure(self.eta > 0.0 && self.eta <= 1.0, || format!("eta must lie in (0, 1], got {}", self.eta))?;
        ensure(self.epsilon >= 0.0 && self.epsilon.is_finite(), || {
            format!("epsilon must be non-negative, got {}", self.epsilon)
        })?;
        ensure(self.beta > 0.0 && self.beta <= 1.0, || format!("beta must lie in (0, 1], got {}", self.beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateResult {
    /// Alice-Bob mutual information, bits per pulse.
    pub i_ab: f64,
    /// Holevo bound on Eve's information, bits per pulse.
    pub chi_be: f64,
    /// Secret fraction `beta I_AB - chi_BE`, bits per pulse.
    pub k: f64,
    /// `l1..l5`; `l5 = 1`.
    pub symplectic: [f64; 5],
}

/// `V_B = (eta T / 2)(V_A + xi) + 1 + eps`.
pub fn v_b(inputs: &KeyRateInputs) -> f64 {
    inputs.eta * inputs.t / 2.0 * (inputs.v_a + inputs.xi) + 1.0 + inputs.epsilon
}

/// `(+eta T V_A / (2 V_B), -eta T V_A / (2 V_B))`.
pub fn r2_bounds(inputs: &KeyRateInputs) -> (f64, f64) {
    let r = inputs.eta * inputs.t * inputs.v_a / (2.0 * v_b(inputs));
    (r, -r)
}

const NEG_TOLERANCE: f64 = 1e-9;

/// `g(x) = (x+1) log2(x+1) - x log2(x)`, with tiny negative arguments
/// clamped to zero.
pub fn holevo_g(x: f64) -> Result<f64> {
    if x < -NEG_TOLERANCE || x.is_nan() {
        return Err(Error::NumericalDomain(format!("holevo_g argument {x} is negative")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

fn quadratic_roots(sum: f64, product: f64, what: &str) -> Result<(f64, f64)> {
    let disc = sum * sum - 4.0 * product;
    if disc < -NEG_TOLERANCE * sum.abs().max(1.0) {
        return Err(Error::NumericalDomain(format!("negative discriminant {disc} for {what}")));
    }
    // below rounding level the roots coincide
    let root = if disc <= 64.0 * f64::EPSILON * sum * sum { 0.0 } else { disc.sqrt() };
    let hi = (sum + root) / 2.0;
    // small root via the product, which avoids cancellation
    let lo = if hi > 0.0 { product / hi } else { 0.0 };
    if lo < -NEG_TOLERANCE {
        return Err(Error::NumericalDomain(format!("negative squared eigenvalue {lo} for {what}")));
    }
    Ok((hi.max(0.0).sqrt(), lo.max(0.0).sqrt()))
}

fn entropy_term(lambda: f64) -> Result<f64> {
    holevo_g((lambda - 1.0) / 2.0)
}

pub fn secret_key_rate(inputs: &KeyRateInputs) -> Result<KeyRateResult> {
    inputs.validate()?;
    let KeyRateInputs {
        v_a,
        t,
        xi,
        eta,
        epsilon,
        beta,
    } = *inputs;
    let v = v_a + 1.0;
    let chi_line = 1.0 / t - 1.0 + xi;
    let chi_het = (1.0 + (1.0 - eta) + 2.0 * epsilon) / eta;
    let chi_tot = chi_line + chi_het / t;

    let i_ab = ((v + chi_tot) / (1.0 + chi_tot)).log2();

    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = t * t * (v * chi_line + 1.0).powi(2);
    let (l1, l2) = quadratic_roots(a, b, "Eve's state")?;

    let denom = (t * (v + chi_tot)).powi(2);
    let sqrt_b = b.sqrt();
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * sqrt_b + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0))
        / denom;
    let d = ((v + sqrt_b * chi_het) / (t * (v + chi_tot))).powi(2);
    let (l3, l4) = quadratic_roots(c, d, "conditional state")?;
    let l5 = 1.0;

    let chi_be = entropy_term(l1)? + entropy_term(l2)? - entropy_term(l3)? - entropy_term(l4)? - entropy_term(l5)?;
    Ok(KeyRateResult {
        i_ab,
        chi_be,
        k: beta * i_ab - chi_be,
        symplectic: [l1, l2, l3, l4, l5],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    pub transmission: f64,
    pub result: KeyRateResult,
}

/// Key rate versus fiber length; `inputs.t` is replaced by the distance loss.
pub fn keyrate_curve(inputs: &KeyRateInputs, alpha_db_per_km: f64, distances: &[f64]) -> Result<Vec<KeyRatePoint>> {
    distances
        .iter()
        .map(|&d| {
            let t = transmission_from_distance(d, alpha_db_per_km)?;
            let result = secret_key_rate(&KeyRateInputs { t, ..*inputs })?;
            Ok(KeyRatePoint {
                distance_km: d,
                transmission: t,
                result,
            })
        })
        .collect()
}

/// Bits per second from bits per pulse, the pulse rate and the revealed
/// fraction spent on estimation.
pub fn bits_per_second(k_bits_per_pulse: f64, rep_rate_hz: f64, reveal_fraction: f64) -> f64 {
    k_bits_per_pulse * rep_rate_hz * (1.0 - reveal_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bob_variance_examples() {
        let op_point = KeyRateInputs::default();
        let vb = v_b(&op_point);
        assert!((vb - 1.3222).abs() < 1e-12, "{vb}");
        let vacuum = KeyRateInputs { v_a: 0.0, t: 1.0, xi: 0.0, eta: 1.0, epsilon: 0.0, beta: 1.0 };
        assert_eq!(v_b(&vacuum), 1.0);
        let k = KeyRateInputs { v_a: 2.0, t: 0.5, xi: 0.0, eta: 1.0, epsilon: 0.0, beta: 1.0 };
        assert!((v_b(&k) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn r2_bound_examples() {
        let (hi, lo) = r2_bounds(&KeyRateInputs::default());
        assert!((hi - 0.219).abs() < 5e-4 && (lo + 0.219).abs() < 5e-4);
        assert!((hi - 0.25 * 1.16 / 1.3222).abs() < 1e-12);
        let zero = r2_bounds(&KeyRateInputs { v_a: 0.0, ..Default::default() });
        assert_eq!(zero, (0.0, -0.0));
        let half = r2_bounds(&KeyRateInputs { v_a: 2.0, t: 1.0, xi: 0.0, eta: 1.0, epsilon: 0.0, beta: 1.0 });
        assert!((half.0 - 0.5).abs() < 1e-12 && (half.1 + 0.5).abs() < 1e-12);
    }

    #[test]
    fn holevo_g_examples() {
        assert_eq!(holevo_g(0.0).unwrap(), 0.0);
        assert_eq!(holevo_g(-1e-12).unwrap(), 0.0);
        assert!((holevo_g(1.0).unwrap() - 2.0).abs() < 1e-15);
        let expect = 1.5 * 1.5f64.log2() - 0.5 * 0.5f64.log2();
        assert!((holevo_g(0.5).unwrap() - expect).abs() < 1e-15);
        assert!((holevo_g(0.5).unwrap() - 1.377).abs() < 1e-3);
        assert!(holevo_g(-1e-6).is_err());
    }

    #[test]
    fn holevo_g_shape() {
        let xs: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let gs: Vec<f64> = xs.iter().map(|&x| holevo_g(x).unwrap()).collect();
        assert!(gs.iter().all(|&g| g >= 0.0));
        assert!(gs.windows(2).all(|w| w[1] > w[0]));
        assert!(gs.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] <= 1e-12));
    }

    #[test]
    fn default_operating_point() {
        // frozen from tools/keyrate_oracle.py (closed form and covariance-matrix routes)
        let r = secret_key_rate(&KeyRateInputs::default()).unwrap();
        assert!((r.i_ab - 0.357_217_884_064_432_9).abs() < 1e-12);
        assert!((r.chi_be - 0.104_662_482_351_116_1).abs() < 1e-11);
        assert!((r.k - 0.234_694_507_510_095_1).abs() < 1e-11);
        assert!(r.k > 0.0);
        assert_eq!(r.symplectic[4], 1.0);
    }

    #[test]
    fn rate_floor_for_large_noise() {
        let r = secret_key_rate(&KeyRateInputs { xi: 0.5, t: 0.5, ..Default::default() }).unwrap();
        assert!(r.k <= 0.0);
    }

    #[test]
    fn grid_properties() {
        let va = [0.1, 1.0, 5.0, 10.0, 20.0];
        let ts = [0.01, 0.1, 0.3, 0.7, 1.0];
        let xis = [0.0, 0.01, 0.05, 0.1, 0.2];
        for &v_a in &va {
            for &t in &ts {
                let mut prev_k = f64::INFINITY;
                for &xi in &xis {
                    let inputs = KeyRateInputs { v_a, t, xi, ..Default::default() };
                    let r = secret_key_rate(&inputs).unwrap();
                    assert!(r.i_ab >= 0.0);
                    for l in r.symplectic {
                        assert!(l >= 1.0 - 1e-9, "eigenvalue {l} at {inputs:?}");
                    }
                    assert!(r.k < prev_k, "k not decreasing in xi at {inputs:?}");
                    prev_k = r.k;
                    let better = secret_key_rate(&KeyRateInputs { beta: 0.99, ..inputs }).unwrap();
                    assert!(better.k > r.k);
                }
            }
        }
    }

    #[test]
    fn curve_examples() {
        let inputs = KeyRateInputs::default();
        assert!(keyrate_curve(&inputs, 0.2, &[]).unwrap().is_empty());
        let zero = keyrate_curve(&inputs, 0.2, &[0.0]).unwrap();
        assert_eq!(zero[0].transmission, 1.0);
        let d: Vec<f64> = (0..=80).map(f64::from).collect();
        let curve = keyrate_curve(&inputs, 0.2, &d).unwrap();
        assert!(curve.windows(2).all(|w| w[1].result.k < w[0].result.k));
        assert!(keyrate_curve(&inputs, 0.2, &[-1.0]).is_err());
    }

    #[test]
    fn throughput() {
        assert!((bits_per_second(0.2, 1e6, 0.1) - 180_000.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(secret_key_rate(&KeyRateInputs { t: 0.0, ..Default::default() }).is_err());
        assert!(secret_key_rate(&KeyRateInputs { beta: 0.0, ..Default::default() }).is_err());
    }
}
