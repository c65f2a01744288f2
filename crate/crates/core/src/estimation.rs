//! Polarization, transmission and excess-noise estimation from the revealed
//! pulses, and digital correction of Alice's stored encodings.
//!
//! Bob's horizontal output is `g * (u alpha + w beta)` plus noise, with
//! `u = cos(theta) e^{i(phi + delta/2)}` and `w = -sin(theta) e^{i(phi - delta/2)}`.
//! The fit minimizes
//!
//! ```text
//! J(theta, phi, delta, g) = sum_i (x_i - g X(theta, phi, delta))^2 + (p_i - g P(theta, phi, delta))^2
//! ```
//!
//! by Levenberg-Marquardt from a grid of starting points. Because the model is
//! linear in `z = g (u, w)`, the residual sum of squares depends on the data
//! only through a 4x4 Gram matrix, a 4-vector and a scalar; each iteration is
//! therefore independent of the number of pulses.
//!
//! Only the first row of the Jones matrix reaches Bob, so the fit identifies
//! the channel up to [`h_row_partner`]. Estimates are reported with
//! `theta in [0, pi/2]` and compared to truth with [`matrix_error`].

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix4, Vector4};
use rand::Rng;

use crate::encoding::{AliceEncoding, Packet};
use crate::error::{ensure, Error, Result};
use crate::polarization::{
    canonicalize, h_row_canonicalize, h_row_partner, jones_matrix,
    transformed_quadratures_closed_form, DualPolState, PolarizationParams,
};
use crate::receiver::{DetectorConfig, Measurement};

pub const MIN_REVEALED_PULSES: usize = 50;
pub const DEFAULT_REVEAL_FRACTION: f64 = 0.10;

/// One revealed pulse: its index in the packet, what Alice sent and what Bob
/// measured on the horizontal output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevealedPulse {
    pub index: u32,
    pub alice: AliceEncoding,
    pub x_bh: f64,
    pub p_bh: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RevealedSet {
    pub pulses: Vec<RevealedPulse>,
}

impl RevealedSet {
    /// Joins Bob's published measurements with Alice's stored encodings.
    pub fn assemble(packet: &Packet, indices: &[u32], bob: &[(f64, f64)]) -> Result<Self> {
        if indices.len() != bob.len() {
            return Err(Error::LengthMismatch {
                left: indices.len(),
                right: bob.len(),
            });
        }
        let mut seen = vec![false; packet.pulses.len()];
        let mut pulses = Vec::with_capacity(indices.len());
        for (&index, &(x_bh, p_bh)) in indices.iter().zip(bob) {
            let i = index as usize;
            ensure(i < packet.pulses.len(), || {
                format!("revealed index {i} outside packet of {} pulses", packet.pulses.len())
            })?;
            ensure(!seen[i], || format!("revealed index {i} repeated"))?;
            seen[i] = true;
            pulses.push(RevealedPulse {
                index,
                alice: packet.pulses[i],
                x_bh,
                p_bh,
            });
        }
        Ok(Self { pulses })
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }
}

/// Deterministic stride selection: every `round(1/fraction)`-th pulse,
/// starting at a random offset inside the first stride.
pub fn select_reveal_indices<R: Rng + ?Sized>(
    rng: &mut R,
    pulse_count: usize,
    fraction: f64,
) -> Result<Vec<u32>> {
    ensure(fraction > 0.0 && fraction <= 1.0, || {
        format!("reveal fraction must lie in (0, 1], got {fraction}")
    })?;
    let stride = (1.0 / fraction).round().max(1.0) as usize;
    let offset = rng.gen_range(0..stride);
    Ok((offset..pulse_count).step_by(stride).map(|i| i as u32).collect())
}

/// Bob's measurements at the given indices, in order.
pub fn reveal_measurements(measurements: &[Measurement], indices: &[u32]) -> Vec<(f64, f64)> {
    indices
        .iter()
        .map(|&i| {
            let m = &measurements[i as usize];
            (m.x_bh, m.p_bh)
        })
        .collect()
}

/// How the overall amplitude gain `sqrt(eta T / 2)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainMode {
    /// Fitted jointly with the polarization parameters.
    Joint,
    /// Held at a calibrated value.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub gain: GainMode,
    /// Starting points per angle; the grid has `grid^3` starts.
    pub grid: usize,
    pub max_iterations: usize,
    /// Stop a start once the relative objective decrease drops below this.
    pub relative_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            gain: GainMode::Joint,
            grid: 4,
            max_iterations: 200,
            relative_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationResult {
    /// Estimated channel, `theta in [0, pi/2]`.
    pub params_hat: PolarizationParams,
    /// Amplitude gain `sqrt(eta T / 2)`.
    pub gain_hat: f64,
    pub t_hat: f64,
    pub xi_hat: f64,
    /// Residual variance per quadrature, `J / (2N - k)` with `k` fitted
    /// parameters.
    pub residual_ms: f64,
    /// Final value of `J`.
    pub objective: f64,
    pub starts_tried: usize,
    pub converged: bool,
}

/// Sufficient statistics of the revealed data for the linear-in-z model.
#[derive(Debug, Clone, Copy)]
struct Normal4 {
    gram: Matrix4<f64>,
    rhs: Vector4<f64>,
    obs_sq: f64,
    n_obs: usize,
}

impl Normal4 {
    fn from_revealed(set: &RevealedSet) -> Self {
        let mut gram = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        let mut obs_sq = 0.0;
        for r in &set.pulses {
            let a = &r.alice;
            let row_x = Vector4::new(a.h.x, -a.h.p, a.v.x, -a.v.p);
            let row_p = Vector4::new(a.h.p, a.h.x, a.v.p, a.v.x);
            gram += row_x * row_x.transpose() + row_p * row_p.transpose();
            rhs += row_x * r.x_bh + row_p * r.p_bh;
            obs_sq += r.x_bh * r.x_bh + r.p_bh * r.p_bh;
        }
        Self {
            gram,
            rhs,
            obs_sq,
            n_obs: 2 * set.pulses.len(),
        }
    }

    fn objective(&self, z: &Vector4<f64>) -> f64 {
        (self.obs_sq - 2.0 * z.dot(&self.rhs) + z.dot(&(self.gram * z))).max(0.0)
    }
}

/// `z = g (Re u, Im u, Re w, Im w)` and its Jacobian with respect to
/// `(theta, phi, delta, g)`.
fn model(p: &Vector4<f64>) -> (Vector4<f64>, Matrix4<f64>) {
    let (theta, phi, delta, g) = (p[0], p[1], p[2], p[3]);
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = (phi + delta / 2.0).sin_cos();
    let (sb, cb) = (phi - delta / 2.0).sin_cos();

    let z = Vector4::new(g * ct * ca, g * ct * sa, -g * st * cb, -g * st * sb);

    let d_theta = Vector4::new(-g * st * ca, -g * st * sa, -g * ct * cb, -g * ct * sb);
    let d_a = Vector4::new(-g * ct * sa, g * ct * ca, 0.0, 0.0);
    let d_b = Vector4::new(0.0, 0.0, g * st * sb, -g * st * cb);
    let d_phi = d_a + d_b;
    let d_delta = (d_a - d_b) * 0.5;
    let d_g = Vector4::new(ct * ca, ct * sa, -st * cb, -st * sb);

    let jac = Matrix4::from_columns(&[d_theta, d_phi, d_delta, d_g]);
    (z, jac)
}

#[derive(Debug, Clone, Copy)]
struct StartOutcome {
    params: Vector4<f64>,
    objective: f64,
    converged: bool,
}

fn levenberg_marquardt(
    stats: &Normal4,
    start: Vector4<f64>,
    fix_gain: bool,
    opts: &FitOptions,
) -> StartOutcome {
    let mut p = start;
    let (mut z, mut jac) = model(&p);
    let mut f = stats.objective(&z);
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..opts.max_iterations {
        // gradient of z^T G z - 2 z^T c is 2 (G z - c)
        let resid_grad = stats.gram * z - stats.rhs;
        let mut jtj = jac.transpose() * stats.gram * jac;
        let mut jtr = -(jac.transpose() * resid_grad);
        if fix_gain {
            for k in 0..4 {
                jtj[(3, k)] = 0.0;
                jtj[(k, 3)] = 0.0;
            }
            jtj[(3, 3)] = 1.0;
            jtr[3] = 0.0;
        }
        let diag_floor = 1e-12 * jtj.diagonal().max().max(1e-300);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let p_new = p + step;
            let (z_new, jac_new) = model(&p_new);
            let dz = z_new - z;
            let decrease = -(dz.dot(&(stats.gram * dz)) + 2.0 * dz.dot(&resid_grad));
            if decrease > 0.0 {
                let scale = f.max(f64::MIN_POSITIVE);
                let small_step = step.amax() <= 1e-15 * (1.0 + p.amax());
                p = p_new;
                z = z_new;
                jac = jac_new;
                f = stats.objective(&z);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if decrease / scale < opts.relative_tolerance || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    StartOutcome {
        params: p,
        objective: f,
        converged,
    }
}

fn grid_starts(n: usize, g0: f64) -> Vec<Vector4<f64>> {
    let n = n.max(1);
    let step = |k: usize, span: f64, lo: f64| lo + (k as f64 + 0.5) * span / n as f64;
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push(Vector4::new(step(i, PI, 0.0), step(j, TAU, 0.0), step(k, TAU, -PI), g0));
            }
        }
    }
    out
}

/// Exact residual sum of squares over the revealed pulses.
fn residual_sum(set: &RevealedSet, params: PolarizationParams, gain: f64) -> f64 {
    set.pulses
        .iter()
        .map(|r| {
            let m = transformed_quadratures_closed_form(params, &r.alice);
            let dx = r.x_bh - gain * m.h.x;
            let dp = r.p_bh - gain * m.h.p;
            dx * dx + dp * dp
        })
        .sum()
}

/// Least-squares fit of the channel to the revealed pulses.
pub fn fit(revealed: &RevealedSet, det: &DetectorConfig, opts: &FitOptions) -> Result<EstimationResult> {
    det.validate()?;
    if revealed.len() < MIN_REVEALED_PULSES {
        return Err(Error::TooFewPulses {
            got: revealed.len(),
            need: MIN_REVEALED_PULSES,
        });
    }
    let (g0, fix_gain) = match opts.gain {
        GainMode::Joint => ((det.eta / 2.0).sqrt(), false),
        GainMode::Fixed(g) => {
            ensure(g > 0.0 && g.is_finite(), || format!("fixed gain must be positive, got {g}"))?;
            (g, true)
        }
    };
    let stats = Normal4::from_revealed(revealed);

    let starts = grid_starts(opts.grid, g0);
    let best = starts
        .iter()
        .map(|s| levenberg_marquardt(&stats, *s, fix_gain, opts))
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one start");

    let mut raw = PolarizationParams::new(best.params[0], best.params[1], best.params[2]);
    let mut gain = best.params[3];
    if gain < 0.0 {
        gain = -gain;
        raw.theta += PI;
    }
    let params_hat = h_row_canonicalize(raw);

    let objective = residual_sum(revealed, params_hat, gain);
    let free = if fix_gain { 3 } else { 4 };
    let residual_ms = objective / (stats.n_obs - free) as f64;
    let t_hat = 2.0 * gain * gain / det.eta;
    let xi_hat = (residual_ms - det.vacuum_variance()) / (gain * gain);

    Ok(EstimationResult {
        params_hat,
        gain_hat: gain,
        t_hat,
        xi_hat,
        residual_ms,
        objective,
        starts_tried: starts.len(),
        converged: best.converged && gain.is_finite() && gain > 0.0,
    })
}

/// Frobenius distance between the estimated and true Jones matrices, taken
/// over both triples that share the estimate's observable first row.
pub fn matrix_error(estimate: PolarizationParams, truth: PolarizationParams) -> Result<f64> {
    let truth_m = jones_matrix(truth)?;
    let a = jones_matrix(canonicalize(estimate))?.frobenius_distance(&truth_m);
    let b = jones_matrix(h_row_partner(estimate))?.frobenius_distance(&truth_m);
    Ok(a.min(b))
}

/// Applies the estimated transformation to every stored encoding.
pub fn correct_alice(packet: &Packet, params_hat: PolarizationParams) -> Result<Vec<DualPolState>> {
    ensure(params_hat.is_finite(), || format!("non-finite parameters {params_hat:?}"))?;
    Ok(packet
        .pulses
        .iter()
        .map(|e| transformed_quadratures_closed_form(params_hat, e))
        .collect())
}

/// Estimate with the rotation dropped: only the phases `phi` and `delta` are
/// undone.
pub fn phase_only(params_hat: PolarizationParams) -> PolarizationParams {
    PolarizationParams::new(0.0, params_hat.phi, params_hat.delta)
}

/// `R^2 = 1 - sum (b_i - gain a_i)^2 / (N v_b)`.
pub fn r_squared(alice_q: &[f64], bob_q: &[f64], v_b: f64, gain: f64) -> Result<f64> {
    if alice_q.len() != bob_q.len() {
        return Err(Error::LengthMismatch {
            left: alice_q.len(),
            right: bob_q.len(),
        });
    }
    ensure(alice_q.len() >= 2, || "R^2 needs at least two samples".to_string())?;
    ensure(v_b > 0.0, || format!("v_b must be positive, got {v_b}"))?;
    let sse: f64 = alice_q
        .iter()
        .zip(bob_q)
        .map(|(a, b)| {
            let d = b - gain * a;
            d * d
        })
        .sum();
    Ok(1.0 - sse / (alice_q.len() as f64 * v_b))
}

/// Inverts `residual = 1 + eps + gain^2 xi`. Not clamped at zero.
pub fn estimate_excess_noise(residual_ms: f64, gain: f64, epsilon: f64) -> Result<f64> {
    ensure(gain > 0.0, || format!("gain must be positive, got {gain}"))?;
    Ok((residual_ms - 1.0 - epsilon) / (gain * gain))
}

#[cfg(test)]
fn is_h_row_canonical(p: &PolarizationParams) -> bool {
    (0.0..=std::f64::consts::FRAC_PI_2).contains(&p.theta) && (0.0..TAU).contains(&p.phi) && (-PI..PI).contains(&p.delta)
}
