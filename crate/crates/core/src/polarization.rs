//! Jones and Stokes algebra for the single-rotation-plus-phases fiber model.
//!
//! A fiber link is described by `M = R(theta) * G(phi) * C(delta)`, where
//! `C(delta) = diag(e^{i delta/2}, e^{-i delta/2})` is a differential phase,
//! `G(phi) = e^{i phi} I` is the global signal/LO phase and `R(theta)` is a
//! real rotation. `C` acts on the field first.
//!
//! The matrix is invariant under two gauge moves, which [`canonicalize`]
//! uses to pick one representative:
//!
//! * `M(theta + pi, phi, delta) = M(theta, phi + pi, delta)`
//! * `C(delta + 2 pi) = G(pi) C(delta)`

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{ensure, Result};

/// One polarization mode's quadrature pair, read as `x + i p`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexAmplitude {
    pub x: f64,
    pub p: f64,
}

impl ComplexAmplitude {
    pub const ZERO: Self = Self { x: 0.0, p: 0.0 };

    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.p)
    }

    pub fn from_complex(c: Complex64) -> Self {
        Self { x: c.re, p: c.im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.x * self.x + self.p * self.p
    }

    /// Phase of the amplitude, `atan2(p, x)`.
    pub fn phase(self) -> f64 {
        self.p.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.p.is_finite()
    }
}

/// Field amplitudes in the horizontal and vertical polarization modes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualPolState {
    pub h: ComplexAmplitude,
    pub v: ComplexAmplitude,
}

impl DualPolState {
    pub fn new(h: ComplexAmplitude, v: ComplexAmplitude) -> Self {
        Self { h, v }
    }

    pub fn from_quadratures(x_h: f64, p_h: f64, x_v: f64, p_v: f64) -> Self {
        Self {
            h: ComplexAmplitude::new(x_h, p_h),
            v: ComplexAmplitude::new(x_v, p_v),
        }
    }

    /// `(x_h, p_h, x_v, p_v)`.
    pub fn quadratures(&self) -> [f64; 4] {
        [self.h.x, self.h.p, self.v.x, self.v.p]
    }

    /// Sum of the four squared quadratures.
    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.v.is_finite()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::from_quadratures(self.h.x * k, self.h.p * k, self.v.x * k, self.v.p * k)
    }
}

/// Channel parameters of `R(theta) G(phi) C(delta)`, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolarizationParams {
    pub theta: f64,
    pub phi: f64,
    pub delta: f64,
}

impl PolarizationParams {
    pub const IDENTITY: Self = Self {
        theta: 0.0,
        phi: 0.0,
        delta: 0.0,
    };

    pub fn new(theta: f64, phi: f64, delta: f64) -> Self {
        Self { theta, phi, delta }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.phi.is_finite() && self.delta.is_finite()
    }

    fn validate(&self) -> Result<()> {
        ensure(self.is_finite(), || {
            format!("non-finite polarization parameters {self:?}")
        })
    }
}

/// Row-major 2x2 complex Jones matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[one, zero], [zero, one]])
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self([
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ])
    }

    pub fn global_phase(phi: f64) -> Self {
        let e = Complex64::from_polar(1.0, phi);
        let zero = Complex64::new(0.0, 0.0);
        Self([[e, zero], [zero, e]])
    }

    pub fn differential_phase(delta: f64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self([
            [Complex64::from_polar(1.0, delta / 2.0), zero],
            [zero, Complex64::from_polar(1.0, -delta / 2.0)],
        ])
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[row][col]
    }

    pub fn mul(&self, other: &JonesMatrix) -> JonesMatrix {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        JonesMatrix(out)
    }

    pub fn adjoint(&self) -> JonesMatrix {
        let a = &self.0;
        JonesMatrix([
            [a[0][0].conj(), a[1][0].conj()],
            [a[0][1].conj(), a[1][1].conj()],
        ])
    }

    /// Largest entrywise deviation of `M^H M` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.adjoint().mul(self);
        let id = JonesMatrix::identity();
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((prod.0[i][j] - id.0[i][j]).norm());
            }
        }
        worst
    }

    pub fn frobenius_distance(&self, other: &JonesMatrix) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                acc += (self.0[i][j] - other.0[i][j]).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn max_entry_distance(&self, other: &JonesMatrix) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }
}

/// Unit Stokes vector of the polarization state selected by `(theta, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    /// Octant index in `0..8`, bit 0 for `s1 >= 0`, bit 1 for `s2`, bit 2 for `s3`.
    pub fn octant(&self) -> usize {
        usize::from(self.s1 >= 0.0) | usize::from(self.s2 >= 0.0) << 1 | usize::from(self.s3 >= 0.0) << 2
    }
}

/// Builds `R(theta) G(phi) C(delta)`.
pub fn jones_matrix(params: PolarizationParams) -> Result<JonesMatrix> {
    params.validate()?;
    let m = JonesMatrix::rotation(params.theta)
        .mul(&JonesMatrix::global_phase(params.phi))
        .mul(&JonesMatrix::differential_phase(params.delta));
    Ok(m)
}

/// Multiplies the Jones matrix onto the `(h, v)` field vector.
pub fn apply_transform(m: &JonesMatrix, s: &DualPolState) -> Result<DualPolState> {
    ensure(s.is_finite(), || format!("non-finite state {s:?}"))?;
    let h = s.h.to_complex();
    let v = s.v.to_complex();
    let out_h = m.0[0][0] * h + m.0[0][1] * v;
    let out_v = m.0[1][0] * h + m.0[1][1] * v;
    Ok(DualPolState::new(
        ComplexAmplitude::from_complex(out_h),
        ComplexAmplitude::from_complex(out_v),
    ))
}

/// Real trigonometric expansion of the transformed quadratures.
///
/// Agrees with `apply_transform(jones_matrix(params), a)` to rounding. This is
/// the form used on hot paths (correction and fitting) since it needs no
/// complex arithmetic.
pub fn transformed_quadratures_closed_form(
    params: PolarizationParams,
    a: &DualPolState,
) -> DualPolState {
    let (s_t, c_t) = params.theta.sin_cos();
    let (s_plus, c_plus) = (params.phi + params.delta / 2.0).sin_cos();
    let (s_minus, c_minus) = (params.phi - params.delta / 2.0).sin_cos();

    let x_h = a.h.x * c_plus - a.h.p * s_plus;
    let p_h = a.h.x * s_plus + a.h.p * c_plus;
    let x_v = a.v.x * c_minus - a.v.p * s_minus;
    let p_v = a.v.x * s_minus + a.v.p * c_minus;

    DualPolState::from_quadratures(
        x_h * c_t - x_v * s_t,
        p_h * c_t - p_v * s_t,
        x_h * s_t + x_v * c_t,
        p_h * s_t + p_v * c_t,
    )
}

/// `(S1, S2, S3) = (-cos d sin 2t, cos d cos 2t, sin d)`. Independent of `phi`.
pub fn stokes_from_params(params: PolarizationParams) -> StokesVector {
    let (s_d, c_d) = params.delta.sin_cos();
    let (s_2t, c_2t) = (2.0 * params.theta).sin_cos();
    StokesVector {
        s1: -c_d * s_2t,
        s2: c_d * c_2t,
        s3: s_d,
    }
}

/// Gauge-equivalent triple with `theta in [0, pi)`, `phi in [0, 2pi)`,
/// `delta in [-pi, pi)`.
pub fn canonicalize(params: PolarizationParams) -> PolarizationParams {
    let PolarizationParams {
        mut theta,
        mut phi,
        mut delta,
    } = params;

    let k = ((delta + PI) / TAU).floor();
    delta -= k * TAU;
    phi += k * PI;
    if delta >= PI {
        delta -= TAU;
        phi += PI;
    } else if delta < -PI {
        delta += TAU;
        phi -= PI;
    }

    let m = (theta / PI).floor();
    theta -= m * PI;
    phi += m * PI;
    if theta >= PI {
        theta -= PI;
        phi += PI;
    } else if theta < 0.0 {
        theta += PI;
        phi -= PI;
    }

    phi = phi.rem_euclid(TAU);
    if phi >= TAU {
        phi -= TAU;
    }
    PolarizationParams { theta, phi, delta }
}

/// The other triple whose matrix has the same first (horizontal-output) row.
///
/// `(pi - theta, phi + pi/2, delta + pi)` flips the sign of the second row
/// only, so a receiver that watches one polarization cannot tell the two
/// apart. Output is canonicalized.
pub fn h_row_partner(params: PolarizationParams) -> PolarizationParams {
    canonicalize(PolarizationParams {
        theta: PI - params.theta,
        phi: params.phi + FRAC_PI_2,
        delta: params.delta + PI,
    })
}

/// Canonical representative under both the matrix gauge and the h-row
/// ambiguity: `theta in [0, pi/2]`.
pub fn h_row_canonicalize(params: PolarizationParams) -> PolarizationParams {
    let c = canonicalize(params);
    if c.theta > FRAC_PI_2 {
        h_row_partner(c)
    } else {
        c
    }
}

/// Draws a channel whose Stokes image is uniform on the Poincare sphere and
/// whose global phase is uniform on `[0, 2pi)`.
pub fn sample_uniform_transform<R: Rng + ?Sized>(rng: &mut R) -> PolarizationParams {
    let unit = Uniform::new(-1.0, 1.0);
    let angle = Uniform::new(0.0, TAU);
    let s3: f64 = unit.sample(rng);
    let azimuth: f64 = angle.sample(rng);
    let rho = (1.0 - s3 * s3).max(0.0).sqrt();
    let s1 = rho * azimuth.cos();
    let s2 = rho * azimuth.sin();
    let phi = angle.sample(rng);
    canonicalize(PolarizationParams {
        theta: 0.5 * (-s1).atan2(s2),
        phi,
        delta: s3.asin(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Direct trigonometric evaluation of each entry of `R G C`.
    fn oracle_matrix(theta: f64, phi: f64, delta: f64) -> [[(f64, f64); 2]; 2] {
        let ap = phi + delta / 2.0;
        let am = phi - delta / 2.0;
        let (c, s) = (theta.cos(), theta.sin());
        [
            [(c * ap.cos(), c * ap.sin()), (-s * am.cos(), -s * am.sin())],
            [(s * ap.cos(), s * ap.sin()), (c * am.cos(), c * am.sin())],
        ]
    }

    fn assert_matrix_close(m: &JonesMatrix, expect: [[(f64, f64); 2]; 2], tol: f64) {
        for i in 0..2 {
            for j in 0..2 {
                let e = Complex64::new(expect[i][j].0, expect[i][j].1);
                assert!((m.0[i][j] - e).norm() < tol, "entry ({i},{j}): {} vs {}", m.0[i][j], e);
            }
        }
    }

    #[test]
    fn identity_params_give_identity() {
        let m = jones_matrix(PolarizationParams::IDENTITY).unwrap();
        assert_eq!(m, JonesMatrix::identity());
    }

    #[test]
    fn quarter_turn_is_antidiagonal() {
        let m = jones_matrix(PolarizationParams::new(FRAC_PI_2, 0.0, 0.0)).unwrap();
        assert_matrix_close(&m, [[(0.0, 0.0), (-1.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]], 1e-15);
    }

    #[test]
    fn fig1_triple_matches_trig_oracle() {
        let m = jones_matrix(PolarizationParams::new(0.84, 2.28, -0.05)).unwrap();
        assert_matrix_close(&m, oracle_matrix(0.84, 2.28, -0.05), 1e-14);
        assert!(m.unitarity_defect() < 1e-12);
    }

    #[test]
    fn non_finite_params_rejected() {
        assert!(jones_matrix(PolarizationParams::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(jones_matrix(PolarizationParams::new(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn quarter_turn_swaps_modes() {
        let s = DualPolState::from_quadratures(0.3, -1.2, 2.0, 0.7);
        let m = jones_matrix(PolarizationParams::new(FRAC_PI_2, 0.0, 0.0)).unwrap();
        let out = apply_transform(&m, &s).unwrap();
        assert!((out.h.x + 2.0).abs() < 1e-15 && (out.h.p + 0.7).abs() < 1e-15);
        assert!((out.v.x - 0.3).abs() < 1e-15 && (out.v.p + 1.2).abs() < 1e-15);

        let cf = transformed_quadratures_closed_form(PolarizationParams::new(FRAC_PI_2, 0.0, 0.0), &s);
        assert!((cf.h.x + s.v.x).abs() < 1e-15);
    }

    #[test]
    fn closed_form_identity() {
        let s = DualPolState::from_quadratures(0.3, -1.2, 2.0, 0.7);
        assert_eq!(transformed_quadratures_closed_form(PolarizationParams::IDENTITY, &s), s);
    }

    #[test]
    fn stokes_examples() {
        let a = stokes_from_params(PolarizationParams::new(0.0, 0.0, 0.0));
        assert_eq!((a.s1, a.s2, a.s3), (-0.0, 1.0, 0.0));
        let b = stokes_from_params(PolarizationParams::new(1.234, 0.0, FRAC_PI_2));
        assert!(b.s1.abs() < 1e-15 && b.s2.abs() < 1e-15 && (b.s3 - 1.0).abs() < 1e-15);

        let c = stokes_from_params(PolarizationParams::new(0.84, 2.28, -0.05));
        let (cd, sd) = ((-0.05f64).cos(), (-0.05f64).sin());
        assert!((c.s1 + cd * (1.68f64).sin()).abs() < 1e-15);
        assert!((c.s2 - cd * (1.68f64).cos()).abs() < 1e-15);
        assert!((c.s3 - sd).abs() < 1e-15);
        assert!((c.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_examples() {
        let id = canonicalize(PolarizationParams::IDENTITY);
        assert_eq!(id, PolarizationParams::IDENTITY);

        let p = PolarizationParams::new(PI + 0.3, 0.1, 0.0);
        let c = canonicalize(p);
        assert!((c.theta - 0.3).abs() < 1e-12);
        assert!((c.phi - (0.1 + PI)).abs() < 1e-12);
        assert_eq!(c.delta, 0.0);
        let dist = jones_matrix(p).unwrap().max_entry_distance(&jones_matrix(c).unwrap());
        assert!(dist < 1e-12);

        let p = PolarizationParams::new(0.2, 0.5, TAU + 0.4);
        let c = canonicalize(p);
        assert!((c.theta - 0.2).abs() < 1e-12);
        assert!((c.phi - (0.5 + PI).rem_euclid(TAU)).abs() < 1e-12);
        assert!((c.delta - 0.4).abs() < 1e-12);
        let dist = jones_matrix(p).unwrap().max_entry_distance(&jones_matrix(c).unwrap());
        assert!(dist < 1e-12);
    }

    #[test]
    fn h_row_partner_shares_first_row_and_negates_second() {
        let p = canonicalize(PolarizationParams::new(2.1, 0.4, -1.0));
        let q = h_row_partner(p);
        let (mp, mq) = (jones_matrix(p).unwrap(), jones_matrix(q).unwrap());
        for j in 0..2 {
            assert!((mp.0[0][j] - mq.0[0][j]).norm() < 1e-12);
            assert!((mp.0[1][j] + mq.0[1][j]).norm() < 1e-12);
        }
        let f = h_row_canonicalize(p);
        assert!(f.theta <= FRAC_PI_2);
        assert_eq!(f, q);
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_uniform_transform(&mut ChaCha20Rng::seed_from_u64(42));
        let b = sample_uniform_transform(&mut ChaCha20Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn sampler_covers_sphere_uniformly() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 100_000;
        let (mut m1, mut m2, mut m3, mut up) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..n {
            let p = sample_uniform_transform(&mut rng);
            assert!((0.0..PI).contains(&p.theta));
            assert!((0.0..TAU).contains(&p.phi));
            assert!((-PI..PI).contains(&p.delta));
            let s = stokes_from_params(p);
            m1 += s.s1;
            m2 += s.s2;
            m3 += s.s3;
            up += usize::from(s.s3 > 0.0);
        }
        let n = n as f64;
        for m in [m1, m2, m3] {
            assert!((m / n).abs() < 0.02, "mean {}", m / n);
        }
        let frac = up as f64 / n;
        assert!((frac - 0.5).abs() < 0.01, "upper fraction {frac}");
    }

    fn angle() -> impl Strategy<Value = f64> {
        -20.0..20.0f64
    }

    fn quad() -> impl Strategy<Value = f64> {
        -50.0..50.0f64
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn unitary_for_all_params(t in angle(), f in angle(), d in angle()) {
            let m = jones_matrix(PolarizationParams::new(t, f, d)).unwrap();
            prop_assert!(m.unitarity_defect() < 1e-12);
        }

        #[test]
        fn closed_form_matches_matrix_and_conserves_norm(
            t in angle(), f in angle(), d in angle(),
            a in quad(), b in quad(), c in quad(), e in quad(),
        ) {
            let params = PolarizationParams::new(t, f, d);
            let s = DualPolState::from_quadratures(a, b, c, e);
            let via_matrix = apply_transform(&jones_matrix(params).unwrap(), &s).unwrap();
            let closed = transformed_quadratures_closed_form(params, &s);
            for (x, y) in via_matrix.quadratures().iter().zip(closed.quadratures()) {
                prop_assert!((x - y).abs() < 1e-12 * (1.0 + s.norm_sqr().sqrt()));
            }
            let rel = (closed.norm_sqr() - s.norm_sqr()).abs() / s.norm_sqr().max(1e-300);
            prop_assert!(rel < 1e-12);
        }

        #[test]
        fn canonicalize_preserves_matrix(t in angle(), f in angle(), d in angle()) {
            let p = PolarizationParams::new(t, f, d);
            let c = canonicalize(p);
            prop_assert!((0.0..PI).contains(&c.theta));
            prop_assert!((0.0..TAU).contains(&c.phi));
            prop_assert!((-PI..PI).contains(&c.delta));
            let dist = jones_matrix(p).unwrap().max_entry_distance(&jones_matrix(c).unwrap());
            prop_assert!(dist < 1e-12);
        }

        #[test]
        fn stokes_is_unit_and_phase_free(t in angle(), f in angle(), d in angle()) {
            let a = stokes_from_params(PolarizationParams::new(t, f, d));
            let b = stokes_from_params(PolarizationParams::new(t, f + 1.7, d));
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            prop_assert_eq!(a, b);
        }
    }
}
