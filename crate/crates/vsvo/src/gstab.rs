//! Numerical G-stability certification of the stabilized second-order
//! filter, plus linear-stability scans of its characteristic roots.
//!
//! The certificate evaluates closed forms for a symmetric matrix `G` and a
//! vector `a` such that the one-leg form of the filtered method admits the
//! energy identity
//!
//! `(rho-combination) . (sigma-combination) = |v_new|_G^2 - |v_old|_G^2 + |a . y|^2`.
//!
//! The forms involve `sqrt(3 (7mu-1)(6mu-5)(14mu-1)(mu+1)^5)` and are
//! evaluated in complex arithmetic; G-stability requires the imaginary
//! parts to vanish, the matching system to be satisfied, and the leading
//! principal minors of `G` to be positive (Sylvester's criterion).

use num_complex::Complex64;

use crate::{Error, Result};

/// Imaginary parts above this are treated as genuinely complex entries.
const IMAG_TOL: f64 = 1e-9;
/// Matching-system defect above this fails the certificate.
const RESIDUAL_TOL: f64 = 1e-9;

/// Certificate of G-stability for one filter weight `mu`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct GStabCertificate {
    pub mu: f64,
    /// Real parts of the symmetric matrix entries.
    pub g33: f64,
    pub g32: f64,
    pub g31: f64,
    pub g22: f64,
    pub g21: f64,
    pub g11: f64,
    /// Real parts of `(a3, a2, a1, a0)`.
    pub a: [f64; 4],
    /// Leading principal minors `(G1, G2, G3)`.
    pub minors: [f64; 3],
    /// Maximum defect over the ten matching equations (complex magnitude).
    pub residual: f64,
    /// Largest imaginary part over all entries.
    pub max_imag: f64,
    pub is_g_stable: bool,
}

struct ComplexEntries {
    g: [Complex64; 6], // g33, g32, g31, g22, g21, g11
    a: [Complex64; 4], // a3, a2, a1, a0
}

/// The common radical `sqrt(3 (7mu-1)(6mu-5)(14mu-1)(mu+1)^5)`, real exactly
/// on `mu` in `[1/14, 1/7]`.
fn radical(mu: Complex64) -> Complex64 {
    let product = (7.0 * mu - 1.0) * (6.0 * mu - 5.0) * (14.0 * mu - 1.0) * (mu + 1.0).powu(5);
    (3.0 * product).sqrt()
}

fn closed_forms(mu_re: f64) -> ComplexEntries {
    let mu = Complex64::new(mu_re, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let s = radical(mu);
    let n = mu + s + 41.0 * mu.powu(2) + 83.0 * mu.powu(3) + 42.0 * mu.powu(4) + 1.0;
    let q4 = mu.powu(4) + 4.0 * mu.powu(3) + 6.0 * mu.powu(2) + 4.0 * mu + 1.0;
    let q2 = mu.powu(2) + 2.0 * mu + 1.0;

    let g33 = n / (44.0 * q4) + (-42.0 * mu.powu(2) + mu + 21.0) / (22.0 * q2);
    let g32 = (42.0 * mu.powu(2) + 13.0 * mu - 7.0) / (11.0 * q2) - n / (22.0 * q4);
    let g31 = n / (44.0 * q4) - (21.0 * mu.powu(2) + 8.0 * mu - 2.0) / (11.0 * q2);
    let g22 = n / (11.0 * q4) - (120.0 * mu.powu(2) + 23.0 * mu - 9.0) / (22.0 * q2);
    let g21 = (51.0 * mu.powu(2) + 5.0 * mu - 2.0) / (22.0 * q2) - n / (22.0 * q4);
    let g11 = (-9.0 * mu.powu(2) + 2.0 * mu) / (11.0 * q2) + n / (44.0 * q4);

    // a-entries. The verbatim closed forms carry a removable 0/0 at
    // mu = 1/10; these are the algebraically identical cancelled forms
    // (cross-checked against the verbatim transcription in tests):
    //   a3 = -4 (10mu - 1) (mu+1)^2 sqrt(X) / n,  X = n / (44 (mu+1)^4),
    //   a1 = a3 + 2 sqrt(X),  a2 = -2 a3 - sqrt(X),  a0 = -sqrt(X).
    let x = n / (44.0 * q4);
    let w = x.sqrt();
    let a3 = -4.0 * (10.0 * mu - 1.0) * (mu + one).powu(2) * w / n;
    let a1 = a3 + 2.0 * w;
    let a2 = -2.0 * a3 - w;
    let a0 = -w;

    ComplexEntries {
        g: [g33, g32, g31, g22, g21, g11],
        a: [a3, a2, a1, a0],
    }
}

/// Defects of the ten coefficient-matching equations, evaluated in complex
/// arithmetic.
fn matching_defects(mu_re: f64, e: &ComplexEntries) -> [Complex64; 10] {
    let mu = Complex64::new(mu_re, 0.0);
    let [g33, g32, g31, g22, g21, g11] = e.g;
    let [a3, a2, a1, a0] = e.a;
    let den = 11.0 * (1.0 + mu).powu(2);
    let one = Complex64::new(1.0, 0.0);
    [
        g33 + a3 * a3 - (one / (1.0 + mu)).powu(2),
        g22 - g33 + a2 * a2 - (45.0 * mu.powu(2) - 54.0 * mu) / den,
        g11 - g22 + a1 * a1 - (72.0 * mu.powu(2) - 27.0 * mu) / den,
        a0 * a0 - g11 - (9.0 * mu.powu(2) - 2.0 * mu) / den,
        2.0 * g32 + 2.0 * a3 * a2 - (48.0 * mu - 18.0) / den,
        2.0 * g31 + 2.0 * a3 * a1 - (-57.0 * mu + 9.0) / den,
        2.0 * a3 * a0 - (20.0 * mu - 2.0) / den,
        2.0 * g21 - 2.0 * g32 + 2.0 * a2 * a1 - (-117.0 * mu.powu(2) + 81.0 * mu) / den,
        -2.0 * g31 + 2.0 * a2 * a0 - (42.0 * mu.powu(2) - 24.0 * mu) / den,
        -2.0 * g21 + 2.0 * a1 * a0 - (-51.0 * mu.powu(2) + 15.0 * mu) / den,
    ]
}

/// Evaluates the certificate at one `mu`.
pub fn g_matrix(mu: f64) -> GStabCertificate {
    let e = closed_forms(mu);
    let residual = matching_defects(mu, &e)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let max_imag =
        e.g.iter()
            .chain(e.a.iter())
            .map(|z| z.im.abs())
            .fold(0.0, f64::max);
    let [g33, g32, g31, g22, g21, g11] = e.g.map(|z| z.re);
    let minor1 = g33;
    let minor2 = g33 * g22 - g32 * g32;
    let minor3 = g33 * (g22 * g11 - g21 * g21) - g32 * (g32 * g11 - g21 * g31)
        + g31 * (g32 * g21 - g22 * g31);
    let minors = [minor1, minor2, minor3];
    let is_g_stable =
        max_imag <= IMAG_TOL && residual < RESIDUAL_TOL && minors.iter().all(|&m| m > 0.0);
    GStabCertificate {
        mu,
        g33,
        g32,
        g31,
        g22,
        g21,
        g11,
        a: e.a.map(|z| z.re),
        minors,
        residual,
        max_imag,
        is_g_stable,
    }
}

/// Locates the admissible interval of the filter weight by bisection on the
/// certificate predicate, seeded inside at `mu = 0.1` and outside at
/// `mu = 0.05` and `mu = 0.2`. Endpoints are returned to within `tolerance`.
pub fn g_stable_interval(tolerance: f64) -> Result<(f64, f64)> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let stable = |mu: f64| g_matrix(mu).is_g_stable;
    let (inside, lo_seed, hi_seed) = (0.1, 0.05, 0.2);
    if !stable(inside) || stable(lo_seed) || stable(hi_seed) {
        return Err(Error::InvalidConfig(
            "bisection seeds do not bracket the stability interval".into(),
        ));
    }
    let bisect = |mut out: f64, mut inn: f64| -> f64 {
        while (inn - out).abs() > tolerance {
            let mid = 0.5 * (out + inn);
            if stable(mid) {
                inn = mid;
            } else {
                out = mid;
            }
        }
        0.5 * (out + inn)
    };
    let lo = bisect(lo_seed, inside);
    let hi = bisect(hi_seed, inside);
    // Guard against a non-monotone predicate near the located endpoints.
    let pad = 10.0 * tolerance;
    if !stable(lo + pad) || stable(lo - pad) || !stable(hi - pad) || stable(hi + pad) {
        return Err(Error::InvalidConfig(format!(
            "stability predicate is not monotone within {pad} of ({lo}, {hi})"
        )));
    }
    Ok((lo, hi))
}

/// Leading local-error constant of the stabilized method,
/// `(11/6) mu / (1 + mu)`.
pub fn error_constant_bdf3stab(mu: f64) -> f64 {
    11.0 / 6.0 * mu / (1.0 + mu)
}

/// Coefficients of the first and second characteristic polynomials of the
/// induced one-leg method at constant stepsize, index `i` holding the weight
/// of `r^i`. The `f` multiplier is `(6/11) k`.
pub fn characteristic_polynomials(mu: f64) -> ([f64; 4], [f64; 4]) {
    let b = mu / (1.0 + mu);
    let rho = [
        b - 2.0 / 11.0,
        -3.0 * b + 9.0 / 11.0,
        3.0 * b - 18.0 / 11.0,
        1.0 / (1.0 + mu),
    ];
    let sigma = [b, -3.0 * b, 3.0 * b, 1.0 / (1.0 + mu)];
    (rho, sigma)
}

/// Largest root magnitude of `rho(r) - (6/11) z sigma(r)` for `z = h
/// lambda`, computed from companion-matrix eigenvalues (the complex
/// companion matrix is realified to a 6x6 real matrix, which preserves root
/// magnitudes). `None` when the eigensolver does not converge.
pub fn max_root_magnitude(mu: f64, z: Complex64) -> Option<f64> {
    let (rho, sigma) = characteristic_polynomials(mu);
    let mut coeff = [Complex64::new(0.0, 0.0); 4];
    for i in 0..4 {
        coeff[i] = Complex64::new(rho[i], 0.0) - z * (6.0 / 11.0) * sigma[i];
    }
    let lead = coeff[3];
    let scale = coeff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if lead.norm() <= 1e-14 * scale {
        // Leading coefficient vanished; the recurrence degenerates.
        return None;
    }
    let c: Vec<Complex64> = (0..3).map(|i| coeff[i] / lead).collect();

    // Companion matrix of r^3 + c2 r^2 + c1 r + c0, realified as
    // [[Re, -Im], [Im, Re]].
    let mut m = nalgebra::DMatrix::<f64>::zeros(6, 6);
    let mut set = |r: usize, ccol: usize, v: Complex64| {
        m[(r, ccol)] = v.re;
        m[(r, ccol + 3)] = -v.im;
        m[(r + 3, ccol)] = v.im;
        m[(r + 3, ccol + 3)] = v.re;
    };
    set(1, 0, Complex64::new(1.0, 0.0));
    set(2, 1, Complex64::new(1.0, 0.0));
    for (r, cv) in c.iter().enumerate() {
        set(r, 2, -cv);
    }
    let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000)?;
    let eigs = schur.complex_eigenvalues();
    Some(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// One grid point of a stability scan.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StabilityPoint {
    pub re: f64,
    pub im: f64,
    pub max_root_magnitude: f64,
    /// False when the eigensolver failed for this point.
    pub converged: bool,
}

/// Largest characteristic-root magnitude at each grid point.
pub fn linear_stability_scan(mu: f64, grid: &[Complex64]) -> Vec<StabilityPoint> {
    crate::exec::map(grid.to_vec(), move |z| match max_root_magnitude(mu, z) {
        Some(mag) => StabilityPoint {
            re: z.re,
            im: z.im,
            max_root_magnitude: mag,
            converged: true,
        },
        None => StabilityPoint {
            re: z.re,
            im: z.im,
            max_root_magnitude: f64::NAN,
            converged: false,
        },
    })
}

/// Deterministic sample of the closed left half-plane: `n_rays` directions
/// from the positive to the negative imaginary axis crossed with `n_mags`
/// log-spaced magnitudes from `min_mag` to `max_mag` (the extreme magnitude
/// is always included).
pub fn left_half_plane_grid(
    n_rays: usize,
    n_mags: usize,
    min_mag: f64,
    max_mag: f64,
) -> Vec<Complex64> {
    assert!(n_rays >= 2 && n_mags >= 2 && min_mag > 0.0 && max_mag > min_mag);
    let mut grid = Vec::with_capacity(n_rays * n_mags);
    let (lo, hi) = (min_mag.ln(), max_mag.ln());
    for i in 0..n_rays {
        let theta =
            std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / (n_rays - 1) as f64;
        for j in 0..n_mags {
            let mag = (lo + (hi - lo) * j as f64 / (n_mags - 1) as f64).exp();
            grid.push(Complex64::from_polar(mag, theta));
        }
    }
    grid
}

/// Evenly spaced points on the imaginary axis, `|Im| <= max_mag`.
pub fn imaginary_axis_grid(n: usize, max_mag: f64) -> Vec<Complex64> {
    (0..n)
        .map(|i| {
            let v = -max_mag + 2.0 * max_mag * i as f64 / (n - 1) as f64;
            Complex64::new(0.0, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn certificate_inside_the_interval() {
        for mu in [0.072, 0.1, 0.12, 0.14] {
            let c = g_matrix(mu);
            assert!(c.is_g_stable, "mu = {mu}: {c:?}");
            assert!(c.residual < 1e-10);
            assert!(c.max_imag <= 1e-12);
        }
    }

    #[test]
    fn certificate_outside_the_interval() {
        for mu in [0.05, 0.2, 0.0, 0.5] {
            let c = g_matrix(mu);
            assert!(!c.is_g_stable, "mu = {mu}: {c:?}");
        }
    }

    #[test]
    fn removable_singularity_at_one_tenth() {
        // The verbatim closed forms are 0/0 at mu = 0.1; the cancelled forms
        // give a3 = 0 there and keep the matching system satisfied.
        let c = g_matrix(0.1);
        assert!(c.is_g_stable);
        assert_eq!(c.a[0], 0.0);
        assert!(c.residual < 1e-12);
    }

    /// Verbatim transcription of the published closed forms for the
    /// a-entries, valid away from mu = 1/10. Used as the oracle for the
    /// cancelled forms in production code.
    fn verbatim_a(mu_re: f64) -> [Complex64; 4] {
        let mu = Complex64::new(mu_re, 0.0);
        let s = radical(mu);
        let n = mu + s + 41.0 * mu.powu(2) + 83.0 * mu.powu(3) + 42.0 * mu.powu(4) + 1.0;
        let q4 = mu.powu(4) + 4.0 * mu.powu(3) + 6.0 * mu.powu(2) + 4.0 * mu + 1.0;
        let x = n / (44.0 * q4);
        let w = x.sqrt();
        let x32 = x * w;
        let a3 = (22.0 * mu.powu(2) * x32 - 42.0 * mu.powu(2) * w + mu * w + 44.0 * mu * x32 - w
            + 22.0 * x32)
            / (20.0 * mu - 2.0);
        let a2 =
            -(22.0 * mu.powu(2) * x32 - 42.0 * mu.powu(2) * w + 11.0 * mu * w + 44.0 * mu * x32
                - 2.0 * w
                + 22.0 * x32)
                / (10.0 * mu - 1.0);
        let a1 =
            (22.0 * mu.powu(2) * x32 - 42.0 * mu.powu(2) * w + 41.0 * mu * w + 44.0 * mu * x32
                - 5.0 * w
                + 22.0 * x32)
                / (20.0 * mu - 2.0);
        let a0 = -w;
        [a3, a2, a1, a0]
    }

    #[test]
    fn cancelled_forms_match_the_verbatim_transcription() {
        for i in 0..200 {
            let mu = 0.02 + 0.23 * i as f64 / 199.0;
            if (10.0 * mu - 1.0).abs() < 0.05 {
                continue; // verbatim forms lose accuracy near their 0/0
            }
            let e = closed_forms(mu);
            let v = verbatim_a(mu);
            for (c, vv) in e.a.iter().zip(v.iter()) {
                assert!(
                    (c - vv).norm() <= 1e-11 * (1.0 + vv.norm()),
                    "mu = {mu}: cancelled {c}, verbatim {vv}"
                );
            }
        }
    }

    #[test]
    fn minors_match_direct_determinants_and_eigenvalues() {
        for mu in [0.08, 0.1, 0.13] {
            let c = g_matrix(mu);
            let g = nalgebra::matrix![
                c.g33, c.g32, c.g31;
                c.g32, c.g22, c.g21;
                c.g31, c.g21, c.g11
            ];
            assert_relative_eq!(c.minors[0], g[(0, 0)], max_relative = 1e-12);
            assert_relative_eq!(
                c.minors[1],
                g.view((0, 0), (2, 2)).determinant(),
                max_relative = 1e-12
            );
            assert_relative_eq!(c.minors[2], g.determinant(), max_relative = 1e-12);
            // Positive definiteness cross-check via eigenvalues.
            let eigs = g.symmetric_eigenvalues();
            assert!(eigs.iter().all(|&v| v > 0.0), "mu = {mu}: eigs {eigs}");
        }
    }

    #[test]
    fn interval_endpoints_match_the_published_values() {
        let (lo, hi) = g_stable_interval(1e-7).unwrap();
        assert!((lo - 0.07143215).abs() <= 1e-5, "lo = {lo}");
        assert!((hi - 0.14285528).abs() <= 1e-5, "hi = {hi}");
        // The realness boundary is exactly [1/14, 1/7].
        assert!((lo - 1.0 / 14.0).abs() <= 1e-6, "lo = {lo}");
        assert!((hi - 1.0 / 7.0).abs() <= 1e-6, "hi = {hi}");
    }

    #[test]
    fn error_constant_values() {
        assert!((error_constant_bdf3stab(0.07143215) - 0.1222).abs() < 1e-4);
        assert_eq!(error_constant_bdf3stab(0.0), 0.0);
        // Smaller than the second-order BDF2 constant across the interval.
        let mut mu = 0.0715;
        while mu <= 0.1428 {
            assert!(error_constant_bdf3stab(mu) < 4.0 / 12.0);
            mu += 1e-3;
        }
    }

    #[test]
    fn consistency_root_at_zero() {
        let mag = max_root_magnitude(9.0 / 125.0, Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(mag, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn deep_stiff_limit_is_contractive() {
        let mag = max_root_magnitude(9.0 / 125.0, Complex64::new(-1e6, 0.0)).unwrap();
        assert!(mag < 1.0, "magnitude {mag}");
    }

    #[test]
    fn imaginary_axis_stays_in_the_unit_disk() {
        let grid = imaginary_axis_grid(101, 1e4);
        for p in linear_stability_scan(9.0 / 125.0, &grid) {
            assert!(p.converged);
            assert!(p.max_root_magnitude <= 1.0 + 1e-10, "{p:?}");
        }
    }
}
