//! Semi-nonparametric latent density `h(z) = P_L(z)^2 phi(z)`.
//!
//! The polynomial coefficients are parametrized by `L` angles through a
//! polar map onto the unit sphere, `c = c(angles)`, followed by `a = B^{-1} c`
//! where `B` is the upper Cholesky factor of the normal moment matrix
//! `A = E[w w']`, `w = (1, z, ..., z^L)`. This makes `a' A a = 1` hold for
//! every angle vector, so `h` integrates to one without a separate
//! normalizing constant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 2;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `E(w^k)` for `w ~ N(0, 1)`: zero for odd `k`, `(k-1)!!` for even `k`.
pub fn normal_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut m = k as i64 - 1;
    while m > 1 {
        acc *= m as f64;
        m -= 2;
    }
    acc
}

/// Angles of the polar parametrization, each in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnpAngles {
    phi: Vec<f64>,
}

impl SnpAngles {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.len() > MAX_DEGREE {
            return Err(Error::Domain(format!(
                "polynomial degree {} not supported (max {MAX_DEGREE})",
                phi.len()
            )));
        }
        for (l, &v) in phi.iter().enumerate() {
            if !v.is_finite() || !(-FRAC_PI_2..=FRAC_PI_2).contains(&v) {
                return Err(Error::Domain(format!(
                    "angle {} = {v} outside [-pi/2, pi/2]",
                    l + 1
                )));
            }
        }
        Ok(Self { phi })
    }

    /// The `L = 0` case: no angles, standard normal latent density.
    pub fn normal() -> Self {
        Self { phi: Vec::new() }
    }

    /// Build without domain checks. Used where smooth extension past the
    /// boundary is needed (finite differences across `+-pi/2`).
    pub(crate) fn unchecked(phi: Vec<f64>) -> Self {
        Self { phi }
    }

    pub fn degree(&self) -> usize {
        self.phi.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    /// True when some angle sits on `+-pi/2` (the density collapses toward
    /// a lower degree, and to the normal when all angles do).
    pub fn on_boundary(&self, tol: f64) -> bool {
        self.phi.iter().any(|v| (v.abs() - FRAC_PI_2).abs() <= tol)
    }
}

/// Normal moment matrices for a given degree.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrices {
    /// `A[i][j] = E(w^{i+j})` (zero-based indices).
    pub a: DMatrix<f64>,
    /// Upper-triangular factor with `B'B = A`.
    pub b: DMatrix<f64>,
    /// `E(w^{i+j+1})`.
    pub mstar: DMatrix<f64>,
    /// `E(w^{i+j+2})`.
    pub mstarstar: DMatrix<f64>,
}

impl MomentMatrices {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Domain(format!(
                "polynomial degree {degree} not supported"
            )));
        }
        let k = degree + 1;
        let a = DMatrix::from_fn(k, k, |i, j| normal_moment(i + j));
        let mstar = DMatrix::from_fn(k, k, |i, j| normal_moment(i + j + 1));
        let mstarstar = DMatrix::from_fn(k, k, |i, j| normal_moment(i + j + 2));
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Internal("moment matrix not positive definite".into()))?;
        let b = chol.l().transpose();
        Ok(Self {
            a,
            b,
            mstar,
            mstarstar,
        })
    }

    pub fn degree(&self) -> usize {
        self.a.nrows() - 1
    }
}

/// Polynomial coefficients `a` and the unit vector `c = B a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnpCoefficients {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl SnpCoefficients {
    /// `P_L(z) = sum_l a_l z^l`.
    #[inline]
    pub fn poly(&self, z: f64) -> f64 {
        self.a.iter().rev().fold(0.0, |acc, &coef| acc * z + coef)
    }
}

/// Mean and variance of the latent variable under an SNP density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentMoments {
    pub mean: f64,
    pub variance: f64,
}

impl LatentMoments {
    pub const STANDARD: LatentMoments = LatentMoments {
        mean: 0.0,
        variance: 1.0,
    };

    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(Error::Domain(format!(
                "latent variance must be positive and finite (mean {mean}, variance {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }
}

/// Polar map from angles to a point on the unit sphere in `R^{L+1}`.
pub fn angles_to_unit_vector(angles: &SnpAngles) -> Result<Vec<f64>> {
    for &v in angles.values() {
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&v) {
            return Err(Error::Domain(format!("angle {v} outside [-pi/2, pi/2]")));
        }
    }
    Ok(unit_vector(angles.values()))
}

fn unit_vector(phi: &[f64]) -> Vec<f64> {
    let l = phi.len();
    let mut c = Vec::with_capacity(l + 1);
    let mut cos_prod = 1.0;
    for &v in phi {
        c.push(cos_prod * v.sin());
        cos_prod *= v.cos();
    }
    c.push(cos_prod);
    debug_assert_eq!(c.len(), l + 1);
    c
}

/// `d c / d phi` as an `(L+1) x L` matrix, column `l` holding the partials
/// with respect to angle `l`.
fn unit_vector_jacobian(phi: &[f64]) -> DMatrix<f64> {
    let l = phi.len();
    DMatrix::from_fn(l + 1, l, |k, m| {
        // c_k = prod_{i<k} cos(phi_i) * sin(phi_k) for k < L; c_L = prod_i cos(phi_i).
        if k < l && m > k {
            return 0.0;
        }
        let mut v = 1.0;
        for (i, &p) in phi.iter().enumerate().take(k.min(l)) {
            v *= if i == m { -p.sin() } else { p.cos() };
        }
        if k < l {
            v *= if m == k { phi[k].cos() } else { phi[k].sin() };
        }
        v
    })
}

/// Solve `B a = c` for the polynomial coefficients.
pub fn coefficients_from_angles(
    angles: &SnpAngles,
    mats: &MomentMatrices,
) -> Result<SnpCoefficients> {
    if mats.degree() != angles.degree() {
        return Err(Error::Domain(format!(
            "moment matrices built for L = {} but angles have L = {}",
            mats.degree(),
            angles.degree()
        )));
    }
    let c = angles_to_unit_vector(angles)?;
    let a = solve_upper(&mats.b, &c)?;
    Ok(SnpCoefficients { a, c })
}

fn solve_upper(b: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let v = DVector::from_column_slice(rhs);
    b.solve_upper_triangular(&v)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Internal("singular moment factor".into()))
}

/// `h(z) = P_L(z)^2 phi(z)`.
pub fn snp_density(z: f64, coeffs: &SnpCoefficients) -> f64 {
    let p = coeffs.poly(z);
    p * p * std_normal_pdf(z)
}

/// Mean `a'M*a` and variance `a'M**a - (a'M*a)^2`.
pub fn latent_moments(angles: &SnpAngles, mats: &MomentMatrices) -> Result<LatentMoments> {
    let coeffs = coefficients_from_angles(angles, mats)?;
    let (mean, second) = raw_moments(&coeffs.a, mats);
    LatentMoments::new(mean, second - mean * mean)
}

fn quad_form(m: &DMatrix<f64>, a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            acc += a[i] * m[(i, j)] * a[j];
        }
    }
    acc
}

fn raw_moments(a: &[f64], mats: &MomentMatrices) -> (f64, f64) {
    (quad_form(&mats.mstar, a), quad_form(&mats.mstarstar, a))
}

/// Trigonometric closed forms for `E(Z)` and `V(Z)` when `L <= 2`. For
/// `L = 1` the second angle is fixed at `pi/2`; for `L = 0` both are.
pub fn latent_moments_closed_form(angles: &SnpAngles) -> LatentMoments {
    let phi = angles.values();
    let p1 = phi.first().copied().unwrap_or(FRAC_PI_2);
    let p2 = phi.get(1).copied().unwrap_or(FRAC_PI_2);
    let (s1, c1) = p1.sin_cos();
    let (s2, c2) = p2.sin_cos();
    let r2 = std::f64::consts::SQRT_2;
    let mean = 2.0 * s1 * c1 * s2 + (4.0 / r2) * c1 * c1 * c2 * s2;
    let second =
        s1 * s1 + (4.0 / r2) * c1 * s1 * c2 + 3.0 * c1 * c1 * s2 * s2 + 5.0 * c1 * c1 * c2 * c2;
    LatentMoments {
        mean,
        variance: second - mean * mean,
    }
}

/// Everything derived from one angle vector, bundled for repeated
/// evaluation inside the likelihood.
#[derive(Debug, Clone)]
pub struct SnpDensity {
    angles: SnpAngles,
    mats: MomentMatrices,
    coeffs: SnpCoefficients,
}

impl SnpDensity {
    pub fn new(angles: &SnpAngles) -> Result<Self> {
        let mats = MomentMatrices::new(angles.degree())?;
        let coeffs = coefficients_from_angles(angles, &mats)?;
        Ok(Self {
            angles: angles.clone(),
            mats,
            coeffs,
        })
    }

    /// Same as [`SnpDensity::new`] but accepts angles past `+-pi/2`; the
    /// map is smooth there and still yields a proper density.
    pub(crate) fn extended(phi: &[f64]) -> Self {
        let mats = MomentMatrices::new(phi.len()).expect("degree checked by caller");
        let c = unit_vector(phi);
        let a = solve_upper(&mats.b, &c).expect("Cholesky factor of A is nonsingular");
        Self {
            angles: SnpAngles::unchecked(phi.to_vec()),
            mats,
            coeffs: SnpCoefficients { a, c },
        }
    }

    pub fn degree(&self) -> usize {
        self.angles.degree()
    }

    pub fn angles(&self) -> &SnpAngles {
        &self.angles
    }

    pub fn coefficients(&self) -> &SnpCoefficients {
        &self.coeffs
    }

    pub fn matrices(&self) -> &MomentMatrices {
        &self.mats
    }

    #[inline]
    pub fn poly(&self, z: f64) -> f64 {
        self.coeffs.poly(z)
    }

    pub fn density(&self, z: f64) -> f64 {
        snp_density(z, &self.coeffs)
    }

    pub fn moments(&self) -> LatentMoments {
        let (mean, second) = raw_moments(&self.coeffs.a, &self.mats);
        LatentMoments {
            mean,
            variance: second - mean * mean,
        }
    }

    /// `d a / d phi`, shape `(L+1) x L`.
    pub fn coefficient_jacobian(&self) -> DMatrix<f64> {
        let jc = unit_vector_jacobian(self.angles.values());
        let mut out = DMatrix::zeros(jc.nrows(), jc.ncols());
        for l in 0..jc.ncols() {
            let col: Vec<f64> = jc.column(l).iter().copied().collect();
            let sol = solve_upper(&self.mats.b, &col).expect("nonsingular factor");
            for (k, v) in sol.into_iter().enumerate() {
                out[(k, l)] = v;
            }
        }
        out
    }

    /// Gradients of `(E(Z), V(Z))` with respect to the angles.
    pub fn moment_gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let da = self.coefficient_jacobian();
        let a = DVector::from_column_slice(&self.coeffs.a);
        let ms_a = &self.mats.mstar * &a;
        let mss_a = &self.mats.mstarstar * &a;
        let mean = ms_a.dot(&a);
        let mut d_mean = Vec::with_capacity(self.degree());
        let mut d_var = Vec::with_capacity(self.degree());
        for l in 0..self.degree() {
            let col = da.column(l);
            let dm = 2.0 * ms_a.dot(&col);
            let d2 = 2.0 * mss_a.dot(&col);
            d_mean.push(dm);
            d_var.push(d2 - 2.0 * mean * dm);
        }
        (d_mean, d_var)
    }
}

/// The grid `{-pi/2, -pi/2 + 0.1, ...}` intersected with `[-pi/2, pi/2]`.
pub fn angle_grid(step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let v = -FRAC_PI_2 + step * k as f64;
        if v > FRAC_PI_2 + 1e-12 {
            break;
        }
        out.push(v.min(FRAC_PI_2));
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normal_moments_double_factorial() {
        assert_eq!(normal_moment(0), 1.0);
        assert_eq!(normal_moment(1), 0.0);
        assert_eq!(normal_moment(2), 1.0);
        assert_eq!(normal_moment(4), 3.0);
        assert_eq!(normal_moment(6), 15.0);
        assert_eq!(normal_moment(8), 105.0);
    }

    #[test]
    fn moment_matrices_for_degree_two() {
        let m = MomentMatrices::new(2).unwrap();
        let expect_star = [[0.0, 1.0, 0.0], [1.0, 0.0, 3.0], [0.0, 3.0, 0.0]];
        let expect_sstar = [[1.0, 0.0, 3.0], [0.0, 3.0, 0.0], [3.0, 0.0, 15.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.mstar[(i, j)], expect_star[i][j]);
                assert_eq!(m.mstarstar[(i, j)], expect_sstar[i][j]);
            }
        }
        let btb = m.b.transpose() * &m.b;
        assert!((btb - &m.a).abs().max() < 1e-14);
        assert_eq!(m.b[(1, 0)], 0.0);
        assert_eq!(m.b[(2, 0)], 0.0);
    }

    #[test]
    fn unit_vector_examples() {
        let c = angles_to_unit_vector(&SnpAngles::new(vec![FRAC_PI_2]).unwrap()).unwrap();
        assert!(close(c[0], 1.0, 1e-15) && close(c[1], 0.0, 1e-15));
        let c = angles_to_unit_vector(&SnpAngles::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(c, vec![0.0, 1.0]);
        let c = angles_to_unit_vector(&SnpAngles::new(vec![0.3, -0.5]).unwrap()).unwrap();
        let expect = [
            0.3f64.sin(),
            0.3f64.cos() * (-0.5f64).sin(),
            0.3f64.cos() * (-0.5f64).cos(),
        ];
        for k in 0..3 {
            assert!(close(c[k], expect[k], 1e-15));
        }
        let norm: f64 = c.iter().map(|v| v * v).sum();
        assert!(close(norm, 1.0, 1e-12));
    }

    #[test]
    fn angles_out_of_domain_rejected() {
        assert!(matches!(SnpAngles::new(vec![1.6]), Err(Error::Domain(_))));
        assert!(matches!(SnpAngles::new(vec![0.1, 0.2, 0.3]), Err(Error::Domain(_))));
        assert!(matches!(SnpAngles::new(vec![f64::NAN]), Err(Error::Domain(_))));
        assert!(SnpAngles::new(vec![-FRAC_PI_2, FRAC_PI_2]).is_ok());
    }

    #[test]
    fn coefficient_examples() {
        let m1 = MomentMatrices::new(1).unwrap();
        let a = coefficients_from_angles(&SnpAngles::new(vec![FRAC_PI_2]).unwrap(), &m1).unwrap();
        assert!(close(a.a[0], 1.0, 1e-15) && close(a.a[1], 0.0, 1e-15));
        let a = coefficients_from_angles(&SnpAngles::new(vec![0.0]).unwrap(), &m1).unwrap();
        assert_eq!(a.a, vec![0.0, 1.0]);

        let m2 = MomentMatrices::new(2).unwrap();
        let (p1, p2) = (0.7f64, 1.0f64);
        let a = coefficients_from_angles(&SnpAngles::new(vec![p1, p2]).unwrap(), &m2).unwrap();
        let r2 = std::f64::consts::SQRT_2;
        let expect = [
            p1.sin() - p1.cos() * p2.cos() / r2,
            p1.cos() * p2.sin(),
            p1.cos() * p2.cos() / r2,
        ];
        for k in 0..3 {
            assert!(close(a.a[k], expect[k], 1e-14));
        }
        let norm = quad_form(&m2.a, &a.a);
        assert!(close(norm, 1.0, 1e-10));
    }

    #[test]
    fn mismatched_degree_rejected() {
        let m1 = MomentMatrices::new(1).unwrap();
        let res = coefficients_from_angles(&SnpAngles::new(vec![0.1, 0.1]).unwrap(), &m1);
        assert!(matches!(res, Err(Error::Domain(_))));
    }

    #[test]
    fn density_examples() {
        let d = SnpDensity::new(&SnpAngles::new(vec![FRAC_PI_2]).unwrap()).unwrap();
        assert!(close(d.density(0.0), 0.398_942_280_401_432_7, 1e-15));
        let d = SnpDensity::new(&SnpAngles::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(d.density(0.0), 0.0);
    }

    #[test]
    fn moments_examples() {
        for s in [1.0, -1.0] {
            let m = SnpDensity::new(&SnpAngles::new(vec![s * FRAC_PI_2]).unwrap())
                .unwrap()
                .moments();
            assert!(close(m.mean, 0.0, 1e-15) && close(m.variance, 1.0, 1e-15));
        }
        let m = SnpDensity::new(&SnpAngles::new(vec![0.0]).unwrap())
            .unwrap()
            .moments();
        assert!(close(m.mean, 0.0, 1e-15) && close(m.variance, 3.0, 1e-15));
        let l0 = SnpDensity::new(&SnpAngles::normal()).unwrap().moments();
        assert_eq!(l0, LatentMoments::STANDARD);
    }

    #[test]
    fn closed_form_matches_matrix_form() {
        for &p1 in &[-1.2, -0.3, 0.0, 0.23, 0.9, FRAC_PI_2] {
            let one = SnpAngles::new(vec![p1]).unwrap();
            let a = SnpDensity::new(&one).unwrap().moments();
            let b = latent_moments_closed_form(&one);
            assert!(close(a.mean, b.mean, 1e-12) && close(a.variance, b.variance, 1e-12));
            for &p2 in &[-1.4, -0.2, 0.5, 1.0] {
                let two = SnpAngles::new(vec![p1, p2]).unwrap();
                let a = SnpDensity::new(&two).unwrap().moments();
                let b = latent_moments_closed_form(&two);
                assert!(close(a.mean, b.mean, 1e-12) && close(a.variance, b.variance, 1e-12));
            }
        }
    }

    #[test]
    fn coefficient_jacobian_matches_differences() {
        for phi in [vec![0.4], vec![-1.1], vec![0.7, 1.0], vec![-0.3, -1.2]] {
            let d = SnpDensity::extended(&phi);
            let jac = d.coefficient_jacobian();
            let (dm, dv) = d.moment_gradients();
            for l in 0..phi.len() {
                let h = 1e-6;
                let mut up = phi.clone();
                up[l] += h;
                let mut dn = phi.clone();
                dn[l] -= h;
                let (du, dd) = (SnpDensity::extended(&up), SnpDensity::extended(&dn));
                for k in 0..=phi.len() {
                    let fd = (du.coefficients().a[k] - dd.coefficients().a[k]) / (2.0 * h);
                    assert!(close(jac[(k, l)], fd, 1e-8), "da{k}/dphi{l}");
                }
                let (mu, md) = (du.moments(), dd.moments());
                assert!(close(dm[l], (mu.mean - md.mean) / (2.0 * h), 1e-7));
                assert!(close(dv[l], (mu.variance - md.variance) / (2.0 * h), 1e-7));
            }
        }
    }

    #[test]
    fn angle_grid_covers_domain() {
        let g = angle_grid(0.1);
        assert_eq!(g.len(), 32);
        assert_eq!(g[0], -FRAC_PI_2);
        assert!(g.iter().all(|v| (-FRAC_PI_2..=FRAC_PI_2).contains(v)));
    }
}
