//! Scalar abstraction for the closed-form parts of the library.
//!
//! Formula-level code (trigonometric factors, Rice densities, trace-formula
//! amplitudes, 2×2 stability matrices) is written against [`Real`] so it can
//! be evaluated in `f32` or `f64`. The boundary-integral solver and the
//! spectral machinery are `f64`-only.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::{Deserialize, Serialize};

pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Real> Mat2<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    /// Free flight over length `len`.
    pub fn free_flight(len: T) -> Self {
        Self::new(T::one(), len, T::zero(), T::one())
    }

    /// Specular reflection at a wall of curvature `kappa` (positive for a
    /// focusing wall), hit at angle `psi` to the tangent. Transverse
    /// coordinates flip orientation at the bounce.
    pub fn reflection(kappa: T, sin_psi: T) -> Self {
        let two = T::lit(2.0);
        Self::new(-T::one(), T::zero(), two * kappa / sin_psi, -T::one())
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn powi(&self, r: u32) -> Self {
        let mut out = Self::identity();
        for _ in 0..r {
            out = out * *self;
        }
        out
    }

    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    /// Real eigenvectors, largest |eigenvalue| first, or `None` for an
    /// elliptic (complex-eigenvalue) matrix.
    pub fn real_eigenvectors(&self) -> Option<[[T; 2]; 2]> {
        let tr = self.trace();
        let det = self.det();
        let disc = tr * tr - T::lit(4.0) * det;
        if disc < T::zero() {
            return None;
        }
        let root = disc.sqrt();
        let half = T::lit(0.5);
        let mut lambdas = [half * (tr + root), half * (tr - root)];
        if lambdas[1].abs() > lambdas[0].abs() {
            lambdas.swap(0, 1);
        }
        let [[a, b], [c, d]] = self.m;
        let vec_for = |l: T| -> [T; 2] {
            // (A − λ)v = 0: pick the better-conditioned row
            let v1 = [b, l - a];
            let v2 = [l - d, c];
            let n1 = v1[0].abs() + v1[1].abs();
            let n2 = v2[0].abs() + v2[1].abs();
            let v = if n1 >= n2 { v1 } else { v2 };
            if v[0].abs() + v[1].abs() == T::zero() {
                [T::one(), T::zero()]
            } else {
                v
            }
        };
        Some([vec_for(lambdas[0]), vec_for(lambdas[1])])
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl<T: Real> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl<T: Real> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.m[0][0] - o.m[0][0],
            self.m[0][1] - o.m[0][1],
            self.m[1][0] - o.m[1][0],
            self.m[1][1] - o.m[1][1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_are_unimodular() {
        let m = Mat2::<f64>::reflection(0.7, 0.3) * Mat2::free_flight(1.9);
        assert!((m.det() - 1.0).abs() < 1e-14);
        let m32 = Mat2::<f32>::reflection(0.7, 0.3) * Mat2::free_flight(1.9);
        assert!((m32.det() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn power_matches_repeated_product() {
        let m = Mat2::<f64>::new(2.0, 1.0, 3.0, 2.0);
        let p = m.powi(3);
        let q = m * m * m;
        assert_eq!(p, q);
        assert_eq!(m.powi(0), Mat2::identity());
    }

    #[test]
    fn hyperbolic_eigenvectors() {
        let m = Mat2::<f64>::new(2.0, 1.0, 1.0, 1.0);
        let [u, s] = m.real_eigenvectors().unwrap();
        let mu = m.apply(u);
        assert!((mu[0] * u[1] - mu[1] * u[0]).abs() < 1e-12);
        let ms = m.apply(s);
        assert!((ms[0] * s[1] - ms[1] * s[0]).abs() < 1e-12);
        let rot = Mat2::<f64>::new(0.0, -1.0, 1.0, 0.0);
        assert!(rot.real_eigenvectors().is_none());
    }
}
