//! Smooth closed billiard boundaries.
//!
//! A boundary is given by a smooth periodic map `t -> r(t)` on `[0, 2π)`,
//! traversed counterclockwise. From it we derive an exact arclength
//! representation: the speed `|r'(t)|` is expanded in a Fourier series, which
//! integrates term by term, and `s -> t` is inverted by Newton's method. All
//! downstream consumers (the boundary integral solver, the orbit finder, the
//! counting code) address the boundary by arclength `s ∈ [0, L)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("boundary self-intersects near parameters t = {0:.6} and t = {1:.6}")]
    SelfIntersectingBoundary(f64, f64),
    #[error("boundary derivative vanishes near t = {0:.6}")]
    NonSmooth(f64),
    #[error("invalid curve parameter: {0}")]
    InvalidParameter(String),
}

/// Polynomial conformal image of the unit circle,
/// `w(z) = scale · (z + a z² + b e^{iδ} z³)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalMapSpec {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ConformalMapSpec {
    /// The Africa billiard, `w = z + 0.2 z² + 0.2 e^{iπ/3} z³`.
    pub fn africa() -> Self {
        Self { a: 0.2, b: 0.2, delta: PI / 3.0, scale: 1.0 }
    }
}

/// Which boundary to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CurveSpec {
    Disk { radius: f64 },
    Ellipse { semi_a: f64, semi_b: f64 },
    Conformal(ConformalMapSpec),
}

impl CurveSpec {
    pub fn africa() -> Self {
        CurveSpec::Conformal(ConformalMapSpec::africa())
    }

    /// The same family with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            CurveSpec::Disk { radius } => CurveSpec::Disk { radius: radius * factor },
            CurveSpec::Ellipse { semi_a, semi_b } => CurveSpec::Ellipse {
                semi_a: semi_a * factor,
                semi_b: semi_b * factor,
            },
            CurveSpec::Conformal(c) => CurveSpec::Conformal(ConformalMapSpec {
                scale: c.scale * factor,
                ..c
            }),
        }
    }

    /// Position, first and second derivative with respect to `t`.
    pub fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        match *self {
            CurveSpec::Disk { radius } => {
                let (s, c) = t.sin_cos();
                (
                    [radius * c, radius * s],
                    [-radius * s, radius * c],
                    [-radius * c, -radius * s],
                )
            }
            CurveSpec::Ellipse { semi_a, semi_b } => {
                let (s, c) = t.sin_cos();
                (
                    [semi_a * c, semi_b * s],
                    [-semi_a * s, semi_b * c],
                    [-semi_a * c, -semi_b * s],
                )
            }
            CurveSpec::Conformal(ConformalMapSpec { a, b, delta, scale }) => {
                let z = Complex64::from_polar(1.0, t);
                let rot = Complex64::from_polar(b, delta);
                let w = z + a * z * z + rot * z * z * z;
                let dw = 1.0 + 2.0 * a * z + 3.0 * rot * z * z;
                let d2w = 2.0 * a + 6.0 * rot * z;
                let i = Complex64::i();
                let wt = i * z * dw;
                let wtt = -z * dw - z * z * d2w;
                (
                    [scale * w.re, scale * w.im],
                    [scale * wt.re, scale * wt.im],
                    [scale * wtt.re, scale * wtt.im],
                )
            }
        }
    }

    fn validate_parameters(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidParameter(m.to_string()));
        match *self {
            CurveSpec::Disk { radius } if !(radius > 0.0 && radius.is_finite()) => {
                bad("disk radius must be positive")
            }
            CurveSpec::Ellipse { semi_a, semi_b }
                if !(semi_a > 0.0 && semi_b > 0.0 && semi_a.is_finite() && semi_b.is_finite()) =>
            {
                bad("ellipse semi-axes must be positive")
            }
            CurveSpec::Conformal(c)
                if !(c.scale > 0.0
                    && c.scale.is_finite()
                    && c.a.is_finite()
                    && c.b.is_finite()
                    && c.delta.is_finite()) =>
            {
                bad("conformal map needs finite coefficients and a positive scale")
            }
            _ => Ok(()),
        }
    }
}

/// Local frame at one boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointData {
    pub position: [f64; 2],
    /// Unit tangent, `dr/ds`.
    pub tangent: [f64; 2],
    /// Unit normal pointing into the domain.
    pub normal: [f64; 2],
    /// Positive where the boundary bends toward the interior.
    pub curvature: f64,
}

/// An immutable smooth closed boundary with exact arclength bookkeeping.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    spec: CurveSpec,
    resolution: usize,
    /// Fourier coefficients of the speed `|r'(t)|`: mean, then (cos, sin) pairs.
    speed_mean: f64,
    speed_cos: Vec<f64>,
    speed_sin: Vec<f64>,
    perimeter: f64,
    area: f64,
}

pub const MIN_RESOLUTION: usize = 64;

impl BoundaryCurve {
    /// Builds and validates a boundary. `resolution` is the number of samples
    /// used for the smoothness and self-intersection checks and the minimum
    /// size of the speed expansion.
    pub fn build(spec: CurveSpec, resolution: usize) -> Result<Self, GeometryError> {
        spec.validate_parameters()?;
        if resolution < MIN_RESOLUTION {
            return Err(GeometryError::InvalidParameter(format!(
                "resolution {resolution} below minimum {MIN_RESOLUTION}"
            )));
        }

        let check_n = resolution.max(1024);
        let mut scale = 0.0f64;
        let mut min_speed = f64::INFINITY;
        let mut min_at = 0.0;
        let mut poly = Vec::with_capacity(check_n);
        for j in 0..check_n {
            let t = TAU * j as f64 / check_n as f64;
            let (r, d, _) = spec.eval(t);
            let sp = d[0].hypot(d[1]);
            scale = scale.max(r[0].hypot(r[1]));
            if sp < min_speed {
                min_speed = sp;
                min_at = t;
            }
            poly.push(r);
        }
        if min_speed <= 1e-10 * scale.max(1.0) {
            return Err(GeometryError::NonSmooth(min_at));
        }
        if let Some((i, j)) = first_self_intersection(&poly) {
            return Err(GeometryError::SelfIntersectingBoundary(
                TAU * i as f64 / check_n as f64,
                TAU * j as f64 / check_n as f64,
            ));
        }

        let (speed_mean, speed_cos, speed_sin) = speed_series(&spec, resolution);
        let perimeter = TAU * speed_mean;

        // ½∮(x dy − y dx); the integrand is a trigonometric polynomial (or
        // analytic), so the trapezoidal rule is spectrally exact.
        let m = 4 * (speed_cos.len() + 1).max(resolution);
        let mut twice_area = 0.0;
        for j in 0..m {
            let t = TAU * j as f64 / m as f64;
            let (r, d, _) = spec.eval(t);
            twice_area += r[0] * d[1] - r[1] * d[0];
        }
        let area = 0.5 * twice_area * TAU / m as f64;
        if !(area > 0.0) {
            return Err(GeometryError::InvalidParameter(
                "boundary must be traversed counterclockwise".into(),
            ));
        }

        Ok(Self { spec, resolution, speed_mean, speed_cos, speed_sin, perimeter, area })
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// `(L, A)`.
    pub fn geometric_invariants(&self) -> (f64, f64) {
        (self.perimeter, self.area)
    }

    /// Same shape, lengths multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        Self::build(self.spec.scaled(factor), self.resolution)
    }

    /// Speed `|dr/dt|`.
    pub fn speed(&self, t: f64) -> f64 {
        let (_, d, _) = self.spec.eval(t);
        d[0].hypot(d[1])
    }

    /// Arclength from `t = 0` to `t`, for `t` in `[0, 2π]`.
    pub fn arclength_at_param(&self, t: f64) -> f64 {
        let mut s = self.speed_mean * t;
        for (m0, (&c, &sn)) in self.speed_cos.iter().zip(&self.speed_sin).enumerate() {
            let m = (m0 + 1) as f64;
            let (sm, cm) = (m * t).sin_cos();
            s += (c * sm + sn * (1.0 - cm)) / m;
        }
        s
    }

    /// Inverse of [`arclength_at_param`](Self::arclength_at_param); `s` is
    /// wrapped into `[0, L)`.
    pub fn param_at_arclength(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.perimeter);
        let mut t = TAU * s / self.perimeter;
        for _ in 0..50 {
            let f = self.arclength_at_param(t) - s;
            let dt = f / self.speed(t);
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        t
    }

    /// Frame at parameter `t` (not arclength).
    pub fn point_at_param(&self, t: f64) -> PointData {
        let (r, d, dd) = self.spec.eval(t);
        let sp = d[0].hypot(d[1]);
        let tangent = [d[0] / sp, d[1] / sp];
        PointData {
            position: r,
            tangent,
            normal: [-tangent[1], tangent[0]],
            curvature: (d[0] * dd[1] - d[1] * dd[0]) / (sp * sp * sp),
        }
    }

    /// Frame at arclength `s`, wrapped modulo `L`.
    pub fn point_data(&self, s: f64) -> PointData {
        self.point_at_param(self.param_at_arclength(s))
    }

    /// Frames at `n` points equally spaced in arclength, starting at `s = 0`.
    pub fn uniform_arclength_nodes(&self, n: usize) -> Vec<PointData> {
        let h = self.perimeter / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut t = 0.0;
        for j in 0..n {
            let s = h * j as f64;
            // warm-started Newton; consecutive nodes are close in t
            for _ in 0..50 {
                let f = self.arclength_at_param(t) - s;
                let dt = f / self.speed(t);
                t -= dt;
                if dt.abs() < 1e-15 {
                    break;
                }
            }
            out.push(self.point_at_param(t));
        }
        out
    }

    /// Closed polygon through `n` points equally spaced in the parameter.
    pub fn polygon(&self, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|j| self.spec.eval(TAU * j as f64 / n as f64).0).collect()
    }

    /// Sampled `(s, x, y, κ)` rows at `n` points uniform in arclength.
    pub fn export_table(&self, n: usize) -> Vec<[f64; 4]> {
        let h = self.perimeter / n as f64;
        self.uniform_arclength_nodes(n)
            .into_iter()
            .enumerate()
            .map(|(j, p)| [h * j as f64, p.position[0], p.position[1], p.curvature])
            .collect()
    }

    /// Comma-separated `(s, x, y, kappa)` table.
    pub fn export_csv(&self, n: usize) -> String {
        let mut out = String::from("s,x,y,kappa\n");
        for row in self.export_table(n) {
            out.push_str(&format!("{:.12},{:.12},{:.12},{:.12}\n", row[0], row[1], row[2], row[3]));
        }
        out
    }

    /// `∮ κ ds`, spectrally accurate.
    pub fn total_curvature(&self) -> f64 {
        let m = 4 * self.resolution.max(self.speed_cos.len() + 1);
        let mut acc = 0.0;
        for j in 0..m {
            let t = TAU * j as f64 / m as f64;
            let p = self.point_at_param(t);
            acc += p.curvature * self.speed(t);
        }
        acc * TAU / m as f64
    }

    /// Winding-number test against a fine polygonal approximation.
    pub fn contains(&self, p: [f64; 2], polygon: &[[f64; 2]]) -> bool {
        point_in_polygon(p, polygon)
    }
}

/// Fourier expansion of `|r'(t)|`, doubling the sample count until the tail
/// coefficients are negligible.
fn speed_series(spec: &CurveSpec, min_samples: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let mut planner = FftPlanner::<f64>::new();
    let mut m = min_samples.next_power_of_two().max(64);
    loop {
        let fft = planner.plan_fft_forward(m);
        let mut buf: Vec<Complex64> = (0..m)
            .map(|j| {
                let (_, d, _) = spec.eval(TAU * j as f64 / m as f64);
                Complex64::new(d[0].hypot(d[1]), 0.0)
            })
            .collect();
        fft.process(&mut buf);
        let mean = buf[0].re / m as f64;
        let half = m / 2;
        let tail = buf[half / 2..half]
            .iter()
            .map(|c| c.norm() / m as f64)
            .fold(0.0, f64::max);
        if tail <= 1e-15 * mean || m >= 1 << 16 {
            let mut cos = Vec::with_capacity(half - 1);
            let mut sin = Vec::with_capacity(half - 1);
            for c in &buf[1..half] {
                // speed = mean + Σ (2Re c_m / m) cos(mt) − (2Im c_m / m) sin(mt)
                cos.push(2.0 * c.re / m as f64);
                sin.push(-2.0 * c.im / m as f64);
            }
            return (mean, cos, sin);
        }
        m *= 2;
    }
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn first_self_intersection(poly: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a, b, poly[j], poly[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Crossing-number point-in-polygon test.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// True when the open segment `p–q` avoids every polygon edge and its
/// midpoint lies inside. Edges touching the endpoints are skipped via a
/// small trim of the segment.
pub fn chord_is_interior(p: [f64; 2], q: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let trim = 1e-4;
    let a = [p[0] + trim * (q[0] - p[0]), p[1] + trim * (q[1] - p[1])];
    let b = [q[0] + trim * (p[0] - q[0]), q[1] + trim * (p[1] - q[1])];
    let n = poly.len();
    for i in 0..n {
        if segments_cross(a, b, poly[i], poly[(i + 1) % n]) {
            return false;
        }
    }
    point_in_polygon([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], poly)
}
