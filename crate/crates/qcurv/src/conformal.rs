//! Stereographic projection, Jacobians, Kelvin inversion and radial fields.
//!
//! Radial grids are uniform in `t = -ln r` and symmetric about `t = 0`, so the
//! inversion `r -> 1/r` is an index reversal.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::constants::{factorial_nm1, sphere_area};
use crate::error::{domain, Error, Result};
use crate::quadrature::trapezoid;

/// Coordinate carried by a [`RadialField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    /// Polar angle from the north pole, `θ ∈ [0, π]`.
    SpherePolar,
    /// Euclidean radius `r > 0`.
    EuclideanRadius,
    /// Log-radial coordinate `t` with `r = e^{-t}`.
    LogRadial,
}

/// Uniform grid in `t = -ln r` on `[-T, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub t_max: f64,
    pub nodes: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        Self { t_max: 18.0, nodes: 4096 }
    }
}

impl LogGrid {
    pub fn new(t_max: f64, nodes: usize) -> Result<Self> {
        if !(t_max > 0.0) || nodes < 8 {
            return Err(Error::Config(format!("grid needs T > 0 and at least 8 nodes, got T = {t_max}, nodes = {nodes}")));
        }
        Ok(Self { t_max, nodes })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.t_max / (self.nodes - 1) as f64
    }

    /// `t_i`, exactly antisymmetric under `i -> N-1-i`.
    pub fn t(&self, i: usize) -> f64 {
        let m = (self.nodes - 1) as f64;
        self.t_max * (2.0 * i as f64 - m) / m
    }

    pub fn r(&self, i: usize) -> f64 {
        (-self.t(i)).exp()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.t(i)).collect()
    }

    /// Largest index range whose `ln r` lies in `[lo, hi]`.
    pub fn ln_r_window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let idx: Vec<usize> = (0..self.nodes)
            .filter(|&i| {
                let lr = -self.t(i);
                lr >= lo - 1e-12 && lr <= hi + 1e-12
            })
            .collect();
        match (idx.first(), idx.last()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => 0..0,
        }
    }

    /// Sample `f(r)` on the grid.
    pub fn field(&self, n: usize, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            chart: Chart::LogRadial,
            grid: self.ts(),
            values: (0..self.nodes).map(|i| f(self.r(i))).collect(),
            n,
        }
    }
}

/// A radial function sampled on a strictly monotone 1-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub chart: Chart,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub n: usize,
}

impl RadialField {
    pub fn new(chart: Chart, grid: Vec<f64>, values: Vec<f64>, n: usize) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::Config(format!(
                "grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        let inc = grid.windows(2).all(|w| w[1] > w[0]);
        let dec = grid.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(domain("grid must be strictly monotone"));
        }
        let last = values.len() - 1;
        if values[1..last].iter().any(|v| !v.is_finite()) {
            return Err(domain("field values must be finite at interior nodes"));
        }
        match chart {
            Chart::SpherePolar if grid.iter().any(|&x| !(0.0..=PI).contains(&x)) => {
                return Err(domain("polar angles must lie in [0, π]"))
            }
            Chart::EuclideanRadius if grid.iter().any(|&x| x <= 0.0) => {
                return Err(domain("radii must be positive"))
            }
            _ => {}
        }
        Ok(Self { chart, grid, values, n })
    }

    /// Sample `f` at the given coordinates.
    pub fn from_fn(chart: Chart, grid: Vec<f64>, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(chart, grid, values, n)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Euclidean radii of the samples (`r = tan(θ/2)` on the sphere chart).
    pub fn radii(&self) -> Vec<f64> {
        self.grid.iter().map(|&x| coord_to_r(self.chart, x)).collect()
    }

    /// Relabel the samples in another chart. Values are unchanged; only the
    /// coordinates move, so the conversion is exact up to rounding.
    pub fn to_chart(&self, chart: Chart) -> Result<RadialField> {
        if chart == self.chart {
            return Ok(self.clone());
        }
        let grid: Vec<f64> = self
            .grid
            .iter()
            .map(|&x| r_to_coord(chart, coord_to_r(self.chart, x)))
            .collect();
        if grid.iter().any(|g| !g.is_finite()) {
            return Err(domain("chart conversion left the representable range"));
        }
        RadialField::new(chart, grid, self.values.clone(), self.n)
    }

    /// Local cubic interpolation in the field's own coordinate.
    pub fn value_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        let inc = g[1] > g[0];
        let pos = if inc {
            g.partition_point(|&v| v < x)
        } else {
            g.partition_point(|&v| v > x)
        };
        let m = g.len();
        let start = pos.saturating_sub(2).min(m.saturating_sub(4));
        let end = (start + 4).min(m);
        let mut acc = 0.0;
        for i in start..end {
            let mut li = 1.0;
            for j in start..end {
                if j != i {
                    li *= (x - g[j]) / (g[i] - g[j]);
                }
            }
            acc += li * self.values[i];
        }
        acc
    }

    /// Write `coordinate,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "coordinate,value")?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x:e},{v:e}")?;
        }
        Ok(())
    }
}

fn coord_to_r(chart: Chart, x: f64) -> f64 {
    match chart {
        Chart::SpherePolar => (0.5 * x).tan(),
        Chart::EuclideanRadius => x,
        Chart::LogRadial => (-x).exp(),
    }
}

fn r_to_coord(chart: Chart, r: f64) -> f64 {
    match chart {
        Chart::SpherePolar => 2.0 * r.atan(),
        Chart::EuclideanRadius => r,
        Chart::LogRadial => -r.ln(),
    }
}

/// Stereographic projection `R^n -> S^n ⊂ R^{n+1}`, with `0 ↦ N`.
pub fn stereo(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let den = 1.0 + r2;
    let mut eta: Vec<f64> = x.iter().map(|v| 2.0 * v / den).collect();
    eta.push((1.0 - r2) / den);
    eta
}

/// Inverse of [`stereo`]; fails at the south pole.
pub fn stereo_inv(eta: &[f64]) -> Result<Vec<f64>> {
    let (last, head) = eta.split_last().ok_or_else(|| domain("empty point"))?;
    let den = 1.0 + last;
    if den.abs() < 1e-14 {
        return Err(Error::Pole("stereo_inv is undefined at the south pole".into()));
    }
    Ok(head.iter().map(|v| v / den).collect())
}

/// `J_S(r) = (2/(1+r²))^n`.
pub fn jacobian_s(r: f64, n: usize) -> f64 {
    (2.0 / (1.0 + r * r)).powi(n as i32)
}

/// `ln J_S(r)`, safe for very large `r`.
pub fn ln_jacobian_s(r: f64, n: usize) -> f64 {
    let lr = r.ln();
    let ln1p = if lr > 0.0 {
        2.0 * lr + (-2.0 * lr).exp().ln_1p()
    } else {
        (r * r).ln_1p()
    };
    n as f64 * (2f64.ln() - ln1p)
}

/// Chordal distance between `S(x)` and `S(y)` for `|x| = r`, `|y| = ρ` and
/// angle `φ` between them.
pub fn chordal_from_radii(r: f64, rho: f64, phi: f64) -> f64 {
    let d2 = (r * r + rho * rho - 2.0 * r * rho * phi.cos()).max(0.0);
    (2.0 / (1.0 + r * r)).sqrt() * d2.sqrt() * (2.0 / (1.0 + rho * rho)).sqrt()
}

/// Geodesic distance on the unit sphere.
pub fn geodesic_distance(eta: &[f64], xi: &[f64]) -> f64 {
    let c: f64 = eta.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    chord_to_geodesic(c)
}

pub fn chord_to_geodesic(chord: f64) -> f64 {
    2.0 * (0.5 * chord).min(1.0).asin()
}

/// Kelvin transform `ū(r) = u(1/r) - 2 ln r` on a log-symmetric grid.
pub fn kelvin(u: &RadialField) -> Result<RadialField> {
    let m = u.len();
    let sym_tol = 1e-12;
    match u.chart {
        Chart::LogRadial => {
            for i in 0..m {
                let (a, b) = (u.grid[i], u.grid[m - 1 - i]);
                if (a + b).abs() > sym_tol * (1.0 + a.abs()) {
                    return Err(domain("grid is not log-symmetric"));
                }
            }
            let values = (0..m).map(|i| u.values[m - 1 - i] + 2.0 * u.grid[i]).collect();
            RadialField::new(Chart::LogRadial, u.grid.clone(), values, u.n)
        }
        Chart::EuclideanRadius => {
            for i in 0..m {
                if (u.grid[i] * u.grid[m - 1 - i] - 1.0).abs() > sym_tol {
                    return Err(domain("grid is not log-symmetric"));
                }
            }
            let values = (0..m).map(|i| u.values[m - 1 - i] - 2.0 * u.grid[i].ln()).collect();
            RadialField::new(Chart::EuclideanRadius, u.grid.clone(), values, u.n)
        }
        Chart::SpherePolar => Err(domain("kelvin expects a Euclidean or log-radial field")),
    }
}

/// `f̃ = f∘S · J_S^{s/n}`, as a field on the Euclidean-radius chart.
/// The polar grid must avoid the poles.
pub fn pushforward_density(f: &RadialField, s: f64) -> Result<RadialField> {
    if f.chart != Chart::SpherePolar {
        return Err(domain("pushforward_density expects a field on the sphere chart"));
    }
    if f.grid.iter().any(|&th| th <= 0.0 || th >= PI) {
        return Err(domain("polar grid must lie strictly inside (0, π)"));
    }
    let n = f.n;
    let radii: Vec<f64> = f.grid.iter().map(|&th| (0.5 * th).tan()).collect();
    let values = radii
        .iter()
        .zip(&f.values)
        .map(|(&r, &v)| v * (s / n as f64 * ln_jacobian_s(r, n)).exp())
        .collect();
    RadialField::new(Chart::EuclideanRadius, radii, values, n)
}

/// `∫_{R^n} g(r, value) dx` for a field on a uniform log-radial grid, by the
/// trapezoid rule in `t`.
pub fn radial_integral(u: &RadialField, g: impl Fn(f64, f64) -> f64) -> Result<f64> {
    if u.chart != Chart::LogRadial {
        return Err(domain("radial_integral expects a log-radial field"));
    }
    let h = (u.grid[1] - u.grid[0]).abs();
    let nf = u.n as f64;
    let integrand: Vec<f64> = u
        .grid
        .iter()
        .zip(&u.values)
        .map(|(&t, &v)| {
            let r = (-t).exp();
            g(r, v) * (-nf * t).exp()
        })
        .collect();
    Ok(sphere_area(u.n - 1) * trapezoid(&integrand, h))
}

/// `∫ e^{n u} dx`.
pub fn mass(u: &RadialField) -> Result<f64> {
    let nf = u.n as f64;
    radial_integral(u, |_, v| (nf * v).exp())
}

/// The standard bubble `ln(2 ((n-1)!)^{1/n} λ / (1 + λ² r²))`.
pub fn bubble_value(n: usize, lambda: f64, r: f64) -> f64 {
    let c = factorial_nm1(n).powf(1.0 / n as f64);
    (2.0 * c * lambda).ln() - (lambda * lambda * r * r).ln_1p()
}

/// Bubble sampled on a log grid.
pub fn bubble(n: usize, lambda: f64, grid: &LogGrid) -> RadialField {
    grid.field(n, |r| bubble_value(n, lambda, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::lambda_1;
    use crate::quadrature::{gauss_gegenbauer, gauss_legendre};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn stereo_examples() {
        let north = stereo(&[0.0, 0.0, 0.0]);
        assert_eq!(north, vec![0.0, 0.0, 0.0, 1.0]);
        let eq = stereo(&[0.6, 0.8, 0.0]);
        assert!(eq[3].abs() < 1e-15);
        let p = stereo(&[2.0, 0.0, 0.0]);
        for (a, b) in p.iter().zip([0.8, 0.0, 0.0, -0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(stereo_inv(&[0.0, 0.0, 0.0, -1.0]), Err(Error::Pole(_))));
    }

    proptest! {
        #[test]
        fn stereo_round_trip(x in prop::collection::vec(-50.0f64..50.0, 1..6)) {
            let eta = stereo(&x);
            let norm: f64 = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-14);
            let back = stereo_inv(&eta).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn chordal_product_identity(r in 0.0f64..20.0, rho in 0.0f64..20.0, phi in 0.0f64..PI) {
            let x = stereo(&[r, 0.0, 0.0]);
            let y = stereo(&[rho * phi.cos(), rho * phi.sin(), 0.0]);
            let direct: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!((direct - chordal_from_radii(r, rho, phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn chordal_examples() {
        assert_eq!(chordal_from_radii(1.5, 1.5, 0.0), 0.0);
        let far = chordal_from_radii(0.0, 1e9, 0.0);
        assert!((far - 2.0).abs() < 1e-8);
        assert!((chord_to_geodesic(far) - PI).abs() < 1e-4);
        assert_relative_eq!(chordal_from_radii(1.0, 1.0, PI / 2.0), 2f64.sqrt(), max_relative = 1e-15);
        let n = [0.0, 0.0, 1.0];
        let e = [1.0, 0.0, 0.0];
        assert_relative_eq!(geodesic_distance(&n, &e), PI / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn jacobian_values_and_integral() {
        assert_eq!(jacobian_s(0.0, 4), 16.0);
        assert_eq!(jacobian_s(1.0, 4), 1.0);
        assert_relative_eq!(ln_jacobian_s(3.0, 4).exp(), jacobian_s(3.0, 4), max_relative = 1e-14);
        let g = LogGrid::new(30.0, 4001).unwrap();
        let j = g.field(3, |r| jacobian_s(r, 3));
        let total = radial_integral(&j, |_, v| v).unwrap();
        assert_relative_eq!(total, 2.0 * PI * PI, max_relative = 1e-12);
    }

    #[test]
    fn grid_is_log_symmetric() {
        let g = LogGrid::default();
        for i in 0..g.nodes {
            assert_eq!(g.t(i), -g.t(g.nodes - 1 - i));
        }
    }

    #[test]
    fn bubble_kelvin_invariant_and_mass() {
        let g = LogGrid::default();
        let u = bubble(4, 1.0, &g);
        let k = kelvin(&u).unwrap();
        for (a, b) in u.values.iter().zip(&k.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let kk = kelvin(&k).unwrap();
        for (a, b) in u.values.iter().zip(&kk.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = mass(&u).unwrap();
        assert_relative_eq!(m, lambda_1(4), max_relative = 1e-10);
        let u2 = bubble(4, 2.5, &g);
        let m2 = mass(&kelvin(&u2).unwrap()).unwrap();
        assert_relative_eq!(m2, mass(&u2).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn kelvin_rejects_asymmetric_grid() {
        let f = RadialField::from_fn(Chart::EuclideanRadius, vec![0.5, 1.0, 3.0], 4, |r| r).unwrap();
        assert!(kelvin(&f).is_err());
        let e = RadialField::from_fn(Chart::EuclideanRadius, vec![0.5, 1.0, 2.0], 4, |r| r.ln()).unwrap();
        let k = kelvin(&e).unwrap();
        assert_relative_eq!(k.values[0], 2f64.ln() + 2.0 * 2f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn chart_round_trip() {
        let g = LogGrid::new(5.0, 101).unwrap();
        let f = g.field(4, |r| (1.0 / (1.0 + r)).sin());
        let back = f.to_chart(Chart::SpherePolar).unwrap().to_chart(Chart::LogRadial).unwrap();
        for (a, b) in f.grid.iter().zip(&back.grid) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(f.values, back.values);
    }

    fn sphere_norm(n: usize, p: f64, f: impl Fn(f64) -> f64) -> f64 {
        let rule = gauss_gegenbauer(400, (n as f64 - 2.0) / 2.0);
        let s: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * f(x.acos()).abs().powf(p)).sum();
        sphere_area(n - 1) * s
    }

    fn euclid_norm(n: usize, s_ord: f64, f: impl Fn(f64) -> f64) -> f64 {
        let g = LogGrid::new(30.0, 12001).unwrap();
        let th: Vec<f64> = (0..g.nodes).rev().map(|i| 2.0 * g.r(i).atan()).collect();
        let fs = RadialField::from_fn(Chart::SpherePolar, th, n, &f).unwrap();
        let pf = pushforward_density(&fs, s_ord).unwrap();
        let field = pf.to_chart(Chart::LogRadial).unwrap();
        let p = n as f64 / s_ord;
        // Stored with decreasing t; the trapezoid does not care about direction.
        radial_integral(&field, |_, v| v.abs().powf(p)).unwrap()
    }

    #[test]
    fn pushforward_preserves_norm() {
        let fams: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|t: f64| t.cos()),
            Box::new(|t: f64| (t.cos()).exp()),
            Box::new(|t: f64| 1.0 + 0.5 * (2.0 * t).sin()),
            Box::new(|t: f64| (t - 1.0).powi(2)),
            Box::new(|t: f64| 1.0 / (2.0 + t.cos())),
        ];
        for f in &fams {
            let a = sphere_norm(4, 2.0, f);
            let b = euclid_norm(4, 2.0, f);
            assert_relative_eq!(a, b, max_relative = 1e-8);
        }
        let a = sphere_norm(3, 1.0, |_| 1.0);
        assert_relative_eq!(a, sphere_area(3), max_relative = 1e-12);
        let b = euclid_norm(3, 3.0, |_| 1.0);
        assert_relative_eq!(b, sphere_area(3), max_relative = 1e-8);
    }

    #[test]
    fn pushforward_of_one_is_jacobian() {
        let th: Vec<f64> = gauss_legendre(20).nodes.iter().map(|x| 0.5 * PI * (x + 1.0)).collect();
        let f = RadialField::from_fn(Chart::SpherePolar, th, 4, |_| 1.0).unwrap();
        let pf = pushforward_density(&f, 4.0).unwrap();
        for (r, v) in pf.grid.iter().zip(&pf.values) {
            assert_relative_eq!(*v, jacobian_s(*r, 4), max_relative = 1e-13);
        }
        let z = RadialField::from_fn(Chart::SpherePolar, vec![0.5, 1.0], 4, |_| 0.0).unwrap();
        assert!(pushforward_density(&z, 2.0).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_header() {
        let f = RadialField::from_fn(Chart::EuclideanRadius, vec![1.0, 2.0], 4, |r| r).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("coordinate,value\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
