//! Zonal analysis and synthesis on `S^n` and the Paneitz operators as
//! spectral multipliers.
//!
//! Zonal harmonics are Gegenbauer polynomials `C_l^{((n-1)/2)}(cos θ)` scaled
//! to unit `L²(S^n)` norm. Inner products use Gauss quadrature in `x = cos θ`
//! for the weight `(1 - x²)^{(n-2)/2}`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::conformal::{Chart, LogGrid, RadialField};
use crate::constants::{log_gamma, paneitz_multiplier, sphere_area, DimensionContext};
use crate::error::{Error, Result};
use crate::quadrature::{apply_stencil, central_stencil, gauss_gegenbauer, trapezoid};

pub const DEFAULT_L_MAX: usize = 64;
pub const DEFAULT_NODES: usize = 256;

/// Coefficients against normalized zonal harmonics `Z_0..=Z_{L_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalSpectrum {
    pub n: usize,
    pub coeffs: Vec<f64>,
}

impl ZonalSpectrum {
    pub fn zeros(n: usize, l_max: usize) -> Self {
        Self { n, coeffs: vec![0.0; l_max + 1] }
    }

    pub fn unit(n: usize, l_max: usize, l: usize) -> Self {
        let mut s = Self::zeros(n, l_max);
        s.coeffs[l] = 1.0;
        s
    }

    pub fn l_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dot(&self, other: &ZonalSpectrum) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `‖u‖_{L²(S^n)}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `‖P_n^{1/2} u‖₂ = (Σ m_l u_l²)^{1/2}` with `s = n/2`.
    pub fn pn_half_norm(&self) -> f64 {
        let ctx = DimensionContext::critical(self.n).expect("valid dimension");
        self.coeffs
            .iter()
            .enumerate()
            .map(|(l, c)| paneitz_multiplier(l, &ctx) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `(‖u‖₂² + ‖P_n^{1/2} u‖₂²)^{1/2}`.
    pub fn h_half_norm(&self) -> f64 {
        (self.l2_norm().powi(2) + self.pn_half_norm().powi(2)).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { n: self.n, coeffs: self.coeffs.iter().map(|c| a * c).collect() }
    }

    pub fn axpy(&mut self, a: f64, x: &ZonalSpectrum) {
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += a * d;
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "l,coefficient")?;
        for (l, c) in self.coeffs.iter().enumerate() {
            writeln!(out, "{l},{c:e}")?;
        }
        Ok(())
    }
}

/// Operator applied by [`apply_paneitz`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaneitzVariant {
    /// `P_{2s}`, multiplier `Γ(l+n/2+s)/Γ(l+n/2-s)`.
    P2s,
    /// `P_{2s}^{1/2}`.
    P2sSqrt,
    /// `P_s`, the same family at half the order.
    Ps,
}

/// Multiplier of `variant` at degree `l`.
pub fn variant_multiplier(variant: PaneitzVariant, l: usize, n: usize, s: f64) -> f64 {
    match variant {
        PaneitzVariant::P2s => paneitz_multiplier(l, &DimensionContext { n, s }),
        PaneitzVariant::P2sSqrt => paneitz_multiplier(l, &DimensionContext { n, s }).max(0.0).sqrt(),
        PaneitzVariant::Ps => paneitz_multiplier(l, &DimensionContext { n, s: s / 2.0 }),
    }
}

/// Coefficient-wise multiplication by the operator's multipliers.
pub fn apply_paneitz(spec: &ZonalSpectrum, variant: PaneitzVariant, s: f64) -> ZonalSpectrum {
    let coeffs = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(l, c)| variant_multiplier(variant, l, spec.n, s) * c)
        .collect();
    ZonalSpectrum { n: spec.n, coeffs }
}

/// `ln ‖C_l^{λ}(η·N)‖²_{L²(S^n)}` with `λ = (n-1)/2`.
fn ln_gegenbauer_norm_sq(l: usize, n: usize) -> f64 {
    let lam = (n as f64 - 1.0) / 2.0;
    let lf = l as f64;
    sphere_area(n - 1).ln() + std::f64::consts::PI.ln() + (1.0 - 2.0 * lam) * 2f64.ln()
        + log_gamma(lf + 2.0 * lam).unwrap()
        - log_gamma(lf + 1.0).unwrap()
        - (lf + lam).ln()
        - 2.0 * log_gamma(lam).unwrap()
}

/// Normalization factors `1/‖C_l‖` for `l = 0..=l_max`.
pub fn zonal_scales(n: usize, l_max: usize) -> Vec<f64> {
    (0..=l_max).map(|l| (-0.5 * ln_gegenbauer_norm_sq(l, n)).exp()).collect()
}

/// `Z_0(x), ..., Z_{l_max}(x)` into `out`.
pub fn zonal_values_into(x: f64, n: usize, scales: &[f64], out: &mut [f64]) {
    let lam = (n as f64 - 1.0) / 2.0;
    let l_max = scales.len() - 1;
    let mut c0 = 1.0;
    out[0] = scales[0];
    if l_max == 0 {
        return;
    }
    let mut c1 = 2.0 * lam * x;
    out[1] = c1 * scales[1];
    for k in 1..l_max {
        let kf = k as f64;
        let c2 = (2.0 * (kf + lam) * x * c1 - (kf + 2.0 * lam - 1.0) * c0) / (kf + 1.0);
        c0 = c1;
        c1 = c2;
        out[k + 1] = c1 * scales[k + 1];
    }
}

pub fn zonal_values(x: f64, n: usize, l_max: usize) -> Vec<f64> {
    let scales = zonal_scales(n, l_max);
    let mut out = vec![0.0; l_max + 1];
    zonal_values_into(x, n, &scales, &mut out);
    out
}

/// Precomputed quadrature and basis table for one `(n, L_max, nodes)`.
#[derive(Debug, Clone)]
pub struct ZonalBasis {
    pub n: usize,
    pub l_max: usize,
    /// Quadrature nodes in `x = cos θ`, increasing.
    pub x: Vec<f64>,
    /// Weights including the `|S^{n-1}|` factor, so `Σ w_k f(x_k) ≈ ∫_{S^n} f`.
    pub w: Vec<f64>,
    /// `table[k * (l_max + 1) + l] = Z_l(x_k)`.
    table: Vec<f64>,
}

impl ZonalBasis {
    pub fn new(n: usize, l_max: usize, nodes: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("dimension n = {n} must be at least 2")));
        }
        if 2 * l_max > nodes {
            return Err(Error::Config(format!(
                "l_max = {l_max} exceeds half the quadrature nodes ({nodes})"
            )));
        }
        let rule = gauss_gegenbauer(nodes, (n as f64 - 2.0) / 2.0);
        let area = sphere_area(n - 1);
        let scales = zonal_scales(n, l_max);
        let stride = l_max + 1;
        let mut table = vec![0.0; nodes * stride];
        for (k, &x) in rule.nodes.iter().enumerate() {
            zonal_values_into(x, n, &scales, &mut table[k * stride..(k + 1) * stride]);
        }
        Ok(Self {
            n,
            l_max,
            x: rule.nodes,
            w: rule.weights.iter().map(|w| w * area).collect(),
            table,
        })
    }

    pub fn default_for(n: usize) -> Result<Self> {
        Self::new(n, DEFAULT_L_MAX, DEFAULT_NODES)
    }

    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    /// Row of `Z_l(x_k)` for node `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        let s = self.l_max + 1;
        &self.table[k * s..(k + 1) * s]
    }

    /// Polar angles of the nodes (decreasing, since `x` increases).
    pub fn thetas(&self) -> Vec<f64> {
        self.x.iter().map(|x| x.acos()).collect()
    }

    /// Euclidean radii `r = tan(θ/2) = sqrt((1-x)/(1+x))` of the nodes.
    pub fn radii(&self) -> Vec<f64> {
        self.x.iter().map(|x| ((1.0 - x) / (1.0 + x)).sqrt()).collect()
    }

    /// `∫_{S^n} f` for samples at the nodes.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        samples.iter().zip(&self.w).map(|(f, w)| f * w).sum()
    }

    /// Coefficients of node samples.
    pub fn analyze(&self, samples: &[f64]) -> ZonalSpectrum {
        let mut coeffs = vec![0.0; self.l_max + 1];
        for (k, (f, w)) in samples.iter().zip(&self.w).enumerate() {
            let fw = f * w;
            for (c, z) in coeffs.iter_mut().zip(self.row(k)) {
                *c += fw * z;
            }
        }
        ZonalSpectrum { n: self.n, coeffs }
    }

    pub fn analyze_fn(&self, f: impl Fn(f64) -> f64) -> ZonalSpectrum {
        let samples: Vec<f64> = self.thetas().into_iter().map(f).collect();
        self.analyze(&samples)
    }

    /// Coefficients of a sphere-chart field sampled at this basis' nodes.
    pub fn analyze_field(&self, u: &RadialField) -> Result<ZonalSpectrum> {
        if u.chart != Chart::SpherePolar || u.n != self.n {
            return Err(Error::Config("analyze needs a sphere-chart field of matching dimension".into()));
        }
        let th = self.thetas();
        if u.grid.len() != th.len() || u.grid.iter().zip(&th).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::Config("field is not sampled at the quadrature nodes".into()));
        }
        Ok(self.analyze(&u.values))
    }

    /// Node samples of a spectrum (truncated to this basis' `L_max`).
    pub fn synthesize_samples(&self, spec: &ZonalSpectrum) -> Vec<f64> {
        let l = spec.l_max().min(self.l_max);
        (0..self.nodes())
            .map(|k| {
                let row = self.row(k);
                (0..=l).map(|j| spec.coeffs[j] * row[j]).sum()
            })
            .collect()
    }

    pub fn synthesize(&self, spec: &ZonalSpectrum) -> RadialField {
        RadialField {
            chart: Chart::SpherePolar,
            grid: self.thetas(),
            values: self.synthesize_samples(spec),
            n: self.n,
        }
    }
}

/// Evaluate a spectrum at arbitrary `x = cos θ` values.
pub fn synthesize_at(spec: &ZonalSpectrum, xs: &[f64]) -> Vec<f64> {
    let scales = zonal_scales(spec.n, spec.l_max());
    let mut z = vec![0.0; spec.l_max() + 1];
    xs.iter()
        .map(|&x| {
            zonal_values_into(x, spec.n, &scales, &mut z);
            z.iter().zip(&spec.coeffs).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Outcome of [`conformal_norm_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormIdentity {
    pub spectral: f64,
    pub euclidean: f64,
    pub residual: f64,
}

/// Compare `Σ m_l u_l²` with `∫_{R^4} w Δ²w dx` for `w = u∘S`.
///
/// The Euclidean side is evaluated in `t = -ln r`, where
/// `r⁴ Δ² = ∂_t⁴ - 4∂_t²` for radial functions in dimension four and
/// `cos θ = tanh t`; derivatives come from eighth-order central differences.
pub fn conformal_norm_identity_check(spec: &ZonalSpectrum) -> Result<NormIdentity> {
    if spec.n != 4 {
        return Err(Error::Unsupported(format!(
            "the Euclidean energy is local only for n = 4, got n = {}",
            spec.n
        )));
    }
    let spectral = spec.pn_half_norm().powi(2);
    let grid = LogGrid::new(22.0, 2201)?;
    let h = grid.h();
    let xs: Vec<f64> = grid.ts().iter().map(|t| t.tanh()).collect();
    let w = synthesize_at(spec, &xs);
    let d4 = apply_stencil(&w, &central_stencil(4, 5), 1, h, 4);
    let d2 = apply_stencil(&w, &central_stencil(2, 5), 1, h, 2);
    let integrand: Vec<f64> = (0..w.len())
        .map(|i| if d4[i].is_nan() { 0.0 } else { w[i] * (d4[i] - 4.0 * d2[i]) })
        .collect();
    let euclidean = sphere_area(3) * trapezoid(&integrand, h);
    let residual = if spectral == 0.0 {
        euclidean.abs()
    } else {
        (spectral - euclidean).abs() / spectral
    };
    Ok(NormIdentity { spectral, euclidean, residual })
}

/// Analyze a sphere field sampled at `basis` nodes, then run the identity check.
pub fn conformal_norm_identity_check_field(u: &RadialField, basis: &ZonalBasis) -> Result<NormIdentity> {
    conformal_norm_identity_check(&basis.analyze_field(u)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, n: usize, l_max: usize, band: usize) -> ZonalSpectrum {
        let mut s = ZonalSpectrum::zeros(n, l_max);
        for l in 0..=band.min(l_max) {
            s.coeffs[l] = rng.gen_range(-1.0..1.0) / (1.0 + l as f64);
        }
        s
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in [2, 3, 4, 5] {
            let b = ZonalBasis::new(n, 40, 128).unwrap();
            for i in [0, 1, 7, 40] {
                for j in [0, 1, 7, 40] {
                    let s: f64 = (0..b.nodes()).map(|k| b.w[k] * b.row(k)[i] * b.row(k)[j]).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((s - e).abs() < 1e-11, "n={n} i={i} j={j} s={s}");
                }
            }
        }
    }

    #[test]
    fn addition_theorem_at_pole() {
        // Z_l(1)² = dim H_l / |S^n|; for n = 4, dim H_l = (2l+3)(l+1)(l+2)/6.
        let z = zonal_values(1.0, 4, 30);
        for (l, v) in z.iter().enumerate() {
            let lf = l as f64;
            let dim = (2.0 * lf + 3.0) * (lf + 1.0) * (lf + 2.0) / 6.0;
            assert_relative_eq!(v * v, dim / sphere_area(4), max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_and_cosine() {
        let b = ZonalBasis::default_for(4).unwrap();
        let c = b.analyze_fn(|_| 2.5);
        assert_relative_eq!(c.coeffs[0], 2.5 * sphere_area(4).sqrt(), max_relative = 1e-13);
        assert!(c.coeffs[1..].iter().all(|v| v.abs() < 1e-12));
        let cs = b.analyze_fn(|t| t.cos());
        assert!(cs.coeffs[1].abs() > 0.1);
        assert!(cs.coeffs.iter().enumerate().all(|(l, v)| l == 1 || v.abs() < 1e-13));
    }

    #[test]
    fn round_trip_exp_cos() {
        let b = ZonalBasis::new(4, 40, 256).unwrap();
        let th = b.thetas();
        let spec = b.analyze_fn(|t| t.cos().exp());
        let back = b.synthesize_samples(&spec);
        for (t, v) in th.iter().zip(back) {
            assert!((v - t.cos().exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn configuration_limits() {
        assert!(matches!(ZonalBasis::new(4, 65, 128), Err(Error::Config(_))));
        assert!(ZonalBasis::new(4, 64, 128).is_ok());
    }

    #[test]
    fn field_round_trip() {
        let b = ZonalBasis::new(4, 16, 64).unwrap();
        let s = ZonalSpectrum::unit(4, 16, 3);
        let f = b.synthesize(&s);
        let back = b.analyze_field(&f).unwrap();
        assert!((back.coeffs[3] - 1.0).abs() < 1e-12);
        let off = RadialField::from_fn(Chart::SpherePolar, vec![0.1, 0.2], 4, |t| t).unwrap();
        assert!(b.analyze_field(&off).is_err());
    }

    #[test]
    fn paneitz_application() {
        let b = ZonalBasis::default_for(4).unwrap();
        let c = ZonalSpectrum::unit(4, 10, 0).scaled(3.0);
        assert!(apply_paneitz(&c, PaneitzVariant::P2s, 2.0).coeffs.iter().all(|&v| v == 0.0));
        let cq = b.analyze_fn(|_| 1.0);
        assert!(apply_paneitz(&cq, PaneitzVariant::P2s, 2.0).coeffs.iter().all(|v| v.abs() < 1e-5));
        let e1 = ZonalSpectrum::unit(4, 10, 1);
        assert_relative_eq!(apply_paneitz(&e1, PaneitzVariant::P2s, 2.0).coeffs[1], 24.0, max_relative = 1e-13);
        assert_relative_eq!(e1.pn_half_norm(), 24f64.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(e1.h_half_norm(), 25f64.sqrt(), max_relative = 1e-13);
        assert_eq!(c.pn_half_norm(), 0.0);
        // Half order: for n = 4, s = 2 this is Γ(l+3)/Γ(l+1).
        let ps = apply_paneitz(&ZonalSpectrum::unit(4, 5, 3), PaneitzVariant::Ps, 2.0);
        assert_relative_eq!(ps.coeffs[3], 20.0, max_relative = 1e-13);
    }

    #[test]
    fn parseval_random_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 4] {
            let b = ZonalBasis::default_for(n).unwrap();
            for _ in 0..10 {
                let s = random_spec(&mut rng, n, 64, 30);
                let samples = b.synthesize_samples(&s);
                let sq: Vec<f64> = samples.iter().map(|v| v * v).collect();
                assert_relative_eq!(b.integrate(&sq), s.dot(&s), max_relative = 1e-8);
                let back = b.analyze(&samples);
                for (a, c) in back.coeffs.iter().zip(&s.coeffs) {
                    assert!((a - c).abs() < 1e-10);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn sqrt_twice_is_full(coeffs in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let s = ZonalSpectrum { n: 4, coeffs };
            let twice = apply_paneitz(&apply_paneitz(&s, PaneitzVariant::P2sSqrt, 2.0), PaneitzVariant::P2sSqrt, 2.0);
            let once = apply_paneitz(&s, PaneitzVariant::P2s, 2.0);
            for (a, b) in twice.coeffs.iter().zip(&once.coeffs) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn poincare_on_mean_zero(coeffs in prop::collection::vec(-3.0f64..3.0, 2..60), n in 3usize..6) {
            let mut s = ZonalSpectrum { n, coeffs };
            s.coeffs[0] = 0.0;
            let m1 = paneitz_multiplier(1, &DimensionContext::critical(n).unwrap());
            prop_assert!(s.l2_norm().powi(2) <= s.pn_half_norm().powi(2) / m1 * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn self_adjoint(a in prop::collection::vec(-2.0f64..2.0, 20), b in prop::collection::vec(-2.0f64..2.0, 20)) {
            let u = ZonalSpectrum { n: 4, coeffs: a };
            let v = ZonalSpectrum { n: 4, coeffs: b };
            let lhs = apply_paneitz(&u, PaneitzVariant::P2s, 2.0).dot(&v);
            let rhs = u.dot(&apply_paneitz(&v, PaneitzVariant::P2s, 2.0));
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn norm_identity_examples() {
        let z2 = ZonalSpectrum::unit(4, 8, 2);
        let r = conformal_norm_identity_check(&z2).unwrap();
        assert_relative_eq!(r.spectral, 120.0, max_relative = 1e-13);
        assert!(r.residual < 1e-5, "{r:?}");
        let c = ZonalSpectrum::unit(4, 8, 0);
        let rc = conformal_norm_identity_check(&c).unwrap();
        assert!(rc.spectral == 0.0 && rc.euclidean.abs() < 1e-6, "{rc:?}");
        let b = ZonalBasis::new(4, 24, 128).unwrap();
        let mut e = b.analyze_fn(|t| t.cos().exp());
        e.coeffs[0] = 0.0;
        let re = conformal_norm_identity_check(&e).unwrap();
        assert!(re.residual < 1e-5, "{re:?}");
        assert!(conformal_norm_identity_check(&ZonalSpectrum::unit(3, 4, 1)).is_err());
    }
}
