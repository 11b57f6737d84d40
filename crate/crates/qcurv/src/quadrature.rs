//! Gauss rules, composite panels and finite-difference stencils.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::constants::log_gamma;

/// Nodes and weights of a quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Integrate `f` over `[a, b]` by an affine map of the rule.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss-Legendre rule by Newton iteration on `P_m`.
pub fn gauss_legendre(m: usize) -> Rule {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d.is_finite() { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule for the weight `(1 - x^2)^a` on `[-1, 1]`, `a > -1`.
///
/// Nodes come from the Jacobi matrix and are polished by Newton steps on the
/// Gegenbauer polynomial `C_m^{(a + 1/2)}`; weights use the Christoffel formula.
pub fn gauss_gegenbauer(m: usize, a: f64) -> Rule {
    assert!(m >= 1 && a > -1.0);
    if a == 0.0 {
        return gauss_legendre(m);
    }
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let q = 2.0 * kf + 2.0 * a;
        let b2 = 4.0 * kf * (kf + a) * (kf + a) * (kf + 2.0 * a) / (q * q * (q + 1.0) * (q - 1.0));
        let b = b2.sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let lam = a + 0.5;
    let mf = m as f64;
    // h_{m-1} = π 2^{1-2λ} Γ(m-1+2λ) / ((m-1)! (m-1+λ) Γ(λ)²)
    let ln_h = PI.ln() + (1.0 - 2.0 * lam) * 2f64.ln() + log_gamma(mf - 1.0 + 2.0 * lam).unwrap()
        - log_gamma(mf).unwrap()
        - (mf - 1.0 + lam).ln()
        - 2.0 * log_gamma(lam).unwrap();
    let ratio = 2.0 * (mf + lam - 1.0) / mf;
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = nodes[i];
        for _ in 0..8 {
            let (c, cm1) = gegenbauer_pair(m, lam, x);
            let d = (-mf * x * c + (mf + 2.0 * lam - 1.0) * cm1) / (1.0 - x * x);
            let dx = c / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (c, cm1) = gegenbauer_pair(m, lam, x);
        let d = (-mf * x * c + (mf + 2.0 * lam - 1.0) * cm1) / (1.0 - x * x);
        nodes[i] = x;
        weights[i] = ratio * ln_h.exp() / (cm1 * d);
    }
    // Enforce exact symmetry.
    for i in 0..m / 2 {
        let x = 0.5 * (nodes[m - 1 - i] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[m - 1 - i]);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// `(C_m^λ(x), C_{m-1}^λ(x))` by the three-term recurrence.
fn gegenbauer_pair(m: usize, lam: f64, x: f64) -> (f64, f64) {
    let mut c0 = 1.0;
    let mut c1 = 2.0 * lam * x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 1..m {
        let kf = k as f64;
        let c2 = (2.0 * (kf + lam) * x * c1 - (kf + 2.0 * lam - 1.0) * c0) / (kf + 1.0);
        c0 = c1;
        c1 = c2;
    }
    (c1, c0)
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]` with equal panels.
pub fn composite(rule: &Rule, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        acc += rule.integrate(lo, lo + h, &mut f);
    }
    acc
}

/// Trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Finite-difference weights (Fornberg) for derivatives `0..=order` at `x0`.
///
/// Returns `w[k][j]`, the weight of node `j` in the `k`-th derivative.
pub fn fornberg(x0: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Central stencil for the `order`-th derivative on a unit-spaced grid using
/// offsets `-half..=half`.
pub fn central_stencil(order: usize, half: usize) -> Vec<f64> {
    let xs: Vec<f64> = (-(half as isize)..=half as isize).map(|k| k as f64).collect();
    fornberg(0.0, &xs, order).swap_remove(order)
}

/// Apply a central stencil with node stride `stride` and spacing `h` to the
/// interior of `values`. Entries without a full stencil are `NaN`.
pub fn apply_stencil(values: &[f64], stencil: &[f64], stride: usize, h: f64, order: usize) -> Vec<f64> {
    let half = stencil.len() / 2;
    let n = values.len();
    let reach = half * stride;
    let scale = (stride as f64 * h).powi(order as i32);
    (0..n)
        .map(|i| {
            if i < reach || i + reach >= n {
                return f64::NAN;
            }
            let mut acc = 0.0;
            for (k, c) in stencil.iter().enumerate() {
                let j = i + k * stride - reach;
                acc += c * values[j];
            }
            acc / scale
        })
        .collect()
}
