//! The twelve quantitative acceptance checks, runnable from tests and the CLI.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::conformal::{bubble, mass, LogGrid};
use crate::constants::{gamma_n, lambda_1, multiplier_table, DimensionContext};
use crate::error::Result;
use crate::kernels::{g_alpha, potential_v};
use crate::mtlab::{
    adams_integral, measure_b, remark_counterexample, sharp_constant, sharpness_scan, AdamsKernel, Bivariate, Profile,
};
use crate::polyint::{sigma_window, threshold_scan, ProductPolynomial, Threshold};
use crate::solver::{
    bubble_check, fit_slope, functional_i, gradient_i, minimize, Case, SolveRequest, SphereProblem,
};
use crate::spectral::{conformal_norm_identity_check, ZonalSpectrum};

/// Criteria expected to fail; see the README for the analysis.
pub const DOCUMENTED_FAILURES: &[usize] = &[12];

pub const CRITERIA: usize = 12;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

const TABLE: [(&str, f64, Check); CRITERIA] = [
    ("bubble verification", 5.0, bubble_verification),
    ("paneitz table", 1.0, paneitz_table),
    ("conformal energy identity", 10.0, conformal_energy),
    ("g_alpha trichotomy", 5.0, g_alpha_trichotomy),
    ("potential asymptotics", 30.0, potential_asymptotics),
    ("sharp constants", 60.0, sharp_constants),
    ("improved adams lemma", 5.0, adams_lemma),
    ("remark counterexample", 60.0, counterexample),
    ("existence case b", 600.0, existence_b),
    ("existence case a", 900.0, existence_a),
    ("gradient correctness", 60.0, gradient_correctness),
    ("polynomial threshold", 60.0, polynomial_threshold),
];

/// Run criterion `id` (1-based). Errors count as failures; so does
/// exceeding the runtime budget.
pub fn run(id: usize) -> CriterionResult {
    let (name, budget, check) = TABLE[id - 1];
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if elapsed > Duration::from_secs_f64(budget) {
        passed = false;
        detail.push_str(&format!("; over the {budget}s budget"));
    }
    CriterionResult { id, name, passed, detail, seconds: elapsed.as_secs_f64(), budget_seconds: budget }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=CRITERIA).map(run).collect()
}

fn bubble_verification() -> Result<(bool, String)> {
    let grid = LogGrid::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for lam in [0.5, 1.0, 2.0] {
        let b = bubble_check(lam, &grid)?;
        let mass_err = (b.mass - 16.0 * PI * PI).abs() / (16.0 * PI * PI);
        ok &= b.residual < 1e-6 && mass_err < 1e-8;
        parts.push(format!("λ={lam}: res {:.1e} mass {:.1e}", b.residual, mass_err));
    }
    Ok((ok, parts.join(", ")))
}

fn paneitz_table() -> Result<(bool, String)> {
    let ctx = DimensionContext::new(4, 2.0)?;
    let table = multiplier_table(50, &ctx);
    let bad = (0..=50u64).find(|&l| table[l as usize] != (l * (l + 3) * (l * (l + 3) + 2)) as f64);
    Ok(match bad {
        None => (true, "l = 0..50 exact".into()),
        Some(l) => (false, format!("mismatch at l = {l}")),
    })
}

fn conformal_energy() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let mut s = ZonalSpectrum::zeros(4, 12);
        for l in 1..=12 {
            let phase = (1.7 * (k * 13 + l) as f64).sin();
            s.coeffs[l] = phase / (1.0 + l as f64).powi(2);
        }
        worst = worst.max(conformal_norm_identity_check(&s)?.residual);
    }
    Ok((worst < 1e-5, format!("worst relative error {worst:.2e}")))
}

fn g_alpha_trichotomy() -> Result<(bool, String)> {
    let rs: Vec<f64> = (0..200).map(|i| 0.99 * i as f64 / 199.0).collect();
    let vals = |a: f64| rs.iter().map(|&r| g_alpha(r, a, 4)).collect::<Result<Vec<f64>>>();
    let dec = vals(1.0)?.windows(2).all(|w| w[1] < w[0] || w[0] == 1.0 && w[1] <= w[0]);
    let flat = vals(2.0)?.iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max);
    let inc = vals(3.0)?.windows(2).all(|w| w[1] > w[0]);
    Ok((dec && flat < 1e-10 && inc, format!("α=1 decreasing {dec}, α=2 max |g-1| {flat:.1e}, α=3 increasing {inc}")))
}

fn potential_asymptotics() -> Result<(bool, String)> {
    let g = LogGrid::new(18.0, 1025)?;
    let u = bubble(4, 1.0, &g);
    let v = potential_v(&u)?;
    let ratio = mass(&u)? / gamma_n(4);
    let bounds = v.grid.iter().zip(&v.values).all(|(t, val)| {
        let lr = -t;
        if lr <= 0.0 {
            *val >= 0.0
        } else {
            *val >= -ratio * lr - 1e-12
        }
    });
    let win = g.ln_r_window(6.0, 12.0);
    let xs: Vec<f64> = win.clone().map(|i| -g.t(i)).collect();
    let ys: Vec<f64> = win.map(|i| v.values[i]).collect();
    let slope = fit_slope(&xs, &ys, [6.0, 12.0]).slope;
    Ok(((slope + 2.0).abs() < 0.04 && bounds, format!("slope {slope:.4}, lower bounds {bounds}")))
}

fn sharp_constants() -> Result<(bool, String)> {
    let c2 = sharp_constant(2, 1.0, 0.0)?;
    let c4 = sharp_constant(4, 2.0, 0.0)?;
    let closed = (c2 / (4.0 * PI) - 1.0).abs() < 1e-12 && (c4 / (32.0 * PI * PI) - 1.0).abs() < 1e-12;
    let rs = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut ok = closed;
    let mut parts = vec![format!("closed forms {closed}")];
    for beta in [0.0, 2.0] {
        let rows = sharpness_scan(4, 2.0, beta, 1.2, &rs)?;
        let growth = rows[3].integral / rows[0].integral;
        ok &= growth > 10.0;
        parts.push(format!("β={beta} growth {growth:.3e}"));
    }
    let rows = sharpness_scan(4, 2.0, 0.0, 0.5, &rs)?;
    let ratio = rows[3].integral / rows[0].integral;
    ok &= ratio < 2.0;
    parts.push(format!("factor 0.5 ratio {ratio:.3}"));
    Ok((ok, parts.join(", ")))
}

/// `∫₀^a e^{x²} dx` by its power series.
fn erfi_integral(a: f64) -> f64 {
    let mut term = a;
    let mut acc = 0.0;
    for k in 0..400 {
        acc += term / (2 * k + 1) as f64;
        term *= a * a / (k + 1) as f64;
    }
    acc
}

fn adams_lemma() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for t0 in [1.0, 4.0, 9.0] {
        let phi = Profile::constant(0.0, t0, t0.powf(-0.5), 200)?;
        let got = adams_integral(&phi, &AdamsKernel::indicator(), 1.0, 2.0)?;
        let exact = 2.0 * t0.sqrt() * (-t0 / 4.0).exp() * erfi_integral(t0.sqrt() / 2.0) + 1.0;
        worst = worst.max((got.value - exact).abs() / exact);
    }
    let g: Bivariate = Box::new(|w: f64, t: f64| (-w).exp() + (w - t).exp());
    let ts: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
    let b = measure_b(Some(&g), None, 2.0, &ts, 50.0).b;
    Ok((worst < 1e-8 && b <= 4.0, format!("closed form error {worst:.1e}, measured b {b:.6}")))
}

fn counterexample() -> Result<(bool, String)> {
    let rs: Vec<f64> = [2.0, 4.0, 6.0, 8.0, 10.0].iter().map(|k: &f64| k.exp()).collect();
    let rows = remark_counterexample(&rs, 4, 2.0, 1.0, 0.0, sharp_constant(4, 2.0, 0.0)?)?;
    let aux = rows.iter().map(|r| r.aux).fold(f64::INFINITY, f64::min);
    let growth = rows[4].integral / rows[0].integral;
    Ok((aux > 0.0 && growth > 100.0, format!("min aux {aux:.4}, growth {growth:.3e}")))
}

fn existence_b() -> Result<(bool, String)> {
    let rep = minimize(&SolveRequest::new(4, 8.0 * PI * PI, 0.0, vec![-1.0], vec![], Case::B))?;
    let ok = rep.converged
        && rep.grad_norm < 1e-7
        && rep.mass_rel_error < 1e-6
        && rep.residual_pde < 1e-3
        && (rep.slope_infinity.slope + 1.0).abs() < 0.05
        && rep.slope_origin.slope.abs() < 0.05;
    Ok((
        ok,
        format!(
            "grad {:.1e}, mass {:.1e}, residual {:.1e}, slopes {:.4}/{:.4}",
            rep.grad_norm, rep.mass_rel_error, rep.residual_pde, rep.slope_origin.slope, rep.slope_infinity.slope
        ),
    ))
}

fn existence_a() -> Result<(bool, String)> {
    let lam = 2.0 * lambda_1(4);
    let rep = minimize(&SolveRequest::new(4, lam, 0.0, vec![-1.0], vec![-1.0], Case::A))?;
    let ok = rep.converged && (rep.slope_infinity.slope + 4.0).abs() < 0.2 && rep.slope_origin.slope.abs() < 0.1;
    Ok((
        ok,
        format!(
            "converged {}, grad {:.1e}, slopes {:.4}/{:.4}",
            rep.converged, rep.grad_norm, rep.slope_origin.slope, rep.slope_infinity.slope
        ),
    ))
}

/// Deterministic pseudo-random spectrum for directional checks.
fn direction(seed: usize, l_max: usize, amp: f64) -> ZonalSpectrum {
    let mut s = ZonalSpectrum::zeros(4, l_max);
    for l in 1..=l_max.min(16) {
        s.coeffs[l] = amp * (2.3 * (seed * 31 + l) as f64).sin() / (l * l) as f64;
    }
    s
}

fn gradient_correctness() -> Result<(bool, String)> {
    let pr = SphereProblem::new(&SolveRequest::new(4, 8.0 * PI * PI, 0.0, vec![-1.0], vec![], Case::B))?;
    let v = direction(0, 64, 0.5);
    let g = gradient_i(&v, &pr);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 1..=10 {
        let d = direction(k, 64, 1.0);
        let mut a = v.clone();
        a.axpy(h, &d);
        let mut b = v.clone();
        b.axpy(-h, &d);
        let fd = (functional_i(&a, &pr) - functional_i(&b, &pr)) / (2.0 * h);
        let an = g.dot(&d);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
    }
    Ok((worst < 1e-5, format!("worst relative error {worst:.2e}")))
}

fn polynomial_threshold() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, k) in [(3usize, 1usize), (3, 3), (4, 2)] {
        let expect = k as f64 - n as f64;
        match threshold_scan(&ProductPolynomial::gaussian(k), n, &sigma_window(expect, 9))? {
            Threshold::Estimate(e) => {
                ok &= (e - expect).abs() < 0.2;
                parts.push(format!("({n},{k}) {e:.3}"));
            }
            Threshold::Inconclusive => {
                ok = false;
                parts.push(format!("({n},{k}) no switch, integrable for every σ"));
            }
        }
    }
    Ok((ok, parts.join(", ")))
}
