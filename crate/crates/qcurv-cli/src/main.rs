//! `qcurv`: reproducible experiments over the qcurv modules.
//!
//! Every subcommand takes its parameters either from flags or from a strict
//! JSON file given with `--config`; keys in the file override flag values.
//! Outputs start with a line carrying the SHA-256 of the resolved config.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcurv::acceptance;
use qcurv::conformal::{bubble, LogGrid};
use qcurv::constants::{multiplier_table, DimensionContext};
use qcurv::kernels::{potential_v, AngularKernelTable};
use qcurv::mtlab::{
    adams_integral, measure_b, remark_counterexample, sharp_constant, sharpness_scan, AdamsKernel, Bivariate, Profile,
    ScanRow,
};
use qcurv::polyint::{sigma_window, threshold_scan, weighted_exp_integral, ProductPolynomial, Threshold};
use qcurv::solver::{bubble_check, minimize, MASS_TOL};
use qcurv::spectral::{variant_multiplier, PaneitzVariant};
use qcurv::{Error, SolveRequest};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Relative PDE residual above which a solve counts as a numerical failure.
const SOLVE_RESIDUAL_MAX: f64 = 1e-3;
const BUBBLE_RESIDUAL_MAX: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "qcurv", version, about = "Radial constant Q-curvature experiments")]
struct Cli {
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed recorded in the config header.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Residual and mass of the standard bubble in dimension four.
    BubbleCheck(WithConfig<BubbleParams>),
    /// Table of the angular kernel g_α(R).
    Galpha(WithConfig<GalphaParams>),
    /// Spectral multipliers of the Paneitz family.
    PaneitzTable(WithConfig<PaneitzParams>),
    /// Logarithmic potential of the bubble density.
    PotentialV(WithConfig<PotentialParams>),
    /// Exponential integrals along the Moser sequence.
    MtSharpness(WithConfig<SharpnessParams>),
    /// One-dimensional exponential integral and error-term bound.
    AdamsLemma(WithConfig<AdamsParams>),
    /// Growth of the weighted integral for the unbounded-domain family.
    RemarkCounterexample(WithConfig<RemarkParams>),
    /// Variational solve from a JSON request.
    Solve(SolveArgs),
    /// Weighted exponential integral of a product polynomial.
    PolyInt(WithConfig<PolyParams>),
    /// Run every acceptance criterion.
    Acceptance,
}

#[derive(Args)]
struct WithConfig<P: Args> {
    #[command(flatten)]
    params: P,
    /// JSON file with parameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BubbleParams {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_param: f64,
    #[arg(long = "t-max", default_value_t = 18.0)]
    #[serde(rename = "T")]
    t_max: f64,
    #[arg(long, default_value_t = 4096)]
    nodes: usize,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GalphaParams {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    r_max: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Variant {
    P2s,
    P2sSqrt,
    Ps,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PaneitzParams {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 10)]
    lmax: usize,
    #[arg(long, value_enum, default_value = "p2s")]
    variant: Variant,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialParams {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_param: f64,
    #[arg(long = "t-max", default_value_t = 18.0)]
    #[serde(rename = "T")]
    t_max: f64,
    #[arg(long, default_value_t = 1025)]
    nodes: usize,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SharpnessParams {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 1.2)]
    gamma_factor: f64,
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
    r_list: Vec<f64>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamsParams {
    /// Length of the constant profile `t0^{-1/p}` on `[0, t0]`.
    #[arg(long, default_value_t = 4.0)]
    t0: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Upper end of the t-grid for the error-term bound.
    #[arg(long, default_value_t = 50.0)]
    t_grid_max: f64,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemarkParams {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta: f64,
    /// Values of `ln R`.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    ln_r_list: Vec<f64>,
    /// Multiple of the sharp constant used as γ.
    #[arg(long, default_value_t = 1.0)]
    gamma_factor: f64,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyParams {
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Number of coordinates carrying `-|y|²`.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Evaluate at one σ; without it, scan for the threshold.
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 9)]
    scan_points: usize,
}

#[derive(Args)]
struct SolveArgs {
    /// JSON solve request.
    #[arg(long)]
    config: PathBuf,
    /// Also write the assembled profile as CSV.
    #[arg(long)]
    profile_csv: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Precondition(String),
    Quality(String),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Precondition(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<(), Failure>;

/// Flag values overlaid with the config file, parsed strictly.
fn resolve<P: Args + Serialize + DeserializeOwned>(w: WithConfig<P>) -> Result<P, Failure> {
    let Some(path) = w.config else {
        return Ok(w.params);
    };
    let text = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let file: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(file) = file else {
        return Err(Failure::Config(format!("{}: expected a JSON object", path.display())));
    };
    let mut merged = serde_json::to_value(&w.params).expect("parameters serialize");
    let obj = merged.as_object_mut().expect("parameters are a struct");
    for (k, v) in file {
        obj.insert(k, v);
    }
    serde_json::from_value(merged).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

struct Sink {
    out: Option<PathBuf>,
    header: String,
    hash: String,
    config: serde_json::Value,
}

impl Sink {
    fn new(out: Option<PathBuf>, subcommand: &str, seed: u64, params: &impl Serialize) -> Self {
        let config = serde_json::json!({ "subcommand": subcommand, "seed": seed, "params": params });
        let text = serde_json::to_string(&config).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let header = format!("# qcurv config-sha256={hash} {text}");
        Self { out, header, hash, config }
    }

    fn emit(&self, body: &[u8]) -> io::Result<()> {
        match &self.out {
            Some(p) => fs::write(p, body),
            None => io::stdout().write_all(body),
        }
    }

    fn csv(&self, body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.header)?;
        body(&mut buf)?;
        self.emit(&buf)
    }

    /// JSON object whose first line holds the hash.
    fn json(&self, result: &impl Serialize) -> io::Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "{{\"config_sha256\": \"{}\",", self.hash)?;
        writeln!(buf, "\"config\": {},", serde_json::to_string(&self.config)?)?;
        writeln!(buf, "\"result\": {}}}", serde_json::to_string_pretty(result)?)?;
        self.emit(&buf)
    }
}

fn scan_csv(rows: &[ScanRow], buf: &mut Vec<u8>) -> io::Result<()> {
    writeln!(buf, "parameter,integral,overflow,aux")?;
    for r in rows {
        writeln!(buf, "{:e},{:e},{},{:e}", r.parameter, r.integral, r.overflow, r.aux)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let (out, seed) = (cli.out, cli.seed);
    match cli.command {
        Command::BubbleCheck(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "bubble-check", seed, &p);
            if p.n != 4 {
                return Err(Failure::Precondition("bubble-check evaluates Δ² and needs n = 4".into()));
            }
            let grid = LogGrid::new(p.t_max, p.nodes)?;
            let b = bubble_check(p.lambda_param, &grid)?;
            sink.json(&b)?;
            if b.residual >= BUBBLE_RESIDUAL_MAX {
                return Err(Failure::Quality(format!("bubble residual {:.2e}", b.residual)));
            }
        }
        Command::Galpha(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "galpha", seed, &p);
            let table = AngularKernelTable::new(p.alpha, p.n)?;
            sink.csv(|buf| table.write_csv(buf, p.r_max, p.samples))?;
        }
        Command::PaneitzTable(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "paneitz-table", seed, &p);
            let ctx = DimensionContext::new(p.n, p.s)?;
            let values = match p.variant {
                Variant::P2s => multiplier_table(p.lmax, &ctx),
                Variant::P2sSqrt => (0..=p.lmax).map(|l| variant_multiplier(PaneitzVariant::P2sSqrt, l, p.n, p.s)).collect(),
                Variant::Ps => (0..=p.lmax).map(|l| variant_multiplier(PaneitzVariant::Ps, l, p.n, p.s)).collect(),
            };
            sink.csv(|buf| {
                writeln!(buf, "l,multiplier")?;
                for (l, m) in values.iter().enumerate() {
                    writeln!(buf, "{l},{m}")?;
                }
                Ok(())
            })?;
        }
        Command::PotentialV(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "potential-v", seed, &p);
            let grid = LogGrid::new(p.t_max, p.nodes)?;
            let v = potential_v(&bubble(p.n, p.lambda_param, &grid))?;
            sink.csv(|buf| v.write_csv(buf))?;
        }
        Command::MtSharpness(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "mt-sharpness", seed, &p);
            let rows = sharpness_scan(p.n, p.s, p.beta, p.gamma_factor, &p.r_list)?;
            sink.csv(|buf| scan_csv(&rows, buf))?;
        }
        Command::AdamsLemma(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "adams-lemma", seed, &p);
            let phi = Profile::constant(0.0, p.t0, p.t0.powf(-1.0 / p.p), 200)?;
            let integral = adams_integral(&phi, &AdamsKernel::indicator(), p.alpha, p.p)?;
            let g: Bivariate = Box::new(|w: f64, t: f64| (-w).exp() + (w - t).exp());
            let steps = (p.t_grid_max * 10.0).ceil() as usize;
            let ts: Vec<f64> = (0..=steps).map(|i| i as f64 * p.t_grid_max / steps as f64).collect();
            let bound = measure_b(Some(&g), None, p.p, &ts, p.t_grid_max);
            sink.json(&serde_json::json!({ "integral": integral, "error_term_bound": bound }))?;
        }
        Command::RemarkCounterexample(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "remark-counterexample", seed, &p);
            let rs: Vec<f64> = p.ln_r_list.iter().map(|l| l.exp()).collect();
            let gamma = p.gamma_factor * sharp_constant(p.n, p.s, p.beta)?;
            let rows = remark_counterexample(&rs, p.n, p.s, p.sigma, p.beta, gamma)?;
            sink.csv(|buf| scan_csv(&rows, buf))?;
        }
        Command::Solve(a) => {
            let text = fs::read_to_string(&a.config).map_err(|e| Failure::Config(format!("{}: {e}", a.config.display())))?;
            let req: SolveRequest =
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", a.config.display())))?;
            let sink = Sink::new(out, "solve", seed, &req);
            let rep = minimize(&req)?;
            sink.json(&rep)?;
            if let Some(path) = a.profile_csv {
                let mut buf = Vec::new();
                writeln!(buf, "{}", sink.header)?;
                rep.profile.write_csv(&mut buf)?;
                fs::write(path, buf)?;
            }
            if !rep.converged {
                return Err(Failure::Quality(rep.diagnostics.join("; ")));
            }
            if rep.residual_pde > SOLVE_RESIDUAL_MAX || rep.mass_rel_error > MASS_TOL {
                return Err(Failure::Quality(format!(
                    "residual {:.2e}, mass error {:.2e}",
                    rep.residual_pde, rep.mass_rel_error
                )));
            }
        }
        Command::PolyInt(w) => {
            let p = resolve(w)?;
            let sink = Sink::new(out, "poly-int", seed, &p);
            let q = ProductPolynomial::gaussian(p.k);
            match p.sigma {
                Some(s) => sink.json(&weighted_exp_integral(&q, s, p.n)?)?,
                None => {
                    let center = p.k as f64 - p.n as f64;
                    let t = threshold_scan(&q, p.n, &sigma_window(center, p.scan_points))?;
                    let value = match t {
                        Threshold::Estimate(e) => serde_json::json!({ "threshold": e }),
                        Threshold::Inconclusive => serde_json::json!({ "threshold": null, "note": "no switch on the grid" }),
                    };
                    sink.json(&value)?;
                }
            }
        }
        Command::Acceptance => {
            let results = acceptance::run_all();
            let mut buf = Vec::new();
            for r in &results {
                writeln!(buf, "{}", r.line())?;
            }
            let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
            writeln!(buf, "{} of {} criteria passed", results.len() - failed.len(), results.len())?;
            match &out {
                Some(p) => fs::write(p, &buf)?,
                None => io::stdout().write_all(&buf)?,
            }
            if !failed.is_empty() {
                return Err(Failure::Quality(format!("failed criteria: {failed:?}")));
            }
        }
    }
    Ok(())
}

fn init_threads() {
    let Ok(v) = std::env::var("QCURV_THREADS") else {
        return;
    };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("qcurv: ignoring QCURV_THREADS={v}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("qcurv: config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("qcurv: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Precondition(m)) => {
            eprintln!("qcurv: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Quality(m)) => {
            eprintln!("qcurv: numerical quality: {m}");
            ExitCode::from(3)
        }
    }
}
