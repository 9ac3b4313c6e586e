//! Subcommand bodies. Each returns the text to write; `main` decides where.

use std::path::Path;
use std::time::Instant;

use rug::{Complex, Float};
use szego_core::coefficients::{b1_global_alt, sphere_geometry};
use szego_core::fit::{fit_coefficients, leading_stability, ExpansionSamples, FitError};
use szego_core::jets::Jet;
use szego_core::sphere_model::{SphereError, SphereModel, SpherePoint};
use szego_core::stationary_phase::sp_expand;
use szego_core::verify::{
    check_coefficients, check_engine, check_full_kernel, check_group_integral, check_haar_and_laplacian, check_route, fit_slice,
    reduced_value, stationary_phase_route, CheckResult, VerifyError, ROUTE_DEGREES,
};

use crate::config::{ConfigError, ExpandMode, RunConfig, Term};
use crate::report::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Compute(#[from] VerifyError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl From<SphereError> for CliError {
    fn from(e: SphereError) -> Self {
        CliError::Compute(e.into())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Compute(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Compute(VerifyError::Config(_))
            | CliError::Compute(VerifyError::Sphere(SphereError::BadWeights(_) | SphereError::RankDeficient | SphereError::ZeroPointInfeasible))
            | CliError::Compute(VerifyError::Fit(FitError::InsufficientSamples(_) | FitError::InvalidSamples(_))) => 2,
            _ => 1,
        }
    }
}

pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

fn setup(cfg: &RunConfig) -> Result<(SphereModel, SpherePoint), CliError> {
    let model = SphereModel::new(cfg.model.n, cfg.model.weights.clone(), cfg.precision_bits)?;
    let p = model.find_zero_point()?;
    Ok((model, p))
}

fn twice_base(model: &SphereModel) -> i64 {
    2 * model.n() as i64 - model.d() as i64
}

/// Map `f` over `items` on all available cores, keeping the order.
fn par_map<T: Send>(items: &[u64], f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(|&m| f(m)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(|&m| f(m)).collect::<Vec<T>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("kernel worker panicked")).collect()
    })
}

const PRECISION_TAG: &str = "# precision_bits=";

pub fn cmd_kernel(cfg: &RunConfig) -> Result<String, CliError> {
    let (model, p) = setup(cfg)?;
    let k = &cfg.k;
    let degrees: Vec<u64> = (cfg.m_range.min.max(1)..=cfg.m_range.max).filter(|&m| model.slice_size(k, m as usize) > 0).collect();
    if degrees.is_empty() {
        eprintln!("warning: weight {k:?} has no nonempty slice for m in [{}, {}]", cfg.m_range.min, cfg.m_range.max);
    }
    let values = par_map(&degrees, |m| model.szego_km_diag(k, m as usize, &p));
    let tb = twice_base(&model);
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["m", "S_km_exact", "S_km_scaled"]).map_err(csv_err)?;
    for (m, v) in degrees.iter().zip(&values) {
        w.write_record([m.to_string(), decimal(v), decimal(&reduced_value(v, *m, tb))]).map_err(csv_err)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?).expect("csv output is utf-8");
    Ok(format!(
        "{PRECISION_TAG}{}\n# n={} weights={:?} k={:?} S_km_scaled=m^-(n-d/2)*S_km_exact\n{body}",
        cfg.precision_bits, cfg.model.n, cfg.model.weights, k
    ))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Input(format!("csv: {e}"))
}

/// Parse a kernel table written by `cmd_kernel` at `prec` bits.
pub fn parse_kernel_csv(text: &str, prec: u32, twice_base: i64) -> Result<ExpansionSamples, CliError> {
    let written = text
        .lines()
        .find_map(|l| l.strip_prefix(PRECISION_TAG))
        .ok_or_else(|| CliError::Input(format!("kernel CSV lacks a `{PRECISION_TAG}` header comment")))?;
    let written: u32 = written.trim().parse().map_err(|_| CliError::Input(format!("bad precision annotation {written:?}")))?;
    if written != prec {
        return Err(CliError::Input(format!("kernel CSV was written at {written} bits but this run uses {prec}")));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| CliError::Input(format!("kernel CSV has no column {name}")));
    let (im, iv) = (col("m")?, col("S_km_exact")?);
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let m: u64 = rec[im].trim().parse().map_err(|_| CliError::Input(format!("bad degree {:?}", &rec[im])))?;
        let v = Float::parse(rec[iv].trim()).map_err(|e| CliError::Input(format!("bad value {:?}: {e}", &rec[iv])))?;
        entries.push((m, Float::with_val(prec, v)));
    }
    Ok(ExpansionSamples::new(entries, twice_base)?)
}

pub fn cmd_fit(cfg: &RunConfig, csv_text: &str) -> Result<String, CliError> {
    let (model, p) = setup(cfg)?;
    let samples = parse_kernel_csv(csv_text, cfg.precision_bits, twice_base(&model))?;
    let t0 = Instant::now();
    let fit = fit_coefficients(&samples, cfg.fit_terms)?;
    let stability = leading_stability(&samples, cfg.fit_terms)?;
    let fit_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let g = sphere_geometry(&model, &p, &cfg.k)?;
    let geometry_s = t1.elapsed().as_secs_f64();
    let predicted = Predicted::new(&g);
    let b0 = g.b0();
    let b1 = g.b1_global();
    let c1 = fit.coeffs.get(1).cloned().unwrap_or_else(|| Float::with_val(cfg.precision_bits, f64::NAN));
    let report = ExpansionReport {
        report_version: REPORT_VERSION,
        command: "fit",
        precision_bits: cfg.precision_bits,
        k: cfg.k.clone(),
        samples: SampleSummary {
            rows: samples.len(),
            m_min: samples.m_min(),
            m_max: samples.m_max(),
            stride: samples.stride(),
            twice_base: samples.twice_base(),
        },
        fit: Fitted {
            coefficients: fit.coeffs.iter().map(Float::to_f64).collect(),
            coefficients_decimal: fit.coeffs.iter().map(decimal).collect(),
            uncertainties: fit.uncertainties.iter().map(Float::to_f64).collect(),
            residual: fit.residual.to_f64(),
            condition: fit.condition.to_f64(),
            leading_stability: stability.to_f64(),
        },
        relative_errors: RelativeErrors {
            b0: rel(&fit.coeffs[0], &b0),
            b1_global: rel(&c1, &b1),
            b1_local: rel(&c1, &g.b1_local()),
            b1_local_direct: rel(&c1, &g.b1_local_direct()),
        },
        predicted,
        geometry: GeometryDump::new(&g),
        timings: cfg.emit_timings.then_some(Timings { geometry_s, fit_s }),
        config: cfg.clone(),
    };
    Ok(to_json(&report))
}

pub fn cmd_coeffs(cfg: &RunConfig) -> Result<String, CliError> {
    let (model, p) = setup(cfg)?;
    let g = sphere_geometry(&model, &p, &cfg.k)?;
    let report = CoeffsReport {
        report_version: REPORT_VERSION,
        command: "coeffs",
        precision_bits: cfg.precision_bits,
        k: cfg.k.clone(),
        point_moduli: p.moduli_squared().iter().map(Float::to_f64).collect(),
        b0: g.b0().to_f64(),
        b1_global: g.b1_global().to_f64(),
        b1_global_alt: b1_global_alt(&g.invariants).to_f64(),
        b1_local: g.b1_local().to_f64(),
        b1_local_direct: g.b1_local_direct().to_f64(),
        predicted: Predicted::new(&g),
        geometry: GeometryDump::new(&g),
        config: cfg.clone(),
    };
    Ok(to_json(&report))
}

fn term_jet(dim: usize, order: usize, prec: u32, terms: &[Term]) -> Result<Jet, CliError> {
    let it = terms.iter().map(|t| (t.exp.clone(), Complex::with_val(prec, (t.re, t.im))));
    Jet::from_terms(dim, order, prec, it).map_err(|e| CliError::Compute(e.into()))
}

pub fn cmd_expand(cfg: &RunConfig) -> Result<String, CliError> {
    let prec = cfg.precision_bits;
    let ex = cfg.expand.as_ref().ok_or_else(|| ConfigError::Invalid("expand needs an `expand` section".into()))?;
    let jmax = cfg.jmax;
    let order = 2 * jmax + 2;
    let mut evaluations = Vec::new();
    let (exp, mode, route) = match ex.mode {
        ExpandMode::Polynomial => {
            let f = term_jet(ex.dim, order, prec, &ex.phase)?;
            let u = if ex.amplitude.is_empty() {
                Jet::constant(ex.dim, order, prec, &Complex::with_val(prec, 1)).map_err(|e| CliError::Compute(e.into()))?
            } else {
                term_jet(ex.dim, order, prec, &ex.amplitude)?
            };
            let exp = sp_expand(&f, &u, jmax).map_err(|e| CliError::Compute(e.into()))?;
            for &m in &ex.m_values {
                let v = exp.eval(&Float::with_val(prec, m));
                evaluations.push(ExpandEval { m, value: pair(&v), exact: None, relative_error: None });
            }
            (exp, "polynomial", None)
        }
        ExpandMode::Orbit => {
            let (model, p) = setup(cfg)?;
            let k = &cfg.k;
            let integrand = model.orbit_phase(k, &p, order)?;
            let exp = sp_expand(&integrand.phase, &integrand.amplitude, jmax).map_err(|e| CliError::Compute(e.into()))?;
            for &m in &ex.m_values {
                let mf = Float::with_val(prec, m);
                let v = Complex::with_val(prec, exp.eval(&mf) * integrand.multiplicity(k, m as usize)) * integrand.kernel_constant(m as usize);
                let exact = model.szego_km_diag(k, m as usize, &p);
                let err = Float::with_val(prec, Complex::with_val(prec, &v - &exact).abs().real() / Float::with_val(prec, exact.abs_ref()));
                evaluations.push(ExpandEval { m, value: pair(&v), exact: Some(exact.to_f64()), relative_error: Some(err.to_f64()) });
            }
            let r = stationary_phase_route(&model, &p, k, jmax, &ROUTE_DEGREES)?;
            let g = sphere_geometry(&model, &p, k)?;
            let route = RouteSummary {
                stabilizer_multiplicity: pair(&integrand.multiplicity(k, r.degrees[0] as usize)),
                c0: r.c0.to_f64(),
                c1: r.c1.to_f64(),
                b0: g.b0().to_f64(),
                b1_global: g.b1_global().to_f64(),
                error_slope: r.slope,
            };
            (exp, "orbit", Some(route))
        }
    };
    let report = ExpandReport {
        report_version: REPORT_VERSION,
        command: "expand",
        mode,
        precision_bits: prec,
        dim: exp.dim,
        jmax,
        prefactor: pair(&exp.prefactor),
        phase_at_critical_point: pair(&exp.phase0),
        terms: exp.terms.iter().map(pair).collect(),
        evaluations,
        route,
        config: cfg.clone(),
    };
    Ok(to_json(&report))
}

/// The acceptance checks selected by `cfg.criteria`, in criterion order.
pub fn verify_checks(cfg: &RunConfig) -> Result<Vec<CheckResult>, CliError> {
    let want = |c: u8| cfg.criteria.as_ref().is_none_or(|v| v.contains(&c));
    let tol = cfg.tolerances.resolve();
    let ks = cfg.ks();
    let (model, p) = setup(cfg)?;
    let mut out: Vec<CheckResult> = Vec::new();
    if want(1) || want(2) {
        out.extend(check_full_kernel(&model, &p, &tol)?);
    }
    if want(3) || want(4) {
        let slices = ks
            .iter()
            .map(|k| fit_slice(&model, &p, k, cfg.m_range.min, cfg.m_range.max, cfg.fit_terms))
            .collect::<Result<Vec<_>, _>>()?;
        out.extend(check_coefficients(&slices, &model, &tol));
    }
    if want(5) {
        out.extend(check_engine(cfg.precision_bits, cfg.jmax, &tol)?);
    }
    if want(6) {
        out.push(check_group_integral(&model, &p, 30, 3, &tol));
    }
    if want(7) {
        out.extend(check_haar_and_laplacian(&model, &p, &ks, &tol)?);
    }
    if want(8) {
        out.extend(check_route(&model, &p, &ks, cfg.jmax, &tol)?);
    }
    out.retain(|c| want(c.criterion));
    out.sort_by_key(|c| c.criterion);
    Ok(out)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<(String, bool), CliError> {
    let t0 = Instant::now();
    let checks = verify_checks(cfg)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    for name in &failed {
        eprintln!("FAILED: {name}");
    }
    let passed = !checks.is_empty() && failed.is_empty();
    let report = VerifyReport {
        report_version: REPORT_VERSION,
        command: "verify",
        passed,
        total: checks.len(),
        failed,
        checks: checks.iter().map(CheckEntry::from).collect(),
        elapsed_s: cfg.emit_timings.then(|| t0.elapsed().as_secs_f64()),
        config: cfg.clone(),
    };
    Ok((to_json(&report), passed))
}
