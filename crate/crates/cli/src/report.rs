//! JSON report schemas. Bump `REPORT_VERSION` whenever a field changes.

use rug::{Complex, Float};
use serde::Serialize;
use szego_core::coefficients::ModelGeometry;
use szego_core::verify::{CheckResult, Comparison};

use crate::config::RunConfig;

pub const REPORT_VERSION: u32 = 1;

/// A complex number as `[re, im]`.
pub fn pair(z: &Complex) -> [f64; 2] {
    [z.real().to_f64(), z.imag().to_f64()]
}

/// Shortest decimal that parses back to the same binary value.
pub fn decimal(x: &Float) -> String {
    format!("{x}")
}

pub fn rel(a: &Float, b: &Float) -> f64 {
    let prec = a.prec();
    let d = Float::with_val(prec, a - b);
    Float::with_val(prec, d.abs() / Float::with_val(prec, b.abs_ref())).to_f64()
}

#[derive(Debug, Serialize)]
pub struct GeometryDump {
    pub n: usize,
    pub d: usize,
    pub d_k: u32,
    pub v_eff: f64,
    pub r: f64,
    pub s_g: f64,
    pub r_e: f64,
    pub lap_char: f64,
    pub levi_volume_const: f64,
    pub stabilizer_multiplicity: u64,
    pub haar_v0: f64,
    pub haar_delta_v0: f64,
    pub haar_rhs: f64,
    /// Fourth-order phase term from the closed-form geometry.
    pub delta2h_formula: [f64; 2],
    /// The same term computed directly from the orbit phase.
    pub delta2h_direct: [f64; 2],
}

impl GeometryDump {
    pub fn new(g: &ModelGeometry) -> Self {
        let inv = &g.invariants;
        Self {
            n: inv.n,
            d: inv.d,
            d_k: inv.d_k,
            v_eff: inv.v_eff.to_f64(),
            r: inv.r.to_f64(),
            s_g: inv.s_g.to_f64(),
            r_e: inv.r_e.to_f64(),
            lap_char: inv.lap_char.to_f64(),
            levi_volume_const: g.levi_volume_const.to_f64(),
            stabilizer_multiplicity: g.multiplicity,
            haar_v0: g.haar.v0.to_f64(),
            haar_delta_v0: g.haar.delta_v0.to_f64(),
            haar_rhs: g.haar.rhs.to_f64(),
            delta2h_formula: pair(&g.local.delta2h),
            delta2h_direct: pair(&g.delta2h_direct),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Predicted {
    pub b0: f64,
    pub b1_global: f64,
    pub b1_local: f64,
    /// Local route with the directly computed fourth-order phase term.
    pub b1_local_direct: f64,
    pub b0_decimal: String,
    pub b1_global_decimal: String,
}

impl Predicted {
    pub fn new(g: &ModelGeometry) -> Self {
        let b0 = g.b0();
        let b1 = g.b1_global();
        Self {
            b0: b0.to_f64(),
            b1_global: b1.to_f64(),
            b1_local: g.b1_local().to_f64(),
            b1_local_direct: g.b1_local_direct().to_f64(),
            b0_decimal: decimal(&b0),
            b1_global_decimal: decimal(&b1),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SampleSummary {
    pub rows: usize,
    pub m_min: u64,
    pub m_max: u64,
    pub stride: Option<u64>,
    /// `2 n - d`: samples grow like `m^{twice_base / 2}`.
    pub twice_base: i64,
}

#[derive(Debug, Serialize)]
pub struct Fitted {
    pub coefficients: Vec<f64>,
    pub coefficients_decimal: Vec<String>,
    pub uncertainties: Vec<f64>,
    pub residual: f64,
    pub condition: f64,
    /// Relative change of the leading coefficient when the lower half of the degree range is dropped.
    pub leading_stability: f64,
}

#[derive(Debug, Serialize)]
pub struct RelativeErrors {
    pub b0: f64,
    pub b1_global: f64,
    pub b1_local: f64,
    pub b1_local_direct: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub geometry_s: f64,
    pub fit_s: f64,
}

#[derive(Debug, Serialize)]
pub struct ExpansionReport {
    pub report_version: u32,
    pub command: &'static str,
    pub precision_bits: u32,
    pub k: Vec<i64>,
    pub samples: SampleSummary,
    pub fit: Fitted,
    pub predicted: Predicted,
    pub relative_errors: RelativeErrors,
    pub geometry: GeometryDump,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    pub config: RunConfig,
}

#[derive(Debug, Serialize)]
pub struct CoeffsReport {
    pub report_version: u32,
    pub command: &'static str,
    pub precision_bits: u32,
    pub k: Vec<i64>,
    /// `|z_l|^2` at the moment-map zero point.
    pub point_moduli: Vec<f64>,
    pub b0: f64,
    pub b1_global: f64,
    pub b1_global_alt: f64,
    pub b1_local: f64,
    pub b1_local_direct: f64,
    pub predicted: Predicted,
    pub geometry: GeometryDump,
    pub config: RunConfig,
}

#[derive(Debug, Serialize)]
pub struct ExpandEval {
    pub m: u64,
    pub value: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ExpandReport {
    pub report_version: u32,
    pub command: &'static str,
    pub mode: &'static str,
    pub precision_bits: u32,
    pub dim: usize,
    pub jmax: usize,
    pub prefactor: [f64; 2],
    pub phase_at_critical_point: [f64; 2],
    /// `L_0 u, ..., L_jmax u`.
    pub terms: Vec<[f64; 2]>,
    pub evaluations: Vec<ExpandEval>,
    /// Orbit mode: coefficients of `m^{n-d/2}` and `m^{n-d/2-1}` against the predictions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteSummary>,
    pub config: RunConfig,
}

#[derive(Debug, Serialize)]
pub struct RouteSummary {
    pub stabilizer_multiplicity: [f64; 2],
    pub c0: f64,
    pub c1: f64,
    pub b0: f64,
    pub b1_global: f64,
    pub error_slope: f64,
}

#[derive(Debug, Serialize)]
pub struct CheckEntry {
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub error: f64,
    pub tolerance: f64,
    pub comparison: &'static str,
    pub passed: bool,
}

impl From<&CheckResult> for CheckEntry {
    fn from(c: &CheckResult) -> Self {
        Self {
            criterion: c.criterion,
            name: c.name.clone(),
            measured: c.measured,
            expected: c.expected,
            error: c.error,
            tolerance: c.tolerance,
            comparison: match c.comparison {
                Comparison::AtMost => "error_at_most_tolerance",
                Comparison::AtLeast => "measured_at_least_tolerance",
            },
            passed: c.passed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub report_version: u32,
    pub command: &'static str,
    pub passed: bool,
    pub total: usize,
    pub failed: Vec<String>,
    pub checks: Vec<CheckEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
    pub config: RunConfig,
}
