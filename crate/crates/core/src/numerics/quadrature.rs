//! Adaptive Gauss-Kronrod quadrature with divergence detection.
//!
//! Integrals over (possibly) unbounded or singular ranges are split into
//! geometric shells marching from an anchor point toward each endpoint:
//! `[anchor + scale (2^m - 1), anchor + scale (2^(m+1) - 1)]` toward an
//! infinite endpoint and `[e + (anchor - e) 2^-(m+1), e + (anchor - e) 2^-m]`
//! toward a finite endpoint `e`. Every shell is integrated with adaptive
//! G10/K21. The march stops once the shell contributions decay
//! geometrically below tolerance; if they stop decaying, or the partial sum
//! outgrows its early value by more than the growth threshold, the integral
//! is reported as not converged.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and budgets for every quadrature in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Subdivision budget of the adaptive rule on each shell.
    pub max_subdivisions: usize,
    pub truncation_growth_threshold: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
            truncation_growth_threshold: 1e6,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerances must be positive (rel_tol={}, abs_tol={})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidParameter("max_subdivisions must be >= 1".into()));
        }
        if !(self.truncation_growth_threshold > 1.0) {
            return Err(Error::InvalidParameter(
                "truncation_growth_threshold must exceed 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

/// Outcome of a quadrature. `converged == false` means the integral is
/// divergent or could not be resolved; `value` is then only the last partial sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub converged: bool,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Integration range, with the anchor the shells grow from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lower: f64,
    pub upper: f64,
    pub anchor: f64,
    pub scale: f64,
}

impl Span {
    pub fn new(lower: f64, upper: f64) -> Self {
        let anchor = match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower + 1.0,
            (false, true) => upper - 1.0,
            (false, false) => 0.0,
        };
        Span { lower, upper, anchor, scale: default_scale(anchor) }
    }

    /// `(0, ∞)` anchored at 1.
    pub fn semi_infinite() -> Self {
        Span::new(0.0, f64::INFINITY)
    }

    pub fn anchor(mut self, anchor: f64) -> Self {
        self.anchor = anchor;
        self.scale = default_scale(anchor);
        self
    }

    pub fn scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) || self.lower.is_nan() || self.upper.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "empty integration range ({}, {})",
                self.lower, self.upper
            )));
        }
        if !(self.anchor > self.lower && self.anchor < self.upper) {
            return Err(Error::InvalidParameter(format!(
                "anchor {} outside ({}, {})",
                self.anchor, self.lower, self.upper
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidParameter(format!("shell scale {} must be positive", self.scale)));
        }
        Ok(())
    }
}

fn default_scale(anchor: f64) -> f64 {
    if anchor == 0.0 || !anchor.is_finite() {
        1.0
    } else {
        anchor.abs()
    }
}

/// One shell of a shell decomposition with its integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Shell {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

const MAX_SHELLS: usize = 400;
const MIN_SHELLS: usize = 4;
/// Largest shell-to-shell ratio accepted as geometric decay.
const MAX_DECAY_RATIO: f64 = 0.9;

/// ∫₀^∞ f(t) dt, shells anchored at t = 1.
pub fn integrate_semi_infinite<F>(f: F, cfg: &QuadratureConfig) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    integrate(f, Span::semi_infinite(), cfg)
}

/// ∫ f over `span` with divergence detection at both endpoints.
pub fn integrate<F>(f: F, span: Span, cfg: &QuadratureConfig) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    integrate_shells(&f, span, cfg, None)
}

pub(crate) fn integrate_shells<F>(
    f: &F,
    span: Span,
    cfg: &QuadratureConfig,
    shells: Option<&mut Vec<Shell>>,
) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    span.validate()?;
    let mut lower_shells = Vec::new();
    let lower = march(f, span.anchor, span.lower, span.scale, cfg, &mut lower_shells)?;
    let mut upper_shells = Vec::new();
    let upper = march(f, span.anchor, span.upper, span.scale, cfg, &mut upper_shells)?;
    if let Some(out) = shells {
        out.clear();
        out.extend(lower_shells.into_iter().rev());
        out.extend(upper_shells);
    }
    Ok(Quadrature {
        value: lower.value + upper.value,
        converged: lower.converged && upper.converged,
        error_estimate: lower.error + upper.error,
        evaluations: lower.evaluations + upper.evaluations,
    })
}

struct March {
    value: f64,
    error: f64,
    converged: bool,
    evaluations: usize,
}

/// Integrates from `anchor` toward `end` shell by shell. Shells are pushed in
/// marching order with `lo < hi`.
fn march<F>(
    f: &F,
    anchor: f64,
    end: f64,
    scale: f64,
    cfg: &QuadratureConfig,
    shells: &mut Vec<Shell>,
) -> Result<March>
where
    F: Fn(f64) -> f64,
{
    let toward_upper = end > anchor;
    let shell_abs_tol = 0.1 * cfg.abs_tol;
    let shell_rel_tol = 0.5 * cfg.rel_tol;

    let mut value = 0.0;
    let mut abs_sum = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut mags: Vec<f64> = Vec::new();
    let mut reference: Option<f64> = None;
    let mut last_ratio = f64::INFINITY;
    let mut prev = anchor;

    for m in 0..MAX_SHELLS {
        let next = if end.is_infinite() {
            let step = scale * ((m as f64 + 1.0).exp2() - 1.0);
            if toward_upper { anchor + step } else { anchor - step }
        } else {
            end + (anchor - end) * (-(m as f64 + 1.0)).exp2()
        };
        if next == prev || next == end || !next.is_finite() {
            // Cannot advance further in floating point.
            let converged = last_ratio < MAX_DECAY_RATIO;
            return Ok(March { value, error, converged, evaluations });
        }
        let (lo, hi) = if toward_upper { (prev, next) } else { (next, prev) };
        let piece = adaptive(f, lo, hi, shell_rel_tol, shell_abs_tol, cfg.max_subdivisions)?;
        evaluations += piece.evaluations;
        if !piece.converged {
            return Ok(March { value: value + piece.value, error: error + piece.error, converged: false, evaluations });
        }
        shells.push(Shell { lo, hi, mass: piece.value });
        value += piece.value;
        abs_sum += piece.value.abs();
        error += piece.error;
        mags.push(piece.value.abs());
        prev = next;

        if mags.len() < MIN_SHELLS {
            continue;
        }
        let reference = *reference.get_or_insert(value.abs().max(f64::MIN_POSITIVE));
        if value.abs() > cfg.truncation_growth_threshold * reference.max(cfg.abs_tol) {
            return Ok(March { value, error, converged: false, evaluations });
        }
        let n = mags.len();
        let ratio = |num: f64, den: f64| {
            if den == 0.0 {
                if num == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                num / den
            }
        };
        last_ratio = ratio(mags[n - 1], mags[n - 2]).max(ratio(mags[n - 2], mags[n - 3]));
        if last_ratio < MAX_DECAY_RATIO {
            let tail = mags[n - 1] * last_ratio / (1.0 - last_ratio);
            let tol = 0.25 * cfg.abs_tol.max(cfg.rel_tol * abs_sum);
            if tail <= tol && mags[n - 1] <= tol {
                return Ok(March { value, error: error + tail, converged: true, evaluations });
            }
        }
    }
    Ok(March { value, error, converged: false, evaluations })
}

/// Adaptive G10/K21 on a finite interval.
pub fn integrate_finite<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("finite interval required, got ({a}, {b})")));
    }
    if a == b {
        return Ok(Quadrature { value: 0.0, converged: true, error_estimate: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let r = adaptive(&f, lo, hi, cfg.rel_tol, cfg.abs_tol, cfg.max_subdivisions)?;
    Ok(Quadrature {
        value: sign * r.value,
        converged: r.converged,
        error_estimate: r.error,
        evaluations: r.evaluations,
    })
}

struct Adaptive {
    value: f64,
    error: f64,
    converged: bool,
    evaluations: usize,
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adaptive<F>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Adaptive>
where
    F: Fn(f64) -> f64,
{
    let first = kronrod21(f, a, b)?;
    let mut evaluations = 21;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: first.value, error: first.error });

    let mut subdivisions = 1;
    loop {
        if error <= abs_tol.max(rel_tol * value.abs()) {
            break;
        }
        if subdivisions >= max_subdivisions {
            return Ok(Adaptive { value: heap_sum(&heap), error, converged: false, evaluations });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval too narrow to split further.
            heap.push(worst);
            return Ok(Adaptive { value: heap_sum(&heap), error, converged: false, evaluations });
        }
        let left = kronrod21(f, worst.a, mid)?;
        let right = kronrod21(f, mid, worst.b)?;
        evaluations += 42;
        subdivisions += 1;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: left.value, error: left.error });
        heap.push(Segment { a: mid, b: worst.b, value: right.value, error: right.error });
    }
    let value = heap_sum(&heap);
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Adaptive { value, error, converged: true, evaluations })
}

fn heap_sum(heap: &BinaryHeap<Segment>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for s in heap.iter() {
        let t = sum + s.value;
        if sum.abs() >= s.value.abs() {
            comp += (sum - t) + s.value;
        } else {
            comp += (s.value - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

struct Rule {
    value: f64,
    error: f64,
}

// Kronrod nodes and weights, quoted to full published precision.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_958_109_831,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

/// Gauss 10-point weights for the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFiniteIntegrand { abscissa: x, value: y })
    }
}

fn kronrod21<F>(f: &F, a: f64, b: f64) -> Result<Rule>
where
    F: Fn(f64) -> f64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = eval(f, center)?;
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut abs_k = kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(f, center - dx)?;
        let f2 = eval(f, center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let abs_k = abs_k * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs_k > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_k);
    }
    Ok(Rule { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn exponential_integral_is_one() {
        let q = integrate_semi_infinite(|t| (-t).exp(), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn shifted_exponential_rate() {
        let (k, alpha) = (1.0, 0.5);
        let q = integrate_semi_infinite(|t| (-(k + alpha) * t).exp(), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, 2.0 / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn reciprocal_is_divergent() {
        let q = integrate_semi_infinite(|t| 1.0 / t, &cfg()).unwrap();
        assert!(!q.converged);
    }

    #[test]
    fn slow_exponential_decay_converges() {
        // e^{-0.05 t}: mass spread out to t ~ 500.
        let q = integrate_semi_infinite(|t| (-0.05 * t).exp(), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, 20.0, max_relative = 1e-9);
    }

    #[test]
    fn integrable_singularity_at_zero() {
        // ∫ t^{-1/2} e^{-t} = Γ(1/2) = √π
        let q = integrate_semi_infinite(|t| t.powf(-0.5) * (-t).exp(), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, std::f64::consts::PI.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn nonintegrable_singularities_at_zero() {
        for p in [-1.0, -1.5] {
            let q = integrate_semi_infinite(|t: f64| t.powf(p) * (-t).exp(), &cfg()).unwrap();
            assert!(!q.converged, "t^{p} e^-t should diverge");
        }
    }

    #[test]
    fn growing_integrand_is_divergent_not_an_error() {
        let q = integrate_semi_infinite(|t| (0.5 * t).exp(), &cfg()).unwrap();
        assert!(!q.converged);
        let q = integrate_semi_infinite(|_| 1.0, &cfg()).unwrap();
        assert!(!q.converged);
    }

    #[test]
    fn log_divergent_tail() {
        let q = integrate_semi_infinite(|t| 1.0 / (1.0 + t), &cfg()).unwrap();
        assert!(!q.converged);
    }

    #[test]
    fn power_law_tail() {
        // ∫ (1+t)^{-3} = 1/2
        let q = integrate_semi_infinite(|t| (1.0 + t).powi(-3), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn whole_line_gaussian() {
        let q = integrate(|x| (-0.5 * x * x).exp(), Span::new(f64::NEG_INFINITY, f64::INFINITY), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn finite_interval_with_endpoint_singularities() {
        // ∫₀¹ x^{-1/2} (1-x)^{-1/2} dx = π
        let q = integrate(|x: f64| 1.0 / (x * (1.0 - x)).sqrt(), Span::new(0.0, 1.0), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, std::f64::consts::PI, max_relative = 1e-8);
    }

    #[test]
    fn nan_reports_abscissa() {
        let err = integrate_semi_infinite(|t| if t > 3.0 { f64::NAN } else { 1.0 }, &cfg()).unwrap_err();
        match err {
            Error::NonFiniteIntegrand { abscissa, .. } => assert!(abscissa > 3.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn finite_rule_polynomial_is_exact() {
        let q = integrate_finite(|x| x * x * x - 2.0 * x, -1.0, 3.0, &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, 20.0 - 8.0, max_relative = 1e-13);
        let back = integrate_finite(|x| x * x * x - 2.0 * x, 3.0, -1.0, &cfg()).unwrap();
        assert_relative_eq!(back.value, -12.0, max_relative = 1e-13);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().with_rel_tol(0.0).validate().is_err());
        assert!(cfg().with_abs_tol(-1.0).validate().is_err());
        let mut c = cfg();
        c.max_subdivisions = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn convergence_flag_monotone_in_tolerance() {
        let integrands: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|t: f64| (-t).exp()),
            Box::new(|t: f64| t.powf(-0.5) * (-2.0 * t).exp()),
            Box::new(|t: f64| (1.0 + t).powi(-2)),
            Box::new(|t: f64| 1.0 / (1.0 + t)),
            Box::new(|t: f64| (-0.1 * t).exp() * t),
        ];
        for f in &integrands {
            let tight = integrate_semi_infinite(f, &cfg()).unwrap();
            let loose = integrate_semi_infinite(f, &cfg().with_rel_tol(1e-6)).unwrap();
            if tight.converged {
                assert!(loose.converged);
            }
        }
    }
}
