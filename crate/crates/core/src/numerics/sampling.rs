//! Inverse-CDF tables and uniform sampling on the unit sphere.

use rand::RngExt;
use rand_distr::StandardNormal;

use super::quadrature::{integrate_finite, integrate_shells, QuadratureConfig, Shell, Span};
use super::rng::RngSeed;
use crate::error::{Error, Result};

/// Target accuracy of the tabulated CDF, in probability units.
const CDF_TOLERANCE: f64 = 1e-8;
const MAX_REFINE_DEPTH: u32 = 48;

/// Tabulated inverse CDF of an unnormalized density on an interval.
///
/// Cells carry the exact (quadrature) CDF at their endpoints and a cubic
/// Hermite interpolant using the density as the slope. Cells are bisected
/// until the interpolant is within 1e-8 of the CDF at the midpoint and
/// satisfies the Fritsch-Carlson monotonicity bound.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    slope: Vec<f64>,
    total_mass: f64,
}

impl InverseCdf {
    pub fn build<F>(density: F, span: Span, cfg: &QuadratureConfig) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        let checked = |x: f64| {
            let v = density(x);
            if v < 0.0 { f64::NAN } else { v }
        };
        let mut shells: Vec<Shell> = Vec::new();
        let q = integrate_shells(&checked, span, cfg, Some(&mut shells))?;
        if !q.converged || !(q.value > 0.0) {
            return Err(Error::NotIntegrable(format!(
                "density on ({}, {}) has no finite positive mass (partial integral {:e})",
                span.lower, span.upper, q.value
            )));
        }
        let total_mass = q.value;
        let cell_cfg = QuadratureConfig { rel_tol: 1e-12, abs_tol: 1e-15 * total_mass, ..*cfg };

        let mut nodes = vec![shells[0].lo];
        let mut cdf = vec![0.0];
        let mut slope = vec![checked(shells[0].lo) / total_mass];
        let mut acc = 0.0;
        for shell in &shells {
            let p_lo = *slope.last().unwrap();
            let p_hi = checked(shell.hi) / total_mass;
            let mut cells = Vec::new();
            refine(
                &checked,
                total_mass,
                (shell.lo, shell.hi),
                (acc, acc + shell.mass / total_mass),
                (p_lo, p_hi),
                &cell_cfg,
                0,
                &mut cells,
            )?;
            for (x, c, p) in cells {
                nodes.push(x);
                cdf.push(c);
                slope.push(p);
            }
            acc += shell.mass / total_mass;
        }
        // Mass beyond the outermost shells is below quadrature tolerance.
        let last = *cdf.last().unwrap();
        for c in cdf.iter_mut() {
            *c /= last;
        }
        for p in slope.iter_mut() {
            *p /= last;
        }
        Ok(InverseCdf { nodes, cdf, slope, total_mass })
    }

    /// Normalization constant of the density used to build the table.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Tabulated CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.nodes[0] {
            return 0.0;
        }
        if x >= *self.nodes.last().unwrap() {
            return 1.0;
        }
        let i = self.nodes.partition_point(|&n| n <= x) - 1;
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (x - self.nodes[i]) / h;
        self.hermite(i, t)
    }

    /// Quantile for `u` in [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = match self.cdf.partition_point(|&c| c < u) {
            0 => return self.nodes[0],
            j if j >= self.cdf.len() => return *self.nodes.last().unwrap(),
            j => j - 1,
        };
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        if c1 <= c0 {
            return self.nodes[i];
        }
        // Safeguarded Newton on the monotone cubic.
        let h = self.nodes[i + 1] - self.nodes[i];
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut t = ((u - c0) / (c1 - c0)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let r = self.hermite(i, t) - u;
            if r.abs() <= 1e-15 {
                break;
            }
            if r > 0.0 { hi = t } else { lo = t }
            let d = self.hermite_slope(i, t);
            let newton = t - r / d;
            t = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 {
                break;
            }
        }
        self.nodes[i] + t * h
    }

    pub fn sample(&self, n: usize, seed: RngSeed) -> Vec<f64> {
        let mut rng = seed.rng();
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }

    fn hermite(&self, i: usize, t: f64) -> f64 {
        let h = self.nodes[i + 1] - self.nodes[i];
        hermite_value(self.cdf[i], self.cdf[i + 1], self.slope[i] * h, self.slope[i + 1] * h, t)
    }

    fn hermite_slope(&self, i: usize, t: f64) -> f64 {
        let h = self.nodes[i + 1] - self.nodes[i];
        let (y0, y1, m0, m1) = (self.cdf[i], self.cdf[i + 1], self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1
    }
}

fn hermite_value(y0: f64, y1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    density: &F,
    mass: f64,
    (a, b): (f64, f64),
    (ca, cb): (f64, f64),
    (pa, pb): (f64, f64),
    cfg: &QuadratureConfig,
    depth: u32,
    out: &mut Vec<(f64, f64, f64)>,
) -> Result<()>
where
    F: Fn(f64) -> f64,
{
    let h = b - a;
    let delta = cb - ca;
    let mid = 0.5 * (a + b);
    let splittable = depth < MAX_REFINE_DEPTH && mid > a && mid < b;
    let monotone = {
        if delta <= 0.0 {
            true
        } else {
            let alpha = pa * h / delta;
            let beta = pb * h / delta;
            alpha * alpha + beta * beta <= 9.0
        }
    };
    if splittable && (delta > CDF_TOLERANCE * 1e-3 || !monotone) {
        let left = integrate_finite(|x| density(x) / mass, a, mid, cfg)?;
        let c_mid = ca + left.value;
        let interp = hermite_value(ca, cb, pa * h, pb * h, 0.5);
        if (interp - c_mid).abs() > CDF_TOLERANCE || !monotone {
            let p_mid = density(mid) / mass;
            refine(density, mass, (a, mid), (ca, c_mid), (pa, p_mid), cfg, depth + 1, out)?;
            refine(density, mass, (mid, b), (c_mid, cb), (p_mid, pb), cfg, depth + 1, out)?;
            return Ok(());
        }
    }
    let pb = if monotone { pb } else { delta / h };
    out.push((b, cb, pb));
    Ok(())
}

/// Samples from an unnormalized density on `span` by inverse CDF.
pub fn inverse_cdf_sample<F>(density: F, span: Span, n: usize, seed: RngSeed, cfg: &QuadratureConfig) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Ok(Vec::new());
    }
    Ok(InverseCdf::build(density, span, cfg)?.sample(n, seed))
}

/// `n` points uniform on the unit sphere in ℝ^d, flattened row-major.
pub fn sample_unit_sphere(dim: usize, n: usize, seed: RngSeed) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("sphere dimension must be >= 1".into()));
    }
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n);
    let mut v = vec![0.0; dim];
    while out.len() < n {
        for x in v.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            out.push(v.iter().map(|x| x / norm).collect());
        }
    }
    Ok(out)
}
