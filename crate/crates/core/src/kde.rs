//! Gaussian kernel density estimates on a uniform grid and the overlapping
//! coefficient `∫ min(f₁, f₂) dx` of two such curves.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_GRID_POINTS: usize = 100;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KdeError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples have no spread")]
    InsufficientSpread,
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("non-finite sample")]
    NonFinite,
    #[error("density CSV: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Linear interpolation, zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let last = g.len() - 1;
        if !(x >= g[0] && x <= g[last]) {
            return 0.0;
        }
        let i = g.partition_point(|&v| v <= x);
        if i > last {
            return self.density[last];
        }
        let (x0, x1) = (g[i - 1], g[i]);
        let t = (x - x0) / (x1 - x0);
        self.density[i - 1] + t * (self.density[i] - self.density[i - 1])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), KdeError> {
        let err = |e: csv::Error| KdeError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"]).map_err(err)?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            w.write_record([x.to_string(), d.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| KdeError::Io(e.to_string()))
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Normal-reference bandwidth `0.9 · min(sd, IQR/1.34) · n^(-1/5)`.
///
/// Falls back to whichever spread estimate is non-zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, KdeError> {
    let n = samples.len();
    if n < 2 {
        return Err(KdeError::TooFewSamples(n));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(KdeError::NonFinite);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Err(KdeError::InsufficientSpread),
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian KDE on `points` uniformly spaced abscissae over `[min − 3h, max + 3h]`.
pub fn ksdensity(samples: &[f64], points: usize) -> Result<DensityCurve, KdeError> {
    if points < 2 {
        return Err(KdeError::GridTooSmall(points));
    }
    let h = silverman_bandwidth(samples)?;
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let lo = min - 3.0 * h;
    let step = (max - min + 6.0 * h) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let scale = INV_SQRT_2PI / (h * samples.len() as f64);
    let density = grid
        .iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * scale
        })
        .collect();
    Ok(DensityCurve { grid, density, bandwidth: h })
}

/// `∫ min(f₁, f₂) dx` on the merged abscissae of both curves, clamped to `[0, 1]`.
pub fn overlap_proportion(a: &DensityCurve, b: &DensityCurve) -> f64 {
    let mut xs: Vec<f64> = a.grid.iter().chain(&b.grid).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let lower: Vec<f64> = xs.iter().map(|&x| a.eval(x).min(b.eval(x))).collect();
    trapezoid(&xs, &lower).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn normal_samples(n: usize, mean: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn std_pdf(x: f64) -> f64 {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }

    #[test]
    fn recovers_standard_normal() {
        let curve = ksdensity(&normal_samples(100_000, 0.0, 1), DEFAULT_GRID_POINTS).unwrap();
        assert!((curve.integral() - 1.0).abs() < 0.01);
        let worst = curve
            .grid
            .iter()
            .zip(&curve.density)
            .map(|(&x, &d)| (d - std_pdf(x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "max deviation {worst}");
    }

    #[test]
    fn constant_samples_rejected() {
        assert_eq!(ksdensity(&[5.0; 10], 100), Err(KdeError::InsufficientSpread));
        assert_eq!(ksdensity(&[5.0], 100), Err(KdeError::TooFewSamples(1)));
        assert_eq!(ksdensity(&[1.0, 2.0], 1), Err(KdeError::GridTooSmall(1)));
    }

    #[test]
    fn iqr_zero_falls_back_to_sd() {
        let mut s = vec![1.0; 20];
        s.push(3.0);
        let h = silverman_bandwidth(&s).unwrap();
        assert!(h > 0.0);
    }

    #[test]
    fn bandwidth_matches_hand_value() {
        // 1..=5: sd = √2.5, IQR = 4 − 2 = 2 → min(1.5811, 1.4925) = 1.4925
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let expected = 0.9 * (2.0f64 / 1.34) * 5f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-15);
    }

    #[test]
    fn overlap_examples() {
        let a = ksdensity(&normal_samples(2000, 0.0, 2), 100).unwrap();
        assert!((overlap_proportion(&a, &a) - 1.0).abs() < 0.01);

        let far = ksdensity(&normal_samples(2000, 100.0, 3), 100).unwrap();
        assert_eq!(overlap_proportion(&a, &far), 0.0);

        let n0 = ksdensity(&normal_samples(100_000, 0.0, 4), 100).unwrap();
        let n2 = ksdensity(&normal_samples(100_000, 2.0, 5), 100).unwrap();
        let exact = 2.0 * Normal::standard().cdf(-1.0);
        let got = overlap_proportion(&n0, &n2);
        assert!((got - exact).abs() < 0.02, "{got} vs {exact}");
    }

    #[test]
    fn eval_interpolates_and_vanishes_outside() {
        let c = DensityCurve { grid: vec![0.0, 1.0, 2.0], density: vec![0.0, 1.0, 0.0], bandwidth: 1.0 };
        assert_eq!(c.eval(0.5), 0.5);
        assert_eq!(c.eval(2.0), 0.0);
        assert_eq!(c.eval(1.0), 1.0);
        assert_eq!(c.eval(-0.1), 0.0);
        assert_eq!(c.eval(2.1), 0.0);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,density\n0,0\n1,1\n2,0\n");
    }

    fn sample_set() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 2..300)
            .prop_filter("needs spread", |v| v.iter().any(|x| *x != v[0]))
    }

    proptest! {
        #[test]
        fn normalized_and_nonnegative(s in sample_set()) {
            let c = ksdensity(&s, DEFAULT_GRID_POINTS).unwrap();
            prop_assume!(c.grid[1] - c.grid[0] <= c.bandwidth);
            prop_assert!((c.integral() - 1.0).abs() <= 0.01, "integral {}", c.integral());
            prop_assert!(c.density.iter().all(|d| *d >= 0.0));
        }

        #[test]
        fn overlap_symmetric_and_bounded(a in sample_set(), b in sample_set()) {
            let ca = ksdensity(&a, 100).unwrap();
            let cb = ksdensity(&b, 100).unwrap();
            let ab = overlap_proportion(&ca, &cb);
            prop_assert_eq!(ab.to_bits(), overlap_proportion(&cb, &ca).to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn translation_equivariant(s in sample_set(), shift in -100.0f64..100.0) {
            let base = ksdensity(&s, 100).unwrap();
            let moved: Vec<f64> = s.iter().map(|x| x + shift).collect();
            let curve = ksdensity(&moved, 100).unwrap();
            for i in 0..100 {
                prop_assert!((curve.grid[i] - (base.grid[i] + shift)).abs() <= 1e-9 * (1.0 + shift.abs() + base.grid[i].abs()));
                prop_assert!((curve.density[i] - base.density[i]).abs() <= 1e-12);
            }
        }
    }
}
