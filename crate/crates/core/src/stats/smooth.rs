//! Nonparametric smoothers: Epanechnikov kernel density estimation with the
//! normal-scale bandwidth rule, and Cleveland's lowess.

use crate::error::{Error, Result};

/// Epanechnikov kernel density estimate over a fixed sample.
#[derive(Debug, Clone)]
pub struct Kde {
    data: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde {
    pub fn evaluate(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let n = self.data.len() as f64;
        let sum: f64 = self
            .data
            .iter()
            .map(|&xi| {
                let u = (x - xi) / h;
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            })
            .sum();
        sum / (n * h)
    }

    /// Evaluate on an even grid spanning the data plus one bandwidth.
    pub fn grid(&self, points: usize) -> Vec<(f64, f64)> {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min) - self.bandwidth;
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max) + self.bandwidth;
        (0..points)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64;
                (x, self.evaluate(x))
            })
            .collect()
    }

    pub fn support(&self) -> (f64, f64) {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min) - self.bandwidth;
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max) + self.bandwidth;
        (lo, hi)
    }
}

/// Type-7 (linear interpolation) quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Build a KDE. Without an explicit bandwidth, the normal-scale rule for the
/// Epanechnikov kernel applies: h = 2.34 * sigma * n^(-1/5) with
/// sigma = min(sample SD, IQR / 1.349); a zero candidate falls back to the
/// other, and zero-variance input is an error.
pub fn kde_epanechnikov(values: &[f64], bandwidth: Option<f64>) -> Result<Kde> {
    if values.len() < 2 {
        return Err(Error::Argument("KDE needs at least two values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("KDE input must be finite".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::Argument(format!("bandwidth must be positive, got {h}"))),
        None => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let candidates = [sd, iqr / 1.349];
            let sigma = match candidates.iter().copied().filter(|&c| c > 0.0).fold(f64::INFINITY, f64::min)
            {
                s if s.is_finite() => s,
                _ => return Err(Error::Argument("zero-variance input; cannot pick a bandwidth".into())),
            };
            2.34 * sigma * n.powf(-0.2)
        }
    };
    Ok(Kde { data: values.to_vec(), bandwidth: h })
}

fn tricube(u: f64) -> f64 {
    let a = 1.0 - u.abs().powi(3);
    if a <= 0.0 {
        0.0
    } else {
        a * a * a
    }
}

fn bisquare(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        let b = 1.0 - a * a;
        b * b
    }
}

/// Locally weighted scatterplot smoothing (local linear, tricube weights).
///
/// Each point is fit over its ceil(f * n) nearest neighbors; optional
/// robustness iterations downweight outliers with bisquare weights on the
/// residuals. Degenerate neighborhoods (all x equal) fall back to the
/// weighted mean.
pub fn lowess(x: &[f64], y: &[f64], f: f64, robust_iterations: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Argument("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::Argument("lowess needs at least three points".into()));
    }
    if !(0.0 < f && f <= 1.0) {
        return Err(Error::Argument(format!("bandwidth fraction must be in (0, 1], got {f}")));
    }
    let k = ((f * n as f64).ceil() as usize).clamp(2, n);

    let mut robustness = vec![1.0; n];
    let mut fitted = vec![0.0; n];
    for iteration in 0..=robust_iterations {
        for i in 0..n {
            // k nearest neighbors of x[i], ties broken by index
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let da = (x[a] - x[i]).abs();
                let db = (x[b] - x[i]).abs();
                da.partial_cmp(&db).expect("finite x").then(a.cmp(&b))
            });
            let neighborhood = &order[..k];
            let d_max = neighborhood.iter().map(|&j| (x[j] - x[i]).abs()).fold(0.0f64, f64::max);

            let weight = |j: usize| -> f64 {
                let base = if d_max > 0.0 { tricube((x[j] - x[i]).abs() / d_max) } else { 1.0 };
                base * robustness[j]
            };

            // weighted linear fit on the neighborhood
            let mut sw = 0.0;
            let mut swx = 0.0;
            let mut swy = 0.0;
            let mut swxx = 0.0;
            let mut swxy = 0.0;
            for &j in neighborhood {
                let w = weight(j);
                sw += w;
                swx += w * x[j];
                swy += w * y[j];
                swxx += w * x[j] * x[j];
                swxy += w * x[j] * y[j];
            }
            if sw <= 0.0 {
                // all neighbors robust-zeroed; fall back to unweighted mean
                fitted[i] = neighborhood.iter().map(|&j| y[j]).sum::<f64>() / k as f64;
                continue;
            }
            let det = sw * swxx - swx * swx;
            let scale = swxx.abs().max(1.0);
            if det.abs() <= 1e-12 * scale * sw.max(1e-300) {
                fitted[i] = swy / sw;
            } else {
                let slope = (sw * swxy - swx * swy) / det;
                let intercept = (swy - slope * swx) / sw;
                fitted[i] = intercept + slope * x[i];
            }
        }
        if iteration == robust_iterations {
            break;
        }
        // robustness update per Cleveland: bisquare of residual / 6 median;
        // stop when the median residual vanishes relative to the mean scale
        let mut abs_res: Vec<f64> = x.iter().zip(y).zip(&fitted).map(|((_, &yi), &fi)| (yi - fi).abs()).collect();
        let mean_abs = abs_res.iter().sum::<f64>() / n as f64;
        abs_res.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
        let s = quantile_sorted(&abs_res, 0.5);
        if s <= 1e-7 * mean_abs.max(1e-300) {
            break;
        }
        for (j, r) in robustness.iter_mut().enumerate() {
            *r = bisquare((y[j] - fitted[j]) / (6.0 * s));
        }
    }
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kde_two_points_hand_values() {
        let kde = kde_epanechnikov(&[-1.0, 1.0], Some(1.0)).unwrap();
        assert_relative_eq!(kde.evaluate(0.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(kde.evaluate(1.0), 0.375, epsilon = 1e-12);
        assert_relative_eq!(kde.evaluate(-1.0), 0.375, epsilon = 1e-12);
        // zero outside kernel support
        assert_eq!(kde.evaluate(2.01), 0.0);
        assert_eq!(kde.evaluate(-2.01), 0.0);
    }

    #[test]
    fn kde_symmetric_cluster() {
        let kde = kde_epanechnikov(&[0.0, 0.0, 0.0], Some(1.0)).unwrap();
        for d in [0.1, 0.4, 0.9] {
            assert_relative_eq!(kde.evaluate(d), kde.evaluate(-d), epsilon = 1e-12);
        }
        assert_eq!(kde.evaluate(1.5), 0.0);
    }

    #[test]
    fn kde_integrates_to_one() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let values: Vec<f64> = (0..200).map(|_| rng.random_range(-3.0..5.0)).collect();
            let kde = kde_epanechnikov(&values, None).unwrap();
            let (lo, hi) = kde.support();
            let steps = 20_000;
            let dx = (hi - lo) / steps as f64;
            let integral: f64 =
                (0..steps).map(|i| kde.evaluate(lo + (i as f64 + 0.5) * dx) * dx).sum();
            assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
            // non-negative everywhere sampled
            assert!((0..steps).all(|i| kde.evaluate(lo + i as f64 * dx) >= 0.0));
        }
    }

    #[test]
    fn kde_bandwidth_rule() {
        // for {1,2,3,4,5}: sd ~ 1.5811, iqr = 2 -> iqr/1.349 ~ 1.4826 (min)
        let values = [1.0, 2.0, 3.0, 4.0, 5.0];
        let kde = kde_epanechnikov(&values, None).unwrap();
        let sigma = 2.0 / 1.349;
        let expected = 2.34 * sigma * 5f64.powf(-0.2);
        assert_relative_eq!(kde.bandwidth, expected, epsilon = 1e-12);
    }

    #[test]
    fn kde_zero_variance_rejected() {
        assert!(kde_epanechnikov(&[2.0, 2.0, 2.0], None).is_err());
        // zero IQR with positive SD falls back to SD
        let kde = kde_epanechnikov(&[0.0, 0.0, 0.0, 0.0, 1.0], None).unwrap();
        assert!(kde.bandwidth > 0.0);
    }

    #[test]
    fn lowess_reproduces_lines_exactly() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 5.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        for f in [0.3, 0.5, 1.0] {
            let fitted = lowess(&x, &y, f, 0).unwrap();
            for (fi, yi) in fitted.iter().zip(&y) {
                assert!((fi - yi).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lowess_interior_point_matches_hand_solve() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![1.0, 2.0, 1.5, 3.0, 2.5];
        // f = 0.6 -> k = 3; at i = 2 the neighborhood is {1, 2, 3},
        // d_max = 1, weights: tricube(1)=0 for 1 and 3, tricube(0)=1 for 2.
        // All weight on the center: fit passes through y[2].
        let fitted = lowess(&x, &y, 0.6, 0).unwrap();
        assert_relative_eq!(fitted[2], 1.5, epsilon = 1e-12);

        // hand-check i = 0: neighborhood {0,1,2}, d_max = 2,
        // w = [1, tricube(0.5), 0], solve 2x2 weighted normal equations
        let w1 = tricube(0.5);
        let (sw, swx, swy) = (1.0 + w1, w1, 1.0 + 2.0 * w1);
        let (swxx, swxy) = (w1, 2.0 * w1);
        let det = sw * swxx - swx * swx;
        let slope = (sw * swxy - swx * swy) / det;
        let intercept = (swy - slope * swx) / sw;
        assert_relative_eq!(fitted[0], intercept, epsilon = 1e-12);
    }

    #[test]
    fn lowess_symmetric_data_symmetric_fit() {
        let x: Vec<f64> = (-10..=10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fitted = lowess(&x, &y, 1.0, 0).unwrap();
        let n = fitted.len();
        for i in 0..n / 2 {
            assert_relative_eq!(fitted[i], fitted[n - 1 - i], epsilon = 1e-9);
        }
    }

    #[test]
    fn lowess_degenerate_neighborhood_falls_back() {
        let x = vec![1.0, 1.0, 1.0, 5.0];
        let y = vec![2.0, 4.0, 6.0, 1.0];
        let fitted = lowess(&x, &y, 0.75, 0).unwrap(); // k = 3
        assert_relative_eq!(fitted[0], 4.0, epsilon = 1e-12); // mean of {2,4,6}
    }

    #[test]
    fn lowess_robustness_downweights_outlier() {
        // small wiggle keeps the median residual positive so the robustness
        // weights actually engage
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.2 * (v * 1.3).sin()).collect();
        y[15] += 50.0;
        let plain = lowess(&x, &y, 0.4, 0).unwrap();
        let robust = lowess(&x, &y, 0.4, 3).unwrap();
        let truth = 0.5 * 15.0 + 0.2 * (15.0f64 * 1.3).sin();
        assert!(
            (robust[15] - truth).abs() < (plain[15] - truth).abs(),
            "robust {} plain {} truth {}",
            robust[15],
            plain[15],
            truth
        );
    }

    #[test]
    fn lowess_input_validation() {
        assert!(lowess(&[1.0, 2.0], &[1.0, 2.0], 0.5, 0).is_err());
        assert!(lowess(&[1.0, 2.0, 3.0], &[1.0, 2.0], 0.5, 0).is_err());
        assert!(lowess(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.0, 0).is_err());
        assert!(lowess(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1.5, 0).is_err());
    }
}
