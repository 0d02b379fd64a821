//! Wilcoxon signed-rank and two-sample Kolmogorov-Smirnov tests.

use crate::error::{Error, Result};

use super::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Nonzero differences used by the test.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Normal approximation with tie correction.
    pub z: f64,
    pub p_two_sided: f64,
    /// P(W+ >= observed) under the null.
    pub p_one_sided_greater: f64,
    /// True when the sign-pattern distribution was enumerated exactly.
    pub exact: bool,
}

/// Wilcoxon signed-rank test. Zeros drop, ties get mid-ranks, and the exact
/// sign-pattern distribution is used for n <= 25 (normal approximation with
/// tie correction otherwise).
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult> {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(Error::Argument("all differences are zero".into()));
    }

    // mid-ranks of |d|
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        nonzero[a].abs().partial_cmp(&nonzero[b].abs()).expect("finite differences")
    });
    let mut ranks = vec![0.0; n];
    let mut tie_correction = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        let t = (j - i + 1) as f64;
        tie_correction += t * t * t - t;
        i = j + 1;
    }

    let w_plus: f64 =
        (0..n).filter(|&i| nonzero[i] > 0.0).map(|i| ranks[i]).sum();

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };

    if n <= 25 {
        // exact sign-pattern distribution via counts over 2 * rank sums,
        // doubled so mid-ranks become integers
        let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        let max_sum: u64 = doubled.iter().sum();
        let mut counts = vec![0u64; max_sum as usize + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s as usize] += counts[(s - r) as usize];
            }
        }
        let total = 2u64.pow(n as u32) as f64;
        let w2 = (w_plus * 2.0).round() as u64;
        let p_ge: f64 = counts[w2 as usize..].iter().map(|&c| c as f64).sum::<f64>() / total;
        let p_le: f64 = counts[..=w2 as usize].iter().map(|&c| c as f64).sum::<f64>() / total;
        let p_two = (2.0 * p_ge.min(p_le)).min(1.0);
        return Ok(WilcoxonResult {
            n,
            w_plus,
            z,
            p_two_sided: p_two,
            p_one_sided_greater: p_ge,
            exact: true,
        });
    }

    Ok(WilcoxonResult {
        n,
        w_plus,
        z,
        p_two_sided: 2.0 * (1.0 - normal_cdf(z.abs())),
        p_one_sided_greater: 1.0 - normal_cdf(z),
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// Maximum ECDF gap.
    pub d: f64,
    /// Asymptotic p-value with the small-sample correction factor.
    pub p: f64,
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("both samples must be non-empty".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));

    let (n, m) = (sa.len(), sb.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = sa[i].min(sb[j]);
        while i < n && sa[i] <= t {
            i += 1;
        }
        while j < m && sb[j] <= t {
            j += 1;
        }
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(gap);
    }

    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let p = kolmogorov_sf(lambda);
    Ok(KsResult { d, p })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn five_positive_differences_exact_p() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(r.exact);
        assert_relative_eq!(r.p_one_sided_greater, 1.0 / 32.0, epsilon = 1e-12);
        assert_eq!(r.w_plus, 15.0);
    }

    #[test]
    fn antisymmetric_pair_gives_zero_z() {
        let r = wilcoxon_signed_rank(&[-2.0, 2.0]).unwrap();
        assert_relative_eq!(r.z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.p_two_sided, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zeros_drop_and_all_zero_errors() {
        let r = wilcoxon_signed_rank(&[0.0, 1.0, 0.0, 2.0]).unwrap();
        assert_eq!(r.n, 2);
        assert!(wilcoxon_signed_rank(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn exact_matches_enumeration_for_small_n() {
        // independent oracle: enumerate all 2^n sign patterns directly
        let cases: [&[f64]; 4] = [
            &[1.0, -2.0, 3.0],
            &[1.5, 2.5, -0.5, 3.0, -1.0, 4.0],
            &[1.0, 1.0, -1.0, 2.0, 3.0, -3.0, 5.0],
            &[2.0, -4.0, 6.0, -8.0, 10.0, 1.0, -3.0, 5.0, 7.0, -9.0],
        ];
        for diffs in cases {
            let r = wilcoxon_signed_rank(diffs).unwrap();
            assert!(r.exact);

            // recompute mid-ranks
            let n = diffs.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
            let mut ranks = vec![0.0; n];
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
                    j += 1;
                }
                for &idx in &order[i..=j] {
                    ranks[idx] = (i + j) as f64 / 2.0 + 1.0;
                }
                i = j + 1;
            }
            let observed: f64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| ranks[i]).sum();
            let mut count_ge = 0u64;
            for mask in 0..(1u64 << n) {
                let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
                if w >= observed {
                    count_ge += 1;
                }
            }
            let expected = count_ge as f64 / (1u64 << n) as f64;
            assert_relative_eq!(r.p_one_sided_greater, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn ks_identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.d, 0.0);
        assert_relative_eq!(r.p, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ks_disjoint_supports() {
        let r = ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.d, 1.0);
        assert!(r.p < 0.5);
    }

    #[test]
    fn ks_matches_breakpoint_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(2..40);
            let m = rng.random_range(2..40);
            let a: Vec<f64> = (0..n).map(|_| (rng.random_range(0..12) as f64) / 3.0).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..4.0)).collect();
            let r = ks_two_sample(&a, &b).unwrap();

            // oracle: evaluate |Fa - Fb| at every sample point
            let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
            let mut d_oracle: f64 = 0.0;
            for &x in a.iter().chain(b.iter()) {
                d_oracle = d_oracle.max((ecdf(&a, x) - ecdf(&b, x)).abs());
            }
            assert_relative_eq!(r.d, d_oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn ks_rejects_empty() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(ks_two_sample(&[1.0], &[]).is_err());
    }
}
