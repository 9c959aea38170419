//! Rank-based tests and summary statistics.
//!
//! Statistic conventions follow R: the rank-sum `W` is the Mann-Whitney `U`
//! of the first sample, the signed-rank `V` is the sum of positive ranks, and
//! the normal approximation applies a continuity correction of 0.5 towards
//! the null.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest combined sample size for the exact rank-sum distribution.
pub const EXACT_RANK_SUM_MAX: usize = 20;
/// Largest number of nonzero differences for the exact signed-rank distribution.
pub const EXACT_SIGNED_RANK_MAX: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    TwoSided,
    Less,
    Greater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    pub alternative: Alternative,
    pub exact: bool,
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Sizes of tie groups among `values`, including singletons.
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        sizes.push(j - i);
        i = j;
    }
    sizes
}

fn tie_sum(values: &[f64]) -> f64 {
    tie_sizes(values).into_iter().map(|t| (t * t * t - t) as f64).sum()
}

fn has_ties(values: &[f64]) -> bool {
    tie_sizes(values).iter().any(|&t| t > 1)
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// p-value of a normal approximation with continuity correction.
fn normal_p(centered: f64, sd: f64, alternative: Alternative) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let n = std_normal();
    let p = match alternative {
        Alternative::TwoSided => {
            let correction = if centered > 0.0 { 0.5 } else if centered < 0.0 { -0.5 } else { 0.0 };
            let z = (centered - correction) / sd;
            2.0 * n.cdf(z).min(n.sf(z))
        }
        Alternative::Greater => n.sf((centered - 0.5) / sd),
        Alternative::Less => n.cdf((centered + 0.5) / sd),
    };
    clamp_p(p)
}

/// p-value from an exact null distribution given as counts per integer statistic value.
fn exact_p(counts: &[f64], stat: usize, alternative: Alternative) -> f64 {
    let total: f64 = counts.iter().sum();
    let lower: f64 = counts[..=stat].iter().sum::<f64>() / total;
    let upper: f64 = counts[stat..].iter().sum::<f64>() / total;
    clamp_p(match alternative {
        Alternative::Less => lower,
        Alternative::Greater => upper,
        Alternative::TwoSided => 2.0 * lower.min(upper),
    })
}

/// Kruskal-Wallis H with tie correction and a chi-squared p-value on `k - 1`
/// degrees of freedom. When every observation is equal, `H = 0` and `p = 1`.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidSample("kruskal_wallis needs at least two groups".into()));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::InvalidSample("empty group".into()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite observation".into()));
    }
    let result = |statistic: f64, p_value: f64| TestResult {
        statistic,
        p_value,
        method: "kruskal-wallis".into(),
        alternative: Alternative::TwoSided,
        exact: false,
    };
    let n = pooled.len() as f64;
    let correction = 1.0 - tie_sum(&pooled) / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(result(0.0, 1.0));
    }
    let r = ranks(&pooled);
    let mut offset = 0;
    let mut h = 0.0;
    for g in groups {
        let sum: f64 = r[offset..offset + g.len()].iter().sum();
        h += sum * sum / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0)) / correction).max(0.0);
    let df = (groups.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("positive df").sf(h);
    Ok(result(h, clamp_p(p)))
}

/// Null counts of the Mann-Whitney statistic for sample sizes `m`, `n`.
fn rank_sum_counts(m: usize, n: usize) -> Vec<f64> {
    // f[i][j][u]: arrangements of i x's and j y's with u (x > y) pairs.
    let max_u = m * n;
    let mut f = vec![vec![vec![0.0f64; max_u + 1]; n + 1]; m + 1];
    for j in 0..=n {
        f[0][j][0] = 1.0;
    }
    for i in 1..=m {
        f[i][0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=i * j {
                // Largest element is an x (beats all j y's) or a y.
                let from_x = if u >= j { f[i - 1][j][u - j] } else { 0.0 };
                let from_y = f[i][j - 1][u];
                f[i][j][u] = from_x + from_y;
            }
        }
    }
    f[m][n].clone()
}

/// Wilcoxon rank-sum test of `x` against `y`. "less" means `x` tends to be
/// smaller than `y`.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidSample("rank-sum samples must be nonempty".into()));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite observation".into()));
    }
    let (m, n) = (x.len(), y.len());
    let r = ranks(&pooled);
    let r1: f64 = r[..m].iter().sum();
    let w = r1 - (m * (m + 1)) as f64 / 2.0;
    let exact = m + n <= EXACT_RANK_SUM_MAX && !has_ties(&pooled);
    let p = if exact {
        exact_p(&rank_sum_counts(m, n), w.round() as usize, alternative)
    } else {
        let (mf, nf) = (m as f64, n as f64);
        let total = mf + nf;
        let var = mf * nf / 12.0 * ((total + 1.0) - tie_sum(&pooled) / (total * (total - 1.0)));
        normal_p(w - mf * nf / 2.0, var.max(0.0).sqrt(), alternative)
    };
    Ok(TestResult { statistic: w, p_value: p, method: "wilcoxon-rank-sum".into(), alternative, exact })
}

/// Null counts of the signed-rank statistic for `n` untied ranks.
fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max_v = n * (n + 1) / 2;
    let mut c = vec![0.0f64; max_v + 1];
    c[0] = 1.0;
    for k in 1..=n {
        for v in (k..=max_v).rev() {
            c[v] += c[v - k];
        }
    }
    c
}

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped first. "less" means the differences tend to be negative.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<TestResult> {
    if diffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite difference".into()));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::AllZeroDiffs);
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let r = ranks(&abs);
    let v: f64 = nz.iter().zip(&r).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let exact = n <= EXACT_SIGNED_RANK_MAX && !has_ties(&abs);
    let p = if exact {
        exact_p(&signed_rank_counts(n), v.round() as usize, alternative)
    } else {
        let nf = n as f64;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&abs) / 48.0;
        normal_p(v - nf * (nf + 1.0) / 4.0, var.max(0.0).sqrt(), alternative)
    };
    Ok(TestResult { statistic: v, p_value: p, method: "wilcoxon-signed-rank".into(), alternative, exact })
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub first: usize,
    pub second: usize,
    pub result: TestResult,
    pub holm_p: f64,
}

/// Rank-sum tests over every unordered pair of groups, `first < second`,
/// with `first` as the `x` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub n_groups: usize,
    pub comparisons: Vec<PairwiseComparison>,
}

impl PairwiseMatrix {
    fn matrix(&self, pick: impl Fn(&PairwiseComparison) -> f64) -> Vec<Vec<f64>> {
        let mut m = vec![vec![1.0; self.n_groups]; self.n_groups];
        for c in &self.comparisons {
            m[c.first][c.second] = pick(c);
            m[c.second][c.first] = pick(c);
        }
        m
    }

    pub fn unadjusted(&self) -> Vec<Vec<f64>> {
        self.matrix(|c| c.result.p_value)
    }

    pub fn holm(&self) -> Vec<Vec<f64>> {
        self.matrix(|c| c.holm_p)
    }

    pub fn get(&self, a: usize, b: usize) -> Option<&PairwiseComparison> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.comparisons.iter().find(|c| c.first == i && c.second == j)
    }
}

pub fn pairwise_wilcoxon(groups: &[Vec<f64>], alternative: Alternative) -> Result<PairwiseMatrix> {
    if groups.len() < 2 {
        return Err(Error::InvalidSample("pairwise comparison needs at least two groups".into()));
    }
    let mut comparisons = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let result = wilcoxon_rank_sum(&groups[i], &groups[j], alternative)?;
            comparisons.push(PairwiseComparison { first: i, second: j, holm_p: result.p_value, result });
        }
    }
    let p: Vec<f64> = comparisons.iter().map(|c| c.result.p_value).collect();
    for (c, adj) in comparisons.iter_mut().zip(holm_adjust(&p)) {
        c.holm_p = adj;
    }
    Ok(PairwiseMatrix { n_groups: groups.len(), comparisons })
}

/// Linear-interpolation quantile (R type 7). NaN on empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// JSON has no NaN; serde_json writes it as `null`. These read `null` back as NaN.
pub(crate) mod nullable {
    use serde::{Deserialize, Deserializer};

    pub fn f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub fn vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    #[serde(deserialize_with = "nullable::f64")]
    pub median: f64,
    #[serde(deserialize_with = "nullable::f64")]
    pub q1: f64,
    #[serde(deserialize_with = "nullable::f64")]
    pub q3: f64,
    #[serde(deserialize_with = "nullable::f64")]
    pub mean: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    Summary {
        n: values.len(),
        median: median(values),
        q1: quantile(values, 0.25),
        q3: quantile(values, 0.75),
        mean: values.iter().sum::<f64>() / values.len() as f64,
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman correlation. NaN when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs differ in length");
    pearson(&ranks(x), &ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kruskal_examples() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);

        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_abs_diff_eq!(r.statistic, 27.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.04953461343562649, epsilon = 1e-9);

        let r = kruskal_wallis(&[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn kruskal_separated_groups() {
        // Perfect separation of k groups of 20.
        let groups = |k: usize| -> Vec<Vec<f64>> {
            (0..k).map(|g| (0..20).map(|i| (g * 20 + i) as f64).collect()).collect()
        };
        assert_abs_diff_eq!(kruskal_wallis(&groups(5)).unwrap().statistic, 95.05, epsilon = 0.005);
        assert_abs_diff_eq!(kruskal_wallis(&groups(3)).unwrap().statistic, 52.459, epsilon = 0.0005);
    }

    #[test]
    fn rank_sum_examples() {
        let x = [1.0, 2.0, 3.0];
        let y = [4.0, 5.0, 6.0];
        let r = wilcoxon_rank_sum(&x, &y, Alternative::TwoSided).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(wilcoxon_rank_sum(&x, &y, Alternative::Less).unwrap().p_value, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(wilcoxon_rank_sum(&x, &y, Alternative::Greater).unwrap().p_value, 1.0, epsilon = 1e-15);

        let z = [1.0, 1.0, 2.0, 3.0];
        let r = wilcoxon_rank_sum(&z, &z, Alternative::TwoSided).unwrap();
        assert!(!r.exact);
        assert!(r.p_value >= 0.99);
    }

    #[test]
    fn rank_sum_counts_match_binomial_total() {
        let c = rank_sum_counts(3, 3);
        assert_eq!(c.iter().sum::<f64>(), 20.0);
        assert_eq!(c, vec![1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0, 2.0, 1.0, 1.0]);
        assert_eq!(rank_sum_counts(10, 10).iter().sum::<f64>(), 184756.0);
    }

    #[test]
    fn rank_sum_statistic_matches_r_convention() {
        let x: Vec<f64> = (0..60).map(|i| 100.0 + i as f64).collect();
        let y: Vec<f64> = (0..60).map(|i| i as f64).collect();
        assert_eq!(wilcoxon_rank_sum(&x, &y, Alternative::Greater).unwrap().statistic, 3600.0);
    }

    #[test]
    fn signed_rank_examples() {
        let r = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0], Alternative::Less).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 0.125, epsilon = 1e-15);

        let r = wilcoxon_signed_rank(&[-2.0, 2.0], Alternative::TwoSided).unwrap();
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);

        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], Alternative::Less).unwrap();
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-15);

        assert!(matches!(wilcoxon_signed_rank(&[0.0, 0.0], Alternative::Less), Err(Error::AllZeroDiffs)));
        let r = wilcoxon_signed_rank(&[0.0, -1.0, -2.0, -3.0], Alternative::Less).unwrap();
        assert_abs_diff_eq!(r.p_value, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn holm_values() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]);
        assert_abs_diff_eq!(adj[0], 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(adj[2], 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(adj[1], 0.06, epsilon = 1e-15);
    }

    #[test]
    fn pairwise_shape() {
        let groups = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![2.5, 3.5, 7.0], vec![0.0, 9.0, 8.0]];
        let m = pairwise_wilcoxon(&groups, Alternative::TwoSided).unwrap();
        assert_eq!(m.comparisons.len(), 6);
        let u = m.unadjusted();
        let h = m.holm();
        for i in 0..4 {
            assert_eq!(u[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(u[i][j], u[j][i]);
                assert!(h[i][j] >= u[i][j]);
            }
        }
        let two = pairwise_wilcoxon(&groups[..2], Alternative::TwoSided).unwrap();
        let direct = wilcoxon_rank_sum(&groups[0], &groups[1], Alternative::TwoSided).unwrap();
        assert_eq!(two.get(1, 0).unwrap().result, direct);
    }

    #[test]
    fn summaries() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((s.q1, s.q3, s.mean), (1.75, 3.25, 2.5));
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0, epsilon = 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }
}
