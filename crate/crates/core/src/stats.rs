//! Small statistics helpers shared by the estimators and the test suites.

/// Running summary built from an indexed set of per-run values.
///
/// Values are keyed by run index and reduced in index order when finalized,
/// so the resulting statistics are identical no matter in which order the
/// per-run results were produced or merged (parallel runs, shuffled batches).
#[derive(Debug, Clone, Default)]
pub struct RunSet {
    values: Vec<(u64, f64)>,
}

impl RunSet {
    pub fn new() -> Self {
        RunSet { values: Vec::new() }
    }

    pub fn push(&mut self, run_index: u64, value: f64) {
        self.values.push((run_index, value));
    }

    pub fn merge(&mut self, other: RunSet) {
        self.values.extend(other.values);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values sorted by run index.
    pub fn ordered(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by_key(|&(i, _)| i);
        v.into_iter().map(|(_, x)| x).collect()
    }

    /// `(n, mean, sample standard deviation)`; `s = 0` when `n < 2`.
    pub fn summary(&self) -> (usize, f64, f64) {
        let xs = self.ordered();
        summary(&xs)
    }
}

/// `(n, mean, sample standard deviation)` of a slice, reduced left to right.
pub fn summary(xs: &[f64]) -> (usize, f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0, 0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (n, mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (n, mean, (ss / (n - 1) as f64).sqrt())
}

/// Two-sample Kolmogorov–Smirnov statistic: the maximum distance between the
/// empirical CDFs. Valid for discrete samples as well (the test is then
/// conservative).
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "ks_statistic on empty sample");
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.partial_cmp(q).expect("NaN in KS sample"));
    xb.sort_by(|p, q| p.partial_cmp(q).expect("NaN in KS sample"));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value for the two-sample KS test at significance `alpha`,
/// `c(alpha) * sqrt((n+m)/(n*m))` with the standard asymptotic coefficient.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}

/// 64-bit FNV-1a, used for stable content hashes in output artifacts.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
