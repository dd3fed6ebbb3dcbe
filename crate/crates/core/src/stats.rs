//! Compensated summation and replicate summaries.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Mean and standard error of a replicate sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// `None` when fewer than two replicates are available.
    pub stderr: Option<f64>,
    pub count: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: None,
                count: 0,
            };
        }
        let mean = compensated_sum(xs.iter().copied()) / n as f64;
        let stderr = (n > 1).then(|| {
            let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n - 1) as f64 / n as f64).sqrt()
        });
        Self {
            mean,
            stderr,
            count: n,
        }
    }

    pub fn variance(xs: &[f64]) -> f64 {
        Self::of(xs)
            .stderr
            .map(|se| se * se * xs.len() as f64)
            .unwrap_or(f64::NAN)
    }

    pub fn stderr_or_nan(&self) -> f64 {
        self.stderr.unwrap_or(f64::NAN)
    }
}

/// Runs `f` on replicate indices `0..count` in parallel on the current rayon
/// pool. Results come back in index order, so any reduction done afterwards
/// does not depend on the thread count.
pub fn par_replicates<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count as u64).into_par_iter().map(f).collect()
}

/// Sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ys.iter().copied()) / n;
    compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (n - 1.0)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
