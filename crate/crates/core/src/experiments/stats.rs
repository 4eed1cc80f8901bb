/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub halfwidth: f64,
    pub n: usize,
}

/// Sample mean and Gaussian 95% confidence halfwidth `1.96 · s / √n` with the
/// Bessel-corrected standard deviation. A single sample has halfwidth 0.
///
/// Samples are summed in ascending order, so the result does not depend on
/// the order they arrive in.
pub fn mean_ci95(samples: &[f64]) -> MeanCi {
    let n = samples.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            halfwidth: f64::NAN,
            n,
        };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi {
            mean,
            halfwidth: 0.0,
            n,
        };
    }
    let ss: f64 = sorted.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    MeanCi {
        mean,
        halfwidth: Z_95 * sd / (n as f64).sqrt(),
        n,
    }
}
