//! Float helpers. Transcendentals go through `libm` so results do not depend
//! on the platform's math library.

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// Arithmetic mean, summed in index order.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n > 0 && xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let m = mean(xs);
    if n < 2 {
        return (m, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (m, sqrt(ss / (n - 1) as f64 / n as f64))
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

pub fn rel_err(approx: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        abs(approx)
    } else {
        abs(approx - exact) / abs(exact)
    }
}
