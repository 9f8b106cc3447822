//! Shared distribution helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper tail of the chi-squared distribution with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df as f64).expect("df > 0").cdf(x)
}

/// Critical value for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.959963984540054;
