pub mod concentration;
pub mod identities;
pub mod laplace;
pub mod main_theorem;
pub mod meixner;
pub mod moments;

use qpush_core::stats::{bonferroni, z_for_confidence};

/// Per-test significance level after splitting 1 − confidence over `m`
/// tests.
pub(crate) fn alpha(confidence: f64, m: usize) -> f64 {
    1.0 - bonferroni(confidence, m)
}

/// Normal quantile for a two-sided band at the Bonferroni-split level.
pub(crate) fn band_z(confidence: f64, m: usize) -> f64 {
    z_for_confidence(bonferroni(confidence, m))
}

pub(crate) fn fmt_p(p: f64) -> String {
    format!("{p:.4e}")
}
