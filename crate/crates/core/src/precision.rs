//! Arithmetic settings threaded through the exact and high-precision
//! computations, plus the certificate wrapper every truncated series returns.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Which number system a computation runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arithmetic {
    /// IEEE binary64; the fast path used by the simulators.
    Double,
    /// Binary floating point with `precision_bits` of mantissa and an
    /// effectively unbounded exponent.
    ExtendedFloat,
    /// Exact rationals. Only available for finite expressions in rational `q`.
    ExactRational,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionContext {
    mode: Arithmetic,
    precision_bits: u32,
    truncation_eps: f64,
}

impl PrecisionContext {
    pub const DEFAULT_BITS: u32 = 256;
    pub const DEFAULT_EPS: f64 = 1e-30;

    pub fn new(mode: Arithmetic, precision_bits: u32, truncation_eps: f64) -> Result<Self> {
        if precision_bits == 0 {
            return domain("precision_bits must be positive");
        }
        if mode == Arithmetic::ExtendedFloat && precision_bits < 64 {
            return domain(format!(
                "extended-float mode needs at least 64 bits, got {precision_bits}"
            ));
        }
        if !(truncation_eps > 0.0 && truncation_eps <= 1e-6) {
            return domain(format!("truncation_eps {truncation_eps:e} not in (0, 1e-6]"));
        }
        Ok(Self {
            mode,
            precision_bits,
            truncation_eps,
        })
    }

    /// Binary64 with a truncation tolerance suited to its 53-bit mantissa.
    pub fn double() -> Self {
        Self {
            mode: Arithmetic::Double,
            precision_bits: 53,
            truncation_eps: 1e-15,
        }
    }

    pub fn extended(bits: u32) -> Result<Self> {
        Self::new(Arithmetic::ExtendedFloat, bits, Self::DEFAULT_EPS)
    }

    pub fn exact() -> Self {
        Self {
            mode: Arithmetic::ExactRational,
            precision_bits: Self::DEFAULT_BITS,
            truncation_eps: Self::DEFAULT_EPS,
        }
    }

    pub fn with_eps(self, truncation_eps: f64) -> Result<Self> {
        Self::new(self.mode, self.precision_bits, truncation_eps)
    }

    pub fn mode(&self) -> Arithmetic {
        self.mode
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn truncation_eps(&self) -> f64 {
        self.truncation_eps
    }
}

impl Default for PrecisionContext {
    fn default() -> Self {
        Self {
            mode: Arithmetic::ExtendedFloat,
            precision_bits: Self::DEFAULT_BITS,
            truncation_eps: Self::DEFAULT_EPS,
        }
    }
}

/// A value together with a rigorous bound on the error introduced by
/// truncating an infinite product or series. For products the bound is
/// relative, for sums it is absolute; each producer documents which.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certified<T> {
    pub value: T,
    pub tail_bound: f64,
    /// Number of terms actually accumulated.
    pub terms: usize,
}

impl<T> Certified<T> {
    pub fn exact(value: T, terms: usize) -> Self {
        Self {
            value,
            tail_bound: 0.0,
            terms,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Certified<U> {
        Certified {
            value: f(self.value),
            tail_bound: self.tail_bound,
            terms: self.terms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_settings() {
        assert!(PrecisionContext::new(Arithmetic::ExtendedFloat, 32, 1e-30).is_err());
        assert!(PrecisionContext::new(Arithmetic::ExtendedFloat, 128, 0.0).is_err());
        assert!(PrecisionContext::new(Arithmetic::ExtendedFloat, 128, 1e-3).is_err());
        assert!(PrecisionContext::new(Arithmetic::ExtendedFloat, 64, 1e-6).is_ok());
    }

    #[test]
    fn defaults() {
        let ctx = PrecisionContext::default();
        assert_eq!(ctx.precision_bits(), 256);
        assert_eq!(ctx.truncation_eps(), 1e-30);
        assert_eq!(ctx.mode(), Arithmetic::ExtendedFloat);
    }
}
