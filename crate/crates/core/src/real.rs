//! Minimal scalar abstraction so the same Stieltjes code runs in binary64
//! and in `BigFloat`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::bigfloat::BigFloat;

pub trait Real:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64_with(bits: u32, v: f64) -> Self;
    /// A constant with the same precision as `self`.
    fn lift(&self, v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn ln(&self) -> Self;
    fn exp(&self) -> Self;
    fn powf(&self, y: &Self) -> Self;
    fn powi(&self, n: u64) -> Self;
}

impl Real for f64 {
    fn from_f64_with(_bits: u32, v: f64) -> Self {
        v
    }
    fn lift(&self, v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn powf(&self, y: &Self) -> Self {
        f64::powf(*self, *y)
    }
    fn powi(&self, n: u64) -> Self {
        f64::powf(*self, n as f64)
    }
}

impl Real for BigFloat {
    fn from_f64_with(bits: u32, v: f64) -> Self {
        BigFloat::from_f64(bits, v)
    }
    fn lift(&self, v: f64) -> Self {
        BigFloat::from_f64(self.bits(), v)
    }
    fn to_f64(&self) -> f64 {
        BigFloat::to_f64(self)
    }
    fn sqrt(&self) -> Self {
        BigFloat::sqrt(self)
    }
    fn abs(&self) -> Self {
        BigFloat::abs(self)
    }
    fn is_zero(&self) -> bool {
        BigFloat::is_zero(self)
    }
    fn ln(&self) -> Self {
        BigFloat::ln(self)
    }
    fn exp(&self) -> Self {
        BigFloat::exp(self)
    }
    fn powf(&self, y: &Self) -> Self {
        BigFloat::powf(self, y)
    }
    fn powi(&self, n: u64) -> Self {
        BigFloat::powi(self, n)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone)]
pub struct CompensatedSum<R: Real> {
    sum: R,
    comp: R,
}

impl<R: Real> CompensatedSum<R> {
    pub fn new(zero: R) -> Self {
        Self {
            comp: zero.clone(),
            sum: zero,
        }
    }

    pub fn add(&mut self, x: R) {
        let t = self.sum.clone() + x.clone();
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp.clone() + ((self.sum.clone() - t.clone()) + x);
        } else {
            self.comp = self.comp.clone() + ((x - t.clone()) + self.sum.clone());
        }
        self.sum = t;
    }

    pub fn value(&self) -> R {
        self.sum.clone() + self.comp.clone()
    }
}
