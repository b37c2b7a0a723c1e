//! Log-scaled floating point helpers.
//!
//! Orthonormal polynomial values grow or decay exponentially in the degree,
//! far beyond `f64` range for the degrees this crate handles. Values are
//! therefore carried as `mantissa * exp(log_scale)` pairs, renormalized
//! whenever the mantissa leaves a wide safe window.

/// Rescale bound: mantissas are renormalized once their magnitude leaves
/// `[2^-512, 2^512]`, keeping every intermediate product representable.
pub const RESCALE_BOUND: f64 = 1.3407807929942597e154; // 2^512

/// A value represented as `mant * exp(log)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mant: f64,
    pub log: f64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { mant: 0.0, log: 0.0 };

    pub fn new(mant: f64, log: f64) -> Self {
        Scaled { mant, log }
    }

    pub fn from_value(v: f64) -> Self {
        Scaled { mant: v, log: 0.0 }
    }

    /// Collapse to a plain `f64`; may overflow to infinity or underflow to
    /// zero when the represented value leaves `f64` range.
    pub fn value(self) -> f64 {
        if self.mant == 0.0 {
            0.0
        } else {
            self.mant * self.log.exp()
        }
    }

    /// Natural log of the absolute value; `-inf` for zero.
    pub fn log_abs(self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.abs().ln() + self.log
        }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }

    /// Fold an out-of-window magnitude into the log part so that products
    /// of two squeezed mantissas can never overflow or underflow.
    fn squeezed(self) -> Scaled {
        let m = self.mant.abs();
        if m > 1e120 || (m > 0.0 && m < 1e-120) {
            Scaled { mant: self.mant / m, log: self.log + m.ln() }
        } else {
            self
        }
    }

    pub fn mul(self, other: Scaled) -> Scaled {
        let a = self.squeezed();
        let b = other.squeezed();
        Scaled {
            mant: a.mant * b.mant,
            log: a.log + b.log,
        }
    }

    pub fn scale_by(self, factor: f64) -> Scaled {
        Scaled {
            mant: self.mant * factor,
            log: self.log,
        }
    }

    /// Ratio of two scaled values as a plain f64.
    pub fn ratio(self, other: Scaled) -> f64 {
        let a = self.squeezed();
        let b = other.squeezed();
        (a.mant / b.mant) * (a.log - b.log).exp()
    }

    /// Pull the mantissa back into the safe window, preserving the value.
    pub fn normalized(mut self) -> Scaled {
        if self.mant == 0.0 {
            return Scaled::ZERO;
        }
        let a = self.mant.abs();
        if !(a < RESCALE_BOUND) || a < 1.0 / RESCALE_BOUND {
            let l = a.ln();
            self.log += l;
            self.mant /= a;
        }
        self
    }
}

/// The last two orthonormal polynomial values sharing one scale factor:
/// `p_{n-1} = u * exp(log_scale)` and `p_n = v * exp(log_scale)`.
///
/// Consecutive orthonormal polynomials never vanish simultaneously, so
/// `max(|u|, |v|) > 0` always holds and renormalization is well defined.
#[derive(Debug, Clone, Copy)]
pub struct ScaledPair {
    pub u: f64,
    pub v: f64,
    pub log_scale: f64,
}

impl ScaledPair {
    /// `p_{n-1}` as a plain f64 (may over/underflow).
    pub fn prev(&self) -> f64 {
        self.u * self.log_scale.exp()
    }

    /// `p_n` as a plain f64 (may over/underflow).
    pub fn current(&self) -> f64 {
        self.v * self.log_scale.exp()
    }

    pub fn prev_scaled(&self) -> Scaled {
        Scaled::new(self.u, self.log_scale)
    }

    pub fn current_scaled(&self) -> Scaled {
        Scaled::new(self.v, self.log_scale)
    }

    /// Renormalize so that `max(|u|, |v|)` lands in `[1, RESCALE_BOUND)`,
    /// if it has drifted outside the safe window.
    pub fn rescale_if_needed(&mut self) {
        let m = self.u.abs().max(self.v.abs());
        debug_assert!(m > 0.0, "consecutive orthonormal polynomials share a zero");
        if !(m < RESCALE_BOUND) || m < 1.0 / RESCALE_BOUND {
            self.u /= m;
            self.v /= m;
            self.log_scale += m.ln();
        }
    }
}

/// Streaming sum of scaled terms, kept in scaled representation so that the
/// partial sum itself may leave `f64` range.
#[derive(Debug, Clone, Copy)]
pub struct ScaledSum {
    mant: f64,
    log: f64,
    empty: bool,
}

impl Default for ScaledSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ScaledSum {
    pub fn new() -> Self {
        ScaledSum { mant: 0.0, log: 0.0, empty: true }
    }

    pub fn add(&mut self, term: Scaled) {
        if term.mant == 0.0 {
            return;
        }
        if self.empty || self.mant == 0.0 {
            self.mant = term.mant;
            self.log = term.log;
            self.empty = false;
        } else {
            let d = term.log - self.log;
            if d > 0.0 {
                // Incoming term carries the larger scale; rebase onto it.
                self.mant = self.mant * (-d).exp() + term.mant;
                self.log = term.log;
            } else {
                self.mant += term.mant * d.exp();
            }
        }
        let a = self.mant.abs();
        if a > 0.0 && (!(a < RESCALE_BOUND) || a < 1.0 / RESCALE_BOUND) {
            self.log += a.ln();
            self.mant /= a;
        }
    }

    pub fn scaled(&self) -> Scaled {
        if self.empty {
            Scaled::ZERO
        } else {
            Scaled::new(self.mant, self.log)
        }
    }

    pub fn value(&self) -> f64 {
        self.scaled().value()
    }
}
