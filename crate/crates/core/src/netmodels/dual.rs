use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Arithmetic needed by the network passes.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    /// `ln(1 + eᶻ)`
    fn softplus(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }

    fn value(self) -> f64 {
        self
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    fn sigmoid(self) -> Self {
        if self >= 0.0 {
            1.0 / (1.0 + (-self).exp())
        } else {
            let e = self.exp();
            e / (1.0 + e)
        }
    }

    fn softplus(self) -> Self {
        self.max(0.0) + (-self.abs()).exp().ln_1p()
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Dual::new(
            self.re / o.re,
            (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }

    fn value(self) -> f64 {
        self.re
    }

    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, self.eps * (1.0 - t * t))
    }

    fn sigmoid(self) -> Self {
        let s = Scalar::sigmoid(self.re);
        Dual::new(s, self.eps * s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        Dual::new(
            Scalar::softplus(self.re),
            self.eps * Scalar::sigmoid(self.re),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_derivatives() {
        let x = Dual::new(0.3, 1.0);
        let y = x * x / (x + Dual::cst(1.0));
        // d/dx x²/(x+1) = (x² + 2x)/(x+1)²
        assert!((y.eps - (0.09 + 0.6) / 1.69).abs() < 1e-15);
        assert!((x.tanh().eps - (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-15);
        assert!((x.softplus().eps - Scalar::sigmoid(0.3)).abs() < 1e-15);
        let s = Scalar::sigmoid(0.3);
        assert!((x.sigmoid().eps - s * (1.0 - s)).abs() < 1e-15);
    }

    #[test]
    fn stable_softplus_and_sigmoid() {
        assert_eq!(Scalar::softplus(800.0f64), 800.0);
        assert!(Scalar::softplus(-800.0f64) >= 0.0);
        assert!((Scalar::softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(Scalar::sigmoid(-800.0f64), 0.0);
        assert_eq!(Scalar::sigmoid(800.0f64), 1.0);
    }
}
