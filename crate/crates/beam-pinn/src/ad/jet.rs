use super::AdError;

/// Highest supported truncation order.
pub const MAX_ORDER: usize = 4;

const FACTORIAL: [f64; MAX_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0];

fn check_order(order: usize) -> Result<(), AdError> {
    match order {
        0 | 1 | 2 | 4 => Ok(()),
        _ => Err(AdError::UnsupportedOrder(order)),
    }
}

/// A truncated univariate Taylor expansion with normalized coefficients:
/// `coeff[k] = f^(k)(x0) / k!`.
///
/// Only orders 0, 1, 2 and 4 are constructible; the residual of the beam
/// equation needs nothing else.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    order: usize,
    coeff: [f64; MAX_ORDER + 1],
}

impl Jet {
    /// Expansion of a constant: `[v, 0, ..., 0]`.
    pub fn constant(v: f64, order: usize) -> Result<Jet, AdError> {
        check_order(order)?;
        let mut coeff = [0.0; MAX_ORDER + 1];
        coeff[0] = v;
        Ok(Jet { order, coeff })
    }

    /// Expansion of the identity around `v`, seeding the differentiation
    /// direction: `[v, 1, 0, ..., 0]`.
    pub fn seed(v: f64, order: usize) -> Result<Jet, AdError> {
        check_order(order)?;
        if order == 0 {
            return Err(AdError::SeedOrderZero);
        }
        let mut coeff = [0.0; MAX_ORDER + 1];
        coeff[0] = v;
        coeff[1] = 1.0;
        Ok(Jet { order, coeff })
    }

    /// Builds a jet from explicit Taylor-normalized coefficients.
    pub fn from_coeffs(coeffs: &[f64]) -> Result<Jet, AdError> {
        let order = coeffs.len().checked_sub(1).ok_or(AdError::UnsupportedOrder(0))?;
        check_order(order)?;
        let mut coeff = [0.0; MAX_ORDER + 1];
        coeff[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Jet { order, coeff })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The Taylor-normalized coefficients, `order + 1` of them.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeff[..=self.order]
    }

    pub fn value(&self) -> f64 {
        self.coeff[0]
    }

    /// The `k`-th derivative, `k! * coeff[k]`. One multiply, no other rounding.
    pub fn derivative(&self, k: usize) -> Result<f64, AdError> {
        if k > self.order {
            return Err(AdError::DerivativeOutOfRange { index: k, order: self.order });
        }
        Ok(FACTORIAL[k] * self.coeff[k])
    }

    fn check_same_order(&self, other: &Jet) -> Result<(), AdError> {
        if self.order != other.order {
            return Err(AdError::OrderMismatch(self.order, other.order));
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, AdError> {
        self.check_same_order(other)?;
        let mut out = *self;
        for k in 0..=self.order {
            out.coeff[k] += other.coeff[k];
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, AdError> {
        self.check_same_order(other)?;
        let mut out = *self;
        for k in 0..=self.order {
            out.coeff[k] -= other.coeff[k];
        }
        Ok(out)
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Jet) -> Result<Jet, AdError> {
        self.check_same_order(other)?;
        let mut out = Jet { order: self.order, coeff: [0.0; MAX_ORDER + 1] };
        for k in 0..=self.order {
            let mut acc = 0.0;
            for i in 0..=k {
                acc += self.coeff[i] * other.coeff[k - i];
            }
            out.coeff[k] = acc;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = *self;
        for k in 0..=self.order {
            out.coeff[k] *= s;
        }
        out
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    /// `tanh` of the jet. Uses the auxiliary series `v = 1 - u^2` jointly with
    /// `u = tanh(a)` so no Faa di Bruno combinatorics are needed:
    /// `k u_k = sum_{j=1..k} j a_j v_{k-j}`.
    pub fn tanh(&self) -> Jet {
        self.tanh_with_deriv().0
    }

    /// `tanh` plus the jet of its derivative `1 - tanh^2`, which the tape's
    /// reverse pass needs.
    pub fn tanh_with_deriv(&self) -> (Jet, Jet) {
        let d = self.order;
        let mut u = Jet { order: d, coeff: [0.0; MAX_ORDER + 1] };
        let mut v = Jet { order: d, coeff: [0.0; MAX_ORDER + 1] };
        u.coeff[0] = self.coeff[0].tanh();
        v.coeff[0] = 1.0 - u.coeff[0] * u.coeff[0];
        for k in 1..=d {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += (j as f64) * self.coeff[j] * v.coeff[k - j];
            }
            u.coeff[k] = acc / k as f64;
            // v_k = -(u^2)_k
            let mut sq = 0.0;
            for i in 0..=k {
                sq += u.coeff[i] * u.coeff[k - i];
            }
            v.coeff[k] = -sq;
        }
        (u, v)
    }

    /// `sin` and `cos` of the jet, propagated as the coupled pair
    /// `s' = c * a'`, `c' = -s * a'`.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        self.sin_cos_with_base(self.coeff[0].sin(), self.coeff[0].cos())
    }

    /// Same recurrence, but with the base values supplied by the caller.
    /// Lets the model substitute argument-reduced `sin(pi z)` values so
    /// boundary zeros stay exact.
    pub fn sin_cos_with_base(&self, s0: f64, c0: f64) -> (Jet, Jet) {
        let d = self.order;
        let mut s = Jet { order: d, coeff: [0.0; MAX_ORDER + 1] };
        let mut c = Jet { order: d, coeff: [0.0; MAX_ORDER + 1] };
        s.coeff[0] = s0;
        c.coeff[0] = c0;
        for k in 1..=d {
            let mut acc_s = 0.0;
            let mut acc_c = 0.0;
            for j in 1..=k {
                let ja = (j as f64) * self.coeff[j];
                acc_s += ja * c.coeff[k - j];
                acc_c += ja * s.coeff[k - j];
            }
            s.coeff[k] = acc_s / k as f64;
            c.coeff[k] = -acc_c / k as f64;
        }
        (s, c)
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos().1
    }

    pub(crate) fn raw(&self) -> &[f64; MAX_ORDER + 1] {
        &self.coeff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_has_zero_derivatives() {
        let j = Jet::constant(3.0, 2).unwrap();
        assert_eq!(j.coeffs(), &[3.0, 0.0, 0.0]);
        let j = Jet::constant(0.0, 4).unwrap();
        assert_eq!(j.coeffs(), &[0.0; 5]);
        let j = Jet::constant(-1.5, 0).unwrap();
        assert_eq!(j.coeffs(), &[-1.5]);
    }

    #[test]
    fn constant_rejects_order_three() {
        assert!(matches!(Jet::constant(1.0, 3), Err(AdError::UnsupportedOrder(3))));
        assert!(matches!(Jet::constant(1.0, 5), Err(AdError::UnsupportedOrder(5))));
    }

    #[test]
    fn seed_is_identity_expansion() {
        assert_eq!(Jet::seed(0.5, 4).unwrap().coeffs(), &[0.5, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(Jet::seed(0.0, 2).unwrap().coeffs(), &[0.0, 1.0, 0.0]);
        assert_eq!(Jet::seed(10.0, 1).unwrap().coeffs(), &[10.0, 1.0]);
    }

    #[test]
    fn seed_rejects_order_zero() {
        assert!(matches!(Jet::seed(1.0, 0), Err(AdError::SeedOrderZero)));
    }

    #[test]
    fn cauchy_product() {
        // (1+t)(2+t^2) = 2 + 2t + t^2 + t^3
        let a = Jet::from_coeffs(&[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Jet::from_coeffs(&[2.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.mul(&b).unwrap().coeffs(), &[2.0, 2.0, 1.0, 1.0, 0.0]);
        // (1+t)^2
        assert_eq!(a.mul(&a).unwrap().coeffs(), &[1.0, 2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn add_and_order_mismatch() {
        let a = Jet::from_coeffs(&[1.0, 1.0, 0.0]).unwrap();
        let b = Jet::from_coeffs(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().coeffs(), &[1.0, 1.0, 1.0]);
        let c = Jet::constant(1.0, 4).unwrap();
        assert!(matches!(a.add(&c), Err(AdError::OrderMismatch(2, 4))));
        assert!(matches!(a.mul(&c), Err(AdError::OrderMismatch(2, 4))));
    }

    #[test]
    fn tanh_maclaurin() {
        // tanh(t) = t - t^3/3 + ...
        let u = Jet::seed(0.0, 4).unwrap().tanh();
        let expect = [0.0, 1.0, 0.0, -1.0 / 3.0, 0.0];
        for (k, e) in expect.iter().enumerate() {
            assert_relative_eq!(u.coeffs()[k], *e, epsilon = 1e-14);
        }
    }

    #[test]
    fn sin_at_half_pi() {
        // sin(pi/2 + t) = cos(t) = 1 - t^2/2 + t^4/24
        let s = Jet::seed(std::f64::consts::FRAC_PI_2, 4).unwrap().sin();
        let expect = [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0];
        for (k, e) in expect.iter().enumerate() {
            assert_relative_eq!(s.coeffs()[k], *e, epsilon = 1e-14);
        }
    }

    #[test]
    fn cos_maclaurin() {
        let c = Jet::seed(0.0, 4).unwrap().cos();
        let expect = [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0];
        for (k, e) in expect.iter().enumerate() {
            assert_relative_eq!(c.coeffs()[k], *e, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_conversion() {
        let j = Jet::from_coeffs(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(j.derivative(0).unwrap(), 1.0);
        assert_eq!(j.derivative(2).unwrap(), 6.0);
        assert_eq!(j.derivative(4).unwrap(), 120.0);
        assert!(j.derivative(5).is_err());
    }

    #[test]
    fn tanh_deriv_jet_matches_identity() {
        // v must equal 1 - u^2 as a jet
        let a = Jet::from_coeffs(&[0.3, 1.0, -0.2, 0.1, 0.05]).unwrap();
        let (u, v) = a.tanh_with_deriv();
        let one = Jet::constant(1.0, 4).unwrap();
        let check = one.sub(&u.mul(&u).unwrap()).unwrap();
        for k in 0..=4 {
            assert_relative_eq!(v.coeffs()[k], check.coeffs()[k], epsilon = 1e-13);
        }
    }
}
