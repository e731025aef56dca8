//! Exact rational algebra of the rough-integral exponents: tau, epsilon, s,
//! the denominator identity and the maximal-operator gap bound.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// The exponent triple of the rough-integral reduction, all exact rationals:
/// `tau = 8 * 2^{d+11}`, `eps = 1/(p (p/(p-q)) tau K)`,
/// `s = 1 + 1/(p' (p/(p-q)) (tau-2) K)`.
#[derive(Clone, Debug)]
pub struct RoughExponents {
    pub p: BigRational,
    pub q: BigRational,
    pub d: u8,
    pub k: BigRational,
    pub tau: BigRational,
    pub epsilon: BigRational,
    pub s: BigRational,
}

/// Exact certificates derived from the exponents.
#[derive(Clone, Debug)]
pub struct RoughCertificate {
    /// `(ps-1) - s(p-1)(1+eps) == ((p-1) eps / (tau-2)) (2 - (p-1) tau eps)`,
    /// verified as an exact rational identity.
    pub identity_holds: bool,
    /// `(p-1) tau eps`, certified `<= 1`.
    pub epsilon_product: BigRational,
    pub epsilon_product_ok: bool,
    /// `(1+eps) s <= 1 + 1/(2^{d+11} K)`.
    pub s_bound_ok: bool,
    /// `1/(p' - (ps)'(1+eps))`, exact; positive by the identity above.
    pub inverse_gap: BigRational,
    /// `(ps-1)(tau-2)/(eps p)`; certified `>= inverse_gap`.
    pub gap_bound: BigRational,
    pub bound_holds: bool,
    /// `gap_bound / K`: the constant of the `<~ K` claim, decreasing in `K`.
    pub ratio_to_k: BigRational,
}

/// Computes the exponents and certifies the displayed algebra exactly.
pub fn rough_exponents(
    p: &BigRational,
    q: &BigRational,
    d: u8,
    k: &BigRational,
) -> Result<(RoughExponents, RoughCertificate)> {
    let one = BigRational::one();
    if !(p > &one) {
        return Err(Error::Domain(format!("rough exponents need p > 1, got {p}")));
    }
    if !(q >= &one && q < p) {
        return Err(Error::Domain(format!(
            "rough exponents need 1 <= q < p, got q={q}, p={p}"
        )));
    }
    if k < &one {
        return Err(Error::Domain(format!("rough exponents need K >= 1, got {k}")));
    }
    let two_pow = BigRational::from_integer(BigInt::from(2).pow(d as u32 + 11));
    let tau = big(8) * &two_pow;
    let m = p / (p - q); // p/(p-q)
    let p_conj = p / (p - &one);
    let epsilon = one.clone() / (p * &m * &tau * k);
    let s = &one + one.clone() / (&p_conj * &m * (&tau - big(2)) * k);

    // denominator identity
    let ps = p * &s;
    let lhs = (&ps - &one) - &s * (p - &one) * (&one + &epsilon);
    let eps_prod = (p - &one) * &tau * &epsilon;
    let rhs = (p - &one) * &epsilon / (&tau - big(2)) * (big(2) - &eps_prod);
    let identity_holds = lhs == rhs;

    // (1+eps)s <= 1 + 1/(2^{d+11} K)
    let s_bound_ok = (&one + &epsilon) * &s <= &one + one.clone() / (&two_pow * k);

    // 1/(p' - (ps)'(1+eps)) and its bound
    let ps_conj = &ps / (&ps - &one);
    let gap = &p_conj - ps_conj * (&one + &epsilon);
    if gap <= BigRational::from_integer(BigInt::from(0)) {
        return Err(Error::Domain(
            "maximal-operator exponent gap is not positive".into(),
        ));
    }
    let inverse_gap = one.clone() / gap;
    let gap_bound = (&ps - &one) * (&tau - big(2)) / (&epsilon * p);
    let bound_holds = inverse_gap <= gap_bound;
    let ratio_to_k = &gap_bound / k;

    let exps = RoughExponents {
        p: p.clone(),
        q: q.clone(),
        d,
        k: k.clone(),
        tau,
        epsilon: epsilon.clone(),
        s,
    };
    let cert = RoughCertificate {
        identity_holds,
        epsilon_product: eps_prod.clone(),
        epsilon_product_ok: eps_prod <= one,
        s_bound_ok,
        inverse_gap,
        gap_bound,
        bound_holds,
        ratio_to_k,
    };
    Ok((exps, cert))
}
