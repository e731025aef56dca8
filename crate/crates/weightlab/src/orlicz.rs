//! Power-type Young functions, Luxemburg averages, the associated maximal
//! operators with their L^p bounds, and the nested bump norms of the
//! sparse-operator lemmas.

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, ScalarField};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A Young function `A(t) = scale * t^exponent` with `exponent >= 1`,
/// `scale > 0`. Plain powers have `scale = 1`; `exponent = 1` is the plain
/// average (used as the `s -> 1` limit of the maximal operators).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungFunction {
    exponent: f64,
    scale: f64,
}

impl YoungFunction {
    pub fn power(exponent: f64) -> Result<Self> {
        Self::scaled_power(1.0, exponent)
    }

    pub fn scaled_power(scale: f64, exponent: f64) -> Result<Self> {
        if !(exponent >= 1.0) || !exponent.is_finite() {
            return Err(Error::Domain(format!(
                "Young function needs exponent >= 1, got {exponent}"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!(
                "Young function needs scale > 0, got {scale}"
            )));
        }
        Ok(Self { exponent, scale })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.scale * t.powf(self.exponent)
    }

    pub fn inverse(&self, t: f64) -> f64 {
        (t / self.scale).powf(1.0 / self.exponent)
    }

    /// The associated Young function, constants dropped: the conjugate of a
    /// power `t^s` is the power `t^{s'}` with `s' = s/(s-1)`.
    pub fn conjugate(&self) -> Result<YoungFunction> {
        if self.exponent <= 1.0 {
            return Err(Error::Domain(
                "conjugate of a power Young function needs exponent > 1".into(),
            ));
        }
        YoungFunction::power(self.exponent / (self.exponent - 1.0))
    }
}

/// Luxemburg average over uniform cell values: the smallest `lambda` with
/// `avg A(|v|/lambda) <= 1`. For the power kind this is the closed form
/// `scale^{1/s} (avg |v|^s)^{1/s}`.
pub fn luxemburg_norm_values(values: &[f64], a: &YoungFunction) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("Luxemburg norm of a non-finite field".into()));
    }
    if values.is_empty() || values.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let s = a.exponent;
    let mean: f64 =
        values.iter().map(|&v| v.abs().powf(s)).sum::<f64>() / values.len() as f64;
    Ok(a.scale.powf(1.0 / s) * mean.powf(1.0 / s))
}

/// Luxemburg average by bisection, exploiting that `avg A(|v|/lambda)` is
/// decreasing in `lambda`. Serves as the independent oracle for the closed
/// form.
pub fn luxemburg_norm_bisect(values: &[f64], a: &YoungFunction) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("Luxemburg norm of a non-finite field".into()));
    }
    let vmax = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let m = values.len() as f64;
    let feasible = |lambda: f64| -> bool {
        let avg: f64 = values.iter().map(|&v| a.eval(v.abs() / lambda)).sum::<f64>() / m;
        avg <= 1.0
    };
    // At lambda = vmax / A^{-1}(1) every term is <= 1, so the average is <= 1.
    let mut hi = vmax / a.inverse(1.0);
    // A single cell at vmax already pushes the average above 1 here.
    let mut lo = vmax / a.inverse(4.0 * m);
    debug_assert!(feasible(hi));
    for _ in 0..200 {
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `||f||_{A,Q}` over the cells of a cube.
pub fn luxemburg_norm(f: &ScalarField, a: &YoungFunction, cube: &DyadicCube) -> Result<f64> {
    f.lattice().check_cube(cube)?;
    let vals: Vec<f64> = f.lattice().cells_in(cube).iter().map(|&c| f.get(c)).collect();
    luxemburg_norm_values(&vals, a)
}

/// The Orlicz maximal field `M_A f(x) = sup_{Q ∋ x} ||f||_{A,Q}` (dyadic).
pub fn ma_maximal(f: &ScalarField, a: &YoungFunction) -> ScalarField {
    let lattice = *f.lattice();
    let s = a.exponent;
    let powered = f.map(|v| v.abs().powf(s));
    let avgs = powered.cube_averages();
    let scale = a.scale.powf(1.0 / s);
    ScalarField::from_fn(lattice, |cell| {
        let mut best = 0.0f64;
        for cube in lattice.cubes_containing(cell) {
            best = best.max(avgs[lattice.cube_id(&cube)]);
        }
        scale * best.powf(1.0 / s)
    })
}

/// The L^p bound of `M_A` in its integral form
/// `( ∫_1^∞ A(t) t^{-p} dt/t )^{1/p} = (scale/(p-s))^{1/p}` with the
/// dimensional constant normalized to 1; `+inf` when `s >= p`.
pub fn ma_norm_bound(a: &YoungFunction, p: f64) -> f64 {
    if a.exponent >= p {
        return f64::INFINITY;
    }
    (a.scale / (p - a.exponent)).powf(1.0 / p)
}

/// A bound for `||M_A||_{L^p -> L^p}` that provably holds for the dyadic
/// operator: Doob's inequality gives `||M||_{L^r} <= r'`, hence
/// `||M_A f||_p <= (p/(p-s))^{1/s} ||f||_p` for `A(t) = t^s`, `s < p`.
pub fn ma_doob_bound(a: &YoungFunction, p: f64) -> f64 {
    if a.exponent >= p {
        return f64::INFINITY;
    }
    a.scale.powf(1.0 / a.exponent) * (p / (p - a.exponent)).powf(1.0 / a.exponent)
}

/// Order of the nested Luxemburg norms in [`nested_bump_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BumpOrder {
    /// Inner norm in the first (x, row) variable, outer in the second: kappa_1.
    XThenY,
    /// Inner norm in the second (y, column) variable, outer in the first: kappa_2.
    YThenX,
}

/// Nested bump norm of a nonnegative kernel on `Q x Q`: rows index `x`,
/// columns index `y`, uniform cell measure. `XThenY` computes
/// `|| ||K(.,y)||_{A,Q} ||_{B,Q}` and `YThenX` the swapped order.
pub fn nested_bump_norm(
    kernel: &DMatrix<f64>,
    a: &YoungFunction,
    b: &YoungFunction,
    order: BumpOrder,
) -> Result<f64> {
    let (rows, cols) = kernel.shape();
    match order {
        BumpOrder::XThenY => {
            let mut inner = Vec::with_capacity(cols);
            for y in 0..cols {
                let col: Vec<f64> = (0..rows).map(|x| kernel[(x, y)]).collect();
                inner.push(luxemburg_norm_values(&col, a)?);
            }
            luxemburg_norm_values(&inner, b)
        }
        BumpOrder::YThenX => {
            let mut inner = Vec::with_capacity(rows);
            for x in 0..rows {
                let row: Vec<f64> = (0..cols).map(|y| kernel[(x, y)]).collect();
                inner.push(luxemburg_norm_values(&row, b)?);
            }
            luxemburg_norm_values(&inner, a)
        }
    }
}

/// The paper's Young-function choices for the sparse bump bounds, built from
/// the lattice dimension and the relevant scalar-A_inf constant `K`.
pub mod choices {
    use super::YoungFunction;
    use crate::error::Result;

    /// `r = 1 + 1/(2^{d+11} K)`.
    pub fn bump_r(d: u8, k: f64) -> f64 {
        1.0 + 1.0 / (2f64.powi(d as i32 + 11) * k)
    }

    /// A_1-type choice: `A(t) = t^{rp}`, `B-bar(t) = t^{(p+1)/2}` (so
    /// `B ~ t^{(p+1)/(p-1)}`). Returned as `(A, B)`.
    pub fn a1_pair(p: f64, d: u8, k: f64) -> Result<(YoungFunction, YoungFunction)> {
        let r = bump_r(d, k);
        let a = YoungFunction::power(r * p)?;
        let b = YoungFunction::power((p + 1.0) / (p - 1.0))?;
        Ok((a, b))
    }

    /// A_1 commutator choice: x-side pair `A(t) = t^{sp}` with `s = (r+1)/2`,
    /// `B ~ t^{(p+1)/(p-1)}`; y-side pair `C(t) = t^{rp}`, `D ~ t^{(p+1)/(p-1)}`.
    /// Returned as `(A, B, C, D)`.
    pub fn a1_comm_quadruple(
        p: f64,
        d: u8,
        k: f64,
    ) -> Result<(YoungFunction, YoungFunction, YoungFunction, YoungFunction)> {
        let r = bump_r(d, k);
        let s = (r + 1.0) / 2.0;
        let a = YoungFunction::power(s * p)?;
        let b = YoungFunction::power((p + 1.0) / (p - 1.0))?;
        let c = YoungFunction::power(r * p)?;
        let dd = YoungFunction::power((p + 1.0) / (p - 1.0))?;
        Ok((a, b, c, dd))
    }

    /// A_q-type choice (`1 < q < p`): `A(t) = t^{rp}`, `B(t) = t^{q'}`.
    pub fn aq_pair(p: f64, q: f64, d: u8, k: f64) -> Result<(YoungFunction, YoungFunction)> {
        let r = bump_r(d, k);
        let a = YoungFunction::power(r * p)?;
        let b = YoungFunction::power(q / (q - 1.0))?;
        Ok((a, b))
    }

    /// A_q commutator choice: `A(t) = t^{sp}` with `s = (r+1)/2`, `B(t) = t^{q'}`,
    /// `C(t) = t^{rp}`, `D(t) = t^{q'}`.
    pub fn aq_comm_quadruple(
        p: f64,
        q: f64,
        d: u8,
        k: f64,
    ) -> Result<(YoungFunction, YoungFunction, YoungFunction, YoungFunction)> {
        let r = bump_r(d, k);
        let s = (r + 1.0) / 2.0;
        let a = YoungFunction::power(s * p)?;
        let b = YoungFunction::power(q / (q - 1.0))?;
        let c = YoungFunction::power(r * p)?;
        let dd = YoungFunction::power(q / (q - 1.0))?;
        Ok((a, b, c, dd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DyadicLattice;
    use rand::{Rng, SeedableRng};

    #[test]
    fn conjugate_exponents() {
        let a = YoungFunction::power(2.0).unwrap();
        assert_eq!(a.conjugate().unwrap().exponent(), 2.0);

        // B-bar(t) = t^{(p+1)/2} with p = 3 conjugates to exponent (p+1)/(p-1) = 2
        let p = 3.0;
        let bbar = YoungFunction::power((p + 1.0) / 2.0).unwrap();
        let b = bbar.conjugate().unwrap();
        assert!((b.exponent() - (p + 1.0) / (p - 1.0)).abs() < 1e-14);

        // involution on the exponent
        let a = YoungFunction::power(2.7).unwrap();
        assert!((a.conjugate().unwrap().conjugate().unwrap().exponent() - 2.7).abs() < 1e-12);

        assert!(YoungFunction::power(1.0).unwrap().conjugate().is_err());
        assert!(YoungFunction::power(0.5).is_err());
    }

    #[test]
    fn young_inverse_product_bracket() {
        for s in [1.5, 2.0, 3.7] {
            let a = YoungFunction::power(s).unwrap();
            let ab = a.conjugate().unwrap();
            for t in [0.1, 1.0, 10.0] {
                let prod = a.inverse(t) * ab.inverse(t);
                assert!(t <= prod + 1e-12 && prod <= 2.0 * t + 1e-12, "s={s} t={t}");
            }
        }
    }

    #[test]
    fn luxemburg_constant_field_and_indicator() {
        let lat = DyadicLattice::new(1, 4).unwrap();
        let c = ScalarField::constant(lat, 3.25);
        for s in [1.0, 2.0, 2.7] {
            let a = YoungFunction::power(s).unwrap();
            let v = luxemburg_norm(&c, &a, &lat.root()).unwrap();
            assert!((v - 3.25).abs() < 1e-12, "s={s}");
        }
        // indicator of half of Q with A(t) = t^2 gives (1/2)^{1/2}
        let half = lat.cell_count() / 2;
        let ind = ScalarField::from_fn(lat, |c| if c < half { 1.0 } else { 0.0 });
        let a2 = YoungFunction::power(2.0).unwrap();
        let v = luxemburg_norm(&ind, &a2, &lat.root()).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisection_matches_closed_form() {
        let lat = DyadicLattice::new(1, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = YoungFunction::power(2.7).unwrap();
        for _ in 0..10 {
            let f = ScalarField::from_fn(lat, |_| rng.gen_range(0.0..5.0));
            let vals: Vec<f64> = (0..lat.cell_count()).map(|c| f.get(c)).collect();
            let closed = luxemburg_norm_values(&vals, &a).unwrap();
            let bisect = luxemburg_norm_bisect(&vals, &a).unwrap();
            assert!((closed - bisect).abs() < 1e-10 * closed.max(1.0));
        }
        // zero field
        assert_eq!(luxemburg_norm_bisect(&[0.0, 0.0], &a).unwrap(), 0.0);
        // non-finite input
        assert!(luxemburg_norm_values(&[1.0, f64::NAN], &a).is_err());
    }

    #[test]
    fn feasibility_is_tight_at_the_returned_lambda() {
        // eq. (continuity): at the returned lambda the average is in [1-1e-8, 1]
        let lat = DyadicLattice::new(1, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for s in [1.3, 2.0, 3.1] {
            let a = YoungFunction::power(s).unwrap();
            let f = ScalarField::from_fn(lat, |_| rng.gen_range(0.1..5.0));
            let vals: Vec<f64> = (0..lat.cell_count()).map(|c| f.get(c)).collect();
            let lam = luxemburg_norm_values(&vals, &a).unwrap();
            let avg: f64 = vals.iter().map(|&v| a.eval(v.abs() / lam)).sum::<f64>()
                / vals.len() as f64;
            assert!(avg <= 1.0 + 1e-10 && avg >= 1.0 - 1e-8, "s={s} avg={avg}");
        }
    }

    #[test]
    fn luxemburg_homogeneous_and_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = YoungFunction::power(1.8).unwrap();
        for _ in 0..50 {
            let v: Vec<f64> = (0..32).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lam: f64 = rng.gen_range(0.1..4.0);
            let scaled: Vec<f64> = v.iter().map(|&x| lam * x).collect();
            let n0 = luxemburg_norm_values(&v, &a).unwrap();
            let n1 = luxemburg_norm_values(&scaled, &a).unwrap();
            assert!((n1 - lam * n0).abs() < 1e-11 * (1.0 + n0));
            let bigger: Vec<f64> = v.iter().map(|&x| x * 1.5).collect();
            assert!(luxemburg_norm_values(&bigger, &a).unwrap() >= n0);
        }
    }

    #[test]
    fn generalized_holder_on_random_fields() {
        let lat = DyadicLattice::new(1, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for s in [1.4, 2.0, 3.0] {
            let a = YoungFunction::power(s).unwrap();
            let ab = a.conjugate().unwrap();
            let f = ScalarField::from_fn(lat, |_| rng.gen_range(-2.0..2.0));
            let g = ScalarField::from_fn(lat, |_| rng.gen_range(-2.0..2.0));
            for cube in lat.cubes() {
                let cells = lat.cells_in(&cube);
                let prod: f64 = cells
                    .iter()
                    .map(|&c| (f.get(c) * g.get(c)).abs())
                    .sum::<f64>()
                    / cells.len() as f64;
                let nf = luxemburg_norm(&f, &a, &cube).unwrap();
                let ng = luxemburg_norm(&g, &ab, &cube).unwrap();
                assert!(prod <= 2.0 * nf * ng + 1e-12);
            }
        }
    }

    #[test]
    fn ma_maximal_reductions() {
        let lat = DyadicLattice::new(1, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let f = ScalarField::from_fn(lat, |_| rng.gen_range(-2.0..2.0));

        // A(t) = t is the plain dyadic maximal of |f|
        let a1 = YoungFunction::power(1.0).unwrap();
        let m1 = ma_maximal(&f, &a1);
        let avgs = f.map(f64::abs).cube_averages();
        for cell in 0..lat.cell_count() {
            let want = lat
                .cubes_containing(cell)
                .iter()
                .map(|q| avgs[lat.cube_id(q)])
                .fold(0.0f64, f64::max);
            assert!((m1.get(cell) - want).abs() < 1e-13);
        }

        // constants are fixed points
        let c = ScalarField::constant(lat, 1.7);
        let a = YoungFunction::power(2.3).unwrap();
        let mc = ma_maximal(&c, &a);
        assert!(mc.values().iter().all(|&v| (v - 1.7).abs() < 1e-12));

        // A(t) = t^2 equals sqrt of plain maximal of f^2
        let a2 = YoungFunction::power(2.0).unwrap();
        let m2 = ma_maximal(&f, &a2);
        let m_sq = ma_maximal(&f.map(|v| v * v), &a1);
        for cell in 0..lat.cell_count() {
            assert!((m2.get(cell) - m_sq.get(cell).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn ma_norm_bound_values() {
        // A(t) = t, p = 2: integral = 1
        let a1 = YoungFunction::power(1.0).unwrap();
        assert!((ma_norm_bound(&a1, 2.0) - 1.0).abs() < 1e-14);

        // B-bar(t) = t^{(p+1)/2}: bound (2/(p-1))^{1/p}
        for p in [1.5, 2.0, 3.0, 5.0] {
            let bbar = YoungFunction::power((p + 1.0) / 2.0).unwrap();
            let want = (2.0 / (p - 1.0)).powf(1.0 / p);
            assert!((ma_norm_bound(&bbar, p) - want).abs() < 1e-13, "p={p}");
        }

        // divergent at the threshold
        let a = YoungFunction::power(2.0).unwrap();
        assert!(ma_norm_bound(&a, 2.0).is_infinite());
    }

    #[test]
    fn ma_conjugate_bound_growth_in_k() {
        // conjugate of A(t) = t^{rp} on L^{p'} grows like p^{1/p'} K^{1/p'}
        let d = 1u8;
        for p in [1.5, 2.0, 3.0] {
            let pc = p / (p - 1.0);
            for k in [1.0, 10.0, 100.0] {
                let (a, _) = choices::a1_pair(p, d, k).unwrap();
                let abar = a.conjugate().unwrap();
                let bound = ma_norm_bound(&abar, pc);
                let cap = 2f64.powi(d as i32 + 12) * p.powf(1.0 / pc) * k.powf(1.0 / pc);
                assert!(bound.is_finite());
                assert!(bound <= cap, "p={p} K={k}: {bound} > {cap}");
            }
        }
    }

    #[test]
    fn nested_bump_norm_constants_and_separable() {
        let a = YoungFunction::power(2.0).unwrap();
        let b = YoungFunction::power(3.0).unwrap();
        let ones = DMatrix::from_element(8, 8, 1.0);
        for order in [BumpOrder::XThenY, BumpOrder::YThenX] {
            assert!((nested_bump_norm(&ones, &a, &b, order).unwrap() - 1.0).abs() < 1e-12);
        }
        // K(x,y) = u(x): kappa_1 is the A-norm of u regardless of B
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..2.0)).collect();
        let k = DMatrix::from_fn(8, 8, |x, _| u[x]);
        let got = nested_bump_norm(&k, &a, &b, BumpOrder::XThenY).unwrap();
        let want = luxemburg_norm_values(&u, &a).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn nested_bump_norm_matches_mixed_norm_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let a = YoungFunction::power(1.7).unwrap();
        let b = YoungFunction::power(2.4).unwrap();
        let m = 16usize;
        let k = DMatrix::from_fn(m, m, |_, _| rng.gen_range(0.0..3.0));
        // iterated closed-form mixed norm (<(<K^a>_x)^{b/a}>_y)^{1/b}
        let (sa, sb) = (a.exponent(), b.exponent());
        let mut outer = 0.0;
        for y in 0..m {
            let inner: f64 = (0..m).map(|x| f64::powf(k[(x, y)], sa)).sum::<f64>() / m as f64;
            outer += inner.powf(sb / sa);
        }
        let want = (outer / m as f64).powf(1.0 / sb);
        let got = nested_bump_norm(&k, &a, &b, BumpOrder::XThenY).unwrap();
        assert!((got - want).abs() < 1e-10 * want);
    }
}
