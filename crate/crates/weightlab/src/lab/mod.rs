//! Verification harness: operator-norm lower bounds, the quantitative
//! reverse Hölder and key-lemma checks, exact rough-exponent algebra, weight
//! sweeps with CSV/SVG reporting, and the named checks behind the CLI.

pub mod checks;
pub mod config;
pub mod rough;
pub mod svg;
pub mod sweep;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::linalg::spectral_norm;
use crate::weights::{ainf_fujii_wilson, aqinf_sc_constant, default_direction_budget, fractional_power, MatrixWeight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `L^p` norm with normalized measure: `( avg |v|^p )^{1/p}`.
pub fn lp_norm(f: &ScalarField, p: f64) -> f64 {
    let m = f.values().len() as f64;
    (f.values().iter().map(|&v| v.abs().powf(p)).sum::<f64>() / m).powf(1.0 / p)
}

fn lp_norm_vec(f: &VectorField, p: f64) -> f64 {
    lp_norm(&f.norm_field(), p)
}

/// Certified lower bound for the `L^p -> L^p` norm of a positively
/// homogeneous evaluator: max ratio over randomized test fields (Gaussian
/// cells, single-cell indicators, Rademacher-modulated ancestor chains),
/// each improved by coordinate ascent on cell values.
pub fn opnorm_lower_bound(
    evaluator: &dyn Fn(&VectorField) -> Result<ScalarField>,
    lattice: crate::grid::DyadicLattice,
    n: usize,
    p: f64,
    trials: usize,
    refine_steps: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = lattice.cell_count();
    let ratio = |f: &VectorField| -> Result<f64> {
        let denom = lp_norm_vec(f, p);
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok(lp_norm(&evaluator(f)?, p) / denom)
    };
    let mut best = 0.0f64;
    let mut best_field: Option<VectorField> = None;
    let mut consider = |f: VectorField, best: &mut f64, best_field: &mut Option<VectorField>| -> Result<()> {
        let r = ratio(&f)?;
        if r > *best {
            *best = r;
            *best_field = Some(f);
        }
        Ok(())
    };
    // Gaussian fields
    for _ in 0..trials {
        let f = VectorField::from_fn(lattice, n, |_, _| {
            // Box-Muller from two uniforms
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        consider(f, &mut best, &mut best_field)?;
    }
    // single-cell indicators on a deterministic stride
    let stride = (cells / 16).max(1);
    for c0 in (0..cells).step_by(stride) {
        let f = VectorField::from_fn(lattice, n, |c, k| {
            if c == c0 && k == 0 {
                1.0
            } else {
                0.0
            }
        });
        consider(f, &mut best, &mut best_field)?;
    }
    // Rademacher-modulated ancestor chains
    for _ in 0..trials {
        let x0 = rng.gen_range(0..cells);
        let signs: Vec<f64> = (0..=lattice.depth())
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let chain = lattice.cubes_containing(x0);
        let mut values = vec![0.0f64; cells * n];
        for (l, cube) in chain.iter().enumerate() {
            let weight = signs[l] / cube.cell_count(&lattice) as f64;
            for c in lattice.cells_in(cube) {
                values[c * n] += weight;
            }
        }
        consider(VectorField::new(lattice, n, values)?, &mut best, &mut best_field)?;
    }
    // coordinate ascent on the best field
    if let Some(mut f) = best_field {
        for _ in 0..refine_steps {
            let cell = rng.gen_range(0..cells);
            let comp = rng.gen_range(0..n);
            let old = f.get(cell)[comp];
            let factor = [1.5, 0.5, -1.0][rng.gen_range(0..3)];
            let mut v = f.get(cell).to_vec();
            v[comp] = old * factor + if old == 0.0 { 0.1 * factor } else { 0.0 };
            let mut candidate = f.clone();
            candidate.set(cell, &v);
            let r = ratio(&candidate)?;
            if r > best {
                best = r;
                f = candidate;
            }
        }
    }
    Ok(best)
}

/// Dense `L^2 -> L^2` norm of a linear operator given by its action, used as
/// a cross-check that the randomized lower bound never exceeds the truth.
pub fn dense_l2_norm(
    evaluator: &dyn Fn(&VectorField) -> Result<ScalarField>,
    lattice: crate::grid::DyadicLattice,
) -> Result<f64> {
    let m = lattice.cell_count();
    let mut dense = nalgebra::DMatrix::zeros(m, m);
    for y in 0..m {
        let e = VectorField::from_fn(lattice, 1, |c, _| if c == y { 1.0 } else { 0.0 });
        let col = evaluator(&e)?;
        for x in 0..m {
            dense[(x, y)] = col.get(x);
        }
    }
    Ok(spectral_norm(&dense))
}

/// Report of the key reverse-Hölder comparison for matrix weights:
/// `(<||W^{1/p}(x)W^{-1/p}(y)||^{rp}>_Q)^{1/rp}
///   <= c (<||W^{1/q}(x)W^{-1/q}(y)||^{q}>_Q)^{1/p}`
/// with `r = 1 + 1/(2^{d+11} [W]_{A_{q,inf}^{sc}})`.
#[derive(Clone, Debug)]
pub struct LemmaKeyReport {
    pub r: f64,
    pub aqinf_sc: f64,
    pub sup_ratio: f64,
}

pub fn verify_lemma_key(weight: &MatrixWeight, p: f64, q: f64) -> Result<LemmaKeyReport> {
    if !(1.0 <= q && q < p) {
        return Err(Error::Domain(format!(
            "lemma-key check needs 1 <= q < p, got q={q} p={p}"
        )));
    }
    let lat = *weight.lattice();
    let ksc = aqinf_sc_constant(weight, q, default_direction_budget(weight.n()))?.value;
    let r = 1.0 + 1.0 / (2f64.powi(lat.dim() as i32 + 11) * ksc);
    let wp_pos = fractional_power(weight, 1.0 / p)?;
    let wp_neg = fractional_power(weight, -1.0 / p)?;
    let wq_pos = fractional_power(weight, 1.0 / q)?;
    let wq_neg = fractional_power(weight, -1.0 / q)?;
    let mut sup = 0.0f64;
    for cube in lat.cubes() {
        let cells = lat.cells_in(&cube);
        let m = cells.len() as f64;
        for &y in &cells {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for &x in &cells {
                lhs += spectral_norm(&(wp_pos.mat(x) * wp_neg.mat(y))).powf(r * p);
                rhs += spectral_norm(&(wq_pos.mat(x) * wq_neg.mat(y))).powf(q);
            }
            let lhs = (lhs / m).powf(1.0 / (r * p));
            let rhs = (rhs / m).powf(1.0 / p);
            sup = sup.max(lhs / rhs);
        }
    }
    Ok(LemmaKeyReport {
        r,
        aqinf_sc: ksc,
        sup_ratio: sup,
    })
}

/// Margin report of the quantitative reverse Hölder inequality at
/// `delta = delta_multiplier / (2^{d+11} [w]_{A_inf})`.
#[derive(Clone, Debug)]
pub struct RhiReport {
    pub ainf: f64,
    pub delta: f64,
    /// Min over cubes of `(2<w>_Q - (<w^{1+δ}>_Q)^{1/(1+δ)}) / (2<w>_Q)`.
    pub worst_margin: f64,
    pub violations: usize,
}

pub fn verify_rhi(w: &ScalarField, delta_multiplier: f64) -> Result<RhiReport> {
    let lat = *w.lattice();
    let ainf = ainf_fujii_wilson(w)?;
    let delta = delta_multiplier / (2f64.powi(lat.dim() as i32 + 11) * ainf);
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    for cube in lat.cubes() {
        let cells = lat.cells_in(&cube);
        let m = cells.len() as f64;
        let avg: f64 = cells.iter().map(|&c| w.get(c)).sum::<f64>() / m;
        let lhs = (cells
            .iter()
            .map(|&c| w.get(c).powf(1.0 + delta))
            .sum::<f64>()
            / m)
            .powf(1.0 / (1.0 + delta));
        let margin = (2.0 * avg - lhs) / (2.0 * avg);
        worst = worst.min(margin);
        if margin < 0.0 {
            violations += 1;
        }
    }
    Ok(RhiReport {
        ainf,
        delta,
        worst_margin: worst,
        violations,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx).powi(2);
        dy += (ry[i] - my).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg_rank;
        }
        i = j + 1;
    }
    out
}
