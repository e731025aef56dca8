//! Matrix weights and their characteristics: the Roudenko-style A_p constant,
//! the Frazier–Roudenko matrix A_1 constant, the Fujii–Wilson A_inf constant,
//! and the scalar-A_inf classes obtained by sweeping directions. Also houses
//! the parametric weight generators used by sweeps.
//!
//! Matrix norms are spectral norms throughout; `ess sup`/`ess inf` over a cube
//! are max/min over its finest cells, which is exact for cellwise-constant
//! fields.

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, DyadicLattice, ScalarField};
use crate::linalg::{direction_grid, spd_power_eig, spectral_norm, sym_eigen, SymEigen};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Symmetry tolerance accepted at construction.
const SYMMETRY_TOL: f64 = 1e-12;

/// A matrix-valued field (not necessarily positive), one `n x n` matrix per
/// finest cell. Results of fractional powers live here.
#[derive(Clone, Debug)]
pub struct MatrixField {
    lattice: DyadicLattice,
    n: usize,
    mats: Vec<DMatrix<f64>>,
}

impl MatrixField {
    pub fn new(lattice: DyadicLattice, n: usize, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != lattice.cell_count() {
            return Err(Error::Domain(format!(
                "matrix field has {} cells, lattice has {}",
                mats.len(),
                lattice.cell_count()
            )));
        }
        if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Domain("matrix field shape mismatch".into()));
        }
        Ok(Self { lattice, n, mats })
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mat(&self, cell: usize) -> &DMatrix<f64> {
        &self.mats[cell]
    }

    /// Cellwise average over a cube (entrywise).
    pub fn average(&self, cube: &DyadicCube) -> Result<DMatrix<f64>> {
        self.lattice.check_cube(cube)?;
        let cells = self.lattice.cells_in(cube);
        let mut acc = DMatrix::zeros(self.n, self.n);
        for &c in &cells {
            acc += &self.mats[c];
        }
        Ok(acc / cells.len() as f64)
    }
}

/// A positive-definite matrix weight: symmetric SPD matrix per finest cell,
/// with cached eigendecompositions.
#[derive(Clone, Debug)]
pub struct MatrixWeight {
    lattice: DyadicLattice,
    n: usize,
    mats: Vec<DMatrix<f64>>,
    eig: Vec<SymEigen>,
}

impl MatrixWeight {
    pub fn new(lattice: DyadicLattice, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.is_empty() || mats.len() != lattice.cell_count() {
            return Err(Error::InvalidWeight(format!(
                "weight has {} cells, lattice has {}",
                mats.len(),
                lattice.cell_count()
            )));
        }
        let n = mats[0].nrows();
        let mut eig = Vec::with_capacity(mats.len());
        for (cell, m) in mats.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidWeight("inconsistent matrix sizes".into()));
            }
            let scale = 1.0 + m.norm();
            if !crate::linalg::is_symmetric(m, SYMMETRY_TOL * scale) {
                return Err(Error::InvalidWeight(format!(
                    "cell {cell} matrix is not symmetric"
                )));
            }
            let e = sym_eigen(m);
            if e.values.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
                return Err(Error::InvalidWeight(format!(
                    "cell {cell} has non-positive spectrum {:?}",
                    e.values.as_slice()
                )));
            }
            eig.push(e);
        }
        Ok(Self { lattice, n, mats, eig })
    }

    pub fn identity(lattice: DyadicLattice, n: usize) -> Self {
        let mats = vec![DMatrix::identity(n, n); lattice.cell_count()];
        Self::new(lattice, mats).expect("identity weight is valid")
    }

    pub fn from_scalar(w: &ScalarField) -> Result<Self> {
        let mats = w
            .values()
            .iter()
            .map(|&v| DMatrix::from_element(1, 1, v))
            .collect();
        Self::new(*w.lattice(), mats)
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mat(&self, cell: usize) -> &DMatrix<f64> {
        &self.mats[cell]
    }

    pub fn eigen(&self, cell: usize) -> &SymEigen {
        &self.eig[cell]
    }

    /// The scalar field `w` when `n = 1`.
    pub fn scalar(&self) -> Result<ScalarField> {
        if self.n != 1 {
            return Err(Error::Domain("scalar() needs n = 1".into()));
        }
        ScalarField::new(self.lattice, self.mats.iter().map(|m| m[(0, 0)]).collect())
    }

    /// `W^a` as a matrix weight (the power of an SPD matrix is SPD).
    pub fn power_weight(&self, a: f64) -> Result<MatrixWeight> {
        let mats = self
            .eig
            .iter()
            .map(|e| spd_power_eig(e, a))
            .collect::<Result<Vec<_>>>()?;
        MatrixWeight::new(self.lattice, mats)
    }
}

/// Cellwise `W^a` via eigendecomposition: `U diag(λ_i^a) U^T` per cell.
pub fn fractional_power(weight: &MatrixWeight, a: f64) -> Result<MatrixField> {
    let mats = weight
        .eig
        .iter()
        .map(|e| spd_power_eig(e, a))
        .collect::<Result<Vec<_>>>()?;
    MatrixField::new(weight.lattice, weight.n, mats)
}

fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

fn sweep_cubes(lattice: &DyadicLattice, depth_cap: Option<u32>) -> Vec<DyadicCube> {
    let cap = depth_cap.unwrap_or(lattice.depth()).min(lattice.depth());
    lattice
        .cubes()
        .into_iter()
        .filter(|q| q.level() <= cap)
        .collect()
}

/// The matrix A_p characteristic
/// `sup_Q avg_x ( avg_y ||W^{1/p}(x) W^{-1/p}(y)||^{p'} )^{p/p'}`,
/// evaluated as an exact finite sum per cube, sup over all lattice cubes up
/// to `depth_cap`.
pub fn ap_constant(weight: &MatrixWeight, p: f64, depth_cap: Option<u32>) -> Result<f64> {
    if p <= 1.0 {
        return Err(Error::Domain(format!("ap_constant needs p > 1, got {p}")));
    }
    let pc = conjugate_exponent(p);
    let pos = fractional_power(weight, 1.0 / p)?;
    let neg = fractional_power(weight, -1.0 / p)?;
    let mut sup = f64::NEG_INFINITY;
    for cube in sweep_cubes(&weight.lattice, depth_cap) {
        let cells = weight.lattice.cells_in(&cube);
        let m = cells.len() as f64;
        let mut outer = 0.0;
        for &x in &cells {
            let mut inner = 0.0;
            for &y in &cells {
                inner += spectral_norm(&(pos.mat(x) * neg.mat(y))).powf(pc);
            }
            outer += (inner / m).powf(p / pc);
        }
        sup = sup.max(outer / m);
    }
    Ok(sup)
}

/// The Frazier–Roudenko matrix A_1 constant
/// `sup_Q ess sup_{y in Q} avg_x ||W(x) W^{-1}(y)||`, with the essential
/// supremum realized as a max over finest cells.
pub fn a1_constant(weight: &MatrixWeight, depth_cap: Option<u32>) -> Result<f64> {
    let inv = fractional_power(weight, -1.0)?;
    let mut sup = f64::NEG_INFINITY;
    for cube in sweep_cubes(&weight.lattice, depth_cap) {
        let cells = weight.lattice.cells_in(&cube);
        let m = cells.len() as f64;
        for &y in &cells {
            let mut acc = 0.0;
            for &x in &cells {
                acc += spectral_norm(&(weight.mat(x) * inv.mat(y)));
            }
            sup = sup.max(acc / m);
        }
    }
    Ok(sup)
}

/// Fujii–Wilson constant `sup_Q (1/w(Q)) ∫_Q M(w χ_Q)` of a positive scalar
/// weight, with `M` the dyadic maximal operator restricted to the grid of `Q`.
pub fn ainf_fujii_wilson(w: &ScalarField) -> Result<f64> {
    if w.values().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidWeight("A_inf needs w > 0 and finite".into()));
    }
    let lattice = *w.lattice();
    let avgs = w.cube_averages();
    let mut sup = f64::NEG_INFINITY;
    // For each Q, walk its subtree accumulating the running max of averages
    // along root-to-cell paths; this realizes M restricted to D(Q).
    for cube in lattice.cubes() {
        let mut num = 0.0; // ∫_Q M(w χ_Q) up to the common cell measure
        let mut den = 0.0; // ∫_Q w
        let mut stack = vec![(cube, avgs[lattice.cube_id(&cube)])];
        while let Some((q, running)) = stack.pop() {
            if q.level() == lattice.depth() {
                let cell = lattice.cell_index(q.coords());
                num += running;
                den += w.get(cell);
            } else {
                for child in lattice.children(&q) {
                    let r = running.max(avgs[lattice.cube_id(&child)]);
                    stack.push((child, r));
                }
            }
        }
        sup = sup.max(num / den);
    }
    Ok(sup)
}

/// Report for the scalar-A_inf class constant: the value and the maximizing
/// direction on the unit sphere.
#[derive(Clone, Debug)]
pub struct AqInfScReport {
    pub value: f64,
    pub direction: DVector<f64>,
}

/// `[W]_{A_{q,infty}^{sc}} = sup_e [ |W^{1/q} e|^q ]_{A_inf}` over a
/// deterministic direction grid with a golden-section refinement (n = 2).
pub fn aqinf_sc_constant(
    weight: &MatrixWeight,
    q: f64,
    direction_budget: usize,
) -> Result<AqInfScReport> {
    if q < 1.0 {
        return Err(Error::Domain(format!("A_{{q,inf}}^sc needs q >= 1, got {q}")));
    }
    if direction_budget < 2 * weight.n {
        return Err(Error::Config(format!(
            "direction budget {} below 2n = {}",
            direction_budget,
            2 * weight.n
        )));
    }
    let wq = fractional_power(weight, 1.0 / q)?;
    let eval_dir = |e: &DVector<f64>| -> Result<f64> {
        let field = ScalarField::from_fn(*weight.lattice(), |cell| {
            (wq.mat(cell) * e).norm().powf(q)
        });
        ainf_fujii_wilson(&field)
    };
    if weight.n == 1 {
        let e = DVector::from_element(1, 1.0);
        return Ok(AqInfScReport {
            value: eval_dir(&e)?,
            direction: e,
        });
    }
    let grid = direction_grid(weight.n, direction_budget);
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for (i, e) in grid.iter().enumerate() {
        let v = eval_dir(e)?;
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    let mut direction = grid[best_idx].clone();
    if weight.n == 2 {
        // one golden-section refinement pass around the best angle
        let h = std::f64::consts::PI / direction_budget as f64;
        let theta0 = (grid[best_idx][1]).atan2(grid[best_idx][0]);
        let (mut a, mut b) = (theta0 - h, theta0 + h);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let at = |t: f64| DVector::from_vec(vec![t.cos(), t.sin()]);
        let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
        let (mut fc, mut fd) = (eval_dir(&at(c))?, eval_dir(&at(d))?);
        for _ in 0..40 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval_dir(&at(c))?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval_dir(&at(d))?;
            }
        }
        let theta = 0.5 * (a + b);
        let v = eval_dir(&at(theta))?;
        if v > best {
            best = v;
            direction = at(theta);
        }
    }
    Ok(AqInfScReport {
        value: best,
        direction,
    })
}

/// Margin report for `[W]_{A_{1,infty}^{sc}} <= [W]_{A_1}`.
#[derive(Clone, Debug)]
pub struct A1ControlReport {
    pub a1: f64,
    pub a1inf_sc: f64,
    pub ratio: f64,
    pub ok: bool,
}

/// Tolerance on the ratio in [`check_a1_controls_ainf`].
pub const A1_CONTROL_TOL: f64 = 1e-9;

/// Verifies that the A_1 constant controls the scalar-A_inf constant.
pub fn check_a1_controls_ainf(weight: &MatrixWeight) -> Result<A1ControlReport> {
    let a1 = a1_constant(weight, None)?;
    let sc = aqinf_sc_constant(weight, 1.0, default_direction_budget(weight.n))?;
    let ratio = sc.value / a1;
    Ok(A1ControlReport {
        a1,
        a1inf_sc: sc.value,
        ratio,
        ok: ratio <= 1.0 + A1_CONTROL_TOL,
    })
}

pub fn default_direction_budget(n: usize) -> usize {
    match n {
        1 => 2,
        2 => 256,
        _ => 770,
    }
}

/// Max violation of `|A^{1/p} e| <= |A^{1/q} e|^{q/p}` over sampled unit
/// directions (the Hölder–McCarthy inequality; `A` SPD, `1 <= q < p`).
pub fn holder_mccarthy_check(
    a: &DMatrix<f64>,
    p: f64,
    q: f64,
    direction_budget: usize,
) -> Result<f64> {
    if !(1.0 <= q && q < p) {
        return Err(Error::Domain(format!(
            "Hölder–McCarthy needs 1 <= q < p, got q={q}, p={p}"
        )));
    }
    let e = sym_eigen(a);
    let ap = spd_power_eig(&e, 1.0 / p)?;
    let aq = spd_power_eig(&e, 1.0 / q)?;
    let mut worst = f64::NEG_INFINITY;
    for u in direction_grid(a.nrows(), direction_budget) {
        let lhs = (&ap * &u).norm();
        let rhs = (&aq * &u).norm().powf(q / p);
        worst = worst.max(lhs - rhs);
    }
    Ok(worst)
}

/// Weight generator kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Identity,
    ScalarPower,
    RotatingDiagonal,
    BlockDiagonal,
}

/// Parametric description of a test weight.
///
/// Serialized inside lab config files with keys
/// `{kind, n, alpha, beta, x0, rotation_freq, floor}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub n: usize,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub rotation_freq: f64,
    /// Regularization floor; when absent, `2^(-D |exponent|)` per entry.
    #[serde(default)]
    pub floor: Option<f64>,
}

impl WeightSpec {
    pub fn identity(n: usize) -> Self {
        Self {
            kind: WeightKind::Identity,
            n,
            alpha: 0.0,
            beta: 0.0,
            x0: 0.0,
            rotation_freq: 0.0,
            floor: None,
        }
    }

    pub fn scalar_power(alpha: f64, x0: f64) -> Self {
        Self {
            kind: WeightKind::ScalarPower,
            n: 1,
            alpha,
            beta: 0.0,
            x0,
            rotation_freq: 0.0,
            floor: None,
        }
    }

    pub fn rotating_diagonal(alpha: f64, beta: f64, x0: f64, rotation_freq: f64) -> Self {
        Self {
            kind: WeightKind::RotatingDiagonal,
            n: 2,
            alpha,
            beta,
            x0,
            rotation_freq,
            floor: None,
        }
    }

    pub fn block_diagonal(n: usize, alpha: f64, beta: f64, x0: f64) -> Self {
        Self {
            kind: WeightKind::BlockDiagonal,
            n,
            alpha,
            beta,
            x0,
            rotation_freq: 0.0,
            floor: None,
        }
    }
}

fn power_floor(depth: u32, exponent: f64, floor: Option<f64>) -> f64 {
    floor.unwrap_or_else(|| 0.5f64.powf(depth as f64 * exponent.abs()))
}

fn clamped_power(dist: f64, exponent: f64, floor: f64) -> Result<f64> {
    let v = dist.powf(exponent);
    if !v.is_finite() && exponent != 0.0 {
        return Err(Error::InvalidSpec(format!(
            "|x - x0|^{exponent} is not finite at distance {dist}"
        )));
    }
    Ok(v.max(floor))
}

/// Sample a weight from its spec at the cell centers of a lattice.
pub fn generate_weight(spec: &WeightSpec, lattice: &DyadicLattice) -> Result<MatrixWeight> {
    let cells = lattice.cell_count();
    let dist_to_center = |cell: usize| -> f64 {
        let c = lattice.cell_center(cell);
        if lattice.dim() == 1 {
            (c[0] - spec.x0).abs()
        } else {
            ((c[0] - spec.x0).powi(2) + (c[1] - spec.x0).powi(2)).sqrt()
        }
    };
    let mats = match spec.kind {
        WeightKind::Identity => {
            if spec.n == 0 {
                return Err(Error::InvalidSpec("identity weight needs n >= 1".into()));
            }
            vec![DMatrix::identity(spec.n, spec.n); cells]
        }
        WeightKind::ScalarPower => {
            let floor = power_floor(lattice.depth(), spec.alpha, spec.floor);
            (0..cells)
                .map(|cell| {
                    clamped_power(dist_to_center(cell), spec.alpha, floor)
                        .map(|v| DMatrix::from_element(1, 1, v))
                })
                .collect::<Result<Vec<_>>>()?
        }
        WeightKind::RotatingDiagonal => {
            if spec.n != 2 {
                return Err(Error::InvalidSpec(
                    "rotating-diagonal generator is for n = 2".into(),
                ));
            }
            let fa = power_floor(lattice.depth(), spec.alpha, spec.floor);
            let fb = power_floor(lattice.depth(), spec.beta, spec.floor);
            (0..cells)
                .map(|cell| {
                    let d = dist_to_center(cell);
                    let la = clamped_power(d, spec.alpha, fa)?;
                    let lb = clamped_power(d, spec.beta, fb)?;
                    let center = lattice.cell_center(cell);
                    let theta = spec.rotation_freq
                        * if lattice.dim() == 1 {
                            center[0]
                        } else {
                            center[0] + center[1]
                        };
                    let (c, s) = (theta.cos(), theta.sin());
                    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![la, lb]));
                    Ok(&r * diag * r.transpose())
                })
                .collect::<Result<Vec<_>>>()?
        }
        WeightKind::BlockDiagonal => {
            if spec.n < 2 {
                return Err(Error::InvalidSpec("block-diagonal needs n >= 2".into()));
            }
            let fa = power_floor(lattice.depth(), spec.alpha, spec.floor);
            let fb = power_floor(lattice.depth(), spec.beta, spec.floor);
            (0..cells)
                .map(|cell| {
                    let d = dist_to_center(cell);
                    let la = clamped_power(d, spec.alpha, fa)?;
                    let lb = clamped_power(d, spec.beta, fb)?;
                    let mut m = DMatrix::zeros(spec.n, spec.n);
                    for k in 0..spec.n {
                        m[(k, k)] = if k % 2 == 0 { la } else { lb };
                    }
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    MatrixWeight::new(*lattice, mats)
}
