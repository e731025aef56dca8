//! Sparse and Carleson families, the stopping-time construction, the sparse
//! operators `T_S^{W,V}` and `[b,T]_S^{W,V}`, and the bump-condition bounds.

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, DyadicLattice, ScalarField, VectorField};
use crate::linalg::{spd_power, spectral_norm};
use crate::orlicz::{
    ma_doob_bound, ma_norm_bound, nested_bump_norm, BumpOrder, YoungFunction,
};
use crate::reducing::reducing_operator;
use crate::weights::{fractional_power, MatrixWeight};
use nalgebra::DMatrix;
use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

/// A sparse family: cubes with pairwise-disjoint witness sets `E_Q ⊆ Q`
/// of measure at least `eta |Q|`. Measures are exact rationals.
#[derive(Clone, Debug)]
pub struct SparseFamily {
    lattice: DyadicLattice,
    cubes: Vec<DyadicCube>,
    witnesses: Vec<Vec<usize>>,
    eta: Rational64,
}

impl SparseFamily {
    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn witness(&self, idx: usize) -> &[usize] {
        &self.witnesses[idx]
    }

    pub fn eta(&self) -> Rational64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Restriction to a subset of the cubes (witnesses are rebuilt).
    pub fn restricted_to(&self, keep: impl Fn(&DyadicCube) -> bool) -> Result<SparseFamily> {
        let cubes: Vec<DyadicCube> = self.cubes.iter().copied().filter(|q| keep(q)).collect();
        verify_sparse(&self.lattice, &cubes, self.eta)
    }
}

/// Greedy witness construction: `E_Q = Q` minus the union of the family's
/// maximal proper subcubes of `Q`. Accepts iff every witness measure passes
/// the exact rational bound `|E_Q| >= eta |Q|`; a failure reports the
/// violating cube and its deficit.
pub fn verify_sparse(
    lattice: &DyadicLattice,
    cubes: &[DyadicCube],
    eta: Rational64,
) -> Result<SparseFamily> {
    if eta <= Rational64::new(0, 1) || eta > Rational64::new(1, 1) {
        return Err(Error::Domain(format!("eta must be in (0,1], got {eta}")));
    }
    let mut cubes: Vec<DyadicCube> = cubes.to_vec();
    for q in &cubes {
        lattice.check_cube(q)?;
    }
    cubes.sort_by_key(|q| (q.level(), q.coords()[1], q.coords()[0]));
    cubes.dedup();
    let cell_measure = lattice.cell_measure();
    let mut witnesses = Vec::with_capacity(cubes.len());
    let mut claimed = vec![false; lattice.cell_count()];
    for (i, q) in cubes.iter().enumerate() {
        // maximal proper subcubes of q within the family
        let mut maximal: Vec<&DyadicCube> = Vec::new();
        for (j, p) in cubes.iter().enumerate() {
            if i == j || !lattice.contains(q, p) || p.level() == q.level() {
                continue;
            }
            if !cubes.iter().enumerate().any(|(k, r)| {
                k != i
                    && k != j
                    && r.level() > q.level()
                    && r.level() < p.level()
                    && lattice.contains(q, r)
                    && lattice.contains(r, p)
            }) {
                maximal.push(p);
            }
        }
        let mut removed = vec![false; q.cell_count(lattice)];
        let q_cells = lattice.cells_in(q);
        for p in maximal {
            for c in lattice.cells_in(p) {
                let local = q_cells.binary_search(&c);
                if let Ok(pos) = local {
                    removed[pos] = true;
                } else {
                    // d = 2 cube cells are not globally sorted; fall back
                    if let Some(pos) = q_cells.iter().position(|&x| x == c) {
                        removed[pos] = true;
                    }
                }
            }
        }
        let witness: Vec<usize> = q_cells
            .iter()
            .zip(&removed)
            .filter(|(_, &r)| !r)
            .map(|(&c, _)| c)
            .collect();
        let witness_measure = Rational64::new(witness.len() as i64, 1) * cell_measure;
        let need = eta * q.measure(lattice);
        if witness_measure < need {
            return Err(Error::SparsityViolation {
                cube: *q,
                deficit: need - witness_measure,
            });
        }
        for &c in &witness {
            if claimed[c] {
                return Err(Error::Domain(format!(
                    "witness cells overlap at cell {c} (duplicate cubes?)"
                )));
            }
            claimed[c] = true;
        }
        witnesses.push(witness);
    }
    Ok(SparseFamily {
        lattice: *lattice,
        cubes,
        witnesses,
        eta,
    })
}

/// Exact Carleson constant `Λ = max_Q Σ_{P ⊆ Q} |P| / |Q|` of a family.
#[derive(Clone, Debug)]
pub struct CarlesonReport {
    pub lambda: Rational64,
    pub attaining: DyadicCube,
}

pub fn carleson_constant(family: &SparseFamily) -> CarlesonReport {
    let lat = family.lattice;
    let mut best = Rational64::new(0, 1);
    let mut attaining = family.cubes[0];
    for q in &family.cubes {
        let mut sum = Rational64::new(0, 1);
        for p in &family.cubes {
            if lat.contains(q, p) {
                sum += p.measure(&lat);
            }
        }
        let ratio = sum / q.measure(&lat);
        if ratio > best {
            best = ratio;
            attaining = *q;
        }
    }
    CarlesonReport {
        lambda: best,
        attaining,
    }
}

/// Per-level diagnostics of the stopping-time construction.
#[derive(Clone, Debug, Default)]
pub struct StoppingDiagnostics {
    /// Number of cubes in each generation `J_k(J)` (`k = 0` is `{J}`).
    pub generation_sizes: Vec<usize>,
    /// Max over recursion nodes of the exact packing ratio
    /// `Σ_{L in J(J')} |L| / |J'|` (must be `<= 1/4`).
    pub max_packing_ratio: Rational64,
    /// Worst fit quality among the reducing operators used.
    pub max_fit_kappa: f64,
}

/// The exact packing bound forced by the stopping threshold 4.
pub const PACKING_BOUND: Rational64 = Rational64::new_raw(1, 4);

/// Stopping-time family on `J`: generations of maximal cubes `L` with
/// `< |W_{J,q}^{q/p} W^{-1/p} f| >_L  >  4 < same >_J`, recursed; witnesses
/// are `E_{J'} = J'` minus the stopping children. The packing
/// `Σ |L| <= |J'|/4` is verified in exact rational arithmetic at every node,
/// and the returned family is 3/4-sparse.
pub fn stopping_family(
    weight: &MatrixWeight,
    f: &VectorField,
    p: f64,
    q: f64,
    j: &DyadicCube,
) -> Result<(SparseFamily, StoppingDiagnostics)> {
    if !(q >= 1.0 && q < p) {
        return Err(Error::Domain(format!(
            "stopping family needs 1 <= q < p, got q={q}, p={p}"
        )));
    }
    let lat = *weight.lattice();
    lat.check_cube(j)?;
    if f.n() != weight.n() {
        return Err(Error::Domain("field/weight dimension mismatch".into()));
    }
    if lat.cells_in(j).iter().all(|&c| f.get(c).iter().all(|&v| v == 0.0)) {
        return Err(Error::Domain("stopping family needs f not a.e. zero on J".into()));
    }
    let w_neg = fractional_power(weight, -1.0 / p)?;
    let mut diag = StoppingDiagnostics::default();
    let mut frontier = vec![*j];
    let mut cubes = Vec::new();
    let mut witnesses = Vec::new();
    while !frontier.is_empty() {
        diag.generation_sizes.push(frontier.len());
        let mut next = Vec::new();
        for node in frontier {
            let op = reducing_operator(weight, q, &node)?;
            diag.max_fit_kappa = diag.max_fit_kappa.max(op.kappa);
            let a_pow = spd_power(&op.matrix, q / p)?;
            let cells = lat.cells_in(&node);
            // g(y) = |W_{J,q}^{q/p} W^{-1/p}(y) f(y)| on the node
            let g: Vec<f64> = cells
                .iter()
                .map(|&c| (&a_pow * w_neg.mat(c) * f.get_vector(c)).norm())
                .collect();
            let total: f64 = g.iter().sum();
            let node_avg = total / cells.len() as f64;
            let mut selected = Vec::new();
            if node_avg > 0.0 {
                select_stopping(&lat, &node, &cells, &g, 4.0 * node_avg, &mut selected);
            }
            // exact rational packing check at this node
            let mut packed = Rational64::new(0, 1);
            for l in &selected {
                packed += l.measure(&lat);
            }
            let ratio = packed / node.measure(&lat);
            if ratio > PACKING_BOUND {
                return Err(Error::Domain(format!(
                    "packing bound violated at {node:?}: {ratio} > 1/4"
                )));
            }
            if ratio > diag.max_packing_ratio {
                diag.max_packing_ratio = ratio;
            }
            // witness: node minus its stopping children
            let mut witness = lat.cells_in(&node);
            witness.retain(|&c| {
                !selected
                    .iter()
                    .any(|l| lat.cube_contains_cell(l, c))
            });
            cubes.push(node);
            witnesses.push(witness);
            next.extend(selected);
        }
        frontier = next;
    }
    diag.generation_sizes.push(0);
    while diag.generation_sizes.last() == Some(&0) {
        diag.generation_sizes.pop();
    }
    let family = SparseFamily {
        lattice: lat,
        cubes,
        witnesses,
        eta: Rational64::new(3, 4),
    };
    Ok((family, diag))
}

/// Maximal proper subcubes of `node` whose `g`-average exceeds `threshold`.
fn select_stopping(
    lat: &DyadicLattice,
    node: &DyadicCube,
    node_cells: &[usize],
    g: &[f64],
    threshold: f64,
    out: &mut Vec<DyadicCube>,
) {
    // local index of a cell within the node's cell list
    let index_of = |cell: usize| -> usize {
        node_cells
            .binary_search(&cell)
            .unwrap_or_else(|_| node_cells.iter().position(|&x| x == cell).unwrap())
    };
    fn subtree_sum(
        lat: &DyadicLattice,
        cube: &DyadicCube,
        g: &[f64],
        index_of: &dyn Fn(usize) -> usize,
    ) -> f64 {
        lat.cells_in(cube).iter().map(|&c| g[index_of(c)]).sum()
    }
    let mut stack: Vec<DyadicCube> = lat.children(node);
    while let Some(cube) = stack.pop() {
        let m = cube.cell_count(lat) as f64;
        let avg = subtree_sum(lat, &cube, g, &index_of) / m;
        if avg > threshold {
            out.push(cube);
        } else {
            stack.extend(lat.children(&cube));
        }
    }
}

/// `T_S^{W,V} φ(x) = Σ_{Q in S} < ||W^{1/p}(x) V^{-1/p}(y)|| φ(y) >_{Q,dy} χ_Q(x)`,
/// exact cell sums.
pub fn sparse_apply(
    family: &SparseFamily,
    weight_w: &MatrixWeight,
    weight_v: &MatrixWeight,
    p: f64,
    phi: &ScalarField,
) -> Result<ScalarField> {
    check_phi(phi)?;
    let lat = family.lattice;
    let a = fractional_power(weight_w, 1.0 / p)?;
    let b = fractional_power(weight_v, -1.0 / p)?;
    let mut out = vec![0.0f64; lat.cell_count()];
    for q in &family.cubes {
        let cells = lat.cells_in(q);
        let m = cells.len() as f64;
        for &x in &cells {
            let ax = a.mat(x);
            let mut acc = 0.0;
            for &y in &cells {
                acc += spectral_norm(&(ax * b.mat(y))) * phi.get(y);
            }
            out[x] += acc / m;
        }
    }
    ScalarField::new(lat, out)
}

/// `[b,T]_S^{W,V} φ`: the two oscillation sums of the commutator sparse
/// operator, evaluated exactly.
pub fn commutator_sparse_apply(
    family: &SparseFamily,
    weight_w: &MatrixWeight,
    weight_v: &MatrixWeight,
    p: f64,
    b_field: &ScalarField,
    phi: &ScalarField,
) -> Result<ScalarField> {
    check_phi(phi)?;
    let lat = family.lattice;
    let a = fractional_power(weight_w, 1.0 / p)?;
    let b = fractional_power(weight_v, -1.0 / p)?;
    let mut out = vec![0.0f64; lat.cell_count()];
    for q in &family.cubes {
        let cells = lat.cells_in(q);
        let m = cells.len() as f64;
        let b_avg: f64 = cells.iter().map(|&c| b_field.get(c)).sum::<f64>() / m;
        for &x in &cells {
            let ax = a.mat(x);
            let mut first = 0.0;
            let mut second = 0.0;
            for &y in &cells {
                let k = spectral_norm(&(ax * b.mat(y)));
                first += k * phi.get(y);
                second += (b_field.get(y) - b_avg).abs() * k * phi.get(y);
            }
            out[x] += (b_field.get(x) - b_avg).abs() * first / m + second / m;
        }
    }
    ScalarField::new(lat, out)
}

fn check_phi(phi: &ScalarField) -> Result<()> {
    if phi.values().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("sparse operators need phi >= 0".into()));
    }
    Ok(())
}

/// Bump bound report: the nested kernel norms and the maximal-operator
/// factors of the sparse-operator estimate
/// `||T_S^{W,V}|| <= ||M_{A-bar}||_{p'} ||M_{B-bar}||_p min(kappa_1, kappa_2)`.
#[derive(Clone, Debug)]
pub struct BumpBoundReport {
    pub kappa1: f64,
    pub kappa2: f64,
    /// `||M_{A-bar}||_{L^{p'}}` in the normalized integral form.
    pub ma_x: f64,
    /// `||M_{B-bar}||_{L^p}` in the normalized integral form.
    pub ma_y: f64,
    /// Paper-structure bound (integral-form constants, `c_d = 1`).
    pub bound: f64,
    /// Fully provable bound for the dyadic model: Doob maximal constants and
    /// the sparse/Hölder factor `4/eta`.
    pub provable_bound: f64,
    pub divergent: bool,
}

/// Evaluates the bump bound of the sparse operator for a Young pair `(A, B)`.
pub fn bump_bound(
    family: &SparseFamily,
    weight_w: &MatrixWeight,
    weight_v: &MatrixWeight,
    p: f64,
    a: &YoungFunction,
    b: &YoungFunction,
) -> Result<BumpBoundReport> {
    let pc = p / (p - 1.0);
    let abar = a.conjugate()?;
    let bbar = b.conjugate()?;
    let (k1, k2) = bump_kappas(family, weight_w, weight_v, p, a, b, None)?;
    let ma_x = ma_norm_bound(&abar, pc);
    let ma_y = ma_norm_bound(&bbar, p);
    let divergent = !ma_x.is_finite() || !ma_y.is_finite();
    let eta = rat_f64(family.eta);
    Ok(BumpBoundReport {
        kappa1: k1,
        kappa2: k2,
        ma_x,
        ma_y,
        bound: ma_x * ma_y * k1.min(k2),
        provable_bound: (4.0 / eta)
            * ma_doob_bound(&abar, pc)
            * ma_doob_bound(&bbar, p)
            * k1.min(k2),
        divergent,
    })
}

/// Bump bound report for the commutator sparse operator (Young quadruple).
#[derive(Clone, Debug)]
pub struct CommutatorBumpReport {
    pub kappas: [f64; 4],
    pub lambda1: f64,
    pub lambda2: f64,
    pub bound: f64,
    pub provable_bound: f64,
    pub divergent: bool,
}

/// Evaluates `Λ_1 + Λ_2` of the commutator bump lemma for Young functions
/// `(A, B, C, D)`; the `x`-oscillation enters the `(A, B)` pair and the
/// `y`-oscillation the `(C, D)` pair.
pub fn bump_bound_commutator(
    family: &SparseFamily,
    weight_w: &MatrixWeight,
    weight_v: &MatrixWeight,
    p: f64,
    b_field: &ScalarField,
    a: &YoungFunction,
    b: &YoungFunction,
    c: &YoungFunction,
    d: &YoungFunction,
) -> Result<CommutatorBumpReport> {
    let pc = p / (p - 1.0);
    let abar = a.conjugate()?;
    let bbar = b.conjugate()?;
    let cbar = c.conjugate()?;
    let dbar = d.conjugate()?;
    let (k1, k2) = bump_kappas(
        family,
        weight_w,
        weight_v,
        p,
        a,
        b,
        Some((b_field, OscSide::X)),
    )?;
    let (k3, k4) = bump_kappas(
        family,
        weight_w,
        weight_v,
        p,
        c,
        d,
        Some((b_field, OscSide::Y)),
    )?;
    let ma = ma_norm_bound(&abar, pc);
    let mb = ma_norm_bound(&bbar, p);
    let mc = ma_norm_bound(&cbar, pc);
    let md = ma_norm_bound(&dbar, p);
    let lambda1 = ma * mb * k1.min(k2);
    let lambda2 = mc * md * k3.min(k4);
    let eta = rat_f64(family.eta);
    let provable = (4.0 / eta)
        * (ma_doob_bound(&abar, pc) * ma_doob_bound(&bbar, p) * k1.min(k2)
            + ma_doob_bound(&cbar, pc) * ma_doob_bound(&dbar, p) * k3.min(k4));
    Ok(CommutatorBumpReport {
        kappas: [k1, k2, k3, k4],
        lambda1,
        lambda2,
        bound: lambda1 + lambda2,
        provable_bound: provable,
        divergent: !(lambda1 + lambda2).is_finite(),
    })
}

enum OscSide {
    X,
    Y,
}

/// `kappa_1`/`kappa_2`: sups over the family's cubes of the nested Luxemburg
/// norms of `||W^{1/p}(x) V^{-1/p}(y)||`, optionally multiplied by a
/// `|b - <b>_Q|` oscillation in the x or y slot.
fn bump_kappas(
    family: &SparseFamily,
    weight_w: &MatrixWeight,
    weight_v: &MatrixWeight,
    p: f64,
    a: &YoungFunction,
    b: &YoungFunction,
    osc: Option<(&ScalarField, OscSide)>,
) -> Result<(f64, f64)> {
    let lat = family.lattice;
    let aw = fractional_power(weight_w, 1.0 / p)?;
    let bv = fractional_power(weight_v, -1.0 / p)?;
    let mut k1 = 0.0f64;
    let mut k2 = 0.0f64;
    for q in &family.cubes {
        let cells = lat.cells_in(q);
        let m = cells.len();
        let mut kernel = DMatrix::zeros(m, m);
        for (xi, &x) in cells.iter().enumerate() {
            let ax = aw.mat(x);
            for (yi, &y) in cells.iter().enumerate() {
                kernel[(xi, yi)] = spectral_norm(&(ax * bv.mat(y)));
            }
        }
        if let Some((field, side)) = &osc {
            let avg: f64 = cells.iter().map(|&c| field.get(c)).sum::<f64>() / m as f64;
            for (xi, &x) in cells.iter().enumerate() {
                for (yi, &y) in cells.iter().enumerate() {
                    let f = match side {
                        OscSide::X => (field.get(x) - avg).abs(),
                        OscSide::Y => (field.get(y) - avg).abs(),
                    };
                    kernel[(xi, yi)] *= f;
                }
            }
        }
        k1 = k1.max(nested_bump_norm(&kernel, a, b, BumpOrder::XThenY)?);
        k2 = k2.max(nested_bump_norm(&kernel, a, b, BumpOrder::YThenX)?);
    }
    Ok((k1, k2))
}

fn rat_f64(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Serialized sparse family: cube (level, coords) lists with witness cells.
#[derive(Serialize, Deserialize)]
struct FamilyDoc {
    dimension: u8,
    depth: u32,
    eta_num: i64,
    eta_den: i64,
    cubes: Vec<CubeDoc>,
}

#[derive(Serialize, Deserialize)]
struct CubeDoc {
    level: u32,
    coords: [u32; 2],
    witness: Vec<usize>,
}

pub fn family_to_json(family: &SparseFamily) -> String {
    let doc = FamilyDoc {
        dimension: family.lattice.dim(),
        depth: family.lattice.depth(),
        eta_num: *family.eta.numer(),
        eta_den: *family.eta.denom(),
        cubes: family
            .cubes
            .iter()
            .zip(&family.witnesses)
            .map(|(q, w)| CubeDoc {
                level: q.level(),
                coords: q.coords(),
                witness: w.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("family serialization cannot fail")
}

pub fn family_from_json(s: &str) -> Result<SparseFamily> {
    let doc: FamilyDoc = serde_json::from_str(s)?;
    let lattice = DyadicLattice::new(doc.dimension, doc.depth)?;
    let eta = Rational64::new(doc.eta_num, doc.eta_den);
    let cubes: Vec<DyadicCube> = doc
        .cubes
        .iter()
        .map(|c| lattice.cube(c.level, c.coords))
        .collect::<Result<_>>()?;
    // re-verify rather than trusting the stored witnesses
    verify_sparse(&lattice, &cubes, eta)
}
