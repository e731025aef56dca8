//! Finite dyadic lattice on `[0,1)^d` and piecewise-constant fields.
//!
//! All functions are constant on finest cells, so every integral in the crate
//! reduces to an exact finite sum. Cube measures are exact rationals; field
//! values are `f64`.

use crate::error::{Error, Result};
use nalgebra::DVector;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

/// Depth caps keeping all-cube sweeps at desk scale.
pub const MAX_DEPTH_1D: u32 = 14;
pub const MAX_DEPTH_2D: u32 = 7;

/// A dyadic cube: level `l` and integer coordinates in `[0, 2^l)^d`.
///
/// The second coordinate is unused (zero) when the lattice is one-dimensional.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct DyadicCube {
    level: u32,
    coords: [u32; 2],
}

impl DyadicCube {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coords(&self) -> [u32; 2] {
        self.coords
    }

    /// Exact measure `2^(-level*d)` as a rational.
    pub fn measure(&self, lattice: &DyadicLattice) -> Rational64 {
        Rational64::new(1, 1i64 << (self.level * lattice.dim as u32))
    }

    /// Number of finest cells covered by this cube.
    pub fn cell_count(&self, lattice: &DyadicLattice) -> usize {
        1usize << ((lattice.depth - self.level) * lattice.dim as u32)
    }

    /// Side length as a float (for generator geometry, not for measures).
    pub fn side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }
}

/// The finite dyadic lattice over `[0,1)^d`, `d in {1,2}`, depth `D >= 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct DyadicLattice {
    dim: u8,
    depth: u32,
}

impl DyadicLattice {
    pub fn new(dim: u8, depth: u32) -> Result<Self> {
        match (dim, depth) {
            (1, 1..=MAX_DEPTH_1D) | (2, 1..=MAX_DEPTH_2D) => Ok(Self { dim, depth }),
            (1 | 2, _) => Err(Error::InvalidLattice(format!(
                "depth {depth} out of range for dimension {dim}"
            ))),
            _ => Err(Error::InvalidLattice(format!(
                "dimension {dim} not supported (expected 1 or 2)"
            ))),
        }
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Cells per axis at the finest level.
    pub fn side(&self) -> u32 {
        1 << self.depth
    }

    /// Total number of finest cells, `2^(depth*d)`.
    pub fn cell_count(&self) -> usize {
        1usize << (self.depth * self.dim as u32)
    }

    /// Exact measure of a finest cell.
    pub fn cell_measure(&self) -> Rational64 {
        Rational64::new(1, 1i64 << (self.depth * self.dim as u32))
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube {
            level: 0,
            coords: [0, 0],
        }
    }

    pub fn cube(&self, level: u32, coords: [u32; 2]) -> Result<DyadicCube> {
        let cube = DyadicCube { level, coords };
        self.check_cube(&cube)?;
        Ok(cube)
    }

    pub fn check_cube(&self, cube: &DyadicCube) -> Result<()> {
        let side = 1u32 << cube.level;
        let ok = cube.level <= self.depth
            && cube.coords[0] < side
            && (self.dim == 1 && cube.coords[1] == 0 || self.dim == 2 && cube.coords[1] < side);
        if ok {
            Ok(())
        } else {
            Err(Error::CubeOutsideLattice {
                cube: *cube,
                reason: format!("lattice d={} depth={}", self.dim, self.depth),
            })
        }
    }

    /// Linear index of the finest cell with axis coordinates `coords`.
    pub fn cell_index(&self, coords: [u32; 2]) -> usize {
        if self.dim == 1 {
            coords[0] as usize
        } else {
            (coords[1] as usize) << self.depth | coords[0] as usize
        }
    }

    pub fn cell_coords(&self, cell: usize) -> [u32; 2] {
        if self.dim == 1 {
            [cell as u32, 0]
        } else {
            let mask = (1usize << self.depth) - 1;
            [(cell & mask) as u32, (cell >> self.depth) as u32]
        }
    }

    /// Center of a finest cell (second entry is 0.0 for d=1).
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let c = self.cell_coords(cell);
        let h = 1.0 / self.side() as f64;
        let y = if self.dim == 2 {
            (c[1] as f64 + 0.5) * h
        } else {
            0.0
        };
        [(c[0] as f64 + 0.5) * h, y]
    }

    /// Ancestor of a finest cell at the given level.
    pub fn ancestor_of_cell(&self, cell: usize, level: u32) -> DyadicCube {
        let c = self.cell_coords(cell);
        let shift = self.depth - level;
        DyadicCube {
            level,
            coords: [c[0] >> shift, c[1] >> shift],
        }
    }

    /// The chain of `depth+1` cubes containing a finest cell, finest first.
    pub fn cubes_containing(&self, cell: usize) -> Vec<DyadicCube> {
        (0..=self.depth)
            .rev()
            .map(|l| self.ancestor_of_cell(cell, l))
            .collect()
    }

    pub fn parent(&self, cube: &DyadicCube) -> Option<DyadicCube> {
        (cube.level > 0).then(|| DyadicCube {
            level: cube.level - 1,
            coords: [cube.coords[0] >> 1, cube.coords[1] >> 1],
        })
    }

    /// The `2^d` dyadic children (empty when `cube` is a finest cell).
    pub fn children(&self, cube: &DyadicCube) -> Vec<DyadicCube> {
        if cube.level >= self.depth {
            return Vec::new();
        }
        let l = cube.level + 1;
        let base = [cube.coords[0] << 1, cube.coords[1] << 1];
        if self.dim == 1 {
            vec![
                DyadicCube { level: l, coords: [base[0], 0] },
                DyadicCube { level: l, coords: [base[0] + 1, 0] },
            ]
        } else {
            let mut out = Vec::with_capacity(4);
            for dy in 0..2 {
                for dx in 0..2 {
                    out.push(DyadicCube {
                        level: l,
                        coords: [base[0] + dx, base[1] + dy],
                    });
                }
            }
            out
        }
    }

    /// Whether `inner` is contained in `outer` (dyadic containment).
    pub fn contains(&self, outer: &DyadicCube, inner: &DyadicCube) -> bool {
        if inner.level < outer.level {
            return false;
        }
        let shift = inner.level - outer.level;
        inner.coords[0] >> shift == outer.coords[0] && inner.coords[1] >> shift == outer.coords[1]
    }

    pub fn cube_contains_cell(&self, cube: &DyadicCube, cell: usize) -> bool {
        self.contains(cube, &self.ancestor_of_cell(cell, self.depth))
    }

    /// Same-level lattice translate of a cube, or `None` when it leaves `[0,1)^d`.
    pub fn translate(&self, cube: &DyadicCube, delta: [i32; 2]) -> Option<DyadicCube> {
        let side = 1i64 << cube.level;
        let mut coords = [0u32; 2];
        for a in 0..self.dim as usize {
            let c = cube.coords[a] as i64 + delta[a] as i64;
            if c < 0 || c >= side {
                return None;
            }
            coords[a] = c as u32;
        }
        Some(DyadicCube {
            level: cube.level,
            coords,
        })
    }

    /// The up-to-`3^d` same-level cubes whose union is `3Q ∩ [0,1)^d`,
    /// together with their translate offsets.
    pub fn triple(&self, cube: &DyadicCube) -> Vec<([i32; 2], DyadicCube)> {
        let mut out = Vec::new();
        let deltas: &[[i32; 2]] = if self.dim == 1 {
            &[[-1, 0], [0, 0], [1, 0]]
        } else {
            &[
                [-1, -1], [0, -1], [1, -1],
                [-1, 0], [0, 0], [1, 0],
                [-1, 1], [0, 1], [1, 1],
            ]
        };
        for &d in deltas {
            if let Some(t) = self.translate(cube, d) {
                out.push((d, t));
            }
        }
        out
    }

    /// Iterate the finest cells covered by a cube, in linear-index order.
    pub fn cells_in(&self, cube: &DyadicCube) -> Vec<usize> {
        let w = 1usize << (self.depth - cube.level);
        let x0 = (cube.coords[0] as usize) << (self.depth - cube.level);
        if self.dim == 1 {
            (x0..x0 + w).collect()
        } else {
            let y0 = (cube.coords[1] as usize) << (self.depth - cube.level);
            let mut cells = Vec::with_capacity(w * w);
            for y in y0..y0 + w {
                for x in x0..x0 + w {
                    cells.push(y << self.depth | x);
                }
            }
            cells
        }
    }

    /// Number of cubes at all levels `0..=depth`.
    pub fn cube_count(&self) -> usize {
        (0..=self.depth).map(|l| 1usize << (l * self.dim as u32)).sum()
    }

    /// Dense index of a cube in level-major order (root has id 0).
    pub fn cube_id(&self, cube: &DyadicCube) -> usize {
        let offset: usize = (0..cube.level).map(|l| 1usize << (l * self.dim as u32)).sum();
        let linear = if self.dim == 1 {
            cube.coords[0] as usize
        } else {
            (cube.coords[1] as usize) << cube.level | cube.coords[0] as usize
        };
        offset + linear
    }

    /// All cubes in level-major order (matching `cube_id`).
    pub fn cubes(&self) -> Vec<DyadicCube> {
        let mut out = Vec::with_capacity(self.cube_count());
        for level in 0..=self.depth {
            let side = 1u32 << level;
            if self.dim == 1 {
                for x in 0..side {
                    out.push(DyadicCube { level, coords: [x, 0] });
                }
            } else {
                for y in 0..side {
                    for x in 0..side {
                        out.push(DyadicCube { level, coords: [x, y] });
                    }
                }
            }
        }
        out
    }
}

/// Scalar field, one `f64` per finest cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    lattice: DyadicLattice,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: DyadicLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.cell_count() {
            return Err(Error::Domain(format!(
                "field has {} values, lattice has {} cells",
                values.len(),
                lattice.cell_count()
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn constant(lattice: DyadicLattice, c: f64) -> Self {
        Self {
            lattice,
            values: vec![c; lattice.cell_count()],
        }
    }

    pub fn from_fn(lattice: DyadicLattice, mut f: impl FnMut(usize) -> f64) -> Self {
        Self {
            lattice,
            values: (0..lattice.cell_count()).map(|c| f(c)).collect(),
        }
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            lattice: self.lattice,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `(1/|Q|) ∫_Q f`, an exact finite sum over the cells of `Q`.
    pub fn average(&self, cube: &DyadicCube) -> Result<f64> {
        self.lattice.check_cube(cube)?;
        let cells = self.lattice.cells_in(cube);
        let sum: f64 = cells.iter().map(|&c| self.values[c]).sum();
        Ok(sum / cells.len() as f64)
    }

    /// Averages over every cube, indexed by `cube_id`, via bottom-up summation.
    pub fn cube_averages(&self) -> Vec<f64> {
        cube_reduce(&self.lattice, |cell| self.values[cell])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `C^n`-valued field (real components), one n-vector per finest cell,
/// stored cell-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    lattice: DyadicLattice,
    n: usize,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(lattice: DyadicLattice, n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("vector field needs n >= 1".into()));
        }
        if values.len() != lattice.cell_count() * n {
            return Err(Error::Domain(format!(
                "field has {} values, expected {}",
                values.len(),
                lattice.cell_count() * n
            )));
        }
        Ok(Self { lattice, n, values })
    }

    pub fn constant(lattice: DyadicLattice, v: &DVector<f64>) -> Self {
        let mut values = Vec::with_capacity(lattice.cell_count() * v.len());
        for _ in 0..lattice.cell_count() {
            values.extend_from_slice(v.as_slice());
        }
        Self {
            lattice,
            n: v.len(),
            values,
        }
    }

    pub fn from_fn(lattice: DyadicLattice, n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(lattice.cell_count() * n);
        for cell in 0..lattice.cell_count() {
            for k in 0..n {
                values.push(f(cell, k));
            }
        }
        Self { lattice, n, values }
    }

    pub fn from_scalar(f: &ScalarField) -> Self {
        Self {
            lattice: *f.lattice(),
            n: 1,
            values: f.values().to_vec(),
        }
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n..(cell + 1) * self.n]
    }

    pub fn get_vector(&self, cell: usize) -> DVector<f64> {
        DVector::from_column_slice(self.get(cell))
    }

    pub fn set(&mut self, cell: usize, v: &[f64]) {
        self.values[cell * self.n..(cell + 1) * self.n].copy_from_slice(v);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(1/|Q|) ∫_Q f` componentwise.
    pub fn average(&self, cube: &DyadicCube) -> Result<DVector<f64>> {
        self.lattice.check_cube(cube)?;
        let cells = self.lattice.cells_in(cube);
        let mut acc = DVector::zeros(self.n);
        for &c in &cells {
            for k in 0..self.n {
                acc[k] += self.values[c * self.n + k];
            }
        }
        Ok(acc / cells.len() as f64)
    }

    /// Pointwise Euclidean norm `|f(x)|` as a scalar field.
    pub fn norm_field(&self) -> ScalarField {
        ScalarField::from_fn(self.lattice, |cell| {
            self.get(cell).iter().map(|v| v * v).sum::<f64>().sqrt()
        })
    }

    pub fn component(&self, k: usize) -> ScalarField {
        ScalarField::from_fn(self.lattice, |cell| self.values[cell * self.n + k])
    }

    /// Stack two fields into one with `n1 + n2` components per cell.
    pub fn stack(a: &VectorField, b: &VectorField) -> Result<VectorField> {
        if a.lattice != b.lattice {
            return Err(Error::Domain("stack: lattice mismatch".into()));
        }
        let n = a.n + b.n;
        Ok(VectorField::from_fn(a.lattice, n, |cell, k| {
            if k < a.n {
                a.values[cell * a.n + k]
            } else {
                b.values[cell * b.n + (k - a.n)]
            }
        }))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-cube reduction: averages of a cellwise function over every cube,
/// computed bottom-up in `O(total cubes)`.
pub fn cube_reduce(lattice: &DyadicLattice, cell_value: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut sums = vec![0.0; lattice.cube_count()];
    for cell in 0..lattice.cell_count() {
        let cube = lattice.ancestor_of_cell(cell, lattice.depth);
        sums[lattice.cube_id(&cube)] = cell_value(cell);
    }
    // coarser levels: sum of children
    for level in (0..lattice.depth).rev() {
        let side = 1u32 << level;
        let coords: Vec<[u32; 2]> = if lattice.dim() == 1 {
            (0..side).map(|x| [x, 0]).collect()
        } else {
            let mut v = Vec::new();
            for y in 0..side {
                for x in 0..side {
                    v.push([x, y]);
                }
            }
            v
        };
        for c in coords {
            let cube = DyadicCube { level, coords: c };
            let id = lattice.cube_id(&cube);
            let mut s = 0.0;
            for child in lattice.children(&cube) {
                s += sums[lattice.cube_id(&child)];
            }
            sums[id] = s;
        }
    }
    // convert sums of cell values to averages
    let cubes = lattice.cubes();
    for (id, cube) in cubes.iter().enumerate() {
        sums[id] /= cube.cell_count(lattice) as f64;
    }
    sums
}

/// Serialized field document: keys `{dimension, depth, n, values}` with the
/// values row-major (cell-major, components contiguous per cell).
#[derive(Serialize, Deserialize)]
struct FieldDoc {
    dimension: u8,
    depth: u32,
    n: usize,
    values: Vec<f64>,
}

pub fn field_to_json(f: &VectorField) -> String {
    serde_json::to_string_pretty(&FieldDoc {
        dimension: f.lattice.dim(),
        depth: f.lattice.depth(),
        n: f.n,
        values: f.values.clone(),
    })
    .expect("field serialization cannot fail")
}

pub fn field_from_json(s: &str) -> Result<VectorField> {
    let doc: FieldDoc = serde_json::from_str(s)?;
    let lattice = DyadicLattice::new(doc.dimension, doc.depth)?;
    VectorField::new(lattice, doc.n, doc.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn constant_field_averages_to_constant() {
        let lat = DyadicLattice::new(1, 4).unwrap();
        let f = ScalarField::constant(lat, 2.5);
        for cube in lat.cubes() {
            assert_eq!(f.average(&cube).unwrap(), 2.5);
        }
    }

    #[test]
    fn indicator_of_left_half_averages_half_on_root() {
        let lat = DyadicLattice::new(1, 5).unwrap();
        let half = lat.cell_count() / 2;
        let f = ScalarField::from_fn(lat, |c| if c < half { 1.0 } else { 0.0 });
        assert_eq!(f.average(&lat.root()).unwrap(), 0.5);
    }

    #[test]
    fn random_average_matches_flat_sum_oracle() {
        let lat = DyadicLattice::new(2, 4).unwrap();
        let f = ScalarField::from_fn(lat, |c| ((c * 2654435761) % 1000) as f64 / 997.0);
        // independent oracle: direct summation over all cells weighted by measure
        let total: f64 = (0..lat.cell_count()).map(|c| f.get(c)).sum();
        let oracle = total / lat.cell_count() as f64;
        assert!((f.average(&lat.root()).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn chain_for_leftmost_cell_depth3() {
        let lat = DyadicLattice::new(1, 3).unwrap();
        let chain = lat.cubes_containing(0);
        assert_eq!(chain.len(), 4);
        for (i, cube) in chain.iter().enumerate() {
            assert_eq!(cube.level(), 3 - i as u32);
            assert_eq!(cube.coords()[0], 0);
        }
    }

    #[test]
    fn chain_depth1_d2_has_two_cubes_and_dyadic_measures() {
        let lat = DyadicLattice::new(2, 1).unwrap();
        for cell in 0..lat.cell_count() {
            let chain = lat.cubes_containing(cell);
            assert_eq!(chain.len(), 2);
            for (i, cube) in chain.iter().enumerate() {
                let l = lat.depth() - i as u32;
                assert_eq!(cube.measure(&lat), Rational64::new(1, 1 << (2 * l)));
            }
        }
    }

    #[test]
    fn chain_is_totally_ordered_by_inclusion() {
        let lat = DyadicLattice::new(2, 3).unwrap();
        for cell in [0usize, 5, 17, 63] {
            let chain = lat.cubes_containing(cell);
            for w in chain.windows(2) {
                assert!(lat.contains(&w[1], &w[0]));
            }
        }
    }

    #[test]
    fn level_measures_sum_to_one_exactly() {
        for (d, depth) in [(1u8, 6u32), (2, 4)] {
            let lat = DyadicLattice::new(d, depth).unwrap();
            for level in 0..=depth {
                let sum: Rational64 = lat
                    .cubes()
                    .into_iter()
                    .filter(|q| q.level() == level)
                    .map(|q| q.measure(&lat))
                    .sum();
                assert_eq!(sum, Rational64::new(1, 1));
            }
        }
    }

    #[test]
    fn average_is_mean_of_child_averages() {
        let lat = DyadicLattice::new(2, 3).unwrap();
        let f = ScalarField::from_fn(lat, |c| (c as f64).sin());
        for cube in lat.cubes() {
            if cube.level() == lat.depth() {
                continue;
            }
            let children = lat.children(&cube);
            let mean: f64 = children
                .iter()
                .map(|q| f.average(q).unwrap())
                .sum::<f64>()
                / children.len() as f64;
            assert!((f.average(&cube).unwrap() - mean).abs() < 1e-13);
        }
    }

    #[test]
    fn cube_outside_lattice_is_domain_error() {
        let lat = DyadicLattice::new(1, 3).unwrap();
        assert!(lat.cube(2, [4, 0]).is_err());
        assert!(lat.cube(5, [0, 0]).is_err());
    }

    #[test]
    fn cube_reduce_matches_direct_averages() {
        let lat = DyadicLattice::new(2, 3).unwrap();
        let f = ScalarField::from_fn(lat, |c| (c as f64 * 0.37).cos());
        let avgs = f.cube_averages();
        for cube in lat.cubes() {
            assert!((avgs[lat.cube_id(&cube)] - f.average(&cube).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn field_json_round_trip() {
        let lat = DyadicLattice::new(1, 3).unwrap();
        let f = VectorField::from_fn(lat, 2, |c, k| c as f64 + 0.5 * k as f64);
        let s = field_to_json(&f);
        assert!(s.contains("\"dimension\""));
        let g = field_from_json(&s).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn triple_is_clipped_at_the_boundary() {
        let lat = DyadicLattice::new(1, 3).unwrap();
        let q = lat.cube(3, [0, 0]).unwrap();
        assert_eq!(lat.triple(&q).len(), 2);
        let q = lat.cube(3, [4, 0]).unwrap();
        assert_eq!(lat.triple(&q).len(), 3);
        let root = lat.root();
        assert_eq!(lat.triple(&root).len(), 1);
    }
}
