//! Convex body averages: exact zonotopes for `r = 1`, support-sampled bodies
//! for `r > 1`, Minkowski algebra, membership tests and the pairing interval
//! of two symmetric bodies.

use crate::error::{Error, Result};
use crate::grid::{DyadicCube, VectorField};
use crate::linalg::direction_grid;
use nalgebra::DVector;

/// Membership margin below which a point is reported outside.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Direction-grid sizes for membership and pairing scans.
pub fn membership_grid(n: usize) -> usize {
    match n {
        2 => 360,
        _ => 1200,
    }
}

/// An origin-symmetric zonotope `{ sum t_i g_i : |t_i| <= 1 }` given by its
/// generators. Its support function is `h(u) = sum |<g_i, u>|`.
#[derive(Clone, Debug)]
pub struct Zonotope {
    n: usize,
    generators: Vec<DVector<f64>>,
}

impl Zonotope {
    pub fn new(n: usize, generators: Vec<DVector<f64>>) -> Result<Self> {
        if generators.iter().any(|g| g.len() != n) {
            return Err(Error::Domain("zonotope generator dimension mismatch".into()));
        }
        Ok(Self { n, generators })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[DVector<f64>] {
        &self.generators
    }

    pub fn support(&self, u: &DVector<f64>) -> f64 {
        self.generators.iter().map(|g| g.dot(u).abs()).sum()
    }

    /// A boundary point attaining the support in direction `u`.
    pub fn support_point(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut p = DVector::zeros(self.n);
        for g in &self.generators {
            let s = g.dot(u);
            if s >= 0.0 {
                p += g;
            } else {
                p -= g;
            }
        }
        p
    }

    pub fn scaled(&self, c: f64) -> Zonotope {
        Zonotope {
            n: self.n,
            generators: self.generators.iter().map(|g| g * c).collect(),
        }
    }
}

/// `<<f>>_Q` for cellwise-constant `f`: the zonotope with one generator
/// `f(cell) |cell| / |Q|` per finest cell of `Q`.
pub fn body_average(f: &VectorField, cube: &DyadicCube) -> Result<Zonotope> {
    f.lattice().check_cube(cube)?;
    let cells = f.lattice().cells_in(cube);
    let m = cells.len() as f64;
    let generators = cells.iter().map(|&c| f.get_vector(c) / m).collect();
    Zonotope::new(f.n(), generators)
}

/// A symmetric convex body sampled by support values (and touching points)
/// on a deterministic half-sphere grid; `h(-u) = h(u)` by symmetry.
#[derive(Clone, Debug)]
pub struct SupportBody {
    n: usize,
    dirs: Vec<DVector<f64>>,
    values: Vec<f64>,
    points: Vec<DVector<f64>>,
}

impl SupportBody {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dirs(&self) -> &[DVector<f64>] {
        &self.dirs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// Support at an arbitrary direction from the stored touching points
    /// (the support of their symmetric hull, a lower approximation that is
    /// exact at the sampled directions).
    pub fn support_from_points(&self, u: &DVector<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| p.dot(u).abs())
            .fold(0.0, f64::max)
    }
}

/// `<<f>>_{r,Q}` for `r > 1`, via the closed-form support values
/// `h(u) = ( avg_Q |<f,u>|^r )^{1/r}` on a direction grid, together with the
/// boundary touching points `∇h(u)`.
pub fn body_average_r(
    f: &VectorField,
    r: f64,
    cube: &DyadicCube,
    direction_budget: usize,
) -> Result<SupportBody> {
    if r <= 1.0 {
        return Err(Error::Domain(format!("body_average_r needs r > 1, got {r}")));
    }
    f.lattice().check_cube(cube)?;
    let cells = f.lattice().cells_in(cube);
    let m = cells.len() as f64;
    let dirs = direction_grid(f.n(), direction_budget);
    let mut values = Vec::with_capacity(dirs.len());
    let mut points = Vec::with_capacity(dirs.len());
    for u in &dirs {
        let mut acc = 0.0;
        for &c in &cells {
            acc += f.get_vector(c).dot(u).abs().powf(r);
        }
        let h = (acc / m).powf(1.0 / r);
        // gradient of h: h^{1-r} avg(|<f,u>|^{r-1} sgn(<f,u>) f)
        let mut grad = DVector::zeros(f.n());
        if h > 0.0 {
            for &c in &cells {
                let fv = f.get_vector(c);
                let s = fv.dot(u);
                grad += fv * (s.abs().powf(r - 1.0) * s.signum());
            }
            grad *= h.powf(1.0 - r) / m;
        }
        values.push(h);
        points.push(grad);
    }
    Ok(SupportBody {
        n: f.n(),
        dirs,
        values,
        points,
    })
}

/// Minkowski sum of scaled zonotopes: generator lists concatenate, support
/// functions add exactly.
pub fn minkowski(bodies: &[&Zonotope], scalars: &[f64]) -> Result<Zonotope> {
    if bodies.is_empty() {
        return Err(Error::Domain("minkowski of an empty list".into()));
    }
    if bodies.len() != scalars.len() {
        return Err(Error::Domain("minkowski: scalars length mismatch".into()));
    }
    let n = bodies[0].n;
    let mut generators = Vec::new();
    for (z, &c) in bodies.iter().zip(scalars) {
        if z.n != n {
            return Err(Error::Domain("minkowski: dimension mismatch".into()));
        }
        generators.extend(z.generators.iter().map(|g| g * c));
    }
    Zonotope::new(n, generators)
}

/// Outcome of a zonotope membership test.
#[derive(Clone, Debug)]
pub struct MembershipReport {
    pub inside: bool,
    /// `min_u h(u) - <z,u>` over the scanned directions; negative when a
    /// separating direction exists.
    pub margin: f64,
    pub worst_direction: DVector<f64>,
}

/// Facet normals of a zonotope: generator perpendiculars for n = 2, pairwise
/// cross products for n = 3. Checking the support inequality on these (for
/// n <= 3) decides membership exactly.
fn facet_normals(z: &Zonotope) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    match z.n {
        2 => {
            for g in &z.generators {
                let v = DVector::from_vec(vec![-g[1], g[0]]);
                let norm = v.norm();
                if norm > 1e-300 {
                    out.push(v / norm);
                }
            }
        }
        3 => {
            for (i, a) in z.generators.iter().enumerate() {
                for b in z.generators.iter().skip(i + 1) {
                    let v = DVector::from_vec(vec![
                        a[1] * b[2] - a[2] * b[1],
                        a[2] * b[0] - a[0] * b[2],
                        a[0] * b[1] - a[1] * b[0],
                    ]);
                    let norm = v.norm();
                    if norm > 1e-12 {
                        out.push(v / norm);
                    }
                }
            }
        }
        _ => {}
    }
    out
}

/// Membership of `z` in a zonotope, within margin [`MEMBERSHIP_TOL`].
///
/// The margin scan runs over the direction grid plus (for n <= 3, modest
/// generator counts) the exact facet normals, which makes the test a true
/// feasibility decision there. Reports the worst separating direction.
pub fn membership(z: &DVector<f64>, body: &Zonotope) -> Result<MembershipReport> {
    if z.len() != body.n {
        return Err(Error::Domain("membership: dimension mismatch".into()));
    }
    let mut dirs = direction_grid(body.n, membership_grid(body.n));
    let m = body.generators.len();
    let use_normals = body.n == 2 || (body.n == 3 && m <= 64);
    if use_normals {
        dirs.extend(facet_normals(body));
    }
    let mut margin = f64::INFINITY;
    let mut worst = DVector::zeros(body.n);
    for u in &dirs {
        // symmetric body: check both signs via |<z,u>|
        let gap = body.support(u) - z.dot(u).abs();
        if gap < margin {
            margin = gap;
            worst = if z.dot(u) >= 0.0 { u.clone() } else { -u.clone() };
        }
    }
    Ok(MembershipReport {
        inside: margin >= -MEMBERSHIP_TOL,
        margin,
        worst_direction: worst,
    })
}

/// Either convex-body representation, for pairing.
#[derive(Clone, Copy)]
pub enum BodyRef<'a> {
    Zonotope(&'a Zonotope),
    Support(&'a SupportBody),
}

impl<'a> BodyRef<'a> {
    fn n(&self) -> usize {
        match self {
            BodyRef::Zonotope(z) => z.n,
            BodyRef::Support(s) => s.n,
        }
    }

    fn support(&self, u: &DVector<f64>) -> f64 {
        match self {
            BodyRef::Zonotope(z) => z.support(u),
            BodyRef::Support(s) => s.support_from_points(u),
        }
    }

    fn support_point(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            BodyRef::Zonotope(z) => z.support_point(u),
            BodyRef::Support(s) => {
                // nearest sampled direction (up to sign)
                let mut best = 0usize;
                let mut bestdot = f64::MIN;
                for (k, d) in s.dirs.iter().enumerate() {
                    let v = d.dot(u).abs();
                    if v > bestdot {
                        bestdot = v;
                        best = k;
                    }
                }
                if s.dirs[best].dot(u) >= 0.0 {
                    s.points[best].clone()
                } else {
                    -s.points[best].clone()
                }
            }
        }
    }
}

/// The symmetric pairing interval `[-m, m]`,
/// `m = max { <a,b> : a in A, b in B }`.
#[derive(Clone, Debug)]
pub struct PairingInterval {
    pub endpoint: f64,
    /// Set when the grid path was used instead of exact vertex enumeration.
    pub approximate: bool,
}

/// Generator count up to which the zonotope pairing enumerates vertices.
pub const PAIRING_ENUM_CAP: usize = 20;

pub fn pairing_interval(a: BodyRef, b: BodyRef) -> Result<PairingInterval> {
    if a.n() != b.n() {
        return Err(Error::Domain("pairing: dimension mismatch".into()));
    }
    if let (BodyRef::Zonotope(za), BodyRef::Zonotope(zb)) = (a, b) {
        // enumerate over the smaller generator set
        let (small, large) = if za.generators.len() <= zb.generators.len() {
            (za, zb)
        } else {
            (zb, za)
        };
        if small.generators.len() <= PAIRING_ENUM_CAP {
            return Ok(PairingInterval {
                endpoint: pairing_enumerate(small, large),
                approximate: false,
            });
        }
    }
    Ok(pairing_grid(a, b))
}

/// Exact endpoint by vertex enumeration of the first zonotope:
/// `max_sigma h_B( sum sigma_i g_i )`.
fn pairing_enumerate(small: &Zonotope, large: &Zonotope) -> f64 {
    let m = small.generators.len();
    if m == 0 {
        return 0.0;
    }
    let n = small.n;
    let mut best = f64::MIN;
    // Gray-code walk: flip one generator sign per step.
    let mut a = DVector::<f64>::zeros(n);
    for g in &small.generators {
        a += g; // sigma = +1 everywhere
    }
    let mut signs = vec![1.0f64; m];
    best = best.max(large.support(&a));
    let total = 1usize << m;
    for k in 1..total {
        let flip = k.trailing_zeros() as usize;
        let delta = &small.generators[flip] * (-2.0 * signs[flip]);
        signs[flip] = -signs[flip];
        a += delta;
        best = best.max(large.support(&a));
    }
    best
}

/// Grid path with refinement: scan boundary points of `A` in sampled
/// directions, evaluate `h_B` there, then refine around the best direction
/// (n = 2 only; the refinement is a golden-section search on the angle).
fn pairing_grid(a: BodyRef, b: BodyRef) -> PairingInterval {
    let n = a.n();
    let dirs = direction_grid(n, membership_grid(n));
    let mut best = f64::MIN;
    let mut best_idx = 0usize;
    for (k, u) in dirs.iter().enumerate() {
        // both signs of the direction: h_B is even, so <a(u),.> vs <a(-u),.>
        // give the same pairing value; one sign suffices.
        let v = b.support(&a.support_point(u));
        if v > best {
            best = v;
            best_idx = k;
        }
    }
    if n == 2 {
        let h = std::f64::consts::PI / dirs.len() as f64;
        let theta0 = dirs[best_idx][1].atan2(dirs[best_idx][0]);
        let eval = |t: f64| {
            let u = DVector::from_vec(vec![t.cos(), t.sin()]);
            b.support(&a.support_point(&u))
        };
        let (mut lo, mut hi) = (theta0 - h, theta0 + h);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        let (mut fc, mut fd) = (eval(c), eval(d));
        for _ in 0..40 {
            if fc > fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = eval(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = eval(d);
            }
        }
        best = best.max(fc).max(fd);
    }
    PairingInterval {
        endpoint: best,
        approximate: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DyadicLattice, ScalarField, VectorField};
    use rand::{Rng, SeedableRng};

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    // ---- exhaustive sign-pattern vertex hull oracle (n = 2) ----

    fn hull(points: &mut Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        if points.len() < 3 {
            return points.clone();
        }
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
            (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
        };
        let mut lower: Vec<(f64, f64)> = Vec::new();
        for &p in points.iter() {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0
            {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<(f64, f64)> = Vec::new();
        for &p in points.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0
            {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        lower
    }

    fn oracle_membership(z: &DVector<f64>, body: &Zonotope, tol: f64) -> bool {
        // enumerate all 2^m vertices, build the hull, then test the point
        let m = body.generators().len();
        let mut pts = Vec::with_capacity(1 << m);
        for mask in 0..(1u32 << m) {
            let mut v = DVector::zeros(2);
            for (i, g) in body.generators().iter().enumerate() {
                if mask >> i & 1 == 1 {
                    v += g;
                } else {
                    v -= g;
                }
            }
            pts.push((v[0], v[1]));
        }
        let h = hull(&mut pts);
        if h.len() < 3 {
            // degenerate: segment or point
            return h.iter().any(|&(x, y)| {
                ((x - z[0]).powi(2) + (y - z[1]).powi(2)).sqrt() < tol
            }) || segment_contains(&h, z, tol);
        }
        for i in 0..h.len() {
            let a = h[i];
            let b = h[(i + 1) % h.len()];
            let cr = (b.0 - a.0) * (z[1] - a.1) - (b.1 - a.1) * (z[0] - a.0);
            let edge = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            if cr < -tol * edge.max(1.0) {
                return false;
            }
        }
        true
    }

    fn segment_contains(h: &[(f64, f64)], z: &DVector<f64>, tol: f64) -> bool {
        if h.len() != 2 {
            return false;
        }
        let (a, b) = (h[0], h[1]);
        let d = (b.0 - a.0, b.1 - a.1);
        let len2 = d.0 * d.0 + d.1 * d.1;
        let t = ((z[0] - a.0) * d.0 + (z[1] - a.1) * d.1) / len2;
        let proj = (a.0 + t * d.0, a.1 + t * d.1);
        let dist = ((z[0] - proj.0).powi(2) + (z[1] - proj.1).powi(2)).sqrt();
        (0.0 - tol..=1.0 + tol).contains(&t) && dist < tol
    }

    #[test]
    fn constant_field_body_is_a_segment() {
        let lat = DyadicLattice::new(1, 3).unwrap();
        let v = vec2(1.0, 2.0);
        let f = VectorField::constant(lat, &v);
        let z = body_average(&f, &lat.root()).unwrap();
        // all generators collinear; support equals |<v,u>|
        for u in direction_grid(2, 32) {
            assert!((z.support(&u) - v.dot(&u).abs()) < 1e-12);
        }
        // zero field gives the degenerate body {0}
        let zf = VectorField::constant(lat, &vec2(0.0, 0.0));
        let zb = body_average(&zf, &lat.root()).unwrap();
        assert!(membership(&vec2(0.0, 0.0), &zb).unwrap().inside);
        assert!(!membership(&vec2(1e-6, 0.0), &zb).unwrap().inside);
    }

    #[test]
    fn plain_average_lies_in_the_body() {
        let lat = DyadicLattice::new(1, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let f = VectorField::from_fn(lat, 2, |_, _| rng.gen_range(-2.0..2.0));
        for cube in lat.cubes() {
            let z = body_average(&f, &cube).unwrap();
            let avg = f.average(&cube).unwrap();
            let rep = membership(&avg, &z).unwrap();
            assert!(rep.inside, "margin {}", rep.margin);
        }
    }

    #[test]
    fn support_function_closed_form_r1() {
        let lat = DyadicLattice::new(1, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let f = VectorField::from_fn(lat, 2, |_, _| rng.gen_range(-2.0..2.0));
        let q = lat.root();
        let z = body_average(&f, &q).unwrap();
        let cells = lat.cells_in(&q);
        for u in direction_grid(2, 64) {
            let want: f64 = cells
                .iter()
                .map(|&c| f.get_vector(c).dot(&u).abs())
                .sum::<f64>()
                / cells.len() as f64;
            assert!((z.support(&u) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn vertex_membership_cases() {
        let z = Zonotope::new(2, vec![vec2(1.0, 0.0), vec2(0.0, 1.0)]).unwrap();
        let rep = membership(&vec2(1.0, 1.0), &z).unwrap();
        assert!(rep.inside);
        assert!(rep.margin.abs() < 1e-9);
        let rep = membership(&vec2(1.01, 0.0), &z).unwrap();
        assert!(!rep.inside);
        // worst separating direction is the first axis
        assert!((rep.worst_direction[0].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn membership_agrees_with_sign_enumeration_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let m = 12;
            let gens: Vec<DVector<f64>> = (0..m)
                .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / m as f64)
                .collect();
            let z = Zonotope::new(2, gens).unwrap();
            for _ in 0..10 {
                let pt = vec2(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
                let got = membership(&pt, &z).unwrap();
                let want = oracle_membership(&pt, &z, 1e-9);
                if got.margin.abs() > 1e-7 {
                    // away from the boundary the two must agree
                    assert_eq!(got.inside, want, "pt = {pt:?}, margin = {}", got.margin);
                }
            }
        }
    }

    #[test]
    fn minkowski_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(24);
        let gens: Vec<DVector<f64>> = (0..6)
            .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let a = Zonotope::new(2, gens).unwrap();
        let zero = Zonotope::new(2, vec![]).unwrap();
        let sum = minkowski(&[&a, &zero], &[1.0, 1.0]).unwrap();
        let dbl = minkowski(&[&a, &a], &[1.0, 1.0]).unwrap();
        for u in direction_grid(2, 360) {
            assert!((sum.support(&u) - a.support(&u)).abs() < 1e-12);
            assert!((dbl.support(&u) - 2.0 * a.support(&u)).abs() < 1e-12);
        }
        let b3 = Zonotope::new(3, vec![DVector::zeros(3)]).unwrap();
        assert!(minkowski(&[&a, &b3], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn support_body_reductions() {
        let lat = DyadicLattice::new(1, 4).unwrap();
        // constant field: h(u) = |<v,u>| for every r
        let v = vec2(0.7, -1.3);
        let f = VectorField::constant(lat, &v);
        let sb = body_average_r(&f, 2.0, &lat.root(), 64).unwrap();
        for (u, &h) in sb.dirs().iter().zip(sb.values()) {
            assert!((h - v.dot(u).abs()).abs() < 1e-12);
        }

        // r -> 1 limit matches the zonotope support
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(25);
        let f = VectorField::from_fn(lat, 2, |_, _| rng.gen_range(-2.0..2.0));
        let z = body_average(&f, &lat.root()).unwrap();
        let sb = body_average_r(&f, 1.0 + 1e-8, &lat.root(), 64).unwrap();
        for (u, &h) in sb.dirs().iter().zip(sb.values()) {
            assert!((h - z.support(u)).abs() < 1e-6);
        }
    }

    #[test]
    fn support_body_grows_with_r_and_is_subadditive() {
        let lat = DyadicLattice::new(1, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(26);
        let f = VectorField::from_fn(lat, 2, |_, _| rng.gen_range(-2.0..2.0));
        let r1 = body_average_r(&f, 1.5, &lat.root(), 64).unwrap();
        let r2 = body_average_r(&f, 2.5, &lat.root(), 64).unwrap();
        for k in 0..r1.values().len() {
            assert!(r1.values()[k] <= r2.values()[k] + 1e-12);
        }
        // triangle inequality of the sampled support on random direction sums
        let z = body_average(&f, &lat.root()).unwrap();
        for _ in 0..100 {
            let u1 = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let u2 = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let h = |u: &DVector<f64>| z.support(u);
            assert!(h(&(&u1 + &u2)) <= h(&u1) + h(&u2) + 1e-12);
        }
    }

    #[test]
    fn pairing_collinear_and_square() {
        // A = B = segment [-v, v]: endpoint |v|^2
        let v = vec2(0.6, 0.8);
        let seg = Zonotope::new(2, vec![v.clone()]).unwrap();
        let p = pairing_interval(BodyRef::Zonotope(&seg), BodyRef::Zonotope(&seg)).unwrap();
        assert!(!p.approximate);
        assert!((p.endpoint - 1.0).abs() < 1e-12);

        // unit square zonotope paired with itself: endpoint 2 at a = b = (1,1)
        let sq = Zonotope::new(2, vec![vec2(1.0, 0.0), vec2(0.0, 1.0)]).unwrap();
        let p = pairing_interval(BodyRef::Zonotope(&sq), BodyRef::Zonotope(&sq)).unwrap();
        assert!((p.endpoint - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pairing_grid_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(27);
        for _ in 0..10 {
            let ga: Vec<DVector<f64>> = (0..8)
                .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / 8.0)
                .collect();
            let gb: Vec<DVector<f64>> = (0..8)
                .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / 8.0)
                .collect();
            let a = Zonotope::new(2, ga).unwrap();
            let b = Zonotope::new(2, gb).unwrap();
            let exact = pairing_interval(BodyRef::Zonotope(&a), BodyRef::Zonotope(&b)).unwrap();
            let grid = pairing_grid(BodyRef::Zonotope(&a), BodyRef::Zonotope(&b));
            assert!(grid.approximate);
            assert!(grid.endpoint <= exact.endpoint + 1e-12);
            assert!(
                exact.endpoint - grid.endpoint <= 1e-3 * exact.endpoint.max(1e-6),
                "exact {} grid {}",
                exact.endpoint,
                grid.endpoint
            );
        }
    }

    #[test]
    fn pairing_monotone_under_minkowski_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(28);
        let ga: Vec<DVector<f64>> = (0..5)
            .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let gb: Vec<DVector<f64>> = (0..5)
            .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let gc: Vec<DVector<f64>> = (0..4)
            .map(|_| vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let a = Zonotope::new(2, ga).unwrap();
        let b = Zonotope::new(2, gb).unwrap();
        let c = Zonotope::new(2, gc).unwrap();
        let ac = minkowski(&[&a, &c], &[1.0, 1.0]).unwrap();
        let base = pairing_interval(BodyRef::Zonotope(&a), BodyRef::Zonotope(&b))
            .unwrap()
            .endpoint;
        let grown = pairing_interval(BodyRef::Zonotope(&ac), BodyRef::Zonotope(&b))
            .unwrap()
            .endpoint;
        assert!(grown >= base - 1e-12);
    }
}
