//! Weight-family sweeps: one row per (weight spec, operator kind), ratios of
//! measured operator-norm lower bounds to the theorem right-hand sides,
//! written as CSV and SVG.

use super::config::LabConfig;
use super::svg::{scatter_svg, Series, PALETTE};
use super::{opnorm_lower_bound, spearman};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::orlicz::choices;
use crate::reducing::reducing_all;
use crate::sparse::{bump_bound, bump_bound_commutator, sparse_apply, commutator_sparse_apply, stopping_family};
use crate::weights::{
    a1_constant, ap_constant, aqinf_sc_constant, default_direction_budget, generate_weight,
};
use crate::operators::{weighted_maximal, weighted_maximal_primed_with};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

/// Fixed CSV schema of a sweep.
pub const CSV_HEADER: &str =
    "spec_id,d,D,n,p,q,A1,Aq,Aqinf_sc,lhs_norm,rhs_bound,ratio,fit_kappa,runtime_ms";

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub spec_id: String,
    pub d: u8,
    pub depth: u32,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub a1: f64,
    pub aq: f64,
    pub aqinf_sc: f64,
    pub lhs_norm: f64,
    pub rhs_bound: f64,
    pub ratio: f64,
    pub fit_kappa: f64,
    pub runtime_ms: u128,
}

impl SweepRow {
    pub fn kind(&self) -> &str {
        self.spec_id.split(':').nth(1).unwrap_or("?")
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6},{}",
            self.spec_id,
            self.d,
            self.depth,
            self.n,
            self.p,
            self.q,
            self.a1,
            self.aq,
            self.aqinf_sc,
            self.lhs_norm,
            self.rhs_bound,
            self.ratio,
            self.fit_kappa,
            self.runtime_ms
        )
    }
}

/// Runs the configured sweep. Rows are deterministic given the config seed.
pub fn run_sweep(cfg: &LabConfig) -> Result<Vec<SweepRow>> {
    let lattice = cfg.build_lattice()?;
    let (p, q) = (cfg.exponents.p, cfg.exponents.q);
    if !(p > 1.0) || !(1.0 <= q && q < p) {
        return Err(Error::Config(format!(
            "sweep needs 1 <= q < p, got p={p} q={q}"
        )));
    }
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for (wi, spec) in cfg.weights.iter().enumerate() {
        let weight = generate_weight(spec, &lattice)?;
        let n = weight.n();
        let a1 = a1_constant(&weight, None)?;
        let aq = if (q - 1.0).abs() < 1e-12 {
            a1
        } else {
            ap_constant(&weight, q, None)?
        };
        let ksc = aqinf_sc_constant(&weight, q, default_direction_budget(n))?.value;
        let row_seed = rng.gen::<u64>();
        let push = |rows: &mut Vec<SweepRow>, kind: &str, lhs: f64, rhs: f64, kappa: f64, ms: u128| {
            rows.push(SweepRow {
                spec_id: format!("w{wi:02}:{kind}"),
                d: lattice.dim(),
                depth: lattice.depth(),
                n,
                p,
                q,
                a1,
                aq,
                aqinf_sc: ksc,
                lhs_norm: lhs,
                rhs_bound: rhs,
                ratio: lhs / rhs,
                fit_kappa: kappa,
                runtime_ms: ms,
            });
        };

        // M_{W,p} against [W]_{A_q}^{1/p}
        let t0 = Instant::now();
        let eval = |f: &VectorField| weighted_maximal(&weight, f, p, false);
        let lhs = opnorm_lower_bound(&eval, lattice, n, p, cfg.trials, 4 * cfg.trials, row_seed)?;
        push(&mut rows, "M", lhs, aq.powf(1.0 / p), 1.0, t0.elapsed().as_millis());

        // M'_{W,p} with the reducing operators
        let t0 = Instant::now();
        let ops = reducing_all(&weight, p, None)?;
        let kappa = ops.iter().fold(1.0f64, |m, o| m.max(o.kappa));
        let evalp = |f: &VectorField| weighted_maximal_primed_with(&weight, f, p, &ops);
        let lhs = opnorm_lower_bound(&evalp, lattice, n, p, cfg.trials, 4 * cfg.trials, row_seed ^ 1)?;
        push(&mut rows, "Mp", lhs, aq.powf(1.0 / p), kappa, t0.elapsed().as_millis());

        // sparse operator rows against the bump-lemma right-hand side
        let t0 = Instant::now();
        let mut driver_rng = ChaCha8Rng::seed_from_u64(row_seed ^ 2);
        let driver = VectorField::from_fn(lattice, n, |_, _| driver_rng.gen_range(-1.0..1.0));
        let (family, diag) = stopping_family(&weight, &driver, p, q, &lattice.root())?;
        let (ya, yb) = if (q - 1.0).abs() < 1e-12 {
            choices::a1_pair(p, lattice.dim(), ksc)?
        } else {
            choices::aq_pair(p, q, lattice.dim(), ksc)?
        };
        let bump = bump_bound(&family, &weight, &weight, p, &ya, &yb)?;
        let eval_ts = |f: &VectorField| sparse_apply(&family, &weight, &weight, p, &f.norm_field());
        let lhs = opnorm_lower_bound(&eval_ts, lattice, n, p, cfg.trials, 2 * cfg.trials, row_seed ^ 3)?;
        push(
            &mut rows,
            "TS",
            lhs,
            bump.bound,
            diag.max_fit_kappa.max(1.0),
            t0.elapsed().as_millis(),
        );

        // commutator rows against the commutator bump right-hand side,
        // with a discretized log-distance BMO symbol
        let t0 = Instant::now();
        let b_field = log_distance_symbol(&lattice, 1.0 / 3.0);
        let (ca, cb, cc, cd) = if (q - 1.0).abs() < 1e-12 {
            choices::a1_comm_quadruple(p, lattice.dim(), ksc)?
        } else {
            choices::aq_comm_quadruple(p, q, lattice.dim(), ksc)?
        };
        let comm = bump_bound_commutator(&family, &weight, &weight, p, &b_field, &ca, &cb, &cc, &cd)?;
        let eval_c = |f: &VectorField| {
            commutator_sparse_apply(&family, &weight, &weight, p, &b_field, &f.norm_field())
        };
        let lhs = opnorm_lower_bound(&eval_c, lattice, n, p, cfg.trials, 2 * cfg.trials, row_seed ^ 4)?;
        push(
            &mut rows,
            "bTS",
            lhs,
            comm.bound,
            diag.max_fit_kappa.max(1.0),
            t0.elapsed().as_millis(),
        );
    }
    for row in &rows {
        if !row.lhs_norm.is_finite() || !row.rhs_bound.is_finite() || row.ratio < 0.0 {
            return Err(Error::Domain(format!(
                "sweep row {} failed a hard invariant (lhs={}, rhs={})",
                row.spec_id, row.lhs_norm, row.rhs_bound
            )));
        }
    }
    Ok(rows)
}

/// The BMO model symbol: `b(x) = ln |x - x0|` sampled at cell centers.
pub fn log_distance_symbol(lattice: &crate::grid::DyadicLattice, x0: f64) -> ScalarField {
    ScalarField::from_fn(*lattice, |cell| {
        let c = lattice.cell_center(cell);
        let d2 = if lattice.dim() == 1 {
            (c[0] - x0).abs()
        } else {
            ((c[0] - x0).powi(2) + (c[1] - x0).powi(2)).sqrt()
        };
        d2.max(0.25 / lattice.side() as f64).ln()
    })
}

/// Dyadic BMO norm `max_Q < |b - <b>_Q| >_Q`.
pub fn bmo_norm(b: &ScalarField) -> f64 {
    let lat = *b.lattice();
    let mut worst = 0.0f64;
    for cube in lat.cubes() {
        let cells = lat.cells_in(&cube);
        let m = cells.len() as f64;
        let avg: f64 = cells.iter().map(|&c| b.get(c)).sum::<f64>() / m;
        let osc: f64 = cells.iter().map(|&c| (b.get(c) - avg).abs()).sum::<f64>() / m;
        worst = worst.max(osc);
    }
    worst
}

pub fn write_outputs(rows: &[SweepRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;
    let kinds = ["M", "Mp", "TS", "bTS"];
    let series: Vec<Series> = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| Series {
            label: (*kind).into(),
            color: PALETTE[i % PALETTE.len()],
            points: rows
                .iter()
                .filter(|r| r.kind() == *kind)
                .map(|r| (r.aq, r.ratio))
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    let svg = scatter_svg(
        "measured lhs / theorem rhs vs driving constant",
        "[W]_{A_q} (log)",
        "ratio",
        &series,
    );
    std::fs::write(dir.join("sweep.svg"), svg)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse("unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(Error::Parse(format!("line {}: wrong column count", ln + 2)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))
        };
        rows.push(SweepRow {
            spec_id: f[0].to_string(),
            d: f[1].parse().map_err(|_| Error::Parse("bad d".into()))?,
            depth: f[2].parse().map_err(|_| Error::Parse("bad D".into()))?,
            n: f[3].parse().map_err(|_| Error::Parse("bad n".into()))?,
            p: parse(f[4])?,
            q: parse(f[5])?,
            a1: parse(f[6])?,
            aq: parse(f[7])?,
            aqinf_sc: parse(f[8])?,
            lhs_norm: parse(f[9])?,
            rhs_bound: parse(f[10])?,
            ratio: parse(f[11])?,
            fit_kappa: parse(f[12])?,
            runtime_ms: f[13].parse().map_err(|_| Error::Parse("bad ms".into()))?,
        });
    }
    Ok(rows)
}

/// Per-kind summary of a sweep: extremes and trend against the driving
/// constant.
#[derive(Clone, Debug)]
pub struct KindSummary {
    pub kind: String,
    pub count: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub spearman_vs_constant: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<KindSummary> {
    let mut kinds: Vec<String> = rows.iter().map(|r| r.kind().to_string()).collect();
    kinds.sort();
    kinds.dedup();
    kinds
        .into_iter()
        .map(|kind| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.kind() == kind).collect();
            let ratios: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
            let consts: Vec<f64> = sel.iter().map(|r| r.aq).collect();
            KindSummary {
                kind,
                count: sel.len(),
                min_ratio: ratios.iter().cloned().fold(f64::MAX, f64::min),
                max_ratio: ratios.iter().cloned().fold(f64::MIN, f64::max),
                spearman_vs_constant: if sel.len() >= 3 {
                    spearman(&consts, &ratios)
                } else {
                    0.0
                },
            }
        })
        .collect()
}
