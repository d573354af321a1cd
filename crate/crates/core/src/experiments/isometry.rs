use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::noise::{covariance_form, replicate_rng, NoiseSampler};

/// Indicator of the cell-aligned box `prod_d [lo_d/n, hi_d/n)` on all cells.
pub fn rectangle_indicator(grid: &GridSpec, lo: &[usize], hi: &[usize]) -> Vec<f64> {
    (0..grid.num_cells())
        .map(|flat| {
            let j = grid.cell_multi(flat);
            let inside = j.iter().zip(lo.iter().zip(hi)).all(|(&jd, (&l, &h))| jd >= l && jd < h);
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryPair {
    pub i: usize,
    pub j: usize,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    /// `|mc_mean - analytic| / mc_se`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub n: usize,
    pub replicates: usize,
    /// Boxes `(lo, hi)` in cell indices; the first is `[0, 1/2)^k`.
    pub panel: Vec<(Vec<usize>, Vec<usize>)>,
    pub pairs: Vec<IsometryPair>,
    pub max_z: f64,
    pub max_z_limit: f64,
    pub pass: bool,
}

impl IsometryReport {
    pub fn summary_line(&self) -> String {
        format!(
            "isometry max_z={:.3} pairs={} target<={} {}",
            self.max_z,
            self.pairs.len(),
            self.max_z_limit,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,analytic,mc_mean,mc_se,z")?;
        for p in &self.pairs {
            writeln!(out, "{},{},{:.16e},{:.16e},{:.16e},{:.16e}", p.i, p.j, p.analytic, p.mc_mean, p.mc_se, p.z)?;
        }
        Ok(())
    }
}

const PANEL_SIZE: usize = 10;
const PANEL_STREAM: u64 = 1;

fn random_panel(cfg: &StudyConfig, grid: &GridSpec) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = grid.n();
    let k = grid.k();
    let mut rng = replicate_rng(cfg.seed, PANEL_STREAM, 0);
    let mut panel = vec![(vec![0; k], vec![n / 2; k])];
    while panel.len() < PANEL_SIZE {
        let mut lo = Vec::with_capacity(k);
        let mut hi = Vec::with_capacity(k);
        for _ in 0..k {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            lo.push(a.min(b));
            hi.push(a.max(b) + 1);
        }
        panel.push((lo, hi));
    }
    panel
}

/// Compares Monte Carlo second moments of `I(phi) = sum_j phi_j B(D_j)` over
/// a panel of box indicators with the exact covariance, on the grid of
/// `reference_resolution`.
pub fn run_isometry_study(cfg: &StudyConfig) -> Result<IsometryReport> {
    cfg.validate()?;
    if cfg.kind != StudyKind::Isometry {
        return Err(Error::InvalidParameter("not an isometry configuration".into()));
    }
    if cfg.replicates < 2 {
        return Err(Error::InvalidParameter("isometry study needs >= 2 replicates".into()));
    }
    let grid = GridSpec::new(cfg.k(), cfg.reference_resolution)?;
    let panel = random_panel(cfg, &grid);
    let phis: Vec<Vec<f64>> = panel.iter().map(|(lo, hi)| rectangle_indicator(&grid, lo, hi)).collect();
    let sampler = NoiseSampler::new(&cfg.h, grid)?;
    let integrals: Vec<Vec<f64>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let noise = sampler.sample(cfg.seed, 0, r);
            phis.iter().map(|phi| noise.integrate(phi)).collect()
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..phis.len() {
        for j in i..phis.len() {
            let analytic = covariance_form(&cfg.h, &grid, &phis[i], &phis[j]);
            let products: Vec<f64> = integrals.iter().map(|v| v[i] * v[j]).collect();
            let (mc_mean, mc_se) = super::mean_and_se(&products);
            let z = if mc_se > 0.0 { (mc_mean - analytic).abs() / mc_se } else { 0.0 };
            pairs.push(IsometryPair { i, j, analytic, mc_mean, mc_se, z });
        }
    }
    let max_z = pairs.iter().map(|p| p.z).fold(0.0, f64::max);
    let limit = cfg.acceptance.max_z.unwrap_or(4.0);
    Ok(IsometryReport {
        n: grid.n(),
        replicates: cfg.replicates,
        panel,
        pairs,
        max_z,
        max_z_limit: limit,
        pass: max_z <= limit,
    })
}
