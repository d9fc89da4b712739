//! Datasets behind the paper's figures, generated from a base config.
//!
//! Axis ranges are not given numerically in the paper; by default each
//! swept quantity spans two decades either side of its configured value.

use crate::error::{Error, Result};
use crate::link::{db, evaluate_config, snr2};
use crate::params::{Config, Role};
use crate::quadrature::log_grid;
use crate::sweep::{par_points, run_sweep, Metric, Scale, SweepSpec, Table};

pub const FIGURE_IDS: &[&str] = &[
    "fig4", "fig5", "fig6a", "fig6b", "fig6c", "fig6d", "fig6e", "fig7", "fig8a", "fig8b", "fig8c", "fig10a",
    "fig10b", "fig10c",
];

/// k2+ multipliers (relative to the configured interferer) drawn in fig4.
pub const FIG4_KON_FACTORS: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRanges {
    pub points: usize,
    pub l2: (f64, f64),
    /// fig4 reaches further up so every curve has room to saturate.
    pub l2_fig4: (f64, f64),
    pub fig4_points: usize,
    pub p0: (f64, f64),
    pub not: (f64, f64),
    pub k_on: (f64, f64),
    pub k_off: (f64, f64),
    pub kd: (f64, f64),
    pub fig5_points: usize,
    pub fig7_points: usize,
}

impl FigureRanges {
    /// Ranges centred (in log) on the config's own values.
    pub fn centered(cfg: &Config) -> Result<Self> {
        let i = cfg
            .interferers()
            .first()
            .ok_or_else(|| Error::config("ligand", "figures need at least one interferer (ligand[1])"))?;
        let around = |x: f64| (x / 100.0, x * 100.0);
        let not = if cfg.device.not > 0.0 { cfg.device.not } else { 2.3e30 };
        Ok(FigureRanges {
            points: 25,
            l2: around(i.conc0),
            l2_fig4: (i.conc0 / 100.0, i.conc0 * 1e4),
            fig4_points: 61,
            p0: around(cfg.device.p0_surface),
            not: around(not),
            k_on: around(i.k_on),
            k_off: around(i.k_off),
            kd: around(i.kd()),
            fig5_points: 200,
            fig7_points: 21,
        })
    }
}

/// Config whose interferer list is `n` copies of the first interferer.
pub fn with_interferers(cfg: &Config, n: usize) -> Result<Config> {
    let proto = cfg
        .interferers()
        .first()
        .cloned()
        .ok_or_else(|| Error::config("ligand", "no interferer to replicate"))?;
    let mut out = cfg.clone();
    out.ligands.truncate(1);
    for k in 0..n {
        let mut l = proto.clone();
        l.name = format!("{}_{}", proto.name, k + 1);
        l.role = Role::Interferer;
        out.ligands.push(l);
    }
    Ok(out)
}

fn snr_sweep(cfg: &Config, key: &str, range: (f64, f64), points: usize) -> Result<Table> {
    run_sweep(
        &SweepSpec {
            key: key.into(),
            scale: Scale::Log,
            lo: range.0,
            hi: range.1,
            points,
            outputs: vec![Metric::Snr1, Metric::Snr2],
        },
        cfg,
    )
}

fn sep_sweep(cfg: &Config, key: &str, range: (f64, f64), points: usize) -> Result<Table> {
    let mut t = run_sweep(
        &SweepSpec {
            key: key.into(),
            scale: Scale::Log,
            lo: range.0,
            hi: range.1,
            points,
            outputs: vec![Metric::Sep1, Metric::Sep2],
        },
        cfg,
    )?;
    // Figure columns: the 1-bit pair, then the 2-bit pair.
    let order = [0, 1, 3, 2, 4];
    t.columns = order.iter().map(|&i| t.columns[i].clone()).collect();
    for r in &mut t.rows {
        *r = order.iter().map(|&i| r[i]).collect();
    }
    Ok(t)
}

fn rename_first(mut t: Table, name: &str) -> Table {
    t.columns[0] = name.to_string();
    t
}

pub fn figure(id: &str, cfg: &Config) -> Result<Table> {
    figure_with(id, cfg, &FigureRanges::centered(cfg)?)
}

pub fn figure_with(id: &str, cfg: &Config, r: &FigureRanges) -> Result<Table> {
    let n = r.points;
    Ok(match id {
        "fig4" => fig4(cfg, r)?,
        "fig5" => fig5(cfg, r)?,
        "fig6a" => rename_first(snr_sweep(cfg, "ligand[1].conc0", r.l2, n)?, "L2_conc"),
        "fig6b" => rename_first(snr_sweep(cfg, "device.P0_surface", r.p0, n)?, "P0_surface"),
        "fig6c" => rename_first(snr_sweep(cfg, "device.Not", r.not, n)?, "Not"),
        "fig6d" => rename_first(snr_sweep(cfg, "ligand[1].k_on", r.k_on, n)?, "k2_plus"),
        "fig6e" => rename_first(snr_sweep(cfg, "ligand[1].k_off", r.k_off, n)?, "k2_minus"),
        "fig7" => fig7(cfg, r)?,
        "fig8a" => rename_first(snr_sweep(&with_interferers(cfg, 2)?, "device.P0_surface", r.p0, n)?, "P0_surface"),
        "fig8b" => rename_first(snr_sweep(&with_interferers(cfg, 4)?, "ligand[*].k_on", r.k_on, n)?, "k2_plus"),
        "fig8c" => rename_first(snr_sweep(&with_interferers(cfg, 4)?, "ligand[*].conc0", r.l2, n)?, "L2_conc"),
        "fig10a" => rename_first(sep_sweep(cfg, "ligand[1].conc0", r.l2, n)?, "L2_conc"),
        "fig10b" => rename_first(sep_sweep(cfg, "device.P0_surface", r.p0, n)?, "P0_surface"),
        "fig10c" => rename_first(sep_sweep(cfg, "ligand[1].K", r.kd, n)?, "K2"),
        _ => {
            return Err(Error::UnknownFigure {
                id: id.to_string(),
                valid: FIGURE_IDS.join(", "),
            })
        }
    })
}

/// Sum-component sensitivity against [L2]0 for several k2+, normalised by
/// the largest value over all curves.
fn fig4(cfg: &Config, r: &FigureRanges) -> Result<Table> {
    let base_kon = cfg.interferers().first().map(|l| l.k_on).unwrap_or(f64::NAN);
    let xs = log_grid(r.l2_fig4.0, r.l2_fig4.1, r.fig4_points);
    let mut pts = Vec::new();
    for f in FIG4_KON_FACTORS {
        for &x in &xs {
            pts.push((x, base_kon * f));
        }
    }
    let idx: Vec<f64> = (0..pts.len()).map(|i| i as f64).collect();
    let vals = par_points(&idx, |i| {
        let (l2, kon) = pts[i as usize];
        let mut c = cfg.clone();
        c.set_scalar("ligand[1].conc0", l2)?;
        c.set_scalar("ligand[1].k_on", kon)?;
        c.validate()?;
        Ok(evaluate_config(&c, &[])?.response.sum.s)
    });
    let max = vals
        .iter()
        .filter_map(|v| v.as_ref().ok())
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut t = Table::new(&["L2_conc", "k2_plus", "sensitivity_normalized"]);
    for ((l2, kon), v) in pts.into_iter().zip(vals) {
        match v {
            Ok(s) => t.push(vec![l2, kon, s / max]),
            Err(e) => t.push_failed(&[l2, kon], &e),
        }
    }
    Ok(t)
}

fn fig5(cfg: &Config, r: &FigureRanges) -> Result<Table> {
    let grid = log_grid(cfg.device.f_min, cfg.device.f_max, r.fig5_points);
    let p = evaluate_config(cfg, &grid)?;
    let mut t = Table::new(&["f_hz", "s_binding", "s_flicker", "s_total"]);
    for i in 0..grid.len() {
        t.push(vec![grid[i], p.noise.s_binding[i], p.noise.s_flicker[i], p.noise.s_total[i]]);
    }
    Ok(t)
}

/// SNR2 over the [L2]0 x k2+ plane.
fn fig7(cfg: &Config, r: &FigureRanges) -> Result<Table> {
    let ls = log_grid(r.l2.0, r.l2.1, r.fig7_points);
    let ks = log_grid(r.k_on.0, r.k_on.1, r.fig7_points);
    let pts: Vec<(f64, f64)> = ls.iter().flat_map(|&l| ks.iter().map(move |&k| (l, k))).collect();
    let idx: Vec<f64> = (0..pts.len()).map(|i| i as f64).collect();
    let vals = par_points(&idx, |i| {
        let (l2, kon) = pts[i as usize];
        let mut c = cfg.clone();
        c.set_scalar("ligand[1].conc0", l2)?;
        c.set_scalar("ligand[1].k_on", kon)?;
        c.validate()?;
        Ok(db(snr2(&evaluate_config(&c, &[])?.stats())))
    });
    let mut t = Table::new(&["L2_conc", "k2_plus", "snr2_db"]);
    for ((l2, kon), v) in pts.into_iter().zip(vals) {
        match v {
            Ok(s2) => t.push(vec![l2, kon, s2]),
            Err(e) => t.push_failed(&[l2, kon], &e),
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;

    #[test]
    fn unknown_id_lists_valid_ones() {
        let cfg = Config::preset(Preset::Table1);
        let e = figure("fig9", &cfg).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("fig9") && msg.contains("fig10c"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn replicated_interferers() {
        let cfg = Config::preset(Preset::Table1);
        let c = with_interferers(&cfg, 4).unwrap();
        assert_eq!(c.ligands.len(), 5);
        assert!(c.interferers().iter().all(|l| l.k_on == cfg.ligands[1].k_on));
        c.validate().unwrap();
    }

    #[test]
    fn figure_shapes() {
        let cfg = Config::preset(Preset::Table1);
        let mut r = FigureRanges::centered(&cfg).unwrap();
        r.points = 3;
        r.fig4_points = 4;
        r.fig5_points = 5;
        r.fig7_points = 3;
        let t = figure_with("fig4", &cfg, &r).unwrap();
        assert_eq!(t.rows.len(), 12);
        assert_eq!(t.columns, vec!["L2_conc", "k2_plus", "sensitivity_normalized"]);
        assert_eq!(figure_with("fig5", &cfg, &r).unwrap().rows.len(), 5);
        assert_eq!(figure_with("fig7", &cfg, &r).unwrap().rows.len(), 9);
        let t = figure_with("fig10c", &cfg, &r).unwrap();
        assert_eq!(t.columns, vec!["K2", "sep1_1bit", "sep2_1bit", "sep1_2bit", "sep2_2bit"]);
        let t = figure_with("fig6b", &cfg, &r).unwrap();
        assert_eq!(t.columns, vec!["P0_surface", "snr1_db", "snr2_db"]);
    }
}
