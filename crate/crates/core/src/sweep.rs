//! Declarative sweeps over any scalar config key, and the tables they fill.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::link::{alphabet_sep, config_alphabet, db, evaluate_config, snr1, snr2, Variant};
use crate::params::Config;
use crate::quadrature::{lin_grid, log_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" | "lin" => Ok(Scale::Linear),
            "log" => Ok(Scale::Log),
            _ => Err(Error::config("scale", format!("`{s}` is not one of linear, log"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Sensitivity,
    Snr1,
    Snr2,
    Sep1,
    Sep2,
    Psd,
    Equilibrium,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sensitivity" => Metric::Sensitivity,
            "snr1" => Metric::Snr1,
            "snr2" => Metric::Snr2,
            "sep1" => Metric::Sep1,
            "sep2" => Metric::Sep2,
            "psd" => Metric::Psd,
            "equilibrium" => Metric::Equilibrium,
            _ => {
                return Err(Error::config(
                    "outputs",
                    format!("unknown metric `{s}` (sensitivity, snr1, snr2, sep1, sep2, psd, equilibrium)"),
                ))
            }
        })
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Metric::Sensitivity => &["s_target", "s_interferer", "s_sum"],
            Metric::Snr1 => &["snr1_db"],
            Metric::Snr2 => &["snr2_db"],
            Metric::Sep1 => &["sep1_1bit", "sep1_2bit"],
            Metric::Sep2 => &["sep2_1bit", "sep2_2bit"],
            Metric::Psd => &["sigma2_i", "sigma2_binding", "sigma2_flicker"],
            Metric::Equilibrium => &["theta_target", "theta_interferer", "p_free_fraction"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub key: String,
    pub scale: Scale,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub outputs: Vec<Metric>,
}

impl SweepSpec {
    pub fn validate(&self, cfg: &Config) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(Error::config("range", "sweep needs lo < hi"));
        }
        if self.points < 2 {
            return Err(Error::config("points", "sweep needs at least 2 points"));
        }
        if self.scale == Scale::Log && !(self.lo > 0.0) {
            return Err(Error::config("range", "log sweep needs lo > 0"));
        }
        if self.outputs.is_empty() {
            return Err(Error::config("outputs", "no metrics requested"));
        }
        cfg.get_scalar(&self.key).map(|_| ())
    }

    pub fn values(&self) -> Vec<f64> {
        match self.scale {
            Scale::Linear => lin_grid(self.lo, self.hi, self.points),
            Scale::Log => log_grid(self.lo, self.hi, self.points),
        }
    }
}

/// Rows of numbers plus a per-row error flag (`None` = row computed).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub status: Vec<Option<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            status: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
        self.status.push(None);
    }

    /// Keeps the leading values and fills the rest with NaN.
    pub fn push_failed(&mut self, lead: &[f64], err: &Error) {
        let mut row = lead.to_vec();
        row.resize(self.columns.len(), f64::NAN);
        self.rows.push(row);
        self.status.push(Some(err.to_string()));
    }

    pub fn failures(&self) -> usize {
        self.status.iter().filter(|s| s.is_some()).count()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn metric_columns(outputs: &[Metric]) -> Vec<&'static str> {
    outputs.iter().flat_map(|m| m.columns().iter().copied()).collect()
}

/// Evaluates the requested metrics for one configuration.
pub fn evaluate_metrics(cfg: &Config, outputs: &[Metric]) -> Result<Vec<f64>> {
    let needs_pipeline = outputs
        .iter()
        .any(|m| matches!(m, Metric::Sensitivity | Metric::Snr1 | Metric::Snr2 | Metric::Psd | Metric::Equilibrium));
    let pipe = if needs_pipeline { Some(evaluate_config(cfg, &[])?) } else { None };
    let mut seps: Option<[(f64, f64); 2]> = None;
    let mut out = Vec::new();
    for m in outputs {
        match m {
            Metric::Sensitivity => {
                let r = &pipe.as_ref().unwrap().response;
                out.extend([r.target.s, r.interferer.s, r.sum.s]);
            }
            Metric::Snr1 => out.push(db(snr1(&pipe.as_ref().unwrap().stats()))),
            Metric::Snr2 => out.push(db(snr2(&pipe.as_ref().unwrap().stats()))),
            Metric::Sep1 | Metric::Sep2 => {
                if seps.is_none() {
                    let mut v = [(0.0, 0.0); 2];
                    for (slot, bits) in v.iter_mut().zip([1, 2]) {
                        let a = config_alphabet(cfg, bits)?;
                        *slot = (
                            alphabet_sep(cfg, &a, Variant::Sep1)?.sep.p_e,
                            alphabet_sep(cfg, &a, Variant::Sep2)?.sep.p_e,
                        );
                    }
                    seps = Some(v);
                }
                let v = seps.unwrap();
                if *m == Metric::Sep1 {
                    out.extend([v[0].0, v[1].0]);
                } else {
                    out.extend([v[0].1, v[1].1]);
                }
            }
            Metric::Psd => {
                let n = &pipe.as_ref().unwrap().noise;
                out.extend([n.sigma2_i, n.sigma2_binding, n.sigma2_flicker]);
            }
            Metric::Equilibrium => {
                let p = pipe.as_ref().unwrap();
                let t = p.theta.first().copied().unwrap_or(0.0);
                let i: f64 = p.theta.iter().skip(1).sum();
                out.extend([t, i, p.equilibrium.p_free]);
            }
        }
    }
    Ok(out)
}

/// Evaluates `f` at every point in parallel; results stay in input order.
pub fn par_points<T, F>(xs: &[f64], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    xs.par_iter().map(|&x| f(x)).collect()
}

/// One row per sweep value; each row starts with the swept value. Failed
/// rows are flagged and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, cfg: &Config) -> Result<Table> {
    spec.validate(cfg)?;
    let mut cols = vec![spec.key.as_str()];
    cols.extend(metric_columns(&spec.outputs));
    let mut table = Table::new(&cols);
    let xs = spec.values();
    let results = par_points(&xs, |x| {
        let mut c = cfg.clone();
        c.set_scalar(&spec.key, x)?;
        c.validate()?;
        evaluate_metrics(&c, &spec.outputs)
    });
    for (x, r) in xs.iter().zip(results) {
        match r {
            Ok(v) => {
                let mut row = vec![*x];
                row.extend(v);
                table.push(row);
            }
            Err(e) => table.push_failed(&[*x], &e),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;

    fn spec(key: &str, points: usize) -> SweepSpec {
        SweepSpec {
            key: key.into(),
            scale: Scale::Log,
            lo: 1e17,
            hi: 1e19,
            points,
            outputs: vec![Metric::Snr1, Metric::Snr2],
        }
    }

    #[test]
    fn two_point_sweep_has_two_rows() {
        let cfg = Config::preset(Preset::Table1);
        let t = run_sweep(&spec("ligand[1].conc0", 2), &cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.columns, vec!["ligand[1].conc0", "snr1_db", "snr2_db"]);
        assert_eq!(t.rows[0][0], 1e17);
        assert_eq!(t.rows[1][0], 1e19);
    }

    #[test]
    fn unknown_key_is_named() {
        let cfg = Config::preset(Preset::Table1);
        let e = run_sweep(&spec("device.nope", 3), &cfg).unwrap_err();
        assert!(e.to_string().contains("device.nope"));
    }

    #[test]
    fn bad_specs_rejected() {
        let cfg = Config::preset(Preset::Table1);
        let mut s = spec("device.Not", 1);
        assert!(run_sweep(&s, &cfg).is_err());
        s.points = 3;
        s.lo = -1.0;
        assert!(run_sweep(&s, &cfg).is_err());
    }

    #[test]
    fn failing_points_are_flagged() {
        // A beam this thin drops V_pullin below psi_s at the top of the sweep.
        let cfg = Config::preset(Preset::Table1);
        let s = SweepSpec {
            key: "device.H_nm".into(),
            scale: Scale::Log,
            lo: 1.0,
            hi: 260.0,
            points: 4,
            outputs: vec![Metric::Snr1],
        };
        let t = run_sweep(&s, &cfg).unwrap();
        assert!(t.failures() >= 1);
        assert!(t.failures() < 4);
        let bad = t.status.iter().position(|s| s.is_some()).unwrap();
        assert!(t.rows[bad][1].is_nan());
    }

    #[test]
    fn order_independent_of_evaluation_order() {
        let cfg = Config::preset(Preset::Table1);
        let s = spec("ligand[1].conc0", 6);
        let a = run_sweep(&s, &cfg).unwrap();
        let xs: Vec<f64> = s.values().into_iter().rev().collect();
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                let mut c = cfg.clone();
                c.set_scalar(&s.key, x).unwrap();
                let mut r = vec![x];
                r.extend(evaluate_metrics(&c, &s.outputs).unwrap());
                r
            })
            .rev()
            .collect();
        assert_eq!(a.rows, rows);
    }
}
