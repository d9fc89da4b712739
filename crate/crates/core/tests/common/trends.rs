//! Trend checks on the figure datasets, shared by the acceptance target.

use flexmc::figures::{figure_with, FigureRanges, FIG4_KON_FACTORS};
use flexmc::params::Config;
use flexmc::sweep::Table;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn strictly(v: &[f64], up: bool) -> bool {
    v.windows(2).all(|w| if up { w[1] > w[0] } else { w[1] < w[0] })
}

fn weakly(v: &[f64], up: bool) -> bool {
    v.windows(2).all(|w| if up { w[1] >= w[0] } else { w[1] <= w[0] })
}

fn span(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn clean(t: &Table) -> Result<(), String> {
    match t.failures() {
        0 => Ok(()),
        n => Err(format!("{n} rows failed: {}", t.status.iter().flatten().next().unwrap())),
    }
}

/// Least-squares slope of ln y against ln x.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn fig4(cfg: &Config, r: &FigureRanges) -> Verdict {
    let t = match figure_with("fig4", cfg, r) {
        Ok(t) => t,
        Err(e) => return Verdict { pass: false, detail: e.to_string() },
    };
    if let Err(d) = clean(&t) {
        return Verdict { pass: false, detail: d };
    }
    let (l, s) = (col(&t, "L2_conc"), col(&t, "sensitivity_normalized"));
    let n = r.fig4_points;
    let mut pass = true;
    let mut detail = String::new();
    let mut crossings = Vec::new();
    for (c, f) in FIG4_KON_FACTORS.iter().enumerate() {
        let (lc, sc) = (&l[c * n..(c + 1) * n], &s[c * n..(c + 1) * n]);
        let mono = weakly(sc, true);
        let top = lc[n - 1];
        let i_dec = lc.iter().position(|&x| x >= top / 10.0 * (1.0 - 1e-12)).unwrap();
        let last_decade = (sc[n - 1] - sc[i_dec]) / sc[i_dec];
        // [L2]0 where the curve first covers 90% of its rise (log-interpolated).
        let target = sc[0] + 0.9 * (sc[n - 1] - sc[0]);
        let j = sc.iter().position(|&v| v >= target).unwrap();
        let cross = if j == 0 {
            lc[0]
        } else {
            let w = (target - sc[j - 1]) / (sc[j] - sc[j - 1]);
            (lc[j - 1].ln() + w * (lc[j].ln() - lc[j - 1].ln())).exp()
        };
        crossings.push(cross);
        pass &= mono && last_decade < 0.05;
        detail += &format!("k2+x{f}: mono={mono} last-decade={last_decade:.3e} L90={cross:.3e}; ");
    }
    let ordered = crossings.windows(2).all(|w| w[1] < w[0]);
    detail += &format!("L90 ordered={ordered}");
    Verdict { pass: pass && ordered, detail }
}

pub fn fig5(cfg: &Config, r: &FigureRanges) -> Verdict {
    let t = match figure_with("fig5", cfg, r) {
        Ok(t) => t,
        Err(e) => return Verdict { pass: false, detail: e.to_string() },
    };
    let (b, f) = (col(&t, "s_binding"), col(&t, "s_flicker"));
    let n = b.len() - 1;
    let lo = b[0] > f[0];
    let hi = f[n] > b[n];
    Verdict {
        pass: lo && hi,
        detail: format!(
            "f_min: binding={:.3e} flicker={:.3e}; f_max: binding={:.3e} flicker={:.3e}",
            b[0], f[0], b[n], f[n]
        ),
    }
}

fn snr(cfg: &Config, r: &FigureRanges, id: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let t = figure_with(id, cfg, r).map_err(|e| e.to_string())?;
    clean(&t)?;
    Ok((col(&t, "snr1_db"), col(&t, "snr2_db")))
}

pub fn fig6(cfg: &Config, r: &FigureRanges) -> Verdict {
    let mut pass = true;
    let mut detail = String::new();
    let mut run = |id: &str, f: &dyn Fn(&[f64], &[f64]) -> (bool, String)| match snr(cfg, r, id) {
        Ok((s1, s2)) => {
            let (ok, d) = f(&s1, &s2);
            pass &= ok;
            detail += &format!("{id}: {} {d}; ", if ok { "ok" } else { "FAIL" });
        }
        Err(e) => {
            pass = false;
            detail += &format!("{id}: {e}; ");
        }
    };
    run("fig6a", &|s1, s2| {
        (
            strictly(s2, false) && span(s1) < 1.0,
            format!("snr2 decreasing={} snr1 span={:.3} dB", strictly(s2, false), span(s1)),
        )
    });
    run("fig6b", &|s1, s2| {
        (
            strictly(s1, true) && span(s2) < 1.0,
            format!("snr1 increasing={} snr2 span={:.3} dB", strictly(s1, true), span(s2)),
        )
    });
    run("fig6c", &|s1, s2| {
        let (d1, d2) = (s1[0] - s1[s1.len() - 1], s2[0] - s2[s2.len() - 1]);
        (
            strictly(s1, false) && strictly(s2, false) && d1 >= d2,
            format!(
                "snr1 decreasing={} snr2 decreasing={} drops {d1:.3}/{d2:.3} dB",
                strictly(s1, false),
                strictly(s2, false)
            ),
        )
    });
    run("fig6d", &|_, s2| (weakly(s2, false), format!("snr2 non-increasing={}", weakly(s2, false))));
    run("fig6e", &|_, s2| (weakly(s2, true), format!("snr2 non-decreasing={}", weakly(s2, true))));
    Verdict { pass, detail }
}

pub fn fig8(cfg: &Config, r: &FigureRanges) -> Verdict {
    let mut pass = true;
    let mut detail = String::new();
    for (multi, single) in [("fig8a", "fig6b"), ("fig8b", "fig6d"), ("fig8c", "fig6a")] {
        match (snr(cfg, r, multi), snr(cfg, r, single)) {
            (Ok((m1, m2)), Ok((s1, s2))) => {
                let worst = (0..m1.len())
                    .map(|i| (m1[i] - m2[i]) - (s1[i] - s2[i]))
                    .fold(f64::INFINITY, f64::min);
                let ok = worst >= 0.0;
                pass &= ok;
                detail += &format!("{multi} vs {single}: min(gap_multi - gap_single)={worst:.3} dB; ");
            }
            (a, b) => {
                pass = false;
                detail += &format!("{multi}: {:?} {:?}; ", a.err(), b.err());
            }
        }
    }
    Verdict { pass, detail }
}

fn seps(cfg: &Config, r: &FigureRanges, id: &str) -> Result<(Vec<f64>, [Vec<f64>; 4]), String> {
    let t = figure_with(id, cfg, r).map_err(|e| e.to_string())?;
    clean(&t)?;
    Ok((
        t.rows.iter().map(|r| r[0]).collect(),
        [col(&t, "sep1_1bit"), col(&t, "sep2_1bit"), col(&t, "sep1_2bit"), col(&t, "sep2_2bit")],
    ))
}

pub fn fig10(cfg: &Config, r: &FigureRanges) -> Verdict {
    let mut pass = true;
    let mut detail = String::new();
    match seps(cfg, r, "fig10a") {
        Ok((_, [a1, a2, b1, b2])) => {
            let inc = strictly(&a1, true) && strictly(&b1, true);
            let cap = (0..a1.len()).all(|i| b1[i] >= a1[i] && b2[i] >= a2[i]);
            pass &= inc && cap;
            detail += &format!(
                "fig10a: sep1 increasing={inc} 2bit>=1bit={cap} sep1_1bit {:.3e}->{:.3e}; ",
                a1[0],
                a1[a1.len() - 1]
            );
        }
        Err(e) => {
            pass = false;
            detail += &format!("fig10a: {e}; ");
        }
    }
    match seps(cfg, r, "fig10b") {
        Ok((_, [a1, _, b1, _])) => {
            let dec = strictly(&a1, false) && strictly(&b1, false);
            pass &= dec;
            detail += &format!("fig10b: sep1 decreasing={dec} {:.3e}->{:.3e}; ", a1[0], a1[a1.len() - 1]);
        }
        Err(e) => {
            pass = false;
            detail += &format!("fig10b: {e}; ");
        }
    }
    match seps(cfg, r, "fig10c") {
        Ok((k, [a1, a2, _, _])) => {
            let dec = strictly(&a1, false) && strictly(&a2, false);
            let (g1, g2) = (log_slope(&k, &a1), log_slope(&k, &a2));
            let steeper = g1.abs() > g2.abs();
            pass &= dec && steeper;
            detail += &format!("fig10c: both decreasing={dec} log-slopes sep1={g1:.3} sep2={g2:.3}");
        }
        Err(e) => {
            pass = false;
            detail += &format!("fig10c: {e}");
        }
    }
    Verdict { pass, detail }
}
