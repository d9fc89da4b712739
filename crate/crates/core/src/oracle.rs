//! Exact (Gillespie) simulation of NR receptors competing for n ligand
//! species at fixed ligand concentrations, plus estimators used to check
//! the analytic occupancy, variance and spectrum.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::LigandSpec;
use crate::receptor_noise::build_noise_model;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceptorTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// counts[j][k]: receptors bound to species j at sample k.
    pub counts: Vec<Vec<u32>>,
    pub seed: u64,
    pub nr: u32,
    /// Analytic relaxation time of the simulated system (inf if no ligands).
    pub tau_b: f64,
    pub events: u64,
}

impl ReceptorTrajectory {
    pub fn total(&self) -> Vec<f64> {
        let n = self.times.len();
        let mut t = vec![0.0; n];
        for c in &self.counts {
            for (acc, v) in t.iter_mut().zip(c) {
                *acc += *v as f64;
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalStats {
    pub p_hat: f64,
    pub var_hat: f64,
    pub p_hat_j: Vec<f64>,
    pub window: f64,
    /// Effective number of independent samples, window / (2 tau_B).
    pub n_eff: f64,
    /// Window shorter than 100 tau_B.
    pub short_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPsd {
    pub freq: Vec<f64>,
    pub psd: Vec<f64>,
    /// Log-binned spectrum used for the fit.
    pub bin_freq: Vec<f64>,
    pub bin_psd: Vec<f64>,
    pub corner_hz: f64,
    pub level: f64,
    /// RMS of natural-log residuals of the Lorentzian fit over the bins.
    pub fit_rms: f64,
    /// Mean PSD well below the fitted corner over the PSD at the corner.
    pub low_to_corner: f64,
}

/// Event-driven simulation with population-level rates. Starts from the
/// all-free state; use `empirical_stats` burn-in to discard the transient.
pub fn simulate(species: &[LigandSpec], nr: u32, duration: f64, sample_dt: f64, seed: u64) -> Result<ReceptorTrajectory> {
    simulate_stream(species, nr, duration, sample_dt, seed, 0)
}

/// Independent replica `stream` of the seeded generator.
pub fn simulate_stream(
    species: &[LigandSpec],
    nr: u32,
    duration: f64,
    sample_dt: f64,
    seed: u64,
    stream: u64,
) -> Result<ReceptorTrajectory> {
    if nr < 1 {
        return Err(Error::Validation("NR >= 1".into()));
    }
    if !(duration > 0.0 && sample_dt > 0.0 && sample_dt <= duration) {
        return Err(Error::Validation("0 < sample_dt <= duration".into()));
    }
    let tau_b = build_noise_model(species, nr as f64)?.tau_b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let n_samples = (duration / sample_dt).floor() as usize + 1;
    let times: Vec<f64> = (0..n_samples).map(|k| k as f64 * sample_dt).collect();
    let n = species.len();
    let mut counts = vec![Vec::with_capacity(n_samples); n];
    let bind: Vec<f64> = species.iter().map(|s| s.k_on * s.conc0).collect();
    let unbind: Vec<f64> = species.iter().map(|s| s.k_off).collect();
    let bind_total: f64 = bind.iter().sum();

    let mut bound = vec![0u32; n];
    let mut free = nr;
    let mut t = 0.0;
    let mut next = 0usize;
    let mut events = 0u64;
    loop {
        let r_bind = bind_total * free as f64;
        let r_unbind: f64 = bound.iter().zip(&unbind).map(|(b, k)| *b as f64 * k).sum();
        let rate = r_bind + r_unbind;
        let dt = if rate > 0.0 {
            -(1.0 - rng.gen::<f64>()).ln() / rate
        } else {
            f64::INFINITY
        };
        let t_next = t + dt;
        while next < n_samples && times[next] < t_next {
            for (c, b) in counts.iter_mut().zip(&bound) {
                c.push(*b);
            }
            next += 1;
        }
        if next >= n_samples {
            break;
        }
        t = t_next;
        events += 1;
        let mut u = rng.gen::<f64>() * rate;
        let mut done = false;
        for j in 0..n {
            let r = bind[j] * free as f64;
            if u < r {
                bound[j] += 1;
                free -= 1;
                done = true;
                break;
            }
            u -= r;
        }
        if !done {
            for j in 0..n {
                let r = bound[j] as f64 * unbind[j];
                if u < r || j == n - 1 {
                    if bound[j] > 0 {
                        bound[j] -= 1;
                        free += 1;
                    }
                    break;
                }
                u -= r;
            }
        }
    }
    Ok(ReceptorTrajectory {
        dt: sample_dt,
        times,
        counts,
        seed,
        nr,
        tau_b,
        events,
    })
}

pub fn empirical_stats(traj: &ReceptorTrajectory) -> EmpiricalStats {
    let total = traj.total();
    let burn = if traj.tau_b.is_finite() {
        ((10.0 * traj.tau_b / traj.dt).ceil() as usize).min(total.len().saturating_sub(1))
    } else {
        0
    };
    let w = &total[burn..];
    let nr = traj.nr as f64;
    let len = w.len() as f64;
    let mean = w.iter().sum::<f64>() / len;
    let var = if w.len() > 1 {
        w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1.0)
    } else {
        0.0
    };
    let p_hat_j = traj
        .counts
        .iter()
        .map(|c| c[burn..].iter().map(|v| *v as f64).sum::<f64>() / (len * nr))
        .collect();
    let window = (w.len().saturating_sub(1)) as f64 * traj.dt;
    let (n_eff, short_window) = if traj.tau_b.is_finite() {
        (window / (2.0 * traj.tau_b), window < 100.0 * traj.tau_b)
    } else {
        (len, false)
    };
    EmpiricalStats {
        p_hat: mean / nr,
        var_hat: var,
        p_hat_j,
        window,
        n_eff,
        short_window,
    }
}

fn welch(x: &[f64], dt: f64, nseg: usize) -> (Vec<f64>, Vec<f64>) {
    let step = nseg / 2;
    let win: Vec<f64> = (0..nseg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nseg as f64).cos())
        .collect();
    let wpow: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nseg);
    let mut acc = vec![0.0; nseg / 2 + 1];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nseg];
    let mut start = 0;
    while start + nseg <= x.len() {
        let seg = &x[start..start + nseg];
        let mean = seg.iter().sum::<f64>() / nseg as f64;
        for i in 0..nseg {
            buf[i] = Complex::new((seg[i] - mean) * win[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = dt / (wpow * segments as f64);
    let freq = (0..acc.len()).map(|k| k as f64 / (nseg as f64 * dt)).collect();
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == nseg / 2 { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    (freq, psd)
}

/// Welch periodogram of the total bound count with a Lorentzian fit.
/// Segments span at least 64 tau_B (and 256 samples); the fit uses
/// log-spaced bins below a tenth of the sampling rate.
pub fn empirical_psd(traj: &ReceptorTrajectory) -> Result<EmpiricalPsd> {
    let x = traj.total();
    let want = if traj.tau_b.is_finite() {
        (64.0 * traj.tau_b / traj.dt).ceil() as usize
    } else {
        256
    };
    let nseg = want.max(256).next_power_of_two();
    if x.len() < 4 * nseg {
        return Err(Error::Domain(format!(
            "trajectory has {} samples; the periodogram needs at least {}",
            x.len(),
            4 * nseg
        )));
    }
    let (freq, psd) = welch(&x, traj.dt, nseg);
    let fs = 1.0 / traj.dt;

    // Log-binned spectrum, 20 bins per decade, DC excluded.
    let f_lo = freq[1];
    let f_hi = fs / 10.0;
    let nb = ((f_hi / f_lo).log10() * 20.0).ceil().max(1.0) as usize;
    let mut sums = vec![(0.0, 0.0, 0usize); nb];
    for (f, p) in freq.iter().zip(&psd).skip(1) {
        if *f > f_hi {
            break;
        }
        let b = (((f / f_lo).log10() * 20.0).floor() as usize).min(nb - 1);
        sums[b].0 += f;
        sums[b].1 += p;
        sums[b].2 += 1;
    }
    let (bin_freq, bin_psd): (Vec<f64>, Vec<f64>) = sums
        .iter()
        .filter(|s| s.2 > 0 && s.1 > 0.0)
        .map(|s| (s.0 / s.2 as f64, s.1 / s.2 as f64))
        .unzip();
    if bin_freq.len() < 4 {
        return Err(Error::Domain("too few spectral bins for a fit".into()));
    }

    // Grid search over log fc; the level has a closed form in log space.
    let logs: Vec<f64> = bin_psd.iter().map(|p| p.ln()).collect();
    let fit = |fc: f64| {
        let shape: Vec<f64> = bin_freq.iter().map(|f| -(1.0 + (f / fc).powi(2)).ln()).collect();
        let ln_level = logs.iter().zip(&shape).map(|(l, s)| l - s).sum::<f64>() / logs.len() as f64;
        let sse: f64 = logs.iter().zip(&shape).map(|(l, s)| (l - s - ln_level).powi(2)).sum();
        (sse, ln_level)
    };
    let (lo, hi) = (bin_freq[0].ln() - 2.0, bin_freq[bin_freq.len() - 1].ln() + 2.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let coarse = 400;
    for i in 0..=coarse {
        let lf = lo + (hi - lo) * i as f64 / coarse as f64;
        let (sse, ll) = fit(lf.exp());
        if sse < best.0 {
            best = (sse, lf, ll);
        }
    }
    let span = (hi - lo) / coarse as f64;
    for i in 0..=400 {
        let lf = best.1 - span + 2.0 * span * i as f64 / 400.0;
        let (sse, ll) = fit(lf.exp());
        if sse < best.0 {
            best = (sse, lf, ll);
        }
    }
    let corner_hz = best.1.exp();
    let fit_rms = (best.0 / logs.len() as f64).sqrt();

    let low: Vec<f64> = bin_freq
        .iter()
        .zip(&bin_psd)
        .filter(|(f, _)| **f < corner_hz / 5.0)
        .map(|(_, p)| *p)
        .collect();
    let at_corner = interp_log(&bin_freq, &bin_psd, corner_hz);
    let low_to_corner = if low.is_empty() || at_corner.is_none() {
        f64::NAN
    } else {
        low.iter().sum::<f64>() / low.len() as f64 / at_corner.unwrap()
    };
    Ok(EmpiricalPsd {
        freq,
        psd,
        bin_freq,
        bin_psd,
        corner_hz,
        level: best.2.exp(),
        fit_rms,
        low_to_corner,
    })
}

fn interp_log(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let i = xs.windows(2).position(|w| w[0] <= x && x <= w[1])?;
    let t = (x / xs[i]).ln() / (xs[i + 1] / xs[i]).ln();
    Some((ys[i].ln() * (1.0 - t) + ys[i + 1].ln() * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Role;

    fn lig(bind_rate: f64, k_off: f64) -> LigandSpec {
        // k_on * conc0 = bind_rate with k_on = 1.
        LigandSpec::new("x", bind_rate, 1.0, k_off, 0.1, Role::Target)
    }

    #[test]
    fn no_ligands_stay_free() {
        let t = simulate(&[], 50, 1.0, 0.01, 1).unwrap();
        assert!(t.counts.is_empty());
        assert!(t.total().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let s = [lig(10.0, 10.0)];
        let a = simulate(&s, 100, 5.0, 0.01, 7).unwrap();
        let b = simulate(&s, 100, 5.0, 0.01, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate(&s, 100, 5.0, 0.01, 8).unwrap();
        assert_ne!(a.counts, c.counts);
        let d = simulate_stream(&s, 100, 5.0, 0.01, 7, 1).unwrap();
        assert_ne!(a.counts, d.counts);
    }

    #[test]
    fn counts_respect_receptor_budget() {
        let s = [lig(10.0, 5.0), lig(30.0, 5.0)];
        let t = simulate(&s, 200, 2.0, 0.001, 3).unwrap();
        assert!(t.total().iter().all(|v| *v <= 200.0));
    }

    #[test]
    fn all_bound_limit() {
        let s = [lig(1e4, 1e-3)];
        let t = simulate(&s, 100, 20.0, 0.01, 2).unwrap();
        let st = empirical_stats(&t);
        assert!(st.p_hat > 0.999);
        assert!(st.var_hat < 0.1);
    }

    #[test]
    fn white_noise_limit_is_flat() {
        // Relaxation far faster than the sampling step.
        let s = [lig(2000.0, 2000.0)];
        let mut t = simulate(&s, 200, 200.0, 0.01, 11).unwrap();
        t.tau_b = 1e-9;
        let p = empirical_psd(&t).unwrap();
        let n = p.bin_psd.len();
        let low: f64 = p.bin_psd[..n / 3].iter().sum::<f64>() / (n / 3) as f64;
        let high: f64 = p.bin_psd[n - n / 3..].iter().sum::<f64>() / (n / 3) as f64;
        assert!((low / high - 1.0).abs() < 0.2, "low {low} high {high}");
    }

    #[test]
    fn too_short_for_psd() {
        let t = simulate(&[lig(10.0, 10.0)], 10, 1.0, 0.01, 1).unwrap();
        assert!(empirical_psd(&t).is_err());
    }
}
