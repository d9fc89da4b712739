//! Binding noise of the receptor population under competitive binding.

use std::f64::consts::PI;

use serde::Serialize;

use crate::equilibrium::bound_probability;
use crate::error::{Error, Result};
use crate::params::{LigandSpec, PsdNormalization};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BindingNoiseModel {
    pub p_b: f64,
    pub p_bj: Vec<f64>,
    pub nr: f64,
    pub var_nb: f64,
    pub k_on_total: f64,
    pub k_off_total: f64,
    /// Relaxation time; +inf for a degenerate (rate-free) model.
    pub tau_b: f64,
    pub degenerate: bool,
}

impl BindingNoiseModel {
    /// Builds a model directly from aggregate rates.
    pub fn from_rates(p_b: f64, nr: f64, k_on_total: f64, k_off_total: f64) -> Self {
        let rate = k_on_total + k_off_total;
        BindingNoiseModel {
            p_b,
            p_bj: vec![p_b],
            nr,
            var_nb: p_b * (1.0 - p_b) * nr,
            k_on_total,
            k_off_total,
            tau_b: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
            degenerate: !(rate > 0.0),
        }
    }

    fn live(&self) -> Result<()> {
        if self.degenerate {
            Err(Error::Degenerate("binding noise model has no kinetics (no ligands)".into()))
        } else {
            Ok(())
        }
    }

    /// Zero-frequency level of the Lorentzian under the chosen normalization.
    pub fn psd_level(&self, norm: PsdNormalization) -> Result<f64> {
        self.live()?;
        Ok(match norm {
            PsdNormalization::AsPrinted => self.var_nb / (2.0 * self.tau_b),
            PsdNormalization::FourierPair => 2.0 * self.tau_b * self.var_nb,
        })
    }
}

pub fn build_noise_model(species: &[LigandSpec], nr: f64) -> Result<BindingNoiseModel> {
    if !(nr >= 1.0) {
        return Err(Error::Validation("NR >= 1".into()));
    }
    let pairs: Vec<(f64, f64)> = species.iter().map(|s| (s.conc0, s.kd())).collect();
    let (p_b, p_bj) = bound_probability(&pairs);
    let k_on_total: f64 = species.iter().map(|s| s.k_on * s.conc0).sum();
    let k_off_total: f64 = species.iter().zip(&p_bj).map(|(s, p)| p * s.k_off).sum();
    let mut m = BindingNoiseModel::from_rates(p_b, nr, k_on_total, k_off_total);
    m.p_bj = p_bj;
    Ok(m)
}

pub fn autocorrelation(model: &BindingNoiseModel, lag: f64) -> Result<f64> {
    model.live()?;
    if lag < 0.0 {
        return Err(Error::Domain("lag must be >= 0".into()));
    }
    Ok(model.var_nb * (-lag / model.tau_b).exp())
}

/// Lorentzian binding PSD [count^2/Hz].
pub fn psd_binding(model: &BindingNoiseModel, f: f64, norm: PsdNormalization) -> Result<f64> {
    let level = model.psd_level(norm)?;
    let x = 2.0 * PI * f * model.tau_b;
    Ok(level / (1.0 + x * x))
}
