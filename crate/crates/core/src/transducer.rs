//! Flexure-FET transduction: bound density -> stiffness -> gate displacement
//! -> surface potential -> drain current, plus output-current noise.

use serde::Serialize;

use crate::equilibrium::Occupancy;
use crate::error::{Error, Result};
use crate::params::{DerivedDevice, DeviceConfig, ModelOptions, SingleLigandDpsi, EPS0, KB, N_AVOGADRO, Q};
use crate::quadrature::integrate_log;
use crate::receptor_noise::{psd_binding, BindingNoiseModel};

/// Largest exponent accepted before exp() is treated as an overflow.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundDensityVector {
    pub ns_target: f64,
    pub ns_interferer: f64,
    pub ns_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentResponse {
    pub ns: f64,
    pub dk: f64,
    pub dy: f64,
    pub dpsi: f64,
    /// ln S, kept separately because S itself can sit very close to 1.
    pub ln_s: f64,
    pub s: f64,
    pub i_mean: f64,
    /// Binding-induced drop of the drain current, IDS1 - I_mean.
    pub delta_i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransducerResponse {
    pub target: ComponentResponse,
    pub interferer: ComponentResponse,
    pub sum: ComponentResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisePsd {
    pub grid: Vec<f64>,
    pub s_binding: Vec<f64>,
    pub s_flicker: Vec<f64>,
    pub s_total: Vec<f64>,
    pub sigma2_i: f64,
    /// Band-integrated parts of sigma2_i.
    pub sigma2_binding: f64,
    pub sigma2_flicker: f64,
}

/// Species 0 is the target; everything else counts as interference.
pub fn bound_densities(occ: &Occupancy, p0_surface: f64) -> BoundDensityVector {
    let t = occ.theta.first().copied().unwrap_or(0.0);
    let i: f64 = occ.theta.iter().skip(1).sum();
    let ns_target = t * p0_surface;
    let ns_interferer = i * p0_surface;
    BoundDensityVector {
        ns_target,
        ns_interferer,
        ns_sum: (ns_target + ns_interferer).min(p0_surface),
    }
}

/// Volume of one molecule [m^3] from molecular weight [kg/mol].
pub fn molecular_volume(mw: f64, rho: f64) -> f64 {
    mw / (N_AVOGADRO * rho)
}

pub fn stiffness_change(ns: f64, mv: f64, h: f64, k_stiff: f64) -> f64 {
    k_stiff * 3.0 * ns * mv / h
}

pub fn gate_displacement(
    ns: f64,
    mv: f64,
    cfg: &DeviceConfig,
    d: &DerivedDevice,
    factor3: bool,
) -> Result<f64> {
    let vdrive = d.vg - cfg.psi_s;
    let mut radicand = EPS0 * d.a * vdrive * vdrive / (2.0 * (3.0 * d.y - cfg.y0)) * ns * mv / (cfg.h * d.k_stiff);
    if factor3 {
        radicand *= 3.0;
    }
    if radicand < 0.0 {
        return Err(Error::Internal(format!("negative displacement radicand {radicand:e}")));
    }
    Ok(radicand.sqrt())
}

/// Relative permittivity of the substrate, used in the potential and
/// sensitivity denominators.
fn eps_r(cfg: &DeviceConfig) -> f64 {
    cfg.eps_s / EPS0
}

pub fn surface_potential_shift(dk: f64, dy: f64, cfg: &DeviceConfig, d: &DerivedDevice) -> f64 {
    (-d.k_stiff * dy + dk * (cfg.y0 - d.y)) / (Q * eps_r(cfg) * cfg.na * d.a)
}

pub fn sensitivity_exponent(dk: f64, dy: f64, cfg: &DeviceConfig, d: &DerivedDevice) -> f64 {
    (d.k_stiff * dy - dk * (cfg.y0 - d.y)) / (KB * cfg.t * eps_r(cfg) * cfg.na * d.a)
}

pub fn sensitivity(dk: f64, dy: f64, cfg: &DeviceConfig, d: &DerivedDevice) -> Result<f64> {
    let x = sensitivity_exponent(dk, dy, cfg, d);
    if x.abs() > MAX_EXPONENT || !x.is_finite() {
        return Err(Error::Range { exponent: x });
    }
    Ok(x.exp())
}

/// Runs the full chain for one bound density.
pub fn respond(ns: f64, mv: f64, cfg: &DeviceConfig, d: &DerivedDevice, opts: &ModelOptions) -> Result<ComponentResponse> {
    let dk = stiffness_change(ns, mv, cfg.h, d.k_stiff);
    let dy = gate_displacement(ns, mv, cfg, d, opts.displacement_factor3)?;
    let dpsi = surface_potential_shift(dk, dy, cfg, d);
    let ln_s = sensitivity_exponent(dk, dy, cfg, d);
    let s = sensitivity(dk, dy, cfg, d)?;
    // IDS1 - IDS1/S = IDS1 * (1 - e^{-ln S}) without cancellation.
    let delta_i = -cfg.ids1 * (-ln_s).exp_m1();
    Ok(ComponentResponse {
        ns,
        dk,
        dy,
        dpsi,
        ln_s,
        s,
        i_mean: cfg.ids1 / s,
        delta_i,
    })
}

pub fn transduce(
    bdv: &BoundDensityVector,
    mv: f64,
    cfg: &DeviceConfig,
    d: &DerivedDevice,
    opts: &ModelOptions,
) -> Result<TransducerResponse> {
    Ok(TransducerResponse {
        target: respond(bdv.ns_target, mv, cfg, d, opts)?,
        interferer: respond(bdv.ns_interferer, mv, cfg, d, opts)?,
        sum: respond(bdv.ns_sum, mv, cfg, d, opts)?,
    })
}

/// Surface-potential step caused by one bound ligand.
pub fn dpsi_single(ns_sum: f64, mv: f64, cfg: &DeviceConfig, d: &DerivedDevice, opts: &ModelOptions) -> Result<f64> {
    let one = 1.0 / d.a;
    match opts.single_ligand_dpsi {
        SingleLigandDpsi::Isolated => {
            let dk = stiffness_change(one, mv, cfg.h, d.k_stiff);
            let dy = gate_displacement(one, mv, cfg, d, opts.displacement_factor3)?;
            Ok(surface_potential_shift(dk, dy, cfg, d))
        }
        SingleLigandDpsi::OperatingPoint => {
            // dy is kappa*sqrt(ns); difference it without cancellation.
            let kappa = gate_displacement(1.0, mv, cfg, d, opts.displacement_factor3)?;
            let ddy = kappa * one / ((ns_sum + one).sqrt() + ns_sum.sqrt());
            let ddk = stiffness_change(one, mv, cfg.h, d.k_stiff);
            Ok(surface_potential_shift(ddk, ddy, cfg, d))
        }
    }
}

/// Subthreshold transconductance q I / (m kB T).
pub fn transconductance(i: f64, cfg: &DeviceConfig) -> f64 {
    Q * i / (cfg.m_ideality * KB * cfg.t)
}

/// Coefficient C of the flicker PSD S(f) = C/|f|. Not is stored per eV;
/// it is converted to per joule alongside kB T.
pub fn flicker_coefficient(i_mean: f64, cfg: &DeviceConfig, d: &DerivedDevice) -> f64 {
    let g = transconductance(i_mean, cfg);
    let not_per_joule = cfg.not / Q;
    let mobility = 1.0 + cfg.alpha_s * cfg.mu_p * d.cox * (d.vg - cfg.vth.abs());
    cfg.lambda_tun * KB * cfg.t * Q * Q * not_per_joule * g * g / (cfg.w * cfg.l * d.cox * d.cox) * mobility * mobility
}

pub fn flicker_psd(f: f64, i_mean: f64, cfg: &DeviceConfig, d: &DerivedDevice) -> Result<f64> {
    if f == 0.0 || !f.is_finite() {
        return Err(Error::Domain("flicker PSD undefined at f = 0".into()));
    }
    Ok(flicker_coefficient(i_mean, cfg, d) / f.abs())
}

/// Binding + flicker output-current PSD on `grid`, and the variance
/// 2 * integral over [f_min, f_max] of the total.
pub fn total_noise(
    model: &BindingNoiseModel,
    response: &TransducerResponse,
    dpsi_one: f64,
    cfg: &DeviceConfig,
    d: &DerivedDevice,
    opts: &ModelOptions,
    grid: &[f64],
) -> Result<NoisePsd> {
    if !(cfg.f_min > 0.0 && cfg.f_min < cfg.f_max) {
        return Err(Error::config("device.f_min/f_max", "noise band must satisfy 0 < f_min < f_max"));
    }
    let i_mean = response.sum.i_mean;
    let g = transconductance(i_mean, cfg);
    let scale = dpsi_one * dpsi_one * g * g;
    let c = flicker_coefficient(i_mean, cfg, d);
    let binding = |f: f64| -> f64 {
        if model.degenerate {
            0.0
        } else {
            psd_binding(model, f, opts.psd_normalization).unwrap_or(0.0) * scale
        }
    };

    let s_binding: Vec<f64> = grid.iter().map(|&f| binding(f)).collect();
    let s_flicker = grid
        .iter()
        .map(|&f| flicker_psd(f, i_mean, cfg, d))
        .collect::<Result<Vec<_>>>()?;
    let s_total = s_binding.iter().zip(&s_flicker).map(|(a, b)| a + b).collect();

    // Integrate unit-level shapes so tiny prefactors cannot push the
    // integrand into subnormal range.
    let ib = if model.degenerate {
        0.0
    } else {
        let level = model.psd_level(opts.psd_normalization)?;
        let shape = |f: f64| psd_binding(model, f, opts.psd_normalization).unwrap_or(0.0) / level;
        integrate_log(shape, cfg.f_min, cfg.f_max, 64, 1e-8).0 * level * scale
    };
    let if_ = c * integrate_log(|f| 1.0 / f, cfg.f_min, cfg.f_max, 64, 1e-8).0;
    Ok(NoisePsd {
        grid: grid.to_vec(),
        s_binding,
        s_flicker,
        s_total,
        sigma2_i: 2.0 * (ib + if_),
        sigma2_binding: 2.0 * ib,
        sigma2_flicker: 2.0 * if_,
    })
}
