//! WSK alphabets, per-symbol statistics, SNR and SEP with ML thresholds.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::equilibrium::{occupancy_fractions, solve_iterative, EquilibriumProblem, EquilibriumSolution, Occupancy};
use crate::error::{Error, Result};
use crate::params::{Config, LigandSpec, Role};
use crate::receptor_noise::{build_noise_model, BindingNoiseModel};
use crate::transducer::{bound_densities, dpsi_single, molecular_volume, total_noise, transduce, BoundDensityVector, NoisePsd, TransducerResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sep1,
    Sep2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Symbol {
    /// [kg/mol]
    pub mw: f64,
    pub target_conc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WskAlphabet {
    pub symbols: Vec<Symbol>,
    /// Kinetics of the transmitted molecule (its MW is replaced per symbol).
    pub target: LigandSpec,
    pub interferers: Vec<LigandSpec>,
}

impl WskAlphabet {
    pub fn m(&self) -> usize {
        self.symbols.len()
    }

    /// Ligand set present while `sym` is transmitted: interferers take on
    /// the symbol's molecular weight.
    pub fn ligands_for(&self, sym: usize) -> Vec<LigandSpec> {
        let s = &self.symbols[sym];
        let mut t = self.target.clone();
        t.mw = s.mw;
        t.conc0 = s.target_conc;
        t.role = Role::Target;
        let mut out = vec![t];
        out.extend(self.interferers.iter().map(|i| LigandSpec { mw: s.mw, ..i.clone() }));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolStats {
    pub mu_i_target: f64,
    pub mu_i_interferer: f64,
    pub mu_i_sum: f64,
    pub sigma2: f64,
}

impl SymbolStats {
    pub fn mean(&self, v: Variant) -> f64 {
        match v {
            Variant::Sep1 => self.mu_i_sum,
            Variant::Sep2 => self.mu_i_target,
        }
    }

    pub fn variance(&self, v: Variant) -> f64 {
        match v {
            Variant::Sep1 => self.sigma2,
            Variant::Sep2 => self.sigma2 + self.mu_i_interferer * self.mu_i_interferer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionThresholds {
    pub lambda: Vec<f64>,
    /// Pairs where no likelihood crossing lies between the means; the
    /// equal-standardised-distance point was used instead.
    pub fallback: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SepResult {
    pub p_e: f64,
    pub clamped: bool,
}

/// Everything computed for one ligand set at one molecular volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResult {
    pub equilibrium: EquilibriumSolution,
    pub theta: Vec<f64>,
    pub bound: BoundDensityVector,
    pub response: TransducerResponse,
    pub noise_model: BindingNoiseModel,
    pub dpsi_single: f64,
    pub noise: NoisePsd,
    pub mv: f64,
}

impl PipelineResult {
    pub fn stats(&self) -> SymbolStats {
        SymbolStats {
            mu_i_target: self.response.target.delta_i,
            mu_i_interferer: self.response.interferer.delta_i,
            mu_i_sum: self.response.sum.delta_i,
            sigma2: self.noise.sigma2_i,
        }
    }
}

pub fn build_alphabet(bits: u32, mw_min: f64, mw_max: f64, conc: f64, target: &LigandSpec, interferers: &[LigandSpec]) -> Result<WskAlphabet> {
    if !matches!(bits, 1 | 2) {
        return Err(Error::Validation("bits in {1,2}".into()));
    }
    if !(mw_min < mw_max) || !(mw_min > 0.0) {
        return Err(Error::Validation("0 < mw_min < mw_max".into()));
    }
    let m = 1usize << bits;
    let symbols = (0..m)
        .map(|i| Symbol {
            mw: if i == m - 1 {
                mw_max
            } else {
                mw_min + (mw_max - mw_min) * i as f64 / (m - 1) as f64
            },
            target_conc: conc,
        })
        .collect();
    Ok(WskAlphabet {
        symbols,
        target: target.clone(),
        interferers: interferers.to_vec(),
    })
}

/// Alphabet described by the config's `[link]` section and ligand list.
pub fn config_alphabet(cfg: &Config, bits: u32) -> Result<WskAlphabet> {
    let target = cfg
        .target()
        .ok_or_else(|| Error::config("ligand", "link metrics need a target ligand"))?;
    let mut a = build_alphabet(bits, cfg.link.mw_min, cfg.link.mw_max, target.conc0, target, cfg.interferers())?;
    if let Some(list) = &cfg.link.mw_list {
        if list.len() == a.symbols.len() {
            for (s, mw) in a.symbols.iter_mut().zip(list) {
                s.mw = *mw;
            }
        }
    }
    Ok(a)
}

/// Equilibrium -> bound densities -> transduction -> noise for one ligand set.
/// Receptor conservation is solved in occupancy-fraction form: all
/// concentrations are divided by the receptor concentration NR/V.
pub fn run_pipeline(cfg: &Config, ligands: &[LigandSpec], mv: f64, grid: &[f64]) -> Result<PipelineResult> {
    let dev = &cfg.device;
    let d = cfg.derived();
    let per_receptor = dev.reception_volume / d.nr;
    let problem = EquilibriumProblem::new(
        1.0,
        ligands
            .iter()
            .map(|l| (l.conc0 * per_receptor, l.kd() * per_receptor))
            .collect(),
    );
    let equilibrium = solve_iterative(&problem, cfg.model.eq_tol, cfg.model.eq_max_iter)?;
    let Occupancy { theta, .. } = occupancy_fractions(&equilibrium, 1.0)?;
    let occ = Occupancy { theta_sum: theta.iter().sum(), theta: theta.clone() };
    let bound = bound_densities(&occ, dev.p0_surface);
    let response = transduce(&bound, mv, dev, &d, &cfg.model)?;
    let noise_model = build_noise_model(ligands, d.nr)?;
    let dpsi_one = dpsi_single(bound.ns_sum, mv, dev, &d, &cfg.model)?;
    let noise = total_noise(&noise_model, &response, dpsi_one, dev, &d, &cfg.model, grid)?;
    Ok(PipelineResult {
        equilibrium,
        theta,
        bound,
        response,
        noise_model,
        dpsi_single: dpsi_one,
        noise,
        mv,
    })
}

/// Single-symbol evaluation of the configured ligand set; the transducer
/// uses the target's molecular weight for every component.
pub fn evaluate_config(cfg: &Config, grid: &[f64]) -> Result<PipelineResult> {
    let mw = cfg.target().map(|t| t.mw).unwrap_or(cfg.link.mw_min);
    let mv = molecular_volume(mw, cfg.device.rho_ligand);
    run_pipeline(cfg, &cfg.ligands, mv, grid)
}

pub fn evaluate_symbol(sym: usize, alphabet: &WskAlphabet, cfg: &Config) -> Result<SymbolStats> {
    if sym >= alphabet.m() {
        return Err(Error::Domain(format!("symbol {sym} outside alphabet of {}", alphabet.m())));
    }
    let ligands = alphabet.ligands_for(sym);
    let mv = molecular_volume(alphabet.symbols[sym].mw, cfg.device.rho_ligand);
    Ok(run_pipeline(cfg, &ligands, mv, &[])?.stats())
}

pub fn snr1(s: &SymbolStats) -> f64 {
    s.mu_i_sum * s.mu_i_sum / s.sigma2
}

pub fn snr2(s: &SymbolStats) -> f64 {
    s.mu_i_target * s.mu_i_target / (s.sigma2 + s.mu_i_interferer * s.mu_i_interferer)
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Crossing point of two Gaussian likelihoods between m0 < m1.
fn pair_threshold(m0: f64, s0: f64, m1: f64, s1: f64) -> (f64, bool) {
    let (v0, v1) = (s0 * s0, s1 * s1);
    if ((s0 - s1) / s0.max(s1)).abs() < 1e-12 {
        return (0.5 * (m0 + m1), false);
    }
    let a = 0.5 / v0 - 0.5 / v1;
    let b = -m0 / v0 + m1 / v1;
    let c = m0 * m0 / (2.0 * v0) - m1 * m1 / (2.0 * v1) + (s0 / s1).ln();
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let mut roots = Vec::with_capacity(2);
        if q != 0.0 {
            roots.push(c / q);
        }
        if a != 0.0 {
            roots.push(q / a);
        }
        if let Some(r) = roots.into_iter().find(|r| *r > m0 && *r < m1) {
            return (r, false);
        }
    }
    // Variances so unequal relative to the spacing that one density
    // dominates the whole interval.
    ((m0 * s1 + m1 * s0) / (s0 + s1), true)
}

/// ML thresholds for strictly increasing means with standard deviations `sd`.
pub fn ml_thresholds_raw(means: &[f64], sd: &[f64]) -> Result<DecisionThresholds> {
    if means.len() != sd.len() || means.len() < 2 {
        return Err(Error::Domain("need at least two symbols with matching variances".into()));
    }
    if !means.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("symbol means are not strictly ordered".into()));
    }
    if !sd.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(Error::Domain("symbol variances must be positive".into()));
    }
    let (lambda, fallback) = (0..means.len() - 1)
        .map(|i| pair_threshold(means[i], sd[i], means[i + 1], sd[i + 1]))
        .unzip();
    Ok(DecisionThresholds { lambda, fallback })
}

pub fn ml_thresholds(stats: &[SymbolStats], variant: Variant) -> Result<DecisionThresholds> {
    let means: Vec<f64> = stats.iter().map(|s| s.mean(variant)).collect();
    let sd: Vec<f64> = stats.iter().map(|s| s.variance(variant).sqrt()).collect();
    ml_thresholds_raw(&means, &sd)
}

/// Symbol error probability with equiprobable symbols and the given thresholds.
pub fn sep_raw(means: &[f64], sd: &[f64], lambda: &[f64]) -> SepResult {
    let m = means.len();
    let r2 = std::f64::consts::SQRT_2;
    let mut t = erfc((lambda[0] - means[0]) / (sd[0] * r2)) + erfc((means[m - 1] - lambda[m - 2]) / (sd[m - 1] * r2));
    for k in 1..m - 1 {
        t += erfc((means[k] - lambda[k - 1]) / (sd[k] * r2)) + erfc((lambda[k] - means[k]) / (sd[k] * r2));
    }
    let p = t / (2.0 * m as f64);
    let clamped = !(0.0..=1.0).contains(&p);
    SepResult { p_e: p.clamp(0.0, 1.0), clamped }
}

pub fn sep(stats: &[SymbolStats], thresholds: &DecisionThresholds, variant: Variant) -> SepResult {
    let means: Vec<f64> = stats.iter().map(|s| s.mean(variant)).collect();
    let sd: Vec<f64> = stats.iter().map(|s| s.variance(variant).sqrt()).collect();
    sep_raw(&means, &sd, &thresholds.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkSep {
    pub sep: SepResult,
    pub thresholds: DecisionThresholds,
}

/// Evaluates every symbol of the alphabet, orders the symbols by the
/// variant's mean (detection does not depend on labelling) and returns SEP.
pub fn alphabet_sep(cfg: &Config, alphabet: &WskAlphabet, variant: Variant) -> Result<LinkSep> {
    let stats = (0..alphabet.m())
        .map(|i| evaluate_symbol(i, alphabet, cfg))
        .collect::<Result<Vec<_>>>()?;
    sep_from_stats(stats, variant)
}

pub fn sep_from_stats(mut stats: Vec<SymbolStats>, variant: Variant) -> Result<LinkSep> {
    stats.sort_by(|a, b| a.mean(variant).total_cmp(&b.mean(variant)));
    // The error probability is scale-free; working in units of the largest
    // mean keeps squared currents from underflowing at deep subthreshold.
    let scale = stats.iter().fold(0.0_f64, |m, s| m.max(s.mean(variant).abs()));
    if scale > 0.0 && scale.is_finite() {
        for s in &mut stats {
            s.mu_i_target /= scale;
            s.mu_i_interferer /= scale;
            s.mu_i_sum /= scale;
            s.sigma2 /= scale * scale;
        }
    }
    let mut thresholds = ml_thresholds(&stats, variant)?;
    let p = sep(&stats, &thresholds, variant);
    if scale > 0.0 && scale.is_finite() {
        thresholds.lambda.iter_mut().for_each(|l| *l *= scale);
    }
    Ok(LinkSep { sep: p, thresholds })
}
