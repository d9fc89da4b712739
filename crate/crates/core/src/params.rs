//! Physical constants, device/ligand configuration and TOML ingestion.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};

pub const EPS0: f64 = 8.854_187_812_8e-12;
pub const Q: f64 = 1.602_176_634e-19;
pub const KB: f64 = 1.380_649e-23;
pub const N_AVOGADRO: f64 = 6.022_140_76e23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Interferer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LigandSpec {
    pub name: String,
    /// Total volumetric concentration [m^-3].
    pub conc0: f64,
    /// Association rate constant [m^3/s].
    pub k_on: f64,
    /// Dissociation rate [1/s].
    pub k_off: f64,
    /// Molecular weight [kg/mol].
    pub mw: f64,
    pub role: Role,
}

impl LigandSpec {
    pub fn new(name: &str, conc0: f64, k_on: f64, k_off: f64, mw: f64, role: Role) -> Self {
        LigandSpec {
            name: name.to_string(),
            conc0,
            k_on,
            k_off,
            mw,
            role,
        }
    }

    /// Dissociation constant K = k_off / k_on [m^-3].
    pub fn kd(&self) -> f64 {
        self.k_off / self.k_on
    }

    pub fn validate(&self, idx: usize) -> Result<()> {
        let p = format!("ligand[{idx}]");
        check(self.conc0 >= 0.0, &format!("{p}.conc0 >= 0"))?;
        check(self.k_on > 0.0, &format!("{p}.k_on > 0"))?;
        check(self.k_off > 0.0, &format!("{p}.k_off > 0"))?;
        check(self.mw > 0.0, &format!("{p}.mw > 0"))?;
        let k = self.kd();
        check(k.is_finite() && k > 0.0, &format!("{p}: 0 < k_off/k_on < inf"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub y0: f64,
    pub yd: f64,
    pub e: f64,
    pub na: f64,
    /// Oxide trap density [eV^-1 m^-3].
    pub not: f64,
    pub p0_surface: f64,
    pub eps_s: f64,
    pub eps_ox: f64,
    /// Explicit gate bias; `None` means `vg_fraction * V_pullin`.
    pub vg: Option<f64>,
    pub vg_fraction: f64,
    pub psi_s: f64,
    pub vth: f64,
    pub ids1: f64,
    pub lambda_tun: f64,
    pub alpha_s: f64,
    pub mu_p: f64,
    pub t: f64,
    pub rho_ligand: f64,
    pub m_ideality: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub b: f64,
    /// Explicit beam stiffness override [N/m].
    pub k_stiff: Option<f64>,
    /// Fluid volume seen by the receptor array [m^3]; converts the receptor
    /// count into a volumetric concentration for the binding equilibrium.
    pub reception_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdNormalization {
    AsPrinted,
    FourierPair,
}

/// How the surface-potential step of one additional bound ligand is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleLigandDpsi {
    /// One molecule on an otherwise empty gate (ns = 1/A).
    Isolated,
    /// One molecule added at the symbol's operating occupancy.
    OperatingPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    pub psd_normalization: PsdNormalization,
    pub displacement_factor3: bool,
    pub single_ligand_dpsi: SingleLigandDpsi,
    pub eq_tol: f64,
    pub eq_max_iter: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            psd_normalization: PsdNormalization::AsPrinted,
            displacement_factor3: false,
            single_ligand_dpsi: SingleLigandDpsi::Isolated,
            eq_tol: 1e-12,
            eq_max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSettings {
    pub bits: u32,
    /// Molecular-weight range of the alphabet [kg/mol].
    pub mw_min: f64,
    pub mw_max: f64,
    /// Explicit per-symbol molecular weights [kg/mol], overriding the range.
    pub mw_list: Option<Vec<f64>>,
}

impl Default for LinkSettings {
    fn default() -> Self {
        LinkSettings {
            bits: 1,
            mw_min: 89e-3,
            mw_max: 763e-3,
            mw_list: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Table1,
    Improved,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Improved => "improved",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "improved" => Ok(Preset::Improved),
            _ => Err(Error::config("preset", format!("unknown preset `{s}` (table1|improved)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub preset: Option<Preset>,
    pub device: DeviceConfig,
    pub ligands: Vec<LigandSpec>,
    pub link: LinkSettings,
    pub model: ModelOptions,
    /// Keys filled from built-in defaults rather than the paper or the user.
    pub defaulted: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedDevice {
    pub k_stiff: f64,
    pub a: f64,
    pub cox: f64,
    pub nr: f64,
    pub v_pullin: f64,
    pub vg: f64,
    /// Operating point y = 2/3 y0.
    pub y: f64,
}

// Keys whose values come from built-in defaults (not given in the paper).
const DEFAULTABLE: &[&str] = &[
    "device.eps_s",
    "device.eps_ox",
    "device.vg_fraction",
    "device.psi_s",
    "device.VTH",
    "device.IDS1",
    "device.lambda_tun",
    "device.alpha_s",
    "device.mu_p",
    "device.T",
    "device.rho_ligand",
    "device.m_ideality",
    "device.f_min",
    "device.f_max",
    "device.B",
    "device.reception_volume",
];

const REQUIRED_DEVICE: &[&str] = &[
    "device.W",
    "device.L",
    "device.H",
    "device.y0",
    "device.yd",
    "device.E",
    "device.NA",
    "device.Not",
    "device.P0_surface",
];

fn check(ok: bool, constraint: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(constraint.to_string()))
    }
}

impl DeviceConfig {
    fn defaults_only() -> Self {
        DeviceConfig {
            w: f64::NAN,
            l: f64::NAN,
            h: f64::NAN,
            y0: f64::NAN,
            yd: f64::NAN,
            e: f64::NAN,
            na: f64::NAN,
            not: f64::NAN,
            p0_surface: f64::NAN,
            eps_s: 11.7 * EPS0,
            eps_ox: 3.9 * EPS0,
            vg: None,
            vg_fraction: 0.95,
            psi_s: 0.3,
            vth: -0.4,
            ids1: 1e-9,
            lambda_tun: 1e-10,
            alpha_s: 1e4,
            mu_p: 0.02,
            t: 300.0,
            rho_ligand: 1350.0,
            m_ideality: 1.5,
            f_min: 1e-2,
            f_max: 1e4,
            b: 1.0,
            k_stiff: None,
            reception_volume: 1e-9,
        }
    }

    pub fn preset(p: Preset) -> Self {
        let mut d = DeviceConfig {
            w: 1e-6,
            l: 8e-6,
            h: 260e-9,
            y0: 100e-9,
            yd: 10e-9,
            e: 4e9,
            na: 1e22,
            not: 2.3e30,
            p0_surface: 5e18,
            ..Self::defaults_only()
        };
        if p == Preset::Improved {
            d.l = 4e-6;
            d.h = 40e-9;
            d.e = 200e9;
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("W", self.w),
            ("L", self.l),
            ("H", self.h),
            ("y0", self.y0),
            ("yd", self.yd),
            ("E", self.e),
            ("NA", self.na),
            ("P0_surface", self.p0_surface),
            ("eps_s", self.eps_s),
            ("eps_ox", self.eps_ox),
            ("T", self.t),
            ("rho_ligand", self.rho_ligand),
            ("IDS1", self.ids1),
            ("m_ideality", self.m_ideality),
            ("B", self.b),
            ("reception_volume", self.reception_volume),
        ] {
            check(v > 0.0 && v.is_finite(), &format!("{name} > 0"))?;
        }
        // Not = 0 is allowed: it switches the flicker term off.
        check(self.not >= 0.0 && self.not.is_finite(), "Not >= 0")?;
        check(self.f_min > 0.0 && self.f_min < self.f_max, "0 < f_min < f_max")?;
        check(self.lambda_tun >= 0.0, "lambda_tun >= 0")?;
        check(self.vg_fraction > 0.0 && self.vg_fraction < 1.0, "0 < vg_fraction < 1")?;
        if let Some(k) = self.k_stiff {
            check(k > 0.0, "k_stiff > 0")?;
        }
        let d = derive_device(self);
        check(d.vg < d.v_pullin, "VG < V_pullin")?;
        check(d.vg > self.psi_s, "VG > psi_s")
    }
}

pub fn derive_device(cfg: &DeviceConfig) -> DerivedDevice {
    let a = cfg.w * cfg.l;
    let k_stiff = cfg
        .k_stiff
        .unwrap_or(16.0 * cfg.e * cfg.w * cfg.h.powi(3) / cfg.l.powi(3));
    let v_pullin = (8.0 * k_stiff * cfg.y0.powi(3) / (27.0 * EPS0 * a)).sqrt();
    DerivedDevice {
        k_stiff,
        a,
        cox: cfg.eps_ox / cfg.yd,
        nr: cfg.p0_surface * a,
        v_pullin,
        vg: cfg.vg.unwrap_or(cfg.vg_fraction * v_pullin),
        y: 2.0 * cfg.y0 / 3.0,
    }
}

/// Default ligand pair used by both presets: a target and one interferer
/// with Table I kinetics, each at its own dissociation constant.
pub fn preset_ligands() -> Vec<LigandSpec> {
    let (k_on, k_off) = (3e-18, 20.0);
    let kd = k_off / k_on;
    vec![
        LigandSpec::new("target", kd, k_on, k_off, 300e-3, Role::Target),
        LigandSpec::new("interferer", kd, k_on, k_off, 300e-3, Role::Interferer),
    ]
}

impl Config {
    pub fn preset(p: Preset) -> Self {
        let mut defaulted: Vec<String> = DEFAULTABLE.iter().map(|s| s.to_string()).collect();
        defaulted.sort();
        Config {
            preset: Some(p),
            device: DeviceConfig::preset(p),
            ligands: preset_ligands(),
            link: LinkSettings::default(),
            model: ModelOptions::default(),
            defaulted,
        }
    }

    pub fn derived(&self) -> DerivedDevice {
        derive_device(&self.device)
    }

    pub fn target(&self) -> Option<&LigandSpec> {
        self.ligands.first()
    }

    pub fn interferers(&self) -> &[LigandSpec] {
        if self.ligands.is_empty() {
            &[]
        } else {
            &self.ligands[1..]
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        for (i, l) in self.ligands.iter().enumerate() {
            l.validate(i)?;
            let want = if i == 0 { Role::Target } else { Role::Interferer };
            check(
                l.role == want,
                &format!("ligand[{i}].role = {}", if i == 0 { "target" } else { "interferer" }),
            )?;
        }
        check(matches!(self.link.bits, 1 | 2), "link.bits in {1,2}")?;
        check(
            self.link.mw_min > 0.0 && self.link.mw_min < self.link.mw_max,
            "0 < link.mw_min < link.mw_max",
        )?;
        if let Some(list) = &self.link.mw_list {
            check(list.len() == 1 << self.link.bits, "len(link.mw_list) = 2^bits")?;
            check(
                list.windows(2).all(|w| w[0] < w[1]) && list[0] > 0.0,
                "link.mw_list strictly increasing and positive",
            )?;
        }
        check(self.model.eq_tol > 0.0, "model.eq_tol > 0")?;
        check(self.model.eq_max_iter >= 1, "model.eq_max_iter >= 1")
    }

    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, preset)
    }

    /// Parses a config document. `preset_override` (from the command line)
    /// wins over a `preset` key in the document.
    pub fn from_toml_str(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
        for key in doc.keys() {
            if !matches!(key.as_str(), "preset" | "device" | "link" | "model" | "ligand") {
                return Err(Error::config(key.clone(), "unknown top-level key"));
            }
        }
        let file_preset = match doc.get("preset") {
            Some(Value::String(s)) => Some(Preset::parse(s)?),
            Some(_) => return Err(Error::config("preset", "expected a string")),
            None => None,
        };
        let preset = preset_override.or(file_preset);
        let mut cfg = match preset {
            Some(p) => Config::preset(p),
            None => Config {
                preset: None,
                device: DeviceConfig::defaults_only(),
                ligands: Vec::new(),
                link: LinkSettings::default(),
                model: ModelOptions::default(),
                defaulted: DEFAULTABLE.iter().map(|s| s.to_string()).collect(),
            },
        };
        let mut given: Vec<String> = Vec::new();

        for section in ["device", "link", "model"] {
            if let Some(v) = doc.get(section) {
                let t = v
                    .as_table()
                    .ok_or_else(|| Error::config(section, "expected a table"))?;
                for (k, v) in t {
                    let full = format!("{section}.{k}");
                    given.push(cfg.set_value(&full, v)?);
                }
            }
        }
        if let Some(v) = doc.get("ligand") {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::config("ligand", "expected an array of tables ([[ligand]])"))?;
            cfg.ligands.clear();
            for (i, item) in arr.iter().enumerate() {
                let t = item
                    .as_table()
                    .ok_or_else(|| Error::config(format!("ligand[{i}]"), "expected a table"))?;
                cfg.ligands.push(parse_ligand(i, t)?);
            }
        }

        if preset.is_none() {
            for k in REQUIRED_DEVICE {
                if !given.iter().any(|g| g == k) {
                    return Err(Error::config(*k, "missing required key"));
                }
            }
            if cfg.ligands.is_empty() && doc.get("ligand").is_none() {
                return Err(Error::config("ligand", "missing required [[ligand]] section"));
            }
        }
        cfg.defaulted.retain(|d| !given.contains(d));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` override (command-line `--set`).
    pub fn apply_set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match raw.parse::<f64>() {
            Ok(x) => Value::Float(x),
            Err(_) => match raw {
                "true" => Value::Boolean(true),
                "false" => Value::Boolean(false),
                _ => Value::String(raw.trim_matches('"').to_string()),
            },
        };
        if let Some((idx, field)) = parse_ligand_key(key)? {
            for i in self.ligand_targets(key, idx)? {
                set_ligand_field(&mut self.ligands[i], key, field, &value)?;
            }
        } else {
            let base = self.set_value(key, &value)?;
            self.defaulted.retain(|d| *d != base);
        }
        self.validate()
    }

    /// Sets a scalar numeric key (SI or unit-suffixed) used by sweeps.
    pub fn set_scalar(&mut self, key: &str, x: f64) -> Result<()> {
        if let Some((idx, field)) = parse_ligand_key(key)? {
            for i in self.ligand_targets(key, idx)? {
                set_ligand_field(&mut self.ligands[i], key, field, &Value::Float(x))?;
            }
            return Ok(());
        }
        self.set_value(key, &Value::Float(x)).map(|_| ())
    }

    /// Reads a scalar numeric key in the units implied by its suffix.
    pub fn get_scalar(&self, key: &str) -> Result<f64> {
        if let Some((idx, field)) = parse_ligand_key(key)? {
            let lig = &self.ligands[self.ligand_targets(key, idx)?.start];
            let (base, factor) = split_suffix(field);
            let v = match base {
                "conc0" => lig.conc0,
                "k_on" => lig.k_on,
                "k_off" => lig.k_off,
                "mw" => lig.mw,
                "K" => lig.kd(),
                _ => return Err(Error::config(key, "not a scalar ligand field")),
            };
            return Ok(v / factor);
        }
        let (base, factor) = split_suffix(key);
        let d = &self.device;
        let v = match base {
            "device.W" => d.w,
            "device.L" => d.l,
            "device.H" => d.h,
            "device.y0" => d.y0,
            "device.yd" => d.yd,
            "device.E" => d.e,
            "device.NA" => d.na,
            "device.Not" => d.not,
            "device.P0_surface" => d.p0_surface,
            "device.eps_s" => d.eps_s,
            "device.eps_ox" => d.eps_ox,
            "device.VG" => self.derived().vg,
            "device.vg_fraction" => d.vg_fraction,
            "device.psi_s" => d.psi_s,
            "device.VTH" => d.vth,
            "device.IDS1" => d.ids1,
            "device.lambda_tun" => d.lambda_tun,
            "device.alpha_s" => d.alpha_s,
            "device.mu_p" => d.mu_p,
            "device.T" => d.t,
            "device.rho_ligand" => d.rho_ligand,
            "device.m_ideality" => d.m_ideality,
            "device.f_min" => d.f_min,
            "device.f_max" => d.f_max,
            "device.B" => d.b,
            "device.k_stiff" => self.derived().k_stiff,
            "device.reception_volume" => d.reception_volume,
            "link.mw_min" => self.link.mw_min,
            "link.mw_max" => self.link.mw_max,
            "link.bits" => self.link.bits as f64,
            _ => return Err(Error::config(key, "unknown scalar key")),
        };
        Ok(v / factor)
    }

    /// Sets one non-ligand key; returns the canonical (suffix-free) key name.
    fn set_value(&mut self, key: &str, value: &Value) -> Result<String> {
        let (base, factor) = split_suffix(key);
        let num = || -> Result<f64> {
            match value {
                Value::Float(x) => Ok(*x * factor),
                Value::Integer(i) => Ok(*i as f64 * factor),
                _ => Err(Error::config(key, "expected a number")),
            }
        };
        let d = &mut self.device;
        match base {
            "device.W" => d.w = num()?,
            "device.L" => d.l = num()?,
            "device.H" => d.h = num()?,
            "device.y0" => d.y0 = num()?,
            "device.yd" => d.yd = num()?,
            "device.E" => d.e = num()?,
            "device.NA" => d.na = num()?,
            "device.Not" => d.not = num()?,
            "device.P0_surface" => d.p0_surface = num()?,
            "device.eps_s" => d.eps_s = num()?,
            "device.eps_ox" => d.eps_ox = num()?,
            "device.VG" => d.vg = Some(num()?),
            "device.vg_fraction" => d.vg_fraction = num()?,
            "device.psi_s" => d.psi_s = num()?,
            "device.VTH" => d.vth = num()?,
            "device.IDS1" => d.ids1 = num()?,
            "device.lambda_tun" => d.lambda_tun = num()?,
            "device.alpha_s" => d.alpha_s = num()?,
            "device.mu_p" => d.mu_p = num()?,
            "device.T" => d.t = num()?,
            "device.rho_ligand" => d.rho_ligand = num()?,
            "device.m_ideality" => d.m_ideality = num()?,
            "device.f_min" => d.f_min = num()?,
            "device.f_max" => d.f_max = num()?,
            "device.B" => d.b = num()?,
            "device.k_stiff" => d.k_stiff = Some(num()?),
            "device.reception_volume" => d.reception_volume = num()?,
            "link.bits" => {
                let b = num()?;
                if b.fract() != 0.0 || b < 0.0 {
                    return Err(Error::config(key, "expected a non-negative integer"));
                }
                self.link.bits = b as u32;
            }
            "link.mw_min" => self.link.mw_min = num()?,
            "link.mw_max" => self.link.mw_max = num()?,
            "link.mw_list" => {
                let arr = value
                    .as_array()
                    .ok_or_else(|| Error::config(key, "expected an array of numbers"))?;
                let list = arr
                    .iter()
                    .map(|v| match v {
                        Value::Float(x) => Ok(*x * factor),
                        Value::Integer(i) => Ok(*i as f64 * factor),
                        _ => Err(Error::config(key, "expected an array of numbers")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.link.mw_list = Some(list);
            }
            "model.psd_normalization" => {
                self.model.psd_normalization = match value.as_str() {
                    Some("as_printed") => PsdNormalization::AsPrinted,
                    Some("fourier_pair") => PsdNormalization::FourierPair,
                    _ => return Err(Error::config(key, "expected \"as_printed\" or \"fourier_pair\"")),
                }
            }
            "model.displacement_factor3" => {
                self.model.displacement_factor3 = match value {
                    Value::Boolean(b) => *b,
                    Value::String(s) if s == "on" => true,
                    Value::String(s) if s == "off" => false,
                    _ => return Err(Error::config(key, "expected \"on\" or \"off\"")),
                }
            }
            "model.single_ligand_dpsi" => {
                self.model.single_ligand_dpsi = match value.as_str() {
                    Some("isolated") => SingleLigandDpsi::Isolated,
                    Some("operating_point") => SingleLigandDpsi::OperatingPoint,
                    _ => {
                        return Err(Error::config(key, "expected \"isolated\" or \"operating_point\""))
                    }
                }
            }
            "model.eq_tol" => self.model.eq_tol = num()?,
            "model.eq_max_iter" => {
                let n = num()?;
                if n.fract() != 0.0 || n < 1.0 {
                    return Err(Error::config(key, "expected a positive integer"));
                }
                self.model.eq_max_iter = n as usize;
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(base.to_string())
    }

    /// Canonical TOML (SI units, full precision). `from_toml_str` on the
    /// result reproduces every numeric field bit for bit.
    pub fn to_toml(&self) -> String {
        let d = &self.device;
        let mut dev = Table::new();
        let mut put = |k: &str, v: f64| {
            dev.insert(k.to_string(), Value::Float(v));
        };
        put("W", d.w);
        put("L", d.l);
        put("H", d.h);
        put("y0", d.y0);
        put("yd", d.yd);
        put("E", d.e);
        put("NA", d.na);
        put("Not", d.not);
        put("P0_surface", d.p0_surface);
        put("eps_s", d.eps_s);
        put("eps_ox", d.eps_ox);
        if let Some(vg) = d.vg {
            put("VG", vg);
        }
        put("vg_fraction", d.vg_fraction);
        put("psi_s", d.psi_s);
        put("VTH", d.vth);
        put("IDS1", d.ids1);
        put("lambda_tun", d.lambda_tun);
        put("alpha_s", d.alpha_s);
        put("mu_p", d.mu_p);
        put("T", d.t);
        put("rho_ligand", d.rho_ligand);
        put("m_ideality", d.m_ideality);
        put("f_min", d.f_min);
        put("f_max", d.f_max);
        put("B", d.b);
        if let Some(k) = d.k_stiff {
            put("k_stiff", k);
        }
        put("reception_volume", d.reception_volume);

        let mut link = Table::new();
        link.insert("bits".into(), Value::Integer(self.link.bits as i64));
        link.insert("mw_min".into(), Value::Float(self.link.mw_min));
        link.insert("mw_max".into(), Value::Float(self.link.mw_max));
        if let Some(list) = &self.link.mw_list {
            link.insert(
                "mw_list".into(),
                Value::Array(list.iter().map(|x| Value::Float(*x)).collect()),
            );
        }

        let mut model = Table::new();
        let norm = match self.model.psd_normalization {
            PsdNormalization::AsPrinted => "as_printed",
            PsdNormalization::FourierPair => "fourier_pair",
        };
        model.insert("psd_normalization".into(), Value::String(norm.into()));
        model.insert(
            "displacement_factor3".into(),
            Value::Boolean(self.model.displacement_factor3),
        );
        let dpsi = match self.model.single_ligand_dpsi {
            SingleLigandDpsi::Isolated => "isolated",
            SingleLigandDpsi::OperatingPoint => "operating_point",
        };
        model.insert("single_ligand_dpsi".into(), Value::String(dpsi.into()));
        model.insert("eq_tol".into(), Value::Float(self.model.eq_tol));
        model.insert(
            "eq_max_iter".into(),
            Value::Integer(self.model.eq_max_iter as i64),
        );

        let ligands = self
            .ligands
            .iter()
            .map(|l| {
                let mut t = Table::new();
                t.insert("name".into(), Value::String(l.name.clone()));
                t.insert(
                    "role".into(),
                    Value::String(
                        match l.role {
                            Role::Target => "target",
                            Role::Interferer => "interferer",
                        }
                        .into(),
                    ),
                );
                t.insert("conc0".into(), Value::Float(l.conc0));
                t.insert("k_on".into(), Value::Float(l.k_on));
                t.insert("k_off".into(), Value::Float(l.k_off));
                t.insert("mw".into(), Value::Float(l.mw));
                Value::Table(t)
            })
            .collect();

        let mut root = Table::new();
        root.insert("device".into(), Value::Table(dev));
        root.insert("link".into(), Value::Table(link));
        root.insert("model".into(), Value::Table(model));
        root.insert("ligand".into(), Value::Array(ligands));
        toml::to_string(&root).expect("config tables always serialize")
    }
}

/// Splits a unit suffix off a key, returning (base key, factor to SI).
fn split_suffix(key: &str) -> (&str, f64) {
    const SUFFIXES: &[(&str, f64)] = &[
        ("_percm3ev", 1e6),
        ("_percm3", 1e6),
        ("_gmol", 1e-3),
        ("_GPa", 1e9),
        ("_um", 1e-6),
        ("_nm", 1e-9),
    ];
    for (s, f) in SUFFIXES {
        if let Some(b) = key.strip_suffix(s) {
            return (b, *f);
        }
    }
    (key, 1.0)
}

/// `ligand[<i>].<field>` or `ligand[*].<field>` (every interferer).
fn parse_ligand_key(key: &str) -> Result<Option<(Option<usize>, &str)>> {
    let Some(rest) = key.strip_prefix("ligand[") else {
        return Ok(None);
    };
    let (idx, field) = rest
        .split_once("].")
        .ok_or_else(|| Error::config(key, "expected ligand[<index>].<field>"))?;
    if idx == "*" {
        return Ok(Some((None, field)));
    }
    let idx = idx
        .parse::<usize>()
        .map_err(|_| Error::config(key, "ligand index must be a non-negative integer or *"))?;
    Ok(Some((Some(idx), field)))
}

impl Config {
    fn ligand_targets(&self, key: &str, idx: Option<usize>) -> Result<std::ops::Range<usize>> {
        let n = self.ligands.len();
        match idx {
            Some(i) if i < n => Ok(i..i + 1),
            Some(_) => Err(Error::config(key, format!("only {n} ligands configured"))),
            None if n > 1 => Ok(1..n),
            None => Err(Error::config(key, "no interferers configured")),
        }
    }
}

fn set_ligand_field(lig: &mut LigandSpec, key: &str, field: &str, value: &Value) -> Result<()> {
    let (base, factor) = split_suffix(field);
    let num = || -> Result<f64> {
        match value {
            Value::Float(x) => Ok(*x * factor),
            Value::Integer(i) => Ok(*i as f64 * factor),
            _ => Err(Error::config(key, "expected a number")),
        }
    };
    match base {
        "conc0" => lig.conc0 = num()?,
        "k_on" => lig.k_on = num()?,
        "k_off" => lig.k_off = num()?,
        "mw" => lig.mw = num()?,
        // Moves K by rescaling k_off at fixed k_on.
        "K" => lig.k_off = num()? * lig.k_on,
        "name" => {
            lig.name = value
                .as_str()
                .ok_or_else(|| Error::config(key, "expected a string"))?
                .to_string()
        }
        "role" => {
            lig.role = match value.as_str() {
                Some("target") => Role::Target,
                Some("interferer") => Role::Interferer,
                _ => return Err(Error::config(key, "expected \"target\" or \"interferer\"")),
            }
        }
        _ => return Err(Error::config(key, "unknown ligand field")),
    }
    Ok(())
}

fn parse_ligand(i: usize, t: &Table) -> Result<LigandSpec> {
    let mut lig = LigandSpec::new(
        &format!("ligand{i}"),
        f64::NAN,
        f64::NAN,
        f64::NAN,
        f64::NAN,
        if i == 0 { Role::Target } else { Role::Interferer },
    );
    for (k, v) in t {
        let key = format!("ligand[{i}].{k}");
        set_ligand_field(&mut lig, &key, k, v)?;
    }
    for (name, v) in [
        ("conc0", lig.conc0),
        ("k_on", lig.k_on),
        ("k_off", lig.k_off),
        ("mw", lig.mw),
    ] {
        if v.is_nan() {
            return Err(Error::config(format!("ligand[{i}].{name}"), "missing required key"));
        }
    }
    Ok(lig)
}
