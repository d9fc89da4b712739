//! `flexmc` command-line front end.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::equilibrium::{solve_iterative, EquilibriumProblem};
use crate::error::{Error, Result};
use crate::figures::{figure, FIGURE_IDS};
use crate::link::evaluate_config;
use crate::oracle::{empirical_psd, empirical_stats, simulate};
use crate::params::{Config, Preset};
use crate::quadrature::{lin_grid, log_grid};
use crate::sweep::{evaluate_metrics, run_sweep, Metric, Scale, SweepSpec, Table};

pub const DEFAULT_PRESET: Preset = Preset::Improved;

#[derive(Debug, Parser)]
#[command(name = "flexmc", version, about = "Flexure-FET molecular receiver model under molecular interference")]
pub struct Cli {
    /// TOML configuration file ([device], [link], [model], [[ligand]]).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set; overrides a `preset` key in the config file.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,
    /// Override one config key (repeatable), e.g. --set device.Not_percm3ev=1e24
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Omit the timestamp so identical runs give identical bytes.
    #[arg(long, global = true)]
    pub reproducible: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Table1,
    Improved,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Table1 => Preset::Table1,
            PresetArg::Improved => Preset::Improved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scalar config key to sweep; without it a single row is produced.
    #[arg(long)]
    pub key: Option<String>,
    /// LO:HI
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    #[arg(long, default_value = "log")]
    pub scale: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Competitive binding equilibrium of the configured ligands (JSON).
    Equilibrium,
    /// Binding, flicker and total output-current PSD.
    NoisePsd {
        /// log:F_MIN:F_MAX:POINTS or lin:F_MIN:F_MAX:POINTS
        #[arg(long)]
        fgrid: Option<String>,
    },
    /// SNR1 and SNR2 in dB.
    Snr(SweepArgs),
    /// SEP1 and SEP2 for 1-bit and 2-bit WSK.
    Sep(SweepArgs),
    /// Sensitivity S of the target, interferer and summed responses.
    Sensitivity(SweepArgs),
    /// Stochastic receptor simulation compared with the analytic model.
    Oracle {
        /// Simulated time [s].
        #[arg(long, default_value_t = 200.0)]
        duration: f64,
        /// Sampling interval [s]; default tau_B / 10.
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated receptor count (the device NR is usually far larger).
        #[arg(long, default_value_t = 1000)]
        receptors: u32,
    },
    /// Sweep any scalar key and report the chosen metrics.
    Sweep {
        #[arg(long)]
        key: String,
        /// LO:HI
        #[arg(long)]
        range: String,
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[arg(long, default_value = "log")]
        scale: String,
        /// Comma-separated: sensitivity, snr1, snr2, sep1, sep2, psd, equilibrium
        #[arg(long, value_delimiter = ',', default_value = "snr1,snr2")]
        outputs: Vec<String>,
    },
    /// Dataset behind one of the paper's figures.
    Figure {
        /// fig4, fig5, fig6a..fig6e, fig7, fig8a..fig8c, fig10a..fig10c
        id: String,
    },
}

/// Parses arguments, runs, and returns the process exit code.
/// The serde (config-file) spelling of a unit enum variant.
fn variant_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn run_from_env() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("flexmc: {e}");
            e.exit_code()
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<Config> {
    let preset = cli.preset.map(Preset::from);
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p, preset)?,
        None => Config::preset(preset.unwrap_or(DEFAULT_PRESET)),
    };
    for s in &cli.set {
        cfg.apply_set(s)?;
    }
    Ok(cfg)
}

struct Meta {
    lines: Vec<(String, String)>,
}

impl Meta {
    fn new(cli: &Cli, cfg: &Config, command: &str) -> Self {
        let mut lines = vec![
            ("tool".to_string(), format!("flexmc {}", env!("CARGO_PKG_VERSION"))),
            ("command".to_string(), command.to_string()),
            (
                "preset".to_string(),
                cfg.preset.map(|p| p.name().to_string()).unwrap_or_else(|| "none".into()),
            ),
            ("config_sha256".to_string(), config_hash(cfg)),
            ("seed".to_string(), cli.seed.to_string()),
            (
                "model".to_string(),
                format!(
                    "psd_normalization={} displacement_factor3={} single_ligand_dpsi={}",
                    variant_name(&cfg.model.psd_normalization),
                    cfg.model.displacement_factor3,
                    variant_name(&cfg.model.single_ligand_dpsi)
                ),
            ),
        ];
        for key in &cfg.defaulted {
            let v = cfg.get_scalar(key).map(fmt_f64).unwrap_or_else(|_| "?".into());
            lines.push((format!("default {key}"), v));
        }
        if !cli.reproducible {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            lines.push(("timestamp_unix".to_string(), secs.to_string()));
        }
        Meta { lines }
    }

    fn push(&mut self, k: &str, v: String) {
        self.lines.push((k.to_string(), v));
    }

    fn json(&self) -> Value {
        Value::Object(self.lines.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect())
    }
}

pub fn config_hash(cfg: &Config) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Nine significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn table_csv(meta: &[(String, String)], t: &Table) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "{},status", t.columns.join(","));
    for (row, st) in t.rows.iter().zip(&t.status) {
        let cells: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        let status = match st {
            None => "ok".to_string(),
            Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
        };
        let _ = writeln!(s, "{},{}", cells.join(","), status);
    }
    s
}

pub fn table_json(meta: &Value, t: &Table) -> String {
    let v = json!({
        "metadata": meta,
        "columns": t.columns,
        "rows": t.rows,
        "status": t.status,
    });
    serde_json::to_string_pretty(&v).expect("serialisable") + "\n"
}

fn emit(cli: &Cli, name: &str, body: &str) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), body)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

fn emit_table(cli: &Cli, meta: &Meta, stem: &str, t: &Table) -> Result<i32> {
    let (name, body) = match cli.format {
        Format::Csv => (format!("{stem}.csv"), table_csv(&meta.lines, t)),
        Format::Json => (format!("{stem}.json"), table_json(&meta.json(), t)),
    };
    emit(cli, &name, &body)?;
    let failed = t.failures();
    if failed > 0 {
        eprintln!("flexmc: {failed} of {} points failed", t.rows.len());
        Ok(4)
    } else {
        Ok(0)
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::config("--range", "expected LO:HI"))?;
    let p = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::config("--range", format!("`{x}` is not a number")))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_fgrid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 {
        return Err(Error::config("--fgrid", "expected log:F_MIN:F_MAX:POINTS"));
    }
    let num = |x: &str| {
        x.parse::<f64>()
            .map_err(|_| Error::config("--fgrid", format!("`{x}` is not a number")))
    };
    let (a, b) = (num(parts[1])?, num(parts[2])?);
    let n = parts[3]
        .parse::<usize>()
        .map_err(|_| Error::config("--fgrid", "POINTS must be a positive integer"))?;
    if n < 1 || !(a > 0.0 && b >= a) {
        return Err(Error::config("--fgrid", "need 0 < F_MIN <= F_MAX and POINTS >= 1"));
    }
    match parts[0] {
        "log" => Ok(log_grid(a, b, n)),
        "lin" | "linear" => Ok(lin_grid(a, b, n)),
        other => Err(Error::config("--fgrid", format!("unknown grid kind `{other}`"))),
    }
}

fn metric_run(cli: &Cli, cfg: &Config, args: &SweepArgs, outputs: Vec<Metric>, stem: &str) -> Result<i32> {
    let mut meta = Meta::new(cli, cfg, stem);
    let table = match &args.key {
        Some(key) => {
            let (lo, hi) = match &args.range {
                Some(r) => parse_range(r)?,
                None => {
                    let x = cfg.get_scalar(key)?;
                    (x / 100.0, x * 100.0)
                }
            };
            let spec = SweepSpec {
                key: key.clone(),
                scale: Scale::parse(&args.scale)?,
                lo,
                hi,
                points: args.points,
                outputs,
            };
            meta.push("sweep", format!("{} {:?} {}:{} x{}", key, spec.scale, lo, hi, spec.points));
            let mut t = run_sweep(&spec, cfg)?;
            t.columns[0] = "sweep_value".into();
            t
        }
        None => {
            let mut cols = vec!["sweep_value"];
            cols.extend(crate::sweep::metric_columns(&outputs));
            let mut t = Table::new(&cols);
            let mut row = vec![f64::NAN];
            row.extend(evaluate_metrics(cfg, &outputs)?);
            t.push(row);
            t
        }
    };
    emit_table(cli, &meta, stem, &table)
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be at least 1"));
        }
        // Fails only if a pool already exists (e.g. repeated in-process calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Equilibrium => {
            let d = cfg.derived();
            // Receptors as a volumetric concentration in the reception volume.
            let p0 = d.nr / cfg.device.reception_volume;
            let problem = EquilibriumProblem::new(p0, cfg.ligands.iter().map(|l| (l.conc0, l.kd())).collect());
            let sol = solve_iterative(&problem, cfg.model.eq_tol, cfg.model.eq_max_iter)?;
            let meta = Meta::new(cli, &cfg, "equilibrium");
            let mut v = serde_json::to_value(&sol).expect("serialisable");
            v["P0"] = json!(p0);
            v["theta"] = json!(sol.pl.iter().map(|x| x / p0).collect::<Vec<_>>());
            v["metadata"] = meta.json();
            emit(cli, "equilibrium.json", &(serde_json::to_string_pretty(&v).expect("serialisable") + "\n"))?;
            Ok(0)
        }
        Command::NoisePsd { fgrid } => {
            let grid = match fgrid {
                Some(g) => parse_fgrid(g)?,
                None => log_grid(cfg.device.f_min, cfg.device.f_max, 200),
            };
            let p = evaluate_config(&cfg, &grid)?;
            let mut meta = Meta::new(cli, &cfg, "noise-psd");
            meta.push("sigma2_i", fmt_f64(p.noise.sigma2_i));
            meta.push("sigma2_binding", fmt_f64(p.noise.sigma2_binding));
            meta.push("sigma2_flicker", fmt_f64(p.noise.sigma2_flicker));
            let mut t = Table::new(&["f_hz", "s_binding", "s_flicker", "s_total"]);
            for i in 0..grid.len() {
                t.push(vec![grid[i], p.noise.s_binding[i], p.noise.s_flicker[i], p.noise.s_total[i]]);
            }
            emit_table(cli, &meta, "noise_psd", &t)
        }
        Command::Snr(a) => metric_run(cli, &cfg, a, vec![Metric::Snr1, Metric::Snr2], "snr"),
        Command::Sep(a) => metric_run(cli, &cfg, a, vec![Metric::Sep1, Metric::Sep2], "sep"),
        Command::Sensitivity(a) => metric_run(cli, &cfg, a, vec![Metric::Sensitivity], "sensitivity"),
        Command::Oracle { duration, dt, receptors } => oracle(cli, &cfg, *duration, *dt, *receptors),
        Command::Sweep {
            key,
            range,
            points,
            scale,
            outputs,
        } => {
            let (lo, hi) = parse_range(range)?;
            let spec = SweepSpec {
                key: key.clone(),
                scale: Scale::parse(scale)?,
                lo,
                hi,
                points: *points,
                outputs: outputs.iter().map(|s| Metric::parse(s.trim())).collect::<Result<_>>()?,
            };
            let mut meta = Meta::new(cli, &cfg, "sweep");
            meta.push("sweep", format!("{} {:?} {}:{} x{}", key, spec.scale, lo, hi, points));
            let t = run_sweep(&spec, &cfg)?;
            emit_table(cli, &meta, "sweep", &t)
        }
        Command::Figure { id } => {
            if !FIGURE_IDS.contains(&id.as_str()) {
                return Err(Error::UnknownFigure {
                    id: id.clone(),
                    valid: FIGURE_IDS.join(", "),
                });
            }
            let meta = Meta::new(cli, &cfg, &format!("figure {id}"));
            let t = figure(id, &cfg)?;
            emit_table(cli, &meta, id, &t)
        }
    }
}

fn oracle(cli: &Cli, cfg: &Config, duration: f64, dt: Option<f64>, receptors: u32) -> Result<i32> {
    let model = crate::receptor_noise::build_noise_model(&cfg.ligands, receptors as f64)?;
    let dt = dt.unwrap_or(if model.tau_b.is_finite() { model.tau_b / 10.0 } else { duration / 1000.0 });
    let traj = simulate(&cfg.ligands, receptors, duration, dt, cli.seed)?;
    let stats = empirical_stats(&traj);
    let psd = empirical_psd(&traj).ok();
    let mut meta = Meta::new(cli, cfg, "oracle");
    meta.push("receptors", receptors.to_string());
    meta.push("dt", fmt_f64(dt));

    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend(cfg.ligands.iter().map(|l| format!("bound_{}", l.name)));
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut t = Table::new(&col_refs);
    for (k, time) in traj.times.iter().enumerate() {
        let mut row = vec![*time];
        row.extend(traj.counts.iter().map(|c| c[k] as f64));
        t.push(row);
    }
    let analytic_corner = 1.0 / (2.0 * std::f64::consts::PI * model.tau_b);
    let report = json!({
        "metadata": meta.json(),
        "analytic": {
            "p_B": model.p_b,
            "p_Bj": model.p_bj,
            "var_NB": model.var_nb,
            "tau_B": model.tau_b,
            "corner_hz": analytic_corner,
        },
        "empirical": {
            "p_B": stats.p_hat,
            "p_Bj": stats.p_hat_j,
            "var_NB": stats.var_hat,
            "window_s": stats.window,
            "n_eff": stats.n_eff,
            "short_window": stats.short_window,
            "corner_hz": psd.as_ref().map(|p| p.corner_hz),
            "psd_fit_rms": psd.as_ref().map(|p| p.fit_rms),
        },
        "events": traj.events,
    });
    let report = serde_json::to_string_pretty(&report).expect("serialisable") + "\n";
    match &cli.out {
        Some(_) => {
            emit(cli, "oracle_report.json", &report)?;
            emit_table(cli, &meta, "trajectory", &t)
        }
        None => {
            // On stdout the report alone is printed; the trajectory needs --out.
            emit(cli, "oracle_report.json", &report)?;
            Ok(0)
        }
    }
}
