//! Benchmark CLI: experiment recipes for gauge-potential sweeps, gap scans,
//! circuit compression runs and Trotter baselines, plus re-evaluation and
//! report generation over stored run directories.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use cdqc_core::bench::config::{ExperimentConfig, ExperimentKind};
use cdqc_core::bench::csvio::{fmt_f64, CsvWriter};
use cdqc_core::bench::svg::{AxisScale, LineChart, Series};
use cdqc_core::bench::{run_experiment, target_fidelity};
use cdqc_core::circuit::Circuit;
use cdqc_core::compress::IsingPath;
use cdqc_core::dmrg::{ground_state, DmrgConfig};
use cdqc_core::mpo::{expval, IsingParams};
use cdqc_core::mps::Mps;
use cdqc_core::schedule::PathKind;

#[derive(Parser)]
#[command(name = "cdqc", version, about = "tensor-network compression of counterdiabatic adiabatic evolution into shallow circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON/SVG results.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's experiment kind.
    #[arg(long)]
    experiment: Option<String>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Variational gauge-potential sweep over (chi, eta).
    AgpSweep(RunArgs),
    /// Nested-commutator MPO bond-dimension profile.
    NcProfile(RunArgs),
    /// Spectral gap scan along the adiabatic path.
    GapScan(RunArgs),
    /// Slice-by-slice circuit compression (gap-traversal, critical-prep or
    /// combinatorial, per the config).
    Compress(RunArgs),
    /// Trotter baseline total-time scan only.
    TrotterScan(RunArgs),
    /// Recompute final metrics from a stored run directory.
    Evaluate {
        /// Run directory containing manifest.json and circuits_*.json.
        #[arg(long)]
        run: PathBuf,
    },
    /// Regenerate plots and a summary from the CSVs in a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn load_config(args: &RunArgs, forced: Option<ExperimentKind>) -> cdqc_core::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_toml_file(&args.config)?;
    if let Some(kind) = forced {
        cfg.experiment = kind;
    }
    if let Some(name) = &args.experiment {
        cfg.experiment = ExperimentKind::parse(name).ok_or_else(|| {
            cdqc_core::Error::InvalidArgument(format!("unknown experiment `{name}`"))
        })?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, forced: Option<ExperimentKind>) -> cdqc_core::Result<()> {
    let cfg = load_config(args, forced)?;
    let outputs = run_experiment(&cfg, &args.out)?;
    println!(
        "{}: wrote {} files to {}",
        cfg.experiment.as_str(),
        outputs.len(),
        args.out.display()
    );
    for p in outputs {
        println!("  {}", p.display());
    }
    Ok(())
}

fn config_path_from(cfg: &ExperimentConfig) -> cdqc_core::Result<IsingPath> {
    match cfg.experiment {
        ExperimentKind::CriticalPrep => IsingPath::new(
            IsingParams::uniform(cfg.n, 0.0, -1.0, 0.0)?,
            IsingParams::uniform(cfg.n, 1.0, -1.0, 0.0)?,
        ),
        _ => {
            let gstar = cfg.gstar.ok_or_else(|| {
                cdqc_core::Error::InvalidArgument(
                    "this command needs `gstar` (or a critical-prep config)".into(),
                )
            })?;
            IsingPath::new(
                IsingParams::uniform(cfg.n, 0.0, gstar, 0.0)?,
                IsingParams::uniform(cfg.n, 1.0, gstar, 1.0)?,
            )
        }
    }
}

fn initial_state(cfg: &ExperimentConfig) -> cdqc_core::Result<Mps> {
    use num_complex::Complex64;
    let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    match cfg.experiment {
        ExperimentKind::CriticalPrep => Mps::uniform_qubit_product(cfg.n, [inv, inv]),
        _ => Mps::uniform_qubit_product(cfg.n, [inv, -inv]),
    }
}

fn trotter_scan_cmd(args: &RunArgs) -> cdqc_core::Result<()> {
    let mut cfg = ExperimentConfig::from_toml_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    std::fs::create_dir_all(&args.out)?;
    let path = config_path_from(&cfg)?;
    let r = cfg.trotter_layers.unwrap_or(8);
    let times: Vec<f64> = cfg
        .trotter_time_scan
        .clone()
        .unwrap_or_else(|| (1..=20).map(|k| 0.5 * k as f64).collect());
    let pathkind = cfg.path.unwrap_or(PathKind::Sin2);
    let max_bond = cfg.max_bond.unwrap_or(64);
    let cutoff = cfg.cutoff.unwrap_or(1e-12);
    let psi_i = initial_state(&cfg)?;
    let dmrg_cfg = DmrgConfig {
        max_bond,
        ..Default::default()
    };
    let h_f = path.h_mpo_at(1.0)?;
    let gs = ground_state(&h_f, &dmrg_cfg)?;
    let e_f = gs.energy;
    let mut csv = CsvWriter::new(args.out.join("trotter_scan.csv"), "T,fid_target,e_targ");
    for &t in &times {
        let c = cdqc_core::compress::trotter_adiabatic_circuit(&path, t, r, pathkind)?;
        let (mut out, _) = cdqc_core::circuit::apply_circuit(&c, &psi_i, max_bond, cutoff)?;
        let _ = out.normalize();
        let fid = target_fidelity(&out, &gs.state)?;
        let e = expval(&out, &h_f)?.re;
        csv.row(&[fmt_f64(t), fmt_f64(fid), fmt_f64((e - e_f) / e_f)]);
    }
    let p = csv.finish()?;
    println!("wrote {}", p.display());
    Ok(())
}

fn evaluate_cmd(run_dir: &Path) -> cdqc_core::Result<()> {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json"))?)?;
    let cfg_text = manifest["config_toml"]
        .as_str()
        .ok_or_else(|| cdqc_core::Error::Serde("manifest without config_toml".into()))?;
    let cfg = ExperimentConfig::from_toml_str(cfg_text)?;
    let path = config_path_from(&cfg)?;
    let psi_i = initial_state(&cfg)?;
    let max_bond = cfg.max_bond.unwrap_or(64);
    let cutoff = cfg.cutoff.unwrap_or(1e-12);
    let dmrg_cfg = DmrgConfig {
        max_bond,
        ..Default::default()
    };
    let h_f = path.h_mpo_at(1.0)?;
    let gs = ground_state(&h_f, &dmrg_cfg)?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("circuits_") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        println!("no circuits_*.json in {}", run_dir.display());
        return Ok(());
    }
    let mut csv = CsvWriter::new(run_dir.join("evaluate.csv"), "circuits,fid_target,e_targ");
    for path_json in &entries {
        let circuits: Vec<Circuit> = serde_json::from_str(&std::fs::read_to_string(path_json)?)?;
        let mut state = psi_i.clone();
        for c in &circuits {
            state = cdqc_core::circuit::apply_circuit(c, &state, max_bond, cutoff)?.0;
        }
        let _ = state.normalize();
        let fid = target_fidelity(&state, &gs.state)?;
        let e = expval(&state, &h_f)?.re;
        let name = path_json
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        csv.row(&[name, fmt_f64(fid), fmt_f64((e - gs.energy) / gs.energy)]);
    }
    let p = csv.finish()?;
    println!("wrote {}", p.display());
    Ok(())
}

fn read_csv(path: &Path) -> cdqc_core::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    Ok((header, rows))
}

fn report_cmd(run_dir: &Path) -> cdqc_core::Result<()> {
    let mut made = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let mut slice_series = Vec::new();
    for p in &entries {
        let name = p
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        if name.starts_with("slices_") && name.ends_with(".csv") {
            let (header, rows) = read_csv(p)?;
            let t_col = header.iter().position(|h| h == "t");
            let f_col = header.iter().position(|h| h == "fid_target");
            if let (Some(tc), Some(fc)) = (t_col, f_col) {
                slice_series.push(Series {
                    label: name.trim_end_matches(".csv").to_string(),
                    points: rows
                        .iter()
                        .filter_map(|r| Some((r.get(tc)?.parse().ok()?, r.get(fc)?.parse().ok()?)))
                        .collect(),
                });
            }
        }
    }
    if !slice_series.is_empty() {
        let chart = LineChart {
            title: "target fidelity along the evolution".into(),
            x_label: "t".into(),
            y_label: "fidelity".into(),
            x_scale: AxisScale::Linear,
            y_scale: AxisScale::Linear,
            series: slice_series,
        };
        let out = run_dir.join("report_fidelity.svg");
        chart.save(&out)?;
        made.push(out);
    }
    let inf_path = run_dir.join("infidelity.csv");
    if inf_path.exists() {
        let (header, rows) = read_csv(&inf_path)?;
        let qc = header.iter().position(|h| h == "q");
        let tc = header.iter().position(|h| h == "t");
        let ic = header.iter().position(|h| h == "infidelity");
        if let (Some(qc), Some(tc), Some(ic)) = (qc, tc, ic) {
            let mut by_q: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
            for r in &rows {
                if let (Some(q), Some(t), Some(v)) = (r.get(qc), r.get(tc), r.get(ic)) {
                    if let (Ok(t), Ok(v)) = (t.parse::<f64>(), v.parse::<f64>()) {
                        by_q.entry(q.clone()).or_default().push((t, v.max(1e-16)));
                    }
                }
            }
            let chart = LineChart {
                title: "instantaneous infidelity".into(),
                x_label: "t".into(),
                y_label: "infidelity".into(),
                x_scale: AxisScale::Linear,
                y_scale: AxisScale::Log10,
                series: by_q
                    .into_iter()
                    .map(|(q, points)| Series {
                        label: format!("Q={q}"),
                        points,
                    })
                    .collect(),
            };
            let out = run_dir.join("report_infidelity.svg");
            chart.save(&out)?;
            made.push(out);
        }
    }
    if made.is_empty() {
        println!("nothing to report in {}", run_dir.display());
    } else {
        for p in made {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::AgpSweep(a) => run(a, Some(ExperimentKind::AgpSweep)),
        Command::NcProfile(a) => run(a, Some(ExperimentKind::NcBondProfile)),
        Command::GapScan(a) => run(a, Some(ExperimentKind::GapScan)),
        Command::Compress(a) => run(a, None),
        Command::TrotterScan(a) => trotter_scan_cmd(a),
        Command::Evaluate { run } => evaluate_cmd(run),
        Command::Report { run } => report_cmd(run),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
