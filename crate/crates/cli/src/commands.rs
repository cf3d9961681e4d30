use std::fs::File;
use std::path::{Path, PathBuf};

use hess_core::analysis::{compare, load_monomers, monomer_sweep, summarize};
use hess_core::ems::run_simulation_with;
use hess_core::sg_filter::{mode1_select, mode2_select, Window};
use hess_core::{load_cycle, DriveCycle, Error, FuzzyRuleBase, Mode, SimConfig, SimulationReport};

use crate::output::{self, CompareFile, CycleInfo, FilterRow, ReportFile, RunManifest, RunSide, SweepFile, SCHEMA_VERSION};
use crate::{Cli, CliError, Command, CompareArgs, CycleArgs, FilterDemoArgs, Format, SimulateArgs, SweepArgs};

/// Runs one parsed invocation and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Compare(args) => compare_cmd(&args),
        Command::Sweep(args) => sweep(&args),
        Command::FilterDemo(args) => filter_demo(&args),
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::input(path, e.into()))
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::input(p, Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "config file not found"))));
            }
            SimConfig::load(p).map_err(|e| CliError::input(p, e))
        }
    }
}

fn load_rules(cfg: &SimConfig) -> Result<FuzzyRuleBase, CliError> {
    match &cfg.fuzzy.rule_file {
        None => Ok(FuzzyRuleBase::default_rules()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e.into()))?;
            FuzzyRuleBase::parse(&text).map_err(|e| CliError::input(path, e))
        }
    }
}

fn load_cycle_arg(path: &Path, args: &CycleArgs) -> Result<DriveCycle, CliError> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "cycle".into());
    load_cycle(&name, open(path)?, args.speed_unit.into()).map_err(|e| CliError::input(path, e))
}

fn cycle_info(cycle: &DriveCycle, path: &Path) -> CycleInfo {
    CycleInfo { name: cycle.name.clone(), path: display(path), samples: cycle.len(), duration: cycle.duration() }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn simulate_with(cycle: &DriveCycle, cfg: &SimConfig) -> Result<SimulationReport, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let rules = load_rules(cfg)?;
    run_simulation_with(cycle, cfg, rules).map_err(|e| match e {
        Error::Aborted { .. } => CliError::Simulation(e),
        other => CliError::Config(other),
    })
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = dir.join("run.json");
    output::write_atomic(dir, "run.json", &output::to_json(manifest, &path)?)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(mode) = args.mode {
        cfg.simulation.mode = mode.into();
    }
    let cycle = load_cycle_arg(&args.cycle.cycle, &args.cycle)?;
    let report = simulate_with(&cycle, &cfg)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let metrics = summarize(&report);
    let info = cycle_info(&cycle, &args.cycle.cycle);

    prepare_out(&args.out)?;
    let mut written = Vec::new();
    if args.format != Some(Format::Csv) {
        let path = args.out.join("report.json");
        let file = ReportFile {
            schema_version: SCHEMA_VERSION,
            cycle: &info,
            mode: report.mode,
            metrics: &metrics,
            life: &report.life,
            warnings: &report.warnings,
            config: &report.config,
        };
        written.push(output::write_atomic(&args.out, "report.json", &output::to_json(&file, &path)?)?);
    }
    if args.format != Some(Format::Json) {
        let path = args.out.join("trace.csv");
        written.push(output::write_atomic(&args.out, "trace.csv", &output::trace_csv(&report, &path)?)?);
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command: "simulate",
            tool_version: env!("CARGO_PKG_VERSION"),
            config: args.config.as_deref().map(display),
            cycle: Some(display(&args.cycle.cycle)),
            out: display(&args.out),
            format: args.format.map(|f| format!("{f:?}").to_lowercase()),
            outputs: written.iter().map(|p| display(p)).collect(),
        },
    )?;
    log::info!(
        "{} on {}: total loss {:.2} kJ, peak |I_bat| {:.2} A",
        report.mode.as_str(),
        cycle.name,
        metrics.q_total_loss,
        metrics.i_bat_max
    );
    Ok(written)
}

fn compare_cmd(args: &CompareArgs) -> Result<Vec<PathBuf>, CliError> {
    let base_cfg = load_config(args.config.as_deref())?.with_mode(args.baseline_mode.into());
    let cand_cfg = match &args.config_b {
        Some(p) => load_config(Some(p))?,
        None => base_cfg.clone(),
    }
    .with_mode(args.candidate_mode.into());

    let cycle = load_cycle_arg(&args.cycle.cycle, &args.cycle)?;
    if let Some(path_b) = &args.cycle_b {
        let other = load_cycle_arg(path_b, &args.cycle)?;
        if other.samples() != cycle.samples() {
            return Err(CliError::Usage(format!(
                "cycle mismatch: {} and {} differ; both runs must share one cycle",
                display(&args.cycle.cycle),
                display(path_b)
            )));
        }
    }

    let baseline = summarize(&simulate_with(&cycle, &base_cfg)?);
    let candidate = summarize(&simulate_with(&cycle, &cand_cfg)?);
    let comparison = compare(&baseline, &candidate);
    let info = cycle_info(&cycle, &args.cycle.cycle);

    prepare_out(&args.out)?;
    let written = match args.format {
        Format::Json => {
            let path = args.out.join("compare.json");
            let file = CompareFile {
                schema_version: SCHEMA_VERSION,
                cycle: &info,
                baseline: RunSide { mode: base_cfg.simulation.mode, config_path: args.config.as_deref().map(display), metrics: &baseline },
                candidate: RunSide {
                    mode: cand_cfg.simulation.mode,
                    config_path: args.config_b.as_deref().or(args.config.as_deref()).map(display),
                    metrics: &candidate,
                },
                comparison: &comparison,
            };
            output::write_atomic(&args.out, "compare.json", &output::to_json(&file, &path)?)?
        }
        Format::Csv => {
            let path = args.out.join("compare.csv");
            output::write_atomic(&args.out, "compare.csv", &output::compare_csv(&comparison, &path)?)?
        }
    };
    write_manifest(
        &args.out,
        &RunManifest {
            command: "compare",
            tool_version: env!("CARGO_PKG_VERSION"),
            config: args.config.as_deref().map(display),
            cycle: Some(display(&args.cycle.cycle)),
            out: display(&args.out),
            format: Some(format!("{:?}", args.format).to_lowercase()),
            outputs: vec![display(&written)],
        },
    )?;
    Ok(vec![written])
}

fn sweep(args: &SweepArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.simulation.mode = Mode::Hess;
    load_rules(&cfg)?;
    let specs = load_monomers(open(&args.monomers)?).map_err(|e| CliError::input(&args.monomers, e))?;
    let cycle = load_cycle_arg(&args.cycle.cycle, &args.cycle)?;
    let rows = monomer_sweep(&specs, &cycle, &cfg).map_err(|e| match e {
        Error::Aborted { .. } => CliError::Simulation(e),
        other => CliError::Config(other),
    })?;

    prepare_out(&args.out)?;
    let written = match args.format {
        Format::Csv => {
            let path = args.out.join("sweep.csv");
            output::write_atomic(&args.out, "sweep.csv", &output::sweep_csv(&rows, &path)?)?
        }
        Format::Json => {
            let path = args.out.join("sweep.json");
            let info = cycle_info(&cycle, &args.cycle.cycle);
            let file = SweepFile { schema_version: SCHEMA_VERSION, cycle: &info, rows: &rows };
            output::write_atomic(&args.out, "sweep.json", &output::to_json(&file, &path)?)?
        }
    };
    write_manifest(
        &args.out,
        &RunManifest {
            command: "sweep",
            tool_version: env!("CARGO_PKG_VERSION"),
            config: args.config.as_deref().map(display),
            cycle: Some(display(&args.cycle.cycle)),
            out: display(&args.out),
            format: Some(format!("{:?}", args.format).to_lowercase()),
            outputs: vec![display(&written)],
        },
    )?;
    Ok(vec![written])
}

fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| CliError::input(path, e.into()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::input(path, Error::Parse { line: 1, message: format!("no column `{column}`") }))?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(path, e.into()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(values.len() + 2);
        let field = record.get(idx).unwrap_or("");
        let value = field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::input(path, Error::Parse { line, message: format!("`{field}` is not a number") }))?;
        values.push(value);
    }
    Ok(values)
}

fn filter_demo(args: &FilterDemoArgs) -> Result<Vec<PathBuf>, CliError> {
    let values = read_column(&args.input, &args.column)?;
    let m = args.half_width;
    let n = 2 * m + 1;
    if m < 1 || args.max_order < 1 || args.max_order + 2 > n {
        return Err(CliError::Usage(format!("need half-width >= 1 and 1 <= max-order <= {}", n.saturating_sub(2))));
    }

    let mut rows = Vec::with_capacity(values.len());
    for (i, &raw) in values.iter().enumerate() {
        let centered = if i >= m && i + m < values.len() {
            let w = Window::new(values[i - m..=i + m].to_vec()).map_err(CliError::Config)?;
            Some(mode1_select(&w, args.max_order).map_err(CliError::Config)?)
        } else {
            None
        };
        let trailing = match mode2_select(&values[..=i], &args.mode2_half_widths, args.mode2_order) {
            Ok(fit) => Some(fit),
            Err(Error::InsufficientHistory { .. }) => None,
            Err(e) => return Err(CliError::Config(e)),
        };
        rows.push(FilterRow {
            index: i,
            raw,
            mode1_center: centered.as_ref().map_or(raw, |f| f.center()),
            mode1_order: centered.as_ref().map(|f| f.order),
            mode1_r2: centered.as_ref().map(|f| f.r2),
            mode2_latest: trailing.as_ref().map(|f| f.latest()),
            mode2_half_width: trailing.as_ref().map(|f| f.half_width),
            mode2_r2: trailing.as_ref().map(|f| f.r2),
        });
    }

    prepare_out(&args.out)?;
    let path = args.out.join("filter.csv");
    Ok(vec![output::write_atomic(&args.out, "filter.csv", &output::filter_csv(&rows, &path)?)?])
}
