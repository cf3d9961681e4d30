//! Post-run metrics, strategy comparison and the supercapacitor monomer sweep.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::drive_cycle::DriveCycle;
use crate::ems::{load_rules, run_simulation_with, SimulationReport, SplitTag};
use crate::error::{Error, Result};
use crate::supercap::sc_soc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts[k]` holds values in `[k·w, (k+1)·w)`.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaI {
    /// `|I(t) − I(t−1)|` for `t ≥ 1`.
    pub series: Vec<f64>,
    pub max: f64,
    pub histogram: Histogram,
}

/// Absolute differences between consecutive currents.
pub fn delta_i_series(currents: &[f64], bin_width: f64) -> Result<DeltaI> {
    if currents.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: currents.len() });
    }
    if !(bin_width > 0.0) {
        return Err(Error::InvalidParameter { name: "analysis.delta_i_bin", reason: format!("must be positive, got {bin_width}") });
    }
    let series: Vec<f64> = currents.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let max = series.iter().copied().fold(0.0, f64::max);
    let mut counts = vec![0u64; (max / bin_width).floor() as usize + 1];
    for d in &series {
        counts[(d / bin_width).floor() as usize] += 1;
    }
    Ok(DeltaI { series, max, histogram: Histogram { bin_width, counts } })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    /// kJ
    pub q_bat_loss: f64,
    /// kJ
    pub q_sc_loss: f64,
    /// kJ
    pub q_total_loss: f64,
    pub soc_bat_final: f64,
    pub soc_sc_final: f64,
    /// Peak |I_bat|, A.
    pub i_bat_max: f64,
    /// K
    pub temp_max: f64,
    /// K
    pub temp_final: f64,
    /// Peak temperature above ambient, K.
    pub temp_rise_max: f64,
    /// A
    pub delta_i_max: f64,
    pub delta_i_histogram: Histogram,
    /// Percent capacity lost over one run of the cycle.
    pub per_cycle_fade: f64,
    /// Cycles to end of life; absent when the run caused no fade.
    pub est_life: Option<u64>,
    /// Demand neither device could serve, kJ (signed).
    pub curtailed_energy: f64,
    pub steps_filtered: usize,
    pub steps_fuzzy_fallback: usize,
    pub steps_redispatched: usize,
}

/// Aggregates a finished simulation into its metrics.
pub fn summarize(report: &SimulationReport) -> MetricsBlock {
    let cfg = &report.config;
    let q_bat_loss = report.final_battery.q_loss_acc / 1000.0;
    let q_sc_loss = report.final_supercap.q_loss_acc / 1000.0;
    let currents = report.battery_currents();
    let delta = delta_i_series(&currents, cfg.analysis.delta_i_bin).unwrap_or_else(|_| DeltaI {
        series: Vec::new(),
        max: 0.0,
        histogram: Histogram { bin_width: cfg.analysis.delta_i_bin, counts: vec![0] },
    });
    let initial_temp = report.initial_battery.temp;
    let temp_max = report.steps.iter().map(|s| s.temp).fold(initial_temp, f64::max);
    let mut curtailed = 0.0;
    for w in report.steps.windows(2) {
        curtailed += w[1].split.curtailed * (w[1].split.t - w[0].split.t);
    }
    let count = |tag: SplitTag| report.steps.iter().filter(|s| s.split.tag == tag).count();

    MetricsBlock {
        q_bat_loss,
        q_sc_loss,
        q_total_loss: q_bat_loss + q_sc_loss,
        soc_bat_final: report.final_battery.soc,
        soc_sc_final: sc_soc(&report.final_supercap, &cfg.supercap),
        i_bat_max: currents.iter().fold(0.0, |m, i| m.max(i.abs())),
        temp_max,
        temp_final: report.final_battery.temp,
        temp_rise_max: temp_max - cfg.thermal.t_ambient,
        delta_i_max: delta.max,
        delta_i_histogram: delta.histogram,
        per_cycle_fade: report.life.per_cycle_loss_pct,
        est_life: report.life.cycles,
        curtailed_energy: curtailed / 1000.0,
        steps_filtered: count(SplitTag::Filtered),
        steps_fuzzy_fallback: count(SplitTag::FuzzyFallback),
        steps_redispatched: count(SplitTag::ConstraintRedispatch),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    /// `candidate − baseline`
    pub difference: Option<f64>,
    /// `100·(baseline − candidate)/baseline`; positive when the candidate is lower.
    pub reduction_pct: Option<f64>,
    /// `100·(candidate − baseline)/baseline`; negative when the candidate is lower.
    pub change_pct: Option<f64>,
    /// The baseline was zero, so only `difference` is meaningful.
    pub zero_baseline: bool,
}

impl MetricDelta {
    pub fn new(metric: &str, baseline: Option<f64>, candidate: Option<f64>) -> Self {
        let difference = baseline.zip(candidate).map(|(a, b)| b - a);
        let zero_baseline = baseline == Some(0.0);
        let reduction_pct = match (baseline, candidate) {
            (Some(a), Some(b)) if a != 0.0 => Some(100.0 * (a - b) / a),
            _ => None,
        };
        Self {
            metric: metric.to_string(),
            baseline,
            candidate,
            difference,
            reduction_pct,
            change_pct: reduction_pct.map(|r| if r == 0.0 { 0.0 } else { -r }),
            zero_baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub deltas: Vec<MetricDelta>,
}

impl ComparisonReport {
    pub fn get(&self, metric: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric)
    }
}

/// Percent deltas of `b` against the baseline `a`.
pub fn compare(a: &MetricsBlock, b: &MetricsBlock) -> ComparisonReport {
    let pairs: [(&str, f64, f64); 9] = [
        ("q_total_loss", a.q_total_loss, b.q_total_loss),
        ("q_bat_loss", a.q_bat_loss, b.q_bat_loss),
        ("q_sc_loss", a.q_sc_loss, b.q_sc_loss),
        ("i_bat_max", a.i_bat_max, b.i_bat_max),
        ("temp_max", a.temp_max, b.temp_max),
        ("temp_rise_max", a.temp_rise_max, b.temp_rise_max),
        ("delta_i_max", a.delta_i_max, b.delta_i_max),
        ("per_cycle_fade", a.per_cycle_fade, b.per_cycle_fade),
        ("soc_bat_final", a.soc_bat_final, b.soc_bat_final),
    ];
    let mut deltas: Vec<MetricDelta> = pairs.iter().map(|&(m, x, y)| MetricDelta::new(m, Some(x), Some(y))).collect();
    deltas.push(MetricDelta::new("est_life", a.est_life.map(|v| v as f64), b.est_life.map(|v| v as f64)));
    ComparisonReport { deltas }
}

/// One supercapacitor cell type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomerSpec {
    pub label: String,
    /// V
    pub cell_voltage: f64,
    /// F
    pub cell_capacity: f64,
    pub cell_count: Option<u32>,
}

/// Reads `label,cell_voltage,cell_capacity[,cell_count]`. The first row is
/// the reference and must carry a cell count.
pub fn load_monomers<R: Read>(source: R) -> Result<Vec<MonomerSpec>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let expected = ["label", "cell_voltage", "cell_capacity", "cell_count"];
    if headers.len() < 3 || headers.len() > 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `label,cell_voltage,cell_capacity[,cell_count]`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut specs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(specs.len() + 2);
        if record.len() < 3 || record.len() > 4 {
            return Err(Error::Parse { line, message: format!("expected 3 or 4 fields, found {}", record.len()) });
        }
        let positive = |idx: usize, what: &str| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| Error::Parse { line, message: format!("{what} `{}` is not a positive number", &record[idx]) })
        };
        let cell_voltage = positive(1, "cell_voltage")?;
        let cell_capacity = positive(2, "cell_capacity")?;
        let cell_count = match record.get(3).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(s.parse::<u32>().ok().filter(|&n| n > 0).ok_or_else(|| Error::Parse {
                line,
                message: format!("cell_count `{s}` is not a positive integer"),
            })?),
        };
        if specs.is_empty() && cell_count.is_none() {
            return Err(Error::Parse { line, message: "the reference (first) row needs a cell_count".into() });
        }
        specs.push(MonomerSpec { label: record[0].to_string(), cell_voltage, cell_capacity, cell_count });
    }
    if specs.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(specs)
}

/// Cells needed to hold the reference's `C·U·N`, rounded up.
pub fn cell_count(reference: &MonomerSpec, candidate: &MonomerSpec) -> Result<u32> {
    let n_ref = reference.cell_count.ok_or(Error::InvalidParameter {
        name: "cell_count",
        reason: format!("reference `{}` has no cell count", reference.label),
    })?;
    let ratio = reference.cell_capacity * reference.cell_voltage * n_ref as f64 / (candidate.cell_capacity * candidate.cell_voltage);
    // an exact integer ratio can land a few ulps high
    Ok((ratio - 1e-9).ceil().max(1.0) as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec: MonomerSpec,
    pub cell_count: u32,
    pub metrics: MetricsBlock,
    /// Total-loss reduction against the reference row, percent.
    pub pct_vs_ref: f64,
}

/// Supercapacitor parameters for a bank of `count` cells in series.
///
/// The configured bank is taken to be built from the reference cell. Pack
/// capacitance and voltage follow the cell spec; the bulk/fast capacitance
/// split and the `u_min/u_max` ratio are kept, and resistances scale with
/// the number of cells and inversely with cell capacitance.
pub fn bank_config(base: &SimConfig, reference: &MonomerSpec, spec: &MonomerSpec, count: u32) -> SimConfig {
    let n_ref = reference.cell_count.unwrap_or(count) as f64;
    let n = count as f64;
    let mut cfg = base.clone();
    let sc = &mut cfg.supercap;
    let total = spec.cell_capacity / n;
    let bulk_share = sc.c_bulk / sc.capacitance();
    let floor_ratio = sc.u_min / sc.u_max;
    let r_scale = (n / n_ref) * (reference.cell_capacity / spec.cell_capacity);
    sc.c_bulk = total * bulk_share;
    sc.c_fast = total * (1.0 - bulk_share);
    sc.u_max = spec.cell_voltage * n;
    sc.u_min = sc.u_max * floor_ratio;
    sc.r_bulk *= r_scale;
    sc.r_fast *= r_scale;
    sc.r_term *= r_scale;
    sc.r_leak = sc.r_leak.map(|r| r * r_scale);
    cfg
}

/// Simulates the cycle once per monomer type, in parallel.
pub fn monomer_sweep(specs: &[MonomerSpec], cycle: &DriveCycle, cfg: &SimConfig) -> Result<Vec<SweepRow>> {
    let reference = specs.first().ok_or(Error::TooShort { needed: 1, got: 0 })?;
    let rules = load_rules(cfg)?;
    let counts = specs
        .iter()
        .map(|s| match s.cell_count {
            Some(n) if std::ptr::eq(s, reference) => Ok(n),
            _ => cell_count(reference, s),
        })
        .collect::<Result<Vec<u32>>>()?;

    let results: Vec<Result<MetricsBlock>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .zip(&counts)
            .map(|(spec, &n)| {
                let rules = rules.clone();
                scope.spawn(move || {
                    let bank = bank_config(cfg, reference, spec, n);
                    bank.validate()?;
                    run_simulation_with(cycle, &bank, rules).map(|r| summarize(&r))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });

    let metrics = results.into_iter().collect::<Result<Vec<_>>>()?;
    let ref_loss = metrics[0].q_total_loss;
    Ok(specs
        .iter()
        .zip(counts)
        .zip(metrics)
        .map(|((spec, cell_count), metrics)| {
            let pct_vs_ref = if ref_loss == 0.0 { 0.0 } else { 100.0 * (ref_loss - metrics.q_total_loss) / ref_loss };
            SweepRow { spec: spec.clone(), cell_count, metrics, pct_vs_ref }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(label: &str, v: f64, c: f64, n: Option<u32>) -> MonomerSpec {
        MonomerSpec { label: label.into(), cell_voltage: v, cell_capacity: c, cell_count: n }
    }

    #[test]
    fn delta_i_hand_example() {
        let d = delta_i_series(&[0.0, 10.0, -5.0], 5.0).unwrap();
        assert_eq!(d.series, vec![10.0, 15.0]);
        assert_eq!(d.max, 15.0);
        assert_eq!(d.histogram.counts, vec![0, 0, 1, 1]);
        assert!(delta_i_series(&[1.0], 5.0).is_err());
        assert!(delta_i_series(&[3.0; 10], 5.0).unwrap().series.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn compare_identical_is_zero() {
        let m = MetricsBlock {
            q_bat_loss: 10.0,
            q_sc_loss: 0.0,
            q_total_loss: 10.0,
            soc_bat_final: 0.8,
            soc_sc_final: 0.5,
            i_bat_max: 100.0,
            temp_max: 300.0,
            temp_final: 299.0,
            temp_rise_max: 1.85,
            delta_i_max: 20.0,
            delta_i_histogram: Histogram { bin_width: 5.0, counts: vec![1] },
            per_cycle_fade: 0.01,
            est_life: Some(2000),
            curtailed_energy: 0.0,
            steps_filtered: 0,
            steps_fuzzy_fallback: 0,
            steps_redispatched: 0,
        };
        let c = compare(&m, &m);
        for d in &c.deltas {
            assert_eq!(d.difference, Some(0.0), "{}", d.metric);
            if !d.zero_baseline {
                assert_eq!(d.reduction_pct, Some(0.0));
                assert_eq!(d.change_pct, Some(0.0));
            }
        }
        assert!(c.get("q_sc_loss").unwrap().zero_baseline);
    }

    #[test]
    fn reduction_matches_published_loss_pair() {
        let d = MetricDelta::new("q_total_loss", Some(1395.95), Some(1011.71));
        assert!((d.reduction_pct.unwrap() - 27.53).abs() < 5e-3);
        assert!(d.change_pct.unwrap() < 0.0);
    }

    #[test]
    fn implied_peak_current_baseline() {
        let baseline: f64 = 122.06 / (1.0 - 0.1460);
        assert!((baseline - 142.93).abs() < 5e-3);
        let d = MetricDelta::new("i_bat_max", Some(baseline), Some(122.06));
        assert!((d.reduction_pct.unwrap() - 14.60).abs() < 1e-9);
    }

    #[test]
    fn cell_counts() {
        let a = spec("A", 2.7, 3000.0, Some(95));
        assert_eq!(cell_count(&a, &a).unwrap(), 95);
        assert_eq!(cell_count(&a, &spec("B", 2.7, 3400.0, None)).unwrap(), 84);
        assert_eq!(cell_count(&a, &spec("C", 2.85, 3400.0, None)).unwrap(), 80);
        assert_eq!(cell_count(&a, &spec("D", 3.0, 3400.0, None)).unwrap(), 76);
        assert_eq!(cell_count(&a, &spec("E", 3.2, 3800.0, None)).unwrap(), 64);
    }

    #[test]
    fn monomer_file_errors_name_the_line() {
        let ok = load_monomers("label,cell_voltage,cell_capacity,cell_count\nA,2.7,3000,95\nB,2.7,3400\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[1].cell_count, None);
        match load_monomers("label,cell_voltage,cell_capacity,cell_count\nA,2.7,3000,95\nB,abc,3400\n".as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("cell_voltage"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_monomers("label,cell_voltage,cell_capacity\nA,2.7,3000\n".as_bytes()).is_err());
    }

    #[test]
    fn bank_for_reference_keeps_ratios() {
        let base = SimConfig::default();
        let a = spec("A", 2.7, 3000.0, Some(95));
        let cfg = bank_config(&base, &a, &a, 95);
        assert!((cfg.supercap.u_max - 256.5).abs() < 1e-9);
        assert!((cfg.supercap.capacitance() - 3000.0 / 95.0).abs() < 1e-9);
        assert!((cfg.supercap.u_min / cfg.supercap.u_max - 0.5).abs() < 1e-12);
        assert_eq!(cfg.supercap.r_term, base.supercap.r_term);
    }
}
