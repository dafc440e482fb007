//! Parameter sweeps over the atom separation, written as CSV, plus the
//! key=value config format and the critical-detuning report.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analytic_rates::{critical_detuning, is_trusted_distance, rates_exact, rates_first_order, CriticalQuantity, RateMethod, TransitionRates};
use crate::atomic_model::{compute_c3, DipoleCoupling, Geometry, ModelParams};
use crate::error::{Error, Result};
use crate::telegraph_stats::{censor, simulate_telegraph, window_corrected_statistics, TelegraphModel, TelegraphStatistics, DEFAULT_CUTOFF_FRACTION};
use crate::trajectory_sim::{
    classify_periods, estimate_statistics, intensity_trace, run_ensemble, ClassifierConfig, EmpiricalStatistics, TrajectoryConfig,
};

pub const SCHEMA: &str = "dipole-jumps-sweep/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Analytic,
    TelegraphMc,
    FullMc,
}

impl SweepMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(SweepMode::Analytic),
            "telegraph-mc" => Ok(SweepMode::TelegraphMc),
            "full-mc" => Ok(SweepMode::FullMc),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "a3", "omega2", "omega3", "delta2", "theta3", "r_min", "r_max", "r_steps", "dt_w", "dt_dj", "cutoff_fraction", "mode",
    "total_time", "trajectories", "seed", "dt", "grid_divisor", "output",
];

struct Keys<'a>(&'a BTreeMap<String, String>);

impl Keys<'_> {
    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a number"))),
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        if !self.0.contains_key(key) {
            return Err(Error::Config(format!("missing required key '{key}'")));
        }
        self.f64_or(key, 0.0)
    }

    fn u64_req(&self, key: &str) -> Result<u64> {
        if !self.0.contains_key(key) {
            return Err(Error::Config(format!("missing required key '{key}'")));
        }
        self.u64_or(key, 0)
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer"))),
        }
    }
}

/// Model parameters from a config map; missing keys take the reference values.
pub fn params_from_map(map: &BTreeMap<String, String>) -> Result<ModelParams> {
    let k = Keys(map);
    let r = ModelParams::reference();
    ModelParams::new(
        k.f64_or("a3", r.a3)?,
        k.f64_or("omega2", r.omega2)?,
        k.f64_or("omega3", r.omega3)?,
        k.f64_or("delta2", r.delta2)?,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub params: ModelParams,
    pub theta3: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub r_steps: usize,
    pub dt_w: f64,
    pub dt_dj: f64,
    pub cutoff_fraction: f64,
    pub mode: SweepMode,
    pub total_time: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub dt: f64,
    pub grid_divisor: usize,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        if let Some(bad) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{bad}'")));
        }
        let k = Keys(&map);
        let mode = SweepMode::parse(map.get("mode").map_or("analytic", String::as_str))?;
        let mc = mode != SweepMode::Analytic;
        let cfg = SweepConfig {
            params: params_from_map(&map)?,
            theta3: k.f64_or("theta3", FRAC_PI_2)?,
            r_min: k.f64_req("r_min")?,
            r_max: k.f64_req("r_max")?,
            r_steps: k.u64_req("r_steps")? as usize,
            dt_w: k.f64_or("dt_w", 114.0)?,
            dt_dj: k.f64_or("dt_dj", 160.0)?,
            cutoff_fraction: k.f64_or("cutoff_fraction", DEFAULT_CUTOFF_FRACTION)?,
            mode,
            total_time: if mc { k.f64_req("total_time")? } else { k.f64_or("total_time", 0.0)? },
            trajectories: if mode == SweepMode::FullMc { k.u64_req("trajectories")? } else { k.u64_or("trajectories", 1)? } as usize,
            seed: k.u64_or("seed", 0)?,
            dt: k.f64_or("dt", TrajectoryConfig::DEFAULT_DT)?,
            grid_divisor: k.u64_or("grid_divisor", 8)? as usize,
            output: map.get("output").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_steps == 0 {
            return Err(Error::Config("r_steps must be >= 1".into()));
        }
        if !(self.r_min > 0.0 && self.r_min.is_finite() && self.r_max.is_finite()) {
            return Err(Error::Config(format!("r range must be positive, got [{}, {}]", self.r_min, self.r_max)));
        }
        if self.r_steps == 1 && self.r_max != self.r_min || self.r_steps > 1 && !(self.r_max > self.r_min) {
            return Err(Error::Config("r grid must be strictly increasing".into()));
        }
        let unit = TransitionRates::new(1.0, 1.0, 1.0, 1.0, RateMethod::ExactSolve);
        TelegraphModel::with_cutoff(unit, self.dt_dj, self.dt_w, self.cutoff_fraction).map_err(|e| Error::Config(e.to_string()))?;
        if self.mode != SweepMode::Analytic && !(self.total_time > 0.0) {
            return Err(Error::Config("total_time must be > 0".into()));
        }
        if self.mode == SweepMode::FullMc && (self.trajectories == 0 || self.grid_divisor < 4 || !(self.dt_w > 0.0)) {
            return Err(Error::Config("full-mc needs trajectories >= 1, grid_divisor >= 4 and dt_w > 0".into()));
        }
        Ok(())
    }

    pub fn r_grid(&self) -> Vec<f64> {
        if self.r_steps == 1 {
            return vec![self.r_min];
        }
        let h = (self.r_max - self.r_min) / (self.r_steps - 1) as f64;
        (0..self.r_steps).map(|k| self.r_min + k as f64 * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub coupling_re: f64,
    pub coupling_im: f64,
    pub trusted: bool,
    pub first_order: TransitionRates,
    pub exact: TransitionRates,
    pub statistics: TelegraphStatistics,
    pub empirical: Option<EmpiricalStatistics>,
}

pub const CSV_COLUMNS: &[&str] = &[
    "r", "re_c3", "im_c3", "trusted", "p01_fo", "p10_fo", "p12_fo", "p21_fo", "p01", "p10", "p12", "p21", "t0", "t1", "t2",
    "t0_cor", "t1_cor", "t2_cor", "n0", "n1", "n2", "n2_cor", "n_dj", "n_dj_cor", "emp_t0", "emp_t0_se", "emp_t1",
    "emp_t1_se", "emp_t2", "emp_t2_se", "emp_n0", "emp_n0_se", "emp_n1", "emp_n1_se", "emp_n2", "emp_n2_se", "emp_n_dj",
    "emp_n_dj_se", "emp_dj_up", "emp_dj_down", "emp_periods",
];

fn num(x: f64) -> String {
    format!("{x:.9e}")
}

impl SweepRow {
    pub fn csv_fields(&self) -> Vec<String> {
        let s = &self.statistics;
        let mut f = vec![num(self.r), num(self.coupling_re), num(self.coupling_im), u8::from(self.trusted).to_string()];
        f.extend(self.first_order.as_array().map(num));
        f.extend(self.exact.as_array().map(num));
        f.extend([s.t0, s.t1, s.t2, s.t0_cor, s.t1_cor, s.t2_cor, s.n0, s.n1, s.n2, s.n2_cor, s.n_dj, s.n_dj_cor].map(num));
        match &self.empirical {
            Some(e) => {
                for x in e.t.iter().chain(&e.n).chain([&e.n_dj]) {
                    f.push(num(x.value));
                    f.push(num(x.std_err));
                }
                f.push(e.double_jumps.up.to_string());
                f.push(e.double_jumps.down.to_string());
                f.push(e.total_periods().to_string());
            }
            None => f.extend(std::iter::repeat_n(String::new(), 17)),
        }
        f
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("# schema={SCHEMA}\n{}\n", CSV_COLUMNS.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_fields().join(","));
    }
    out
}

fn sweep_point(cfg: &SweepConfig, index: usize, r: f64) -> Result<SweepRow> {
    let coupling = compute_c3(&Geometry::new(r).with_theta(cfg.theta3), cfg.params.a3)?;
    let first_order = rates_first_order(&cfg.params, &coupling)?;
    let exact = rates_exact(&cfg.params, &coupling)?;
    let model = TelegraphModel::with_cutoff(exact, cfg.dt_dj, cfg.dt_w, cfg.cutoff_fraction)?;
    let statistics = window_corrected_statistics(&model)?;
    let seed = cfg.seed.wrapping_add(index as u64);
    let empirical = match cfg.mode {
        SweepMode::Analytic => None,
        SweepMode::TelegraphMc => {
            let seq = simulate_telegraph(&exact, cfg.total_time, seed)?;
            let seq = if cfg.dt_w > 0.0 { censor(&seq, model.dtau()) } else { seq };
            Some(estimate_statistics(&[seq], cfg.dt_dj)?)
        }
        SweepMode::FullMc => Some(full_mc_point(cfg, &coupling, seed)?),
    };
    Ok(SweepRow {
        r,
        coupling_re: coupling.c3.re,
        coupling_im: coupling.c3.im,
        trusted: is_trusted_distance(r),
        first_order,
        exact,
        statistics,
        empirical,
    })
}

fn full_mc_point(cfg: &SweepConfig, coupling: &DipoleCoupling, seed: u64) -> Result<EmpiricalStatistics> {
    let traj = TrajectoryConfig::new(cfg.params, *coupling, cfg.total_time).with_dt(cfg.dt).with_seed(seed);
    let classifier = ClassifierConfig::for_params(&cfg.params);
    let seqs = run_ensemble(&traj, cfg.trajectories)?
        .iter()
        .map(|rec| classify_periods(&intensity_trace(rec, cfg.dt_w, cfg.grid_divisor)?, &classifier))
        .collect::<Result<Vec<_>>>()?;
    estimate_statistics(&seqs, cfg.dt_dj)
}

/// One row per grid point, in grid order. Points run in parallel.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.r_grid().into_par_iter().enumerate().map(|(i, r)| sweep_point(cfg, i, r)).collect()
}

/// Pearson correlation of two equally long series.
pub fn centered_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// `(max - min) / max`.
pub fn relative_modulation(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub schema: &'static str,
    pub mode: SweepMode,
    pub rows: usize,
    pub untrusted_rows: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub n_dj_modulation: f64,
    pub corr_n_dj_re_c3: f64,
    pub corr_t1_re_c3: f64,
    pub corr_t2_re_c3: f64,
    pub output: Option<String>,
    pub warnings: Vec<String>,
}

pub fn summarize(cfg: &SweepConfig, rows: &[SweepRow], output: Option<&Path>) -> SweepSummary {
    let col = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let re = col(&|r| r.coupling_re);
    let mut warnings = cfg.params.regime_warnings();
    for row in rows {
        warnings.extend(row.statistics.warnings.iter().map(|w| format!("r = {}: {w}", row.r)));
    }
    warnings.dedup();
    SweepSummary {
        schema: SCHEMA,
        mode: cfg.mode,
        rows: rows.len(),
        untrusted_rows: rows.iter().filter(|r| !r.trusted).count(),
        r_min: cfg.r_min,
        r_max: cfg.r_max,
        n_dj_modulation: relative_modulation(&col(&|r| r.statistics.n_dj)),
        corr_n_dj_re_c3: centered_correlation(&col(&|r| r.statistics.n_dj), &re),
        corr_t1_re_c3: centered_correlation(&col(&|r| r.statistics.t1), &re),
        corr_t2_re_c3: centered_correlation(&col(&|r| r.statistics.t2), &re),
        output: output.map(|p| p.display().to_string()),
        warnings,
    }
}

/// Critical detuning per quantity, or the reason none was found.
pub fn report_critical_detunings(params: &ModelParams) -> Result<serde_json::Value> {
    params.validate()?;
    let mut out = serde_json::Map::new();
    for q in CriticalQuantity::ALL {
        let v = match critical_detuning(params, q) {
            Ok(d) => serde_json::json!(d),
            Err(e) => serde_json::json!({ "error": e.to_string() }),
        };
        out.insert(q.name().to_string(), v);
    }
    Ok(serde_json::Value::Object(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "# reference pair\nr_min = 1\nr_max = 2\nr_steps = 5\n";

    #[test]
    fn parse_defaults_and_comments() {
        let cfg = SweepConfig::parse(&format!("{BASE}omega3 = 0.5 # strong drive\n")).unwrap();
        assert_eq!(cfg.params, ModelParams::reference());
        assert_eq!(cfg.mode, SweepMode::Analytic);
        assert_eq!(cfg.r_grid(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert_eq!(cfg.dt_w, 114.0);
        assert_eq!(cfg.output, None);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "r_max = 2\nr_steps = 5\n",
            "r_min = 2\nr_max = 1\nr_steps = 5\n",
            "r_min = 1\nr_max = 1\nr_steps = 3\n",
            "r_min = 1\nr_max = 2\nr_steps = 0\n",
            "r_min = 1\nr_max = 2\nr_steps = 5\nmode = quantum\n",
            "r_min = 1\nr_max = 2\nr_steps = 5\nmode = telegraph-mc\n",
            "r_min = 1\nr_max = 2\nr_steps = 5\nmode = full-mc\ntotal_time = 1e5\n",
            "r_min = 1\nr_max = 2\nr_steps = 5\ncolour = red\n",
            "r_min = 1\nr_min = 2\nr_steps = 5\n",
            "r_min = 1\nr_max = 2\nr_steps = 5\ndt_dj = 100\n",
            "r_min = 1\nr_max = x\nr_steps = 5\n",
            "just words\n",
        ] {
            assert!(matches!(SweepConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
        assert!(matches!(SweepConfig::parse("r_min = 1\nr_max = 2\nr_steps = 5\nomega3 = -1\n"), Err(Error::Domain(_))));
    }

    #[test]
    fn rows_follow_grid_order() {
        let cfg = SweepConfig::parse("r_min = 0.3\nr_max = 3\nr_steps = 7\n").unwrap();
        let rows = sweep(&cfg).unwrap();
        let rs: Vec<f64> = rows.iter().map(|r| r.r).collect();
        assert_eq!(rs, cfg.r_grid());
        assert!(!rows[0].trusted && rows[6].trusted);
        let csv = to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), format!("# schema={SCHEMA}"));
        assert_eq!(lines.next().unwrap().split(',').count(), CSV_COLUMNS.len());
        for l in lines {
            assert_eq!(l.split(',').count(), CSV_COLUMNS.len());
        }
    }

    #[test]
    fn correlation_helpers() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((centered_correlation(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((centered_correlation(&x, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-12);
        assert!((relative_modulation(&[2.0, 3.0, 4.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn critical_report_entries() {
        let rep = report_critical_detunings(&ModelParams::reference()).unwrap();
        let p12 = rep["p12"].as_f64().unwrap();
        assert!((p12 - 0.12147).abs() < 1e-5);
        assert_ne!(rep["t1"], rep["t2"]);
        let doubled = report_critical_detunings(&ModelParams::new(1.0, 0.01, 1.0, 0.0).unwrap()).unwrap();
        for q in CriticalQuantity::ALL {
            assert_ne!(rep[q.name()], doubled[q.name()], "{}", q.name());
        }
    }
}
