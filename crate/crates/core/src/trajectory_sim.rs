//! Quantum-jump trajectories of the two-atom system, photon emission records,
//! moving-window intensity traces and their classification into periods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

use crate::atomic_model::{basis_ket, build_operators, Basis, DickeOperators, DipoleCoupling, Matrix9, ModelParams, Vector9, C64};
use crate::error::{Error, Result};
use crate::telegraph_stats::{count_double_jumps, DoubleJumpCounts, Period, PeriodSequence};

/// Number of halvings used to locate a jump inside a step (resolution dt / 1024).
const BISECTION_DEPTH: usize = 10;
const NORM_GROWTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub params: ModelParams,
    pub coupling: DipoleCoupling,
    pub total_time: f64,
    pub dt: f64,
    pub seed: u64,
    pub initial: Vector9,
}

impl TrajectoryConfig {
    pub const DEFAULT_DT: f64 = 0.01;

    pub fn new(params: ModelParams, coupling: DipoleCoupling, total_time: f64) -> Self {
        TrajectoryConfig {
            params,
            coupling,
            total_time,
            dt: Self::DEFAULT_DT,
            seed: 0,
            initial: basis_ket(Basis::G),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial(mut self, initial: Vector9) -> Self {
        self.initial = initial;
        self
    }

    /// Largest step allowed for the given parameters.
    pub fn max_dt(&self) -> f64 {
        0.05 / self.params.a3.max(self.params.omega3)
    }

    pub fn validate(&self) -> Result<DickeOperators> {
        let ops = build_operators(&self.params, &self.coupling)?;
        ops.require_valid_channels()?;
        if !(self.dt > 0.0 && self.dt <= self.max_dt() * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("step {} outside (0, {}]", self.dt, self.max_dt())));
        }
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(Error::Domain(format!("total time must be > 0, got {}", self.total_time)));
        }
        if !(self.initial.norm() > 0.0) {
            return Err(Error::Domain("initial state is zero".into()));
        }
        Ok(ops)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Channel {
    Plus,
    Minus,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Plus => "plus",
            Channel::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Emission {
    pub time: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmissionRecord {
    pub emissions: Vec<Emission>,
    pub total_time: f64,
}

impl EmissionRecord {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.emissions.iter().map(|e| e.time)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# total_time={:e}\n", self.total_time);
        for e in &self.emissions {
            let _ = writeln!(out, "{:e} {}", e.time, e.channel.label());
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut rec = EmissionRecord { emissions: Vec::new(), total_time: f64::NAN };
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some(v) = h.trim().strip_prefix("total_time=") {
                    rec.total_time = v.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad total_time", n + 1)))?;
                }
                continue;
            }
            let (t, c) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'time channel'", n + 1)))?;
            let time: f64 = t.parse().map_err(|_| Error::Parse(format!("line {}: bad time", n + 1)))?;
            let channel = match c.trim() {
                "plus" => Channel::Plus,
                "minus" => Channel::Minus,
                other => return Err(Error::Parse(format!("line {}: unknown channel '{other}'", n + 1))),
            };
            if rec.emissions.last().is_some_and(|e| e.time >= time) {
                return Err(Error::Parse(format!("line {}: times must increase", n + 1)));
            }
            rec.emissions.push(Emission { time, channel });
        }
        if !rec.total_time.is_finite() {
            return Err(Error::Parse("missing '# total_time=' header".into()));
        }
        if rec.emissions.iter().any(|e| e.time < 0.0 || e.time > rec.total_time) {
            return Err(Error::Parse("emission time outside [0, total_time]".into()));
        }
        Ok(rec)
    }
}

/// No-jump evolution `exp(-i H_cond tau)` for `tau = dt / 2^k`, k = 0..=depth.
#[derive(Debug, Clone)]
pub struct NoJumpPropagator {
    h: Matrix9,
    dt: f64,
    table: Vec<Matrix9>,
}

impl NoJumpPropagator {
    pub fn new(h: Matrix9, dt: f64) -> Self {
        let table = (0..=BISECTION_DEPTH).map(|k| Self::exact(&h, dt / (1u64 << k) as f64)).collect();
        NoJumpPropagator { h, dt, table }
    }

    fn exact(h: &Matrix9, tau: f64) -> Matrix9 {
        (h * C64::new(0.0, -tau)).exp()
    }

    /// Evolves over `tau`; `tau == dt` uses the cached matrix.
    pub fn advance(&self, psi: &Vector9, tau: f64) -> Result<Vector9> {
        let next = if tau == self.dt { self.table[0] * psi } else { Self::exact(&self.h, tau) * psi };
        let (before, after) = (psi.norm_squared(), next.norm_squared());
        if after > before * (1.0 + NORM_GROWTH_TOL) {
            return Err(Error::Step(format!("norm grew from {before} to {after}")));
        }
        Ok(next)
    }

    /// Latest time in `(0, span]` (to resolution dt/2^depth) at which the
    /// squared norm is still above `u`, given that it is at or below `u` at `span`.
    /// Returns the jump time offset and the state there.
    fn locate(&self, psi: &Vector9, span: f64, u: f64) -> (f64, Vector9) {
        let mut offset = 0.0;
        let mut cur = *psi;
        for k in 1..=BISECTION_DEPTH {
            let h = self.dt / (1u64 << k) as f64;
            if offset + h >= span {
                continue;
            }
            let trial = self.table[k] * cur;
            if trial.norm_squared() > u {
                cur = trial;
                offset += h;
            }
        }
        let last = self.dt / (1u64 << BISECTION_DEPTH) as f64;
        if offset + last >= span {
            (span, Self::exact(&self.h, span - offset) * cur)
        } else {
            (offset + last, self.table[BISECTION_DEPTH] * cur)
        }
    }
}

/// Random stream for trajectory `index` of an ensemble seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Emission record of stream 0.
pub fn run_trajectory(config: &TrajectoryConfig) -> Result<EmissionRecord> {
    Ok(run_trajectory_with(config, 0, &[])?.0)
}

/// Runs trajectory `index` and also returns the normalized state at each
/// checkpoint time (sorted, within `[0, total_time]`).
pub fn run_trajectory_with(config: &TrajectoryConfig, index: u64, checkpoints: &[f64]) -> Result<(EmissionRecord, Vec<Vector9>)> {
    let ops = config.validate()?;
    if checkpoints.windows(2).any(|w| w[0] > w[1]) || checkpoints.iter().any(|&c| !(0.0..=config.total_time).contains(&c)) {
        return Err(Error::Domain("checkpoints must be sorted and inside [0, total_time]".into()));
    }
    let prop = NoJumpPropagator::new(ops.h_cond(), config.dt);
    let rp = ops.rplus_c();
    let rm = ops.rminus_c();
    let mut rng = trajectory_rng(config.seed, index);

    let mut psi = config.initial / C64::from(config.initial.norm());
    let mut t = 0.0;
    let mut u = draw_threshold(&mut rng);
    let mut emissions = Vec::new();
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    let total = config.total_time;

    loop {
        while next_cp < checkpoints.len() && checkpoints[next_cp] <= t {
            snapshots.push(psi / C64::from(psi.norm()));
            next_cp += 1;
        }
        if t >= total {
            break;
        }
        let mut target = (t + config.dt).min(total);
        if let Some(&cp) = checkpoints.get(next_cp) {
            target = target.min(cp);
        }
        let tau = if target == t + config.dt { config.dt } else { target - t };
        let next = prop.advance(&psi, tau)?;
        if next.norm_squared() > u {
            psi = next;
            t = target;
            continue;
        }
        let (offset, at_jump) = prop.locate(&psi, tau, u);
        let a = ops.gamma_plus * (rp * at_jump).norm_squared();
        let b = ops.gamma_minus * (rm * at_jump).norm_squared();
        if !(a + b > 0.0) {
            return Err(Error::Numerical(format!("no emission channel open at t = {}", t + offset)));
        }
        let (channel, jumped) = if rng.random::<f64>() * (a + b) < a {
            (Channel::Plus, rp * at_jump)
        } else {
            (Channel::Minus, rm * at_jump)
        };
        t = if offset >= tau { target } else { t + offset };
        psi = jumped / C64::from(jumped.norm());
        emissions.push(Emission { time: t, channel });
        u = draw_threshold(&mut rng);
    }
    Ok((EmissionRecord { emissions, total_time: total }, snapshots))
}

/// Average of `|psi><psi|` over `n` trajectories at each checkpoint.
pub fn ensemble_density(config: &TrajectoryConfig, n: usize, checkpoints: &[f64]) -> Result<Vec<Matrix9>> {
    if n == 0 {
        return Err(Error::Domain("ensemble must contain at least one trajectory".into()));
    }
    let states: Vec<Vec<Vector9>> = (0..n as u64)
        .into_par_iter()
        .map(|i| run_trajectory_with(config, i, checkpoints).map(|r| r.1))
        .collect::<Result<_>>()?;
    let mut out = vec![Matrix9::zeros(); checkpoints.len()];
    for traj in &states {
        for (acc, psi) in out.iter_mut().zip(traj) {
            *acc += psi * psi.adjoint();
        }
    }
    let w = C64::from(1.0 / n as f64);
    Ok(out.into_iter().map(|m| m * w).collect())
}

/// Independent trajectories (streams 0..n) for campaign runs.
pub fn run_ensemble(config: &TrajectoryConfig, n: usize) -> Result<Vec<EmissionRecord>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| run_trajectory_with(config, i, &[]).map(|r| r.0))
        .collect()
}

/// Photon counts in a window of width `dt_w` sliding on a grid of step `dt_w / K`,
/// divided by `dt_w`. `times[k]` is the start of window `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    pub dt_w: f64,
    pub step: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl IntensityTrace {
    /// Midpoint of window `k`, the time the value is attributed to.
    pub fn centre(&self, k: usize) -> f64 {
        self.times[k] + 0.5 * self.dt_w
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# dt_w={:.11e} step={:.11e}\n", self.dt_w, self.step);
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:.11e} {v:.11e}");
        }
        out
    }
}

pub fn intensity_trace(record: &EmissionRecord, dt_w: f64, grid_divisor: usize) -> Result<IntensityTrace> {
    if !(dt_w > 0.0) || grid_divisor < 4 {
        return Err(Error::Domain(format!("need dt_w > 0 and K >= 4, got {dt_w}, {grid_divisor}")));
    }
    let step = dt_w / grid_divisor as f64;
    let n = if record.total_time >= dt_w { ((record.total_time - dt_w) / step + 1e-9).floor() as usize + 1 } else { 0 };
    let times: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    let em: Vec<f64> = record.times().collect();
    let (mut lo, mut hi) = (0, 0);
    let values = times
        .iter()
        .map(|&t0| {
            while lo < em.len() && em[lo] < t0 {
                lo += 1;
            }
            hi = hi.max(lo);
            while hi < em.len() && em[hi] < t0 + dt_w {
                hi += 1;
            }
            (hi - lo) as f64 / dt_w
        })
        .collect();
    Ok(IntensityTrace { dt_w, step, times, values })
}

/// Intensity thresholds separating the dark, single and double levels, and
/// the number of consecutive grid points needed to accept a level change
/// (1 disables hysteresis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierConfig {
    pub lower: f64,
    pub upper: f64,
    pub hysteresis: usize,
}

impl ClassifierConfig {
    pub fn new(lower: f64, upper: f64, hysteresis: usize) -> Result<Self> {
        let c = ClassifierConfig { lower, upper, hysteresis };
        c.validate()?;
        Ok(c)
    }

    /// Thresholds at half and three halves of the single-atom light intensity.
    pub fn for_params(params: &ModelParams) -> Self {
        let i1 = params.single_atom_intensity();
        ClassifierConfig { lower: 0.5 * i1, upper: 1.5 * i1, hysteresis: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper) || self.hysteresis == 0 {
            return Err(Error::Domain(format!(
                "thresholds must satisfy 0 < lower < upper and hysteresis >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn level(&self, v: f64) -> u8 {
        if v < self.lower {
            0
        } else if v < self.upper {
            1
        } else {
            2
        }
    }
}

/// Splits a trace into intensity periods. Boundaries sit halfway between the
/// last grid point of the old level and the first of the new one, in window
/// centre time. The first and last periods are cut by the record ends.
pub fn classify_periods(trace: &IntensityTrace, classifier: &ClassifierConfig) -> Result<PeriodSequence> {
    classifier.validate()?;
    let mut seq = PeriodSequence { periods: Vec::new(), truncated_start: true, truncated_end: true };
    let n = trace.values.len();
    if n == 0 {
        return Ok(seq);
    }
    let mut current = classifier.level(trace.values[0]);
    let mut start = trace.centre(0);
    let (mut run_level, mut run_start, mut run_len) = (current, 0, 0);
    for k in 1..n {
        let l = classifier.level(trace.values[k]);
        if l == current {
            run_len = 0;
            continue;
        }
        if run_len > 0 && l == run_level {
            run_len += 1;
        } else {
            (run_level, run_start, run_len) = (l, k, 1);
        }
        if run_len >= classifier.hysteresis {
            let boundary = trace.centre(run_start) - 0.5 * trace.step;
            seq.periods.push(Period { level: current, start, duration: boundary - start });
            current = l;
            start = boundary;
            run_len = 0;
        }
    }
    seq.periods.push(Period { level: current, start, duration: trace.centre(n - 1) - start });
    Ok(seq)
}

/// Window width, grid divisor and thresholds for turning emissions into periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub dt_w: f64,
    pub grid_divisor: usize,
    pub classifier: ClassifierConfig,
}

impl PipelineConfig {
    pub fn new(params: &ModelParams, dt_w: f64) -> Self {
        PipelineConfig { dt_w, grid_divisor: 8, classifier: ClassifierConfig::for_params(params) }
    }
}

/// Trajectory, intensity trace and classification in one call.
pub fn simulate_periods(config: &TrajectoryConfig, pipeline: &PipelineConfig) -> Result<PeriodSequence> {
    let record = run_trajectory(config)?;
    let trace = intensity_trace(&record, pipeline.dt_w, pipeline.grid_divisor)?;
    classify_periods(&trace, &pipeline.classifier)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Distance from `x` in units of the standard error.
    pub fn sigmas_from(&self, x: f64) -> f64 {
        (self.value - x).abs() / self.std_err
    }
}

/// Measured period statistics with standard errors: mean durations from the
/// sample spread, rates from Poisson counting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalStatistics {
    pub t: [Estimate; 3],
    pub n: [Estimate; 3],
    pub n_dj: Estimate,
    pub n_dj_up: Estimate,
    pub n_dj_down: Estimate,
    pub counts: [usize; 3],
    pub double_jumps: DoubleJumpCounts,
    pub observed_time: f64,
}

impl EmpiricalStatistics {
    /// Ratio of dark to double-intensity period counts.
    pub fn dark_to_double(&self) -> f64 {
        self.counts[0] as f64 / self.counts[2] as f64
    }

    pub fn t_values(&self) -> [f64; 3] {
        self.t.map(|e| e.value)
    }

    pub fn total_periods(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub const MIN_PERIODS: usize = 100;

pub fn estimate_statistics(sequences: &[PeriodSequence], dt_dj: f64) -> Result<EmpiricalStatistics> {
    let mut durations: [Vec<f64>; 3] = Default::default();
    let mut dj = DoubleJumpCounts::default();
    let mut observed = 0.0;
    for s in sequences {
        for p in s.complete() {
            durations[p.level as usize].push(p.duration);
        }
        observed += s.observed_time();
        let c = count_double_jumps(s, dt_dj);
        dj.up += c.up;
        dj.down += c.down;
    }
    let counts = [durations[0].len(), durations[1].len(), durations[2].len()];
    let total: usize = counts.iter().sum();
    if total < MIN_PERIODS || counts.iter().any(|&c| c < 2) {
        return Err(Error::Estimation(format!("too few complete periods: {counts:?}")));
    }
    let mean_duration = |d: &Vec<f64>| {
        let m = d.len() as f64;
        let mean = d.iter().sum::<f64>() / m;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        Estimate { value: mean, std_err: (var / m).sqrt() }
    };
    let rate = |c: f64| Estimate { value: c / observed, std_err: c.max(1.0).sqrt() / observed };
    Ok(EmpiricalStatistics {
        t: [mean_duration(&durations[0]), mean_duration(&durations[1]), mean_duration(&durations[2])],
        n: counts.map(|c| rate(c as f64)),
        n_dj: rate((dj.up + dj.down) as f64),
        n_dj_up: rate(dj.up as f64),
        n_dj_down: rate(dj.down as f64),
        counts,
        double_jumps: dj,
        observed_time: observed,
    })
}

/// Difference of up and down double-jump counts in units of its Poisson error.
pub fn up_down_sigmas(c: &DoubleJumpCounts) -> f64 {
    let (u, d) = (c.up as f64, c.down as f64);
    if u + d == 0.0 {
        0.0
    } else {
        (u - d).abs() / (u + d).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic_rates::rates_exact;
    use crate::bloch_engine::{propagate, BlochGenerator};
    use crate::telegraph_stats::{simulate_telegraph, window_corrected_statistics, TelegraphModel};
    use approx::assert_relative_eq;

    fn reference_config(total: f64) -> TrajectoryConfig {
        TrajectoryConfig::new(ModelParams::reference(), DipoleCoupling::none(), total).with_dt(0.05)
    }

    fn max_abs(m: &Matrix9) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Asymptotic Kolmogorov-Smirnov p-value for a sample against a CDF.
    fn ks_p_value(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let p: f64 = (1..100).map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp()).sum();
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn dark_state_never_emits() {
        let params = ModelParams::new(1.0, 0.0, 0.5, 0.0).unwrap();
        let cfg = TrajectoryConfig::new(params, DipoleCoupling::none(), 1e4)
            .with_dt(0.05)
            .with_initial(basis_ket(Basis::E2));
        assert!(run_trajectory(&cfg).unwrap().emissions.is_empty());
    }

    #[test]
    fn determinism_and_streams() {
        let cfg = reference_config(2000.0).with_seed(11);
        let a = run_trajectory(&cfg).unwrap();
        let b = run_trajectory(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory_with(&cfg, 1, &[]).unwrap().0;
        assert_ne!(a, c);
        assert!(a.emissions.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.emissions.iter().all(|e| e.time >= 0.0 && e.time <= cfg.total_time));
    }

    #[test]
    fn record_text_round_trip() {
        let rec = run_trajectory(&reference_config(500.0)).unwrap();
        assert!(!rec.emissions.is_empty());
        let back = EmissionRecord::from_text(&rec.to_text()).unwrap();
        assert_eq!(back, rec);
        assert!(EmissionRecord::from_text("1.0 plus\n").is_err());
        assert!(EmissionRecord::from_text("# total_time=10\n2.0 plus\n1.0 plus\n").is_err());
        assert!(EmissionRecord::from_text("# total_time=10\n2.0 sideways\n").is_err());
    }

    #[test]
    fn waiting_time_from_doubly_excited_state() {
        // negligible strong drive: first emission from |e3> is exponential with rate 2 a3
        let params = ModelParams::new(1.0, 0.0, 1e-6, 0.0).unwrap();
        let cfg = TrajectoryConfig::new(params, DipoleCoupling::none(), 30.0)
            .with_dt(0.05)
            .with_initial(basis_ket(Basis::E3))
            .with_seed(5);
        let first: Vec<f64> = (0..10_000u64)
            .into_par_iter()
            .map(|i| run_trajectory_with(&cfg, i, &[]).unwrap().0.emissions[0].time)
            .collect();
        let p = ks_p_value(first, |t| 1.0 - (-2.0 * t).exp());
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn waiting_time_matches_no_jump_norm() {
        let params = ModelParams::reference();
        let coupling = DipoleCoupling::new(C64::new(0.1, 0.1));
        let cfg = TrajectoryConfig::new(params, coupling, 200.0).with_dt(0.05).with_seed(9);
        let h = build_operators(&params, &coupling).unwrap().h_cond();
        let psi0 = cfg.initial;
        let first: Vec<f64> = (0..5000u64)
            .into_par_iter()
            .map(|i| run_trajectory_with(&cfg, i, &[]).unwrap().0.emissions[0].time)
            .collect();
        let p = ks_p_value(first, |t| 1.0 - ((h * C64::new(0.0, -t)).exp() * psi0).norm_squared());
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn symmetric_state_emits_only_on_plus_channel() {
        let params = ModelParams::new(1.0, 0.0, 1e-6, 0.0).unwrap();
        let cfg = TrajectoryConfig::new(params, DipoleCoupling::new(C64::new(0.2, 0.0)), 50.0)
            .with_dt(0.05)
            .with_initial(basis_ket(Basis::S13));
        for i in 0..200 {
            let rec = run_trajectory_with(&cfg, i, &[]).unwrap().0;
            assert!(!rec.emissions.is_empty());
            assert!(rec.emissions.iter().all(|e| e.channel == Channel::Plus));
        }
    }

    #[test]
    fn ensemble_matches_bloch_propagation() {
        let params = ModelParams::reference();
        let coupling = DipoleCoupling::new(C64::new(0.1, 0.1));
        let cfg = TrajectoryConfig::new(params, coupling, 50.0).with_dt(0.05).with_seed(1);
        let n = 200;
        let rho_mc = ensemble_density(&cfg, n, &[50.0]).unwrap();
        let gen = BlochGenerator::from_params(&params, &coupling).unwrap();
        let psi = cfg.initial;
        let rho = propagate(&(psi * psi.adjoint()), 50.0, &gen).unwrap();
        let err = max_abs(&(rho_mc[0] - rho));
        assert!(err <= 5.0 / (n as f64).sqrt(), "{err}");
    }

    #[test]
    fn step_error_on_norm_growth() {
        let h = Matrix9::identity() * C64::new(0.0, 0.1);
        let p = NoJumpPropagator::new(h, 0.01);
        assert!(matches!(p.advance(&basis_ket(Basis::G), 0.01), Err(Error::Step(_))));
    }

    #[test]
    fn invalid_configs() {
        assert!(reference_config(100.0).with_dt(0.1).validate().is_err());
        assert!(reference_config(-1.0).validate().is_err());
        let strong = TrajectoryConfig::new(ModelParams::reference(), DipoleCoupling::new(C64::new(1.2, 0.0)), 10.0);
        assert!(matches!(strong.validate(), Err(Error::Regime(_))));
        assert!(reference_config(10.0).with_initial(Vector9::zeros()).validate().is_err());
    }

    #[test]
    fn trace_of_uniform_emissions() {
        let empty = EmissionRecord { emissions: vec![], total_time: 1000.0 };
        let tr = intensity_trace(&empty, 100.0, 8).unwrap();
        assert!(tr.values.iter().all(|&v| v == 0.0));
        assert_relative_eq!(*tr.times.last().unwrap(), 900.0, max_relative = 1e-12);
        assert!(intensity_trace(&empty, 100.0, 3).is_err());

        let rate = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = 0.0;
        let mut emissions = Vec::new();
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / rate;
            if t > 1e5 {
                break;
            }
            emissions.push(Emission { time: t, channel: Channel::Plus });
        }
        let rec = EmissionRecord { emissions, total_time: 1e5 };
        let tr = intensity_trace(&rec, 500.0, 8).unwrap();
        let tol = 3.0 / (rate * 500.0f64).sqrt();
        let bad = tr.values.iter().filter(|&&v| ((v - rate) / rate).abs() > tol).count();
        assert!(bad * 100 < tr.values.len(), "{bad} of {}", tr.values.len());
        let mean = tr.values.iter().sum::<f64>() / tr.values.len() as f64;
        assert_relative_eq!(mean, rate, max_relative = 0.02);
    }

    #[test]
    fn classifier_recovers_square_wave() {
        let plateaus = [(0u8, 3000.0), (1, 2000.0), (2, 2500.0), (1, 1500.0), (0, 3000.0)];
        let i1 = 1.0 / 6.0;
        let level_at = |t: f64| {
            let mut acc = 0.0;
            for &(l, d) in &plateaus {
                acc += d;
                if t < acc {
                    return l as f64 * i1;
                }
            }
            plateaus.last().unwrap().0 as f64 * i1
        };
        let dt_w = 114.0;
        let step = dt_w / 8.0;
        let total: f64 = plateaus.iter().map(|p| p.1).sum();
        let n = ((total - dt_w) / step) as usize + 1;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
        let values = times
            .iter()
            .map(|&t0| (0..200).map(|j| level_at(t0 + (j as f64 + 0.5) * dt_w / 200.0)).sum::<f64>() / 200.0)
            .collect();
        let trace = IntensityTrace { dt_w, step, times, values };
        let seq = classify_periods(&trace, &ClassifierConfig::new(0.5 * i1, 1.5 * i1, 2).unwrap()).unwrap();
        let levels: Vec<u8> = seq.periods.iter().map(|p| p.level).collect();
        assert_eq!(levels, vec![0, 1, 2, 1, 0]);
        let mut boundary = 0.0;
        for (k, &(_, d)) in plateaus.iter().enumerate().take(plateaus.len() - 1) {
            boundary += d;
            assert!((seq.periods[k + 1].start - boundary).abs() <= dt_w, "{} vs {}", seq.periods[k + 1].start, boundary);
        }

        let flat = IntensityTrace { dt_w, step, times: vec![0.0, step, 2.0 * step], values: vec![0.0; 3] };
        let one = classify_periods(&flat, &ClassifierConfig::for_params(&ModelParams::reference())).unwrap();
        assert_eq!(one.periods.len(), 1);
        assert_eq!(one.periods[0].level, 0);
        assert_relative_eq!(one.periods[0].duration, 2.0 * step);
        assert!(ClassifierConfig::new(0.2, 0.1, 2).is_err());
    }

    #[test]
    fn light_period_intensities() {
        // C3 = 0: a single and a double intensity period emit at I1 and 2 I1
        let cfg = reference_config(3e5).with_seed(21);
        let rec = run_trajectory(&cfg).unwrap();
        let pipe = PipelineConfig::new(&cfg.params, 114.0);
        let trace = intensity_trace(&rec, pipe.dt_w, pipe.grid_divisor).unwrap();
        let seq = classify_periods(&trace, &pipe.classifier).unwrap();
        let times: Vec<f64> = rec.times().collect();
        let i1 = cfg.params.single_atom_intensity();
        assert_relative_eq!(i1, 1.0 / 6.0, max_relative = 1e-12);
        for (level, expect) in [(1u8, i1), (2, 2.0 * i1)] {
            let (mut count, mut time) = (0usize, 0.0);
            for p in seq.complete().iter().filter(|p| p.level == level && p.duration > 1000.0) {
                // skip the edges smeared by the window
                let (a, b) = (p.start + 114.0, p.end() - 114.0);
                count += times.partition_point(|&x| x < b) - times.partition_point(|&x| x < a);
                time += b - a;
            }
            assert!(time > 2e4, "level {level}: only {time}");
            assert_relative_eq!(count as f64 / time, expect, max_relative = 0.05);
        }
    }

    #[test]
    fn estimates_from_known_telegraph_rates() {
        let params = ModelParams::reference();
        let rates = rates_exact(&params, &DipoleCoupling::none()).unwrap();
        let seqs: Vec<PeriodSequence> = (0..4).map(|s| simulate_telegraph(&rates, 5e6, s).unwrap()).collect();
        let est = estimate_statistics(&seqs, 160.0).unwrap();
        let m = TelegraphModel::new(rates, 160.0, 0.0).unwrap();
        let th = window_corrected_statistics(&m).unwrap();
        for i in 0..3 {
            assert!(est.t[i].sigmas_from(th.t()[i]) < 3.0, "T{i}: {:?} vs {}", est.t[i], th.t()[i]);
            assert!(est.n[i].sigmas_from(th.n()[i]) < 3.0, "n{i}: {:?} vs {}", est.n[i], th.n()[i]);
        }
        assert!(est.n_dj.sigmas_from(th.n_dj) < 3.0);
        assert!(up_down_sigmas(&est.double_jumps) < 3.0);
        assert!(estimate_statistics(&seqs[..0], 160.0).is_err());
    }
}
