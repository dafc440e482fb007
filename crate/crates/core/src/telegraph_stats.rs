//! Three-level telegraph process: period rates, mean durations, double jumps,
//! corrections for short periods hidden by the averaging window, and a
//! Markov-chain simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use std::fmt::Write as _;

use crate::analytic_rates::{RateMethod, TransitionRates};
use crate::error::{Error, Result};

/// Default hidden-period cutoff as a fraction of the averaging window.
pub const DEFAULT_CUTOFF_FRACTION: f64 = 2.0 / 3.0;

/// Correction formulas assume the cutoff is small against every mean duration.
pub const MAX_CUTOFF_RATIO: f64 = 0.2;

/// Telegraph rates plus the double-jump window and the averaging window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelegraphModel {
    pub rates: TransitionRates,
    pub dt_dj: f64,
    pub dt_w: f64,
    pub cutoff_fraction: f64,
}

impl TelegraphModel {
    pub fn new(rates: TransitionRates, dt_dj: f64, dt_w: f64) -> Result<Self> {
        Self::with_cutoff(rates, dt_dj, dt_w, DEFAULT_CUTOFF_FRACTION)
    }

    pub fn with_cutoff(rates: TransitionRates, dt_dj: f64, dt_w: f64, cutoff_fraction: f64) -> Result<Self> {
        rates.require_positive()?;
        if !(dt_w >= 0.0 && dt_w.is_finite()) {
            return Err(Error::Domain(format!("averaging window must be >= 0, got {dt_w}")));
        }
        if !(dt_dj > dt_w) {
            return Err(Error::Domain(format!(
                "double-jump window {dt_dj} must exceed the averaging window {dt_w}"
            )));
        }
        if !(0.5..=0.8).contains(&cutoff_fraction) {
            return Err(Error::Domain(format!("cutoff fraction {cutoff_fraction} outside [0.5, 0.8]")));
        }
        Ok(TelegraphModel { rates, dt_dj, dt_w, cutoff_fraction })
    }

    /// Shortest period that survives the averaging window.
    pub fn dtau(&self) -> f64 {
        self.cutoff_fraction * self.dt_w
    }
}

/// Period rates `n_i` (per unit time), mean durations `T_i`, double-jump
/// rates, and their values corrected for periods shorter than `dtau`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelegraphStatistics {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    pub n_dj: f64,
    pub n_dj_up: f64,
    pub n_dj_down: f64,
    /// Short-window expansion of `n_dj`.
    pub n_dj_linear: f64,
    pub dtau: f64,
    pub n2_cor: f64,
    pub t0_cor: f64,
    pub t1_cor: f64,
    pub t2_cor: f64,
    pub n_dj_cor: f64,
    pub n_dj_up_cor: f64,
    pub n_dj_down_cor: f64,
    pub warnings: Vec<String>,
}

impl TelegraphStatistics {
    pub fn t(&self) -> [f64; 3] {
        [self.t0, self.t1, self.t2]
    }

    pub fn n(&self) -> [f64; 3] {
        [self.n0, self.n1, self.n2]
    }

    pub fn t_cor(&self) -> [f64; 3] {
        [self.t0_cor, self.t1_cor, self.t2_cor]
    }

    /// `sum n_i T_i`, equal to one.
    pub fn occupancy_sum(&self) -> f64 {
        self.n0 * self.t0 + self.n1 * self.t1 + self.n2 * self.t2
    }
}

fn rate_sum(r: &TransitionRates) -> f64 {
    r.p01 * r.p21 + r.p21 * r.p10 + r.p01 * r.p12
}

pub fn ideal_statistics(rates: &TransitionRates, dt_dj: f64) -> Result<TelegraphStatistics> {
    rates.require_positive()?;
    if !(dt_dj >= 0.0 && dt_dj.is_finite()) {
        return Err(Error::Domain(format!("double-jump window must be >= 0, got {dt_dj}")));
    }
    let r = rates;
    let s = rate_sum(r);
    let k = r.p10 + r.p12;
    let base = r.p01 * r.p21 / s;
    let n0 = base * r.p10;
    let n2 = base * r.p12;
    let n1 = base * k;
    let window = -(-k * dt_dj).exp_m1();
    let n_dj_down = n2 * r.p10 / k * window;
    let n_dj_up = n0 * r.p12 / k * window;
    let t0 = 1.0 / r.p01;
    let t1 = 1.0 / k;
    let t2 = 1.0 / r.p21;
    Ok(TelegraphStatistics {
        n0,
        n1,
        n2,
        t0,
        t1,
        t2,
        n_dj: n_dj_up + n_dj_down,
        n_dj_up,
        n_dj_down,
        n_dj_linear: 2.0 * r.p01 * r.p10 * r.p12 * r.p21 / s * dt_dj,
        dtau: 0.0,
        n2_cor: n2,
        t0_cor: t0,
        t1_cor: t1,
        t2_cor: t2,
        n_dj_cor: n_dj_up + n_dj_down,
        n_dj_up_cor: n_dj_up,
        n_dj_down_cor: n_dj_down,
        warnings: Vec::new(),
    })
}

/// Ideal statistics plus the corrections for periods shorter than `dtau`.
///
/// Only the double-intensity period rate is depleted in the double-jump rate;
/// the upward rate is set equal to the downward one, as in the ideal process.
pub fn window_corrected_statistics(model: &TelegraphModel) -> Result<TelegraphStatistics> {
    let mut st = ideal_statistics(&model.rates, model.dt_dj)?;
    let r = &model.rates;
    let dtau = model.dtau();
    let k = r.p10 + r.p12;
    st.dtau = dtau;
    st.n2_cor = st.n2 * (-r.p21 * dtau).exp();
    st.n_dj_down_cor = st.n2_cor * r.p10 / k * (-(-k * model.dt_dj).exp_m1());
    st.n_dj_up_cor = st.n_dj_down_cor;
    st.n_dj_cor = 2.0 * st.n_dj_down_cor;
    st.t0_cor = st.t0 + dtau * (1.0 + r.p10 / r.p01);
    st.t1_cor = st.t1 + dtau * (1.0 + (r.p01 * r.p10 + r.p12 * r.p21) / (k * k));
    st.t2_cor = st.t2 + dtau * (1.0 + r.p12 / r.p21);
    for (i, t) in st.t().iter().enumerate() {
        if dtau / t >= MAX_CUTOFF_RATIO {
            st.warnings.push(format!("cutoff {dtau} is not small against T{i} = {t}"));
        }
    }
    Ok(st)
}

/// Recorded single-intensity periods when periods up to `dtau` are hidden:
/// density of durations, number per unit time and exact mean duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordedSingleDurations {
    pub n1: f64,
    pub lambda1: f64,
    /// Rate of hidden dark plus hidden double-intensity periods.
    pub hidden: f64,
    pub dtau: f64,
}

impl RecordedSingleDurations {
    pub fn new(rates: &TransitionRates, dtau: f64) -> Result<Self> {
        let st = ideal_statistics(rates, 0.0)?;
        let hidden = st.n0 * -(-dtau / st.t0).exp_m1() + st.n2 * -(-dtau / st.t2).exp_m1();
        Ok(RecordedSingleDurations { n1: st.n1, lambda1: 1.0 / st.t1, hidden, dtau })
    }

    /// Recorded periods per unit time with duration in `(t, t + dt)`, divided by `dt`.
    pub fn density(&self, t: f64) -> f64 {
        let l = self.lambda1;
        (self.n1 * l + self.hidden * (l * l * t - 2.0 * l)) * (-l * t).exp()
    }

    /// Integral of the density over `[dtau, inf)`.
    pub fn recorded_rate(&self) -> f64 {
        let (l, a) = (self.lambda1, self.dtau);
        (-l * a).exp() * (self.n1 + self.hidden * (l * a - 1.0))
    }

    /// Mean recorded duration (ratio of first and zeroth moments over `[dtau, inf)`).
    pub fn mean_duration(&self) -> f64 {
        let (l, a) = (self.lambda1, self.dtau);
        let first = (-l * a).exp() * (self.n1 * (a + 1.0 / l) + self.hidden * l * a * a);
        first / self.recorded_rate()
    }
}

/// Recovers the four rates from window-corrected mean durations
/// `[T0, T1, T2]` and the ratio of recorded dark to recorded double-intensity
/// period counts, inverting the first-order correction formulas.
pub fn invert_corrected_statistics(t_cor: [f64; 3], dark_to_double: f64, dtau: f64) -> Result<TransitionRates> {
    if t_cor.iter().any(|&t| !(t > dtau)) || !(dark_to_double > 0.0) || !(dtau >= 0.0) {
        return Err(Error::Estimation(format!(
            "cannot invert durations {t_cor:?} with ratio {dark_to_double} at cutoff {dtau}"
        )));
    }
    let [t0, t1, t2] = t_cor;
    let (mut p01, mut k, mut p21) = (1.0 / t0, 1.0 / t1, 1.0 / t2);
    for _ in 0..500 {
        let ratio = dark_to_double * ((p01 - p21) * dtau).exp();
        let f = ratio / (1.0 + ratio);
        let p01_new = (1.0 + dtau * k * f) / (t0 - dtau);
        let p21_new = (1.0 + dtau * k * (1.0 - f)) / (t2 - dtau);
        let k_new = (1.0 + dtau * (p01_new * f + p21_new * (1.0 - f))) / (t1 - dtau);
        let change = ((p01_new - p01) / p01).abs().max(((k_new - k) / k).abs()).max(((p21_new - p21) / p21).abs());
        (p01, k, p21) = (p01_new, k_new, p21_new);
        if change < 1e-14 {
            return Ok(TransitionRates::new(p01, k * f, k * (1.0 - f), p21, RateMethod::PeriodStatistics));
        }
    }
    Err(Error::Estimation("rate inversion did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Period {
    pub level: u8,
    pub start: f64,
    pub duration: f64,
}

impl Period {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Consecutive intensity periods. The first and last period may be cut by
/// the start and end of the record; such partial periods are excluded from
/// duration statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeriodSequence {
    pub periods: Vec<Period>,
    pub truncated_start: bool,
    pub truncated_end: bool,
}

impl PeriodSequence {
    /// A sequence of complete periods laid end to end from t = 0.
    pub fn from_levels(levels_durations: &[(u8, f64)]) -> Self {
        let mut t = 0.0;
        let periods = levels_durations
            .iter()
            .map(|&(level, duration)| {
                let p = Period { level, start: t, duration };
                t += duration;
                p
            })
            .collect();
        PeriodSequence { periods, truncated_start: false, truncated_end: false }
    }

    /// Periods with both ends observed.
    pub fn complete(&self) -> &[Period] {
        let n = self.periods.len();
        let lo = usize::from(self.truncated_start).min(n);
        let hi = n.saturating_sub(usize::from(self.truncated_end)).max(lo);
        &self.periods[lo..hi]
    }

    /// Time covered by the complete periods.
    pub fn observed_time(&self) -> f64 {
        self.complete().iter().map(|p| p.duration).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# truncated_start={} truncated_end={}", self.truncated_start, self.truncated_end);
        for p in &self.periods {
            let _ = writeln!(out, "{} {:.11e} {:.11e}", p.level, p.start, p.duration);
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut seq = PeriodSequence::default();
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                for kv in h.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("truncated_start", v)) => seq.truncated_start = v == "true",
                        Some(("truncated_end", v)) => seq.truncated_end = v == "true",
                        _ => {}
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 'level start duration'", n + 1)));
            }
            let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", n + 1));
            let level: u8 = f[0].parse().map_err(|_| bad("level"))?;
            if level > 2 {
                return Err(bad("level"));
            }
            let start: f64 = f[1].parse().map_err(|_| bad("start"))?;
            let duration: f64 = f[2].parse().map_err(|_| bad("duration"))?;
            seq.periods.push(Period { level, start, duration });
        }
        Ok(seq)
    }
}

/// Continuous-time Markov chain over the levels {0, 1, 2}. The initial level
/// is drawn from the stationary occupation; the last period is cut at `total_time`.
pub fn simulate_telegraph(rates: &TransitionRates, total_time: f64, seed: u64) -> Result<PeriodSequence> {
    if !(rates.p01 > 0.0 && rates.p21 > 0.0 && rates.p10 + rates.p12 > 0.0)
        || rates.p10 < 0.0
        || rates.p12 < 0.0
    {
        return Err(Error::Domain(format!("invalid telegraph rates {:?}", rates.as_array())));
    }
    let k = rates.p10 + rates.p12;
    let tmax = (1.0 / rates.p01).max(1.0 / k).max(1.0 / rates.p21);
    if !(total_time >= 100.0 * tmax) {
        return Err(Error::Domain(format!(
            "total time {total_time} is shorter than 100 mean durations ({})",
            100.0 * tmax
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hold = [
        Exp::new(rates.p01).map_err(|e| Error::Domain(e.to_string()))?,
        Exp::new(k).map_err(|e| Error::Domain(e.to_string()))?,
        Exp::new(rates.p21).map_err(|e| Error::Domain(e.to_string()))?,
    ];
    // stationary occupation n_i T_i
    let s = rate_sum(rates);
    let occ = [rates.p21 * rates.p10 / s, rates.p01 * rates.p21 / s];
    let u: f64 = rng.random();
    let mut level: u8 = if u < occ[0] {
        0
    } else if u < occ[0] + occ[1] {
        1
    } else {
        2
    };
    let down = rates.p10 / k;
    let mut t = 0.0;
    let mut seq = PeriodSequence { periods: Vec::new(), truncated_start: false, truncated_end: true };
    while t < total_time {
        let d: f64 = hold[level as usize].sample(&mut rng);
        let duration = d.min(total_time - t);
        seq.periods.push(Period { level, start: t, duration });
        t += d;
        level = match level {
            0 | 2 => 1,
            _ => {
                if rng.random::<f64>() < down {
                    0
                } else {
                    2
                }
            }
        };
    }
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DoubleJumpCounts {
    pub up: u64,
    pub down: u64,
}

/// Counts 0-1-2 (up) and 2-1-0 (down) passages whose intermediate
/// single-intensity period is shorter than `dt_dj`.
pub fn count_double_jumps(seq: &PeriodSequence, dt_dj: f64) -> DoubleJumpCounts {
    let mut c = DoubleJumpCounts::default();
    for w in seq.periods.windows(3) {
        if w[1].level != 1 || w[1].duration >= dt_dj {
            continue;
        }
        match (w[0].level, w[2].level) {
            (0, 2) => c.up += 1,
            (2, 0) => c.down += 1,
            _ => {}
        }
    }
    c
}

/// Hides every period of length `<= dtau`: its duration is split between the
/// neighbours, equal neighbours merge. The outermost resulting periods are
/// marked truncated because their boundaries depend on unseen context.
pub fn censor(seq: &PeriodSequence, dtau: f64) -> PeriodSequence {
    let mut kept: Vec<Period> = Vec::new();
    let mut carry = 0.0;
    for p in &seq.periods {
        if p.duration <= dtau {
            if let Some(last) = kept.last_mut() {
                last.duration += p.duration / 2.0;
                carry += p.duration / 2.0;
            } else {
                carry += p.duration;
            }
            continue;
        }
        let duration = p.duration + carry;
        carry = 0.0;
        match kept.last_mut() {
            Some(last) if last.level == p.level => last.duration += duration,
            _ => {
                let start = kept.last().map_or(seq.periods[0].start, |l| l.end());
                kept.push(Period { level: p.level, start, duration });
            }
        }
    }
    if let Some(last) = kept.last_mut() {
        last.duration += carry;
    }
    PeriodSequence { periods: kept, truncated_start: true, truncated_end: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_rates() -> TransitionRates {
        TransitionRates::new(8e-4, 8e-4 / 3.0, 4e-4, 1.6e-3 / 3.0, RateMethod::FirstOrderC3)
    }

    #[test]
    fn reference_values() {
        let st = ideal_statistics(&reference_rates(), 160.0).unwrap();
        assert_relative_eq!(st.t0, 1250.0, max_relative = 1e-12);
        assert_relative_eq!(st.t1, 1500.0, max_relative = 1e-12);
        assert_relative_eq!(st.t2, 1875.0, max_relative = 1e-12);
        assert_relative_eq!(st.n0, 1.28e-4, max_relative = 1e-12);
        assert_relative_eq!(st.n1, 3.2e-4, max_relative = 1e-12);
        assert_relative_eq!(st.n2, 1.92e-4, max_relative = 1e-12);
        assert_relative_eq!(st.occupancy_sum(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(st.n_dj_linear, 1.024e-7 * 160.0, max_relative = 1e-12);
        assert!(st.n_dj < st.n_dj_linear && st.n_dj > 0.9 * st.n_dj_linear);
        assert_eq!(st.n_dj_up, st.n_dj_down);
        assert_relative_eq!(st.n0 / st.n2, 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_window_has_no_double_jumps() {
        let st = ideal_statistics(&reference_rates(), 0.0).unwrap();
        assert_eq!(st.n_dj, 0.0);
        assert_eq!(st.n_dj_linear, 0.0);
    }

    #[test]
    fn invalid_rates_rejected() {
        let mut r = reference_rates();
        r.p12 = 0.0;
        assert!(matches!(ideal_statistics(&r, 1.0), Err(Error::Domain(_))));
        assert!(TelegraphModel::new(reference_rates(), 100.0, 114.0).is_err());
        assert!(TelegraphModel::with_cutoff(reference_rates(), 160.0, 114.0, 0.9).is_err());
    }

    #[test]
    fn no_cutoff_means_no_correction() {
        let m = TelegraphModel::new(reference_rates(), 160.0, 0.0).unwrap();
        let st = window_corrected_statistics(&m).unwrap();
        assert_eq!(st.t(), st.t_cor());
        assert_eq!(st.n2, st.n2_cor);
        assert_relative_eq!(st.n_dj_cor, st.n_dj, max_relative = 1e-15);
    }

    #[test]
    fn long_window_correction() {
        let m = TelegraphModel::new(reference_rates(), 400.0, 247.0).unwrap();
        let st = window_corrected_statistics(&m).unwrap();
        assert_relative_eq!(st.dtau, 164.6666666666, max_relative = 1e-9);
        let factor = 1.0 + (8e-4 * 8e-4 / 3.0 + 4e-4 * 1.6e-3 / 3.0) / (1.0 / 1500.0f64).powi(2);
        assert_relative_eq!(factor, 1.96, max_relative = 1e-12);
        assert_relative_eq!(st.t1_cor, 1500.0 + st.dtau * 1.96, max_relative = 1e-12);
        let excess = st.t1_cor / st.t1 - 1.0;
        assert!((0.21..0.22).contains(&excess), "{excess}");
        assert!(st.warnings.is_empty());
        assert_eq!(st.n_dj_up_cor, st.n_dj_down_cor);
        assert!(st.n_dj_cor < st.n_dj);
    }

    #[test]
    fn recorded_single_durations() {
        let r = reference_rates();
        let rec = RecordedSingleDurations::new(&r, 164.7).unwrap();
        // Simpson quadrature of the density over [dtau, 40 T1]
        let (a, b, n) = (rec.dtau, 40.0 * 1500.0, 20000);
        let h = (b - a) / n as f64;
        let (mut z, mut f) = (0.0, 0.0);
        for k in 0..=n {
            let t = a + k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            z += w * rec.density(t);
            f += w * t * rec.density(t);
        }
        z *= h / 3.0;
        f *= h / 3.0;
        assert_relative_eq!(z, rec.recorded_rate(), max_relative = 1e-9);
        assert_relative_eq!(f / z, rec.mean_duration(), max_relative = 1e-9);
        // over [0, inf): every hidden period removes two single periods and adds one
        let full = RecordedSingleDurations { dtau: 0.0, ..rec };
        assert_relative_eq!(full.recorded_rate(), rec.n1 - rec.hidden, max_relative = 1e-12);
        // the first-order correction formula is the small-cutoff expansion
        let m = TelegraphModel::new(r, 400.0, 30.0).unwrap();
        let st = window_corrected_statistics(&m).unwrap();
        let exact = RecordedSingleDurations::new(&r, m.dtau()).unwrap().mean_duration();
        assert!((exact - st.t1_cor).abs() / (st.t1_cor - st.t1) < 0.05);
    }

    #[test]
    fn inversion_recovers_rates() {
        let r = reference_rates();
        let dtau = 76.0;
        let m = TelegraphModel::new(r, 160.0, 114.0).unwrap();
        let st = window_corrected_statistics(&m).unwrap();
        let ratio = st.n0 * (-r.p01 * dtau).exp() / (st.n2 * (-r.p21 * dtau).exp());
        let back = invert_corrected_statistics(st.t_cor(), ratio, dtau).unwrap();
        assert!(back.max_rel_diff(&r) < 1e-10, "{:?}", back);
        assert!(invert_corrected_statistics([50.0, 1500.0, 1800.0], 1.0, dtau).is_err());
    }

    #[test]
    fn double_jump_counting() {
        let s = PeriodSequence::from_levels(&[(2, 1000.0), (1, 50.0), (0, 800.0)]);
        assert_eq!(count_double_jumps(&s, 160.0), DoubleJumpCounts { up: 0, down: 1 });
        let s = PeriodSequence::from_levels(&[(2, 1000.0), (1, 500.0), (0, 800.0)]);
        assert_eq!(count_double_jumps(&s, 160.0), DoubleJumpCounts { up: 0, down: 0 });
        let s = PeriodSequence::from_levels(&[(0, 10.0), (1, 20.0), (2, 30.0), (1, 5.0), (2, 1.0)]);
        assert_eq!(count_double_jumps(&s, 160.0), DoubleJumpCounts { up: 1, down: 0 });
    }

    #[test]
    fn censoring_merges_neighbours() {
        let s = PeriodSequence::from_levels(&[(1, 100.0), (0, 500.0), (1, 10.0), (0, 300.0), (2, 400.0), (1, 200.0)]);
        let c = censor(&s, 50.0);
        let levels: Vec<u8> = c.periods.iter().map(|p| p.level).collect();
        assert_eq!(levels, vec![1, 0, 2, 1]);
        assert_relative_eq!(c.periods[1].duration, 810.0);
        let total: f64 = c.periods.iter().map(|p| p.duration).sum();
        assert_relative_eq!(total, 1510.0);
        assert_relative_eq!(c.periods[2].start, 910.0);
        assert_eq!(c.complete().len(), 2);
    }

    #[test]
    fn simulation_without_upper_transitions() {
        let mut r = reference_rates();
        r.p12 = 0.0;
        let s = simulate_telegraph(&r, 1e6, 3).unwrap();
        assert!(s.periods.iter().all(|p| p.level != 2));
        assert!(s.periods.len() > 100);
    }

    #[test]
    fn simulation_is_reproducible_and_consistent() {
        let r = reference_rates();
        let a = simulate_telegraph(&r, 1e6, 42).unwrap();
        let b = simulate_telegraph(&r, 1e6, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_telegraph(&r, 1e6, 43).unwrap());
        for w in a.periods.windows(2) {
            assert!((w[0].level as i32 - w[1].level as i32).abs() == 1);
            assert_relative_eq!(w[0].end(), w[1].start, max_relative = 1e-12);
        }
        assert_relative_eq!(a.periods.last().unwrap().end(), 1e6, max_relative = 1e-12);
        assert!(simulate_telegraph(&r, 1e4, 1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = simulate_telegraph(&reference_rates(), 1e6, 7).unwrap();
        let back = PeriodSequence::from_text(&s.to_text()).unwrap();
        assert_eq!(back.periods.len(), s.periods.len());
        assert_eq!(back.truncated_end, s.truncated_end);
        for (x, y) in back.periods.iter().zip(&s.periods) {
            assert_eq!(x.level, y.level);
            assert_relative_eq!(x.start, y.start, max_relative = 1e-11);
            assert_relative_eq!(x.duration, y.duration, max_relative = 1e-11);
        }
        assert!(PeriodSequence::from_text("3 0.0 1.0").is_err());
        assert!(PeriodSequence::from_text("1 0.0").is_err());
    }

    fn rates_strategy() -> impl Strategy<Value = TransitionRates> {
        (1e-5f64..1e-2, 1e-5f64..1e-2, 1e-5f64..1e-2, 1e-5f64..1e-2)
            .prop_map(|(a, b, c, d)| TransitionRates::new(a, b, c, d, RateMethod::ExactSolve))
    }

    proptest! {
        #[test]
        fn sum_rule_and_symmetry(r in rates_strategy(), dt in 0.0f64..1e4) {
            let st = ideal_statistics(&r, dt).unwrap();
            prop_assert!((st.occupancy_sum() - 1.0).abs() < 1e-12);
            prop_assert!((st.n_dj_up - st.n_dj_down).abs() <= 1e-15 * st.n_dj_up.abs().max(1e-300));
            prop_assert!((st.n0 / st.n2 - r.p10 / r.p12).abs() < 1e-12 * (r.p10 / r.p12));
        }

        #[test]
        fn double_jump_rate_increases_and_saturates(r in rates_strategy(), a in 1.0f64..1e3, b in 1.0f64..1e3) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a + 1.0) };
            let x = ideal_statistics(&r, lo).unwrap();
            let y = ideal_statistics(&r, hi).unwrap();
            prop_assert!(y.n_dj > x.n_dj);
            let k = r.p10 + r.p12;
            let limit = 2.0 * x.n2 * r.p10 / k;
            prop_assert!(y.n_dj < limit * (1.0 + 1e-12));
            let far = ideal_statistics(&r, 1e3 / k).unwrap();
            prop_assert!((far.n_dj / limit - 1.0).abs() < 1e-12);
        }

        #[test]
        fn period_text_round_trip(v in proptest::collection::vec((0u8..3, 1e-3f64..1e4), 1..40)) {
            let s = PeriodSequence::from_levels(&v);
            let back = PeriodSequence::from_text(&s.to_text()).unwrap();
            prop_assert_eq!(back.periods.len(), s.periods.len());
            for (x, y) in back.periods.iter().zip(&s.periods) {
                prop_assert_eq!(x.level, y.level);
                prop_assert!((x.duration - y.duration).abs() <= 1e-11 * y.duration);
            }
        }
    }
}
