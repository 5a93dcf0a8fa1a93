//! Piecewise-linear kernel and battery models.
//!
//! Charging functions map charging time (minutes) to state of charge, wear
//! functions map state of charge to cumulative degradation cost.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Adjacent breakpoints closer than this are merged.
pub const MERGE_TOL: f64 = 1e-9;
/// Absolute tolerance for comparing profile values.
pub const PROFILE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatteryError {
    #[error("piecewise-linear function needs at least one breakpoint")]
    Empty,
    #[error("breakpoints must have increasing x (got {prev} then {next})")]
    NotIncreasing { prev: f64, next: f64 },
    #[error("non-finite breakpoint ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("function is not non-decreasing")]
    NonMonotone,
    #[error("charging function must start at (0, 0) and be concave and non-decreasing")]
    InvalidChargingFunction,
    #[error("wear function must start at cost 0 and be convex and non-decreasing")]
    InvalidWdf,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CV phase did not converge within {0} integration steps")]
    NonConvergent(usize),
    #[error("DoD-ACC curve yields negative wear density {density} on segment {segment}")]
    NegativeDensity { segment: usize, density: f64 },
}

pub type Result<T> = std::result::Result<T, BatteryError>;

/// Behaviour of a [`PiecewiseLinear`] outside its breakpoint range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Extension {
    #[default]
    Clamp,
    MinusInfinity,
}

/// A continuous piecewise-linear function given by its breakpoints.
#[derive(Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left: Extension,
    right: Extension,
    monotone: bool,
}

impl fmt::Debug for PiecewiseLinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.points()).finish()
    }
}

impl PiecewiseLinear {
    /// Builds a function that clamps on both sides.
    pub fn new<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for (x, y) in points {
            if !x.is_finite() || !y.is_finite() {
                return Err(BatteryError::NonFinite(x, y));
            }
            if let Some(&px) = xs.last() {
                if x - px < MERGE_TOL {
                    if px - x > MERGE_TOL {
                        return Err(BatteryError::NotIncreasing { prev: px, next: x });
                    }
                    // merge with the previous breakpoint, keeping the later value
                    *ys.last_mut().unwrap() = y;
                    continue;
                }
            }
            xs.push(x);
            ys.push(y);
        }
        if xs.is_empty() {
            return Err(BatteryError::Empty);
        }
        let monotone = ys.windows(2).all(|w| w[1] >= w[0] - MERGE_TOL);
        Ok(Self { xs, ys, left: Extension::Clamp, right: Extension::Clamp, monotone })
    }

    pub fn constant(x: f64, y: f64) -> Self {
        Self { xs: vec![x], ys: vec![y], left: Extension::Clamp, right: Extension::Clamp, monotone: true }
    }

    pub fn with_extension(mut self, left: Extension, right: Extension) -> Self {
        self.left = left;
        self.right = right;
        self
    }

    pub fn left_extension(&self) -> Extension {
        self.left
    }

    pub fn right_extension(&self) -> Extension {
        self.right
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn first(&self) -> (f64, f64) {
        (self.xs[0], self.ys[0])
    }

    pub fn last(&self) -> (f64, f64) {
        let n = self.xs.len() - 1;
        (self.xs[n], self.ys[n])
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return match self.left {
                Extension::Clamp => self.ys[0],
                Extension::MinusInfinity if x < self.xs[0] - MERGE_TOL => f64::NEG_INFINITY,
                Extension::MinusInfinity => self.ys[0],
            };
        }
        if x >= self.xs[n - 1] {
            return match self.right {
                Extension::Clamp => self.ys[n - 1],
                Extension::MinusInfinity if x > self.xs[n - 1] + MERGE_TOL => f64::NEG_INFINITY,
                Extension::MinusInfinity => self.ys[n - 1],
            };
        }
        // first index with xs[i] > x, at least 1
        let i = self.xs.partition_point(|&v| v <= x);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Least x with `f(x) = y`, clamped to the breakpoint range.
    pub fn inverse_eval(&self, y: f64) -> Result<f64> {
        if !self.monotone {
            return Err(BatteryError::NonMonotone);
        }
        Ok(self.inverse_unchecked(y))
    }

    pub(crate) fn inverse_unchecked(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.xs[0];
        }
        if y > self.ys[n - 1] {
            return self.xs[n - 1];
        }
        let i = self.ys.partition_point(|&v| v < y);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        if y1 - y0 <= 0.0 {
            return x1;
        }
        (x0 + (y - y0) * (x1 - x0) / (y1 - y0)).clamp(x0, x1)
    }

    /// Slope of the segment starting at or after `x`. Zero outside the domain.
    pub fn slope_right(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n < 2 || x < self.xs[0] - MERGE_TOL || x >= self.xs[n - 1] - MERGE_TOL {
            return 0.0;
        }
        let i = self.xs.partition_point(|&v| v <= x + MERGE_TOL).clamp(1, n - 1);
        (self.ys[i] - self.ys[i - 1]) / (self.xs[i] - self.xs[i - 1])
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.xs.windows(2).zip(self.ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect()
    }

    pub fn is_concave(&self) -> bool {
        self.slopes().windows(2).all(|s| s[1] <= s[0] + slope_tol(s[0], s[1]))
    }

    pub fn is_convex(&self) -> bool {
        self.slopes().windows(2).all(|s| s[1] >= s[0] - slope_tol(s[0], s[1]))
    }

    /// Pointwise-minimal concave majorant over the breakpoint range.
    pub fn upper_concave_envelope(&self) -> Self {
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(self.xs.len());
        for p in self.points() {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                // drop b if it lies on or below the chord a-p
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross >= -1e-12 * (1.0 + p.1.abs().max(a.1.abs())) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let monotone = hull.windows(2).all(|w| w[1].1 >= w[0].1 - MERGE_TOL);
        Self {
            xs: hull.iter().map(|p| p.0).collect(),
            ys: hull.iter().map(|p| p.1).collect(),
            left: self.left,
            right: self.right,
            monotone,
        }
    }

    /// Drops interior breakpoints where the slope does not change.
    pub fn simplified(&self) -> Self {
        if self.xs.len() <= 2 {
            return self.clone();
        }
        let mut xs = vec![self.xs[0]];
        let mut ys = vec![self.ys[0]];
        for i in 1..self.xs.len() - 1 {
            let (px, py) = (*xs.last().unwrap(), *ys.last().unwrap());
            let s0 = (self.ys[i] - py) / (self.xs[i] - px);
            let s1 = (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]);
            if (s0 - s1).abs() > 1e-9 * (1.0 + s0.abs().max(s1.abs())) {
                xs.push(self.xs[i]);
                ys.push(self.ys[i]);
            }
        }
        xs.push(*self.xs.last().unwrap());
        ys.push(*self.ys.last().unwrap());
        Self { xs, ys, left: self.left, right: self.right, monotone: self.monotone }
    }

    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        Self {
            xs: self.xs.iter().map(|x| x + dx).collect(),
            ys: self.ys.iter().map(|y| y + dy).collect(),
            left: self.left,
            right: self.right,
            monotone: self.monotone,
        }
    }

    /// Breakpoints as `[x, y]` pairs.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.points().map(|(x, y)| [x, y]).collect()
    }
}

fn slope_tol(a: f64, b: f64) -> f64 {
    1e-9 * (1.0 + a.abs().max(b.abs()))
}

impl Serialize for PiecewiseLinear {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PiecewiseLinear {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(deserializer)?;
        PiecewiseLinear::new(pairs.into_iter().map(|p| (p[0], p[1]))).map_err(D::Error::custom)
    }
}

/// Concave, non-decreasing map from charging time (minutes) to SoC.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargingFunction {
    pwl: PiecewiseLinear,
    tau_max: f64,
}

impl ChargingFunction {
    pub fn new(pwl: PiecewiseLinear) -> Result<Self> {
        let (x0, y0) = pwl.first();
        if x0.abs() > MERGE_TOL || y0.abs() > MERGE_TOL || !pwl.is_non_decreasing() || !pwl.is_concave() {
            return Err(BatteryError::InvalidChargingFunction);
        }
        let tau_max = pwl.x_max();
        Ok(Self { pwl: pwl.with_extension(Extension::Clamp, Extension::Clamp), tau_max })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(PiecewiseLinear::new(points.iter().copied())?)
    }

    pub fn pwl(&self) -> &PiecewiseLinear {
        &self.pwl
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// SoC reached after charging an empty battery for `t` minutes.
    pub fn eval(&self, t: f64) -> f64 {
        self.pwl.eval(t)
    }

    /// Charging time needed to reach `q` from empty.
    pub fn inverse(&self, q: f64) -> f64 {
        self.pwl.inverse_unchecked(q)
    }

    /// SoC after charging for `tau` minutes starting at SoC `beta`.
    pub fn charge(&self, beta: f64, tau: f64) -> f64 {
        beta.max(self.eval(self.inverse(beta) + tau))
    }

    pub fn max_soc(&self) -> f64 {
        self.pwl.last().1
    }

    /// Fastest charging rate (initial slope).
    pub fn max_rate(&self) -> f64 {
        self.pwl.slopes().first().copied().unwrap_or(0.0)
    }

    /// Average rate of a full charge.
    pub fn avg_rate(&self) -> f64 {
        if self.tau_max > 0.0 {
            self.max_soc() / self.tau_max
        } else {
            0.0
        }
    }
}

impl Serialize for ChargingFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.pwl.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ChargingFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pwl = PiecewiseLinear::deserialize(deserializer)?;
        ChargingFunction::new(pwl).map_err(D::Error::custom)
    }
}

/// Convex cumulative wear cost of charging from empty to a given SoC.
#[derive(Clone, Debug, PartialEq)]
pub struct WearDensityFunction {
    cumulative: PiecewiseLinear,
}

impl WearDensityFunction {
    pub fn new(cumulative: PiecewiseLinear) -> Result<Self> {
        if cumulative.first().1.abs() > MERGE_TOL || !cumulative.is_non_decreasing() || !cumulative.is_convex() {
            return Err(BatteryError::InvalidWdf);
        }
        Ok(Self { cumulative: cumulative.with_extension(Extension::Clamp, Extension::Clamp) })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(PiecewiseLinear::new(points.iter().copied())?)
    }

    /// No wear at all.
    pub fn zero(q_max: f64) -> Self {
        Self { cumulative: PiecewiseLinear::new([(0.0, 0.0), (q_max.max(1.0), 0.0)]).unwrap() }
    }

    pub fn cumulative(&self) -> &PiecewiseLinear {
        &self.cumulative
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.cumulative.eval(q)
    }

    /// Wear cost of charging from `a` to `b`.
    pub fn cost(&self, a: f64, b: f64) -> f64 {
        self.eval(b) - self.eval(a)
    }

    pub fn densities(&self) -> Vec<f64> {
        self.cumulative.slopes()
    }

    pub fn min_density(&self) -> f64 {
        self.densities().first().copied().unwrap_or(0.0)
    }

    pub fn max_density(&self) -> f64 {
        self.densities().last().copied().unwrap_or(0.0)
    }

    /// Density at `q` (right derivative).
    pub fn density_at(&self, q: f64) -> f64 {
        self.cumulative.slope_right(q)
    }
}

impl Serialize for WearDensityFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.cumulative.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WearDensityFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pwl = PiecewiseLinear::deserialize(deserializer)?;
        WearDensityFunction::new(pwl).map_err(D::Error::custom)
    }
}

/// Parameters of the CC-CV charging model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcCvParams {
    /// Battery constant voltage (V).
    pub e0: f64,
    /// Polarization voltage (V).
    pub k: f64,
    /// Exponential zone amplitude (V).
    pub a: f64,
    /// Exponential zone time constant inverse (1/Ah).
    pub b: f64,
    /// Internal resistance (ohm).
    pub r: f64,
    /// Capacity (Ah).
    pub q: f64,
    pub i_max: f64,
    pub v_term_max: f64,
    pub i_cutoff: f64,
    /// Energy units represented by a full battery.
    #[serde(default = "one")]
    pub energy_capacity: f64,
}

fn one() -> f64 {
    1.0
}

impl CcCvParams {
    /// Open-circuit voltage at SoC fraction `s`.
    pub fn ocv(&self, s: f64) -> f64 {
        let s = s.max(1e-12);
        self.e0 - self.k / s + self.a * (-self.b * self.q * (1.0 - s)).exp()
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.e0,
            self.k,
            self.a,
            self.b,
            self.r,
            self.q,
            self.i_max,
            self.v_term_max,
            self.i_cutoff,
            self.energy_capacity,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(BatteryError::InvalidParameter("CC-CV parameters must be finite and positive".into()));
        }
        Ok(())
    }

    /// Charging current at SoC `s` (amps).
    fn current(&self, s: f64) -> f64 {
        ((self.v_term_max - self.ocv(s)) / self.r).min(self.i_max)
    }
}

const MAX_CV_STEPS: usize = 10_000_000;

/// Samples of (minutes, SoC fraction) along the CC-CV curve, one per second of CV phase.
pub fn simulate_cc_cv(p: &CcCvParams) -> Result<Vec<(f64, f64)>> {
    p.validate()?;
    let q_as = p.q * 3600.0;
    // end of CC phase: terminal voltage under full current hits the limit
    let v_cc = |s: f64| p.ocv(s) + p.r * p.i_max;
    let s_cv = if v_cc(1.0) < p.v_term_max {
        1.0
    } else if v_cc(1e-9) >= p.v_term_max {
        0.0
    } else {
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if v_cc(mid) < p.v_term_max {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let t_cc = s_cv * q_as / p.i_max;
    let mut samples = vec![(0.0, 0.0)];
    if s_cv > 0.0 {
        samples.push((t_cc / 60.0, s_cv));
    }
    let deriv = |s: f64| p.current(s).max(0.0) / q_as;
    let (mut t, mut s) = (t_cc, s_cv.max(1e-9));
    let dt = 1.0;
    let mut steps = 0;
    while s < 1.0 && p.current(s) > p.i_cutoff {
        let k1 = deriv(s);
        let k2 = deriv(s + 0.5 * dt * k1);
        let k3 = deriv(s + 0.5 * dt * k2);
        let k4 = deriv(s + dt * k3);
        s = (s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).min(1.0);
        t += dt;
        samples.push((t / 60.0, s));
        steps += 1;
        if steps >= MAX_CV_STEPS {
            return Err(BatteryError::NonConvergent(steps));
        }
    }
    Ok(samples)
}

/// Greedy max-error knot insertion over a sampled curve.
pub fn fit_pwl(samples: &[(f64, f64)], segments: usize) -> Result<PiecewiseLinear> {
    fit_pwl_with_knots(samples, segments, &[])
}

/// Like [`fit_pwl`], starting from the given interior sample indices as knots.
pub fn fit_pwl_with_knots(samples: &[(f64, f64)], segments: usize, forced: &[usize]) -> Result<PiecewiseLinear> {
    if samples.len() < 2 {
        return PiecewiseLinear::new(samples.iter().copied());
    }
    let mut knots = vec![0, samples.len() - 1];
    for &k in forced {
        if k > 0 && k + 1 < samples.len() && knots.len() < segments + 1 {
            let pos = knots.partition_point(|&x| x < k);
            if knots[pos] != k {
                knots.insert(pos, k);
            }
        }
    }
    while knots.len() < segments + 1 {
        let mut best = (0.0, None);
        for w in knots.windows(2) {
            let (a, b) = (samples[w[0]], samples[w[1]]);
            for (i, &(x, y)) in samples.iter().enumerate().take(w[1]).skip(w[0] + 1) {
                let interp = a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
                let err = (interp - y).abs();
                if err > best.0 {
                    best = (err, Some(i));
                }
            }
        }
        match best {
            (err, Some(i)) if err > 1e-12 => {
                let pos = knots.partition_point(|&k| k < i);
                knots.insert(pos, i);
            }
            _ => break,
        }
    }
    PiecewiseLinear::new(knots.iter().map(|&k| samples[k]))
}

/// Charging function from CC-CV physics, fitted with `segments` linear pieces.
pub fn build_charging_function(p: &CcCvParams, segments: usize) -> Result<ChargingFunction> {
    if segments == 0 {
        return Err(BatteryError::InvalidParameter("segments must be positive".into()));
    }
    let samples = simulate_cc_cv(p)?;
    let s_end = samples.last().map(|s| s.1).unwrap_or(0.0);
    if s_end <= 0.0 {
        return Err(BatteryError::InvalidParameter("charger never charges".into()));
    }
    // the cutoff point counts as full
    let scaled: Vec<(f64, f64)> = samples.iter().map(|&(t, s)| (t, s / s_end * p.energy_capacity)).collect();
    // keep the end of the CC phase as a knot so that phase stays exact
    ChargingFunction::new(fit_pwl_with_knots(&scaled, segments, &[1])?)
}

/// Depth-of-discharge vs. achievable cycle count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DodAccCurve {
    /// `(dod, cycles)` with dod increasing in (0, 1].
    pub points: Vec<(f64, u64)>,
    pub battery_price: f64,
    /// Battery capacity in energy units.
    pub capacity: f64,
}

impl DodAccCurve {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(BatteryError::Empty);
        }
        if !(self.battery_price > 0.0 && self.capacity > 0.0) {
            return Err(BatteryError::InvalidParameter("price and capacity must be positive".into()));
        }
        for (i, &(d, n)) in self.points.iter().enumerate() {
            if !(d > 0.0 && d <= 1.0) || n == 0 {
                return Err(BatteryError::InvalidParameter(format!("bad DoD-ACC point {i}")));
            }
            if i > 0 {
                let (pd, pn) = self.points[i - 1];
                if d <= pd || n >= pn {
                    return Err(BatteryError::InvalidParameter("DoD must increase and cycle counts decrease".into()));
                }
            }
        }
        Ok(())
    }

    /// Wear densities per SoC segment, lowest SoC first, with the segment start SoC fractions.
    pub fn densities(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        // SoC levels ascending: the deepest discharge comes first
        let levels: Vec<(f64, f64)> = self.points.iter().rev().map(|&(d, n)| (1.0 - d, n as f64)).collect();
        let awc: Vec<f64> =
            levels.iter().map(|&(s, n)| self.battery_price / (n * 2.0 * (1.0 - s) * self.capacity)).collect();
        let m = levels.len();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let density = if i + 1 < m { awc[i] - awc[i + 1] } else { awc[i] };
            if density < 0.0 {
                return Err(BatteryError::NegativeDensity { segment: i, density });
            }
            out.push((levels[i].0, density));
        }
        Ok(out)
    }
}

/// Convex wear function from a DoD-ACC curve.
pub fn build_wdf(curve: &DodAccCurve) -> Result<WearDensityFunction> {
    let dens = curve.densities()?;
    let cap = curve.capacity;
    let mut points = vec![(0.0, 0.0)];
    let mut cost = 0.0;
    // below the deepest tabulated SoC the first density applies
    let mut prev = 0.0;
    for (i, &(start, _)) in dens.iter().enumerate() {
        let d_prev = if i == 0 { dens[0].1 } else { dens[i - 1].1 };
        if start > prev + MERGE_TOL {
            cost += d_prev * (start - prev) * cap;
            points.push((start * cap, cost));
        }
        prev = start;
    }
    cost += dens[dens.len() - 1].1 * (1.0 - prev) * cap;
    points.push((cap, cost));
    WearDensityFunction::new(PiecewiseLinear::new(points)?.simplified())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pwl(p: &[(f64, f64)]) -> PiecewiseLinear {
        PiecewiseLinear::new(p.iter().copied()).unwrap()
    }

    #[test]
    fn eval_fast_charger_breakpoint() {
        let f = pwl(&[(0.0, 0.0), (72.32, 34.90), (92.6, 42.49), (120.0, 45.0)]);
        assert_abs_diff_eq!(f.eval(72.32), 34.90, epsilon = 1e-12);
    }

    #[test]
    fn eval_clamps_and_interpolates() {
        let f = pwl(&[(0.0, 0.0), (6.0, 2.0), (24.5, 7.0)]);
        assert_eq!(f.eval(-3.0), 0.0);
        assert_abs_diff_eq!(f.eval(3.0), 1.0, epsilon = 1e-12);
        assert_eq!(f.eval(100.0), 7.0);
        let g = f.clone().with_extension(Extension::MinusInfinity, Extension::Clamp);
        assert_eq!(g.eval(-0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_examples() {
        let f = pwl(&[(0.0, 0.0), (6.0, 2.0), (24.5, 7.0)]);
        assert_abs_diff_eq!(f.inverse_eval(2.0).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.inverse_eval(1.0).unwrap(), 3.0, epsilon = 1e-12);
        assert_eq!(f.inverse_eval(9.0).unwrap(), 24.5);
        assert_eq!(f.inverse_eval(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn inverse_takes_least_x_on_flat_segment() {
        let f = pwl(&[(0.0, 0.0), (1.0, 1.0), (3.0, 1.0), (4.0, 2.0)]);
        assert_eq!(f.inverse_eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn inverse_rejects_non_monotone() {
        let f = pwl(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(f.inverse_eval(0.5), Err(BatteryError::NonMonotone));
    }

    #[test]
    fn merges_close_breakpoints_and_rejects_decreasing() {
        let f = pwl(&[(0.0, 0.0), (1.0, 1.0), (1.0 + 1e-12, 1.0), (2.0, 3.0)]);
        assert_eq!(f.len(), 3);
        assert!(matches!(PiecewiseLinear::new([(1.0, 0.0), (0.5, 1.0)]), Err(BatteryError::NotIncreasing { .. })));
        assert_eq!(PiecewiseLinear::new(Vec::new()), Err(BatteryError::Empty));
    }

    #[test]
    fn slope_right_accessor() {
        let f = pwl(&[(0.0, 0.0), (6.0, 2.0), (24.5, 7.0)]);
        assert_abs_diff_eq!(f.slope_right(0.0), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.slope_right(6.0), 5.0 / 18.5, epsilon = 1e-12);
        assert_eq!(f.slope_right(24.5), 0.0);
    }

    #[test]
    fn envelope_examples() {
        let concave = pwl(&[(0.0, 0.0), (1.0, 2.0), (3.0, 3.0)]);
        assert_eq!(concave.upper_concave_envelope(), concave);
        let f = pwl(&[(0.0, 0.0), (1.0, 0.2), (2.0, 2.0)]);
        let env = f.upper_concave_envelope();
        assert_eq!(env.to_pairs(), vec![[0.0, 0.0], [2.0, 2.0]]);
    }

    #[test]
    fn envelope_of_profile_with_decreasing_segment_is_monotone_concave() {
        let f = pwl(&[(0.0, 1.0), (1.0, 3.0), (2.0, 2.5), (4.0, 4.0)]);
        let env = f.upper_concave_envelope();
        assert!(env.is_concave());
        assert!(env.is_non_decreasing());
        for (x, y) in f.points() {
            assert!(env.eval(x) >= y - 1e-12);
        }
    }

    #[test]
    fn simplify_drops_collinear_points() {
        let f = pwl(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 2.5)]);
        assert_eq!(f.simplified().to_pairs(), vec![[0.0, 0.0], [2.0, 2.0], [3.0, 2.5]]);
    }

    #[test]
    fn serde_round_trip() {
        let f = pwl(&[(0.0, 0.0), (2.0, 1.0), (7.0, 7.0)]);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, "[[0.0,0.0],[2.0,1.0],[7.0,7.0]]");
        let g: PiecewiseLinear = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<PiecewiseLinear>("[[1,0],[0,1]]").is_err());
    }

    #[test]
    fn charging_function_bivariate() {
        let phi = ChargingFunction::from_points(&[(0.0, 0.0), (6.0, 2.0), (24.5, 7.0)]).unwrap();
        assert_abs_diff_eq!(phi.charge(0.0, 6.0), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi.charge(1.0, 3.0), 2.0, epsilon = 1e-12);
        assert_eq!(phi.charge(7.0, 5.0), 7.0);
        assert_eq!(phi.inverse(8.0), 24.5);
        assert!(ChargingFunction::from_points(&[(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn zero_rate_charger_keeps_soc() {
        let phi = ChargingFunction::from_points(&[(0.0, 0.0), (10.0, 0.0)]).unwrap();
        assert_eq!(phi.charge(2.5, 4.0), 2.5);
    }

    #[test]
    fn slow_charger_single_segment() {
        let phi = ChargingFunction::from_points(&[(0.0, 0.0), (435.0, 45.0)]).unwrap();
        assert_eq!(phi.tau_max(), 435.0);
        assert_abs_diff_eq!(phi.avg_rate(), 45.0 / 435.0, epsilon = 1e-12);
    }

    #[test]
    fn wdf_telescopes() {
        let w = WearDensityFunction::from_points(&[(0.0, 0.0), (2.0, 1.0), (7.0, 7.0)]).unwrap();
        assert_abs_diff_eq!(w.cost(0.0, 2.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.cost(1.0, 3.0) + w.cost(3.0, 6.0), w.cost(1.0, 6.0), epsilon = 1e-12);
        assert_abs_diff_eq!(w.min_density(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w.max_density(), 1.2, epsilon = 1e-12);
        assert!(WearDensityFunction::from_points(&[(0.0, 0.0), (2.0, 2.0), (3.0, 2.5)]).is_err());
    }

    fn pure_cc() -> CcCvParams {
        // terminal voltage limit far above anything reachable
        CcCvParams {
            e0: 3.7,
            k: 0.0001,
            a: 0.1,
            b: 3.0,
            r: 0.01,
            q: 50.0,
            i_max: 100.0,
            v_term_max: 10.0,
            i_cutoff: 1.0,
            energy_capacity: 1.0,
        }
    }

    pub(crate) fn li_ion() -> CcCvParams {
        CcCvParams {
            e0: 3.7348,
            k: 0.0076,
            a: 0.468,
            b: 3.5294 / 2.3,
            r: 0.01,
            q: 2.3,
            i_max: 2.3,
            v_term_max: 4.2,
            i_cutoff: 0.05,
            energy_capacity: 80.0,
        }
    }

    #[test]
    fn pure_cc_charger_is_exact_line() {
        let phi = build_charging_function(&pure_cc(), 1).unwrap();
        assert_eq!(phi.pwl().len(), 2);
        // 50 Ah at 100 A: 30 minutes
        assert_abs_diff_eq!(phi.tau_max(), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(phi.eval(15.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cc_cv_fit_is_concave_and_close_to_samples() {
        let p = li_ion();
        let phi = build_charging_function(&p, 6).unwrap();
        assert_eq!(phi.pwl().len(), 7);
        assert!(phi.pwl().is_concave());
        assert!(phi.pwl().is_non_decreasing());
        assert_abs_diff_eq!(phi.max_soc(), 80.0, epsilon = 1e-9);
        let samples = simulate_cc_cv(&p).unwrap();
        let s_end = samples.last().unwrap().1;
        let max_err = samples.iter().map(|&(t, s)| (phi.eval(t) - s / s_end * 80.0).abs()).fold(0.0, f64::max);
        assert!(max_err < 1.0, "fit error {max_err}");
        // CC slope: I_max / Q per hour of SoC fraction
        assert_abs_diff_eq!(phi.max_rate(), 2.3 / 2.3 / 60.0 / s_end * 80.0, epsilon = 1e-6);
    }

    #[test]
    fn cc_cv_rejects_bad_params() {
        let mut p = li_ion();
        p.r = 0.0;
        assert!(build_charging_function(&p, 3).is_err());
    }

    #[test]
    fn wdf_single_point_curve() {
        let c = DodAccCurve { points: vec![(1.0, 1000)], battery_price: 8000.0, capacity: 80.0 };
        let w = build_wdf(&c).unwrap();
        assert_eq!(w.cumulative().len(), 2);
        assert_abs_diff_eq!(w.min_density(), 8000.0 / (2.0 * 1000.0 * 80.0), epsilon = 1e-12);
    }

    #[test]
    fn wdf_two_segment_back_substitution() {
        let c = DodAccCurve { points: vec![(0.5, 4000), (1.0, 1500)], battery_price: 120.0, capacity: 10.0 };
        // hand: upper segment density = 120/(4000*2*0.5*10) = 0.003
        //       lower density = 120/(1500*2*1*10) - 0.003 = 0.004 - 0.003 = 0.001
        let d = c.densities().unwrap();
        assert_abs_diff_eq!(d[0].0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[0].1, 0.001, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1].0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1].1, 0.003, epsilon = 1e-12);
        let w = build_wdf(&c).unwrap();
        assert_abs_diff_eq!(w.eval(5.0), 0.005, epsilon = 1e-12);
        assert_abs_diff_eq!(w.eval(10.0), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn wdf_negative_density_is_error() {
        let c = DodAccCurve { points: vec![(0.5, 4000), (1.0, 3900)], battery_price: 120.0, capacity: 10.0 };
        assert!(matches!(build_wdf(&c), Err(BatteryError::NegativeDensity { .. })));
    }

    #[test]
    fn wdf_unit_costs_increase_with_soc() {
        let c = DodAccCurve {
            points: vec![(0.25, 8000), (0.5, 2828), (0.75, 1540), (1.0, 1000)],
            battery_price: 5406.0,
            capacity: 45.0,
        };
        let w = build_wdf(&c).unwrap();
        let d = w.densities();
        assert!(d.windows(2).all(|p| p[1] >= p[0]));
    }
}
