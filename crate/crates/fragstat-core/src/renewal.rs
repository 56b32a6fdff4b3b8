//! The waiting law pi, the stationary residual law eta, and renewal
//! simulation.
//!
//! Following a size-biased tagged line through the cascade, the `-log`-sizes
//! form a renewal process without delay whose waiting law pi is the law of
//! `-log(size-biased ratio)`. For the binary-uniform family the density has
//! the closed form `2 e^{-2x} / (1 - 2c)` on `[-log(1-c), -log c]` (change of
//! variables in the size-biased ratio density `2s/(1-2c)`). The residual
//! lifetime `B_t` converges to the stationary law eta with density
//! `(1 - F(x)) / mu` on `[0, b]`; the equivalent double-integral form of eta
//! is kept as a quadrature cross-check.

use crate::dislocation::{size_biased_pick, DislocationLaw, Family};
use crate::empirical::TestFunction;
use crate::harness::quadrature::quadrature;
use crate::harness::stats::{ls_slope, Moments};
use crate::harness::{chunked_map_reduce, REPLICATE_CHUNK};
use crate::rng::{Stream, Streams};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
enum PiKind {
    /// Closed-form density `2 e^{-2x} / (1 - 2c)` on `[a, b]`.
    BinaryUniform { c: f64 },
    /// Density `e^{-2x} (g(e^{-x}) + g(1 - e^{-x}))` with `g` the ratio
    /// density; CDF served from a cached cumulative grid.
    BinaryDensity { cdf_grid: Vec<f64> },
    /// Atomic law (diagnostic families).
    Atoms(Vec<(f64, f64)>),
}

/// The waiting law pi of a tagged line.
#[derive(Debug, Clone)]
pub struct WaitingLaw {
    law: DislocationLaw,
    support: (f64, f64),
    mu: f64,
    kind: PiKind,
}

const CDF_GRID: usize = 4096;

/// Derives pi from a dislocation law via the size-biasing identity.
pub fn derive_pi(law: &DislocationLaw) -> Result<WaitingLaw> {
    let (a, b) = law.support_log_ratio();
    match law.family() {
        Family::BinaryUniform { c } => {
            if *c <= 0.0 {
                return Err(Error::AssumptionFailed(
                    "binary_uniform with c = 0 has unbounded waiting-law support".into(),
                ));
            }
            // mu = ((1-c)^2 (a + 1/2) - c^2 (b + 1/2)) / (1 - 2c)
            let mu = ((1.0 - c).powi(2) * (a + 0.5) - c.powi(2) * (b + 0.5)) / (1.0 - 2.0 * c);
            Ok(WaitingLaw {
                law: law.clone(),
                support: (a, b),
                mu,
                kind: PiKind::BinaryUniform { c: *c },
            })
        }
        Family::BinaryDensity { .. } => {
            let density = |x: f64| pi_density_from_ratio(law, x);
            let mu = quadrature(|x| x * density(x), a, b, 1e-11)?;
            let mut cdf_grid = Vec::with_capacity(CDF_GRID + 1);
            cdf_grid.push(0.0);
            let step = (b - a) / CDF_GRID as f64;
            let mut acc = 0.0;
            for i in 0..CDF_GRID {
                let lo = a + step * i as f64;
                acc += quadrature(density, lo, lo + step, 1e-13)?;
                cdf_grid.push(acc);
            }
            // normalise out residual quadrature error
            let total = *cdf_grid.last().unwrap();
            for v in &mut cdf_grid {
                *v /= total;
            }
            Ok(WaitingLaw {
                law: law.clone(),
                support: (a, b),
                mu,
                kind: PiKind::BinaryDensity { cdf_grid },
            })
        }
        Family::DeterministicBinary { p } => {
            let top = p.max(1.0 - p);
            let bot = p.min(1.0 - p);
            // size-biased: ratio r is picked with probability r
            let mut atoms = vec![(-top.ln(), top)];
            if (top - bot).abs() > 0.0 {
                atoms.push((-bot.ln(), bot));
            } else {
                atoms[0].1 = 1.0;
            }
            let mu = atoms.iter().map(|&(x, w)| x * w).sum();
            Ok(WaitingLaw {
                law: law.clone(),
                support: (a, b),
                mu,
                kind: PiKind::Atoms(atoms),
            })
        }
    }
}

/// pi density from the ratio density: the size-biased ratio has density
/// `s (g(s) + g(1-s))`, and `x = -log s` maps it to
/// `e^{-2x} (g(e^{-x}) + g(1 - e^{-x}))`.
fn pi_density_from_ratio(law: &DislocationLaw, x: f64) -> f64 {
    let (a, b) = law.support_log_ratio();
    if x < a || x > b {
        return 0.0;
    }
    let s = (-x).exp();
    let g = law.ratio_density(s).unwrap_or(0.0) + law.ratio_density(1.0 - s).unwrap_or(0.0);
    s * s * g
}

impl WaitingLaw {
    /// `[a, b]`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Mean waiting time.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, PiKind::Atoms(_))
    }

    /// Atom list for discrete waiting laws.
    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.kind {
            PiKind::Atoms(a) => Some(a),
            _ => None,
        }
    }

    pub fn dislocation(&self) -> &DislocationLaw {
        &self.law
    }

    /// Density at `x`; unavailable for discrete laws.
    pub fn density(&self, x: f64) -> Result<f64> {
        let (a, b) = self.support;
        match &self.kind {
            PiKind::BinaryUniform { c } => {
                if x < a || x > b {
                    Ok(0.0)
                } else {
                    Ok(2.0 * (-2.0 * x).exp() / (1.0 - 2.0 * c))
                }
            }
            PiKind::BinaryDensity { .. } => Ok(pi_density_from_ratio(&self.law, x)),
            PiKind::Atoms(_) => Err(Error::Unsupported(
                "discrete waiting law has no density".into(),
            )),
        }
    }

    /// Distribution function `F(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        match &self.kind {
            PiKind::BinaryUniform { c } => {
                if x < a {
                    0.0
                } else if x >= b {
                    1.0
                } else {
                    (((1.0 - c).powi(2) - (-2.0 * x).exp()) / (1.0 - 2.0 * c)).clamp(0.0, 1.0)
                }
            }
            PiKind::BinaryDensity { cdf_grid } => {
                if x <= a {
                    return 0.0;
                }
                if x >= b {
                    return 1.0;
                }
                let step = (b - a) / CDF_GRID as f64;
                let idx = (((x - a) / step) as usize).min(CDF_GRID - 1);
                let lo = a + step * idx as f64;
                let tail = quadrature(|y| pi_density_from_ratio(&self.law, y), lo, x, 1e-13)
                    .unwrap_or(0.0);
                (cdf_grid[idx] + tail).clamp(0.0, 1.0)
            }
            PiKind::Atoms(atoms) => atoms.iter().filter(|&&(p, _)| p <= x).map(|&(_, w)| w).sum(),
        }
    }

    /// One draw: `-log` of a size-biased pick from one dislocation.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let ratios = self.law.sample_ratios(rng);
        let u = rng.random::<f64>();
        size_biased_pick(&ratios, u)
            .expect("conservative ratio vector")
            .1
    }
}

/// The stationary residual law eta with density `(1 - F(x)) / mu` on `[0, b]`.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    pi: WaitingLaw,
    upper: f64,
    cdf_grid: Vec<f64>,
}

/// Derives eta from a continuous pi.
pub fn stationary_eta(pi: &WaitingLaw) -> Result<StationaryLaw> {
    if !pi.is_continuous() {
        return Err(Error::Unsupported(
            "stationary law requires a continuous waiting law".into(),
        ));
    }
    let b = pi.support().1;
    let mu = pi.mu();
    let density = |x: f64| (1.0 - pi.cdf(x)) / mu;
    let mut cdf_grid = Vec::with_capacity(CDF_GRID + 1);
    cdf_grid.push(0.0);
    let step = b / CDF_GRID as f64;
    let mut acc = 0.0;
    for i in 0..CDF_GRID {
        let lo = step * i as f64;
        acc += quadrature(density, lo, lo + step, 1e-13)?;
        cdf_grid.push(acc);
    }
    let total = *cdf_grid.last().unwrap();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Internal(format!(
            "eta density integrates to {total}, expected 1"
        )));
    }
    for v in &mut cdf_grid {
        *v /= total;
    }
    Ok(StationaryLaw {
        pi: pi.clone(),
        upper: b,
        cdf_grid,
    })
}

impl StationaryLaw {
    /// Upper support endpoint `b`.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn pi(&self) -> &WaitingLaw {
        &self.pi
    }

    /// Density `(1 - F(x)) / mu`, zero outside `[0, b]`.
    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.upper {
            0.0
        } else {
            (1.0 - self.pi.cdf(x)) / self.pi.mu()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let step = self.upper / CDF_GRID as f64;
        let idx = ((x / step) as usize).min(CDF_GRID - 1);
        let lo = step * idx as f64;
        let tail = quadrature(|y| self.density(y), lo, x, 1e-13).unwrap_or(0.0);
        (self.cdf_grid[idx] + tail).clamp(0.0, 1.0)
    }

    /// Stationary draw `C(1-U)` with `C` length-biased (density `x/mu` with
    /// respect to pi), sampled by rejection with envelope `x <= b`.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let c = self.sample_length_biased(rng);
        let u = rng.random::<f64>();
        c * (1.0 - u)
    }

    /// Length-biased waiting time (the straddling-interval length).
    pub fn sample_length_biased(&self, rng: &mut Stream) -> f64 {
        loop {
            let x = self.pi.sample(rng);
            if rng.random::<f64>() * self.upper < x {
                return x;
            }
        }
    }

    /// `eta(f)` by quadrature against the density.
    pub fn expect(&self, f: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
        quadrature(|x| f(x) * self.density(x), 0.0, self.upper, tol)
    }

    /// `eta(f)` through the defining double integral
    /// `(1/mu) int_0^inf E(f(Y-s) 1{Y-s>=0}) ds`; cross-check route.
    pub fn expect_double_route(&self, f: impl Fn(f64) -> f64 + Copy, tol: f64) -> Result<f64> {
        let (a, b) = self.pi.support();
        let inner_tol = (tol / b.max(1.0)) * 0.1;
        let v = quadrature(
            |s| {
                if s >= b {
                    return 0.0;
                }
                let lo = s.max(a);
                quadrature(|y| f(y - s) * self.pi.density(y).unwrap_or(0.0), lo, b, inner_tol)
                    .unwrap_or(f64::NAN)
            },
            0.0,
            b,
            tol,
        )?;
        Ok(v / self.pi.mu())
    }
}

/// Residual of a no-delay renewal process at `t`: first epoch past `t`,
/// minus `t`.
pub fn simulate_residual(pi: &WaitingLaw, t: f64, rng: &mut Stream) -> f64 {
    debug_assert!(t >= 0.0);
    let mut s = 0.0;
    loop {
        s += pi.sample(rng);
        if s > t {
            return s - t;
        }
    }
}

/// Residual at `t` of a renewal process with a deterministic first epoch at
/// `delay` (used to exercise stationarity when the delay is drawn from eta).
pub fn simulate_residual_delayed(pi: &WaitingLaw, delay: f64, t: f64, rng: &mut Stream) -> f64 {
    let mut s = delay;
    if s > t {
        return s - t;
    }
    loop {
        s += pi.sample(rng);
        if s > t {
            return s - t;
        }
    }
}

/// One grid point of the rate experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RatePoint {
    pub t: f64,
    /// `|mean f(B_t) - eta(f)|`.
    pub gap: f64,
    /// Signed mean minus eta(f), for sign diagnostics.
    pub bias: f64,
    pub se: f64,
    /// gap > 3 se: detected signal.
    pub above_floor: bool,
    /// gap > 5 se: strong enough for log-domain regression (the log-gap
    /// error per point stays near 0.2, so a fitted slope means something).
    pub fit_worthy: bool,
}

/// Outcome of the convergence-rate experiment.
///
/// The pre-noise region is the longest prefix of grid points whose gap
/// exceeds three standard errors. A slope is fitted over the prefix of
/// points clearing five standard errors (log-domain regression needs that
/// much signal per point), when at least two qualify. Points at or below
/// the floor are noise-dominated, so the unit-slope clause is additionally
/// scored as a consistency bound: every later gap must stay below the first
/// pre-noise gap extrapolated at rate `e^{-t}`, plus three standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub theta_eff: f64,
    pub function: String,
    pub eta_f: f64,
    pub m: u64,
    pub points: Vec<RatePoint>,
    pub pre_noise_points: usize,
    pub fitted_slope: Option<f64>,
    pub decreasing_pre_noise: bool,
    pub floor_entry_certified: bool,
    pub consistent_with_unit_slope: bool,
    /// Set when the smallest-t gap does not clear its own standard error.
    pub warned_low_m: bool,
}

impl RateReport {
    /// The acceptance reading: decay visible, monotone, and nowhere slower
    /// than `e^{-t}` within Monte Carlo resolution.
    pub fn passes_unit_slope(&self) -> bool {
        self.decreasing_pre_noise
            && self.floor_entry_certified
            && self.consistent_with_unit_slope
            && self.fitted_slope.is_none_or(|s| s <= -1.0)
    }
}

/// Monte Carlo estimate of `|E f(B_t) - eta(f)|` over a grid of t values.
///
/// `theta_eff = theta - eps'` is the reported comparison exponent of
/// `phi(t) = e^{(theta - eps') t}`; compact support makes every rate
/// admissible, so the experiment checks the slope, not constants.
pub fn rate_experiment(
    pi: &WaitingLaw,
    eta: &StationaryLaw,
    f: &TestFunction,
    t_grid: &[f64],
    m: u64,
    theta_eff: f64,
    streams: Streams,
) -> Result<RateReport> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("rate grid must be non-empty and increasing"));
    }
    if t_grid[0] < 0.0 {
        return Err(Error::invalid("rate grid must be nonnegative"));
    }
    if m == 0 {
        return Err(Error::invalid("rate experiment needs m >= 1"));
    }
    let eta_f = eta.expect(|y| f.phi(y), 1e-10)?;
    let mut points = Vec::with_capacity(t_grid.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        let base = ti as u64 * m;
        let mut stats = Moments::new();
        chunked_map_reduce(
            m,
            REPLICATE_CHUNK,
            |range| {
                let mut local = Moments::new();
                for r in range {
                    let mut rng = streams.stream(base + r);
                    let b = simulate_residual(pi, t, &mut rng);
                    local.push(f.phi(b));
                }
                local
            },
            |local: Moments| stats.merge(&local),
        );
        let bias = stats.mean() - eta_f;
        let se = stats.se();
        // eta(f) itself carries quadrature error, so gaps below 1e-9 are not
        // meaningful signal even when the Monte Carlo spread is zero
        points.push(RatePoint {
            t,
            gap: bias.abs(),
            bias,
            se,
            above_floor: bias.abs() > 3.0 * se && bias.abs() > 1e-9,
            fit_worthy: bias.abs() > 5.0 * se && bias.abs() > 1e-9,
        });
    }

    let pre_noise: Vec<&RatePoint> = points.iter().take_while(|p| p.above_floor).collect();
    let decreasing_pre_noise = pre_noise.windows(2).all(|w| w[1].gap < w[0].gap);
    let floor_entry_certified = if pre_noise.len() < points.len() {
        pre_noise
            .last()
            .map(|last| last.gap > 3.0 * points[pre_noise.len()].se)
            .unwrap_or(true)
    } else {
        true
    };
    let consistent_with_unit_slope = match pre_noise.first() {
        None => true,
        Some(first) => points
            .iter()
            .skip(1)
            .all(|p| p.gap <= first.gap * (-(p.t - first.t)).exp() + 3.0 * p.se),
    };
    let fit_set: Vec<&RatePoint> = points.iter().take_while(|p| p.fit_worthy).collect();
    let fitted_slope = if fit_set.len() >= 2 {
        let xs: Vec<f64> = fit_set.iter().map(|p| p.t).collect();
        let ys: Vec<f64> = fit_set.iter().map(|p| p.gap.ln()).collect();
        ls_slope(&xs, &ys)
    } else {
        None
    };
    let warned_low_m = points.first().map(|p| p.gap <= p.se).unwrap_or(true);

    Ok(RateReport {
        theta_eff,
        function: f.id(),
        eta_f,
        m,
        pre_noise_points: pre_noise.len(),
        points,
        fitted_slope,
        decreasing_pre_noise,
        floor_entry_certified,
        consistent_with_unit_slope,
        warned_low_m,
    })
}
