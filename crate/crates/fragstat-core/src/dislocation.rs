//! Dislocation laws: the distribution of one split.
//!
//! A dislocation law produces a descending ratio vector summing to one (the
//! conservative property). The built-in families are binary because several
//! conditioning constructions downstream need the sibling ratio to be a
//! deterministic function of the tagged ratio. `DeterministicBinary` is a
//! diagnostic family: it fails the continuity assumption on purpose and is
//! barred from the fluctuation experiments.

use crate::rng::Stream;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Built-in dislocation families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Binary split `(v, 1-v)` with `v` uniform on `[c, 1-c]`.
    BinaryUniform { c: f64 },
    /// Binary split `(v, 1-v)` with `v` drawn from a piecewise-linear density
    /// on `[c, 1-c]` given by `(position, weight)` knots.
    BinaryDensity { c: f64, table: Vec<(f64, f64)> },
    /// Fixed split `(p, 1-p)`. Diagnostic only: the waiting law is atomic.
    DeterministicBinary { p: f64 },
}

/// A validated-constructible dislocation law plus derived metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DislocationLaw {
    family: Family,
    conservative: bool,
    continuous_pi: bool,
    /// `[a, b]` such that `-log(ratio)` of any sampled ratio lies in it.
    support_log_ratio: (f64, f64),
    /// Piecewise-linear density knots, normalised (BinaryDensity only).
    #[serde(skip)]
    density_knots: Vec<(f64, f64)>,
    /// Per-segment cumulative mass of the normalised density.
    #[serde(skip)]
    density_cum: Vec<f64>,
}

/// One dislocation outcome: descending ratios summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioVector {
    ratios: Vec<f64>,
}

/// Pass/fail flags for the four standing assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Assumption 1: the law is a probability and the top ratio is < 1 a.s.
    pub probability_law: bool,
    /// Assumption 2: ratios sum to 1 (conservative, no dust).
    pub conservative: bool,
    /// Assumption 3: `-log(ratio)` is confined to a compact `[a, b]` with `a > 0`.
    pub compact_support: bool,
    /// Assumption 4: the waiting law is absolutely continuous with a density
    /// continuous on the interior of its support.
    pub continuous_density: bool,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.probability_law && self.conservative && self.compact_support && self.continuous_density
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.probability_law {
            out.push("assumption 1 (probability law, top ratio < 1)");
        }
        if !self.conservative {
            out.push("assumption 2 (conservative)");
        }
        if !self.compact_support {
            out.push("assumption 3 (compact waiting-law support away from 0)");
        }
        if !self.continuous_density {
            out.push("assumption 4 (continuous waiting-law density)");
        }
        out
    }
}

impl DislocationLaw {
    /// Binary uniform family. `c = 0` is constructible so that validation can
    /// flag it; experiments refuse such laws.
    pub fn binary_uniform(c: f64) -> Result<Self> {
        if !c.is_finite() || !(0.0..0.5).contains(&c) {
            return Err(Error::invalid(format!(
                "binary_uniform requires c in [0, 0.5), got {c}"
            )));
        }
        Ok(DislocationLaw {
            family: Family::BinaryUniform { c },
            conservative: true,
            continuous_pi: c > 0.0,
            support_log_ratio: (-(1.0 - c).ln(), -(c.ln())),
            density_knots: Vec::new(),
            density_cum: Vec::new(),
        })
    }

    /// Binary family with a piecewise-linear ratio density on `[c, 1-c]`.
    /// The table lists `(position, weight)` knots with ascending positions
    /// spanning exactly `[c, 1-c]`; weights are normalised internally.
    pub fn binary_density(c: f64, table: &[(f64, f64)]) -> Result<Self> {
        if !c.is_finite() || !(0.0 < c && c < 0.5) {
            return Err(Error::invalid(format!(
                "binary_density requires c in (0, 0.5), got {c}"
            )));
        }
        if table.len() < 2 {
            return Err(Error::invalid("binary_density table needs >= 2 knots"));
        }
        let lo = c;
        let hi = 1.0 - c;
        if (table[0].0 - lo).abs() > 1e-12 || (table[table.len() - 1].0 - hi).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "binary_density table must span [{lo}, {hi}]"
            )));
        }
        for w in table.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("binary_density knots must be strictly increasing"));
            }
        }
        if table.iter().any(|&(_, v)| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid("binary_density weights must be >= 0"));
        }
        // trapezoid mass is exact for a piecewise-linear density
        let mut total = 0.0;
        for w in table.windows(2) {
            total += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        if total <= 0.0 {
            return Err(Error::invalid("binary_density table has zero mass"));
        }
        let knots: Vec<(f64, f64)> = table.iter().map(|&(x, v)| (x, v / total)).collect();
        let mut cum = Vec::with_capacity(knots.len());
        cum.push(0.0);
        for w in knots.windows(2) {
            let seg = 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
            cum.push(cum.last().unwrap() + seg);
        }
        Ok(DislocationLaw {
            family: Family::BinaryDensity {
                c,
                table: table.to_vec(),
            },
            conservative: true,
            continuous_pi: true,
            support_log_ratio: (-(1.0 - c).ln(), -(c.ln())),
            density_knots: knots,
            density_cum: cum,
        })
    }

    /// Fixed binary split; negative control for assumption validation.
    pub fn deterministic_binary(p: f64) -> Result<Self> {
        if !p.is_finite() || !(0.0 < p && p < 1.0) {
            return Err(Error::invalid(format!(
                "deterministic_binary requires p in (0, 1), got {p}"
            )));
        }
        let top = p.max(1.0 - p);
        let bot = p.min(1.0 - p);
        Ok(DislocationLaw {
            family: Family::DeterministicBinary { p },
            conservative: true,
            continuous_pi: false,
            support_log_ratio: (-(top.ln()), -(bot.ln())),
            density_knots: Vec::new(),
            density_cum: Vec::new(),
        })
    }

    /// Reconstructs a law from its serialised family (derived tables are
    /// rebuilt; used by config loading).
    pub fn from_family(family: Family) -> Result<Self> {
        match family {
            Family::BinaryUniform { c } => Self::binary_uniform(c),
            Family::BinaryDensity { c, table } => Self::binary_density(c, &table),
            Family::DeterministicBinary { p } => Self::deterministic_binary(p),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Lower bound of any sampled ratio.
    pub fn ratio_lower_bound(&self) -> f64 {
        match self.family {
            Family::BinaryUniform { c } | Family::BinaryDensity { c, .. } => c,
            Family::DeterministicBinary { p } => p.min(1.0 - p),
        }
    }

    /// `[a, b]` window for `-log(ratio)`.
    pub fn support_log_ratio(&self) -> (f64, f64) {
        self.support_log_ratio
    }

    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    /// All built-in families split into exactly two pieces.
    pub fn is_binary(&self) -> bool {
        matches!(
            self.family,
            Family::BinaryUniform { .. } | Family::BinaryDensity { .. } | Family::DeterministicBinary { .. }
        )
    }

    /// Whether the derived waiting law is absolutely continuous.
    pub fn has_continuous_pi(&self) -> bool {
        self.continuous_pi
    }

    /// Density of the untagged ratio `v` at `x` (binary families place mass
    /// `g(v)` on the split `(v, 1-v)`).
    pub fn ratio_density(&self, x: f64) -> Result<f64> {
        match &self.family {
            Family::BinaryUniform { c } => {
                if x >= *c && x <= 1.0 - c {
                    Ok(1.0 / (1.0 - 2.0 * c))
                } else {
                    Ok(0.0)
                }
            }
            Family::BinaryDensity { .. } => Ok(self.pw_linear_density(x)),
            Family::DeterministicBinary { .. } => Err(Error::Unsupported(
                "deterministic_binary has no ratio density".into(),
            )),
        }
    }

    fn pw_linear_density(&self, x: f64) -> f64 {
        let k = &self.density_knots;
        if k.is_empty() || x < k[0].0 || x > k[k.len() - 1].0 {
            return 0.0;
        }
        let i = k.partition_point(|&(p, _)| p <= x).min(k.len() - 1);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    fn sample_untagged_ratio(&self, rng: &mut Stream) -> f64 {
        match &self.family {
            Family::BinaryUniform { c } => c + (1.0 - 2.0 * c) * rng.random::<f64>(),
            Family::DeterministicBinary { p } => *p,
            Family::BinaryDensity { .. } => {
                // inverse CDF per linear segment (quadratic in the offset)
                let u = rng.random::<f64>();
                let cum = &self.density_cum;
                let i = cum.partition_point(|&m| m <= u).clamp(1, cum.len() - 1);
                let (x0, y0) = self.density_knots[i - 1];
                let (x1, y1) = self.density_knots[i];
                let rem = u - cum[i - 1];
                let h = x1 - x0;
                let slope = (y1 - y0) / h;
                if slope.abs() < 1e-14 {
                    if y0 <= 0.0 {
                        return x0;
                    }
                    return x0 + rem / y0;
                }
                // solve y0*t + slope*t^2/2 = rem for t in [0, h]
                let disc = (y0 * y0 + 2.0 * slope * rem).max(0.0);
                let t = (disc.sqrt() - y0) / slope;
                x0 + t.clamp(0.0, h)
            }
        }
    }

    /// Draws one ratio vector; i.i.d. across calls on one stream.
    pub fn sample_ratios(&self, rng: &mut Stream) -> RatioVector {
        let v = self.sample_untagged_ratio(rng);
        RatioVector {
            ratios: vec![v.max(1.0 - v), v.min(1.0 - v)],
        }
    }

    /// Checks the four standing assumptions; failures are report entries,
    /// never errors. Experiment runners refuse laws that fail any entry
    /// unless explicitly overridden.
    pub fn validate(&self) -> ValidationReport {
        let (a, b) = self.support_log_ratio;
        ValidationReport {
            probability_law: true,
            conservative: self.conservative,
            compact_support: a > 0.0 && b.is_finite(),
            continuous_density: self.continuous_pi,
        }
    }
}

impl RatioVector {
    /// Builds a ratio vector from raw values, enforcing descending order and
    /// unit sum.
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.len() < 2 {
            return Err(Error::invalid("ratio vector needs at least 2 entries"));
        }
        if ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::invalid("ratios must lie in (0, 1)"));
        }
        if ratios.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("ratios must be descending"));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "conservative ratio vector must sum to 1, got {sum}"
            )));
        }
        Ok(RatioVector { ratios })
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.ratios.iter().sum()
    }
}

/// Picks child `i` iff `u` falls in the cumulative interval
/// `[s_1 + .. + s_{i-1}, s_1 + .. + s_i)`; returns the zero-based index and
/// `-log(s_i)`. Under a uniform `u`, `P(index = i) = s_i`.
pub fn size_biased_pick(ratios: &RatioVector, u: f64) -> Result<(usize, f64)> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::invalid(format!("u must lie in [0, 1), got {u}")));
    }
    let mut acc = 0.0;
    for (i, &s) in ratios.ratios.iter().enumerate() {
        acc += s;
        if u < acc {
            return Ok((i, -s.ln()));
        }
    }
    // Conservative vectors sum to 1 up to rounding; u in [0,1) can only land
    // here through the last cumulative falling a few ulps short.
    if acc > 1.0 - 1e-9 {
        let last = ratios.ratios.len() - 1;
        return Ok((last, -ratios.ratios[last].ln()));
    }
    Err(Error::Internal(format!(
        "size-biased pick fell off a non-conservative vector (sum {acc}, u {u})"
    )))
}
