//! Pair functional `V`, fluctuation covariance `K`, and the pairing
//! combinatorics of the moment limits.
//!
//! For a pair of tags frozen on distinct fragments, the scaled product
//! moment `eps^{-1} E[phi(B_T^1) psi(B_T^2) 1{separated}]` converges to
//! `V(phi, psi)`; for even `q` the scaled q-fold moment converges to the
//! Wick sum over pairings of `V` factors, and odd moments vanish. The
//! fluctuation covariance assembles as
//! `K(f, g) = eta(Phi(Id f g)) + V(Phi f, Phi g)`.
//!
//! Two `V` estimators are provided. The pair-tag estimator is the default
//! and the reference: it runs two tagged lines to the horizon. The coupled
//! estimator integrates the defining formula directly: `v` is drawn with
//! density proportional to `e^{-v}` on a truncated window, tag 1 rides a
//! two-sided stationary line whose straddling interval at `v` has the joint
//! age/residual density `pi(a + r) / mu`, tag 2 enters the sibling fragment
//! at the separation split and both run independently to time zero. Its
//! time-origin convention reads the stationary line as two-sided; where the
//! two estimators disagree, the pair-tag value arbitrates.

use crate::dislocation::DislocationLaw;
use crate::empirical::TestFunction;
use crate::harness::stats::Moments;
use crate::harness::{chunked_map_reduce, REPLICATE_CHUNK};
use crate::renewal::{StationaryLaw, WaitingLaw};
use crate::rng::Streams;
use crate::taglines::simulate_tag_summary;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `K_1(q) = sum_{i in [q]} q! / (q - i)!` (counts injections of [i] into [q]).
pub fn k1(q: u32) -> Result<u128> {
    if q == 0 || q > 20 {
        return Err(Error::invalid("k1 wants q in 1..=20"));
    }
    let mut total: u128 = 0;
    for i in 1..=q {
        let mut term: u128 = 1;
        for j in 0..i {
            term *= (q - j) as u128;
        }
        total += term;
    }
    Ok(total)
}

/// `|I_q| = q! / (2^{q/2} (q/2)!)` for even q.
pub fn pairing_count(q: u32) -> Result<u128> {
    if q == 0 || q % 2 != 0 {
        return Err(Error::invalid("pairings need even q >= 2"));
    }
    // (q-1)!! = 1 * 3 * 5 * ... * (q-1)
    let mut total: u128 = 1;
    let mut k = 1u128;
    while k < q as u128 {
        total *= k;
        k += 2;
    }
    Ok(total)
}

/// Enumerates all partitions of `{0, .., q-1}` into pairs, without
/// duplicates.
pub fn enumerate_pairings(q: u32) -> Result<Vec<Vec<(u32, u32)>>> {
    if q == 0 || q % 2 != 0 || q > 16 {
        return Err(Error::invalid("pairing enumeration wants even q in 2..=16"));
    }
    let mut out = Vec::new();
    let mut used = vec![false; q as usize];
    let mut current = Vec::with_capacity(q as usize / 2);
    fn rec(
        q: u32,
        used: &mut Vec<bool>,
        current: &mut Vec<(u32, u32)>,
        out: &mut Vec<Vec<(u32, u32)>>,
    ) {
        let first = match used.iter().position(|&u| !u) {
            None => {
                out.push(current.clone());
                return;
            }
            Some(f) => f,
        };
        used[first] = true;
        for j in (first + 1)..q as usize {
            if !used[j] {
                used[j] = true;
                current.push((first as u32, j as u32));
                rec(q, used, current, out);
                current.pop();
                used[j] = false;
            }
        }
        used[first] = false;
    }
    rec(q, &mut used, &mut current, &mut out);
    Ok(out)
}

/// How a pair functional estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VMethod {
    PairTag,
    Coupled,
}

/// Monte Carlo estimate of `V(phi, psi)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairFunctionalEstimate {
    pub value: f64,
    pub se: f64,
    pub epsilon_used: f64,
    pub m: u64,
    pub method: VMethod,
    /// Fraction of replicates whose tags froze on distinct fragments
    /// (pair-tag method only; 0 for the coupled method).
    pub separated_frequency: f64,
}

/// A bounded function of the residual (log-scale test function).
pub trait ResidualFn: Sync {
    fn phi(&self, y: f64) -> f64;
    fn id(&self) -> String;
}

impl ResidualFn for TestFunction {
    fn phi(&self, y: f64) -> f64 {
        TestFunction::phi(self, y)
    }

    fn id(&self) -> String {
        TestFunction::id(self)
    }
}

/// Scales another residual function; shares draws under one stream, which
/// makes the bilinearity of the estimators exact replicate by replicate.
pub struct Scaled<'a, F: ResidualFn>(pub f64, pub &'a F);

impl<F: ResidualFn> ResidualFn for Scaled<'_, F> {
    fn phi(&self, y: f64) -> f64 {
        self.0 * self.1.phi(y)
    }

    fn id(&self) -> String {
        format!("{}*{}", self.0, self.1.id())
    }
}

fn require_centered(f: &impl ResidualFn, eta: &StationaryLaw) -> Result<()> {
    let integral = eta.expect(|y| f.phi(y), 1e-10)?;
    if integral.abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "function '{}' is not centered: eta-integral = {integral:e}",
            f.id()
        )));
    }
    Ok(())
}

/// Reference estimator of `V(phi, psi)`: two tagged lines run to the horizon
/// `T = -log(epsilon)`, and
/// `V ~= eps^{-1} mean[ phi(B_T^1) psi(B_T^2) 1{separated} ]`.
pub fn estimate_v_pairtag(
    law: &DislocationLaw,
    eta: &StationaryLaw,
    f: &impl ResidualFn,
    g: &impl ResidualFn,
    epsilon: f64,
    m: u64,
    streams: Streams,
) -> Result<PairFunctionalEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    if m < 100 {
        return Err(Error::invalid("estimate_v_pairtag needs m >= 100"));
    }
    require_centered(f, eta)?;
    require_centered(g, eta)?;
    let horizon = -epsilon.ln();
    let mut stats = Moments::new();
    let mut separated: u64 = 0;
    chunked_map_reduce(
        m,
        REPLICATE_CHUNK,
        |range| {
            let mut local = Moments::new();
            let mut sep = 0u64;
            for r in range {
                let mut rng = streams.stream(r);
                let s = simulate_tag_summary(law, 2, horizon, &mut rng)
                    .expect("validated pair simulation");
                if s.all_separated {
                    sep += 1;
                    local.push(f.phi(s.residuals[0]) * g.phi(s.residuals[1]));
                } else {
                    local.push(0.0);
                }
            }
            (local, sep)
        },
        |(local, sep): (Moments, u64)| {
            stats.merge(&local);
            separated += sep;
        },
    );
    Ok(PairFunctionalEstimate {
        value: stats.mean() / epsilon,
        se: stats.se() / epsilon,
        epsilon_used: epsilon,
        m,
        method: VMethod::PairTag,
        separated_frequency: separated as f64 / m as f64,
    })
}

/// Pair-tag estimates over a ladder of epsilons (bias assessment).
pub fn estimate_v_ladder(
    law: &DislocationLaw,
    eta: &StationaryLaw,
    f: &impl ResidualFn,
    g: &impl ResidualFn,
    epsilons: &[f64],
    m: u64,
    streams: Streams,
) -> Result<Vec<PairFunctionalEstimate>> {
    epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let offset = Streams::new(streams.seed() ^ (0x9e3779b9 * (i as u64 + 1)), crate::rng::Domain::VPairTag);
            estimate_v_pairtag(law, eta, f, g, eps, m, offset)
        })
        .collect()
}

/// Direct importance-sampled evaluation of the defining integral of `V`
/// (coupled two-sided construction); cross-check for the pair-tag route.
///
/// `v_min` truncates the integration window `(v_min, b]`; the tail it drops
/// decays like `e^{-2|v_min|}` by the product rate bound, and
/// [`coupled_truncation_check`] verifies the choice empirically.
pub fn estimate_v_coupled(
    law: &DislocationLaw,
    pi: &WaitingLaw,
    eta: &StationaryLaw,
    f: &impl ResidualFn,
    g: &impl ResidualFn,
    m: u64,
    v_min: Option<f64>,
    streams: Streams,
) -> Result<PairFunctionalEstimate> {
    if !law.is_binary() {
        return Err(Error::Unsupported(
            "coupled estimator needs a binary law (sibling conditioning)".into(),
        ));
    }
    if m < 100 {
        return Err(Error::invalid("estimate_v_coupled needs m >= 100"));
    }
    require_centered(f, eta)?;
    require_centered(g, eta)?;
    let b = pi.support().1;
    let v_min = v_min.unwrap_or(-(2.0 * b + 2.0));
    if v_min >= b {
        return Err(Error::invalid("v_min must lie below the support top b"));
    }
    // importance density e^{-v} / Z on (v_min, b]
    let z = (-v_min).exp() - (-b).exp();
    let mut stats = Moments::new();
    chunked_map_reduce(
        m,
        REPLICATE_CHUNK,
        |range| {
            let mut local = Moments::new();
            for r in range {
                let mut rng = streams.stream(r);
                let u = rng.random::<f64>();
                let v = -((-v_min).exp() - u * z).ln();
                // straddling interval of the two-sided stationary line at v:
                // length-biased total, uniformly split into age + residual
                let x = eta.sample_length_biased(&mut rng);
                let w = rng.random::<f64>();
                let age = w * x;
                let prev = v - age;
                let next = prev + x;
                // the indicator v <= B_0^(1) fails iff an epoch lies in (0, v)
                if v > 0.0 && prev > 0.0 {
                    local.push(0.0);
                    continue;
                }
                // tag 1 runs from the epoch after v down to time 0
                let mut l1 = next;
                while l1 <= 0.0 {
                    l1 += pi.sample(&mut rng);
                }
                // tag 2 separates at the split at level `prev` into the
                // sibling fragment of ratio 1 - e^{-x}
                let sibling_step = -(1.0 - (-x).exp()).ln();
                let mut l2 = prev + sibling_step;
                while l2 <= 0.0 {
                    l2 += pi.sample(&mut rng);
                }
                local.push(f.phi(l1) * g.phi(l2));
            }
            local
        },
        |local: Moments| stats.merge(&local),
    );
    Ok(PairFunctionalEstimate {
        value: z * stats.mean(),
        se: z * stats.se(),
        epsilon_used: f64::NAN,
        m,
        method: VMethod::Coupled,
        separated_frequency: 0.0,
    })
}

/// Runs the coupled estimator at `v_min` and `2 v_min`; the two estimates
/// must agree within the suite-wide three combined standard errors for the
/// truncation to be considered converged.
pub fn coupled_truncation_check(
    law: &DislocationLaw,
    pi: &WaitingLaw,
    eta: &StationaryLaw,
    f: &impl ResidualFn,
    g: &impl ResidualFn,
    m: u64,
    v_min: f64,
    streams: Streams,
) -> Result<(PairFunctionalEstimate, PairFunctionalEstimate, bool)> {
    let shallow = estimate_v_coupled(law, pi, eta, f, g, m, Some(v_min), streams)?;
    let deep_streams = Streams::new(streams.seed() ^ 0xd1b54a32d192ed03, crate::rng::Domain::VCoupled);
    let deep = estimate_v_coupled(law, pi, eta, f, g, m, Some(2.0 * v_min), deep_streams)?;
    let combined = (shallow.se.powi(2) + deep.se.powi(2)).sqrt();
    let ok = (shallow.value - deep.value).abs() <= 3.0 * combined;
    Ok((shallow, deep, ok))
}

/// One entry of the fluctuation covariance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KEntry {
    /// `eta(Phi(Id f_i f_j))` by quadrature.
    pub eta_term: f64,
    /// `V(Phi f_i, Phi f_j)` Monte Carlo estimate.
    pub v_term: f64,
    pub v_se: f64,
    pub total: f64,
}

/// Fluctuation covariance `K(f_i, f_j)` with both building blocks reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub functions: Vec<String>,
    pub epsilon_used: f64,
    pub m: u64,
    pub method: VMethod,
    pub entries: Vec<Vec<KEntry>>,
}

impl CovarianceMatrix {
    pub fn entry(&self, i: usize, j: usize) -> &KEntry {
        &self.entries[i][j]
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }
}

/// Assembles `K(f_i, f_j) = eta(Phi(Id f_i f_j)) + V(Phi f_i, Phi f_j)` for
/// a family of centered test functions. Only the upper triangle is
/// estimated; the matrix is symmetric by construction.
pub fn covariance_k(
    law: &DislocationLaw,
    pi: &WaitingLaw,
    eta: &StationaryLaw,
    fs: &[TestFunction],
    method: VMethod,
    epsilon: f64,
    m: u64,
    streams: Streams,
) -> Result<CovarianceMatrix> {
    if fs.is_empty() {
        return Err(Error::invalid("covariance_k needs at least one function"));
    }
    for f in fs {
        let shift = crate::empirical::gamma_infinity(f, eta)?;
        if shift.abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "function '{}' is not centered: gamma_inf = {shift:e}",
                f.id()
            )));
        }
    }
    let n = fs.len();
    let mut entries: Vec<Vec<Option<KEntry>>> = vec![vec![None; n]; n];
    let mut pair_rank: u64 = 0;
    for i in 0..n {
        for j in i..n {
            let eta_term = eta.expect(
                |y| (-y).exp() * fs[i].phi(y) * fs[j].phi(y),
                1e-10,
            )?;
            let sub = Streams::new(
                streams.seed() ^ (0x9e3779b97f4a7c15u64.wrapping_mul(pair_rank + 1)),
                crate::rng::Domain::VPairTag,
            );
            let v = match method {
                VMethod::PairTag => {
                    estimate_v_pairtag(law, eta, &fs[i], &fs[j], epsilon, m, sub)?
                }
                VMethod::Coupled => {
                    estimate_v_coupled(law, pi, eta, &fs[i], &fs[j], m, None, sub)?
                }
            };
            let entry = KEntry {
                eta_term,
                v_term: v.value,
                v_se: v.se,
                total: eta_term + v.value,
            };
            entries[i][j] = Some(entry);
            entries[j][i] = Some(entry);
            pair_rank += 1;
        }
    }
    Ok(CovarianceMatrix {
        functions: fs.iter().map(|f| f.id()).collect(),
        epsilon_used: epsilon,
        m,
        method,
        entries: entries
            .into_iter()
            .map(|row| row.into_iter().map(|e| e.unwrap()).collect())
            .collect(),
    })
}

/// Wick-structure check at q = 4 with functions `(f, f, g, g)`:
/// the scaled moment must approach
/// `V(f,f) V(g,g) + 2 V(f,g)^2` (the three pairings of four tags).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WickReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
    pub epsilon_used: f64,
    pub m: u64,
}

pub fn wick_check(
    law: &DislocationLaw,
    eta: &StationaryLaw,
    f: &impl ResidualFn,
    g: &impl ResidualFn,
    epsilon: f64,
    m: u64,
    streams: Streams,
) -> Result<WickReport> {
    require_centered(f, eta)?;
    require_centered(g, eta)?;
    let horizon = -epsilon.ln();
    let mut stats = Moments::new();
    chunked_map_reduce(
        m,
        REPLICATE_CHUNK,
        |range| {
            let mut local = Moments::new();
            for r in range {
                let mut rng = streams.stream(r);
                let s = simulate_tag_summary(law, 4, horizon, &mut rng)
                    .expect("validated quad simulation");
                if !s.all_separated {
                    local.push(0.0);
                    continue;
                }
                // symmetrised (f x f x g x g): average over the six ways of
                // assigning f to two of the four coordinates
                let b = &s.residuals;
                let fv: Vec<f64> = b.iter().map(|&y| f.phi(y)).collect();
                let gv: Vec<f64> = b.iter().map(|&y| g.phi(y)).collect();
                let mut sym = 0.0;
                for p in 0..4 {
                    for q2 in (p + 1)..4 {
                        let mut term = fv[p] * fv[q2];
                        for (k, &g_val) in gv.iter().enumerate() {
                            if k != p && k != q2 {
                                term *= g_val;
                            }
                        }
                        sym += term;
                    }
                }
                local.push(sym / 6.0);
            }
            local
        },
        |local: Moments| stats.merge(&local),
    );
    let scale = epsilon * epsilon;
    let lhs = stats.mean() / scale;
    let lhs_se = stats.se() / scale;

    let sub = |salt: u64| Streams::new(streams.seed() ^ salt, crate::rng::Domain::Wick);
    let vff = estimate_v_pairtag(law, eta, f, f, epsilon, m, sub(0x517cc1b727220a95))?;
    let vgg = estimate_v_pairtag(law, eta, g, g, epsilon, m, sub(0x6c62272e07bb0142))?;
    let vfg = estimate_v_pairtag(law, eta, f, g, epsilon, m, sub(0x2f89b3e0d8a4c761))?;
    let rhs = vff.value * vgg.value + 2.0 * vfg.value * vfg.value;
    let rhs_se = ((vgg.value * vff.se).powi(2)
        + (vff.value * vgg.se).powi(2)
        + (4.0 * vfg.value * vfg.se).powi(2))
    .sqrt();
    let z = (lhs - rhs).abs() / (lhs_se.powi(2) + rhs_se.powi(2)).sqrt();
    Ok(WickReport {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        z,
        epsilon_used: epsilon,
        m,
    })
}

/// Odd-moment vanishing check at q = 3: the scaled moment
/// `eps^{-3/2} mean[ phi^{x3}(B) 1{separated} ]` must be statistically
/// compatible with zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OddMomentReport {
    pub scaled_mean: f64,
    pub scaled_se: f64,
    pub z: f64,
    pub epsilon_used: f64,
    pub m: u64,
}

pub fn odd_moment_check(
    law: &DislocationLaw,
    eta: &StationaryLaw,
    f: &impl ResidualFn,
    epsilon: f64,
    m: u64,
    streams: Streams,
) -> Result<OddMomentReport> {
    require_centered(f, eta)?;
    let horizon = -epsilon.ln();
    let mut stats = Moments::new();
    chunked_map_reduce(
        m,
        REPLICATE_CHUNK,
        |range| {
            let mut local = Moments::new();
            for r in range {
                let mut rng = streams.stream(r);
                let s = simulate_tag_summary(law, 3, horizon, &mut rng)
                    .expect("validated triple simulation");
                if s.all_separated {
                    local.push(f.phi(s.residuals[0]) * f.phi(s.residuals[1]) * f.phi(s.residuals[2]));
                } else {
                    local.push(0.0);
                }
            }
            local
        },
        |local: Moments| stats.merge(&local),
    );
    let scale = epsilon.powf(1.5);
    let scaled_mean = stats.mean() / scale;
    let scaled_se = stats.se() / scale;
    Ok(OddMomentReport {
        scaled_mean,
        scaled_se,
        z: if scaled_se > 0.0 {
            scaled_mean.abs() / scaled_se
        } else {
            0.0
        },
        epsilon_used: epsilon,
        m,
    })
}

/// Frequency of two tags freezing on the same fragment, with its binomial
/// standard error (the tail-bound experiment: the frequency must stay below
/// `K_1(2) epsilon = 4 epsilon`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairTogetherReport {
    pub epsilon: f64,
    pub m: u64,
    pub frequency: f64,
    pub se: f64,
    pub bound: f64,
}

pub fn pair_together_frequency(
    law: &DislocationLaw,
    epsilon: f64,
    m: u64,
    streams: Streams,
) -> Result<PairTogetherReport> {
    let horizon = -epsilon.ln();
    let mut together: u64 = 0;
    chunked_map_reduce(
        m,
        REPLICATE_CHUNK,
        |range| {
            let mut local = 0u64;
            for r in range {
                let mut rng = streams.stream(r);
                let s = simulate_tag_summary(law, 2, horizon, &mut rng)
                    .expect("validated pair simulation");
                if !s.all_separated {
                    local += 1;
                }
            }
            local
        },
        |local: u64| together += local,
    );
    let freq = together as f64 / m as f64;
    let se = (freq * (1.0 - freq) / m as f64).sqrt();
    Ok(PairTogetherReport {
        epsilon,
        m,
        frequency: freq,
        se,
        bound: 4.0 * epsilon,
    })
}
