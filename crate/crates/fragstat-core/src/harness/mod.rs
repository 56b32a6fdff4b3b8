//! Experiment orchestration: configuration, deterministic parallel
//! replication, and the law-of-large-numbers / central-limit experiments.

pub mod quadrature;
pub mod stats;

pub use quadrature::{quadrature, quadrature2};
pub use stats::{ad_normality, chi_square_gof, ks_test, ks_test_two_sample, AdResult, KsResult};

use crate::dislocation::{DislocationLaw, Family};
use crate::empirical::{gamma_infinity, GammaAccumulator, TestFunction};
use crate::fragtree::visit_frozen;
use crate::limits::{covariance_k, CovarianceMatrix, VMethod};
use crate::renewal::{derive_pi, stationary_eta, StationaryLaw, WaitingLaw};
use crate::rng::{Domain, Streams};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicates per parallel work unit. Fixed, so reductions are independent
/// of the number of worker threads.
pub const REPLICATE_CHUNK: u64 = 1024;

/// Maps fixed-size replicate chunks in parallel, then reduces them in chunk
/// order on the calling thread. Identical results for any thread count.
pub fn chunked_map_reduce<A, M, R>(m: u64, chunk: u64, map: M, mut reduce: R)
where
    A: Send,
    M: Fn(std::ops::Range<u64>) -> A + Sync,
    R: FnMut(A),
{
    assert!(chunk > 0);
    let n_chunks = m.div_ceil(chunk);
    let outputs: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            map(lo..(lo + chunk).min(m))
        })
        .collect();
    for a in outputs {
        reduce(a);
    }
}

/// Experiment configuration; one flat JSON document with a section per
/// experiment family. Command-line flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub law: Family,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Acceptance significance level for the statistical tests.
    #[serde(default = "default_significance")]
    pub significance: f64,
    /// Let experiments run on laws failing the standing assumptions.
    #[serde(default)]
    pub allow_invalid_law: bool,
    /// Worker threads; an execution detail, never serialized into reports
    /// (results are identical for any value).
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lln: Option<LlnSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltSection>,
}

fn default_seed() -> u64 {
    42
}

fn default_significance() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LlnSection {
    pub epsilon_ladder: Vec<f64>,
    /// Replicates per rung.
    pub m: f64,
    pub functions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CltSection {
    pub epsilon: f64,
    pub m: f64,
    pub functions: Vec<String>,
    /// Horizon scale of the embedded V estimation for the covariance oracle.
    pub v_epsilon: f64,
    pub v_m: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.significance != 0.01 && self.significance != 0.05 {
            return Err(Error::Config(format!(
                "significance must be 0.01 or 0.05, got {}",
                self.significance
            )));
        }
        if let Some(lln) = &self.lln {
            if lln.epsilon_ladder.is_empty()
                || lln.epsilon_ladder.iter().any(|&e| !(0.0 < e && e < 1.0))
            {
                return Err(Error::Config("lln epsilon ladder must lie in (0, 1)".into()));
            }
            if lln.m < 100.0 {
                return Err(Error::Config("lln needs m >= 100".into()));
            }
        }
        if let Some(clt) = &self.clt {
            if !(0.0 < clt.epsilon && clt.epsilon < 1.0) {
                return Err(Error::Config("clt epsilon must lie in (0, 1)".into()));
            }
            if clt.m < 1000.0 {
                return Err(Error::Config("clt needs m >= 1000".into()));
            }
        }
        Ok(())
    }

    /// Builds the law and refuses assumption failures unless overridden.
    pub fn checked_law(&self) -> Result<DislocationLaw> {
        let law = DislocationLaw::from_family(self.law.clone())?;
        let report = law.validate();
        if !report.all_pass() && !self.allow_invalid_law {
            return Err(Error::AssumptionFailed(format!(
                "law fails: {} (set allow_invalid_law to override)",
                report.failures().join(", ")
            )));
        }
        Ok(law)
    }
}

/// Derived per-law context shared by the experiment drivers.
pub struct LawContext {
    pub law: DislocationLaw,
    pub pi: WaitingLaw,
    pub eta: StationaryLaw,
}

impl LawContext {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let law = config.checked_law()?;
        let pi = derive_pi(&law)?;
        let eta = stationary_eta(&pi)?;
        Ok(LawContext { law, pi, eta })
    }
}

/// One rung of the LLN experiment for one function.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LlnRung {
    pub epsilon: f64,
    pub rmse: f64,
    pub mean_error: f64,
    pub se_of_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlnFunctionReport {
    pub function: String,
    pub gamma_inf: f64,
    pub rungs: Vec<LlnRung>,
    pub rmse_monotone: bool,
    /// RMSE of the coarsest rung over the finest.
    pub rmse_ratio_first_last: f64,
    /// RMSE ratios between consecutive rungs.
    pub rmse_ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlnReport {
    pub config: ExperimentConfig,
    pub version: String,
    pub m_per_rung: u64,
    pub functions: Vec<LlnFunctionReport>,
    pub all_monotone: bool,
}

/// Almost-sure convergence of the empirical measure: RMSE of
/// `gamma_T(f) - gamma_inf(f)` across an epsilon ladder.
pub fn run_lln(config: &ExperimentConfig) -> Result<LlnReport> {
    config.validate()?;
    let section = config
        .lln
        .as_ref()
        .ok_or_else(|| Error::Config("missing lln section".into()))?;
    let ctx = LawContext::build(config)?;
    let m = section.m as u64;
    let fns: Vec<TestFunction> = section
        .functions
        .iter()
        .map(|s| TestFunction::parse(s, Some(&ctx.eta)))
        .collect::<Result<_>>()?;
    let limits: Vec<f64> = fns
        .iter()
        .map(|f| gamma_infinity(f, &ctx.eta))
        .collect::<Result<_>>()?;

    // per function, per rung: accumulate squared errors
    let mut reports: Vec<LlnFunctionReport> = fns
        .iter()
        .zip(&limits)
        .map(|(f, &g)| LlnFunctionReport {
            function: f.id(),
            gamma_inf: g,
            rungs: Vec::new(),
            rmse_monotone: true,
            rmse_ratio_first_last: f64::NAN,
            rmse_ratios: Vec::new(),
        })
        .collect();

    for (ri, &epsilon) in section.epsilon_ladder.iter().enumerate() {
        let base = ri as u64 * m;
        let streams = Streams::new(config.seed, Domain::Lln);
        let law = &ctx.law;
        let fns_ref = &fns;
        let limits_ref = &limits;
        let mut stats = vec![stats::Moments::new(); fns.len()];
        chunked_map_reduce(
            m,
            REPLICATE_CHUNK,
            |range| {
                let mut local = vec![stats::Moments::new(); fns_ref.len()];
                for r in range {
                    let mut rng = streams.stream(base + r);
                    let mut acc = GammaAccumulator::new(fns_ref, epsilon);
                    visit_frozen(law, epsilon, &mut rng, |size, _| acc.visit(size))
                        .expect("validated tree simulation");
                    for (k, v) in acc.values().into_iter().enumerate() {
                        local[k].push(v - limits_ref[k]);
                    }
                }
                local
            },
            |local: Vec<stats::Moments>| {
                for (s, l) in stats.iter_mut().zip(&local) {
                    s.merge(l);
                }
            },
        );
        for (k, s) in stats.iter().enumerate() {
            let mse = s.mean().powi(2) + s.variance() * (s.count() as f64 - 1.0) / s.count() as f64;
            reports[k].rungs.push(LlnRung {
                epsilon,
                rmse: mse.sqrt(),
                mean_error: s.mean(),
                se_of_mean: s.se(),
            });
        }
    }

    for rep in &mut reports {
        rep.rmse_monotone = rep.rungs.windows(2).all(|w| w[1].rmse <= w[0].rmse);
        if let (Some(first), Some(last)) = (rep.rungs.first(), rep.rungs.last()) {
            rep.rmse_ratio_first_last = first.rmse / last.rmse;
        }
        rep.rmse_ratios = rep
            .rungs
            .windows(2)
            .map(|w| w[0].rmse / w[1].rmse)
            .collect();
    }

    Ok(LlnReport {
        config: config.clone(),
        version: crate::version().to_string(),
        m_per_rung: m,
        all_monotone: reports.iter().all(|r| r.rmse_monotone),
        functions: reports,
    })
}

/// Per-coordinate outcome of the CLT experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltCoordinate {
    pub function: String,
    pub gamma_inf: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub normality: AdResult,
    pub degenerate: bool,
}

/// Comparison of one empirical covariance entry against the assembled K.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CovarianceComparison {
    pub i: usize,
    pub j: usize,
    pub empirical: f64,
    pub empirical_se: f64,
    pub k_hat: f64,
    pub k_hat_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltReport {
    pub config: ExperimentConfig,
    pub version: String,
    pub epsilon: f64,
    pub m: u64,
    pub coordinates: Vec<CltCoordinate>,
    pub covariance: Vec<CovarianceComparison>,
    pub k_matrix: CovarianceMatrix,
    /// Normality not rejected at the configured significance for every
    /// non-degenerate coordinate, and every covariance entry within 3 sigma.
    pub pass: bool,
    /// `Z_mi = eps^{-1/2} (gamma_T(f_i) - gamma_inf(f_i))`, row per replicate.
    pub z_samples: Vec<Vec<f64>>,
}

/// Gaussian-fluctuation experiment: simulates `Z = eps^{-1/2} gamma_T(fbar)`
/// per replicate, tests each coordinate for normality, and compares the
/// empirical covariance against the assembled `K`.
pub fn run_clt(config: &ExperimentConfig) -> Result<CltReport> {
    config.validate()?;
    let section = config
        .clt
        .as_ref()
        .ok_or_else(|| Error::Config("missing clt section".into()))?;
    let ctx = LawContext::build(config)?;
    let m = section.m as u64;
    let epsilon = section.epsilon;
    // auto-center whatever was requested
    let fns: Vec<TestFunction> = section
        .functions
        .iter()
        .map(|s| {
            TestFunction::parse(s, Some(&ctx.eta))
                .and_then(|f| TestFunction::centered(f, &ctx.eta))
        })
        .collect::<Result<_>>()?;
    let limits: Vec<f64> = fns
        .iter()
        .map(|f| gamma_infinity(f, &ctx.eta))
        .collect::<Result<_>>()?;

    let streams = Streams::new(config.seed, Domain::Clt);
    let scale = epsilon.sqrt().recip();
    let law = &ctx.law;
    let fns_ref = &fns;
    let limits_ref = &limits;
    let mut z_samples: Vec<Vec<f64>> = Vec::with_capacity(m as usize);
    chunked_map_reduce(
        m,
        REPLICATE_CHUNK,
        |range| {
            let mut rows = Vec::with_capacity((range.end - range.start) as usize);
            for r in range {
                let mut rng = streams.stream(r);
                let mut acc = GammaAccumulator::new(fns_ref, epsilon);
                visit_frozen(law, epsilon, &mut rng, |size, _| acc.visit(size))
                    .expect("validated tree simulation");
                rows.push(
                    acc.values()
                        .into_iter()
                        .zip(limits_ref)
                        .map(|(v, &g)| scale * (v - g))
                        .collect::<Vec<f64>>(),
                );
            }
            rows
        },
        |rows: Vec<Vec<f64>>| z_samples.extend(rows),
    );

    let n = z_samples.len();
    let nf = n as f64;
    let dim = fns.len();
    let means: Vec<f64> = (0..dim)
        .map(|i| z_samples.iter().map(|row| row[i]).sum::<f64>() / nf)
        .collect();
    let mut cov = vec![vec![0.0f64; dim]; dim];
    for row in &z_samples {
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += (row[i] - means[i]) * (row[j] - means[j]);
            }
        }
    }
    for r in cov.iter_mut() {
        for v in r.iter_mut() {
            *v /= nf - 1.0;
        }
    }

    let k_matrix = covariance_k(
        &ctx.law,
        &ctx.pi,
        &ctx.eta,
        &fns,
        VMethod::PairTag,
        section.v_epsilon,
        section.v_m as u64,
        Streams::new(config.seed, Domain::VPairTag),
    )?;

    let mut coordinates = Vec::with_capacity(dim);
    for i in 0..dim {
        let xs: Vec<f64> = z_samples.iter().map(|row| row[i]).collect();
        let degenerate = cov[i][i] <= 0.0;
        let normality = if degenerate {
            AdResult {
                statistic: None,
                p_value: None,
                degenerate: true,
                n,
            }
        } else {
            ad_normality(&xs)?
        };
        coordinates.push(CltCoordinate {
            function: fns[i].id(),
            gamma_inf: limits[i],
            mean: means[i],
            mean_se: (cov[i][i] / nf).sqrt(),
            variance: cov[i][i],
            variance_se: cov[i][i] * (2.0 / (nf - 1.0)).sqrt(),
            normality,
            degenerate,
        });
    }

    let mut comparisons = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            let emp = cov[i][j];
            let emp_se = ((cov[i][i] * cov[j][j] + emp * emp) / (nf - 1.0)).sqrt();
            let k = k_matrix.entry(i, j);
            let denom = (emp_se.powi(2) + k.v_se.powi(2)).sqrt();
            let z = if denom > 0.0 {
                (emp - k.total).abs() / denom
            } else if emp == k.total {
                0.0
            } else {
                f64::INFINITY
            };
            comparisons.push(CovarianceComparison {
                i,
                j,
                empirical: emp,
                empirical_se: emp_se,
                k_hat: k.total,
                k_hat_se: k.v_se,
                z,
            });
        }
    }

    let pass = coordinates
        .iter()
        .all(|c| c.degenerate || !c.normality.rejects_at(config.significance))
        && comparisons.iter().all(|c| c.z <= 3.0);

    Ok(CltReport {
        config: config.clone(),
        version: crate::version().to_string(),
        epsilon,
        m,
        coordinates,
        covariance: comparisons,
        k_matrix,
        pass,
        z_samples,
    })
}
