//! One function per subcommand. Each returns whether every statistical
//! check it ran passed; usage and configuration problems are errors.

use crate::config::{parse_count, FileConfig};
use crate::csv_row;
use crate::output::{write_json, Csv};
use anyhow::{bail, Context};
use fragstat_core::dislocation::DislocationLaw;
use fragstat_core::empirical::TestFunction;
use fragstat_core::fragtree;
use fragstat_core::harness::{
    self, chunked_map_reduce, ks_test, ExperimentConfig, REPLICATE_CHUNK,
};
use fragstat_core::limits::{self, VMethod};
use fragstat_core::renewal::{derive_pi, simulate_residual, stationary_eta};
use fragstat_core::rng::{Domain, Streams};
use fragstat_core::taglines::simulate_tag_summary;
use serde::Serialize;
use std::path::PathBuf;

pub struct Ctx {
    pub config: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Ctx {
    fn law(&self) -> anyhow::Result<DislocationLaw> {
        let law = DislocationLaw::from_family(self.config.law.clone())?;
        let report = law.validate();
        if !report.all_pass() && !self.config.allow_invalid_law {
            bail!(
                "law fails model assumptions: {} (set allow_invalid_law to override)",
                report.failures().join(", ")
            );
        }
        Ok(law)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn section_path(&self, p: &Option<PathBuf>, default: &str) -> PathBuf {
        match p {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.out_dir.join(p),
            None => self.out(default),
        }
    }
}

fn echo<'a, T: Serialize>(config: &'a FileConfig, seed: u64, section: &'a T) -> serde_json::Value {
    serde_json::json!({
        "law": config.law,
        "seed": seed,
        "significance": config.significance,
        "section": section,
        "version": fragstat_core::version(),
    })
}

pub fn simulate_tree(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .tree
        .clone()
        .context("config has no `tree` section")?;
    let law = ctx.law()?;
    let replicates = parse_count(section.replicates, "tree.replicates")?;
    let epsilon = section.epsilon;
    let c = law.ratio_lower_bound();
    let streams = Streams::new(ctx.seed, Domain::Tree);

    #[derive(Default)]
    struct Row {
        count: usize,
        mass: f64,
        min: f64,
        max: f64,
        sizes: Vec<f64>,
        paths: Vec<String>,
    }
    let want_dump = section.out.is_some();
    let want_paths = section.paths;
    let mut rows: Vec<Row> = Vec::with_capacity(replicates as usize);
    chunked_map_reduce(
        replicates,
        REPLICATE_CHUNK,
        |range| {
            let mut out = Vec::with_capacity((range.end - range.start) as usize);
            for rep in range {
                let mut rng = streams.stream(rep);
                let mut row = Row {
                    min: f64::INFINITY,
                    ..Default::default()
                };
                if want_paths {
                    let outcome =
                        fragtree::simulate_tree_with_paths(&law, epsilon, &mut rng).unwrap();
                    let stats = fragtree::outcome_stats(&outcome);
                    row.count = stats.count;
                    row.mass = stats.total_mass;
                    row.min = stats.min_size;
                    row.max = stats.max_size;
                    for f in &outcome.fragments {
                        row.sizes.push(f.size);
                        row.paths.push(
                            f.path
                                .as_ref()
                                .map(|p| {
                                    p.iter()
                                        .map(|i| i.to_string())
                                        .collect::<Vec<_>>()
                                        .join(".")
                                })
                                .unwrap_or_default(),
                        );
                    }
                } else {
                    let mut mass = fragstat_core::harness::stats::KahanSum::default();
                    let mut count = 0usize;
                    let mut min = f64::INFINITY;
                    let mut max: f64 = 0.0;
                    let sizes_wanted = want_dump;
                    let mut sizes = Vec::new();
                    fragtree::visit_frozen(&law, epsilon, &mut rng, |size, _| {
                        mass.add(size);
                        count += 1;
                        min = min.min(size);
                        max = max.max(size);
                        if sizes_wanted {
                            sizes.push(size);
                        }
                    })
                    .unwrap();
                    row.count = count;
                    row.mass = mass.value();
                    row.min = min;
                    row.max = max;
                    row.sizes = sizes;
                }
                out.push(row);
            }
            out
        },
        |chunk: Vec<Row>| rows.extend(chunk),
    );

    let mut stats_csv = Csv::new("replicate,count,total_mass,min_size,max_size");
    let mut max_mass_error: f64 = 0.0;
    let mut min_size = f64::INFINITY;
    let mut max_size: f64 = 0.0;
    for (rep, row) in rows.iter().enumerate() {
        csv_row!(
            stats_csv,
            "{},{},{},{},{}",
            rep,
            row.count,
            row.mass,
            row.min,
            row.max
        );
        max_mass_error = max_mass_error.max((row.mass - 1.0).abs());
        min_size = min_size.min(row.min);
        max_size = max_size.max(row.max);
    }
    if let Some(p) = &section.stats_out {
        stats_csv.write(&ctx.section_path(&Some(p.clone()), "tree_stats.csv"))?;
    }
    if want_dump {
        let mut csv = Csv::new(if want_paths {
            "replicate,size,path"
        } else {
            "replicate,size"
        });
        for (rep, row) in rows.iter().enumerate() {
            for (i, &s) in row.sizes.iter().enumerate() {
                if want_paths {
                    csv_row!(csv, "{},{},{}", rep, s, row.paths[i]);
                } else {
                    csv_row!(csv, "{},{}", rep, s);
                }
            }
        }
        csv.write(&ctx.section_path(&section.out, "fragments.csv"))?;
    }

    // conservation and size-window invariants
    let pass = max_mass_error <= 1e-12 && min_size >= c * epsilon && max_size < epsilon;
    let report = serde_json::json!({
        "config": echo(&ctx.config, ctx.seed, &section),
        "replicates": replicates,
        "epsilon": epsilon,
        "max_mass_error": max_mass_error,
        "min_size": min_size,
        "max_size": max_size,
        "size_window": [c * epsilon, epsilon],
        "pass": pass,
    });
    write_json(&ctx.out("tree_report.json"), &report)?;
    println!(
        "simulate-tree: {replicates} trees at eps={epsilon}: max mass error {max_mass_error:.3e}, sizes in [{min_size:.3e}, {max_size:.3e}) -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn simulate_tags(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .tags
        .clone()
        .context("config has no `tags` section")?;
    let law = ctx.law()?;
    let replicates = parse_count(section.replicates, "tags.replicates")?;
    let horizon = match (section.horizon, section.epsilon) {
        (Some(t), None) => t,
        (None, Some(e)) => {
            if !(0.0 < e && e < 1.0) {
                bail!("tags.epsilon must lie in (0, 1)");
            }
            -e.ln()
        }
        _ => bail!("tags section needs exactly one of `horizon` or `epsilon`"),
    };
    let q = section.q;
    let streams = Streams::new(ctx.seed, Domain::Tags);

    let mut summaries = Vec::with_capacity(replicates as usize);
    chunked_map_reduce(
        replicates,
        REPLICATE_CHUNK,
        |range| {
            let mut out = Vec::with_capacity((range.end - range.start) as usize);
            for rep in range {
                let mut rng = streams.stream(rep);
                out.push(simulate_tag_summary(&law, q, horizon, &mut rng).unwrap());
            }
            out
        },
        |chunk: Vec<fragstat_core::taglines::TagSummary>| summaries.extend(chunk),
    );

    if section.out.is_some() {
        let mut csv = Csv::new("replicate,tag,B_T,separated,n_epochs");
        for (rep, s) in summaries.iter().enumerate() {
            for tag in 0..q as usize {
                csv_row!(
                    csv,
                    "{},{},{},{},{}",
                    rep,
                    tag,
                    s.residuals[tag],
                    s.all_separated,
                    s.n_epochs[tag]
                );
            }
        }
        csv.write(&ctx.section_path(&section.out, "tags.csv"))?;
    }

    let together = summaries.iter().filter(|s| !s.all_separated).count() as f64;
    let freq = together / replicates as f64;
    let se = (freq * (1.0 - freq) / replicates as f64).sqrt();
    // the tail bound P(tags frozen together) <= K1(2) eps = 4 eps applies to
    // the two-tag experiment driven by an epsilon horizon
    let bound = section.epsilon.map(|e| 4.0 * e);
    let pass = match bound {
        Some(b) if q == 2 => freq <= b + 3.0 * se,
        _ => true,
    };
    let report = serde_json::json!({
        "config": echo(&ctx.config, ctx.seed, &section),
        "replicates": replicates,
        "q": q,
        "horizon": horizon,
        "together_frequency": freq,
        "together_se": se,
        "tail_bound_4eps": bound,
        "pass": pass,
    });
    write_json(&ctx.out("tags_report.json"), &report)?;
    println!(
        "simulate-tags: q={q}, T={horizon:.4}, {replicates} replicates: together frequency {freq:.5} -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn renewal_check(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx.config.renewal.clone().unwrap_or(crate::config::RenewalSection {
        increment_lines: 60.0,
        line_horizon: 1300.0,
        residual_m: 1e5,
        residual_t: 50.0,
        sampler_m: 1e5,
    });
    let law = ctx.law()?;
    let pi = derive_pi(&law)?;
    let eta = stationary_eta(&pi)?;
    let alpha = ctx.config.significance;

    // each phase draws from its own derived sub-seed, like the ladder and
    // covariance estimators do
    // (a) pooled tagged-line increments against the derived pi density
    let lines = parse_count(section.increment_lines, "renewal.increment_lines")?;
    let tag_streams = Streams::new(ctx.seed ^ 0x517cc1b727220a95, Domain::Tags);
    let mut increments: Vec<f64> = Vec::new();
    chunked_map_reduce(
        lines,
        8,
        |range| {
            let mut out = Vec::new();
            for rep in range {
                let mut rng = tag_streams.stream(rep);
                let h = fragstat_core::taglines::simulate_taglines(
                    &law,
                    1,
                    section.line_horizon,
                    &mut rng,
                )
                .unwrap();
                out.extend(h.epochs[0].windows(2).map(|w| w[1] - w[0]));
            }
            out
        },
        |chunk: Vec<f64>| increments.extend(chunk),
    );
    let ks_pi = ks_test(&increments, |x| pi.cdf(x))?;

    // (b) residual lifetime far from the origin against eta
    let m_res = parse_count(section.residual_m, "renewal.residual_m")?;
    let res_streams = Streams::new(ctx.seed ^ 0x6c62272e07bb0142, Domain::Renewal);
    let t = section.residual_t;
    let mut residuals = Vec::with_capacity(m_res as usize);
    chunked_map_reduce(
        m_res,
        REPLICATE_CHUNK,
        |range| {
            range
                .map(|rep| simulate_residual(&pi, t, &mut res_streams.stream(rep)))
                .collect::<Vec<f64>>()
        },
        |chunk: Vec<f64>| residuals.extend(chunk),
    );
    let ks_residual = ks_test(&residuals, |x| eta.cdf(x))?;

    // (c) stationary sampler against the eta density
    let m_smp = parse_count(section.sampler_m, "renewal.sampler_m")?;
    let smp_streams = Streams::new(ctx.seed ^ 0x2f89b3e0d8a4c761, Domain::EtaSampler);
    let mut draws = Vec::with_capacity(m_smp as usize);
    chunked_map_reduce(
        m_smp,
        REPLICATE_CHUNK,
        |range| {
            range
                .map(|rep| eta.sample(&mut smp_streams.stream(rep)))
                .collect::<Vec<f64>>()
        },
        |chunk: Vec<f64>| draws.extend(chunk),
    );
    let ks_sampler = ks_test(&draws, |x| eta.cdf(x))?;

    let pass =
        ks_pi.p_value > alpha && ks_residual.p_value > alpha && ks_sampler.p_value > alpha;
    let report = serde_json::json!({
        "config": echo(&ctx.config, ctx.seed, &section),
        "pi_support": pi.support(),
        "pi_mu": pi.mu(),
        "increments_n": increments.len(),
        "ks_pi_increments": ks_pi,
        "ks_residual_eta": ks_residual,
        "residual_t": t,
        "ks_sampler_eta": ks_sampler,
        "pass": pass,
    });
    write_json(&ctx.out("renewal_report.json"), &report)?;
    println!(
        "renewal-check: KS p-values: increments~pi {:.4}, B_t~eta {:.4}, sampler~eta {:.4} -> {}",
        ks_pi.p_value,
        ks_residual.p_value,
        ks_sampler.p_value,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn rate_check(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .rate
        .clone()
        .context("config has no `rate` section")?;
    let law = ctx.law()?;
    let pi = derive_pi(&law)?;
    let eta = stationary_eta(&pi)?;
    let m = parse_count(section.m, "rate.m")?;
    let f = TestFunction::parse(&section.function, Some(&eta))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let report = fragstat_core::renewal::rate_experiment(
        &pi,
        &eta,
        &f,
        &section.t_grid,
        m,
        section.theta_eff,
        Streams::new(ctx.seed, Domain::Rate),
    )?;

    let mut csv = Csv::new("t,gap,se");
    for p in &report.points {
        csv_row!(csv, "{},{},{}", p.t, p.gap, p.se);
    }
    csv.write(&ctx.out("rate.csv"))?;

    let pass = report.passes_unit_slope();
    let json = serde_json::json!({
        "config": echo(&ctx.config, ctx.seed, &section),
        "report": report,
        "pass": pass,
    });
    write_json(&ctx.out("rate_report.json"), &json)?;
    if report.warned_low_m {
        eprintln!("rate-check: warning: smallest-t gap does not clear its standard error; increase m");
    }
    println!(
        "rate-check: {} pre-noise points, slope {:?}, unit-slope consistency {} -> {}",
        report.pre_noise_points,
        report.fitted_slope,
        report.consistent_with_unit_slope,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn lln(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .lln
        .clone()
        .context("config has no `lln` section")?;
    let config = ExperimentConfig {
        law: ctx.config.law.clone(),
        seed: ctx.seed,
        significance: ctx.config.significance,
        allow_invalid_law: ctx.config.allow_invalid_law,
        threads: ctx.config.threads,
        lln: Some(harness::LlnSection {
            epsilon_ladder: section.epsilon_ladder.clone(),
            m: section.m,
            functions: section.functions.clone(),
        }),
        clt: None,
    };
    let report = harness::run_lln(&config)?;

    let mut csv = Csv::new("function,epsilon,rmse,mean_error,se_of_mean");
    for f in &report.functions {
        for r in &f.rungs {
            csv_row!(
                csv,
                "{},{},{},{},{}",
                f.function,
                r.epsilon,
                r.rmse,
                r.mean_error,
                r.se_of_mean
            );
        }
    }
    csv.write(&ctx.out("lln.csv"))?;

    let band_ok = match section.ratio_band {
        None => true,
        Some((lo, hi)) => report
            .functions
            .iter()
            .all(|f| f.rmse_ratio_first_last >= lo && f.rmse_ratio_first_last <= hi),
    };
    let pass = report.all_monotone && band_ok;
    let json = serde_json::json!({
        "report": report,
        "ratio_band": section.ratio_band,
        "ratio_band_ok": band_ok,
        "pass": pass,
    });
    write_json(&ctx.out("lln_report.json"), &json)?;
    for f in &report.functions {
        println!(
            "lln[{}]: rmse {:?} ratio(first/last) {:.2} -> {}",
            f.function,
            f.rungs.iter().map(|r| r.rmse).collect::<Vec<_>>(),
            f.rmse_ratio_first_last,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(pass)
}

pub fn clt(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .clt
        .clone()
        .context("config has no `clt` section")?;
    let config = ExperimentConfig {
        law: ctx.config.law.clone(),
        seed: ctx.seed,
        significance: ctx.config.significance,
        allow_invalid_law: ctx.config.allow_invalid_law,
        threads: ctx.config.threads,
        lln: None,
        clt: Some(harness::CltSection {
            epsilon: section.epsilon,
            m: section.m,
            functions: section.functions.clone(),
            v_epsilon: section.v_epsilon,
            v_m: section.v_m,
        }),
    };
    let report = harness::run_clt(&config)?;

    let mut csv = Csv::new("replicate,function_id,value");
    for (rep, row) in report.z_samples.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            csv_row!(csv, "{},{},{}", rep, report.coordinates[i].function, v);
        }
    }
    csv.write(&ctx.out("clt_samples.csv"))?;

    // strip the bulky sample matrix from the JSON report; it lives in the CSV
    let mut json = serde_json::to_value(&report)?;
    json.as_object_mut().unwrap().remove("z_samples");
    let json = serde_json::json!({ "report": json, "pass": report.pass });
    write_json(&ctx.out("clt_report.json"), &json)?;
    for c in &report.coordinates {
        println!(
            "clt[{}]: AD p {:?}, Var(Z) {:.5} vs K {:.5}",
            c.function,
            c.normality.p_value,
            c.variance,
            report.k_matrix.entry(
                report.coordinates.iter().position(|x| x.function == c.function).unwrap(),
                report.coordinates.iter().position(|x| x.function == c.function).unwrap()
            ).total,
        );
    }
    println!(
        "clt: max |z| over covariance entries {:.2} -> {}",
        report
            .covariance
            .iter()
            .map(|c| c.z)
            .fold(0.0f64, f64::max),
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(report.pass)
}

pub fn estimate_v(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .v
        .clone()
        .context("config has no `v` section")?;
    let law = ctx.law()?;
    let pi = derive_pi(&law)?;
    let eta = stationary_eta(&pi)?;
    let m = parse_count(section.m, "v.m")?;
    if section.epsilon_ladder.is_empty() {
        bail!("v.epsilon_ladder must not be empty");
    }
    let f = TestFunction::parse(&section.f, Some(&eta)).map_err(|e| anyhow::anyhow!("{e}"))?;
    let g = match &section.g {
        Some(g) => TestFunction::parse(g, Some(&eta)).map_err(|e| anyhow::anyhow!("{e}"))?,
        None => f.clone(),
    };

    let estimates = limits::estimate_v_ladder(
        &law,
        &eta,
        &f,
        &g,
        &section.epsilon_ladder,
        m,
        Streams::new(ctx.seed, Domain::VPairTag),
    )?;

    let mut csv = Csv::new("method,eps,M,value,se");
    for e in &estimates {
        csv_row!(csv, "pair_tag,{},{},{},{}", e.epsilon_used, e.m, e.value, e.se);
    }

    // ladder agreement between the last two rungs
    let mut pass = true;
    let last_two_z = if estimates.len() >= 2 {
        let a = &estimates[estimates.len() - 2];
        let b = &estimates[estimates.len() - 1];
        let z = (a.value - b.value).abs() / (a.se.powi(2) + b.se.powi(2)).sqrt();
        pass &= z <= 3.0;
        Some(z)
    } else {
        None
    };

    let finest = *section.epsilon_ladder.last().unwrap();
    let wick = if section.wick {
        let w = limits::wick_check(
            &law,
            &eta,
            &f,
            &g,
            finest,
            m,
            Streams::new(ctx.seed, Domain::Wick),
        )?;
        pass &= w.z <= 3.0;
        Some(w)
    } else {
        None
    };

    let odd = if section.odd {
        let o = limits::odd_moment_check(
            &law,
            &eta,
            &f,
            finest,
            m,
            Streams::new(ctx.seed, Domain::OddMoment),
        )?;
        pass &= o.z < 3.0;
        Some(o)
    } else {
        None
    };

    let coupled = if section.coupled {
        let cm = parse_count(section.coupled_m.unwrap_or(section.m), "v.coupled_m")?;
        let c = limits::estimate_v_coupled(
            &law,
            &pi,
            &eta,
            &f,
            &g,
            cm,
            section.v_min,
            Streams::new(ctx.seed, Domain::VCoupled),
        )?;
        csv_row!(csv, "coupled,,{},{},{}", c.m, c.value, c.se);
        // agreement against the arbiter rung closest in variance: the finest
        let reference = estimates.last().unwrap();
        let z = (c.value - reference.value).abs() / (c.se.powi(2) + reference.se.powi(2)).sqrt();
        pass &= z <= 3.0;
        Some((c, z))
    } else {
        None
    };
    csv.write(&ctx.out("v.csv"))?;

    let json = serde_json::json!({
        "config": echo(&ctx.config, ctx.seed, &section),
        "f": f.id(),
        "g": g.id(),
        "estimates": estimates,
        "last_two_rungs_z": last_two_z,
        "wick": wick,
        "odd": odd,
        "coupled": coupled.as_ref().map(|(c, z)| serde_json::json!({"estimate": c, "z_vs_pairtag": z})),
        "pass": pass,
    });
    write_json(&ctx.out("v_report.json"), &json)?;
    println!(
        "estimate-v: ladder {:?} -> values {:?}, last-two z {:?} -> {}",
        section.epsilon_ladder,
        estimates.iter().map(|e| e.value).collect::<Vec<_>>(),
        last_two_z,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn covariance(ctx: &Ctx) -> anyhow::Result<bool> {
    let section = ctx
        .config
        .covariance
        .clone()
        .context("config has no `covariance` section")?;
    let law = ctx.law()?;
    let pi = derive_pi(&law)?;
    let eta = stationary_eta(&pi)?;
    let m = parse_count(section.m, "covariance.m")?;
    let method = match section.method.as_str() {
        "pair_tag" | "pairtag" => VMethod::PairTag,
        "coupled" => VMethod::Coupled,
        other => bail!("unknown covariance method '{other}' (pair_tag or coupled)"),
    };
    let fns: Vec<TestFunction> = section
        .functions
        .iter()
        .map(|s| {
            TestFunction::parse(s, Some(&eta))
                .and_then(|f| TestFunction::centered(f, &eta))
                .map_err(|e| anyhow::anyhow!("{e}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let k = limits::covariance_k(
        &law,
        &pi,
        &eta,
        &fns,
        method,
        section.epsilon,
        m,
        Streams::new(ctx.seed, Domain::VPairTag),
    )?;

    let mut csv = Csv::new("i,j,function_i,function_j,eta_term,v_term,v_se,total");
    for i in 0..k.dim() {
        for j in 0..k.dim() {
            let e = k.entry(i, j);
            csv_row!(
                csv,
                "{},{},{},{},{},{},{},{}",
                i,
                j,
                k.functions[i],
                k.functions[j],
                e.eta_term,
                e.v_term,
                e.v_se,
                e.total
            );
        }
    }
    csv.write(&ctx.out("covariance.csv"))?;

    // diagonal entries must be nonnegative within the estimator noise
    let pass = (0..k.dim()).all(|i| k.entry(i, i).total >= -3.0 * k.entry(i, i).v_se);
    let json = serde_json::json!({
        "config": echo(&ctx.config, ctx.seed, &section),
        "matrix": k,
        "pass": pass,
    });
    write_json(&ctx.out("covariance_report.json"), &json)?;
    println!(
        "covariance: {}x{} matrix assembled ({} entries estimated) -> {}",
        k.dim(),
        k.dim(),
        k.dim() * (k.dim() + 1) / 2,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}
