//! Built-in example suite: closed-form and forced-outcome checks that run in
//! a couple of seconds, plus the exact pairing/injection combinatorics. The
//! optional duality experiment cross-checks tree moments against tagged-line
//! moments.

use crate::commands::Ctx;
use crate::output::write_json;
use anyhow::Context as _;
use fragstat_core::dislocation::{size_biased_pick, DislocationLaw, RatioVector};
use fragstat_core::empirical::{gamma_infinity, EmpiricalMeasure, TestFunction};
use fragstat_core::fragtree::{outcome_stats, simulate_tree};
use fragstat_core::harness::stats::Moments;
use fragstat_core::harness::{ad_normality, ks_test, quadrature};
use fragstat_core::limits::{enumerate_pairings, k1, pairing_count};
use fragstat_core::renewal::{derive_pi, simulate_residual, stationary_eta};
use fragstat_core::rng::{stream, Domain, Streams};
use fragstat_core::taglines::{simulate_tag_summary, simulate_taglines, TagGroup, TagHistory};
use std::f64::consts::LN_2;

struct Suite {
    passed: usize,
    failed: usize,
}

impl Suite {
    fn run(&mut self, name: &str, f: impl FnOnce() -> anyhow::Result<()>) {
        match f() {
            Ok(()) => {
                self.passed += 1;
                println!("selftest: {name}: ok");
            }
            Err(e) => {
                self.failed += 1;
                println!("selftest: {name}: FAILED ({e})");
            }
        }
    }
}

fn ensure(cond: bool, msg: &str) -> anyhow::Result<()> {
    if cond {
        Ok(())
    } else {
        anyhow::bail!("{msg}");
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> anyhow::Result<()> {
    ensure((a - b).abs() <= tol, &format!("{what}: {a} vs {b} (tol {tol})"))
}

pub fn selftest(ctx: &Ctx, duality: bool) -> anyhow::Result<bool> {
    let mut s = Suite { passed: 0, failed: 0 };
    let seed = ctx.seed;

    s.run("deterministic split is constant", || {
        let law = DislocationLaw::deterministic_binary(0.5)?;
        let rv = law.sample_ratios(&mut stream(seed, Domain::Selftest, 0));
        ensure(rv.ratios() == [0.5, 0.5], "expected (0.5, 0.5)")
    });

    s.run("binary uniform support and conservation", || {
        let law = DislocationLaw::binary_uniform(0.25)?;
        let mut rng = stream(seed, Domain::Selftest, 1);
        for _ in 0..1000 {
            let rv = law.sample_ratios(&mut rng);
            ensure(
                rv.ratios().iter().all(|&r| (0.25..=0.75).contains(&r)),
                "ratio outside [0.25, 0.75]",
            )?;
            close(rv.sum(), 1.0, 1e-12, "ratio sum")?;
        }
        Ok(())
    });

    s.run("validation flags", || {
        ensure(
            DislocationLaw::binary_uniform(0.25)?.validate().all_pass(),
            "binary_uniform(0.25) should pass all assumptions",
        )?;
        let det = DislocationLaw::deterministic_binary(0.3)?.validate();
        ensure(
            !det.continuous_density && det.compact_support,
            "deterministic_binary(0.3) should fail exactly the continuity assumption",
        )?;
        ensure(
            !DislocationLaw::binary_uniform(0.0)?.validate().compact_support,
            "c = 0 should fail the compact-support assumption",
        )
    });

    s.run("size-biased pick interval arithmetic", || {
        let half = RatioVector::new(vec![0.5, 0.5])?;
        let (i, x) = size_biased_pick(&half, 0.25)?;
        ensure(i == 0, "pick index")?;
        close(x, LN_2, 1e-15, "pick log-ratio")?;
        let skew = RatioVector::new(vec![0.6, 0.4])?;
        let (i, x) = size_biased_pick(&skew, 0.7)?;
        ensure(i == 1, "pick index")?;
        close(x, -(0.4f64).ln(), 1e-15, "pick log-ratio")
    });

    s.run("deterministic tree freezes four quarters", || {
        let law = DislocationLaw::deterministic_binary(0.5)?;
        let out = simulate_tree(&law, 0.3, &mut stream(seed, Domain::Selftest, 2))?;
        let st = outcome_stats(&out);
        ensure(st.count == 4, "expected 4 fragments")?;
        close(st.total_mass, 1.0, 1e-12, "mass")?;
        ensure(st.min_size == 0.25 && st.max_size == 0.25, "sizes must be 0.25")
    });

    s.run("outcome stats arithmetic", || {
        let m = EmpiricalMeasure::from_sizes(&[0.3, 0.3, 0.4], 0.5);
        close(m.gamma(&TestFunction::constant(1.0)), 1.0, 1e-12, "gamma(1)")?;
        close(m.gamma(&TestFunction::power(1)), 0.68, 1e-12, "gamma(x)")
    });

    s.run("residual arithmetic on a fixed history", || {
        let h = TagHistory {
            q: 1,
            horizon: 1.5,
            epochs: vec![vec![0.0, 0.9, 1.7]],
            partition_events: vec![],
            final_groups: vec![TagGroup {
                tags: vec![0],
                level: 1.7,
                frozen: true,
            }],
            separation_levels: vec![],
        };
        close(h.residuals_at(1.0)?[0], 0.7, 1e-15, "residual")?;
        close(h.residuals_at(0.0)?[0], 0.9, 1e-15, "first epoch")
    });

    s.run("partition at zero is a single group", || {
        let law = DislocationLaw::binary_uniform(0.25)?;
        let h = simulate_taglines(&law, 3, 2.0, &mut stream(seed, Domain::Selftest, 3))?;
        let p = h.partition_at(0.0)?;
        ensure(p.groups.len() == 1 && p.merge_count == 2, "expected {{0,1,2}}")
    });

    s.run("single tag is always separated", || {
        let law = DislocationLaw::binary_uniform(0.25)?;
        let h = simulate_taglines(&law, 1, 2.0, &mut stream(seed, Domain::Selftest, 4))?;
        ensure(h.all_separated(), "q = 1 must be separated")
    });

    s.run("phi transform substitution", || {
        close(TestFunction::constant(1.0).phi(3.0), 1.0, 1e-15, "phi(1)")?;
        close(TestFunction::power(1).phi(2.0), (-2.0f64).exp(), 1e-15, "phi(x)")?;
        close(TestFunction::power(2).phi(LN_2), 0.25, 1e-15, "phi(x^2)")
    });

    s.run("injective two-atom example", || {
        let m = EmpiricalMeasure::from_sizes(&[0.5, 0.5], 0.6);
        let one = TestFunction::constant(1.0);
        close(m.gamma_injective(&[&one, &one])?, 0.5, 1e-12, "gamma-odot")?;
        close(m.gamma_tensor(&[&one, &one]), 1.0, 1e-12, "gamma-tensor")?;
        let f = TestFunction::power(2);
        close(
            m.gamma_injective(&[&f])?,
            m.gamma(&f),
            1e-15,
            "q = 1 equals gamma",
        )
    });

    s.run("limit measure values", || {
        let law = DislocationLaw::binary_uniform(0.25)?;
        let eta = stationary_eta(&derive_pi(&law)?)?;
        close(
            gamma_infinity(&TestFunction::constant(1.0), &eta)?,
            1.0,
            1e-9,
            "gamma_inf(1)",
        )?;
        let centered = TestFunction::centered(TestFunction::power(1), &eta)?;
        close(gamma_infinity(&centered, &eta)?, 0.0, 1e-9, "gamma_inf(centered)")
    });

    s.run("waiting-law endpoints and atoms", || {
        let det = derive_pi(&DislocationLaw::deterministic_binary(0.5)?)?;
        let atoms = det.atoms().context("expected atoms")?;
        ensure(atoms.len() == 1, "one atom")?;
        close(atoms[0].0, LN_2, 1e-15, "atom position")?;
        let pi = derive_pi(&DislocationLaw::binary_uniform(0.25)?)?;
        close(pi.support().0, -(0.75f64).ln(), 1e-15, "a")?;
        close(pi.support().1, -(0.25f64).ln(), 1e-15, "b")?;
        let eta = stationary_eta(&pi)?;
        close(eta.density(0.0), 1.0 / pi.mu(), 1e-12, "eta(0) = 1/mu")?;
        close(eta.expect(|_| 1.0, 1e-10)?, 1.0, 1e-9, "eta mass")
    });

    s.run("lattice residual is deterministic", || {
        let pi = derive_pi(&DislocationLaw::deterministic_binary(0.5)?)?;
        let r = simulate_residual(&pi, 1.0, &mut stream(seed, Domain::Selftest, 5));
        close(r, 2.0 * LN_2 - 1.0, 1e-15, "residual at t = 1")
    });

    s.run("quadrature sanity", || {
        close(quadrature(|x| x, 0.0, 1.0, 1e-12)?, 0.5, 1e-12, "int x")?;
        close(
            quadrature(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12)?,
            2.0,
            1e-11,
            "int sin",
        )
    });

    s.run("degenerate statistics are flagged", || {
        let r = ks_test(&vec![0.5; 100], |x| x)?;
        ensure(r.statistic >= 0.5, "KS statistic on constant sample")?;
        let a = ad_normality(&vec![1.0; 2000])?;
        ensure(a.degenerate, "AD degenerate flag")
    });

    s.run("pairing and injection counts match brute force (q <= 8)", || {
        // independent enumeration of set partitions, filtered to all-pairs
        fn set_partitions(n: usize) -> Vec<Vec<Vec<u32>>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for mut p in set_partitions(n - 1) {
                let x = (n - 1) as u32;
                for i in 0..p.len() {
                    let mut q = p.clone();
                    q[i].push(x);
                    out.push(q);
                }
                p.push(vec![x]);
                out.push(p);
            }
            out
        }
        fn count_injections(q: u32, len: u32, used: &mut Vec<bool>) -> u128 {
            if len == 0 {
                return 1;
            }
            let mut total = 0;
            for i in 0..q as usize {
                if !used[i] {
                    used[i] = true;
                    total += count_injections(q, len - 1, used);
                    used[i] = false;
                }
            }
            total
        }
        ensure(k1(1)? == 1 && k1(2)? == 4, "K1(1) = 1, K1(2) = 4")?;
        ensure(pairing_count(2)? == 1 && pairing_count(4)? == 3, "|I_2| = 1, |I_4| = 3")?;
        for q in 1..=8u32 {
            let brute: u128 = (1..=q)
                .map(|i| count_injections(q, i, &mut vec![false; q as usize]))
                .sum();
            ensure(k1(q)? == brute, &format!("K1({q})"))?;
            if q % 2 == 0 {
                let brute_pairs = set_partitions(q as usize)
                    .into_iter()
                    .filter(|p| p.iter().all(|b| b.len() == 2))
                    .count() as u128;
                ensure(pairing_count(q)? == brute_pairs, &format!("|I_{q}| count"))?;
                ensure(
                    enumerate_pairings(q)?.len() as u128 == brute_pairs,
                    &format!("|I_{q}| enumeration"),
                )?;
            }
        }
        Ok(())
    });

    s.run("pair of tags: pairing event iff together", || {
        let law = DislocationLaw::binary_uniform(0.25)?;
        for rep in 0..20 {
            let h = simulate_taglines(&law, 2, 3.0, &mut stream(seed, Domain::Selftest, 100 + rep))?;
            let sep = h.separation_level(0, 1)?;
            for t in [0.5, 1.5, 2.5] {
                let together = sep >= t;
                ensure(
                    h.pairing_event(t, None)? == together,
                    "pairing event must mirror togetherness for q = 2",
                )?;
            }
        }
        Ok(())
    });

    s.run("zero function gives zero V estimate", || {
        let law = DislocationLaw::binary_uniform(0.25)?;
        let eta = stationary_eta(&derive_pi(&law)?)?;
        let zero = TestFunction::constant(0.0);
        let est = fragstat_core::limits::estimate_v_pairtag(
            &law,
            &eta,
            &zero,
            &zero,
            1e-2,
            1000,
            Streams::new(seed, Domain::Selftest),
        )?;
        ensure(est.value == 0.0, "V(0, 0) must vanish exactly")
    });

    let mut pass = s.failed == 0;
    let mut duality_json = serde_json::Value::Null;
    if duality {
        let (json, ok) = run_duality(ctx)?;
        duality_json = json;
        pass &= ok;
    }

    let report = serde_json::json!({
        "law": ctx.config.law,
        "seed": seed,
        "version": fragstat_core::version(),
        "checks_passed": s.passed,
        "checks_failed": s.failed,
        "duality": duality_json,
        "pass": pass,
    });
    write_json(&ctx.out_dir.join("selftest_report.json"), &report)?;
    println!(
        "selftest: {} checks passed, {} failed -> {}",
        s.passed,
        s.failed,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

/// Duality of moments: tree-side means of `gamma_T` against tagged-side
/// means of `Phi(f)(B_T)`, plain and injective.
fn run_duality(ctx: &Ctx) -> anyhow::Result<(serde_json::Value, bool)> {
    let section = ctx.config.duality.clone().unwrap_or(crate::config::DualitySection {
        epsilon: 1e-2,
        m: 1e4,
        f: "power:1".into(),
        g: "power:2".into(),
    });
    let law = DislocationLaw::from_family(ctx.config.law.clone())?;
    let eta = stationary_eta(&derive_pi(&law)?)?;
    let f = TestFunction::parse(&section.f, Some(&eta)).map_err(|e| anyhow::anyhow!("{e}"))?;
    let g = TestFunction::parse(&section.g, Some(&eta)).map_err(|e| anyhow::anyhow!("{e}"))?;
    let m = crate::config::parse_count(section.m, "duality.m")?;
    let epsilon = section.epsilon;
    let horizon = -epsilon.ln();

    let tree_streams = Streams::new(ctx.seed, Domain::Tree);
    let tag_streams = Streams::new(ctx.seed, Domain::Tags);

    let mut tree_q1 = Moments::new();
    let mut tree_q2 = Moments::new();
    let mut tag_q1 = Moments::new();
    let mut tag_q2 = Moments::new();
    fragstat_core::harness::chunked_map_reduce(
        m,
        fragstat_core::harness::REPLICATE_CHUNK,
        |range| {
            let mut local = (Moments::new(), Moments::new(), Moments::new(), Moments::new());
            for rep in range {
                let out = simulate_tree(&law, epsilon, &mut tree_streams.stream(rep)).unwrap();
                let meas = EmpiricalMeasure::from_outcome(&out);
                local.0.push(meas.gamma(&f));
                local.1.push(meas.gamma_injective(&[&f, &g]).unwrap());

                let s1 =
                    simulate_tag_summary(&law, 1, horizon, &mut tag_streams.stream(rep)).unwrap();
                local.2.push(f.phi(s1.residuals[0]));
                let s2 = simulate_tag_summary(&law, 2, horizon, &mut tag_streams.stream(m + rep))
                    .unwrap();
                local.3.push(if s2.all_separated {
                    f.phi(s2.residuals[0]) * g.phi(s2.residuals[1])
                } else {
                    0.0
                });
            }
            local
        },
        |local: (Moments, Moments, Moments, Moments)| {
            tree_q1.merge(&local.0);
            tree_q2.merge(&local.1);
            tag_q1.merge(&local.2);
            tag_q2.merge(&local.3);
        },
    );

    let se1 = (tree_q1.se().powi(2) + tag_q1.se().powi(2)).sqrt();
    let z1 = (tree_q1.mean() - tag_q1.mean()).abs() / se1;
    let se2 = (tree_q2.se().powi(2) + tag_q2.se().powi(2)).sqrt();
    let z2 = (tree_q2.mean() - tag_q2.mean()).abs() / se2;
    let ok = z1 <= 3.0 && z2 <= 3.0;
    println!(
        "duality: q=1 tree {:.6} vs tags {:.6} (z {:.2}); q=2 injective {:.6} vs {:.6} (z {:.2}) -> {}",
        tree_q1.mean(),
        tag_q1.mean(),
        z1,
        tree_q2.mean(),
        tag_q2.mean(),
        z2,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok((
        serde_json::json!({
            "epsilon": epsilon,
            "m": m,
            "f": f.id(),
            "g": g.id(),
            "tree_q1_mean": tree_q1.mean(),
            "tree_q1_se": tree_q1.se(),
            "tags_q1_mean": tag_q1.mean(),
            "tags_q1_se": tag_q1.se(),
            "z_q1": z1,
            "tree_q2_mean": tree_q2.mean(),
            "tree_q2_se": tree_q2.se(),
            "tags_q2_mean": tag_q2.mean(),
            "tags_q2_se": tag_q2.se(),
            "z_q2": z2,
            "pass": ok,
        }),
        ok,
    ))
}
