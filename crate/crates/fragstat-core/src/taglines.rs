//! Joint tagged fragments as a partition-valued renewal system.
//!
//! Instead of building the whole tree, only the fragments carrying at least
//! one of `q` tags are simulated. The active groups form a partition of the
//! tags; the group with the smallest level (`-log` size) splits next: one
//! dislocation draw plus one uniform per tag routes every tag size-biasedly
//! to a child. Groups whose level exceeds the horizon `T = -log(epsilon)`
//! freeze. Per tag, the visited levels are a renewal process with waiting
//! law pi, stopped at its first crossing of `T`.
//!
//! Two drivers share one core so they consume a random stream identically:
//! [`simulate_taglines`] records the full history, [`simulate_tag_summary`]
//! keeps only the frozen residuals and the separation flag (what the pair
//! estimators need, allocation-free).

use crate::dislocation::{size_biased_pick, DislocationLaw};
use crate::rng::Stream;
use crate::{Error, Result};
use rand::Rng;

const MAX_TAGS: u32 = 32;

/// A group of tags riding one fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct TagGroup {
    pub tags: Vec<u32>,
    /// `-log` of the fragment size.
    pub level: f64,
    pub frozen: bool,
}

/// One split of a multi-tag group.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEvent {
    /// Level of the parent fragment at the split.
    pub level: f64,
    pub parent_tags: Vec<u32>,
    pub child_groups: Vec<Vec<u32>>,
}

/// Straddling partition of the tags at some interior level.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub groups: Vec<Vec<u32>>,
    /// Number of singleton groups (`k`).
    pub singleton_count: usize,
    /// `q` minus the number of groups (`l`).
    pub merge_count: usize,
}

/// Full trajectory of `q` tagged lines up to their first crossing of the
/// horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TagHistory {
    pub q: u32,
    /// `T = -log(epsilon)`.
    pub horizon: f64,
    /// Per tag: `0 = S_0 < S_1 < ...` up to the first epoch beyond the
    /// horizon. Queries past the horizon are errors, not extrapolations.
    pub epochs: Vec<Vec<f64>>,
    /// Splits of multi-tag groups, in level order.
    pub partition_events: Vec<PartitionEvent>,
    /// Frozen groups: the partition of the tags at freezing, with levels.
    pub final_groups: Vec<TagGroup>,
    /// Pairwise separation levels (level of the parent split at which the
    /// pair chose different children), `+inf` when frozen together.
    /// Flattened upper triangle, see [`TagHistory::pair_index`].
    pub separation_levels: Vec<f64>,
}

/// Lean output: what the moment estimators consume.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSummary {
    /// `B_T` per tag.
    pub residuals: Vec<f64>,
    /// Every tag frozen on its own fragment.
    pub all_separated: bool,
    /// Renewal epochs seen per tag (including `S_0 = 0`).
    pub n_epochs: Vec<u32>,
}

trait Recorder {
    /// `children` lists `(level, tag mask)` for non-empty children in child
    /// order; levels may exceed the horizon (those freeze right after).
    fn split(&mut self, parent_level: f64, parent_mask: u32, children: &[(f64, u32)]);
    fn freeze(&mut self, level: f64, mask: u32);
}

fn mask_tags(mask: u32) -> Vec<u32> {
    (0..MAX_TAGS).filter(|i| mask & (1 << i) != 0).collect()
}

fn simulate_core<R: Recorder>(
    law: &DislocationLaw,
    q: u32,
    horizon: f64,
    rng: &mut Stream,
    rec: &mut R,
) -> Result<()> {
    if q == 0 || q > MAX_TAGS {
        return Err(Error::invalid(format!("q must lie in 1..={MAX_TAGS}, got {q}")));
    }
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let full: u32 = if q == 32 { u32::MAX } else { (1 << q) - 1 };
    let mut active: Vec<(f64, u32)> = vec![(0.0, full)];
    let mut children: Vec<(f64, u32)> = Vec::with_capacity(4);
    while !active.is_empty() {
        // smallest level first; ties go to the earliest-inserted group
        let mut mi = 0;
        for i in 1..active.len() {
            if active[i].0 < active[mi].0 {
                mi = i;
            }
        }
        let (level, mask) = active.remove(mi);
        let ratios = law.sample_ratios(rng);
        let mut child_masks = [0u32; 8];
        debug_assert!(ratios.len() <= 8);
        for tag in 0..q {
            if mask & (1 << tag) != 0 {
                let u = rng.random::<f64>();
                let (idx, _) = size_biased_pick(&ratios, u)?;
                child_masks[idx] |= 1 << tag;
            }
        }
        children.clear();
        for (idx, &r) in ratios.ratios().iter().enumerate() {
            if child_masks[idx] != 0 {
                children.push((level - r.ln(), child_masks[idx]));
            }
        }
        rec.split(level, mask, &children);
        for &(child_level, child_mask) in &children {
            if child_level > horizon {
                rec.freeze(child_level, child_mask);
            } else {
                active.push((child_level, child_mask));
            }
        }
    }
    Ok(())
}

struct LeanRecorder {
    horizon: f64,
    residuals: Vec<f64>,
    n_epochs: Vec<u32>,
    all_separated: bool,
}

impl Recorder for LeanRecorder {
    fn split(&mut self, _parent_level: f64, _parent_mask: u32, children: &[(f64, u32)]) {
        for &(_, mask) in children {
            let mut m = mask;
            while m != 0 {
                let tag = m.trailing_zeros() as usize;
                self.n_epochs[tag] += 1;
                m &= m - 1;
            }
        }
    }

    fn freeze(&mut self, level: f64, mask: u32) {
        if mask.count_ones() > 1 {
            self.all_separated = false;
        }
        let mut m = mask;
        while m != 0 {
            let tag = m.trailing_zeros() as usize;
            self.residuals[tag] = level - self.horizon;
            m &= m - 1;
        }
    }
}

struct FullRecorder {
    q: u32,
    epochs: Vec<Vec<f64>>,
    events: Vec<PartitionEvent>,
    final_groups: Vec<TagGroup>,
    separation_levels: Vec<f64>,
}

impl Recorder for FullRecorder {
    fn split(&mut self, parent_level: f64, parent_mask: u32, children: &[(f64, u32)]) {
        for &(level, mask) in children {
            let mut m = mask;
            while m != 0 {
                let tag = m.trailing_zeros() as usize;
                self.epochs[tag].push(level);
                m &= m - 1;
            }
        }
        if parent_mask.count_ones() >= 2 {
            self.events.push(PartitionEvent {
                level: parent_level,
                parent_tags: mask_tags(parent_mask),
                child_groups: children.iter().map(|&(_, m)| mask_tags(m)).collect(),
            });
            // pairs landing in different children separate at this level
            for (ai, &(_, a)) in children.iter().enumerate() {
                for &(_, b) in children.iter().skip(ai + 1) {
                    for i in mask_tags(a) {
                        for j in mask_tags(b) {
                            let idx = TagHistory::pair_index(i.min(j), i.max(j), self.q);
                            self.separation_levels[idx] = parent_level;
                        }
                    }
                }
            }
        }
    }

    fn freeze(&mut self, level: f64, mask: u32) {
        self.final_groups.push(TagGroup {
            tags: mask_tags(mask),
            level,
            frozen: true,
        });
    }
}

/// Simulates `q` tagged lines jointly, recording the full history.
pub fn simulate_taglines(
    law: &DislocationLaw,
    q: u32,
    horizon: f64,
    rng: &mut Stream,
) -> Result<TagHistory> {
    let pairs = q as usize * (q as usize).saturating_sub(1) / 2;
    let mut rec = FullRecorder {
        q,
        epochs: vec![vec![0.0]; q as usize],
        events: Vec::new(),
        final_groups: Vec::new(),
        separation_levels: vec![f64::INFINITY; pairs],
    };
    simulate_core(law, q, horizon, rng, &mut rec)?;
    rec.final_groups.sort_by_key(|g| g.tags[0]);
    Ok(TagHistory {
        q,
        horizon,
        epochs: rec.epochs,
        partition_events: rec.events,
        final_groups: rec.final_groups,
        separation_levels: rec.separation_levels,
    })
}

/// Lean variant consuming the stream identically to [`simulate_taglines`].
pub fn simulate_tag_summary(
    law: &DislocationLaw,
    q: u32,
    horizon: f64,
    rng: &mut Stream,
) -> Result<TagSummary> {
    let mut rec = LeanRecorder {
        horizon,
        residuals: vec![0.0; q as usize],
        n_epochs: vec![1; q as usize],
        all_separated: true,
    };
    simulate_core(law, q, horizon, rng, &mut rec)?;
    Ok(TagSummary {
        residuals: rec.residuals,
        all_separated: rec.all_separated,
        n_epochs: rec.n_epochs,
    })
}

impl TagHistory {
    /// Index of pair `(i, j)`, `i < j`, in the flattened upper triangle.
    pub fn pair_index(i: u32, j: u32, q: u32) -> usize {
        debug_assert!(i < j && j < q);
        let (i, j, q) = (i as usize, j as usize, q as usize);
        i * (2 * q - i - 1) / 2 + (j - i - 1)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::invalid(format!(
                "t = {t} outside the simulated window [0, {}] (epochs beyond the first \
                 crossing are not simulated)",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Residual lifetimes `B_t`: first epoch strictly past `t`, minus `t`.
    pub fn residuals_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok(self
            .epochs
            .iter()
            .map(|es| es[es.partition_point(|&e| e <= t)] - t)
            .collect())
    }

    /// `B_T` per tag.
    pub fn residuals_at_horizon(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .map(|es| es.last().unwrap() - self.horizon)
            .collect()
    }

    /// Separation level of a pair: the level of the parent split at which
    /// the two tags chose different children (`+inf` if frozen together).
    pub fn separation_level(&self, i: u32, j: u32) -> Result<f64> {
        if i == j || i >= self.q || j >= self.q {
            return Err(Error::invalid("separation_level wants distinct tags below q"));
        }
        Ok(self.separation_levels[Self::pair_index(i.min(j), i.max(j), self.q)])
    }

    /// Partition of the tags into straddling fragments at level `t`.
    ///
    /// Two tags share a group iff their separation level is at least `t`
    /// (non-strict, so at `t = 0` all tags still sit on the root).
    pub fn partition_at(&self, t: f64) -> Result<Partition> {
        self.check_time(t)?;
        let q = self.q as usize;
        let mut parent: Vec<usize> = (0..q).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let r = find(parent, parent[x]);
                parent[x] = r;
            }
            parent[x]
        }
        for i in 0..self.q {
            for j in (i + 1)..self.q {
                if self.separation_levels[Self::pair_index(i, j, self.q)] >= t {
                    let (a, b) = (
                        find(&mut parent, i as usize),
                        find(&mut parent, j as usize),
                    );
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups_by_root: Vec<Vec<u32>> = vec![Vec::new(); q];
        for tag in 0..q {
            let r = find(&mut parent, tag);
            groups_by_root[r].push(tag as u32);
        }
        let groups: Vec<Vec<u32>> = groups_by_root.into_iter().filter(|g| !g.is_empty()).collect();
        let singleton_count = groups.iter().filter(|g| g.len() == 1).count();
        let merge_count = q - groups.len();
        Ok(Partition {
            groups,
            singleton_count,
            merge_count,
        })
    }

    /// True iff every tag froze on its own fragment.
    pub fn all_separated(&self) -> bool {
        self.final_groups.iter().all(|g| g.tags.len() == 1)
    }

    /// Whether the straddling partition at `t` is exactly the given pairing
    /// (or any perfect pairing when omitted; then `q` must be even).
    pub fn pairing_event(&self, t: f64, pairing: Option<&[(u32, u32)]>) -> Result<bool> {
        let partition = self.partition_at(t)?;
        match pairing {
            None => {
                if self.q % 2 != 0 {
                    return Err(Error::invalid(
                        "pairing event without an explicit pairing needs even q",
                    ));
                }
                Ok(partition.groups.iter().all(|g| g.len() == 2))
            }
            Some(pairs) => {
                let mut seen = vec![false; self.q as usize];
                for &(a, b) in pairs {
                    if a == b || a >= self.q || b >= self.q {
                        return Err(Error::invalid("pairing contains an invalid pair"));
                    }
                    for t in [a, b] {
                        if std::mem::replace(&mut seen[t as usize], true) {
                            return Err(Error::invalid("pairing repeats a tag"));
                        }
                    }
                }
                if seen.iter().any(|&s| !s) {
                    return Err(Error::invalid("pairing must cover every tag"));
                }
                let wanted: std::collections::BTreeSet<Vec<u32>> = pairs
                    .iter()
                    .map(|&(a, b)| vec![a.min(b), a.max(b)])
                    .collect();
                let got: std::collections::BTreeSet<Vec<u32>> =
                    partition.groups.iter().cloned().collect();
                Ok(wanted == got)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::{ks_test, Moments};
    use crate::renewal::{derive_pi, stationary_eta};
    use crate::rng::{stream, Domain};

    fn uniform_law() -> DislocationLaw {
        DislocationLaw::binary_uniform(0.25).unwrap()
    }

    #[test]
    fn lean_and_full_consume_streams_identically() {
        let law = uniform_law();
        for rep in 0..200 {
            let full =
                simulate_taglines(&law, 3, 5.0, &mut stream(40, Domain::Tags, rep)).unwrap();
            let lean =
                simulate_tag_summary(&law, 3, 5.0, &mut stream(40, Domain::Tags, rep)).unwrap();
            assert_eq!(full.residuals_at_horizon(), lean.residuals);
            assert_eq!(full.all_separated(), lean.all_separated);
            let counts: Vec<u32> = full.epochs.iter().map(|e| e.len() as u32).collect();
            assert_eq!(counts, lean.n_epochs);
        }
    }

    #[test]
    fn single_tag_increments_follow_pi() {
        let law = uniform_law();
        let pi = derive_pi(&law).unwrap();
        let mut increments = Vec::new();
        for rep in 0..60 {
            let h = simulate_taglines(&law, 1, 1300.0, &mut stream(41, Domain::Tags, rep)).unwrap();
            increments.extend(h.epochs[0].windows(2).map(|w| w[1] - w[0]));
        }
        assert!(increments.len() > 100_000);
        let r = ks_test(&increments, |x| pi.cdf(x)).unwrap();
        assert!(r.p_value > 0.01, "p {}", r.p_value);
    }

    #[test]
    fn residual_bounds_and_first_epoch() {
        let law = uniform_law();
        let (_, b) = law.support_log_ratio();
        let h = simulate_taglines(&law, 2, 3.0, &mut stream(42, Domain::Tags, 0)).unwrap();
        let at0 = h.residuals_at(0.0).unwrap();
        for (i, &r) in at0.iter().enumerate() {
            assert_eq!(r, h.epochs[i][1]);
        }
        for &r in &h.residuals_at_horizon() {
            assert!(r > 0.0 && r <= b);
        }
        assert!(h.residuals_at(3.5).is_err());
        assert!(h.residuals_at(-0.1).is_err());
    }

    #[test]
    fn residual_interpolation_arithmetic() {
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
        let r = h.residuals_at(1.0).unwrap();
        assert!((r[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn deterministic_half_pair_separates_evenly() {
        // T below log 2 so freezing happens after exactly one split
        let law = DislocationLaw::deterministic_binary(0.5).unwrap();
        let t = 0.5;
        let mut hits = 0u64;
        let n = 100_000u64;
        for rep in 0..n {
            let s = simulate_tag_summary(&law, 2, t, &mut stream(43, Domain::Tags, rep)).unwrap();
            if !s.all_separated {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn pair_cohesion_matches_quadrature() {
        // P(together after one split) = E[V^2 + (1-V)^2] = 13/24 for c = 1/4
        let expected = crate::harness::quadrature(
            |v: f64| (v * v + (1.0 - v) * (1.0 - v)) / 0.5,
            0.25,
            0.75,
            1e-12,
        )
        .unwrap();
        assert!((expected - 13.0 / 24.0).abs() < 1e-12);

        let law = uniform_law();
        // horizon below a = -log(0.75): every child of the root freezes
        let t = 0.2;
        let mut together = 0u64;
        let n = 100_000u64;
        for rep in 0..n {
            let s = simulate_tag_summary(&law, 2, t, &mut stream(44, Domain::Tags, rep)).unwrap();
            if !s.all_separated {
                together += 1;
            }
        }
        let freq = together as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((freq - expected).abs() <= 3.0 * se, "freq {freq} vs {expected}");
    }

    #[test]
    fn never_separated_probability_on_the_lattice() {
        // DeterministicBinary(0.5): separation probability 1/2 per split,
        // J = floor(T/log2) + 1 splits before freezing; P(not separated)
        // = (1/2)^J. At T = 1.0, J = 2.
        let law = DislocationLaw::deterministic_binary(0.5).unwrap();
        let mut together = 0u64;
        let n = 100_000u64;
        for rep in 0..n {
            let s = simulate_tag_summary(&law, 2, 1.0, &mut stream(45, Domain::Tags, rep)).unwrap();
            if !s.all_separated {
                together += 1;
            }
        }
        let freq = together as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((freq - 0.25).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn figure_style_partition_classification() {
        // q = 4; tag 3 leaves at the root, tag 2 leaves {0,1} at level 0.5;
        // at t = 1 the straddling groups are {0,1}, {2}, {3}: event C_{2,1}.
        let q = 4;
        let mut sep = vec![f64::INFINITY; 6];
        sep[TagHistory::pair_index(0, 3, q)] = 0.0;
        sep[TagHistory::pair_index(1, 3, q)] = 0.0;
        sep[TagHistory::pair_index(2, 3, q)] = 0.0;
        sep[TagHistory::pair_index(0, 2, q)] = 0.5;
        sep[TagHistory::pair_index(1, 2, q)] = 0.5;
        sep[TagHistory::pair_index(0, 1, q)] = 1.3;
        let h = TagHistory {
            q,
            horizon: 2.0,
            epochs: vec![
                vec![0.0, 0.5, 1.3, 2.1],
                vec![0.0, 0.5, 1.3, 2.2],
                vec![0.0, 0.5, 1.2, 2.05],
                vec![0.0, 0.6, 1.5, 2.4],
            ],
            partition_events: vec![],
            final_groups: [(0u32, 2.1), (1, 2.2), (2, 2.05), (3, 2.4)]
                .iter()
                .map(|&(t, level)| TagGroup {
                    tags: vec![t],
                    level,
                    frozen: true,
                })
                .collect(),
            separation_levels: sep,
        };
        let p = h.partition_at(1.0).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1], vec![2], vec![3]]);
        assert_eq!(p.singleton_count, 2);
        assert_eq!(p.merge_count, 1);

        // t = 0: single group (all tags on the root)
        let p0 = h.partition_at(0.0).unwrap();
        assert_eq!(p0.groups, vec![vec![0, 1, 2, 3]]);
        assert_eq!(p0.singleton_count, 0);
        assert_eq!(p0.merge_count, 3);

        // t past every separation: all singletons
        let p2 = h.partition_at(1.9).unwrap();
        assert_eq!(p2.groups.len(), 4);
        assert_eq!(p2.singleton_count, 4);
        assert_eq!(p2.merge_count, 0);

        // not a perfect pairing at t = 1 ({2} and {3} are singletons)
        assert!(!h.pairing_event(1.0, Some(&[(0, 1), (2, 3)])).unwrap());
        let p13 = h.partition_at(1.3).unwrap();
        assert_eq!(p13.groups[0], vec![0, 1]);
    }

    #[test]
    fn pairing_event_examples() {
        // two tags: pairing event iff still together
        let law = uniform_law();
        let h = simulate_taglines(&law, 2, 4.0, &mut stream(46, Domain::Tags, 1)).unwrap();
        let sep = h.separation_level(0, 1).unwrap();
        if sep.is_finite() && sep > 0.5 {
            assert!(h.pairing_event(0.4, None).unwrap());
        }
        // q = 4 canonical pairing at t = 0 is false (single group of 4)
        let h4 = simulate_taglines(&law, 4, 4.0, &mut stream(46, Domain::Tags, 2)).unwrap();
        assert!(!h4.pairing_event(0.0, Some(&[(0, 1), (2, 3)])).unwrap());
        // odd q without explicit pairing is an error
        let h3 = simulate_taglines(&law, 3, 4.0, &mut stream(46, Domain::Tags, 3)).unwrap();
        assert!(h3.pairing_event(1.0, None).is_err());
        // malformed pairings are errors
        assert!(h4.pairing_event(1.0, Some(&[(0, 0), (2, 3)])).is_err());
        assert!(h4.pairing_event(1.0, Some(&[(0, 1), (1, 2)])).is_err());
    }

    #[test]
    fn group_count_is_nondecreasing() {
        let law = uniform_law();
        for rep in 0..50 {
            let h = simulate_taglines(&law, 5, 6.0, &mut stream(47, Domain::Tags, rep)).unwrap();
            let mut last = 0usize;
            for i in 0..=60 {
                let t = 6.0 * i as f64 / 60.0;
                let p = h.partition_at(t).unwrap();
                assert!(
                    p.groups.len() >= last,
                    "groups shrank at t = {t} in rep {rep}"
                );
                last = p.groups.len();
            }
        }
    }

    #[test]
    fn exchangeability_of_joint_residuals() {
        // paired test: E[f(B1) g(B2) - g(B1) f(B2)] = 0
        let law = uniform_law();
        let mut diff = Moments::new();
        for rep in 0..50_000 {
            let s = simulate_tag_summary(&law, 2, 3.0, &mut stream(48, Domain::Tags, rep)).unwrap();
            let (b1, b2) = (s.residuals[0], s.residuals[1]);
            let f = |y: f64| (-y).exp();
            let g = |y: f64| y;
            diff.push(f(b1) * g(b2) - f(b2) * g(b1));
        }
        assert!(
            diff.mean().abs() <= 3.0 * diff.se(),
            "mean {} se {}",
            diff.mean(),
            diff.se()
        );
    }

    #[test]
    fn single_tag_residual_matches_renewal_simulator_distribution() {
        let law = uniform_law();
        let pi = derive_pi(&law).unwrap();
        let t = 4.0;
        let a: Vec<f64> = (0..40_000)
            .map(|rep| {
                simulate_tag_summary(&law, 1, t, &mut stream(49, Domain::Tags, rep))
                    .unwrap()
                    .residuals[0]
            })
            .collect();
        let b: Vec<f64> = (0..40_000)
            .map(|rep| {
                crate::renewal::simulate_residual(&pi, t, &mut stream(50, Domain::Renewal, rep))
            })
            .collect();
        let r = crate::harness::stats::ks_test_two_sample(&a, &b).unwrap();
        assert!(r.p_value > 0.01, "p {}", r.p_value);
    }

    #[test]
    fn horizon_residual_converges_to_eta() {
        let law = uniform_law();
        let eta = stationary_eta(&derive_pi(&law).unwrap()).unwrap();
        let samples: Vec<f64> = (0..50_000)
            .map(|rep| {
                simulate_tag_summary(&law, 1, 30.0, &mut stream(51, Domain::Tags, rep))
                    .unwrap()
                    .residuals[0]
            })
            .collect();
        let r = ks_test(&samples, |x| eta.cdf(x)).unwrap();
        assert!(r.p_value > 0.01, "p {}", r.p_value);
    }

    #[test]
    fn rejects_bad_arguments() {
        let law = uniform_law();
        let mut rng = stream(52, Domain::Tags, 0);
        assert!(simulate_taglines(&law, 0, 1.0, &mut rng).is_err());
        assert!(simulate_taglines(&law, 2, 0.0, &mut rng).is_err());
        assert!(simulate_taglines(&law, 33, 1.0, &mut rng).is_err());
    }
}
