//! Full fragmentation trees and the frozen population below `epsilon`.
//!
//! The tree is expanded depth-first with an explicit stack: a node of size
//! `s >= epsilon` splits via one dislocation draw, children below `epsilon`
//! are emitted as frozen. At `epsilon = 1e-6` a tree has on the order of a
//! million leaves, so callers that only need functionals of the frozen sizes
//! stream them through [`visit_frozen`] instead of collecting.

use crate::dislocation::DislocationLaw;
use crate::harness::stats::KahanSum;
use crate::rng::Stream;
use crate::{Error, Result};

/// One frozen fragment: first observation below `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenFragment {
    pub size: f64,
    pub parent_size: f64,
    /// Child indices from the root; populated only on request.
    pub path: Option<Box<[u32]>>,
}

/// The frozen population of one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentationOutcome {
    pub epsilon: f64,
    /// `-log(epsilon)`.
    pub horizon: f64,
    pub fragments: Vec<FrozenFragment>,
    /// Total nodes explored (root, internal and frozen).
    pub node_count: u64,
}

/// Summary of a frozen population.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OutcomeStats {
    pub count: usize,
    pub total_mass: f64,
    pub min_size: f64,
    pub max_size: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, 1), got {epsilon} (the root has no ancestor, so a frozen root is undefined)"
        )));
    }
    Ok(())
}

/// Streams `(size, parent_size)` of every frozen fragment in deterministic
/// depth-first order; returns the explored node count.
pub fn visit_frozen(
    law: &DislocationLaw,
    epsilon: f64,
    rng: &mut Stream,
    mut visitor: impl FnMut(f64, f64),
) -> Result<u64> {
    check_epsilon(epsilon)?;
    let mut stack: Vec<f64> = vec![1.0];
    let mut nodes: u64 = 1;
    while let Some(size) = stack.pop() {
        let ratios = law.sample_ratios(rng);
        // push right-to-left so children are visited left-to-right
        let rs = ratios.ratios();
        nodes += rs.len() as u64;
        for &r in rs.iter().rev() {
            let child = size * r;
            if child < epsilon {
                visitor(child, size);
            } else {
                stack.push(child);
            }
        }
    }
    Ok(nodes)
}

/// Simulates one tree and collects frozen sizes (no paths).
pub fn simulate_tree(
    law: &DislocationLaw,
    epsilon: f64,
    rng: &mut Stream,
) -> Result<FragmentationOutcome> {
    let mut fragments = Vec::new();
    let node_count = visit_frozen(law, epsilon, rng, |size, parent_size| {
        fragments.push(FrozenFragment {
            size,
            parent_size,
            path: None,
        });
    })?;
    Ok(FragmentationOutcome {
        epsilon,
        horizon: -epsilon.ln(),
        fragments,
        node_count,
    })
}

/// Simulates one tree and collects frozen fragments together with their
/// genealogical paths. Consumes the stream identically to [`simulate_tree`].
pub fn simulate_tree_with_paths(
    law: &DislocationLaw,
    epsilon: f64,
    rng: &mut Stream,
) -> Result<FragmentationOutcome> {
    check_epsilon(epsilon)?;
    let mut stack: Vec<(f64, Vec<u32>)> = vec![(1.0, Vec::new())];
    let mut fragments = Vec::new();
    let mut nodes: u64 = 1;
    while let Some((size, path)) = stack.pop() {
        let ratios = law.sample_ratios(rng);
        let rs = ratios.ratios();
        nodes += rs.len() as u64;
        for i in (0..rs.len()).rev() {
            let child = size * rs[i];
            let mut child_path = path.clone();
            child_path.push(i as u32);
            if child < epsilon {
                fragments.push(FrozenFragment {
                    size: child,
                    parent_size: size,
                    path: Some(child_path.into_boxed_slice()),
                });
            } else {
                stack.push((child, child_path));
            }
        }
    }
    Ok(FragmentationOutcome {
        epsilon,
        horizon: -epsilon.ln(),
        fragments,
        node_count: nodes,
    })
}

/// Totals over a frozen population; the mass is compensated-summed so the
/// conservation check can hold its 1e-12 tolerance on large trees.
pub fn outcome_stats(outcome: &FragmentationOutcome) -> OutcomeStats {
    let mut mass = KahanSum::default();
    let mut min_size = f64::INFINITY;
    let mut max_size: f64 = 0.0;
    for f in &outcome.fragments {
        mass.add(f.size);
        min_size = min_size.min(f.size);
        max_size = max_size.max(f.size);
    }
    OutcomeStats {
        count: outcome.fragments.len(),
        total_mass: mass.value(),
        min_size,
        max_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn deterministic_half_law_freezes_four_quarters() {
        let law = DislocationLaw::deterministic_binary(0.5).unwrap();
        let mut rng = stream(1, Domain::Tree, 0);
        let out = simulate_tree(&law, 0.3, &mut rng).unwrap();
        assert_eq!(out.fragments.len(), 4);
        for f in &out.fragments {
            assert_eq!(f.size, 0.25);
            assert_eq!(f.parent_size, 0.5);
        }
        let stats = outcome_stats(&out);
        assert_eq!(stats.count, 4);
        assert!((stats.total_mass - 1.0).abs() <= 1e-12);
        assert_eq!(stats.min_size, 0.25);
        assert_eq!(stats.max_size, 0.25);
    }

    #[test]
    fn mass_conservation_and_size_window() {
        let law = DislocationLaw::binary_uniform(0.25).unwrap();
        let epsilon = 1e-3;
        for rep in 0..100 {
            let mut rng = stream(11, Domain::Tree, rep);
            let out = simulate_tree(&law, epsilon, &mut rng).unwrap();
            let stats = outcome_stats(&out);
            assert!(
                (stats.total_mass - 1.0).abs() <= 1e-12,
                "mass {} at rep {rep}",
                stats.total_mass
            );
            assert!(stats.min_size >= 0.25 * epsilon);
            assert!(stats.max_size < epsilon);
            let bound = (1.0 / (epsilon * 0.25)).ceil() as usize;
            assert!(stats.count <= bound);
        }
    }

    #[test]
    fn hand_built_outcome_stats() {
        let out = FragmentationOutcome {
            epsilon: 0.5,
            horizon: -(0.5f64).ln(),
            fragments: [0.3, 0.3, 0.4]
                .iter()
                .map(|&s| FrozenFragment {
                    size: s,
                    parent_size: 1.0,
                    path: None,
                })
                .collect(),
            node_count: 4,
        };
        let stats = outcome_stats(&out);
        assert_eq!(stats.count, 3);
        assert!((stats.total_mass - 1.0).abs() <= 1e-12);
        assert_eq!(stats.min_size, 0.3);
        assert_eq!(stats.max_size, 0.4);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let law = DislocationLaw::binary_uniform(0.25).unwrap();
        let mut rng = stream(1, Domain::Tree, 0);
        assert!(simulate_tree(&law, 1.0, &mut rng).is_err());
        assert!(simulate_tree(&law, 0.0, &mut rng).is_err());
    }

    #[test]
    fn identical_seed_gives_identical_outcome() {
        let law = DislocationLaw::binary_uniform(0.25).unwrap();
        let a = simulate_tree(&law, 1e-3, &mut stream(42, Domain::Tree, 5)).unwrap();
        let b = simulate_tree(&law, 1e-3, &mut stream(42, Domain::Tree, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn path_mode_consumes_stream_identically() {
        let law = DislocationLaw::binary_uniform(0.25).unwrap();
        let plain = simulate_tree(&law, 0.01, &mut stream(7, Domain::Tree, 3)).unwrap();
        let pathy = simulate_tree_with_paths(&law, 0.01, &mut stream(7, Domain::Tree, 3)).unwrap();
        assert_eq!(plain.fragments.len(), pathy.fragments.len());
        for (p, q) in plain.fragments.iter().zip(&pathy.fragments) {
            assert_eq!(p.size, q.size);
            assert_eq!(p.parent_size, q.parent_size);
        }
        // path product reproduces the size
        for f in &pathy.fragments {
            assert!(f.path.is_some());
        }
    }

    #[test]
    fn mean_count_matches_recursive_oracle() {
        // independent straightforward recursive implementation
        fn recurse(law: &DislocationLaw, size: f64, epsilon: f64, rng: &mut Stream) -> u64 {
            let ratios = law.sample_ratios(rng);
            let mut count = 0;
            for &r in ratios.ratios() {
                let child = size * r;
                if child < epsilon {
                    count += 1;
                } else {
                    count += recurse(law, child, epsilon, rng);
                }
            }
            count
        }

        let law = DislocationLaw::binary_uniform(0.25).unwrap();
        let epsilon = 0.01;
        let n = 1000u64;
        let mut m1 = crate::harness::stats::Moments::new();
        let mut m2 = crate::harness::stats::Moments::new();
        for rep in 0..n {
            let out = simulate_tree(&law, epsilon, &mut stream(3, Domain::Tree, rep)).unwrap();
            m1.push(out.fragments.len() as f64);
            // disjoint replicate ids for the oracle's streams
            let mut rng = stream(3, Domain::Tree, 500_000 + rep);
            m2.push(recurse(&law, 1.0, epsilon, &mut rng) as f64);
        }
        let se = (m1.se().powi(2) + m2.se().powi(2)).sqrt();
        assert!(
            (m1.mean() - m2.mean()).abs() <= 3.0 * se,
            "stack {} vs oracle {} (se {se})",
            m1.mean(),
            m2.mean()
        );
    }
}
