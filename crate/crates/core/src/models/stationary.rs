//! Stationary law of a finite Markov chain.
//!
//! When the chain has a single closed communicating class the stationary law is
//! unique and is obtained by a dense solve of `pi (M - I) = 0, sum(pi) = 1`
//! restricted to that class. With several closed classes we return the limit,
//! as `eps -> 0`, of the stationary law of `(1 - eps) M + eps * uniform`. That
//! limit is the mixture of the per-class laws weighted by the probability of
//! being absorbed into each class from a uniform start.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

pub(crate) struct Stationary {
    pub law: Vec<f64>,
    pub non_unique: bool,
}

pub(crate) fn stationary_law(trans: &[f64], k: usize) -> Stationary {
    let mut graph = DiGraph::<(), ()>::with_capacity(k, k * k);
    let nodes: Vec<_> = (0..k).map(|_| graph.add_node(())).collect();
    for i in 0..k {
        for j in 0..k {
            if trans[i * k + j] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut class_of = vec![usize::MAX; k];
    let sccs = tarjan_scc(&graph);
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            class_of[node.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = Vec::new();
    for scc in &sccs {
        let members: Vec<usize> = scc.iter().map(|n| n.index()).collect();
        let c = class_of[members[0]];
        let leaves = members
            .iter()
            .any(|&i| (0..k).any(|j| trans[i * k + j] > 0.0 && class_of[j] != c));
        if !leaves {
            let mut members = members;
            members.sort_unstable();
            closed.push(members);
        }
    }
    closed.sort();

    let mut law = vec![0.0; k];
    if closed.len() == 1 {
        for (&i, p) in closed[0].iter().zip(class_law(trans, k, &closed[0])) {
            law[i] = p;
        }
        return Stationary {
            law,
            non_unique: false,
        };
    }

    let weights = absorption_weights(trans, k, &closed);
    for (class, w) in closed.iter().zip(weights) {
        for (&i, p) in class.iter().zip(class_law(trans, k, class)) {
            law[i] += w * p;
        }
    }
    let total: f64 = law.iter().sum();
    law.iter_mut().for_each(|p| *p /= total);
    Stationary {
        law,
        non_unique: true,
    }
}

/// Stationary law of the chain restricted to a closed class.
fn class_law(trans: &[f64], k: usize, class: &[usize]) -> Vec<f64> {
    let c = class.len();
    if c == 1 {
        return vec![1.0];
    }
    // rows: (M_CC^T - I), with the last equation replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(c, c);
    for (r, &j) in class.iter().enumerate() {
        for (s, &i) in class.iter().enumerate() {
            a[(r, s)] = trans[i * k + j] - if r == s { 1.0 } else { 0.0 };
        }
    }
    for s in 0..c {
        a[(c - 1, s)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(c);
    b[c - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .expect("a closed communicating class has a unique stationary law");
    let mut law: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = law.iter().sum();
    law.iter_mut().for_each(|p| *p /= total);
    law
}

/// Probability of absorption into each closed class, averaged over a uniform
/// starting state.
fn absorption_weights(trans: &[f64], k: usize, closed: &[Vec<usize>]) -> Vec<f64> {
    let mut owner = vec![None; k];
    for (c, class) in closed.iter().enumerate() {
        for &i in class {
            owner[i] = Some(c);
        }
    }
    let transient: Vec<usize> = (0..k).filter(|&i| owner[i].is_none()).collect();
    let mut weights: Vec<f64> = closed.iter().map(|c| c.len() as f64).collect();
    if !transient.is_empty() {
        let t = transient.len();
        let mut a = DMatrix::<f64>::identity(t, t);
        for (r, &i) in transient.iter().enumerate() {
            for (s, &j) in transient.iter().enumerate() {
                a[(r, s)] -= trans[i * k + j];
            }
        }
        let mut rhs = DMatrix::<f64>::zeros(t, closed.len());
        for (r, &i) in transient.iter().enumerate() {
            for j in 0..k {
                if let Some(c) = owner[j] {
                    rhs[(r, c)] += trans[i * k + j];
                }
            }
        }
        let h = a
            .lu()
            .solve(&rhs)
            .expect("transient block of a finite chain is invertible");
        for c in 0..closed.len() {
            weights[c] += (0..t).map(|r| h[(r, c)]).sum::<f64>();
        }
    }
    weights.iter().map(|w| w / k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_stationary(trans: &[f64], k: usize, law: &[f64]) {
        for j in 0..k {
            let v: f64 = (0..k).map(|i| law[i] * trans[i * k + j]).sum();
            assert!((v - law[j]).abs() < 1e-12, "column {j}: {v} vs {}", law[j]);
        }
    }

    #[test]
    fn two_state_chain() {
        let trans = [0.9, 0.1, 0.2, 0.8];
        let s = stationary_law(&trans, 2);
        assert!(!s.non_unique);
        assert!((s.law[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((s.law[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn reducible_identity_is_symmetric() {
        let trans = [1.0, 0.0, 0.0, 1.0];
        let s = stationary_law(&trans, 2);
        assert!(s.non_unique);
        assert_eq!(s.law, vec![0.5, 0.5]);
    }

    #[test]
    fn transient_state_feeds_classes() {
        // state 2 is transient and splits 3:1 between two absorbing states
        let trans = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.75, 0.25, 0.0];
        let s = stationary_law(&trans, 3);
        assert!(s.non_unique);
        // weights: (1 + 0.75)/3 and (1 + 0.25)/3
        assert!((s.law[0] - 1.75 / 3.0).abs() < 1e-14);
        assert!((s.law[1] - 1.25 / 3.0).abs() < 1e-14);
        assert_eq!(s.law[2], 0.0);
        check_stationary(&trans, 3, &s.law);
    }

    #[test]
    fn matches_perturbed_chain_limit() {
        // two closed classes {0,1} and {3}, transient state 2
        let k = 4;
        let trans = [
            0.5, 0.5, 0.0, 0.0, //
            0.3, 0.7, 0.0, 0.0, //
            0.2, 0.1, 0.3, 0.4, //
            0.0, 0.0, 0.0, 1.0,
        ];
        let s = stationary_law(&trans, k);
        check_stationary(&trans, k, &s.law);
        // independent route: dense solve of the perturbed chain at eps = 1e-8
        let eps = 1e-8;
        let mut a = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            for i in 0..k {
                let p = (1.0 - eps) * trans[i * k + j] + eps / k as f64;
                a[(j, i)] = p - if i == j { 1.0 } else { 0.0 };
            }
        }
        for i in 0..k {
            a[(k - 1, i)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(k);
        b[k - 1] = 1.0;
        let pi = a.lu().solve(&b).unwrap();
        for j in 0..k {
            assert!((pi[j] - s.law[j]).abs() < 1e-6, "{pi:?} vs {:?}", s.law);
        }
    }

    #[test]
    fn periodic_chain_is_unique() {
        let trans = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let s = stationary_law(&trans, 3);
        assert!(!s.non_unique);
        for p in &s.law {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
    }
}
