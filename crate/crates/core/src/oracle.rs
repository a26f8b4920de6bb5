//! Exhaustive-enumeration reference for small instances. Used by tests and
//! by the CLI's oracle mode; independent of every solver path.

use thiserror::Error;

use crate::graph::{IntegerAssignment, WeightedGraph};

/// Enumeration refuses to visit more than this many labelings.
pub const ENUMERATION_CAP: f64 = 1e8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("k^N = {size:e} exceeds the enumeration cap of {cap:e}")]
    TooLarge { size: f64, cap: f64 },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
}

/// Maximizes the cut by checking all `k^N` labelings; ties resolve to the
/// first labeling found in odometer order (node 0 slowest).
pub fn brute_force(g: &WeightedGraph, k: usize) -> Result<(f64, IntegerAssignment), OracleError> {
    if k < 2 {
        return Err(OracleError::BadK(k));
    }
    let n = g.node_count();
    let size = (k as f64).powi(n as i32);
    if size > ENUMERATION_CAP {
        return Err(OracleError::TooLarge {
            size,
            cap: ENUMERATION_CAP,
        });
    }

    let mut labels = vec![0usize; n];
    let mut best_cut = f64::NEG_INFINITY;
    let mut best_labels = labels.clone();
    loop {
        let mut cut = 0.0;
        for e in g.edges() {
            if labels[e.u] != labels[e.v] {
                cut += e.w;
            }
        }
        if cut > best_cut {
            best_cut = cut;
            best_labels.copy_from_slice(&labels);
        }
        // odometer over labels, last node fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let best = IntegerAssignment::new(best_labels, k).expect("labels in range");
                return Ok((best_cut, best));
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cut_value, parse_gset};

    const TRIANGLE: &str = "3 3\n1 2 1\n1 3 1\n2 3 1";
    const K4: &str = "4 6\n1 2 1\n1 3 1\n1 4 1\n2 3 1\n2 4 1\n3 4 1";

    #[test]
    fn triangle_max_cut() {
        let g = parse_gset(TRIANGLE).unwrap();
        let (cut, a) = brute_force(&g, 2).unwrap();
        assert_eq!(cut, 2.0);
        assert_eq!(cut_value(&g, &a).unwrap(), 2.0);
    }

    #[test]
    fn triangle_max_3_cut() {
        let g = parse_gset(TRIANGLE).unwrap();
        let (cut, _) = brute_force(&g, 3).unwrap();
        assert_eq!(cut, 3.0);
    }

    #[test]
    fn k4_cuts() {
        let g = parse_gset(K4).unwrap();
        let (cut2, _) = brute_force(&g, 2).unwrap();
        assert_eq!(cut2, 4.0);
        // 3 colors on K4 leave exactly one monochromatic pair: 6 - 1 = 5
        let (cut3, _) = brute_force(&g, 3).unwrap();
        assert_eq!(cut3, 5.0);
    }

    #[test]
    fn size_guard() {
        let g = generate_big();
        assert!(matches!(
            brute_force(&g, 3).unwrap_err(),
            OracleError::TooLarge { .. }
        ));
    }

    fn generate_big() -> WeightedGraph {
        let edges: Vec<(usize, usize, f64)> = (0..29).map(|i| (i, i + 1, 1.0)).collect();
        WeightedGraph::from_edges(30, edges).unwrap()
    }
}
