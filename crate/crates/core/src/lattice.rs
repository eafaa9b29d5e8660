//! Integer sublattice reduction for plane-wave suprema.
//!
//! The sup over the torus of a trig sum `Σ cᵢ trig(kᵢ·x)` only depends on the
//! phases `θ = (b₁·x, …, b_d·x)` for a basis `b₁..b_d` of the sublattice the
//! kᵢ generate: the map x ↦ θ is onto ℝ^d, so the supremum over x ∈ T³ equals
//! the supremum of the reduced sum over the d-torus. Reducing the dimension
//! (d ≤ 3, and d ≤ 2 for the whole cascade family) makes dense evaluation of
//! the sup cheap and well resolved.

/// Basis of the sublattice of ℤ³ generated by the given wave vectors, in row
/// echelon (Hermite-like) form, together with the integer coordinates of each
/// input vector in that basis.
#[derive(Debug, Clone)]
pub struct LatticeBasis {
    pub basis: Vec<[i64; 3]>,
    pub coords: Vec<Vec<i64>>,
}

pub fn reduce(vectors: &[[i64; 3]]) -> LatticeBasis {
    // Row-style integer echelon reduction with full Euclidean elimination per
    // column; i128 intermediates avoid overflow for very large cascades.
    let mut rows: Vec<[i128; 3]> = vectors
        .iter()
        .map(|v| [v[0] as i128, v[1] as i128, v[2] as i128])
        .filter(|v| v.iter().any(|&c| c != 0))
        .collect();
    let mut basis: Vec<[i128; 3]> = Vec::new();
    let mut col = 0;
    while col < 3 && !rows.is_empty() {
        // gcd-reduce the column across all rows
        loop {
            rows.sort_by_key(|r| r[col].abs());
            rows.retain(|r| r.iter().any(|&c| c != 0));
            let nonzero: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][col] != 0).collect();
            if nonzero.len() <= 1 {
                break;
            }
            let pivot_idx = nonzero[0];
            let pivot = rows[pivot_idx][col];
            for &i in &nonzero[1..] {
                let q = rows[i][col] / pivot;
                for c in 0..3 {
                    rows[i][c] -= q * rows[pivot_idx][c];
                }
            }
        }
        if let Some(pos) = (0..rows.len()).find(|&i| rows[i][col] != 0) {
            let mut piv = rows.remove(pos);
            if piv[col] < 0 {
                for c in piv.iter_mut() {
                    *c = -*c;
                }
            }
            basis.push(piv);
        }
        col += 1;
    }
    // Back-substitute: integer coordinates of each input in the echelon basis.
    let coords = vectors
        .iter()
        .map(|v| {
            let mut rem = [v[0] as i128, v[1] as i128, v[2] as i128];
            let mut cs = vec![0i64; basis.len()];
            for (bi, b) in basis.iter().enumerate() {
                let lead = (0..3).find(|&c| b[c] != 0).unwrap();
                debug_assert!(rem[lead] % b[lead] == 0, "input not in generated lattice");
                let q = rem[lead] / b[lead];
                cs[bi] = q as i64;
                for c in 0..3 {
                    rem[c] -= q * b[c];
                }
            }
            debug_assert_eq!(rem, [0, 0, 0]);
            cs
        })
        .collect();
    LatticeBasis {
        basis: basis
            .into_iter()
            .map(|b| [b[0] as i64, b[1] as i64, b[2] as i64])
            .collect(),
        coords,
    }
}
