//! Scoring kernels and their analytic partials over flat `[re | im]`
//! buffers. Both the pure gradient API and the trainer hot loop call these,
//! so score and gradient can never drift apart.

use super::Scorer;

/// Triple plausibility score from three flat vectors of length `2 * dim`.
pub(crate) fn score_flat(scorer: Scorer, dim: usize, s: &[f64], r: &[f64], d: &[f64]) -> f64 {
    match scorer {
        // Re(<s, r, conj(d)>), summed component-wise
        Scorer::ComplEx => {
            let mut sum = 0.0;
            for k in 0..dim {
                let (sr, si) = (s[k], s[dim + k]);
                let (rr, ri) = (r[k], r[dim + k]);
                let (dr, di) = (d[k], d[dim + k]);
                sum += (sr * rr - si * ri) * dr + (sr * ri + si * rr) * di;
            }
            sum
        }
        // the real-valued special case: imaginary parts drop out
        Scorer::DistMult => (0..dim).map(|k| s[k] * r[k] * d[k]).sum(),
        // negative Euclidean distance of the translated concatenated vector
        Scorer::TransE => {
            let mut sq = 0.0;
            for j in 0..2 * dim {
                let z = s[j] + r[j] - d[j];
                sq += z * z;
            }
            -sq.sqrt()
        }
    }
}

/// Accumulates `coef` times the score partials with respect to the source,
/// relation, and destination vectors into `grads` at the three offsets.
/// The offsets must address disjoint ranges.
#[allow(clippy::too_many_arguments)]
pub(crate) fn add_partials_flat(
    scorer: Scorer,
    dim: usize,
    s: &[f64],
    r: &[f64],
    d: &[f64],
    coef: f64,
    grads: &mut [f64],
    gs: usize,
    gr: usize,
    gd: usize,
) {
    match scorer {
        Scorer::ComplEx => {
            for k in 0..dim {
                let (sr, si) = (s[k], s[dim + k]);
                let (rr, ri) = (r[k], r[dim + k]);
                let (dr, di) = (d[k], d[dim + k]);
                grads[gs + k] += coef * (rr * dr + ri * di);
                grads[gs + dim + k] += coef * (rr * di - ri * dr);
                grads[gr + k] += coef * (sr * dr + si * di);
                grads[gr + dim + k] += coef * (sr * di - si * dr);
                grads[gd + k] += coef * (sr * rr - si * ri);
                grads[gd + dim + k] += coef * (sr * ri + si * rr);
            }
        }
        Scorer::DistMult => {
            for k in 0..dim {
                grads[gs + k] += coef * r[k] * d[k];
                grads[gr + k] += coef * s[k] * d[k];
                grads[gd + k] += coef * s[k] * r[k];
            }
        }
        Scorer::TransE => {
            let mut sq = 0.0;
            for j in 0..2 * dim {
                let z = s[j] + r[j] - d[j];
                sq += z * z;
            }
            let norm = sq.sqrt();
            if norm < 1e-12 {
                return; // zero subgradient at the kink
            }
            for j in 0..2 * dim {
                let g = (s[j] + r[j] - d[j]) / norm;
                grads[gs + j] -= coef * g;
                grads[gr + j] -= coef * g;
                grads[gd + j] += coef * g;
            }
        }
    }
}
