//! Sanity-check the LID estimator on data of known dimension.
//!
//! Points drawn uniformly from a d-dimensional ball have local intrinsic
//! dimensionality exactly d everywhere except at the boundary, so the
//! maximum-likelihood estimate over k-nearest-neighbor distances should
//! concentrate around d. This example sweeps a few dimensions and prints the
//! median and quartiles of the estimates.
//!
//!     cargo run --release --example ball_dimension

use lidlab::lid::{knn_distances, lid_mle, sample_uniform_ball};

fn main() -> lidlab::Result<()> {
    let n_points = 10_000;
    let n_queries = 100;
    let k = 100;

    println!("{:>4} {:>10} {:>10} {:>10}", "dim", "q1", "median", "q3");
    for dim in [1usize, 2, 3, 5, 8] {
        let points = sample_uniform_ball(n_points, dim, 40 + dim as u64);
        let queries = sample_uniform_ball(n_queries, dim, 4000 + dim as u64);

        let mut estimates = Vec::with_capacity(n_queries);
        for q in &queries {
            let neighborhood = knn_distances(q, &points, k, None)?;
            estimates.push(lid_mle(&neighborhood)?);
        }
        estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let q1 = estimates[n_queries / 4];
        let median = (estimates[n_queries / 2 - 1] + estimates[n_queries / 2]) / 2.0;
        let q3 = estimates[3 * n_queries / 4];
        println!("{dim:>4} {q1:>10.3} {median:>10.3} {q3:>10.3}");
    }
    println!("\n({n_points} reference points, {n_queries} queries, k = {k})");
    Ok(())
}
