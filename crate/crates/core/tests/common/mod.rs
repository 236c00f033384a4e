#![allow(dead_code)]

use isserlis::gaussian::CovarianceMatrix;
use isserlis::montecarlo::RandomStream;

/// `B B^T / r` for a Gaussian `d x r` matrix `B`; rank-deficient when `r < d`.
pub fn random_psd(stream: &mut RandomStream, d: usize, rank: usize) -> CovarianceMatrix {
    let b: Vec<f64> = stream.standard_normals(d * rank);
    let mut entries = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            entries[i * d + j] =
                (0..rank).map(|m| b[i * rank + m] * b[j * rank + m]).sum::<f64>() / rank as f64;
        }
    }
    CovarianceMatrix::from_row_major(d, entries).expect("B B^T is PSD")
}

pub fn random_vector(stream: &mut RandomStream, d: usize) -> Vec<f64> {
    stream.standard_normals(d)
}

/// Uniform integer in `lo..=hi`.
pub fn uniform_int(stream: &mut RandomStream, lo: usize, hi: usize) -> usize {
    lo + (stream.next_u64() % (hi - lo + 1) as u64) as usize
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
