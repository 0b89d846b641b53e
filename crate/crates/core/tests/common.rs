#![allow(dead_code)]

use gwt_core::{normalized_laplacian, random_graph, symmetrize, DenseMatrix, NormalizedLaplacian, TokenGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sym_graph(n: usize, p: f64, seed: u64) -> TokenGraph {
    symmetrize(&random_graph(n, p, seed).unwrap())
}

pub fn laplacian(n: usize, p: f64, seed: u64) -> NormalizedLaplacian {
    normalized_laplacian(&sym_graph(n, p, seed)).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}
