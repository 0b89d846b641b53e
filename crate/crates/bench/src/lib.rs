//! Shared inputs for the criterion benchmarks.

use gwt_core::{
    build_chain_graph, eigendecompose, normalized_laplacian, symmetrize, DenseMatrix, EigenSystem, FilterBank,
    GwtModel, ModelConfig, NormalizedLaplacian,
};

/// Chain graph of `n` tokens with a seed-initialized bank and a fixed signal.
pub struct Fixture {
    pub laplacian: NormalizedLaplacian,
    pub eig: EigenSystem,
    pub bank: FilterBank,
    pub x: DenseMatrix,
    pub wq: DenseMatrix,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
}

pub fn fixture(n: usize, d: usize, k: usize) -> gwt_core::Result<Fixture> {
    let laplacian = normalized_laplacian(&symmetrize(&build_chain_graph(n)?))?;
    let eig = eigendecompose(&laplacian, 1e-12)?;
    let cfg = ModelConfig {
        vocab: 2,
        d,
        k,
        layers: 1,
        ..ModelConfig::default()
    };
    let model = GwtModel::init(&cfg, 0)?;
    let bank = model.layers[0].bank.clone();
    let x = DenseMatrix::from_fn(n, d, |i, j| ((i * 7 + j * 13) as f64).sin());
    let w = |phase: f64| DenseMatrix::from_fn(d, d, |i, j| ((i * d + j) as f64 + phase).cos() / (d as f64).sqrt());
    Ok(Fixture {
        laplacian,
        eig,
        bank,
        x,
        wq: w(0.0),
        wk: w(1.0),
        wv: w(2.0),
    })
}
