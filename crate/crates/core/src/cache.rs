//! Process-wide memo of Laplacians and eigensystems keyed by graph structure.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::Result;
use crate::graph::{normalized_laplacian, symmetrize, NormalizedLaplacian, TokenGraph};
use crate::spectral::{eigendecompose_with, EigenSystem, JacobiOptions};

type GraphKey = (usize, Vec<(usize, usize)>);

/// One cached graph: its Laplacian, and the eigensystem once somebody has
/// asked for it. Polynomial-mode callers never pay for the eigensolve.
#[derive(Debug)]
pub struct SpectralEntry {
    laplacian: NormalizedLaplacian,
    eig: OnceLock<EigenSystem>,
    opts: JacobiOptions,
}

impl SpectralEntry {
    pub fn laplacian(&self) -> &NormalizedLaplacian {
        &self.laplacian
    }

    pub fn eigensystem(&self) -> Result<&EigenSystem> {
        if let Some(e) = self.eig.get() {
            return Ok(e);
        }
        // Two threads may race to solve the same graph; the solver is
        // deterministic so whichever result lands first is the same bits.
        let e = eigendecompose_with(&self.laplacian, &self.opts)?;
        let _ = self.eig.set(e);
        Ok(self.eig.get().expect("set above"))
    }

    pub fn has_eigensystem(&self) -> bool {
        self.eig.get().is_some()
    }
}

#[derive(Debug, Default)]
pub struct SpectralCache {
    entries: RwLock<HashMap<GraphKey, Arc<SpectralEntry>>>,
    opts: JacobiOptions,
}

impl SpectralCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_options(opts: JacobiOptions) -> Self {
        Self {
            entries: RwLock::default(),
            opts,
        }
    }

    /// Looks up (or builds) the entry for `graph`. Direction is discarded:
    /// the graph is symmetrized before the Laplacian is formed.
    pub fn get(&self, graph: &TokenGraph) -> Result<Arc<SpectralEntry>> {
        let key = graph.structure_key();
        if let Some(hit) = self.entries.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let laplacian = normalized_laplacian(&symmetrize(graph))?;
        let entry = Arc::new(SpectralEntry {
            laplacian,
            eig: OnceLock::new(),
            opts: self.opts,
        });
        let mut map = self.entries.write().expect("cache lock poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(entry)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_chain_graph;

    #[test]
    fn direction_does_not_split_entries() {
        let cache = SpectralCache::new();
        let fwd = build_chain_graph(4).unwrap();
        let back = TokenGraph::new(4, vec![(1, 0), (2, 1), (3, 2)], None).unwrap();
        let a = cache.get(&fwd).unwrap();
        let b = cache.get(&back).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
        assert!(!a.has_eigensystem());
        assert_eq!(a.eigensystem().unwrap().m(), 4);
        assert!(b.has_eigensystem());
    }

    #[test]
    fn concurrent_reads() {
        let cache = SpectralCache::new();
        let g = build_chain_graph(9).unwrap();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    let e = cache.get(&g).unwrap();
                    assert_eq!(e.eigensystem().unwrap().n(), 9);
                });
            }
        });
        assert_eq!(cache.len(), 1);
    }
}
