//! Parallel Monte Carlo over pulse blocks.
//!
//! Blocks draw from independent substreams and are simulated concurrently in
//! chunks; each chunk is pushed into the sequential dead-time and counting
//! pipeline in block order. Totals therefore do not depend on the number of
//! workers.

use herald_core::counter::CountTotals;
use herald_core::sim::{block_count, PointSetup, PulseSimulator, RawClick};
use rayon::prelude::*;

/// Blocks simulated per parallel chunk; bounds the buffered click memory.
pub const CHUNK_BLOCKS: u64 = 64;

pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `workers == 0` uses one thread per available core.
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Totals of `n_pulses` slots counted at each of `offsets`.
    pub fn run(
        &self,
        setup: &PointSetup,
        seed: u64,
        stream: &[u64],
        n_pulses: u64,
        offsets: &[u64],
    ) -> herald_core::Result<Vec<CountTotals>> {
        let sim = PulseSimulator::new(setup)?;
        let mut pipe = sim.pipeline(n_pulses, offsets, false)?;
        let blocks = block_count(n_pulses);
        let mut start = 0;
        while start < blocks {
            let end = (start + CHUNK_BLOCKS).min(blocks);
            let chunk: Vec<Vec<RawClick>> = self.pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|b| sim.simulate_block(seed, stream, n_pulses, b))
                    .collect()
            });
            for clicks in &chunk {
                pipe.push_block(clicks)?;
            }
            start = end;
        }
        Ok(pipe.finish().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use herald_core::model::SourceModel;
    use herald_core::sim::run_point;

    #[test]
    fn matches_sequential_run() {
        let setup = SourceModel::lab_baseline().point(30.0, 0.0).unwrap();
        let n = 300_000;
        let seq = run_point(&setup, 7, &[1, 2], n, &[0, 1]).unwrap();
        for workers in [1, 3] {
            let par = Runner::new(workers).unwrap().run(&setup, 7, &[1, 2], n, &[0, 1]).unwrap();
            assert_eq!(par, seq);
        }
    }
}
