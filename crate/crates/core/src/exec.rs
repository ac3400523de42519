//! Data-parallel map used by batch passes, dataset builds and experiment
//! grids. Results always come back in index order, so reductions over them
//! are independent of scheduling.

/// Execution strategy. `Parallel` runs on the rayon pool when the
/// `parallel` feature is enabled and degrades to `Sequential` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Number of jobs that run at once.
    pub fn width(self) -> usize {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => rayon::current_num_threads(),
            _ => 1,
        }
    }

    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Applies `f` to consecutive `chunk`-sized ranges of `0..n`.
    pub fn map_chunks<R, F>(self, n: usize, chunk: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        self.map(n.div_ceil(chunk), |c| f(c * chunk..((c + 1) * chunk).min(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let seq = Exec::Sequential.map_chunks(10, 3, |r| r.collect::<Vec<_>>());
        let par = Exec::Parallel.map_chunks(10, 3, |r| r.collect::<Vec<_>>());
        assert_eq!(seq, par);
        assert_eq!(seq, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![9]]);
    }
}
