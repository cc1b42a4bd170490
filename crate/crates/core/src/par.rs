//! Execution switch for the data-parallel loops.
//!
//! Each helper keeps input order in its output so results do not depend on
//! how work was scheduled. With the `parallel` feature disabled,
//! [`Execution::Parallel`] silently runs the sequential path.

/// How a data-parallel loop should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` only when the crate was built with rayon support.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Ordered map over `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Ordered map over a slice.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Apply `f` to every row of a row-major buffer with `width` columns.
pub fn for_each_row_mut<F>(exec: Execution, buf: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    match exec.effective() {
        Execution::Sequential => buf.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row)),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            buf.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row))
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_order() {
        let seq = map_range(Execution::Sequential, 1000, |i| i * 3);
        let par = map_range(Execution::Parallel, 1000, |i| i * 3);
        assert_eq!(seq, par);
        let items: Vec<u32> = (0..100).collect();
        assert_eq!(
            map_slice(Execution::Parallel, &items, |x| x + 1),
            map_slice(Execution::Sequential, &items, |x| x + 1)
        );
    }

    #[test]
    fn rows_are_visited_once() {
        let mut buf = vec![0.0; 12];
        for_each_row_mut(Execution::Parallel, &mut buf, 3, |i, row| {
            row.iter_mut().for_each(|v| *v += i as f64)
        });
        assert_eq!(buf[9..12], [3.0, 3.0, 3.0]);
    }
}
