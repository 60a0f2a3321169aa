//! The method memory: a sliding window of accepted (t, y) pairs.

use crate::{Error, Result, State};

/// A bounded window of time/state pairs with strictly increasing times.
///
/// Multistep coefficients are recomputed from this window every step, so the
/// window length is the method memory: `m + 1` points support divided
/// differences up to order `m`.
#[derive(Debug, Clone)]
pub struct TimeHistory {
    times: Vec<f64>,
    values: Vec<State>,
    capacity: usize,
}

impl TimeHistory {
    /// Creates an empty window retaining at most `capacity` points.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "a multistep window needs at least 2 points");
        TimeHistory {
            times: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// Builds a window directly from pairs; times must be strictly increasing.
    pub fn from_pairs(
        capacity: usize,
        pairs: impl IntoIterator<Item = (f64, State)>,
    ) -> Result<Self> {
        let mut h = TimeHistory::new(capacity);
        for (t, y) in pairs {
            h.push(t, y)?;
        }
        Ok(h)
    }

    /// Appends an accepted value, evicting the oldest point when full.
    pub fn push(&mut self, t: f64, y: State) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::NonIncreasingTimes);
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::NonIncreasingTimes);
            }
        }
        if let Some(dim) = self.dimension() {
            if y.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: y.len(),
                });
            }
        }
        if self.times.len() == self.capacity {
            self.times.remove(0);
            self.values.remove(0);
        }
        self.times.push(t);
        self.values.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[State] {
        &self.values
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn last_value(&self) -> Option<&State> {
        self.values.last()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.values.first().map(State::len)
    }

    /// Stepsizes `k_i = t_{i+1} - t_i` of the stored window.
    pub fn stepsizes(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Stepsize ratios `tau_{i+1} = k_{i+1} / k_i`.
    pub fn ratios(&self) -> Vec<f64> {
        let k = self.stepsizes();
        k.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// The stored times extended by a trial time, as used for coefficients.
    pub fn window_times_with(&self, t_new: f64) -> Vec<f64> {
        let mut t = self.times.clone();
        t.push(t_new);
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn push_enforces_increasing_times() {
        let mut h = TimeHistory::new(4);
        h.push(0.0, dvector![1.0]).unwrap();
        h.push(0.5, dvector![2.0]).unwrap();
        assert!(matches!(
            h.push(0.5, dvector![3.0]),
            Err(Error::NonIncreasingTimes)
        ));
        assert!(matches!(
            h.push(0.4, dvector![3.0]),
            Err(Error::NonIncreasingTimes)
        ));
        assert!(h.push(f64::NAN, dvector![3.0]).is_err());
    }

    #[test]
    fn push_enforces_dimension() {
        let mut h = TimeHistory::new(4);
        h.push(0.0, dvector![1.0, 2.0]).unwrap();
        assert!(matches!(
            h.push(1.0, dvector![1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn window_slides_at_capacity() {
        let mut h = TimeHistory::new(3);
        for i in 0..5 {
            h.push(i as f64, dvector![i as f64]).unwrap();
        }
        assert_eq!(h.len(), 3);
        assert_eq!(h.times(), &[2.0, 3.0, 4.0]);
        assert_eq!(h.stepsizes(), vec![1.0, 1.0]);
        assert_eq!(h.ratios(), vec![1.0]);
    }

    #[test]
    fn ratios_track_step_changes() {
        let h = TimeHistory::from_pairs(
            4,
            [
                (0.0, dvector![0.0]),
                (1.0, dvector![0.0]),
                (1.5, dvector![0.0]),
                (2.5, dvector![0.0]),
            ],
        )
        .unwrap();
        assert_eq!(h.ratios(), vec![0.5, 2.0]);
    }
}
