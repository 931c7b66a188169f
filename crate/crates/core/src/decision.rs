//! Per-round selection and allocation decision.

use alloc::vec;
use alloc::vec::Vec;

/// Selection `a`, bandwidth fraction `b`, CPU frequency `f` for every client
/// plus the epigraph value bounding the weighted round latency.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDecision {
    pub selection: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub frequency: Vec<f64>,
    pub epigraph: f64,
}

impl RoundDecision {
    /// Nobody selected.
    pub fn empty(num_clients: usize) -> Self {
        RoundDecision {
            selection: vec![0.0; num_clients],
            bandwidth: vec![0.0; num_clients],
            frequency: vec![0.0; num_clients],
            epigraph: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.selection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selection.is_empty()
    }

    /// Binary reading of the selection; fractional values above one half count.
    pub fn is_selected(&self, k: usize) -> bool {
        self.selection[k] > 0.5
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_selected(k))
    }

    pub fn selected_count(&self) -> usize {
        self.selected().count()
    }

    pub fn select(&mut self, k: usize, bandwidth: f64, frequency: f64) {
        self.selection[k] = 1.0;
        self.bandwidth[k] = bandwidth;
        self.frequency[k] = frequency;
    }
}
