use ndarray::{Array2, Array3};

use super::CorpusError;

/// `input` tokens followed by the token to predict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub input: Vec<usize>,
    pub target: usize,
}

/// Every stride-1 window of length `sequence_length`, in corpus order.
/// Repeated windows are kept.
pub fn make_windows(encoded: &[usize], sequence_length: usize) -> Result<Vec<Window>, CorpusError> {
    if sequence_length == 0 {
        return Err(CorpusError::ZeroSequenceLength);
    }
    if encoded.len() < sequence_length + 1 {
        return Err(CorpusError::InsufficientData {
            required: sequence_length + 1,
            available: encoded.len(),
            sequence_length,
        });
    }
    Ok(encoded
        .windows(sequence_length + 1)
        .map(|w| Window {
            input: w[..sequence_length].to_vec(),
            target: w[sequence_length],
        })
        .collect())
}

/// Scales an index into `[0, 1)`.
pub fn normalize_index(index: usize, vocab_size: usize) -> f64 {
    index as f64 / vocab_size as f64
}

/// Model-ready training data.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    /// `[num_windows, sequence_length, 1]`, each value `index / vocab_size`.
    pub inputs: Array3<f64>,
    /// `[num_windows, vocab_size]` one-hot rows.
    pub targets: Array2<f64>,
    pub windows: Vec<Window>,
    pub sequence_length: usize,
    pub vocab_size: usize,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn target(&self, window: usize) -> usize {
        self.windows[window].target
    }

    /// Normalized input sequence of one window.
    pub fn input(&self, window: usize) -> Vec<f64> {
        self.inputs
            .index_axis(ndarray::Axis(0), window)
            .iter()
            .copied()
            .collect()
    }
}

pub fn normalize(windows: Vec<Window>, vocab_size: usize) -> Result<WindowDataset, CorpusError> {
    if vocab_size == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let sequence_length = windows.first().map_or(0, |w| w.input.len());
    let mut inputs = Array3::zeros((windows.len(), sequence_length, 1));
    let mut targets = Array2::zeros((windows.len(), vocab_size));
    for (w, window) in windows.iter().enumerate() {
        if window.input.len() != sequence_length {
            return Err(CorpusError::Format {
                line: w + 1,
                message: format!(
                    "window has length {}, expected {sequence_length}",
                    window.input.len()
                ),
            });
        }
        for (t, &index) in window.input.iter().enumerate() {
            if index >= vocab_size {
                return Err(CorpusError::CorruptEncoding {
                    index,
                    size: vocab_size,
                });
            }
            inputs[[w, t, 0]] = normalize_index(index, vocab_size);
        }
        if window.target >= vocab_size {
            return Err(CorpusError::CorruptEncoding {
                index: window.target,
                size: vocab_size,
            });
        }
        targets[[w, window.target]] = 1.0;
    }
    Ok(WindowDataset {
        inputs,
        targets,
        windows,
        sequence_length,
        vocab_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(ws: &[Window]) -> Vec<(Vec<usize>, usize)> {
        ws.iter().map(|w| (w.input.clone(), w.target)).collect()
    }

    #[test]
    fn duplicates_are_kept() {
        let ws = make_windows(&[0, 1, 0, 1, 0], 2).unwrap();
        assert_eq!(
            pairs(&ws),
            vec![(vec![0, 1], 0), (vec![1, 0], 1), (vec![0, 1], 0)]
        );
    }

    #[test]
    fn boundary_gives_single_window() {
        assert_eq!(make_windows(&[3, 1, 2], 2).unwrap().len(), 1);
        match make_windows(&[3, 1], 2) {
            Err(CorpusError::InsufficientData { required, .. }) => assert_eq!(required, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(make_windows(&[1, 2], 0), Err(CorpusError::ZeroSequenceLength)));
    }

    #[test]
    fn normalization_values() {
        assert_eq!(normalize_index(2, 4), 0.5);
        assert_eq!(normalize_index(0, 4), 0.0);
        let ds = normalize(vec![Window { input: vec![0, 2], target: 1 }], 3).unwrap();
        assert_eq!(ds.inputs.shape(), &[1, 2, 1]);
        assert_eq!(ds.targets.row(0).to_vec(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            normalize(vec![Window { input: vec![3], target: 0 }], 3),
            Err(CorpusError::CorruptEncoding { index: 3, size: 3 })
        ));
    }

    proptest! {
        #[test]
        fn window_count_and_value_range(
            encoded in prop::collection::vec(0usize..7, 2..60),
            len in 1usize..10,
        ) {
            prop_assume!(encoded.len() > len);
            let ws = make_windows(&encoded, len).unwrap();
            prop_assert_eq!(ws.len(), encoded.len() - len);
            let ds = normalize(ws, 7).unwrap();
            for &x in ds.inputs.iter() {
                prop_assert!((0.0..1.0).contains(&x));
                prop_assert!(((x * 7.0).round() - x * 7.0).abs() < 1e-9);
            }
            for row in ds.targets.rows() {
                prop_assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(row.sum(), 1.0);
            }
        }
    }
}
