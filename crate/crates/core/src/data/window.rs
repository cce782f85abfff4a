use super::LabeledSequence;
use crate::error::{PotrError, Result};
use crate::tensor::Tensor;

/// An input window and the frames that immediately follow it.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub input: Tensor,
    pub target: Tensor,
    pub label: Option<usize>,
    pub source: usize,
    pub start: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    /// Sequences shorter than `input_len + target_len`.
    pub skipped: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Slides `input_len + target_len` windows over each sequence separately.
pub fn window_dataset(sequences: &[LabeledSequence], input_len: usize, target_len: usize, stride: usize) -> Result<WindowSet> {
    if input_len == 0 || target_len == 0 || stride == 0 {
        return Err(PotrError::config("window lengths and stride must be positive"));
    }
    let span = input_len + target_len;
    let mut set = WindowSet::default();
    for (i, s) in sequences.iter().enumerate() {
        let seq = &s.sequence;
        if seq.len() < span {
            set.skipped += 1;
            continue;
        }
        let mut start = 0;
        while start + span <= seq.len() {
            set.windows.push(Window {
                input: seq.window(start, input_len)?.frames().clone(),
                target: seq.window(start + input_len, target_len)?.frames().clone(),
                label: s.label,
                source: i,
                start,
            });
            start += stride;
        }
    }
    if set.skipped > 0 {
        log::warn!("skipped {} sequences shorter than {span} frames", set.skipped);
    }
    Ok(set)
}
