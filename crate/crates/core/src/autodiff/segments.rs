use crate::error::{Error, Result};

/// Sorted, contiguous segment ids (`0, 0, 1, 2, 2, …`) with no empty segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    ids: Vec<usize>,
    starts: Vec<usize>,
}

impl Segments {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        let mut starts = Vec::new();
        for (i, &id) in ids.iter().enumerate() {
            let expected_new = starts.len();
            if id == expected_new {
                starts.push(i);
            } else if expected_new == 0 || id != expected_new - 1 {
                return Err(Error::SegmentError(format!(
                    "segment id {id} at position {i}; ids must start at 0, be sorted and skip no id"
                )));
            }
        }
        starts.push(ids.len());
        Ok(Self { ids, starts })
    }

    /// Segments from consecutive lengths; every length must be positive.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(lengths.iter().sum());
        for (s, &len) in lengths.iter().enumerate() {
            if len == 0 {
                return Err(Error::SegmentError(format!("segment {s} is empty")));
            }
            ids.extend(std::iter::repeat_n(s, len));
        }
        Self::new(ids)
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// `(start, end)` entry range of each segment.
    pub fn ranges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.starts.windows(2).map(|w| (w[0], w[1]))
    }
}
