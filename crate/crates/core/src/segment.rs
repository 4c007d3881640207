//! Segments: maximal runs of equally labeled lines, and segment-count error
//! statistics against gold segmentations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::rangeseg::RangeSpan;

/// Segments share the span representation; within a segmentation adjacent
/// segments carry distinct labels.
pub type Segment = RangeSpan;

pub fn consolidate(labels: &[Label]) -> Result<Vec<Segment>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out: Vec<Segment> = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let line = i + 1;
        match out.last_mut() {
            Some(seg) if seg.label == label => seg.end = line,
            _ => out.push(Segment::new(line, line, label)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCountStats {
    pub abs_differences: Vec<usize>,
    pub mae: f64,
    /// Sample standard deviation (n - 1 denominator) of the absolute
    /// differences.
    pub std: f64,
}

pub fn segment_count_stats(gold: &[usize], pred: &[usize]) -> Result<SegmentCountStats> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.len() < 2 {
        return Err(Error::TooFewFiles(gold.len()));
    }
    let diffs: Vec<usize> = gold.iter().zip(pred).map(|(g, p)| g.abs_diff(*p)).collect();
    let n = diffs.len() as f64;
    let mae = diffs.iter().sum::<usize>() as f64 / n;
    let var = diffs
        .iter()
        .map(|&d| (d as f64 - mae).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(SegmentCountStats {
        abs_differences: diffs,
        mae,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn consolidate_examples() {
        assert_eq!(
            consolidate(&[Analysis, Analysis, Comment, Comment, Comment, Analysis]).unwrap(),
            vec![
                Segment::new(1, 2, Analysis),
                Segment::new(3, 5, Comment),
                Segment::new(6, 6, Analysis)
            ]
        );
        assert_eq!(consolidate(&[Comment]).unwrap(), vec![Segment::new(1, 1, Comment)]);
        assert_eq!(consolidate(&[Comment; 9]).unwrap(), vec![Segment::new(1, 9, Comment)]);
        assert!(matches!(consolidate(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn invalid_runs_form_segments() {
        let segs = consolidate(&[Comment, Invalid, Invalid, Comment]).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[1], Segment::new(2, 3, Invalid));
    }

    #[test]
    fn stats_zero_when_equal() {
        let s = segment_count_stats(&[3, 4, 5], &[3, 4, 5]).unwrap();
        assert_eq!((s.mae, s.std), (0.0, 0.0));
    }

    #[test]
    fn stats_errors() {
        assert!(matches!(
            segment_count_stats(&[1, 2], &[1]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(segment_count_stats(&[1], &[1]), Err(Error::TooFewFiles(1))));
    }

    #[test]
    fn stats_hand_computed() {
        // diffs 1 and 3: mean 2, sample variance ((1)^2 + (1)^2) / 1 = 2
        let s = segment_count_stats(&[5, 0], &[4, 3]).unwrap();
        assert_eq!(s.abs_differences, vec![1, 3]);
        assert_eq!(s.mae, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
    }
}
