//! Semantic concentration: cross-modal importance, streaming top-k, pruning
//! and offset encoding of the surviving token positions.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::config::RetentionSchedule;
use crate::error::{FocusError, Result};
use crate::grid::TokenGrid;
use crate::matrix::Matrix;

/// Row-sum tolerance for post-softmax matrices.
pub const SOFTMAX_ROW_TOL: f32 = 1e-5;

/// Per-head post-softmax attention over `[image | text]` tokens.
#[derive(Debug, Clone)]
pub struct AttentionScores {
    heads: Vec<Matrix>,
    image_tokens: usize,
    text_tokens: usize,
}

impl AttentionScores {
    pub fn new(heads: Vec<Matrix>, image_tokens: usize, text_tokens: usize) -> Result<Self> {
        let l = image_tokens + text_tokens;
        for (h, p) in heads.iter().enumerate() {
            if p.rows() != l || p.cols() != l {
                return Err(FocusError::arg(format!(
                    "head {h}: attention is {}x{}, expected {l}x{l}",
                    p.rows(),
                    p.cols()
                )));
            }
            for r in 0..l {
                let row = p.row(r);
                if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(FocusError::invalid(format!(
                        "head {h} row {r}: attention entry outside [0,1]"
                    )));
                }
                let sum: f32 = row.iter().sum();
                if (sum - 1.0).abs() > SOFTMAX_ROW_TOL {
                    return Err(FocusError::invalid(format!(
                        "head {h} row {r}: attention row sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self {
            heads,
            image_tokens,
            text_tokens,
        })
    }

    pub fn heads(&self) -> &[Matrix] {
        &self.heads
    }

    pub fn image_tokens(&self) -> usize {
        self.image_tokens
    }

    pub fn text_tokens(&self) -> usize {
        self.text_tokens
    }

    /// Text-to-image block (`T x M`) of one head.
    pub fn text_to_image(&self, head: usize) -> Matrix {
        self.heads[head].block(self.image_tokens, self.text_tokens, 0, self.image_tokens)
    }
}

/// Per-image-token importance, each score in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector(Vec<f32>);

impl ImportanceVector {
    pub fn new(scores: Vec<f32>) -> Result<Self> {
        if let Some((j, v)) = scores.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(FocusError::invalid(format!("importance score {j} = {v} outside [0,1]")));
        }
        Ok(Self(scores))
    }

    pub fn scores(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `s_j = max over heads and text rows of I[i][j]`.
pub fn importance_scores(attn: &AttentionScores) -> Result<ImportanceVector> {
    if attn.text_tokens == 0 {
        return Err(FocusError::invalid("no text tokens; importance undefined"));
    }
    let blocks: Vec<Matrix> = (0..attn.heads.len()).map(|h| attn.text_to_image(h)).collect();
    importance_from_blocks(&blocks)
}

/// Importance from the per-head `T x M` text-to-image blocks directly.
pub fn importance_from_blocks(blocks: &[Matrix]) -> Result<ImportanceVector> {
    let first = blocks
        .first()
        .ok_or_else(|| FocusError::invalid("no attention heads; importance undefined"))?;
    if first.rows() == 0 {
        return Err(FocusError::invalid("no text tokens; importance undefined"));
    }
    let m = first.cols();
    let mut s = vec![0.0f32; m];
    for block in blocks {
        if block.cols() != m || block.rows() != first.rows() {
            return Err(FocusError::arg("importance blocks differ in shape"));
        }
        for i in 0..block.rows() {
            for (sj, &v) in s.iter_mut().zip(block.row(i)) {
                if v > *sj {
                    *sj = v;
                }
            }
        }
    }
    ImportanceVector::new(s)
}

/// Strictly increasing token indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RetainedSet(Vec<usize>);

impl RetainedSet {
    /// Validates ordering and that every index is below `universe`.
    pub fn new(indices: Vec<usize>, universe: usize) -> Result<Self> {
        let set = Self::from_indices(indices)?;
        if let Some(&last) = set.0.last() {
            if last >= universe {
                return Err(FocusError::Range {
                    what: "retained index",
                    value: last,
                    bound: universe,
                });
            }
        }
        Ok(set)
    }

    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FocusError::invalid("retained indices must be strictly increasing"));
        }
        Ok(Self(indices))
    }

    pub fn all(m: usize) -> Self {
        Self((0..m).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f32,
    idx: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Greater means more important: higher score, then lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Streaming top-k over the importance vector.
///
/// Candidates arrive in index order and a bounded heap keeps the `k` best seen
/// so far; ties go to the lower index. The result is sorted by index.
pub fn top_k_select(s: &ImportanceVector, k: usize) -> Result<RetainedSet> {
    let m = s.len();
    if k > m {
        return Err(FocusError::arg(format!("top-k: k = {k} exceeds M = {m}")));
    }
    if k == m {
        return Ok(RetainedSet::all(m));
    }
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::with_capacity(k + 1);
    for (idx, &score) in s.scores().iter().enumerate() {
        let cand = Candidate { score, idx };
        if heap.len() < k {
            heap.push(Reverse(cand));
        } else if let Some(Reverse(worst)) = heap.peek() {
            if cand > *worst {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }
    }
    let mut indices: Vec<usize> = heap.into_iter().map(|Reverse(c)| c.idx).collect();
    indices.sort_unstable();
    Ok(RetainedSet(indices))
}

/// Bubble-sorter latency `⌈M·k/a⌉`.
pub fn sorter_cycles(m: usize, k: usize, a: usize) -> u64 {
    let a = a.max(1) as u128;
    ((m as u128 * k as u128).div_ceil(a)) as u64
}

/// Image-attention cycles over sorter cycles: `(M+T)·h·n / (k·b)`.
pub fn attention_overlap_ratio(m: usize, t: usize, h: usize, n: usize, k: usize, b: usize) -> f64 {
    ((m + t) as f64 * h as f64 * n as f64) / (k as f64 * b as f64)
}

/// True when the sorter finishes strictly before image attention.
pub fn sorter_hidden(m: usize, t: usize, h: usize, n: usize, k: usize, b: usize) -> bool {
    attention_overlap_ratio(m, t, h, n, k, b) > 1.0
}

/// Keeps the image rows at the given positions (indices into the grid's
/// current image rows), preserving their coordinates. Text rows are untouched.
pub fn semantic_prune(grid: &TokenGrid, retained: &RetainedSet) -> Result<TokenGrid> {
    let rows = grid.image_rows();
    if let Some(&last) = retained.indices().last() {
        if last >= rows {
            return Err(FocusError::Range {
                what: "retained index",
                value: last,
                bound: rows,
            });
        }
    }
    let coords = retained.indices().iter().map(|&i| grid.coords()[i]).collect();
    let image = grid.image().select_rows(retained.indices());
    TokenGrid::with_coords(*grid.dims(), coords, image, grid.text().clone())
}

/// Delta-coded retained positions: first index, then gaps to the previous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetEncoding(Vec<usize>);

impl OffsetEncoding {
    pub fn from_deltas(deltas: Vec<usize>) -> Self {
        Self(deltas)
    }

    pub fn deltas(&self) -> &[usize] {
        &self.0
    }

    /// Storage cost at one byte per entry.
    pub fn byte_len(&self) -> usize {
        self.0.len()
    }
}

pub fn encode_offsets(retained: &RetainedSet) -> OffsetEncoding {
    let mut prev = 0usize;
    let deltas = retained
        .indices()
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            let d = if i == 0 { idx } else { idx - prev };
            prev = idx;
            d
        })
        .collect();
    OffsetEncoding(deltas)
}

pub fn decode_offsets(enc: &OffsetEncoding) -> Result<RetainedSet> {
    let mut out = Vec::with_capacity(enc.0.len());
    let mut acc = 0usize;
    for (i, &d) in enc.0.iter().enumerate() {
        if i > 0 && d < 1 {
            return Err(FocusError::invalid(format!(
                "offset delta at position {i} is {d}; must be >= 1"
            )));
        }
        acc = acc
            .checked_add(d)
            .ok_or_else(|| FocusError::invalid("offset prefix sum overflows"))?;
        out.push(acc);
    }
    Ok(RetainedSet(out))
}

/// Fraction of the latest schedule entry at or before `layer`; 1.0 before the first.
pub fn retention_for_layer(schedule: &RetentionSchedule, layer: usize) -> f64 {
    schedule
        .entries()
        .iter()
        .take_while(|(l, _)| *l <= layer)
        .last()
        .map_or(1.0, |&(_, f)| f)
}

/// `k = ⌈fraction · M_original⌉`.
pub fn retained_count(fraction: f64, m_original: usize) -> usize {
    // Absorb representation error so that e.g. 0.3·10 yields 3, not 4.
    let raw = fraction * m_original as f64;
    let k = (raw - 1e-9 * raw.abs().max(1.0)).ceil().max(0.0) as usize;
    k.min(m_original)
}

/// Whether the SEC runs at `layer`: the scheduled fraction differs from the previous layer's.
pub fn prunes_at(schedule: &RetentionSchedule, layer: usize) -> bool {
    let prev = if layer == 0 {
        1.0
    } else {
        retention_for_layer(schedule, layer - 1)
    };
    retention_for_layer(schedule, layer) != prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(v: &[f32]) -> ImportanceVector {
        ImportanceVector::new(v.to_vec()).unwrap()
    }

    fn sort_oracle(s: &[f32], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        let mut top = idx[..k].to_vec();
        top.sort_unstable();
        top
    }

    #[test]
    fn importance_single_row() {
        let i = Matrix::from_rows(&[vec![0.2, 0.5, 0.3]]).unwrap();
        assert_eq!(importance_from_blocks(&[i]).unwrap().scores(), &[0.2, 0.5, 0.3]);
    }

    #[test]
    fn importance_two_heads_two_rows() {
        let h1 = Matrix::from_rows(&[vec![0.1, 0.4], vec![0.3, 0.2]]).unwrap();
        let h2 = Matrix::from_rows(&[vec![0.05, 0.6], vec![0.2, 0.1]]).unwrap();
        assert_eq!(importance_from_blocks(&[h1, h2]).unwrap().scores(), &[0.3, 0.6]);
    }

    #[test]
    fn importance_zero_column() {
        let i = Matrix::from_rows(&[vec![0.0, 0.7], vec![0.0, 0.1]]).unwrap();
        assert_eq!(importance_from_blocks(&[i]).unwrap().scores()[0], 0.0);
    }

    #[test]
    fn importance_from_full_attention() {
        // M = 2, T = 1: rows are [img0, img1, txt0].
        let p = Matrix::from_rows(&[vec![0.5, 0.25, 0.25], vec![0.2, 0.6, 0.2], vec![0.7, 0.1, 0.2]]).unwrap();
        let attn = AttentionScores::new(vec![p], 2, 1).unwrap();
        assert_eq!(importance_scores(&attn).unwrap().scores(), &[0.7, 0.1]);
    }

    #[test]
    fn no_text_tokens_is_an_error() {
        let attn = AttentionScores::new(vec![Matrix::identity(2)], 2, 0).unwrap();
        let err = importance_scores(&attn).unwrap_err();
        assert!(err.to_string().contains("no text tokens"));
    }

    #[test]
    fn attention_rows_must_be_normalized() {
        let p = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
        assert!(AttentionScores::new(vec![p], 1, 1).is_err());
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_select(&iv(&[0.1, 0.9, 0.5, 0.7]), 2).unwrap().indices(), &[1, 3]);
        assert_eq!(top_k_select(&iv(&[0.5, 0.5, 0.2]), 1).unwrap().indices(), &[0]);
        assert_eq!(top_k_select(&iv(&[0.3, 0.1, 0.2]), 3).unwrap().indices(), &[0, 1, 2]);
        assert!(top_k_select(&iv(&[0.3]), 2).is_err());
    }

    #[test]
    fn sorter_cycle_examples() {
        assert_eq!(sorter_cycles(6272, 2509, 32), 491_764);
        assert_eq!(sorter_cycles(6272, 0, 32), 0);
        assert_eq!(sorter_cycles(32, 1, 32), 1);
        assert_eq!(sorter_cycles(33, 1, 32), 2);
    }

    #[test]
    fn overlap_ratio_examples() {
        let r = attention_overlap_ratio(6272, 109, 128, 28, 2509, 32);
        assert!((r - 22_869_504.0 / 80_288.0).abs() < 1e-9);
        assert!((r - 284.84).abs() < 0.01);
        assert!(sorter_hidden(6272, 109, 128, 28, 2509, 32));
        // (M+T)·h·n = k·b exactly: 8·4·1 = 32·1.
        assert_eq!(attention_overlap_ratio(8, 0, 4, 1, 32, 1), 1.0);
        assert!(!sorter_hidden(8, 0, 4, 1, 32, 1));
        let r2 = attention_overlap_ratio(100, 10, 64, 4, 50, 64);
        assert_eq!(r2 * 2.0, attention_overlap_ratio(100, 10, 64, 4, 50, 32));
    }

    #[test]
    fn sorter_hidden_for_every_scheduled_k() {
        let m = 6272;
        for &(_, f) in RetentionSchedule::focus_default().entries() {
            let k = retained_count(f, m);
            assert!(sorter_hidden(m, 109, 128, 28, k, 32), "k = {k}");
        }
    }

    #[test]
    fn offset_examples() {
        let set = RetainedSet::from_indices(vec![3, 5, 9, 10]).unwrap();
        assert_eq!(encode_offsets(&set).deltas(), &[3, 2, 4, 1]);
        let one = RetainedSet::from_indices(vec![0]).unwrap();
        assert_eq!(encode_offsets(&one).deltas(), &[0]);
        let all = RetainedSet::all(5);
        assert_eq!(encode_offsets(&all).deltas(), &[0, 1, 1, 1, 1]);
        assert_eq!(
            decode_offsets(&OffsetEncoding::from_deltas(vec![3, 2, 4, 1])).unwrap(),
            set
        );
        assert!(decode_offsets(&OffsetEncoding::from_deltas(vec![3, 0])).is_err());
    }

    #[test]
    fn retention_lookup() {
        let s = RetentionSchedule::focus_default();
        assert_eq!(retention_for_layer(&s, 2), 1.0);
        assert_eq!(retention_for_layer(&s, 3), 0.40);
        assert_eq!(retention_for_layer(&s, 5), 0.40);
        assert_eq!(retention_for_layer(&s, 26), 0.10);
        assert_eq!(retention_for_layer(&s, 27), 0.10);
        assert_eq!(retained_count(0.40, 6272), 2509);
        assert_eq!(retained_count(0.3, 10), 3);
        assert_eq!(retained_count(0.01, 10), 1);
        assert!(prunes_at(&s, 3));
        assert!(!prunes_at(&s, 4));
        assert!(prunes_at(&RetentionSchedule(vec![(0, 0.5)]), 0));
    }

    #[test]
    fn prune_keeps_coordinates() {
        use crate::config::Dims;
        let d = Dims {
            frames: 1,
            rows: 2,
            cols: 2,
            text_tokens: 1,
            d_model: 2,
            heads: 1,
            head_dim: 2,
        };
        let img = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0], vec![6.0, 7.0]]).unwrap();
        let txt = Matrix::from_rows(&[vec![9.0, 9.0]]).unwrap();
        let g = TokenGrid::new(d, img.clone(), txt.clone()).unwrap();
        assert_eq!(semantic_prune(&g, &RetainedSet::all(4)).unwrap(), g);
        let single = semantic_prune(&g, &RetainedSet::from_indices(vec![0]).unwrap()).unwrap();
        assert_eq!(single.coords(), &[crate::grid::Coord::new(0, 0, 0)]);
        assert_eq!(single.text(), &txt);
        let two = semantic_prune(&g, &RetainedSet::from_indices(vec![1, 3]).unwrap()).unwrap();
        assert_eq!(two.image(), &img.select_rows(&[1, 3]));
        assert_eq!(two.coords()[1], crate::grid::Coord::new(0, 1, 1));
    }

    proptest! {
        #[test]
        fn top_k_matches_sort_oracle(
            s in proptest::collection::vec(0u8..16, 1..300),
            kf in 0.0f64..=1.0,
        ) {
            // Coarse quantization forces plenty of ties.
            let s: Vec<f32> = s.into_iter().map(|v| f32::from(v) / 15.0).collect();
            let k = ((s.len() as f64) * kf).round() as usize;
            let got = top_k_select(&iv(&s), k).unwrap();
            let want = sort_oracle(&s, k);
            prop_assert_eq!(got.indices(), want.as_slice());
        }

        #[test]
        fn head_permutation_leaves_importance_unchanged(
            vals in proptest::collection::vec(0.0f32..=1.0, 3 * 2 * 5),
        ) {
            let blocks: Vec<Matrix> = vals
                .chunks(10)
                .map(|c| Matrix::from_vec(2, 5, c.to_vec()).unwrap())
                .collect();
            let a = importance_from_blocks(&blocks).unwrap();
            let rev: Vec<Matrix> = blocks.iter().rev().cloned().collect();
            let rot = vec![blocks[1].clone(), blocks[2].clone(), blocks[0].clone()];
            prop_assert_eq!(&a, &importance_from_blocks(&rev).unwrap());
            prop_assert_eq!(&a, &importance_from_blocks(&rot).unwrap());
        }

        #[test]
        fn offset_round_trip(mask in proptest::collection::vec(any::<bool>(), 0..500)) {
            let idx: Vec<usize> = mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect();
            let set = RetainedSet::from_indices(idx).unwrap();
            let enc = encode_offsets(&set);
            prop_assert_eq!(enc.deltas().len(), set.len());
            prop_assert_eq!(decode_offsets(&enc).unwrap(), set);
        }
    }
}
