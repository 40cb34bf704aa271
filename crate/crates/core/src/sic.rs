//! Similarity concentration: conflict-free layouter addressing, block-wise
//! cosine matching (gather), and reconstruction from the similarity map
//! (scatter).

use std::collections::HashMap;

use crate::config::{BlockConfig, Dims, SimThreshold};
use crate::error::{FocusError, Result};
use crate::grid::Coord;
use crate::matrix::Matrix;
use crate::wire::{Reader, Writer};

/// Layouter bank: `(f mod 2)·4 + (r mod 2)·2 + (c mod 2)`.
#[inline]
pub fn bank_of(f: usize, r: usize, c: usize) -> usize {
    (f % 2) * 4 + (r % 2) * 2 + (c % 2)
}

/// Address within a bank: `⌊r/2⌋·⌈W/2⌉ + ⌊c/2⌋`.
#[inline]
pub fn offset_of(r: usize, c: usize, width: usize) -> usize {
    (r / 2) * width.div_ceil(2) + c / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conflict {
    /// Two members of the window keyed at `key` share a bank.
    Bank {
        key: Coord,
        a: Coord,
        b: Coord,
        bank: usize,
    },
    /// Two tokens of one adjacent-frame pair share a (bank, offset) address.
    Address {
        a: Coord,
        b: Coord,
        bank: usize,
        offset: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictReport {
    pub conflict_free: bool,
    pub windows_checked: usize,
    pub first_conflict: Option<Conflict>,
}

/// Exhaustively checks every (clipped) window position and every adjacent
/// frame pair of the layouter mapping. Only the 2x2x2 window is supported.
pub fn verify_conflict_free(dims: &Dims, block: &BlockConfig) -> Result<ConflictReport> {
    if *block != BlockConfig::new(2, 2, 2) {
        return Err(FocusError::Unsupported(format!(
            "bank mapping is defined only for 2x2x2 windows, got {}x{}x{}",
            block.bf, block.bh, block.bw
        )));
    }
    let (nf, nh, nw) = (dims.frames, dims.rows, dims.cols);
    let mut windows = 0usize;

    for f in 0..nf {
        for r in 0..nh {
            for c in 0..nw {
                windows += 1;
                let mut seen: [Option<Coord>; 8] = [None; 8];
                for df in 0..2 {
                    for dr in 0..2 {
                        for dc in 0..2 {
                            if df > f || dr > r || dc > c {
                                continue;
                            }
                            let m = Coord::new(f - df, r - dr, c - dc);
                            let bank = bank_of(m.f, m.r, m.c);
                            if let Some(prev) = seen[bank] {
                                return Ok(ConflictReport {
                                    conflict_free: false,
                                    windows_checked: windows,
                                    first_conflict: Some(Conflict::Bank {
                                        key: Coord::new(f, r, c),
                                        a: prev,
                                        b: m,
                                        bank,
                                    }),
                                });
                            }
                            seen[bank] = Some(m);
                        }
                    }
                }
            }
        }
    }

    // The layouter holds two frames at a time; every token of a resident pair
    // needs its own address.
    let per_bank = nh.div_ceil(2) * nw.div_ceil(2);
    for f0 in 0..nf.saturating_sub(1).max(1) {
        let mut owner: HashMap<(usize, usize), Coord> = HashMap::with_capacity(8 * per_bank);
        for f in f0..(f0 + 2).min(nf) {
            for r in 0..nh {
                for c in 0..nw {
                    let key = (bank_of(f, r, c), offset_of(r, c, nw));
                    let here = Coord::new(f, r, c);
                    if let Some(prev) = owner.insert(key, here) {
                        return Ok(ConflictReport {
                            conflict_free: false,
                            windows_checked: windows,
                            first_conflict: Some(Conflict::Address {
                                a: prev,
                                b: here,
                                bank: key.0,
                                offset: key.1,
                            }),
                        });
                    }
                }
            }
        }
    }

    Ok(ConflictReport {
        conflict_free: true,
        windows_checked: windows,
        first_conflict: None,
    })
}

/// Euclidean norms of the rows of one tile, computed once per gather.
#[derive(Debug, Clone, PartialEq)]
pub struct L2NormCache(Vec<f32>);

impl L2NormCache {
    pub fn new(rows: &Matrix) -> Self {
        Self((0..rows.rows()).map(|i| l2_norm(rows.row(i))).collect())
    }

    pub fn norms(&self) -> &[f32] {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f32 {
        self.0[i]
    }
}

#[inline]
pub fn l2_norm(v: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for x in v {
        acc += x * x;
    }
    acc.sqrt()
}

#[inline]
fn dot(p: &[f32], q: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (a, b) in p.iter().zip(q) {
        acc += a * b;
    }
    acc
}

/// `p·q / (‖p‖·‖q‖)` with precomputed norms.
///
/// Two all-zero vectors are exact duplicates (1.0); one zero vector against a
/// non-zero one scores 0.0.
pub fn cosine_similarity(p: &[f32], q: &[f32], norm_p: f32, norm_q: f32) -> Result<f32> {
    if p.len() != q.len() {
        return Err(FocusError::arg(format!(
            "cosine of vectors with lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(cosine_unchecked(p, q, norm_p, norm_q))
}

/// Cosine similarity computing both norms on the fly.
pub fn cosine(p: &[f32], q: &[f32]) -> Result<f32> {
    cosine_similarity(p, q, l2_norm(p), l2_norm(q))
}

#[inline]
fn cosine_unchecked(p: &[f32], q: &[f32], norm_p: f32, norm_q: f32) -> f32 {
    match (norm_p == 0.0, norm_q == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => dot(p, q) / (norm_p * norm_q),
    }
}

/// Position tag of one row of an output tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTag {
    Image(Coord),
    /// Text tokens have no spatial position and never merge.
    Text,
}

/// Deduplicated rows of one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactTile {
    pub vectors: Matrix,
    /// Tile-local row that produced each compact vector; strictly increasing.
    pub source_rows: Vec<usize>,
}

impl CompactTile {
    pub fn len(&self) -> usize {
        self.source_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_rows.is_empty()
    }
}

/// For each tile row, the index of its representative compact vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityMap {
    pub rep_index: Vec<usize>,
}

impl SimilarityMap {
    pub fn identity(rows: usize) -> Self {
        Self {
            rep_index: (0..rows).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rep_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rep_index.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.rep_index.iter().enumerate().all(|(i, &r)| i == r)
    }

    /// Checks that indices are `< p`, every compact vector is used, and each
    /// representative is the first row referring to it.
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut first_seen = 0usize;
        for (i, &r) in self.rep_index.iter().enumerate() {
            if r >= p {
                return Err(FocusError::invalid(format!(
                    "similarity map entry {i} = {r} >= p = {p}"
                )));
            }
            if r > first_seen {
                return Err(FocusError::invalid(format!(
                    "similarity map entry {i} = {r} skips compact vector {first_seen}"
                )));
            }
            if r == first_seen {
                first_seen += 1;
            }
        }
        if first_seen != p {
            return Err(FocusError::invalid(format!(
                "similarity map references {first_seen} of {p} compact vectors"
            )));
        }
        Ok(())
    }

    /// Tile row of each representative, recovered from first occurrences.
    pub fn source_rows(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, &r) in self.rep_index.iter().enumerate() {
            if r == out.len() {
                out.push(i);
            }
        }
        out
    }
}

/// Block-wise similarity gather over one output tile.
///
/// Rows are visited in order; each image row is the key of the window
/// `[f-bf+1..f] x [r-bh+1..r] x [c-bw+1..c]` restricted to rows present in
/// this tile. The best candidate at or above the threshold (highest cosine,
/// ties to the lower index) lends its representative; otherwise the row
/// becomes a new compact vector.
pub fn gather_tile(
    rows: &Matrix,
    tags: &[RowTag],
    block: &BlockConfig,
    threshold: SimThreshold,
) -> Result<(CompactTile, SimilarityMap)> {
    if tags.len() != rows.rows() {
        return Err(FocusError::arg(format!("{} tags for {} rows", tags.len(), rows.rows())));
    }
    block.validate()?;
    validate_tag_order(tags)?;

    let m = rows.rows();
    let Some(thr) = threshold.value() else {
        return Ok((
            CompactTile {
                vectors: rows.clone(),
                source_rows: (0..m).collect(),
            },
            SimilarityMap::identity(m),
        ));
    };

    let norms = L2NormCache::new(rows);
    let mut present: HashMap<Coord, usize> = HashMap::with_capacity(m);
    let mut rep_index = Vec::with_capacity(m);
    let mut source_rows = Vec::new();

    for (i, tag) in tags.iter().enumerate() {
        let mut winner: Option<(f32, usize)> = None;
        if let RowTag::Image(key) = *tag {
            for df in 0..block.bf.min(key.f + 1) {
                for dr in 0..block.bh.min(key.r + 1) {
                    for dc in 0..block.bw.min(key.c + 1) {
                        if df == 0 && dr == 0 && dc == 0 {
                            continue;
                        }
                        let cand = Coord::new(key.f - df, key.r - dr, key.c - dc);
                        let Some(&j) = present.get(&cand) else {
                            continue;
                        };
                        let sim = cosine_unchecked(rows.row(i), rows.row(j), norms.get(i), norms.get(j));
                        if sim >= thr {
                            let better = match winner {
                                None => true,
                                Some((best, bj)) => sim > best || (sim == best && j < bj),
                            };
                            if better {
                                winner = Some((sim, j));
                            }
                        }
                    }
                }
            }
            present.insert(key, i);
        }
        match winner {
            Some((_, j)) => rep_index.push(rep_index[j]),
            None => {
                rep_index.push(source_rows.len());
                source_rows.push(i);
            }
        }
    }

    let vectors = rows.select_rows(&source_rows);
    Ok((CompactTile { vectors, source_rows }, SimilarityMap { rep_index }))
}

fn validate_tag_order(tags: &[RowTag]) -> Result<()> {
    let mut prev: Option<Coord> = None;
    let mut seen_text = false;
    for tag in tags {
        match tag {
            RowTag::Text => seen_text = true,
            RowTag::Image(c) => {
                if seen_text {
                    return Err(FocusError::invalid("image row after text row in tile"));
                }
                if let Some(p) = prev {
                    if *c == p {
                        return Err(FocusError::invalid(format!("duplicate coordinate {c:?} in tile")));
                    }
                    if (c.f, c.r, c.c) < (p.f, p.r, p.c) {
                        return Err(FocusError::invalid(format!(
                            "tile rows not in FHW order: {c:?} after {p:?}"
                        )));
                    }
                }
                prev = Some(*c);
            }
        }
    }
    Ok(())
}

/// Replicates each compact row to every tile row that maps to it.
pub fn scatter_tile(compact_partial: &Matrix, map: &SimilarityMap) -> Result<Matrix> {
    let p = compact_partial.rows();
    if let Some((i, &r)) = map.rep_index.iter().enumerate().find(|(_, &r)| r >= p) {
        return Err(FocusError::arg(format!(
            "similarity map entry {i} = {r} but compact tile has {p} rows"
        )));
    }
    Ok(compact_partial.select_rows(&map.rep_index))
}

/// Matcher latency: one norm plus `volume-1` comparisons per row.
pub fn matcher_cycles(rows: usize, block: &BlockConfig) -> u64 {
    (block.volume() * rows) as u64
}

pub const COMPACT_MAGIC: &[u8; 4] = b"FCCT";
pub const COMPACT_VERSION: u16 = 1;

/// Serialized size of one tile record: `p`, `p·n` values, `m'` map entries.
pub fn compact_record_bytes(p: usize, n: usize, rows: usize) -> usize {
    4 + p * n * 4 + rows * 4
}

/// Encodes row-tiled compact outputs.
///
/// Header: `"FCCT" | version u16 | n | m | total_rows | tile_count` (u32).
/// Each tile then stores `p`, `p·n` f32 values and `m'` u32 map entries; `m'`
/// is `m` for every tile but the last.
pub fn encode_compact_tiles(tiles: &[(CompactTile, SimilarityMap)], n: usize, m: usize) -> Result<Vec<u8>> {
    let total_rows: usize = tiles.iter().map(|(_, map)| map.len()).sum();
    let mut w = Writer::new();
    w.bytes(COMPACT_MAGIC);
    w.u16(COMPACT_VERSION);
    w.usize_as_u32(n, "n")?;
    w.usize_as_u32(m, "m")?;
    w.usize_as_u32(total_rows, "total_rows")?;
    w.usize_as_u32(tiles.len(), "tile_count")?;
    for (t, (tile, map)) in tiles.iter().enumerate() {
        let expected_rows = if t + 1 < tiles.len() { m } else { total_rows - m * t };
        if map.len() != expected_rows {
            return Err(FocusError::arg(format!(
                "tile {t} has {} rows, expected {expected_rows}",
                map.len()
            )));
        }
        if tile.vectors.rows() > 0 && tile.vectors.cols() != n {
            return Err(FocusError::arg(format!(
                "tile {t} width {} != n = {n}",
                tile.vectors.cols()
            )));
        }
        w.usize_as_u32(tile.len(), "p")?;
        w.f32s(tile.vectors.as_slice());
        for &r in &map.rep_index {
            w.usize_as_u32(r, "map_entry")?;
        }
    }
    Ok(w.finish())
}

/// `(n, m, tiles)` as stored by [`encode_compact_tiles`].
pub type DecodedCompactTiles = (usize, usize, Vec<(CompactTile, SimilarityMap)>);

pub fn decode_compact_tiles(bytes: &[u8]) -> Result<DecodedCompactTiles> {
    let mut r = Reader::new(bytes);
    r.magic(COMPACT_MAGIC)?;
    let version = r.u16("version")?;
    if version != COMPACT_VERSION {
        return Err(FocusError::format("version", format!("unsupported version {version}")));
    }
    let n = r.usize("n")?;
    let m = r.usize("m")?;
    let total_rows = r.usize("total_rows")?;
    let count = r.usize("tile_count")?;
    if m == 0 || total_rows.div_ceil(m) != count {
        return Err(FocusError::format(
            "tile_count",
            format!("{count} tiles inconsistent with {total_rows} rows of tile height {m}"),
        ));
    }
    let mut tiles = Vec::with_capacity(count);
    for t in 0..count {
        let rows = if t + 1 < count { m } else { total_rows - m * t };
        let p = r.usize("p")?;
        if p > rows {
            return Err(FocusError::format("p", format!("tile {t}: p = {p} > rows {rows}")));
        }
        let vectors = Matrix::from_vec(p, n, r.f32s(p * n, "compact_values")?)?;
        let mut rep_index = Vec::with_capacity(rows);
        for _ in 0..rows {
            rep_index.push(r.usize("map_entry")?);
        }
        let map = SimilarityMap { rep_index };
        map.validate(p)
            .map_err(|e| FocusError::format("map_entry", e.to_string()))?;
        let source_rows = map.source_rows();
        tiles.push((CompactTile { vectors, source_rows }, map));
    }
    r.finish()?;
    Ok((n, m, tiles))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(f: usize, h: usize, w: usize) -> Dims {
        Dims {
            frames: f,
            rows: h,
            cols: w,
            text_tokens: 0,
            d_model: 1,
            heads: 1,
            head_dim: 1,
        }
    }

    fn image_tags(d: &Dims) -> Vec<RowTag> {
        (0..d.image_tokens())
            .map(|i| RowTag::Image(crate::grid::fhw_delinearize(i, d).unwrap()))
            .collect()
    }

    #[test]
    fn bank_examples() {
        assert_eq!(bank_of(0, 0, 0), 0);
        assert_eq!(bank_of(1, 3, 2), 6);
        assert_eq!(bank_of(0, 1, 3), 3);
    }

    #[test]
    fn offset_examples() {
        assert_eq!(offset_of(0, 0, 7), 0);
        assert_eq!(offset_of(3, 2, 4), 3);
        assert_eq!(offset_of(1, 3, 6), 1);
    }

    #[test]
    fn conflict_free_small_grids() {
        let b = BlockConfig::default();
        let r = verify_conflict_free(&dims(4, 4, 4), &b).unwrap();
        assert!(r.conflict_free);
        assert_eq!(r.windows_checked, 64);
        assert!(verify_conflict_free(&dims(1, 5, 3), &b).unwrap().conflict_free);
    }

    #[test]
    fn non_default_block_is_unsupported() {
        let err = verify_conflict_free(&dims(2, 2, 2), &BlockConfig::new(1, 2, 2)).unwrap_err();
        assert!(matches!(err, FocusError::Unsupported(_)));
    }

    #[test]
    fn cosine_examples() {
        let p = vec![1.0f32; 32];
        let mut q = vec![1.0f32; 32];
        q[31] = -1.0;
        assert!((cosine(&p, &p).unwrap() - 1.0).abs() < 1e-6);
        assert!((cosine(&p, &q).unwrap() - 0.9375).abs() < 1e-6);
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 2.0, 0.0];
        assert!(cosine(&e1, &e2).unwrap().abs() < 1e-6);
        assert!(cosine(&e1, &e2[..2]).is_err());
    }

    #[test]
    fn zero_vector_conventions() {
        let z = [0.0f32; 4];
        assert_eq!(cosine(&z, &z).unwrap(), 1.0);
        assert_eq!(cosine(&z, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let cache = L2NormCache::new(&Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap());
        assert_eq!(cache.norms(), &[0.0, 5.0]);
    }

    #[test]
    fn identical_rows_collapse_to_origin() {
        let d = dims(2, 2, 2);
        let rows = Matrix::from_vec(8, 4, [0.3f32, -1.0, 2.0, 0.5].repeat(8)).unwrap();
        let (tile, map) = gather_tile(
            &rows,
            &image_tags(&d),
            &BlockConfig::default(),
            SimThreshold::Enabled(0.9),
        )
        .unwrap();
        assert_eq!(tile.len(), 1);
        assert_eq!(tile.source_rows, vec![0]);
        assert_eq!(map.rep_index, vec![0; 8]);
    }

    #[test]
    fn disabled_threshold_is_identity() {
        let d = dims(2, 2, 2);
        let rows = Matrix::from_vec(8, 2, [1.0f32, 1.0].repeat(8)).unwrap();
        let (tile, map) = gather_tile(&rows, &image_tags(&d), &BlockConfig::default(), SimThreshold::DISABLED).unwrap();
        assert_eq!(tile.len(), 8);
        assert!(map.is_identity());
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        let tags = vec![RowTag::Image(Coord::new(0, 0, 0)), RowTag::Image(Coord::new(0, 0, 0))];
        let rows = Matrix::zeros(2, 2);
        assert!(matches!(
            gather_tile(&rows, &tags, &BlockConfig::default(), SimThreshold::Enabled(0.9)),
            Err(FocusError::Validation(_))
        ));
    }

    #[test]
    fn winner_is_most_similar_then_lowest_index() {
        // Key (0,1,1) sees (0,0,0), (0,0,1), (0,1,0).
        let tags: Vec<RowTag> = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]
            .iter()
            .map(|&(f, r, c)| RowTag::Image(Coord::new(f, r, c)))
            .collect();
        let rows = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.05, 1.0, 0.0],
        ])
        .unwrap();
        let (tile, map) = gather_tile(&rows, &tags, &BlockConfig::default(), SimThreshold::Enabled(0.9)).unwrap();
        assert_eq!(tile.len(), 3);
        assert_eq!(map.rep_index, vec![0, 1, 2, 1]);

        // Equal similarity to (0,0,1) and (0,1,0): the lower index wins.
        let rows = Matrix::from_rows(&[
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let (_, map) = gather_tile(&rows, &tags, &BlockConfig::default(), SimThreshold::Enabled(0.9)).unwrap();
        assert_eq!(map.rep_index, vec![0, 1, 2, 1]);
    }

    #[test]
    fn chained_matches_point_at_representatives() {
        // (0,0,0) -> (0,0,1) -> (0,0,2) each near its left neighbour only.
        let tags: Vec<RowTag> = (0..3).map(|c| RowTag::Image(Coord::new(0, 0, c))).collect();
        let rows = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.4], vec![1.0, 0.8]]).unwrap();
        let (tile, map) = gather_tile(&rows, &tags, &BlockConfig::default(), SimThreshold::Enabled(0.9)).unwrap();
        assert_eq!(map.rep_index, vec![0, 0, 0]);
        assert_eq!(tile.source_rows, vec![0]);
    }

    #[test]
    fn text_rows_never_merge() {
        let tags = vec![RowTag::Image(Coord::new(0, 0, 0)), RowTag::Text, RowTag::Text];
        let rows = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let (tile, map) = gather_tile(&rows, &tags, &BlockConfig::default(), SimThreshold::Enabled(0.5)).unwrap();
        assert_eq!(tile.len(), 3);
        assert!(map.is_identity());
    }

    #[test]
    fn scatter_examples() {
        let c = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(scatter_tile(&c, &SimilarityMap::identity(2)).unwrap(), c);
        let one = Matrix::from_rows(&[vec![5.0, 6.0]]).unwrap();
        let out = scatter_tile(&one, &SimilarityMap { rep_index: vec![0; 3] }).unwrap();
        assert_eq!(out.rows(), 3);
        assert!((0..3).all(|i| out.row(i) == [5.0, 6.0]));
        assert!(scatter_tile(&one, &SimilarityMap { rep_index: vec![0, 1] }).is_err());
    }

    #[test]
    fn matcher_cycle_examples() {
        assert_eq!(matcher_cycles(1024, &BlockConfig::default()), 8192);
        assert_eq!(matcher_cycles(0, &BlockConfig::default()), 0);
        assert_eq!(matcher_cycles(10, &BlockConfig::new(1, 2, 2)), 40);
    }

    #[test]
    fn map_validation() {
        assert!(SimilarityMap {
            rep_index: vec![0, 0, 1]
        }
        .validate(2)
        .is_ok());
        assert!(SimilarityMap {
            rep_index: vec![0, 2, 1]
        }
        .validate(3)
        .is_err());
        assert!(SimilarityMap { rep_index: vec![0, 0] }.validate(2).is_err());
        assert_eq!(
            SimilarityMap {
                rep_index: vec![0, 0, 1, 0, 2]
            }
            .source_rows(),
            vec![0, 2, 4]
        );
    }

    #[test]
    fn compact_container_round_trip() {
        let d = dims(2, 2, 3);
        let tags = image_tags(&d);
        let rows = Matrix::from_vec(12, 2, (0..24).map(|v| (v % 4) as f32).collect()).unwrap();
        let th = SimThreshold::Enabled(0.99);
        let t0 = gather_tile(&rows.block(0, 8, 0, 2), &tags[..8], &BlockConfig::default(), th).unwrap();
        let t1 = gather_tile(&rows.block(8, 4, 0, 2), &tags[8..], &BlockConfig::default(), th).unwrap();
        let tiles = vec![t0, t1];
        let bytes = encode_compact_tiles(&tiles, 2, 8).unwrap();
        let expected: usize = 22
            + tiles
                .iter()
                .map(|(t, m)| compact_record_bytes(t.len(), 2, m.len()))
                .sum::<usize>();
        assert_eq!(bytes.len(), expected);
        let (n, m, back) = decode_compact_tiles(&bytes).unwrap();
        assert_eq!((n, m), (2, 8));
        assert_eq!(back, tiles);
    }
}
