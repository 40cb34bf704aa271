//! Token coordinates and the per-layer token grid.

use crate::config::Dims;
use crate::error::{FocusError, Result};
use crate::matrix::Matrix;

/// Spatiotemporal position of an image token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub f: usize,
    pub r: usize,
    pub c: usize,
}

impl Coord {
    pub const fn new(f: usize, r: usize, c: usize) -> Self {
        Self { f, r, c }
    }
}

/// FHW linear index `f·H·W + r·W + c`.
pub fn fhw_linearize(f: usize, r: usize, c: usize, dims: &Dims) -> Result<usize> {
    if f >= dims.frames {
        return Err(FocusError::Range {
            what: "frame index",
            value: f,
            bound: dims.frames,
        });
    }
    if r >= dims.rows {
        return Err(FocusError::Range {
            what: "row index",
            value: r,
            bound: dims.rows,
        });
    }
    if c >= dims.cols {
        return Err(FocusError::Range {
            what: "column index",
            value: c,
            bound: dims.cols,
        });
    }
    Ok(f * dims.rows * dims.cols + r * dims.cols + c)
}

pub fn fhw_delinearize(idx: usize, dims: &Dims) -> Result<Coord> {
    let m = dims.image_tokens();
    if idx >= m {
        return Err(FocusError::Range {
            what: "token index",
            value: idx,
            bound: m,
        });
    }
    let hw = dims.rows * dims.cols;
    let f = idx / hw;
    let rem = idx % hw;
    Ok(Coord::new(f, rem / dims.cols, rem % dims.cols))
}

#[inline]
pub(crate) fn linear_unchecked(c: Coord, dims: &Dims) -> usize {
    c.f * dims.rows * dims.cols + c.r * dims.cols + c.c
}

/// Visual tokens tagged with their coordinates, followed by a text block.
///
/// Image rows are always in strictly ascending FHW order. After semantic
/// pruning the grid holds only the surviving rows, each still carrying its
/// original coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    dims: Dims,
    coords: Vec<Coord>,
    image: Matrix,
    text: Matrix,
}

impl TokenGrid {
    /// Full grid: `image` must have exactly M = F·H·W rows in FHW order.
    pub fn new(dims: Dims, image: Matrix, text: Matrix) -> Result<Self> {
        let m = dims.image_tokens();
        if image.rows() != m {
            return Err(FocusError::invalid(format!(
                "image block has {} rows but F*H*W = {m}",
                image.rows()
            )));
        }
        let coords = (0..m).map(|i| fhw_delinearize(i, &dims)).collect::<Result<Vec<_>>>()?;
        Self::with_coords(dims, coords, image, text)
    }

    /// Grid holding an explicit, strictly FHW-ascending subset of image tokens.
    pub fn with_coords(dims: Dims, coords: Vec<Coord>, image: Matrix, text: Matrix) -> Result<Self> {
        if coords.len() != image.rows() {
            return Err(FocusError::invalid(format!(
                "{} coordinates for {} image rows",
                coords.len(),
                image.rows()
            )));
        }
        if text.rows() != dims.text_tokens {
            return Err(FocusError::invalid(format!(
                "text block has {} rows, dims.text_tokens = {}",
                text.rows(),
                dims.text_tokens
            )));
        }
        for (name, mat) in [("image", &image), ("text", &text)] {
            if mat.rows() > 0 && mat.cols() != dims.d_model {
                return Err(FocusError::invalid(format!(
                    "{name} block width {} != d_model {}",
                    mat.cols(),
                    dims.d_model
                )));
            }
        }
        let mut prev: Option<usize> = None;
        for &c in &coords {
            let idx = fhw_linearize(c.f, c.r, c.c, &dims)?;
            if prev.is_some_and(|p| idx <= p) {
                return Err(FocusError::invalid(format!(
                    "image coordinates not strictly ascending in FHW order at {c:?}"
                )));
            }
            prev = Some(idx);
        }
        Ok(Self {
            dims,
            coords,
            image,
            text,
        })
    }

    /// Re-labels the grid with `dims`, which must agree on F, H, W, T and width.
    pub fn with_dims(mut self, dims: Dims) -> Result<TokenGrid> {
        let d = &self.dims;
        for (field, have, want) in [
            ("frames", d.frames, dims.frames),
            ("rows", d.rows, dims.rows),
            ("cols", d.cols, dims.cols),
            ("text_tokens", d.text_tokens, dims.text_tokens),
            ("d_model", d.d_model, dims.d_model),
        ] {
            if have != want {
                return Err(FocusError::invalid(format!(
                    "dims.{field}: trace has {have}, config has {want}"
                )));
            }
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn image(&self) -> &Matrix {
        &self.image
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    /// Number of image rows currently present (S after pruning, M before).
    pub fn image_rows(&self) -> usize {
        self.coords.len()
    }

    pub fn is_full(&self) -> bool {
        self.coords.len() == self.dims.image_tokens()
    }

    /// FHW linear indices of the image rows present.
    pub fn linear_indices(&self) -> Vec<usize> {
        self.coords.iter().map(|&c| linear_unchecked(c, &self.dims)).collect()
    }

    /// Image rows followed by text rows, as one `(S+T) x d_model` matrix.
    pub fn concat(&self) -> Matrix {
        let mut out = Matrix::zeros(self.image.rows() + self.text.rows(), self.dims.d_model);
        out.put_block(0, 0, &self.image);
        out.put_block(self.image.rows(), 0, &self.text);
        out
    }

    /// Splits an `(S+T)`-row matrix back into a grid with this grid's coordinates.
    pub fn replace_values(&self, values: &Matrix) -> Result<TokenGrid> {
        let s = self.coords.len();
        if values.rows() != s + self.text.rows() {
            return Err(FocusError::arg(format!(
                "replacement has {} rows, grid has {}",
                values.rows(),
                s + self.text.rows()
            )));
        }
        let image = values.block(0, s, 0, values.cols());
        let text = values.block(s, self.text.rows(), 0, values.cols());
        let mut dims = self.dims;
        dims.d_model = values.cols();
        Ok(TokenGrid {
            dims,
            coords: self.coords.clone(),
            image,
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(f: usize, h: usize, w: usize) -> Dims {
        Dims {
            frames: f,
            rows: h,
            cols: w,
            text_tokens: 0,
            d_model: 4,
            heads: 1,
            head_dim: 4,
        }
    }

    #[test]
    fn linearize_examples() {
        let d = dims(2, 2, 3);
        assert_eq!(fhw_linearize(0, 0, 0, &d).unwrap(), 0);
        assert_eq!(fhw_linearize(1, 0, 0, &d).unwrap(), 6);
        assert_eq!(fhw_linearize(1, 1, 2, &d).unwrap(), 11);
    }

    #[test]
    fn delinearize_examples() {
        let d = dims(2, 2, 3);
        assert_eq!(fhw_delinearize(0, &d).unwrap(), Coord::new(0, 0, 0));
        assert_eq!(fhw_delinearize(11, &d).unwrap(), Coord::new(1, 1, 2));
        assert!(matches!(
            fhw_delinearize(12, &d),
            Err(FocusError::Range { value: 12, .. })
        ));
    }

    #[test]
    fn out_of_range_coordinates() {
        let d = dims(2, 2, 3);
        assert!(fhw_linearize(2, 0, 0, &d).is_err());
        assert!(fhw_linearize(0, 2, 0, &d).is_err());
        assert!(fhw_linearize(0, 0, 3, &d).is_err());
    }

    #[test]
    fn grid_rejects_wrong_row_count() {
        let mut d = dims(2, 2, 2);
        d.text_tokens = 1;
        let err = TokenGrid::new(d, Matrix::zeros(7, 4), Matrix::zeros(1, 4));
        assert!(err.is_err());
        TokenGrid::new(d, Matrix::zeros(8, 4), Matrix::zeros(1, 4)).unwrap();
    }

    #[test]
    fn grid_rejects_unsorted_coords() {
        let d = dims(1, 2, 2);
        let coords = vec![Coord::new(0, 1, 0), Coord::new(0, 0, 1)];
        assert!(TokenGrid::with_coords(d, coords, Matrix::zeros(2, 4), Matrix::zeros(0, 4)).is_err());
    }

    proptest! {
        #[test]
        fn linearize_round_trip(f in 1usize..=16, h in 1usize..=16, w in 1usize..=16) {
            let d = dims(f, h, w);
            for idx in 0..d.image_tokens() {
                let c = fhw_delinearize(idx, &d).unwrap();
                prop_assert_eq!(fhw_linearize(c.f, c.r, c.c, &d).unwrap(), idx);
            }
        }
    }
}
