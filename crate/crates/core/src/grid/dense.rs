use crate::error::{Error, Result};

/// Dense row-major 2D grid indexed by `(row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T: Clone + Default> Grid2<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::default())
    }
}

impl<T> Grid2<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(&[rows * cols], &[data.len()]));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[self.offset(row, col)]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        let o = self.offset(row, col);
        &mut self.data[o]
    }

    /// Bounds-checked access with signed indices.
    pub fn checked(&self, row: i64, col: i64) -> Option<&T> {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        *self.get_mut(row, col) = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Iterates `((row, col), value)` in storage order.
    pub fn indexed(&self) -> impl Iterator<Item = ((usize, usize), &T)> + '_ {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(o, v)| ((o / cols, o % cols), v))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid2<U> {
        Grid2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(&[dims.0, dims.1], &[self.rows, self.cols]));
        }
        Ok(())
    }
}

/// Dense 3D grid indexed by `(i, j, k)`; `i` outermost, `k` innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid3<T> {
    dims: (usize, usize, usize),
    data: Vec<T>,
}

impl<T: Clone> Grid3<T> {
    pub fn filled(dims: (usize, usize, usize), value: T) -> Self {
        Self {
            dims,
            data: vec![value; dims.0 * dims.1 * dims.2],
        }
    }
}

impl<T: Clone + Default> Grid3<T> {
    pub fn new(dims: (usize, usize, usize)) -> Self {
        Self::filled(dims, T::default())
    }
}

impl<T> Grid3<T> {
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if data.len() != n {
            return Err(Error::dims(&[n], &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                for k in 0..dims.2 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> &T {
        &self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut T {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        *self.get_mut(i, j, k) = value;
    }

    /// The `L` values of column `(i, j)`.
    #[inline]
    pub fn column(&self, i: usize, j: usize) -> &[T] {
        let start = self.offset(i, j, 0);
        &self.data[start..start + self.dims.2]
    }

    #[inline]
    pub fn column_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let start = (i * self.dims.1 + j) * self.dims.2;
        let l = self.dims.2;
        &mut self.data[start..start + l]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid3<U> {
        Grid3 {
            dims: self.dims,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_dims(&self, dims: (usize, usize, usize)) -> Result<()> {
        if self.dims != dims {
            return Err(Error::dims(
                &[dims.0, dims.1, dims.2],
                &[self.dims.0, self.dims.1, self.dims.2],
            ));
        }
        Ok(())
    }
}

impl Grid2<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

impl Grid3<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_is_x_then_y_then_z() {
        let g = Grid3::from_fn((2, 3, 4), |i, j, k| i * 100 + j * 10 + k);
        assert_eq!(g.as_slice()[0..4], [0, 1, 2, 3]);
        assert_eq!(g.as_slice()[4], 10);
        assert_eq!(g.as_slice()[12], 100);
        assert_eq!(g.column(1, 2), &[120, 121, 122, 123]);
        assert_eq!(*g.get(1, 2, 3), 123);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Grid2::from_vec(2, 2, vec![0u8; 3]).is_err());
        assert!(Grid3::from_vec((2, 2, 2), vec![0u8; 8]).is_ok());
    }

    #[test]
    fn checked_access() {
        let g = Grid2::from_fn(2, 2, |i, j| i + j);
        assert_eq!(g.checked(-1, 0), None);
        assert_eq!(g.checked(1, 2), None);
        assert_eq!(g.checked(1, 1), Some(&2));
    }
}
