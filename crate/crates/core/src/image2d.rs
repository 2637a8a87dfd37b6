//! Small dense 2D buffers used for images, depth maps and masks.

/// Row-major 2D grid of `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Map2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Map2<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Map2<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        let w = self.width;
        &mut self.data[y * w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let w = self.width;
        self.data[y * w + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Map2<U> {
        Map2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// RGB image with channels in [0,1].
pub type ColorMap = Map2<[f64; 3]>;
/// Scalar per-pixel map (depth in meters, alpha, weights, ...).
pub type ScalarMap = Map2<f64>;
/// Boolean per-pixel mask.
pub type BoolMap = Map2<bool>;

impl ScalarMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, 0.0)
    }
}

impl ColorMap {
    pub fn black(width: usize, height: usize) -> Self {
        Self::new(width, height, [0.0; 3])
    }
}
