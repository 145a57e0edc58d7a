use ndarray::{s, Array3, ArrayView2, ArrayView3, ArrayViewMut3};

use crate::error::{Error, Result};

/// A `B × W × C` block of windows: batch, timesteps, channels.
///
/// The shape is fixed at construction. Mutable access is only handed out as
/// views, which cannot change it.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch3(Array3<f64>);

impl Batch3 {
    /// Wraps an array, forcing standard (row-major) layout.
    pub fn new(data: Array3<f64>) -> Self {
        if data.is_standard_layout() {
            Batch3(data)
        } else {
            Batch3(data.as_standard_layout().into_owned())
        }
    }

    pub fn zeros(batch: usize, time: usize, channels: usize) -> Self {
        Batch3(Array3::zeros((batch, time, channels)))
    }

    pub fn from_vec(batch: usize, time: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = batch * time * channels;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{batch}x{time}x{channels} batch needs {expected} values, got {}",
                data.len()
            )));
        }
        Array3::from_shape_vec((batch, time, channels), data)
            .map(Batch3)
            .map_err(|e| Error::Dimension(e.to_string()))
    }

    /// `(batch, time, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.0.dim()
    }

    pub fn batch(&self) -> usize {
        self.0.dim().0
    }

    pub fn time(&self) -> usize {
        self.0.dim().1
    }

    pub fn channels(&self) -> usize {
        self.0.dim().2
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.0.view()
    }

    pub fn view_mut(&mut self) -> ArrayViewMut3<'_, f64> {
        self.0.view_mut()
    }

    pub fn array(&self) -> &Array3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.0
    }

    /// One `W × C` window.
    pub fn window(&self, b: usize) -> ArrayView2<'_, f64> {
        self.0.slice(s![b, .., ..])
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0
            .as_slice()
            .expect("Batch3 is always in standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.0
            .as_slice_mut()
            .expect("Batch3 is always in standard layout")
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_same_shape(&self, other: &Batch3, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

impl From<Array3<f64>> for Batch3 {
    fn from(data: Array3<f64>) -> Self {
        Batch3::new(data)
    }
}
