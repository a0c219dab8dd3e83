use serde::{Deserialize, Serialize};

use super::NumericError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "({n},)"),
            Shape::Matrix(r, c) => write!(f, "({r}, {c})"),
        }
    }
}

/// Row-major array of `f64`, either a vector or a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArray", into = "RawArray")]
pub struct DenseArray {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != shape.len() {
            return Err(NumericError::Shape(format!(
                "{} values do not fill shape {shape}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        Self::new(Shape::Matrix(rows, cols), data)
    }

    pub fn scalar(x: f64) -> Self {
        Self::vector(vec![x])
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(rows, cols)`; a vector of length `n` reports `(1, n)`.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape {
            Shape::Vector(n) => (1, n),
            Shape::Matrix(r, c) => (r, c),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = self.dims();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self) -> Result<(), NumericError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NumericError::NonFinite)
        }
    }

    pub fn add_assign(&mut self, other: &DenseArray) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseArray) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct RawArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawArray> for DenseArray {
    type Error = NumericError;

    fn try_from(raw: RawArray) -> Result<Self, Self::Error> {
        let shape = match raw.shape[..] {
            [n] => Shape::Vector(n),
            [r, c] => Shape::Matrix(r, c),
            _ => return Err(NumericError::Shape(format!("unsupported rank {}", raw.shape.len()))),
        };
        DenseArray::new(shape, raw.data)
    }
}

impl From<DenseArray> for RawArray {
    fn from(a: DenseArray) -> Self {
        let shape = match a.shape {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        };
        RawArray { shape, data: a.data }
    }
}
