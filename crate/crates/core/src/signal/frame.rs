use num_complex::Complex64;

use super::scheme::ModulationKind;

/// One pulse as a `2 x L` real array: row 0 in-phase, row 1 quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct IQFrame {
    data: Vec<f64>,
    pub label: Option<u16>,
    pub scheme: ModulationKind,
}

impl IQFrame {
    pub fn from_complex(samples: &[Complex64], scheme: ModulationKind) -> Self {
        let len = samples.len();
        let mut data = vec![0.0; 2 * len];
        for (n, s) in samples.iter().enumerate() {
            data[n] = s.re;
            data[len + n] = s.im;
        }
        Self {
            data,
            label: None,
            scheme,
        }
    }

    /// Builds a frame from the row-major `[I..., Q...]` layout.
    pub fn from_rows(data: Vec<f64>, scheme: ModulationKind, label: Option<u16>) -> Self {
        assert!(data.len() % 2 == 0, "I/Q rows must have equal length");
        Self { data, label, scheme }
    }

    pub fn with_label(mut self, label: Option<u16>) -> Self {
        self.label = label;
        self
    }

    /// Samples per row.
    pub fn len(&self) -> usize {
        self.data.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn i(&self) -> &[f64] {
        &self.data[..self.len()]
    }

    pub fn q(&self) -> &[f64] {
        &self.data[self.len()..]
    }

    /// Row-major `[I..., Q...]`.
    pub fn rows(&self) -> &[f64] {
        &self.data
    }

    pub fn sample(&self, n: usize) -> Complex64 {
        Complex64::new(self.data[n], self.data[self.len() + n])
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        (0..self.len()).map(|n| self.sample(n)).collect()
    }

    pub fn power(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rounds every sample to `f32` precision, matching the dataset file.
    pub fn quantize_f32(&mut self) {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}
