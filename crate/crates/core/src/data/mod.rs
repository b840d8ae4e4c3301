//! Labelled image collections, CIFAR-10 ingestion, the `RDST` container and
//! the α-mixing batch sampler.

mod cifar;
mod mix;
mod store;
mod synthetic;

pub use cifar::{load_cifar_binary, load_cifar_dir, CIFAR_CLASSES, CIFAR_RECORD_LEN};
pub use mix::{MixPolicy, MixStream, MixedBatch};
pub use store::{dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use synthetic::SyntheticSpec;

use crate::error::{LabError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// The base dataset `D`.
    Natural,
    /// `D_R`, built by representation matching against a robust model.
    Robust,
    /// `D_NR`, relabelled targeted adversarial examples.
    NonRobust,
    Mixed,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Natural => 0,
            Role::Robust => 1,
            Role::NonRobust => 2,
            Role::Mixed => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Role::Natural,
            1 => Role::Robust,
            2 => Role::NonRobust,
            3 => Role::Mixed,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Natural => "natural",
            Role::Robust => "robust",
            Role::NonRobust => "nonrobust",
            Role::Mixed => "mixed",
        }
    }
}

/// Borrowed view of one example.
#[derive(Clone, Copy, Debug)]
pub struct LabeledExample<'a> {
    pub image: &'a [f32],
    pub label: usize,
}

/// Immutable, homogeneous collection of `[C, H, W]` images in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHandle {
    shape: [usize; 3],
    class_count: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
    role: Role,
    provenance: String,
}

impl DatasetHandle {
    pub fn new(
        shape: [usize; 3],
        class_count: usize,
        images: Vec<f32>,
        labels: Vec<usize>,
        role: Role,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let per: usize = shape.iter().product();
        if labels.is_empty() {
            return Err(LabError::invalid("dataset must not be empty"));
        }
        if per == 0 || images.len() != per * labels.len() {
            return Err(LabError::invalid(format!(
                "{} pixel values for {} images of shape {shape:?}",
                images.len(),
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
            return Err(LabError::invalid(format!("example {i} has label {y} >= {class_count}")));
        }
        if let Some(i) = images.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(LabError::invalid(format!(
                "example {} has a pixel outside [0, 1]",
                i / per
            )));
        }
        Ok(DatasetHandle {
            shape,
            class_count,
            images,
            labels,
            role,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn image_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> LabeledExample<'_> {
        LabeledExample {
            image: self.image(i),
            label: self.labels[i],
        }
    }

    pub(crate) fn raw_images(&self) -> &[f32] {
        &self.images
    }

    /// Images `[N, C, H, W]` and labels for the given indices, in order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let n = self.image_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let [c, h, w] = self.shape;
        let t = Tensor::from_vec(&[indices.len(), c, h, w], data).expect("batch shape");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Whole dataset as one batch.
    pub fn all(&self) -> (Tensor, Vec<usize>) {
        let [c, h, w] = self.shape;
        let t = Tensor::from_vec(&[self.len(), c, h, w], self.images.clone()).expect("dataset shape");
        (t, self.labels.clone())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (t, labels) = self.batch(indices);
        DatasetHandle::new(self.shape, self.class_count, t.into_data(), labels, self.role, self.provenance.clone())
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Number of examples per class.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}
