use crate::data::CovarianceModel;
use crate::error::{OpcaError, Result};
use crate::matops::Matrix;
use crate::rng::{GaussianStream, StreamPurpose};

/// Batching parameters for one pass over a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSpec {
    /// Batch size `h`.
    pub batch_size: usize,
    /// Total samples `m`.
    pub total_samples: usize,
    /// Key of the sample stream (already mixed with the trial index).
    pub seed: u64,
}

impl StreamSpec {
    pub fn new(batch_size: usize, total_samples: usize, seed: u64) -> Result<Self> {
        let spec = StreamSpec {
            batch_size,
            total_samples,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(OpcaError::BadRange("batch size must be >= 1".into()));
        }
        if self.total_samples < self.batch_size {
            return Err(OpcaError::BadRange(format!(
                "total samples {} smaller than batch size {}",
                self.total_samples, self.batch_size
            )));
        }
        Ok(())
    }

    /// `K = ⌈m/h⌉`.
    pub fn num_batches(&self) -> usize {
        self.total_samples.div_ceil(self.batch_size)
    }

    /// Width of batch `k`; only the last one may be short.
    pub fn batch_len(&self, k: usize) -> usize {
        let start = k * self.batch_size;
        self.batch_size
            .min(self.total_samples.saturating_sub(start))
    }
}

/// An `n x h_k` block of consecutive samples, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub index: usize,
    pub data: Matrix,
}

impl SampleBatch {
    pub fn new(index: usize, data: Matrix) -> Self {
        SampleBatch { index, data }
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

#[derive(Debug, Clone)]
enum Source<'a> {
    Model {
        model: &'a CovarianceModel,
        rng: GaussianStream,
        /// Normals consumed per sample (planted + isotropic part, padded to even).
        stride: usize,
    },
    Columns(&'a Matrix),
}

/// Finite stream of `⌈m/h⌉` batches.
///
/// Batch `k` is a pure function of the source and spec: [`SampleStream::batch`]
/// fetches any batch directly and yields the same matrix as iteration.
#[derive(Debug, Clone)]
pub struct SampleStream<'a> {
    source: Source<'a>,
    spec: StreamSpec,
    next: usize,
}

/// Gaussian samples `a = Q diag(√μ) z₁ + ρ z₂` drawn from `model`.
pub fn sample_stream(model: &CovarianceModel, spec: StreamSpec) -> Result<SampleStream<'_>> {
    spec.validate()?;
    let d = model.spike_rank() + model.dim();
    Ok(SampleStream {
        source: Source::Model {
            model,
            rng: GaussianStream::new(spec.seed, StreamPurpose::Samples),
            stride: d + d % 2,
        },
        spec,
        next: 0,
    })
}

impl<'a> SampleStream<'a> {
    /// Streams the columns of `data` in order; `spec.seed` is ignored.
    pub fn from_columns(data: &'a Matrix, spec: StreamSpec) -> Result<Self> {
        spec.validate()?;
        if spec.total_samples > data.ncols() {
            return Err(OpcaError::DimensionMismatch(format!(
                "stream wants {} samples but the data has {} columns",
                spec.total_samples,
                data.ncols()
            )));
        }
        Ok(SampleStream {
            source: Source::Columns(data),
            spec,
            next: 0,
        })
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            Source::Model { model, .. } => model.dim(),
            Source::Columns(m) => m.nrows(),
        }
    }

    pub fn num_batches(&self) -> usize {
        self.spec.num_batches()
    }

    /// Number of batches handed out by the iterator so far.
    pub fn batches_fetched(&self) -> usize {
        self.next
    }

    /// Random access to batch `k`.
    pub fn batch(&self, k: usize) -> Option<SampleBatch> {
        if k >= self.spec.num_batches() {
            return None;
        }
        let mut source = self.source.clone();
        Some(generate(&mut source, &self.spec, k))
    }
}

fn generate(source: &mut Source<'_>, spec: &StreamSpec, k: usize) -> SampleBatch {
    let start = k * spec.batch_size;
    let width = spec.batch_len(k);
    let data = match source {
        Source::Columns(m) => m.columns(start, width).into_owned(),
        Source::Model { model, rng, stride } => {
            let n = model.dim();
            let r = model.spike_rank();
            rng.seek_pair((start * *stride / 2) as u64);
            let mut planted = Matrix::zeros(r, width);
            let mut noise = Matrix::zeros(n, width);
            let mut buf = vec![0.0; *stride];
            for j in 0..width {
                rng.fill_normals(&mut buf);
                planted.column_mut(j).copy_from_slice(&buf[..r]);
                noise.column_mut(j).copy_from_slice(&buf[r..r + n]);
            }
            let mut out = model.sample_factor() * planted;
            let rho = model.rho();
            out.zip_apply(&noise, |o, z| *o += rho * z);
            out
        }
    };
    SampleBatch::new(k, data)
}

impl Iterator for SampleStream<'_> {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        if self.next >= self.spec.num_batches() {
            return None;
        }
        let batch = generate(&mut self.source, &self.spec, self.next);
        self.next += 1;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.num_batches() - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for SampleStream<'_> {}
