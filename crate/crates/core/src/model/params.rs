use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Tensor};

/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.08;

/// Number of learnable tensors.
pub const TENSOR_COUNT: usize = 17;

/// All learnable tensors of the model.
///
/// Embedding, hidden and memory dimensions coincide (`d`), since the memory
/// vector is added directly to token embeddings. Biases are `n x 1` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `V x d` token embeddings.
    pub embedding: Tensor,
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
    /// Memory attention query, key and value maps (`d x d`).
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    /// Memory gate over `[mem; attended]` (`d x 2d`).
    pub w_g: Tensor,
    pub b_g: Tensor,
    /// `V x d` output projection.
    pub w_o: Tensor,
    pub b_o: Tensor,
}

/// Tensor names in storage order, with their shapes for dims `(d, V)`.
pub fn tensor_layout(d: usize, vocab: usize) -> [(&'static str, (usize, usize)); TENSOR_COUNT] {
    [
        ("embedding", (vocab, d)),
        ("w_z", (d, d)),
        ("u_z", (d, d)),
        ("b_z", (d, 1)),
        ("w_r", (d, d)),
        ("u_r", (d, d)),
        ("b_r", (d, 1)),
        ("w_h", (d, d)),
        ("u_h", (d, d)),
        ("b_h", (d, 1)),
        ("w_q", (d, d)),
        ("w_k", (d, d)),
        ("w_v", (d, d)),
        ("w_g", (d, 2 * d)),
        ("b_g", (d, 1)),
        ("w_o", (vocab, d)),
        ("b_o", (vocab, 1)),
    ]
}

impl ModelParams {
    pub fn zeros(d: usize, vocab: usize) -> Self {
        let l = tensor_layout(d, vocab);
        let t = |i: usize| Tensor::zeros(l[i].1 .0, l[i].1 .1);
        Self {
            embedding: t(0),
            w_z: t(1),
            u_z: t(2),
            b_z: t(3),
            w_r: t(4),
            u_r: t(5),
            b_r: t(6),
            w_h: t(7),
            u_h: t(8),
            b_h: t(9),
            w_q: t(10),
            w_k: t(11),
            w_v: t(12),
            w_g: t(13),
            b_g: t(14),
            w_o: t(15),
            b_o: t(16),
        }
    }

    /// Every entry drawn from `uniform(-0.08, 0.08)`, tensors filled in
    /// storage order from one seeded stream.
    pub fn init(d: usize, vocab: usize, seed: u64) -> Self {
        let mut params = Self::zeros(d, vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in params.tensors_mut() {
            for v in t.data_mut() {
                *v = rng.gen_range(-INIT_RANGE..INIT_RANGE);
            }
        }
        params
    }

    /// Assembles parameters from tensors in storage order, checking shapes.
    pub fn from_tensors(d: usize, vocab: usize, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        if tensors.len() != TENSOR_COUNT {
            return Err(ModelError::DimensionMismatch(format!(
                "expected {TENSOR_COUNT} tensors, got {}",
                tensors.len()
            )));
        }
        let mut params = Self::zeros(d, vocab);
        for ((name, slot), t) in params.tensors_mut().into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name}: expected {:?}, got {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t;
        }
        Ok(params)
    }

    /// Hidden dimension.
    pub fn d(&self) -> usize {
        self.w_z.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); TENSOR_COUNT] {
        [
            ("embedding", &self.embedding),
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_g", &self.w_g),
            ("b_g", &self.b_g),
            ("w_o", &self.w_o),
            ("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); TENSOR_COUNT] {
        [
            ("embedding", &mut self.embedding),
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_h", &mut self.w_h),
            ("u_h", &mut self.u_h),
            ("b_h", &mut self.b_h),
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_g", &mut self.w_g),
            ("b_g", &mut self.b_g),
            ("w_o", &mut self.w_o),
            ("b_o", &mut self.b_o),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data().len()).sum()
    }

    /// Checks shapes against `(d, V)` and that every entry is finite.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (d, v) = (self.d(), self.vocab_size());
        if d == 0 {
            return Err(ModelError::DimensionMismatch("d must be positive".into()));
        }
        for ((name, t), (_, shape)) in self.tensors().iter().zip(tensor_layout(d, v)) {
            if t.shape() != shape {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
        }
        Ok(())
    }

    pub(crate) fn same_dims(&self, other: &Self) -> bool {
        self.tensors()
            .iter()
            .zip(other.tensors().iter())
            .all(|((_, a), (_, b))| a.shape() == b.shape())
    }
}
