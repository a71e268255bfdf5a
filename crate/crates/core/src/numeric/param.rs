use crate::numeric::matrix::Matrix;
use crate::numeric::NumericError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// A named matrix with a gradient accumulator. Frozen parameters never
/// receive gradient and are never touched by the optimizer.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub trainable: bool,
}

/// All parameters of one model, in a fixed insertion order. The order is
/// what checkpoints and optimizer state are keyed on.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add_trainable(&mut self, name: &str, value: Matrix) -> ParamId {
        self.add(name, value, true)
    }

    pub fn add_frozen(&mut self, name: &str, value: Matrix) -> ParamId {
        self.add(name, value, false)
    }

    fn add(&mut self, name: &str, value: Matrix, trainable: bool) -> ParamId {
        debug_assert!(
            !self.params.iter().any(|p| p.name == name),
            "duplicate parameter name {name}"
        );
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Parameter { name: name.to_string(), value, grad, trainable });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Add `scale * g` into the gradient accumulator. Frozen parameters are
    /// ignored so they accumulate exactly zero.
    pub fn accumulate_grad(&mut self, id: ParamId, g: &Matrix, scale: f64) {
        let p = &mut self.params[id.0];
        if !p.trainable {
            return;
        }
        debug_assert!(p.grad.same_shape(g));
        p.grad.add_scaled_assign(g, scale);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Replace values from another set with identical layout, e.g. a loaded
    /// checkpoint. Names and shapes must match pairwise.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<(), NumericError> {
        if self.params.len() != other.params.len() {
            return Err(NumericError::Checkpoint(format!(
                "parameter count mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(other.params.iter()) {
            if dst.name != src.name || !dst.value.same_shape(&src.value) {
                return Err(NumericError::Checkpoint(format!(
                    "parameter mismatch: {} {}x{} vs {} {}x{}",
                    dst.name,
                    dst.value.rows(),
                    dst.value.cols(),
                    src.name,
                    src.value.rows(),
                    src.value.cols()
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}
