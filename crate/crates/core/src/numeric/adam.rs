//! Adaptive-moment parameter updates with bias correction.

use super::matrix::DenseMatrix;
use super::NumericError;

/// Per-parameter first/second moment accumulators plus step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    first_moment: Vec<DenseMatrix>,
    second_moment: Vec<DenseMatrix>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, params: &[DenseMatrix]) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
            second_moment: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    /// One full update across all parameters. Deterministic given inputs.
    pub fn step(
        &mut self,
        params: &mut [DenseMatrix],
        grads: &[DenseMatrix],
    ) -> Result<(), NumericError> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(NumericError::ShapeMismatch {
                context: "adam_step",
                lhs: (params.len(), 0),
                rhs: (grads.len(), 0),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            if param.shape() != grad.shape() {
                return Err(NumericError::ShapeMismatch {
                    context: "adam_step",
                    lhs: param.shape(),
                    rhs: grad.shape(),
                });
            }
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
