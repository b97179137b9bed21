use super::init::xavier_uniform;
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::Rng;

/// GRU cell with input and hidden size `dim`, applied row-wise:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// n  = tanh(x Wn + (r * h) Un + bn)
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub dim: usize,
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_n: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_n: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_n: ParamId,
}

impl GruCell {
    /// Registers the cell's parameters as `{prefix}.w_z` and so on.
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut mat = |name: &str, store: &mut ParamStore<T>| {
            store.add(format!("{prefix}.{name}"), xavier_uniform(dim, dim, rng))
        };
        let w_z = mat("w_z", store)?;
        let w_r = mat("w_r", store)?;
        let w_n = mat("w_n", store)?;
        let u_z = mat("u_z", store)?;
        let u_r = mat("u_r", store)?;
        let u_n = mat("u_n", store)?;
        let b_z = store.add(format!("{prefix}.b_z"), Tensor::zeros(&[1, dim]))?;
        let b_r = store.add(format!("{prefix}.b_r"), Tensor::zeros(&[1, dim]))?;
        let b_n = store.add(format!("{prefix}.b_n"), Tensor::zeros(&[1, dim]))?;
        Ok(Self {
            dim,
            w_z,
            w_r,
            w_n,
            u_z,
            u_r,
            u_n,
            b_z,
            b_r,
            b_n,
        })
    }

    /// One recurrence step for every row of `h_prev` and `x` (both `n x dim`).
    pub fn step<T: Scalar>(&self, tape: &mut Tape<'_, T>, h_prev: Var, x: Var) -> Result<Var> {
        for (what, v) in [("hidden state", h_prev), ("input", x)] {
            let shape = tape.value(v).shape();
            if shape[1] != self.dim {
                return Err(Error::Shape(format!(
                    "GRU {what} has width {}, cell expects {}",
                    shape[1], self.dim
                )));
            }
        }
        if tape.value(h_prev).shape() != tape.value(x).shape() {
            return Err(Error::Shape("GRU hidden state and input row counts differ".into()));
        }
        let gate = |tape: &mut Tape<'_, T>, w, u, b, h: Var| {
            let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
            let xw = tape.matmul(x, w);
            let hu = tape.matmul(h, u);
            let s = tape.add(xw, hu);
            tape.add_row(s, b)
        };
        let z = gate(tape, self.w_z, self.u_z, self.b_z, h_prev);
        let z = tape.sigmoid(z);
        let r = gate(tape, self.w_r, self.u_r, self.b_r, h_prev);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h_prev);
        let n = gate(tape, self.w_n, self.u_n, self.b_n, rh);
        let n = tape.tanh(n);
        // h' = n + z * (h - n)
        let diff = tape.sub(h_prev, n);
        let zd = tape.mul(z, diff);
        Ok(tape.add(n, zd))
    }
}
