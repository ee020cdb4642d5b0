//! Complex tensors as pairs of real tape nodes.
//!
//! Every complex operation here is composed from real primitives, so the
//! gradients are ordinary real gradients w.r.t. the real and imaginary parts.

use crate::error::{GradError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct CVar<'t> {
    pub re: Var<'t>,
    pub im: Var<'t>,
}

impl<'t> CVar<'t> {
    pub fn new(re: Var<'t>, im: Var<'t>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(GradError::Shape(format!("complex parts {:?} and {:?}", re.shape(), im.shape())));
        }
        Ok(Self { re, im })
    }

    pub fn param(tape: &'t Tape, re: Tensor, im: Tensor) -> Result<Self> {
        Self::new(tape.param(re), tape.param(im))
    }

    pub fn constant(tape: &'t Tape, re: Tensor, im: Tensor) -> Result<Self> {
        Self::new(tape.constant(re), tape.constant(im))
    }

    pub fn shape(&self) -> [usize; 2] {
        self.re.shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.re.tape()
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: self.im.neg() }
    }

    /// Plain (non-conjugating) transpose.
    pub fn t(self) -> Self {
        Self { re: self.re.t(), im: self.im.t() }
    }

    /// Conjugate transpose.
    pub fn h(self) -> Self {
        self.conj().t()
    }

    pub fn add(self, other: Self) -> Result<Self> {
        Ok(Self { re: self.re.add(other.re)?, im: self.im.add(other.im)? })
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        Ok(Self { re: self.re.sub(other.re)?, im: self.im.sub(other.im)? })
    }

    /// Elementwise product, broadcasting like the real primitives.
    pub fn mul(self, other: Self) -> Result<Self> {
        Ok(Self {
            re: self.re.mul(other.re)?.sub(self.im.mul(other.im)?)?,
            im: self.re.mul(other.im)?.add(self.im.mul(other.re)?)?,
        })
    }

    /// Multiplies both parts by a real tensor.
    pub fn mul_real(self, factor: Var<'t>) -> Result<Self> {
        Ok(Self { re: self.re.mul(factor)?, im: self.im.mul(factor)? })
    }

    /// Divides both parts by a real tensor.
    pub fn div_real(self, divisor: Var<'t>) -> Result<Self> {
        Ok(Self { re: self.re.div(divisor)?, im: self.im.div(divisor)? })
    }

    pub fn scale(self, factor: f64) -> Self {
        Self { re: self.re.scale(factor), im: self.im.scale(factor) }
    }

    /// Matrix product on the paired-real representation.
    pub fn matmul(self, other: Self) -> Result<Self> {
        let rr = self.re.matmul(other.re)?;
        let ii = self.im.matmul(other.im)?;
        let ri = self.re.matmul(other.im)?;
        let ir = self.im.matmul(other.re)?;
        Ok(Self { re: rr.sub(ii)?, im: ri.add(ir)? })
    }

    /// Product with a real matrix on the right.
    pub fn matmul_real(self, other: Var<'t>) -> Result<Self> {
        Ok(Self { re: self.re.matmul(other)?, im: self.im.matmul(other)? })
    }

    /// Elementwise magnitude.
    pub fn abs(self) -> Result<Var<'t>> {
        self.tape().complex_abs(self.re, self.im)
    }

    /// Elementwise squared magnitude.
    pub fn abs_sq(self) -> Result<Var<'t>> {
        self.re.square().add(self.im.square())
    }

    /// Squared Frobenius norm, as a `1 x 1` node.
    pub fn norm_sq(self) -> Result<Var<'t>> {
        Ok(self.abs_sq()?.sum())
    }

    /// Solves `self · X = rhs` through the real embedding
    /// `[[Sr, −Si], [Si, Sr]] [Xr; Xi] = [Cr; Ci]`.
    pub fn solve(self, rhs: Self) -> Result<Self> {
        let tape = self.tape();
        let n = self.shape()[0];
        let top = tape.concat_cols(&[self.re, self.im.neg()])?;
        let bottom = tape.concat_cols(&[self.im, self.re])?;
        let system = tape.concat_rows(&[top, bottom])?;
        let stacked = tape.concat_rows(&[rhs.re, rhs.im])?;
        let x = system.solve(stacked)?;
        Ok(Self { re: x.slice_rows(0, n)?, im: x.slice_rows(n, 2 * n)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        // (1+2j)(3-1j) = 5+5j
        let tape = Tape::new();
        let a = CVar::constant(&tape, Tensor::scalar(1.0), Tensor::scalar(2.0)).unwrap();
        let b = CVar::constant(&tape, Tensor::scalar(3.0), Tensor::scalar(-1.0)).unwrap();
        let p = a.matmul(b).unwrap();
        assert_eq!((p.re.item(), p.im.item()), (5.0, 5.0));
        let q = a.conj().mul(b).unwrap();
        assert_eq!((q.re.item(), q.im.item()), (1.0, -7.0));
    }

    #[test]
    fn complex_solve_recovers_rhs() {
        let tape = Tape::new();
        let s = CVar::constant(
            &tape,
            Tensor::from_vec(2, 2, vec![2.0, 0.5, 0.5, 3.0]).unwrap(),
            Tensor::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let c = CVar::constant(&tape, Tensor::column(vec![1.0, -2.0]), Tensor::column(vec![0.5, 1.0])).unwrap();
        let x = s.solve(c).unwrap();
        let back = s.matmul(x).unwrap();
        for (u, v) in back.re.value().data().iter().zip(c.re.value().data()) {
            assert!((u - v).abs() < 1e-12);
        }
        for (u, v) in back.im.value().data().iter().zip(c.im.value().data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
