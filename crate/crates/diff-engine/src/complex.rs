//! Complex tensors as (re, im) pairs of real tensors. Every complex op
//! decomposes into real tape ops, so the reverse pass never needs complex
//! arithmetic and Wirtinger bookkeeping is avoided entirely.

use crate::error::{DiffError, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct CTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl CTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(DiffError::shape(
                "CTensor::new",
                format!("re {:?} vs im {:?}", re.shape(), im.shape()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn add(&self, tape: &mut Tape, rhs: &CTensor) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.add(&self.re, &rhs.re)?,
            im: tape.add(&self.im, &rhs.im)?,
        })
    }

    pub fn sub(&self, tape: &mut Tape, rhs: &CTensor) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.sub(&self.re, &rhs.re)?,
            im: tape.sub(&self.im, &rhs.im)?,
        })
    }

    /// Complex matmul via four real matmuls:
    /// (a + ib)(c + id) = (ac - bd) + i(ad + bc).
    pub fn matmul(&self, tape: &mut Tape, rhs: &CTensor) -> Result<CTensor> {
        let ac = tape.matmul(&self.re, &rhs.re)?;
        let bd = tape.matmul(&self.im, &rhs.im)?;
        let ad = tape.matmul(&self.re, &rhs.im)?;
        let bc = tape.matmul(&self.im, &rhs.re)?;
        Ok(CTensor {
            re: tape.sub(&ac, &bd)?,
            im: tape.add(&ad, &bc)?,
        })
    }

    pub fn bmm(&self, tape: &mut Tape, rhs: &CTensor) -> Result<CTensor> {
        let ac = tape.bmm(&self.re, &rhs.re)?;
        let bd = tape.bmm(&self.im, &rhs.im)?;
        let ad = tape.bmm(&self.re, &rhs.im)?;
        let bc = tape.bmm(&self.im, &rhs.re)?;
        Ok(CTensor {
            re: tape.sub(&ac, &bd)?,
            im: tape.add(&ad, &bc)?,
        })
    }

    /// Elementwise complex product, broadcasting like the real ops.
    pub fn hadamard(&self, tape: &mut Tape, rhs: &CTensor) -> Result<CTensor> {
        let ac = tape.mul(&self.re, &rhs.re)?;
        let bd = tape.mul(&self.im, &rhs.im)?;
        let ad = tape.mul(&self.re, &rhs.im)?;
        let bc = tape.mul(&self.im, &rhs.re)?;
        Ok(CTensor {
            re: tape.sub(&ac, &bd)?,
            im: tape.add(&ad, &bc)?,
        })
    }

    /// Conjugate transpose of the last two axes.
    pub fn conj_t(&self, tape: &mut Tape) -> Result<CTensor> {
        let re = tape.transpose_last(&self.re)?;
        let im_t = tape.transpose_last(&self.im)?;
        Ok(CTensor {
            re,
            im: tape.neg(&im_t)?,
        })
    }

    pub fn conj(&self, tape: &mut Tape) -> Result<CTensor> {
        Ok(CTensor {
            re: self.re.clone(),
            im: tape.neg(&self.im)?,
        })
    }

    /// Multiply both parts by a real tensor (broadcasting allowed).
    pub fn scale_real(&self, tape: &mut Tape, s: &Tensor) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.mul(&self.re, s)?,
            im: tape.mul(&self.im, s)?,
        })
    }

    pub fn scale_const(&self, tape: &mut Tape, s: f64) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.affine(&self.re, s, 0.0)?,
            im: tape.affine(&self.im, s, 0.0)?,
        })
    }

    pub fn concat(tape: &mut Tape, parts: &[&CTensor], axis: usize) -> Result<CTensor> {
        let res: Vec<&Tensor> = parts.iter().map(|p| &p.re).collect();
        let ims: Vec<&Tensor> = parts.iter().map(|p| &p.im).collect();
        Ok(CTensor {
            re: tape.concat(&res, axis)?,
            im: tape.concat(&ims, axis)?,
        })
    }

    pub fn slice(&self, tape: &mut Tape, axis: usize, start: usize, len: usize) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.slice(&self.re, axis, start, len)?,
            im: tape.slice(&self.im, axis, start, len)?,
        })
    }

    pub fn tril(&self, tape: &mut Tape) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.tril(&self.re)?,
            im: tape.tril(&self.im)?,
        })
    }

    /// Sum over the last axis (kept with extent 1).
    pub fn sum_last(&self, tape: &mut Tape) -> Result<CTensor> {
        let axis = self.shape().len() - 1;
        Ok(CTensor {
            re: tape.sum_axis(&self.re, axis)?,
            im: tape.sum_axis(&self.im, axis)?,
        })
    }

    pub fn reshape(&self, tape: &mut Tape, shape: &[usize]) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.reshape(&self.re, shape)?,
            im: tape.reshape(&self.im, shape)?,
        })
    }

    pub fn broadcast_to(&self, tape: &mut Tape, shape: &[usize]) -> Result<CTensor> {
        Ok(CTensor {
            re: tape.broadcast_to(&self.re, shape)?,
            im: tape.broadcast_to(&self.im, shape)?,
        })
    }

    /// Apply one real function to both parts (split activation).
    pub fn map_parts(
        &self,
        tape: &mut Tape,
        mut f: impl FnMut(&mut Tape, &Tensor) -> Result<Tensor>,
    ) -> Result<CTensor> {
        Ok(CTensor {
            re: f(tape, &self.re)?,
            im: f(tape, &self.im)?,
        })
    }

    /// |z|^2 as a real tensor.
    pub fn abs_sqr(&self, tape: &mut Tape) -> Result<Tensor> {
        let rr = tape.mul(&self.re, &self.re)?;
        let ii = tape.mul(&self.im, &self.im)?;
        tape.add(&rr, &ii)
    }
}
