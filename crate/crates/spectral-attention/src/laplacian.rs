//! Parametric graph Laplacian for gated recurrent spectral attention.
//!
//! Each head builds a low-rank adjacency from its (register-extended) tokens:
//! `B = CSoftmax(g(X'))`, `A = tril(B)·tril(B)^H`, `D = diag(row sums of A)`,
//! then blends with the carried state, `L = σ(α)(D − A) + (1 − σ(α))·L_prev`.
//! `A` is Hermitian positive semidefinite by construction (Gram matrix of the
//! lower-triangular factor), with rank at most the width of `g`'s output.

use crate::csoftmax::csoftmax;
use crate::error::Result;
use crate::linear::ComplexMlp;
use diff_engine::{CTensor, Tape, Tensor};

/// Per-head Laplacians carried across recurrence steps; each entry is
/// `(batch, tokens, tokens)` over the register-extended token count.
#[derive(Debug, Clone)]
pub struct LaplacianState {
    pub per_head: Vec<CTensor>,
}

impl LaplacianState {
    /// The all-zero state used at the start of a recurrence.
    pub fn zeros(batch: usize, heads: usize, tokens: usize) -> Self {
        Self {
            per_head: (0..heads)
                .map(|_| CTensor::zeros(&[batch, tokens, tokens]))
                .collect(),
        }
    }

    pub fn heads(&self) -> usize {
        self.per_head.len()
    }
}

/// Hermitian PSD adjacency `A = tril(B)·tril(B)^H` with `B = CSoftmax(g(X'))`.
pub fn adjacency(tape: &mut Tape, xp: &CTensor, g: &ComplexMlp, mu: &Tensor) -> Result<CTensor> {
    let scores = g.apply(tape, xp, mu)?;
    let b = csoftmax(tape, &scores)?;
    let lo = b.tril(tape)?;
    let lo_h = lo.conj_t(tape)?;
    Ok(lo.bmm(tape, &lo_h)?)
}

/// One Laplacian update: `L = σ(α)(D − A) + (1 − σ(α))·L_prev`.
///
/// `D` holds the (complex) row sums of `A`, so `D − A` has exactly zero row
/// sums; `α` gates how much of the fresh graph replaces the carried one.
pub fn parametric_laplacian(
    tape: &mut Tape,
    xp: &CTensor,
    g: &ComplexMlp,
    alpha: &Tensor,
    mu: &Tensor,
    l_prev: &CTensor,
) -> Result<CTensor> {
    let a = adjacency(tape, xp, g, mu)?;
    let rows = a.sum_last(tape)?;
    let flat: Vec<usize> = a.shape()[..a.shape().len() - 1].to_vec();
    let rows = rows.reshape(tape, &flat)?;
    let d = CTensor::new(tape.diag_embed(&rows.re)?, tape.diag_embed(&rows.im)?)?;
    let gate = tape.sigmoid(alpha)?;
    let keep = tape.affine(&gate, -1.0, 1.0)?;
    let fresh = d.sub(tape, &a)?.scale_real(tape, &gate)?;
    let carried = l_prev.scale_real(tape, &keep)?;
    Ok(fresh.add(tape, &carried)?)
}
