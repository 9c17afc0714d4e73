use crate::error::Result;
use diff_engine::{CTensor, Tape};

/// Complex softmax: ordinary softmax applied independently to the real and
/// imaginary parts, row-wise (over the last axis).
pub fn csoftmax(tape: &mut Tape, z: &CTensor) -> Result<CTensor> {
    Ok(CTensor {
        re: tape.softmax(&z.re)?,
        im: tape.softmax(&z.im)?,
    })
}
