use crate::error::Result;
use crate::smu::smu_c;
use diff_engine::{CTensor, Tape, Tensor, TensorData};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) fn normal_param(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::param(TensorData::new(shape.to_vec(), data).unwrap())
}

pub(crate) fn zeros_param(shape: &[usize]) -> Tensor {
    Tensor::param(TensorData::zeros(shape))
}

/// Complex affine map x ↦ x·W + b with W (Cin × Cout) and b (Cout).
#[derive(Debug, Clone)]
pub struct CLinear {
    pub w: CTensor,
    pub b: CTensor,
}

impl CLinear {
    pub fn init(rng: &mut impl Rng, cin: usize, cout: usize, std: f64) -> Self {
        Self {
            w: CTensor {
                re: normal_param(rng, &[cin, cout], std),
                im: normal_param(rng, &[cin, cout], std),
            },
            b: CTensor {
                re: zeros_param(&[cout]),
                im: zeros_param(&[cout]),
            },
        }
    }

    /// Build from explicit tensors (used by gradient-check harnesses).
    pub fn from_parts(w: CTensor, b: CTensor) -> Self {
        Self { w, b }
    }

    pub fn apply(&self, tape: &mut Tape, x: &CTensor) -> Result<CTensor> {
        let y = x.matmul(tape, &self.w)?;
        Ok(y.add(tape, &self.b)?)
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w.re"), self.w.re.clone()));
        out.push((format!("{prefix}.w.im"), self.w.im.clone()));
        out.push((format!("{prefix}.b.re"), self.b.re.clone()));
        out.push((format!("{prefix}.b.im"), self.b.im.clone()));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.w.re"), &mut self.w.re));
        out.push((format!("{prefix}.w.im"), &mut self.w.im));
        out.push((format!("{prefix}.b.re"), &mut self.b.re));
        out.push((format!("{prefix}.b.im"), &mut self.b.im));
    }
}

/// Two-layer complex MLP C → C → d with the SMU nonlinearity between the
/// layers (μ is the enclosing block's SMU parameter).
#[derive(Debug, Clone)]
pub struct ComplexMlp {
    pub lin1: CLinear,
    pub lin2: CLinear,
}

impl ComplexMlp {
    pub fn init(rng: &mut impl Rng, cin: usize, cout: usize, std: f64) -> Self {
        Self {
            lin1: CLinear::init(rng, cin, cin, std),
            lin2: CLinear::init(rng, cin, cout, std),
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: &CTensor, mu: &Tensor) -> Result<CTensor> {
        let h = self.lin1.apply(tape, x)?;
        let h = smu_c(tape, &h, mu)?;
        self.lin2.apply(tape, &h)
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.lin1.visit(&format!("{prefix}.lin1"), out);
        self.lin2.visit(&format!("{prefix}.lin2"), out);
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.lin1.visit_mut(&format!("{prefix}.lin1"), out);
        self.lin2.visit_mut(&format!("{prefix}.lin2"), out);
    }
}
