use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{same_shape, GradSink, Op, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// `scale * x + offset` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        let v = self.value(x).map(|t| scale * t + offset);
        self.push(v, Op::Affine(x, scale), &[x])
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Multiplies every element of `x` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::Contract(alloc::format!(
                "mul_scalar expects a one-element factor, got {:?}",
                self.shape(s)
            )));
        }
        let k = self.value(s).item();
        let v = self.value(x).map(|t| t * k);
        Ok(self.push(v, Op::MulScalar { x, s }, &[x, s]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| if t > 0.0 { t } else { 0.0 });
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x), &[x])
    }

    /// Elementwise smooth-L1 (Huber, threshold 1).
    pub fn huber(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| {
            if e.abs() < 1.0 {
                0.5 * e * e
            } else {
                e.abs() - 0.5
            }
        });
        self.push(v, Op::Huber(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.mul(x, x).expect("same operand")
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).mean());
        self.push(v, Op::Mean(x), &[x])
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    match *op {
        Op::Add(a, b) => {
            sink.add(a, g);
            sink.add(b, g);
        }
        Op::Sub(a, b) => {
            sink.add(a, g);
            if let Some(d) = sink.get(b) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
            }
        }
        Op::Mul(a, b) => {
            let gb: Vec<f64> = g.iter().zip(sink.value(a).data()).map(|(g, x)| g * x).collect();
            let ga: Vec<f64> = g.iter().zip(sink.value(b).data()).map(|(g, y)| g * y).collect();
            sink.add(a, &ga);
            sink.add(b, &gb);
        }
        Op::Affine(x, scale) => {
            if let Some(d) = sink.get(x) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += scale * g);
            }
        }
        Op::MulScalar { x, s } => {
            let k = sink.value(s).item();
            let gs: f64 = g.iter().zip(sink.value(x).data()).map(|(g, v)| g * v).sum();
            if let Some(d) = sink.get(x) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += k * g);
            }
            if let Some(d) = sink.get(s) {
                d[0] += gs;
            }
        }
        Op::Relu(x) => {
            let gx: Vec<f64> = g
                .iter()
                .zip(out.data())
                .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                .collect();
            sink.add(x, &gx);
        }
        Op::Sigmoid(x) => {
            let gx: Vec<f64> = g.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
            sink.add(x, &gx);
        }
        Op::Huber(x) => {
            let gx: Vec<f64> = g
                .iter()
                .zip(sink.value(x).data())
                .map(|(g, e)| g * e.clamp(-1.0, 1.0))
                .collect();
            sink.add(x, &gx);
        }
        Op::Sum(x) => {
            if let Some(d) = sink.get(x) {
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(d) = sink.get(x) {
                let k = g[0] / d.len() as f64;
                d.iter_mut().for_each(|d| *d += k);
            }
        }
        _ => unreachable!("not an elementwise op"),
    }
}
