//! Complex-valued operations expressed on paired real nodes.

use super::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// A complex tensor stored as real and imaginary parts of equal shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(shape_err(
                "complex",
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

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn get(&self, flat: usize) -> (f64, f64) {
        (self.re.data()[flat], self.im.data()[flat])
    }

    pub fn max_abs_diff(&self, other: &ComplexTensor) -> f64 {
        self.re.max_abs_diff(&other.re).max(self.im.max_abs_diff(&other.im))
    }
}

/// A complex node: two real nodes of equal shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

impl Graph<'_> {
    pub fn complex_leaf(&mut self, value: &ComplexTensor) -> CVar {
        CVar {
            re: self.leaf(value.re.clone()),
            im: self.leaf(value.im.clone()),
        }
    }

    pub fn complex_value(&self, v: CVar) -> ComplexTensor {
        ComplexTensor {
            re: self.value(v.re).clone(),
            im: self.value(v.im).clone(),
        }
    }

    pub fn cadd(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.add(a.re, b.re)?,
            im: self.add(a.im, b.im)?,
        })
    }

    pub fn csub(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.sub(a.re, b.re)?,
            im: self.sub(a.im, b.im)?,
        })
    }

    pub fn conj(&mut self, a: CVar) -> CVar {
        CVar {
            re: a.re,
            im: self.neg(a.im),
        }
    }

    /// Elementwise complex product with broadcasting.
    pub fn cmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let rr = self.mul(a.re, b.re)?;
        let ii = self.mul(a.im, b.im)?;
        let ri = self.mul(a.re, b.im)?;
        let ir = self.mul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    /// Elementwise complex product with a real tensor (broadcasting).
    pub fn cmul_real(&mut self, a: CVar, r: Var) -> Result<CVar> {
        Ok(CVar {
            re: self.mul(a.re, r)?,
            im: self.mul(a.im, r)?,
        })
    }

    /// Elementwise complex quotient `a / b` with broadcasting.
    pub fn cdiv(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let bc = self.conj(b);
        let num = self.cmul(a, bc)?;
        let den = self.abs_sq(b)?;
        Ok(CVar {
            re: self.div(num.re, den)?,
            im: self.div(num.im, den)?,
        })
    }

    /// `re² + im²` elementwise.
    pub fn abs_sq(&mut self, a: CVar) -> Result<Var> {
        let r2 = self.square(a.re);
        let i2 = self.square(a.im);
        self.add(r2, i2)
    }

    /// Product of two complex matrices, `(ar·br − ai·bi) + i(ar·bi + ai·br)`.
    pub fn complex_matmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let (sa, sb) = (self.shape(a.re).to_vec(), self.shape(b.re).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("complex_matmul", format!("{sa:?} x {sb:?}")));
        }
        let rr = self.matmul(a.re, b.re)?;
        let ii = self.matmul(a.im, b.im)?;
        let ri = self.matmul(a.re, b.im)?;
        let ir = self.matmul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    /// Batched complex matrix product over the leading axis.
    pub fn complex_batch_matmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let rr = self.batch_matmul(a.re, b.re)?;
        let ii = self.batch_matmul(a.im, b.im)?;
        let ri = self.batch_matmul(a.re, b.im)?;
        let ir = self.batch_matmul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    /// Inverse of `a + load·I` for a batch of complex matrices (B×C×C, or a
    /// single C×C), computed on the real embedding `[[R, −I], [I, R]]`.
    ///
    /// `load` is a real node broadcastable against the batch, e.g. shape `[]`
    /// or `[B, 1, 1]`. Failure reports the offending batch index.
    pub fn complex_inverse(&mut self, a: CVar, load: Option<Var>) -> Result<CVar> {
        let shape = self.shape(a.re).to_vec();
        let batched = match shape.len() {
            2 if shape[0] == shape[1] => false,
            3 if shape[1] == shape[2] => true,
            _ => return Err(shape_err("complex_inverse", format!("expected C×C or B×C×C, got {shape:?}"))),
        };
        let c = shape[shape.len() - 1];
        let re = match load {
            Some(l) => {
                let eye = self.constant(Tensor::eye(c));
                let loaded = self.mul(eye, l)?;
                self.add(a.re, loaded)?
            }
            None => a.re,
        };
        let (row_axis, col_axis) = if batched { (1, 2) } else { (0, 1) };
        let neg_im = self.neg(a.im);
        let top = self.concat(&[re, neg_im], col_axis)?;
        let bottom = self.concat(&[a.im, re], col_axis)?;
        let embed = self.concat(&[top, bottom], row_axis)?;
        let inv = self.inverse(embed)?;
        let upper = self.slice(inv, row_axis, 0, c)?;
        let lower = self.slice(inv, row_axis, c, c)?;
        Ok(CVar {
            re: self.slice(upper, col_axis, 0, c)?,
            im: self.slice(lower, col_axis, 0, c)?,
        })
    }

    /// Trace of each trailing C×C matrix.
    pub fn complex_trace(&mut self, a: CVar) -> Result<CVar> {
        let dr = self.diag(a.re)?;
        let di = self.diag(a.im)?;
        let last = self.shape(dr).len() - 1;
        Ok(CVar {
            re: self.sum_axis(dr, last)?,
            im: self.sum_axis(di, last)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ct(shape: &[usize], re: &[f64], im: &[f64]) -> ComplexTensor {
        ComplexTensor::new(
            Tensor::new(shape.to_vec(), re.to_vec()).unwrap(),
            Tensor::new(shape.to_vec(), im.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_times_x_is_x() {
        let mut g = Graph::new();
        let eye = ct(&[2, 2], &[1.0, 0.0, 0.0, 1.0], &[0.0; 4]);
        let x = ct(&[2, 2], &[1.0, 2.0, 3.0, 4.0], &[-1.0, 0.5, 0.0, 2.0]);
        let (a, b) = (g.complex_leaf(&eye), g.complex_leaf(&x));
        let p = g.complex_matmul(a, b).unwrap();
        assert_eq!(g.complex_value(p), x);
    }

    #[test]
    fn i_times_i_is_minus_one() {
        let mut g = Graph::new();
        let ii = ct(&[2, 2], &[0.0; 4], &[1.0, 0.0, 0.0, 1.0]);
        let a = g.complex_leaf(&ii);
        let p = g.complex_matmul(a, a).unwrap();
        let v = g.complex_value(p);
        assert_eq!(v.re.data(), &[-1.0, 0.0, 0.0, -1.0]);
        assert_eq!(v.im.data(), &[0.0; 4]);
    }

    #[test]
    fn diagonal_inverse() {
        let mut g = Graph::new();
        let d = ct(&[2, 2], &[2.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 2.0]);
        let a = g.complex_leaf(&d);
        let inv = g.complex_inverse(a, None).unwrap();
        let v = g.complex_value(inv);
        let want = ct(&[2, 2], &[0.5, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, -0.5]);
        assert!(v.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn identity_inverse_and_loading() {
        let mut g = Graph::new();
        let eye = ct(&[2, 2], &[1.0, 0.0, 0.0, 1.0], &[0.0; 4]);
        let a = g.complex_leaf(&eye);
        let inv = g.complex_inverse(a, None).unwrap();
        assert_eq!(g.complex_value(inv), eye);
        let load = g.scalar(1.0);
        let inv2 = g.complex_inverse(a, Some(load)).unwrap();
        assert!((g.value(inv2.re).data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_reports_batch_index() {
        let mut g = Graph::new();
        let m = ct(
            &[2, 2, 2],
            &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            &[0.0; 8],
        );
        let a = g.complex_leaf(&m);
        match g.complex_inverse(a, None) {
            Err(crate::Error::Singular { index }) => assert_eq!(index, 1),
            other => panic!("expected singular error, got {:?}", other.map(|_| ())),
        }
    }
}
