use crate::error::{Error, Result};
use crate::nn::avg_pool2x;
use crate::tensor::{Scalar, Tensor4};

/// Per-level inputs; `levels[0]` is full resolution, each next level is the
/// 2x2 average pool of the previous one.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid<T> {
    pub levels: Vec<Tensor4<T>>,
}

impl<T: Scalar> Pyramid<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `n`, 1-based as in the model's numbering.
    pub fn level(&self, n: usize) -> &Tensor4<T> {
        &self.levels[n - 1]
    }
}

pub fn make_pyramid<T: Scalar>(x: &Tensor4<T>, levels: usize) -> Result<Pyramid<T>> {
    if levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let [_, _, h, w] = x.shape();
    let d = 1usize << (levels - 1);
    if h % d != 0 || w % d != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} is not divisible by {d} for a {levels}-level pyramid"
        )));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(x.clone());
    for _ in 1..levels {
        let next = avg_pool2x(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}
