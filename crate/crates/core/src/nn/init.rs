use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{Scalar, Shape4, Tensor4};

/// Zero-mean normal draws with variance `2 / fan_in`, where `fan_in = c_in * k_h * k_w`.
pub fn he_init<T: Scalar>(shape: Shape4, seed: u64) -> Result<Tensor4<T>> {
    let fan_in = shape[1] * shape[2] * shape[3];
    if fan_in == 0 {
        return Err(Error::Config(format!("zero fan-in for shape {shape:?}")));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng_for(seed);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::of(normal.sample(&mut rng)))
        .collect();
    Tensor4::from_vec(shape, data)
}
