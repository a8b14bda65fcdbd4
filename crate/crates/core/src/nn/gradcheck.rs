//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use crate::rng::rng_for;
use crate::tensor::Tensor4;

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Which coordinates of the point to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// A seeded random subset; every coordinate is used when the point is smaller.
    Subset { count: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub checked: usize,
}

/// Compares `analytic` against `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for the
/// selected coordinates `i` and reports the worst relative error.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    eps: f64,
    coords: Coords,
) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len(), "gradient length must match the point");
    let indices: Vec<usize> = match coords {
        Coords::Subset { count, seed } if count < point.len() => {
            let mut rng = rng_for(seed);
            let mut v = sample(&mut rng, point.len(), count).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..point.len()).collect(),
    };
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coord: 0,
        checked: indices.len(),
    };
    for i in indices {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_coord = i;
        }
    }
    report
}

/// Checks a tensor-valued operation through the scalar projection `sum(r * op(x))`
/// with a fixed pseudo-random `r`; `backward(x, r)` must return d/dx of that projection.
pub fn check_op(
    x: &Tensor4<f64>,
    op: impl Fn(&Tensor4<f64>) -> Tensor4<f64>,
    backward: impl Fn(&Tensor4<f64>, &Tensor4<f64>) -> Tensor4<f64>,
    eps: f64,
    seed: u64,
) -> f64 {
    use rand::Rng;
    let y = op(x);
    let mut rng = rng_for(seed);
    let r = Tensor4::from_fn(y.shape(), |_| rng.random_range(-1.0..1.0));
    let analytic = backward(x, &r);
    let shape = x.shape();
    let project = |v: &[f64]| {
        let xt = Tensor4::from_vec(shape, v.to_vec()).expect("same shape");
        op(&xt).data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    grad_check(project, x.data(), analytic.data(), eps, Coords::All).max_rel_error
}
