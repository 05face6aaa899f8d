use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{Graph, Tensor, Var};

const FD_STEP: f64 = 1e-4;

/// Compares reverse-mode gradients of `op` against central finite
/// differences in double precision.
///
/// `op` receives one leaf per entry of `input_shapes`, filled with seeded
/// random values bounded away from zero (|v| in [0.05, 1]) so that ReLU
/// kinks are not straddled by the finite-difference step. Its output is
/// reduced to a scalar through a fixed random projection. Returns
/// `max |g_analytic - g_fd| / max(|g_fd|, 1e-8)` over every input entry.
pub fn grad_check<F>(op: F, input_shapes: &[Vec<usize>], seed: u64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor<f64>> = input_shapes
        .iter()
        .map(|shape| {
            Tensor::from_fn(shape.clone(), |_| {
                let mag: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
        })
        .collect();

    let evaluate = |inputs: &[Tensor<f64>]| -> Result<Tensor<f64>> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = op(&mut g, &vars)?;
        Ok(g.value(out).clone())
    };

    let probe = evaluate(&inputs)?;
    let projection: Vec<f64> = (0..probe.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let project = |t: &Tensor<f64>| -> f64 {
        t.data().iter().zip(&projection).map(|(a, b)| a * b).sum()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = op(&mut g, &vars)?;
    let weights = g.constant(Tensor::new(g.value(out).shape().to_vec(), projection.clone())?);
    let weighted = g.mul(out, weights)?;
    let loss = g.sum(weighted)?;
    g.backward(loss)?;

    let mut worst = 0.0f64;
    for (which, var) in vars.iter().enumerate() {
        let analytic = g.grad(*var).expect("leaf gradient populated").to_vec();
        for (i, &ga) in analytic.iter().enumerate() {
            let mut plus = inputs.clone();
            plus[which].data_mut()[i] += FD_STEP;
            let mut minus = inputs.clone();
            minus[which].data_mut()[i] -= FD_STEP;
            let fd = (project(&evaluate(&plus)?) - project(&evaluate(&minus)?)) / (2.0 * FD_STEP);
            let err = (ga - fd).abs() / fd.abs().max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
