//! Fits a two-layer network to a toy regression problem with the tape and
//! Adam, then checks one gradient against a finite difference.

use mlmc::ad::{Adam, AdamConfig, Graph, Param, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(params: &[Param], x: &Tensor, t: &Tensor) -> mlmc::Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let vars: Vec<_> = params.iter().map(|p| g.param(p.value.clone())).collect();
    let xv = g.constant(x.clone());
    let tv = g.constant(t.clone());
    let h = g.matmul(xv, vars[0])?;
    let h = g.sigmoid(h)?;
    let out = g.matmul(h, vars[1])?;
    let r = g.sub(out, tv)?;
    let sq = g.pow(r, 2.0)?;
    let l = g.mean(sq)?;
    let mut grads = g.backward(l)?;
    let grads = vars.iter().map(|v| grads.take(*v).expect("param leaf")).collect();
    Ok((g.value(l).item(), grads))
}

fn main() -> mlmc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 64;
    let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    let x = Tensor::new(vec![n, 2], xs.iter().flat_map(|&v| [v, 1.0]).collect())?;
    let t = Tensor::new(vec![n, 1], xs.iter().map(|v| v.sin()).collect())?;

    let mut params = vec![
        Param::new("w1", Tensor::from_fn(vec![2, 16], || rng.random_range(-1.0..1.0))?),
        Param::new("w2", Tensor::from_fn(vec![16, 1], || rng.random_range(-0.5..0.5))?),
    ];
    let mut adam = Adam::new(&params, AdamConfig::default());
    for step in 0..=2000 {
        let (l, grads) = loss(&params, &x, &t)?;
        if step % 400 == 0 {
            println!("step {step:>4}  mse {l:.3e}");
        }
        adam.step(&mut params, &grads, 0.02)?;
    }

    let (_, grads) = loss(&params, &x, &t)?;
    let h = 1e-6;
    let mut plus = params.clone();
    plus[1].value.data_mut()[3] += h;
    let mut minus = params.clone();
    minus[1].value.data_mut()[3] -= h;
    let fd = (loss(&plus, &x, &t)?.0 - loss(&minus, &x, &t)?.0) / (2.0 * h);
    println!("dL/dw2[3]: tape {:.9e}  central difference {fd:.9e}", grads[1][3]);
    Ok(())
}
