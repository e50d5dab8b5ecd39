//! Runs the convolution, pooling and dense kernels on a small input and
//! checks the convolution gradient against central differences.
//!
//! ```text
//! cargo run --release --example kernels
//! ```

use castnet::tensor::{
    conv2d_backward, conv2d_forward, finite_difference_check, global_avg_pool, maxpool2d, ConvParams,
    Padding, Tensor,
};

fn main() -> castnet::Result<()> {
    // One 6x6 single-channel image holding 0..36.
    let input = Tensor::<f64>::from_fn(vec![1, 6, 6, 1], |i| i as f64)?;
    // Two 3x3 kernels: a box sum and a horizontal difference.
    let kernels = Tensor::from_fn(vec![3, 3, 1, 2], |i| {
        let (kx, co) = ((i / 2) % 3, i % 2);
        if co == 0 { 1.0 } else { kx as f64 - 1.0 }
    })?;
    let params = ConvParams { kernels, bias: vec![0.0, 0.5], stride: 1, padding: Padding::Same };

    let out = conv2d_forward(&input, &params)?;
    println!("conv output shape {:?}", out.shape());
    println!("box sum at (2,2): {}", out.at4(0, 2, 2, 0));
    println!("x-difference at (2,2): {}", out.at4(0, 2, 2, 1));

    let (pooled, _) = maxpool2d(&out, 2, 2)?;
    println!("max-pooled shape {:?}", pooled.shape());
    let gap = global_avg_pool(&pooled)?;
    println!("global average per channel: {:?}", gap.data());

    // Gradient of sum(conv(x)^2) / 2 with respect to the input.
    let grad_out = out.clone();
    let grads = conv2d_backward(&input, &params, &grad_out)?;
    let loss = |x: &[f64]| {
        let t = Tensor::new(vec![1, 6, 6, 1], x.to_vec()).unwrap();
        let y = conv2d_forward(&t, &params).unwrap();
        0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
    };
    let err = finite_difference_check(loss, input.data(), grads.grad_input.data(), 1e-5);
    println!("input gradient max relative error vs finite differences: {err:.2e}");
    Ok(())
}
