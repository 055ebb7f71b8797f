//! Builds a small expression on the tape, runs the backward pass and
//! compares the result with central finite differences.

use seqfuse::numerics::{finite_diff_check, Graph, Tensor};

fn loss(g: &mut Graph, w: &Tensor) -> seqfuse::Result<(f64, Vec<f64>)> {
    let x = g.constant(Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?);
    let w = g.leaf(w.clone(), true);
    let h = g.matmul(x, w)?;
    let h = g.tanh(h);
    let lp = g.log_softmax(h);
    let picked = g.gather(lp, &[1, 0])?;
    let nll = g.sum(picked);
    let nll = g.scale(nll, -1.0);
    g.backward(nll)?;
    Ok((g.scalar(nll), g.grad(w).into_data()))
}

fn main() -> seqfuse::Result<()> {
    let w = Tensor::matrix(3, 2, vec![0.2, -0.4, 0.7, 0.1, -0.3, 0.9])?;
    let (value, grad) = loss(&mut Graph::new(), &w)?;
    println!("loss {value:.6}");
    println!("d loss / d w = {grad:.6?}");
    let report = finite_diff_check(
        |p: &[f64]| Ok(loss(&mut Graph::new(), &Tensor::matrix(3, 2, p.to_vec())?)?.0),
        w.data(),
        &grad,
        1e-5,
        1e-6,
    )?;
    println!(
        "finite differences: max relative error {:.2e}, pass {}",
        report.max_rel_err, report.pass
    );
    Ok(())
}
