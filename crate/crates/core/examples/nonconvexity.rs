//! Two Gram matrices realized by averaging matrices whose midpoint is not:
//! the exact set of consensus steps is not convex.
use pepnet::matrix_class::{fixture_pair, nonconvexity_fixture, recover_averaging_matrix, MatrixClass};

fn main() -> pepnet::Result<()> {
    let n = 3;
    for (lm, lp) in [(-0.5, 0.5), (0.0, 0.9)] {
        let fx = nonconvexity_fixture(n, lm, lp)?;
        let class = MatrixClass::new(lm, lp, "W")?;
        for (name, g) in [("G1", &fx.g1), ("G2", &fx.g2), ("G3", &fx.g3)] {
            let fit = recover_averaging_matrix(&[fixture_pair(g, n, 1e-9)], n, &class, 1e-6)?;
            println!("[{lm}, {lp}] {name}: residual {:.2e}, realizable {}", fit.residual, fit.feasible);
        }
    }
    Ok(())
}
