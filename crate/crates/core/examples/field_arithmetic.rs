//! Prime-field arithmetic, interpolation at zero and a small linear solve.
//!
//! cargo run --example field_arithmetic

use cliquefort::gfield::{lagrange_at_zero, solve_linear, FieldElement, UniPoly};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = 7;
    let fe = |v| FieldElement::new(v, q);

    let a = fe(3)?;
    println!("in F_{q}: 3 + 5 = {}, 3 * 5 = {}, 3^-1 = {}", (a + fe(5)?).value(), (a * fe(5)?).value(), a.inv()?.value());

    // h(x) = 2 + 4x + x^2, sampled at x = 1, 2, 3.
    let h = UniPoly::new(vec![fe(2)?, fe(4)?, fe(1)?], q)?;
    let samples: Vec<_> = (1..=3).map(|x| fe(x).map(|x| (x, h.eval(x)))).collect::<Result<_, _>>()?;
    println!("h(0) from three samples: {}", lagrange_at_zero(&samples, 2)?.value());

    // [[1, 1], [1, 2]] x = (0, 1)
    let m = vec![vec![fe(1)?, fe(1)?], vec![fe(1)?, fe(2)?]];
    let x = solve_linear(&m, &[fe(0)?, fe(1)?])?;
    println!("solution: {:?}", x.iter().map(|e| e.value()).collect::<Vec<_>>());
    Ok(())
}
