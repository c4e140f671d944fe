//! Recovers one message symbol from the q - 1 symbols on a line, with some
//! of them erased.
//!
//! cargo run --example local_decoding

use cliquefort::gfield::FieldElement;
use cliquefort::rmldc::{make_params, Message, ReedMullerCode};
use num_rational::Ratio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let code = ReedMullerCode::new(make_params(5, 2, Ratio::new(1, 2))?);
    let p = code.params();
    let msg = Message(vec![FieldElement::new(4, 5)?, FieldElement::new(1, 5)?, FieldElement::new(3, 5)?]);
    let cw = code.encode(&msg)?;
    println!("up to {} erasures per line are tolerated", p.erasure_threshold());

    for target in 0..p.k {
        for d in 0..code.directions().len() {
            let plan = code.plan_for_direction(target, d)?;
            // Erase the first two queried symbols.
            let responses: Vec<_> = plan
                .queries
                .iter()
                .enumerate()
                .map(|(k, &x)| if k < 2 { None } else { cw.0[x] })
                .collect();
            let got = code.local_decode(&plan, &responses)?;
            println!(
                "target {target} direction {:?} queries {:?} -> {:?}",
                plan.direction.values(),
                plan.queries,
                got.map(|v| v.value())
            );
            assert_eq!(got, Some(msg.0[target]));
        }
    }
    Ok(())
}
