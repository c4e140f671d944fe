//! Encodes a message with the Reed-Muller code, erases part of the codeword
//! and decodes the whole message back.
//!
//! cargo run --example reed_muller_codec -- 7 2

use cliquefort::gfield::FieldElement;
use cliquefort::rmldc::{make_params, Message, ReedMullerCode};
use num_rational::Ratio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u32> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (q, r) = (*args.first().unwrap_or(&5), *args.get(1).unwrap_or(&2) as usize);
    let params = make_params(q, r, Ratio::new(1, 2))?;
    println!(
        "q={q} r={r}: degree {}, K={} message symbols, N={} codeword symbols, rate {:.3}",
        params.deg,
        params.k,
        params.n,
        params.k as f64 / params.n as f64
    );
    let code = ReedMullerCode::new(params.clone());

    let msg = Message((0..params.k).map(|i| FieldElement::new(i as u64 + 1, q)).collect::<Result<_, _>>()?);
    let mut cw = code.encode(&msg)?;
    // Drop every other symbol, up to half the codeword.
    let drop: Vec<usize> = (0..params.n).step_by(2).take(params.n / 2).collect();
    cw.erase(drop);
    println!("{} of {} symbols erased", cw.erasures(), cw.len());
    let back = code.block_decode(&cw)?;
    assert_eq!(back, msg);
    println!("decoded {:?}", back.0.iter().map(|e| e.value()).collect::<Vec<_>>());
    Ok(())
}
