//! Loads a circuit file, reports its shape and evaluates it on every input.
//!
//! cargo run --example circuit_file -- crates/core/examples/data/fig1.json

use std::path::PathBuf;

use cliquefort::circuit::{eval_reference, validate, LayeredCircuit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/fig1.json"));
    let c = LayeredCircuit::load(&path)?;
    let rep = validate(&c)?;
    println!("{}: depth {} width {} max fan {}", path.display(), rep.depth, rep.width, rep.max_fan);
    for i in 0..=rep.depth {
        println!("  layer {i}: gates {:?}, {} wires", c.gates_in_layer(i), c.wires_of_layer(i).len());
    }
    let m = c.num_inputs();
    if m <= 6 {
        for a in 0..1usize << m {
            let inputs: Vec<bool> = (0..m).map(|k| a >> k & 1 == 1).collect();
            let out = eval_reference(&c, &inputs)?;
            println!("  {:?} -> {:?}", bits(&inputs), bits(&out));
        }
    }
    Ok(())
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}
