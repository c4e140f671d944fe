//! Sweeps the crash fraction for the greedy adversary and prints the rounds
//! each cell took.
//!
//! cargo run --release --example parameter_sweep

use std::path::PathBuf;

use cliquefort::cli::{sweep, SweepArgs};

fn main() {
    let args = SweepArgs {
        n: vec![25, 27],
        alpha: vec!["0".into(), "0.1".into(), "0.2".into()],
        adversary: vec!["greedy".into()],
        circuit: vec!["gen:random:4:40:6:1".into()],
        delta: "1/2".into(),
        b: 2,
        seed: 0,
        out_dir: PathBuf::from("unused"),
        overrides: vec![],
    };
    println!("n\talpha\trounds\trestarts\tcrashes\tcorrect");
    for (cell, res) in sweep(&args) {
        match res {
            Ok(rep) => println!(
                "{}\t{}\t{}\t{}\t{}\t{}",
                cell.n, cell.alpha, rep.total_rounds, rep.restarts, rep.crashes, rep.correct
            ),
            Err(e) => println!("{}\t{}\terror: {e}", cell.n, cell.alpha),
        }
    }
}
