fn main() {
    std::process::exit(cliquefort::cli::main());
}
