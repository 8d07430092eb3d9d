fn main() {
    std::process::exit(btforge::cli::main());
}
