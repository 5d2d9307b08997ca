fn main() {
    std::process::exit(ambivis::cli::main());
}
