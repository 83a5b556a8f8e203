fn main() {
    std::process::exit(geomorph::cli::main());
}
