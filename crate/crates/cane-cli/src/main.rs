fn main() {
    std::process::exit(cane_cli::run());
}
