fn main() {
    std::process::exit(ceabench::cli::run());
}
