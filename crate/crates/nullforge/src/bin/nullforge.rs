fn main() {
    std::process::exit(nullforge::cli::run());
}
