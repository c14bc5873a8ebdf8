fn main() {
    std::process::exit(rdmg::cli::run());
}
