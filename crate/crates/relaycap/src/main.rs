fn main() {
    std::process::exit(relaycap::cli::run());
}
