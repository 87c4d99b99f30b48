fn main() {
    std::process::exit(krein::cli::run());
}
