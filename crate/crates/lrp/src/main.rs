fn main() {
    std::process::exit(lrp::cli::main_entry());
}
