fn main() {
    std::process::exit(lcn::cli::run());
}
