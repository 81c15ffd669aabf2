fn main() {
    std::process::exit(dnmpc::cli::run(std::env::args_os()));
}
