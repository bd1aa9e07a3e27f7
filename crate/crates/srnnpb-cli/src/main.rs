fn main() {
    std::process::exit(srnnpb_cli::run(std::env::args_os()));
}
