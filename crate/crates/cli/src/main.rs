fn main() {
    std::process::exit(dephaselab_cli::run(std::env::args_os()));
}
