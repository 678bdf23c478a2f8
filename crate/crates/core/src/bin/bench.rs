fn main() {
    std::process::exit(tlstd::bench::main_with_args(std::env::args_os()));
}
