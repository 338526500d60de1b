fn main() {
    std::process::exit(ddiqkd::main_with_args(std::env::args_os()));
}
