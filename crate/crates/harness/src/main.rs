fn main() -> std::process::ExitCode {
    proves_harness::cli::main_with_args(std::env::args_os())
}
