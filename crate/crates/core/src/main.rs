fn main() -> std::process::ExitCode {
    affine_lab::cli::run(std::env::args_os())
}
