fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(nlsorbit::cli::run(std::env::args_os()))
}
