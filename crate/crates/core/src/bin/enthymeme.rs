fn main() -> std::process::ExitCode {
    enthymeme::cli::run(std::env::args_os())
}
