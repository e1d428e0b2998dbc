fn main() -> std::process::ExitCode {
    wflow_vo::cli::main()
}
