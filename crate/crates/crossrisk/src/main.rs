fn main() -> std::process::ExitCode {
    crossrisk::cli::main()
}
