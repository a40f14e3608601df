fn main() -> std::process::ExitCode {
    matchalign::cli::main()
}
