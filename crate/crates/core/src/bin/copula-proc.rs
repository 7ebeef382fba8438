fn main() -> std::process::ExitCode {
    copula_proc::cli::main()
}
