fn main() -> std::process::ExitCode {
    kgd_core::cli::main()
}
