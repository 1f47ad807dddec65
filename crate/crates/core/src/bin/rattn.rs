fn main() -> std::process::ExitCode {
    rational_attention::cli::main()
}
