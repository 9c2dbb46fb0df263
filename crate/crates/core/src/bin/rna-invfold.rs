fn main() -> std::process::ExitCode {
    rna_invfold::cli::main()
}
