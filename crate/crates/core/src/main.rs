use std::process::ExitCode;

fn main() -> ExitCode {
    scorelstm::cli::main()
}
