use std::process::ExitCode;

fn main() -> ExitCode {
    concfl::cli::main_entry()
}
