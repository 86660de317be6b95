use std::process::ExitCode;

use ifront_cli::ParseError;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match ifront_cli::parse_or_help(&argv, None) {
        Ok(plan) => ExitCode::from(ifront_cli::execute(&plan) as u8),
        Err(ParseError::Help(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(ParseError::Usage(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
