mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use commands::CliError;
    use gcpid::GcpError;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(GcpError::InvalidConfig("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(GcpError::UnknownExperiment("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(GcpError::CorruptFile("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(GcpError::EmptyImage).exit_code(), 2);
        assert_eq!(CliError::from(GcpError::Numeric("x".into())).exit_code(), 3);
    }

    #[test]
    fn sigma_and_weights_conflict() {
        let r = Cli::try_parse_from([
            "gcpid",
            "denoise",
            "image",
            "a.png",
            "b.png",
            "--sigma",
            "3",
            "--weights",
            "w",
        ]);
        assert_eq!(r.unwrap_err().kind(), ErrorKind::ArgumentConflict);
    }

    #[test]
    fn depth_is_restricted() {
        let r = Cli::try_parse_from(["gcpid", "denoise", "image", "a.png", "b.png", "--depth", "12"]);
        assert!(r.is_err());
        let ok = Cli::try_parse_from(["gcpid", "denoise", "image", "a.png", "b.png", "--depth", "16"]);
        assert!(ok.is_ok());
    }
}
