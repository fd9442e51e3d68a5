use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model:\n{0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) | CliError::Invalid(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<imc_hitting::Error> for CliError {
    fn from(e: imc_hitting::Error) -> Self {
        use imc_hitting::Error as E;
        match e {
            E::InvalidArgument(_) | E::IndexOutOfRange { .. } | E::UnknownState(_) => {
                CliError::Usage(e.to_string())
            }
            E::StepSize(_)
            | E::Infeasible(_)
            | E::NonConvergence { .. }
            | E::AssumptionViolated(_)
            | E::AllCensored(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}
