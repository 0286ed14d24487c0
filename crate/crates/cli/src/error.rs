use std::fmt;

use voxtriage::classifiers::ClassifierError;
use voxtriage::cnn::CnnError;
use voxtriage::pipeline::PipelineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, message: m.into() }
    }
    pub fn data(m: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, message: m.into() }
    }

    /// 2 usage, 3 data or schema, 4 numeric failure.
    pub fn code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }

    /// `error kind=<usage|data|numeric> code=<n> message=<json string>` on one line.
    pub fn line(&self) -> String {
        let kind = match self.kind {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        };
        let msg = serde_json::to_string(&self.message).unwrap_or_default();
        format!("error kind={kind} code={} message={msg}", self.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

fn classifier_kind(e: &ClassifierError) -> Kind {
    match e {
        ClassifierError::SingleClass
        | ClassifierError::MissingClassPair(..)
        | ClassifierError::TooFewForFolds { .. }
        | ClassifierError::EmptyTrainingSet
        | ClassifierError::LengthMismatch { .. }
        | ClassifierError::UnknownLabel(_)
        | ClassifierError::Io(_) => Kind::Data,
        ClassifierError::InvalidHyperparameter(_) => Kind::Usage,
        _ => Kind::Numeric,
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let kind = match &e {
            PipelineError::Config(_) => Kind::Usage,
            PipelineError::Cnn(CnnError::InvalidConfig(_)) => Kind::Usage,
            PipelineError::Cnn(CnnError::Diverged { .. }) => Kind::Numeric,
            PipelineError::Cnn(_) => Kind::Data,
            PipelineError::Classifier(c) => classifier_kind(c),
            PipelineError::Dimension { .. } | PipelineError::Probabilities(_) | PipelineError::Inconsistent(_) => {
                Kind::Numeric
            }
            _ => Kind::Data,
        };
        CliError { kind, message: e.to_string() }
    }
}
