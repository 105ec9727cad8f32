use std::fmt;

/// Pipeline stage named in failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Load,
    WagonId,
    Thermal,
    Pantograph,
    Tiling,
    Manifest,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::WagonId => "wagon-id",
            Stage::Thermal => "thermal",
            Stage::Pantograph => "pantograph",
            Stage::Tiling => "tiling",
            Stage::Manifest => "manifest",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, configuration or input documents.
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: gate_core::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn invalid(e: impl fmt::Display) -> Self {
        Self::Validation(e.to_string())
    }

    pub fn at(stage: Stage) -> impl FnOnce(gate_core::Error) -> Self {
        move |source| Self::Stage { stage, source }
    }

    /// 2 for validation errors, 3 for stage and runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Stage { .. } | CliError::Runtime(_) => 3,
        }
    }
}
