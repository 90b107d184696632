use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient material: need at least {needed}, got {got}")]
    InsufficientMaterial { needed: usize, got: usize },

    #[error("insufficient entropy: requested {requested} bits, at most {available} available")]
    InsufficientEntropy { requested: usize, available: usize },

    #[error("corrupt frame: crc mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CorruptFrame { stored: u32, computed: u32 },

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("unsupported frame version {0:#04x}")]
    UnsupportedVersion(u8),

    #[error("channel key group {group_no} of user {user} was already consumed")]
    ChannelKeyReused { user: String, group_no: u32 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
