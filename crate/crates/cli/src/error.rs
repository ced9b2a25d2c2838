/// Invalid combination of command-line options; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.is::<UsageError>() {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}
