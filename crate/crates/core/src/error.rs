use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid norm order {0} (must be >= 1)")]
    InvalidNormOrder(f64),
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("frame smaller than kernel: frame {frame_h}x{frame_w}, kernel {kernel_h}x{kernel_w}")]
    FrameSmallerThanKernel {
        frame_h: usize,
        frame_w: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("index {index} out of range for {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
