use ndarray::NdFloat;
use rand::distr::uniform::SampleUniform;

/// Element type of the neural core: `f32` on the production path, `f64`
/// in tests and gradient checks.
pub trait Real: NdFloat + SampleUniform + 'static {
    /// Width in bytes, recorded in checkpoints.
    const PRECISION_BYTES: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const PRECISION_BYTES: u8 = 4;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION_BYTES: u8 = 8;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
