use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar element type shared by tensors and layers.
///
/// Training runs in `f32`; `f64` is reserved for gradient verification and
/// oracle tests where finite-difference noise has to stay below 1e-5.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` constant into the element type.
#[inline]
pub fn real<E: Real>(x: f64) -> E {
    E::from_f64(x).expect("constant representable in element type")
}
