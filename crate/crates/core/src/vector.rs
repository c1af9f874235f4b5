//! Two-component vectors shared by 1D and 2D code (1D keeps the second slot at zero).

use crate::scalar::Scalar;

pub type Point<T> = [T; 2];

#[inline]
pub fn add<T: Scalar>(a: Point<T>, b: Point<T>) -> Point<T> {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub<T: Scalar>(a: Point<T>, b: Point<T>) -> Point<T> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale<T: Scalar>(a: Point<T>, s: T) -> Point<T> {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot<T: Scalar>(a: Point<T>, b: Point<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm<T: Scalar>(a: Point<T>) -> T {
    a[0].hypot(a[1])
}
