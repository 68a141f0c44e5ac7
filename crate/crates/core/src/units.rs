//! Unit conversions between device-facing units (GHz, MHz, m/s, s) and the
//! internal angular-frequency convention (rad/ns, ns, m/ns).

use std::f64::consts::PI;

/// 2π.
pub const TWO_PI: f64 = 2.0 * PI;

/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

/// Cyclic frequency in GHz to angular frequency in rad/ns.
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f
}

/// Cyclic frequency in MHz to angular frequency in rad/ns.
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e-3
}

/// Cyclic frequency in kHz to angular frequency in rad/ns.
pub fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e-6
}

/// Angular frequency in rad/ns to cyclic GHz.
pub fn to_ghz(w: f64) -> f64 {
    w / TWO_PI
}

/// Angular frequency in rad/ns to cyclic MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / TWO_PI * 1e3
}

/// Angular frequency in rad/ns to cyclic kHz.
pub fn to_khz(w: f64) -> f64 {
    w / TWO_PI * 1e6
}

/// Speed in m/s to m/ns.
pub fn m_per_ns(v: f64) -> f64 {
    v * 1e-9
}

/// Seconds to nanoseconds.
pub fn s_to_ns(t: f64) -> f64 {
    t * 1e9
}

/// Microseconds to nanoseconds.
pub fn us_to_ns(t: f64) -> f64 {
    t * 1e3
}
