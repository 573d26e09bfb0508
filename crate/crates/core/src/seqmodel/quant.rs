//! Simulated post-training quantization: every tensor is mapped onto a
//! uniform `2^bits` level grid spanning its own [min, max] and back.

use super::model::Model;
use crate::error::{input_err, Result};

/// Affine quantize-dequantize of one tensor in place. Returns the grid step,
/// or `None` when the tensor is constant and left untouched.
pub fn quantize_tensor(values: &mut [f64], bits: u32) -> Option<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if values.is_empty() || !(hi > lo) {
        return None;
    }
    let levels = ((1u64 << bits) - 1) as f64;
    let scale = (hi - lo) / levels;
    for v in values.iter_mut() {
        let q = ((*v - lo) / scale).round().clamp(0.0, levels);
        *v = lo + q * scale;
    }
    Some(scale)
}

/// Returns a quantized copy; the source model is not modified.
pub fn quantize_dequantize(model: &Model, bits: u32) -> Result<Model> {
    if bits != 4 && bits != 8 {
        return Err(input_err!("unsupported bit width {bits}; expected 4 or 8"));
    }
    let mut out = model.clone();
    let tensors = out.layout().tensors().to_vec();
    let params = out.params_mut();
    for t in tensors {
        quantize_tensor(&mut params[t.range()], bits);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{ModelConfig, ModelRole};
    use proptest::prelude::*;

    #[test]
    fn constant_and_zero_tensors_pass_through() {
        let mut z = vec![0.0; 5];
        assert_eq!(quantize_tensor(&mut z, 4), None);
        assert_eq!(z, vec![0.0; 5]);
        let mut c = vec![0.7; 3];
        quantize_tensor(&mut c, 8);
        assert_eq!(c, vec![0.7; 3]);
    }

    #[test]
    fn grid_endpoints_recovered() {
        let mut v = vec![0.0, 1.0];
        assert_eq!(quantize_tensor(&mut v, 4), Some(1.0 / 15.0));
        assert_eq!(v, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_other_widths() {
        let m = Model::new(ModelConfig::new(8, 8), 0, ModelRole::Retain).unwrap();
        assert!(quantize_dequantize(&m, 3).is_err());
        let before = m.checksum();
        let q = quantize_dequantize(&m, 4).unwrap();
        assert_eq!(m.checksum(), before);
        assert_ne!(q.checksum(), before);
    }

    proptest! {
        #[test]
        fn error_bounded_by_half_step(values in prop::collection::vec(-3.0f64..3.0, 2..64), eight in any::<bool>()) {
            let bits = if eight { 8 } else { 4 };
            let mut q = values.clone();
            if let Some(scale) = quantize_tensor(&mut q, bits) {
                for (a, b) in values.iter().zip(&q) {
                    prop_assert!((a - b).abs() <= scale / 2.0 + 1e-12);
                }
            }
        }

        #[test]
        fn idempotent(values in prop::collection::vec(-3.0f64..3.0, 2..64)) {
            let mut once = values.clone();
            quantize_tensor(&mut once, 4);
            let mut twice = once.clone();
            quantize_tensor(&mut twice, 4);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
