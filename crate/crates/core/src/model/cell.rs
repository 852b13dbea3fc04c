use super::tensor::{sigmoid, Tensor};
use super::{ModelError, ModelParams};

/// Activations of one recurrent step, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStep {
    /// Cell input: token embedding plus the chunk's memory vector.
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    /// Update gate.
    pub z: Vec<f64>,
    /// Reset gate.
    pub r: Vec<f64>,
    /// Candidate state.
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

fn affine(w: &Tensor, x: &[f64], u: &Tensor, h: &[f64], b: &Tensor) -> Vec<f64> {
    let mut out = b.data().to_vec();
    w.matvec_add(x, &mut out);
    u.matvec_add(h, &mut out);
    out
}

pub(crate) fn cell_step(params: &ModelParams, h_prev: &[f64], x: Vec<f64>) -> CellStep {
    let z: Vec<f64> = affine(&params.w_z, &x, &params.u_z, h_prev, &params.b_z)
        .into_iter()
        .map(sigmoid)
        .collect();
    let r: Vec<f64> = affine(&params.w_r, &x, &params.u_r, h_prev, &params.b_r)
        .into_iter()
        .map(sigmoid)
        .collect();
    let gated: Vec<f64> = r.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let candidate: Vec<f64> = affine(&params.w_h, &x, &params.u_h, &gated, &params.b_h)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let h = h_prev
        .iter()
        .zip(&z)
        .zip(&candidate)
        .map(|((hp, z), c)| (1.0 - z) * hp + z * c)
        .collect();
    CellStep {
        x,
        h_prev: h_prev.to_vec(),
        z,
        r,
        candidate,
        h,
    }
}

/// One gated recurrent step:
///
/// ```text
/// z = sigmoid(W_z x + U_z h + b_z)
/// r = sigmoid(W_r x + U_r h + b_r)
/// c = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * c
/// ```
pub fn recurrent_cell(
    params: &ModelParams,
    h_prev: &[f64],
    x: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let d = params.d();
    if h_prev.len() != d || x.len() != d {
        return Err(ModelError::DimensionMismatch(format!(
            "cell expects vectors of length {d}, got h={} x={}",
            h_prev.len(),
            x.len()
        )));
    }
    Ok(cell_step(params, h_prev, x.to_vec()).h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d2_params() -> ModelParams {
        let mut p = ModelParams::zeros(2, 7);
        p.w_z = Tensor::from_rows(&[&[0.5, -0.3], &[0.2, 0.1]]);
        p.u_z = Tensor::from_rows(&[&[0.1, 0.4], &[-0.2, 0.3]]);
        p.b_z = Tensor::from_vec(2, 1, vec![0.05, -0.1]);
        p.w_r = Tensor::from_rows(&[&[-0.4, 0.2], &[0.3, 0.6]]);
        p.u_r = Tensor::from_rows(&[&[0.2, -0.1], &[0.5, 0.2]]);
        p.b_r = Tensor::from_vec(2, 1, vec![0.0, 0.1]);
        p.w_h = Tensor::from_rows(&[&[0.7, -0.5], &[0.1, 0.9]]);
        p.u_h = Tensor::from_rows(&[&[-0.3, 0.2], &[0.4, -0.6]]);
        p.b_h = Tensor::from_vec(2, 1, vec![0.1, 0.0]);
        p
    }

    #[test]
    fn zero_params_halve_state() {
        let p = ModelParams::zeros(3, 7);
        let h = recurrent_cell(&p, &[0.4, -2.0, 1.0], &[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(h, vec![0.2, -1.0, 0.5]);
        assert_eq!(
            recurrent_cell(&p, &[0.0; 3], &[1.0; 3]).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn matches_hand_evaluation_d2() {
        // Evaluated coordinate by coordinate outside this crate.
        let step = cell_step(&d2_params(), &[0.3, -0.7], vec![1.0, 0.5]);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(&step.z, &[0.5374298453437496, 0.4700359482354282]));
        assert!(close(&step.r, &[0.45760205922564895, 0.6704011598088686]));
        assert!(close(
            &step.candidate,
            &[0.3926757338679713, 0.7096511442145259]
        ));
        assert!(close(&step.h, &[0.3498067053197823, -0.03741328774796898]));
    }

    #[test]
    fn dimension_mismatch() {
        let p = ModelParams::zeros(2, 7);
        assert!(matches!(
            recurrent_cell(&p, &[0.0; 3], &[0.0; 2]),
            Err(ModelError::DimensionMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn state_stays_in_blend_bounds(
            seed in 0u64..1000,
            h in prop::collection::vec(-5.0f64..5.0, 4),
            x in prop::collection::vec(-50.0f64..50.0, 4),
        ) {
            let mut p = ModelParams::init(4, 7, seed);
            for (_, t) in p.tensors_mut() { t.scale(20.0); }
            let out = recurrent_cell(&p, &h, &x).unwrap();
            let bound = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for v in out {
                prop_assert!(v.is_finite());
                prop_assert!(v.abs() <= bound);
            }
        }
    }
}
