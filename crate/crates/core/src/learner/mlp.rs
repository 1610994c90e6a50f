//! The Q-function approximator: a feed-forward network with
//! rectified-linear hidden layers and a scalar output, trained by Adam on
//! squared temporal-difference errors, with a periodically synced target
//! copy for bootstrapping.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Result, UcError};

/// Adam moment estimates, one entry per weight/bias array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Online and target network parameters for one ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams {
    /// Layer widths, input first, scalar output last.
    pub layer_sizes: Vec<usize>,
    /// Row-major `[out x in]` weight matrices, one per connection.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub adam: AdamState,
    pub target_weights: Vec<Vec<f64>>,
    pub target_biases: Vec<Vec<f64>>,
}

impl QNetworkParams {
    /// Fresh network with fan-scaled uniform weights (range
    /// +-sqrt(6/(fan_in+fan_out))), zero biases, zero Adam moments, and
    /// the target initialized to the online copy.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        assert_eq!(*layer_sizes.last().unwrap(), 1, "scalar Q output");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect::<Vec<f64>>(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        let zeros_like = |arrs: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            arrs.iter().map(|a| vec![0.0; a.len()]).collect()
        };
        let adam = AdamState {
            m_weights: zeros_like(&weights),
            v_weights: zeros_like(&weights),
            m_biases: zeros_like(&biases),
            v_biases: zeros_like(&biases),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        QNetworkParams {
            layer_sizes: layer_sizes.to_vec(),
            target_weights: weights.clone(),
            target_biases: biases.clone(),
            weights,
            biases,
            adam,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Copies the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target_weights = self.weights.clone();
        self.target_biases = self.biases.clone();
    }

    /// True when every parameter and moment is finite.
    pub fn is_finite(&self) -> bool {
        let ok = |arrs: &Vec<Vec<f64>>| arrs.iter().flatten().all(|x| x.is_finite());
        ok(&self.weights)
            && ok(&self.biases)
            && ok(&self.adam.m_weights)
            && ok(&self.adam.v_weights)
    }
}

fn forward_with(
    layer_sizes: &[usize],
    weights: &[Vec<f64>],
    biases: &[Vec<f64>],
    features: &[f64],
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n_conn = weights.len();
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_conn + 1);
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_conn);
    activations.push(features.to_vec());
    for l in 0..n_conn {
        let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
        let mut z = vec![0.0; n_out];
        let a_prev = &activations[l];
        for o in 0..n_out {
            let row = &weights[l][o * n_in..(o + 1) * n_in];
            let mut acc = biases[l][o];
            for (w, a) in row.iter().zip(a_prev) {
                acc += w * a;
            }
            z[o] = acc;
        }
        pre.push(z.clone());
        let last = l + 1 == n_conn;
        if !last {
            for x in z.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
        activations.push(z);
    }
    let q = activations.last().unwrap()[0];
    (q, activations, pre)
}

/// Deterministic forward pass of the online network.
pub fn q_forward(params: &QNetworkParams, features: &[f64]) -> Result<f64> {
    check_input(params, features)?;
    Ok(forward_with(&params.layer_sizes, &params.weights, &params.biases, features).0)
}

/// Forward pass of the target network.
pub fn q_forward_target(params: &QNetworkParams, features: &[f64]) -> Result<f64> {
    check_input(params, features)?;
    Ok(forward_with(
        &params.layer_sizes,
        &params.target_weights,
        &params.target_biases,
        features,
    )
    .0)
}

fn check_input(params: &QNetworkParams, features: &[f64]) -> Result<()> {
    if features.len() != params.input_size() {
        return Err(UcError::Dimension(format!(
            "feature vector has {} entries, network expects {}",
            features.len(),
            params.input_size()
        )));
    }
    Ok(())
}

/// Loss with per-layer weight and bias gradients.
pub type LossAndGradients = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Squared-error loss and its gradients for one (features, target) pair.
pub fn gradients(
    params: &QNetworkParams,
    features: &[f64],
    target: f64,
) -> Result<LossAndGradients> {
    check_input(params, features)?;
    let sizes = &params.layer_sizes;
    let n_conn = params.weights.len();
    let (q, activations, pre) = forward_with(sizes, &params.weights, &params.biases, features);
    let loss = (q - target) * (q - target);

    let mut grad_w: Vec<Vec<f64>> = params.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = params.biases.iter().map(|b| vec![0.0; b.len()]).collect();

    // Backward sweep; delta holds dL/dz of the current layer.
    let mut delta = vec![2.0 * (q - target)];
    for l in (0..n_conn).rev() {
        let n_in = sizes[l];
        let a_prev = &activations[l];
        for (o, &d) in delta.iter().enumerate() {
            grad_b[l][o] = d;
            let row = &mut grad_w[l][o * n_in..(o + 1) * n_in];
            for (slot, a) in row.iter_mut().zip(a_prev) {
                *slot = d * a;
            }
        }
        if l == 0 {
            break;
        }
        let mut prev_delta = vec![0.0; n_in];
        for (o, &d) in delta.iter().enumerate() {
            let row = &params.weights[l][o * n_in..(o + 1) * n_in];
            for (slot, w) in prev_delta.iter_mut().zip(row) {
                *slot += d * w;
            }
        }
        // Rectifier gate of the hidden layer below.
        for (slot, &z) in prev_delta.iter_mut().zip(&pre[l - 1]) {
            if z <= 0.0 {
                *slot = 0.0;
            }
        }
        delta = prev_delta;
    }
    Ok((loss, grad_w, grad_b))
}

/// One Adam step on the squared error against `target`; returns the
/// pre-update loss. A non-finite loss or parameter aborts with a
/// divergence error (the caller attributes the member id).
pub fn td_update(
    params: &mut QNetworkParams,
    features: &[f64],
    target: f64,
    alpha: f64,
) -> Result<f64> {
    if !target.is_finite() {
        return Err(divergence(format!("non-finite target {target}")));
    }
    let (loss, grad_w, grad_b) = gradients(params, features, target)?;
    if !loss.is_finite() {
        return Err(divergence(format!("non-finite loss {loss}")));
    }
    let adam = &mut params.adam;
    adam.step += 1;
    let t = adam.step as i32;
    let bias1 = 1.0 - adam.beta1.powi(t);
    let bias2 = 1.0 - adam.beta2.powi(t);
    for l in 0..params.weights.len() {
        adam_apply(
            &mut params.weights[l],
            &grad_w[l],
            &mut adam.m_weights[l],
            &mut adam.v_weights[l],
            alpha,
            adam.beta1,
            adam.beta2,
            adam.epsilon,
            bias1,
            bias2,
        );
        adam_apply(
            &mut params.biases[l],
            &grad_b[l],
            &mut adam.m_biases[l],
            &mut adam.v_biases[l],
            alpha,
            adam.beta1,
            adam.beta2,
            adam.epsilon,
            bias1,
            bias2,
        );
    }
    if !params.is_finite() {
        return Err(divergence("non-finite parameter after update".into()));
    }
    Ok(loss)
}

fn divergence(reason: String) -> UcError {
    UcError::TrainingDivergence { member: 0, reason }
}

#[allow(clippy::too_many_arguments)]
fn adam_apply(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    alpha: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        theta[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"UCQNET01";

/// Writes a bit-exact checkpoint: layer sizes, online and target
/// parameters, Adam state, and an opaque config fingerprint.
pub fn save_checkpoint(path: &Path, params: &QNetworkParams, fingerprint: &str) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let fp = fingerprint.as_bytes();
    out.extend_from_slice(&(fp.len() as u64).to_le_bytes());
    out.extend_from_slice(fp);
    out.extend_from_slice(&(params.layer_sizes.len() as u64).to_le_bytes());
    for &s in &params.layer_sizes {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    let write_arrays = |out: &mut Vec<u8>, arrs: &Vec<Vec<f64>>| {
        for arr in arrs {
            for &x in arr {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    };
    write_arrays(&mut out, &params.weights);
    write_arrays(&mut out, &params.biases);
    write_arrays(&mut out, &params.target_weights);
    write_arrays(&mut out, &params.target_biases);
    write_arrays(&mut out, &params.adam.m_weights);
    write_arrays(&mut out, &params.adam.v_weights);
    write_arrays(&mut out, &params.adam.m_biases);
    write_arrays(&mut out, &params.adam.v_biases);
    out.extend_from_slice(&params.adam.step.to_le_bytes());
    out.extend_from_slice(&params.adam.beta1.to_le_bytes());
    out.extend_from_slice(&params.adam.beta2.to_le_bytes());
    out.extend_from_slice(&params.adam.epsilon.to_le_bytes());
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Loads a checkpoint written by [`save_checkpoint`]; the round trip is
/// bit-exact.
pub fn load_checkpoint(path: &Path) -> Result<(QNetworkParams, String)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(UcError::Parse {
                path: path.display().to_string(),
                line: None,
                reason: "checkpoint truncated".into(),
            });
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let magic = take(&mut cursor, 8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(UcError::Parse {
            path: path.display().to_string(),
            line: None,
            reason: "bad checkpoint magic".into(),
        });
    }
    let read_u64 = |cursor: &mut usize| -> Result<u64> {
        Ok(u64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()))
    };
    let read_f64 = |cursor: &mut usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()))
    };
    let fp_len = read_u64(&mut cursor)? as usize;
    let fingerprint = String::from_utf8(take(&mut cursor, fp_len)?.to_vec()).map_err(|_| {
        UcError::Parse {
            path: path.display().to_string(),
            line: None,
            reason: "fingerprint is not utf-8".into(),
        }
    })?;
    let n_layers = read_u64(&mut cursor)? as usize;
    let mut layer_sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_sizes.push(read_u64(&mut cursor)? as usize);
    }
    let weight_shapes: Vec<usize> = layer_sizes.windows(2).map(|p| p[0] * p[1]).collect();
    let bias_shapes: Vec<usize> = layer_sizes.iter().skip(1).copied().collect();
    let read_arrays = |shapes: &[usize], cursor: &mut usize| -> Result<Vec<Vec<f64>>> {
        shapes
            .iter()
            .map(|&len| (0..len).map(|_| read_f64(cursor)).collect())
            .collect()
    };
    let weights = read_arrays(&weight_shapes, &mut cursor)?;
    let biases = read_arrays(&bias_shapes, &mut cursor)?;
    let target_weights = read_arrays(&weight_shapes, &mut cursor)?;
    let target_biases = read_arrays(&bias_shapes, &mut cursor)?;
    let m_weights = read_arrays(&weight_shapes, &mut cursor)?;
    let v_weights = read_arrays(&weight_shapes, &mut cursor)?;
    let m_biases = read_arrays(&bias_shapes, &mut cursor)?;
    let v_biases = read_arrays(&bias_shapes, &mut cursor)?;
    let step = read_u64(&mut cursor)?;
    let beta1 = read_f64(&mut cursor)?;
    let beta2 = read_f64(&mut cursor)?;
    let epsilon = read_f64(&mut cursor)?;
    Ok((
        QNetworkParams {
            layer_sizes,
            weights,
            biases,
            adam: AdamState {
                m_weights,
                v_weights,
                m_biases,
                v_biases,
                step,
                beta1,
                beta2,
                epsilon,
            },
            target_weights,
            target_biases,
        },
        fingerprint,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut params = QNetworkParams::new(&[3, 4, 1], &mut rng);
        for w in params.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let q = q_forward(&params, &[0.3, -0.7, 1.0]).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn hand_set_single_hidden_unit() {
        // x -> relu(2x - 1) -> 3h + 0.5 at x = 2: h = 3, q = 9.5.
        let mut rng = StdRng::seed_from_u64(1);
        let mut params = QNetworkParams::new(&[1, 1, 1], &mut rng);
        params.weights[0] = vec![2.0];
        params.biases[0] = vec![-1.0];
        params.weights[1] = vec![3.0];
        params.biases[1] = vec![0.5];
        assert_eq!(q_forward(&params, &[2.0]).unwrap(), 9.5);
        // Negative pre-activation rectifies to zero: q = 0.5.
        assert_eq!(q_forward(&params, &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn input_size_checked() {
        let mut rng = StdRng::seed_from_u64(1);
        let params = QNetworkParams::new(&[3, 4, 1], &mut rng);
        assert!(q_forward(&params, &[1.0, 2.0]).is_err());
    }

    fn max_rel_error(params: &QNetworkParams, features: &[f64], target: f64) -> f64 {
        let (_, grad_w, grad_b) = gradients(params, features, target).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = params.clone();
        for l in 0..params.weights.len() {
            for idx in 0..params.weights[l].len() {
                let orig = probe.weights[l][idx];
                probe.weights[l][idx] = orig + h;
                let (q_plus, _, _) =
                    forward_with(&probe.layer_sizes, &probe.weights, &probe.biases, features);
                probe.weights[l][idx] = orig - h;
                let (q_minus, _, _) =
                    forward_with(&probe.layer_sizes, &probe.weights, &probe.biases, features);
                probe.weights[l][idx] = orig;
                let fd = ((q_plus - target).powi(2) - (q_minus - target).powi(2)) / (2.0 * h);
                let g = grad_w[l][idx];
                worst = worst.max((g - fd).abs() / (g.abs() + fd.abs()).max(1e-6));
            }
            for idx in 0..params.biases[l].len() {
                let orig = probe.biases[l][idx];
                probe.biases[l][idx] = orig + h;
                let (q_plus, _, _) =
                    forward_with(&probe.layer_sizes, &probe.weights, &probe.biases, features);
                probe.biases[l][idx] = orig - h;
                let (q_minus, _, _) =
                    forward_with(&probe.layer_sizes, &probe.weights, &probe.biases, features);
                probe.biases[l][idx] = orig;
                let fd = ((q_plus - target).powi(2) - (q_minus - target).powi(2)) / (2.0 * h);
                let g = grad_b[l][idx];
                worst = worst.max((g - fd).abs() / (g.abs() + fd.abs()).max(1e-6));
            }
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = StdRng::seed_from_u64(42);
        for draw in 0..10 {
            let params = QNetworkParams::new(&[6, 8, 8, 1], &mut rng);
            let features: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target = rng.gen_range(-2.0..2.0);
            let worst = max_rel_error(&params, &features, target);
            assert!(worst < 1e-4, "draw {draw}: max relative error {worst}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_untouched() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut params = QNetworkParams::new(&[4, 6, 1], &mut rng);
        let features = [0.5, -0.25, 1.0, 0.0];
        let target = q_forward(&params, &features).unwrap();
        let before = params.clone();
        let loss = td_update(&mut params, &features, target, 1e-3).unwrap();
        assert_eq!(loss, 0.0);
        let drift = params
            .weights
            .iter()
            .flatten()
            .zip(before.weights.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-12, "drift {drift}");
    }

    #[test]
    fn repeated_updates_fit_single_pair() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut params = QNetworkParams::new(&[4, 10, 10, 1], &mut rng);
        let features = [0.2, -0.4, 0.9, -1.0];
        let target = 1.5;
        let mut loss = f64::INFINITY;
        for _ in 0..10_000 {
            loss = td_update(&mut params, &features, target, 1e-3).unwrap();
            if loss < 1e-6 {
                break;
            }
        }
        assert!(loss < 1e-6, "final loss {loss}");
    }

    #[test]
    fn non_finite_target_is_divergence() {
        let mut rng = StdRng::seed_from_u64(5);
        let mut params = QNetworkParams::new(&[2, 3, 1], &mut rng);
        let err = td_update(&mut params, &[0.1, 0.2], f64::NAN, 1e-3);
        assert!(matches!(err, Err(UcError::TrainingDivergence { .. })));
    }

    #[test]
    fn target_sync_copies_online() {
        let mut rng = StdRng::seed_from_u64(6);
        let mut params = QNetworkParams::new(&[2, 3, 1], &mut rng);
        for _ in 0..5 {
            td_update(&mut params, &[0.4, -0.6], 2.0, 1e-2).unwrap();
        }
        assert!(
            params.weights != params.target_weights || params.biases != params.target_biases,
            "updates should move the online copy"
        );
        params.sync_target();
        assert_eq!(params.weights, params.target_weights);
        assert_eq!(params.biases, params.target_biases);
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("member.ckpt");
        let mut rng = StdRng::seed_from_u64(7);
        let mut params = QNetworkParams::new(&[5, 7, 1], &mut rng);
        for _ in 0..9 {
            td_update(&mut params, &[0.1, 0.2, -0.3, 0.4, 0.5], -1.25, 1e-3).unwrap();
        }
        save_checkpoint(&path, &params, "fingerprint-abc").unwrap();
        let (loaded, fp) = load_checkpoint(&path).unwrap();
        assert_eq!(fp, "fingerprint-abc");
        assert_eq!(loaded, params);
        // Bit-exact: serialize both and compare bytes.
        let path2 = dir.path().join("again.ckpt");
        save_checkpoint(&path2, &loaded, &fp).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
