use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_orthogonal, NnError};

/// Feed-forward network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// its `out x in` weight matrix (row-major) followed by its `out` biases.
#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

/// Intermediates recorded by [`Mlp::forward_tape`]: the input and every
/// layer's output, tied to the parameter generation they were computed with.
#[derive(Clone, Debug)]
pub struct Tape {
    generation: u64,
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape holds the input at least")
    }
}

/// Layer sizes and flat parameters, as stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; parameter_count(sizes)],
            generation: 0,
        })
    }

    /// Orthogonal weights (hidden layers scaled by `hidden_gain`, the last
    /// layer by `output_gain`) and zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Mlp::zeros(sizes)?;
        let layers = net.num_layers();
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = init_orthogonal(fan_out, fan_in, gain, rng);
            net.params[offset..offset + w.len()].copy_from_slice(&w);
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_record(record: &NetworkRecord) -> Result<Self, NnError> {
        let mut net = Mlp::zeros(&record.sizes)?;
        if record.params.len() != net.params.len() {
            return Err(NnError::Shape(format!(
                "{} parameters stored for layer sizes {:?} (expected {})",
                record.params.len(),
                record.sizes,
                net.params.len()
            )));
        }
        net.params.copy_from_slice(&record.params);
        Ok(net)
    }

    pub fn to_record(&self) -> NetworkRecord {
        NetworkRecord {
            sizes: self.sizes.clone(),
            params: self.params.clone(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset = self.layer_offset(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + i * o];
        let b = &self.params[offset + i * o..offset + i * o + o];
        (w, b)
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.sizes
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_size() {
            return Err(NnError::Shape(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in 0..self.num_layers() {
            a = self.apply_layer(l, &a);
        }
        Ok(a)
    }

    pub fn forward_tape(&self, x: &[f64]) -> Result<(Vec<f64>, Tape), NnError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_vec());
        for l in 0..self.num_layers() {
            let next = self.apply_layer(l, activations.last().unwrap());
            activations.push(next);
        }
        let out = activations.last().unwrap().clone();
        Ok((
            out,
            Tape {
                generation: self.generation,
                activations,
            },
        ))
    }

    fn apply_layer(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let fan_in = a.len();
        let hidden = l + 1 < self.num_layers();
        b.iter()
            .enumerate()
            .map(|(o, bias)| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = row.iter().zip(a).fold(*bias, |acc, (wi, ai)| acc + wi * ai);
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Reverse-mode pass: adds `d loss / d params` into `grads` and returns
    /// `d loss / d input`.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NnError> {
        if tape.generation != self.generation || tape.activations.len() != self.sizes.len() {
            return Err(NnError::StaleTape);
        }
        if output_grad.len() != self.output_size() || grads.len() != self.params.len() {
            return Err(NnError::Shape(format!(
                "backward got {} output grads / {} param grads, expected {} / {}",
                output_grad.len(),
                grads.len(),
                self.output_size(),
                self.params.len()
            )));
        }
        let layers = self.num_layers();
        let mut upstream = output_grad.to_vec();
        for l in (0..layers).rev() {
            let input = &tape.activations[l];
            let output = &tape.activations[l + 1];
            let dz: Vec<f64> = if l + 1 == layers {
                upstream
            } else {
                upstream.iter().zip(output).map(|(g, h)| g * (1.0 - h * h)).collect()
            };
            let offset = self.layer_offset(l);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (gw, rest) = grads[offset..].split_at_mut(fan_in * fan_out);
            let gb = &mut rest[..fan_out];
            let (w, _) = self.layer(l);
            let mut down = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = dz[o];
                gb[o] += d;
                let row = o * fan_in;
                for i in 0..fan_in {
                    gw[row + i] += d * input[i];
                    down[i] += w[row + i] * d;
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }
}

/// Closed-form parameter count of an MLP with the given layer sizes.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut net = Mlp::zeros(&[3, 3]).unwrap();
        let p = net.params_mut();
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.7, 2.5];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn shape_mismatch() {
        let net = Mlp::zeros(&[2, 4, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(NnError::Shape(_))));
        assert!(Mlp::zeros(&[2]).is_err());
        assert!(Mlp::zeros(&[2, 0, 1]).is_err());
    }

    #[test]
    fn single_tanh_unit_derivative() {
        // f(x) = tanh(w x) as a 1 -> 1 hidden unit followed by an identity readout.
        let mut net = Mlp::zeros(&[1, 1, 1]).unwrap();
        {
            let p = net.params_mut();
            p[0] = 0.5; // w
            p[2] = 1.0; // readout weight
        }
        let (out, tape) = net.forward_tape(&[1.0]).unwrap();
        assert!((out[0] - 0.5f64.tanh()).abs() < 1e-15);
        let mut g = vec![0.0; net.num_parameters()];
        net.backward(&tape, &[1.0], &mut g).unwrap();
        let expected = 1.0 * (1.0 - 0.5f64.tanh().powi(2));
        assert!((g[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::orthogonal(&[2, 4, 4, 2], 1.0, 1.0, &mut rng).unwrap();
        let (_, tape) = net.forward_tape(&[0.2, -0.4]).unwrap();
        let mut g = vec![0.0; net.num_parameters()];
        let dx = net.backward(&tape, &[0.0, 0.0], &mut g).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_tape_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::orthogonal(&[2, 3, 1], 1.0, 1.0, &mut rng).unwrap();
        let (_, tape) = net.forward_tape(&[0.1, 0.2]).unwrap();
        net.params_mut()[0] += 1.0;
        let mut g = vec![0.0; net.num_parameters()];
        assert!(matches!(net.backward(&tape, &[1.0], &mut g), Err(NnError::StaleTape)));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(&[2, 4, 4, 2]), 42);
        assert_eq!(parameter_count(&[32, 64, 64, 32]), 8352);
        assert_eq!(Mlp::zeros(&[16, 64, 64, 1]).unwrap().num_parameters(), 16 * 64 + 64 + 64 * 64 + 64 + 65);
    }

    #[test]
    fn record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::orthogonal(&[4, 6, 3], 2f64.sqrt(), 0.01, &mut rng).unwrap();
        let back = Mlp::from_record(&net.to_record()).unwrap();
        assert_eq!(net, back);
        let mut bad = net.to_record();
        bad.params.pop();
        assert!(Mlp::from_record(&bad).is_err());
    }
}
