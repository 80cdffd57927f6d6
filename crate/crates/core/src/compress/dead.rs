//! Dead-neuron elimination on ternary networks.
//!
//! A hidden neuron is dead when it has no excitatory (+1) incoming weight —
//! its membrane can never cross a positive threshold — or when no later
//! layer reads its output. Dead neurons are removed together with their
//! row and the corresponding downstream columns; removal can cascade, so
//! the sweep iterates to a fixed point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::snn::{LayerWeights, Network};

/// Which hidden neurons were removed, by original index per hidden layer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadNeuronReport {
    pub removed: Vec<Vec<usize>>,
    /// Surviving original indices per hidden layer, in order.
    pub kept: Vec<Vec<usize>>,
}

fn drop_rows(m: &Matrix, keep: &[bool]) -> Matrix {
    let kept = keep.iter().filter(|&&k| k).count();
    let mut out = Matrix::zeros(kept, m.cols());
    let mut rr = 0;
    for r in 0..m.rows() {
        if keep[r] {
            out.row_mut(rr).copy_from_slice(m.row(r));
            rr += 1;
        }
    }
    out
}

fn drop_cols(m: &Matrix, keep: &[bool]) -> Matrix {
    let kept = keep.iter().filter(|&&k| k).count();
    let mut out = Matrix::zeros(m.rows(), kept);
    for r in 0..m.rows() {
        let src = m.row(r);
        let dst = out.row_mut(r);
        let mut cc = 0;
        for (c, &k) in keep.iter().enumerate() {
            if k {
                dst[cc] = src[c];
                cc += 1;
            }
        }
    }
    out
}

/// Remove inactive hidden neurons from a ternary network.
///
/// Returns the reduced network plus a report of removed/kept original
/// indices per hidden layer. Output-layer neurons are never removed.
pub fn eliminate_dead_neurons(net: &Network) -> Result<(Network, DeadNeuronReport)> {
    if !net.is_ternary() {
        return Err(Error::Config(
            "dead-neuron elimination expects a ternary network".into(),
        ));
    }
    let num_weight_layers = net.topology.num_weight_layers();
    let num_hidden = num_weight_layers - 1;

    let mut mats: Vec<Matrix> = net.layers.iter().map(|l| l.matrix().clone()).collect();
    // Original index of each surviving neuron, per hidden layer.
    let mut kept_idx: Vec<Vec<usize>> = (0..num_hidden)
        .map(|h| (0..mats[h].rows()).collect())
        .collect();
    let mut removed: Vec<Vec<usize>> = vec![Vec::new(); num_hidden];

    loop {
        let mut changed = false;
        for h in 0..num_hidden {
            let rows = mats[h].rows();
            if rows == 0 {
                continue;
            }
            let mut keep = vec![true; rows];
            for r in 0..rows {
                let has_excitatory = mats[h].row(r).iter().any(|&w| w == 1.0);
                let has_outgoing = (0..mats[h + 1].rows()).any(|j| mats[h + 1].get(j, r) != 0.0);
                if !has_excitatory || !has_outgoing {
                    keep[r] = false;
                }
            }
            if keep.iter().all(|&k| k) {
                continue;
            }
            changed = true;
            for (r, &k) in keep.iter().enumerate() {
                if !k {
                    removed[h].push(kept_idx[h][r]);
                }
            }
            kept_idx[h] = kept_idx[h]
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(&i, _)| i)
                .collect();
            mats[h] = drop_rows(&mats[h], &keep);
            mats[h + 1] = drop_cols(&mats[h + 1], &keep);
        }
        if !changed {
            break;
        }
    }

    for r in &mut removed {
        r.sort_unstable();
    }

    let mut topology = net.topology.clone();
    for h in 0..num_hidden {
        topology.layer_sizes[h + 1] = mats[h].rows();
    }
    let layers: Result<Vec<LayerWeights>> = mats.into_iter().map(LayerWeights::ternary).collect();
    let reduced = Network::new(topology, layers?)?;
    Ok((
        reduced,
        DeadNeuronReport {
            removed,
            kept: kept_idx,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{forward_network, InputPolicy, LifParams, NetworkTopology};

    fn ternary_net(sizes: Vec<usize>, mats: Vec<Matrix>) -> Network {
        let topo = NetworkTopology::uniform(
            sizes,
            LifParams {
                beta: 0.9,
                u_thr: 0.5,
                reset: crate::snn::ResetMode::Subtract,
            },
            InputPolicy::SinglePass,
            1,
        );
        let layers = mats.into_iter().map(|m| LayerWeights::ternary(m).unwrap()).collect();
        Network::new(topo, layers).unwrap()
    }

    #[test]
    fn all_zero_incoming_row_is_removed() {
        let w0 = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]).unwrap();
        let w1 = Matrix::from_rows(&[&[1.0, 1.0, 1.0]]).unwrap();
        // w1 column count shrinks with the hidden layer; build accordingly.
        let net = ternary_net(vec![2, 3, 1], vec![w0, w1]);
        let (reduced, report) = eliminate_dead_neurons(&net).unwrap();
        assert_eq!(report.removed[0], vec![1]);
        assert_eq!(report.kept[0], vec![0, 2]);
        assert_eq!(reduced.topology.layer_sizes, vec![2, 2, 1]);
        assert_eq!(reduced.layers[1].matrix().cols(), 2);
    }

    #[test]
    fn fully_connected_net_is_unchanged() {
        let w0 = Matrix::from_rows(&[&[1.0, -1.0], &[1.0, 1.0]]).unwrap();
        let w1 = Matrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let net = ternary_net(vec![2, 2, 1], vec![w0, w1]);
        let (reduced, report) = eliminate_dead_neurons(&net).unwrap();
        assert_eq!(reduced.topology.layer_sizes, net.topology.layer_sizes);
        assert!(report.removed[0].is_empty());
    }

    #[test]
    fn inhibitory_only_neuron_is_dead() {
        // Neuron 1 has only a -1 incoming weight: it can never fire.
        let w0 = Matrix::from_rows(&[&[1.0, 0.0], &[-1.0, 0.0]]).unwrap();
        let w1 = Matrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let net = ternary_net(vec![2, 2, 1], vec![w0, w1]);
        let (_, report) = eliminate_dead_neurons(&net).unwrap();
        assert_eq!(report.removed[0], vec![1]);
    }

    #[test]
    fn no_outgoing_neuron_is_dead_and_cascades() {
        // Hidden layer 2's neuron 1 reads only from hidden layer 1's neuron
        // 1, which in turn has no outgoing weights once neuron 1 of layer 2
        // is removed for having none itself.
        let w0 = Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let w1 = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let w2 = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let net = ternary_net(vec![1, 2, 2, 1], vec![w0, w1, w2]);
        let (reduced, report) = eliminate_dead_neurons(&net).unwrap();
        // Layer-2 neuron 1 has no outgoing; removing it leaves layer-1
        // neuron 1 with no outgoing either.
        assert_eq!(report.removed[1], vec![1]);
        assert_eq!(report.removed[0], vec![1]);
        assert_eq!(reduced.topology.layer_sizes, vec![1, 1, 1, 1]);
    }

    #[test]
    fn reduction_preserves_single_pass_outputs() {
        let w0 = Matrix::from_rows(&[
            &[1.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0],
            &[-1.0, 0.0, 1.0],
            &[1.0, 0.0, 1.0],
        ])
        .unwrap();
        let w1 = Matrix::from_rows(&[&[1.0, 1.0, 0.0, 1.0], &[0.0, 1.0, 1.0, 0.0]]).unwrap();
        let net = ternary_net(vec![3, 4, 2], vec![w0, w1]);
        let (reduced, _) = eliminate_dead_neurons(&net).unwrap();
        for bits in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|b| f64::from(bits >> b & 1)).collect();
            let (s_full, _) = forward_network(&net, &x).unwrap();
            let (s_red, _) = forward_network(&reduced, &x).unwrap();
            assert_eq!(s_full.output(), s_red.output(), "input {bits:03b}");
        }
    }
}
