//! Loop-only reference forward pass and a central-difference gradient check
//! for the network, written against the public API.

use std::collections::HashMap;

use bttt_core::board::CELLS;
use bttt_core::nn::{Batch, Mode, Network, NetworkConfig};
use bttt_core::{Board, Square};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Img = Vec<Vec<Vec<f64>>>;

/// Straight-line forward pass: nested loops only, parameters looked up by
/// checkpoint name.
pub struct Oracle {
    p: HashMap<String, (Vec<usize>, Vec<f64>)>,
    slope: f64,
    eps: f64,
    train: bool,
}

impl Oracle {
    pub fn new(net: &Network<f64>, train: bool) -> Self {
        let mut p = HashMap::new();
        for (n, t) in net.params().named().into_iter().chain(net.named_stats()) {
            p.insert(n, (t.shape().to_vec(), t.data().to_vec()));
        }
        Oracle {
            p,
            slope: net.config().leaky_slope,
            eps: net.config().bn_epsilon,
            train,
        }
    }

    fn get(&self, name: &str) -> &(Vec<usize>, Vec<f64>) {
        &self.p[name]
    }

    fn lrelu(&self, v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            self.slope * v
        }
    }

    fn conv(&self, name: &str, xs: &[Img]) -> Vec<Img> {
        let (shape, w) = self.get(name);
        let (k, cin, cout) = (shape[0], shape[2], shape[3]);
        let pad = if k == 4 { 1i64 } else { 0 };
        xs.iter()
            .map(|x| {
                let mut out = vec![vec![vec![0.0; cout]; 7]; 7];
                for r in 0..7i64 {
                    for c in 0..7i64 {
                        for o in 0..cout {
                            let mut acc = 0.0;
                            for kr in 0..k as i64 {
                                for kc in 0..k as i64 {
                                    let (ir, ic) = (r + kr - pad, c + kc - pad);
                                    if !(0..7).contains(&ir) || !(0..7).contains(&ic) {
                                        continue;
                                    }
                                    for i in 0..cin {
                                        let wi =
                                            ((kr as usize * k + kc as usize) * cin + i) * cout + o;
                                        acc += x[ir as usize][ic as usize][i] * w[wi];
                                    }
                                }
                            }
                            out[r as usize][c as usize][o] = acc;
                        }
                    }
                }
                out
            })
            .collect()
    }

    fn bn(&self, name: &str, xs: &[Img]) -> Vec<Img> {
        let gamma = &self.get(&format!("{name}.gamma")).1;
        let beta = &self.get(&format!("{name}.beta")).1;
        let ch = gamma.len();
        let (mean, var): (Vec<f64>, Vec<f64>) = if self.train {
            (0..ch)
                .map(|o| {
                    let vals: Vec<f64> = xs
                        .iter()
                        .flat_map(|x| x.iter().flatten().map(move |px| px[o]))
                        .collect();
                    let m = vals.iter().sum::<f64>() / vals.len() as f64;
                    let v = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
                    (m, v)
                })
                .unzip()
        } else {
            (
                self.get(&format!("{name}.running_mean")).1.clone(),
                self.get(&format!("{name}.running_var")).1.clone(),
            )
        };
        xs.iter()
            .map(|x| {
                x.iter()
                    .map(|row| {
                        row.iter()
                            .map(|px| {
                                (0..ch)
                                    .map(|o| {
                                        gamma[o] * (px[o] - mean[o]) / (var[o] + self.eps).sqrt()
                                            + beta[o]
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn act(&self, xs: Vec<Img>) -> Vec<Img> {
        xs.into_iter()
            .map(|x| {
                x.into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|px| px.into_iter().map(|v| self.lrelu(v)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn dense(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let (shape, w) = self.get(&format!("{name}.weight"));
        let b = &self.get(&format!("{name}.bias")).1;
        (0..shape[1])
            .map(|o| {
                b[o] + (0..shape[0])
                    .map(|i| x[i] * w[i * shape[1] + o])
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, boards: &[Board], blocks: usize) -> Vec<(Vec<f64>, f64)> {
        let xs: Vec<Img> = boards
            .iter()
            .map(|b| {
                let planes = b.to_planes();
                (0..7)
                    .map(|r| {
                        (0..7)
                            .map(|c| (0..3).map(|p| planes[p * 49 + r * 7 + c] as f64).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut a = self.act(self.bn("input.bn", &self.conv("input.conv.weight", &xs)));
        for i in 0..blocks {
            let h = self.act(self.bn(
                &format!("res{i}.bn1"),
                &self.conv(&format!("res{i}.conv1.weight"), &a),
            ));
            let y = self.bn(
                &format!("res{i}.bn2"),
                &self.conv(&format!("res{i}.conv2.weight"), &h),
            );
            let summed: Vec<Img> = y
                .iter()
                .zip(&a)
                .map(|(yi, ai)| {
                    (0..7)
                        .map(|r| {
                            (0..7)
                                .map(|c| {
                                    yi[r][c].iter().zip(&ai[r][c]).map(|(p, q)| p + q).collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            a = self.act(summed);
        }
        let vmap = self.act(self.bn("value.bn", &self.conv("value.conv.weight", &a)));
        let pmap = self.act(self.bn("policy.bn", &self.conv("policy.conv.weight", &a)));
        (0..boards.len())
            .map(|i| {
                let vflat: Vec<f64> = vmap[i].iter().flatten().map(|px| px[0]).collect();
                let hidden: Vec<f64> = self
                    .dense("value.fc1", &vflat)
                    .into_iter()
                    .map(|v| self.lrelu(v))
                    .collect();
                let v = self.dense("value.fc2", &hidden)[0].tanh();
                let pflat: Vec<f64> = pmap[i].iter().flatten().flatten().copied().collect();
                (self.dense("policy.fc", &pflat), v)
            })
            .collect()
    }
}

pub fn toy_net(seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::new(NetworkConfig::with_size(2, 1), &mut rng).unwrap();
    // move batch-norm away from its identity initialization
    for t in net.params_mut().tensors_mut() {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|v| {
                *v = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            });
        }
    }
    for s in net.stats_mut() {
        s.mean
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-0.5..0.5));
        s.var
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(0.5..2.0));
    }
    net
}

pub fn random_boards(n: usize, rng: &mut ChaCha8Rng) -> Vec<Board> {
    let mut out = Vec::new();
    while out.len() < n {
        let brick = Square::new(rng.random_range(0..49)).unwrap();
        let mut b = Board::new(brick);
        for _ in 0..rng.random_range(0..30) {
            let moves = b.legal_moves();
            if b.outcome().is_decided() || moves.is_empty() {
                break;
            }
            b = b
                .apply_move(moves[rng.random_range(0..moves.len())])
                .unwrap();
        }
        if !b.outcome().is_decided() {
            out.push(b);
        }
    }
    out
}

pub fn random_batch(boards: &[Board], rng: &mut ChaCha8Rng) -> Batch<f64> {
    let mut batch = Batch::default();
    for b in boards {
        let legal = b.legal_bits();
        let mut pi: Vec<f32> = (0..CELLS)
            .map(|i| {
                if legal >> i & 1 == 1 {
                    rng.random::<f32>()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f32 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);
        let z = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        batch.push(&b.to_planes(), &pi, z, legal);
    }
    batch
}

/// Largest absolute difference between the network and the oracle over
/// logits and values, in both batch-norm modes.
pub fn oracle_max_error(net_seed: u64, board_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(board_seed);
    let boards = random_boards(4, &mut rng);
    let mut worst = 0.0f64;
    for train in [false, true] {
        let mut net = toy_net(net_seed);
        net.set_mode(if train { Mode::Train } else { Mode::Eval });
        let planes: Vec<f64> = boards
            .iter()
            .flat_map(|b| b.to_planes())
            .map(f64::from)
            .collect();
        let out = net.forward(&planes, boards.len()).unwrap();
        let expect = Oracle::new(&net, train).forward(&boards, 1);
        for (i, (logits, v)) in expect.iter().enumerate() {
            worst = worst.max((out.values[i] - v).abs());
            for (a, b) in out.logits(i).iter().zip(logits) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

pub struct GradCheck {
    pub checked: usize,
    /// Entries whose gradient magnitude is under the comparison floor.
    pub below_floor: usize,
    pub worst_relative: f64,
    pub worst_name: String,
}

/// Loss evaluations carry roughly 1e-15 * |loss| of rounding, which divided
/// by 2h is about 1e-9; gradients are compared relative to at least this.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Central differences with step `h` on every parameter of the toy network.
pub fn gradient_check(net_seed: u64, batch_seed: u64, h: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    let net = toy_net(net_seed);
    let batch = random_batch(&random_boards(3, &mut rng), &mut rng);
    let l2 = 1e-3;
    let (_, grads, _) = net.loss_and_gradients(&batch, l2).unwrap();
    let mut report = GradCheck {
        checked: 0,
        below_floor: 0,
        worst_relative: 0.0,
        worst_name: String::new(),
    };
    let names: Vec<String> = net.params().named().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads
        .named()
        .into_iter()
        .map(|(_, t)| t.data().to_vec())
        .collect();
    for (ti, name) in names.iter().enumerate() {
        for (j, &a) in analytic[ti].iter().enumerate() {
            let at = |delta: f64| {
                let mut probe = net.clone();
                probe.params_mut().tensors_mut()[ti].data_mut()[j] += delta;
                probe.loss(&batch, l2).unwrap().total
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            if a.abs() < GRAD_FLOOR {
                report.below_floor += 1;
            }
            if rel > report.worst_relative {
                report.worst_relative = rel;
                report.worst_name = format!("{name}[{j}]");
            }
            report.checked += 1;
        }
    }
    report
}
