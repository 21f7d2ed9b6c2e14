use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Discipline, ModelSpec, SensorClass};

/// A realized sensor network: which target positions every sensor reads.
#[derive(Clone, Debug)]
pub struct SensorNetwork {
    model: ModelSpec,
    k: usize,
    connections: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    seed: Option<u64>,
}

/// Serializable view of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub k: usize,
    pub n: usize,
    pub rate: f64,
    pub seed: Option<u64>,
    pub connections: Vec<Vec<usize>>,
    pub classes: Vec<usize>,
}

impl SensorNetwork {
    /// Network with explicit connections; every sensor belongs to class 0.
    pub fn from_connections(model: ModelSpec, k: usize, connections: Vec<Vec<usize>>) -> Result<Self> {
        let n = connections.len();
        Self::with_classes(model, k, connections, vec![0; n])
    }

    pub fn with_classes(
        model: ModelSpec,
        k: usize,
        connections: Vec<Vec<usize>>,
        class_of: Vec<usize>,
    ) -> Result<Self> {
        if connections.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one sensor".into()));
        }
        if class_of.len() != connections.len() {
            return Err(Error::LengthMismatch {
                left: class_of.len(),
                right: connections.len(),
            });
        }
        let positions = field_size(&model, k);
        for (l, (conn, &class)) in connections.iter().zip(&class_of).enumerate() {
            let cls = model
                .classes()
                .get(class)
                .ok_or_else(|| Error::InvalidArgument(format!("sensor {l} has unknown class {class}")))?;
            if conn.len() != cls.arity() {
                return Err(Error::InvalidArgument(format!(
                    "sensor {l} has {} connections, its class reads {}",
                    conn.len(),
                    cls.arity()
                )));
            }
            if let Some(&bad) = conn.iter().find(|&&p| p >= positions) {
                return Err(Error::InvalidArgument(format!(
                    "sensor {l} connects to position {bad} of {positions}"
                )));
            }
        }
        Ok(SensorNetwork {
            model,
            k,
            connections,
            class_of,
            seed: None,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// Target dimension (field side for 2D models).
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of target positions (`k`, or `k²` in 2D).
    pub fn positions(&self) -> usize {
        field_size(&self.model, self.k)
    }

    pub fn n(&self) -> usize {
        self.connections.len()
    }

    /// `k/n` (`k²/n` in 2D).
    pub fn rate(&self) -> f64 {
        self.positions() as f64 / self.n() as f64
    }

    pub fn connections(&self) -> &[Vec<usize>] {
        &self.connections
    }

    pub fn class(&self, sensor: usize) -> &SensorClass {
        &self.model.classes()[self.class_of[sensor]]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn record(&self) -> NetworkRecord {
        NetworkRecord {
            k: self.k,
            n: self.n(),
            rate: self.rate(),
            seed: self.seed,
            connections: self.connections.clone(),
            classes: self.class_of.clone(),
        }
    }
}

fn field_size(model: &ModelSpec, k: usize) -> usize {
    match model.discipline() {
        Discipline::Contiguous2d => k * k,
        _ => k,
    }
}

/// Draw a network from the model's connection ensemble.
pub fn generate_network(model: &ModelSpec, k: usize, n: usize, seed: u64) -> Result<SensorNetwork> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let positions = field_size(model, k);
    for class in model.classes() {
        match model.discipline() {
            Discipline::Arbitrary => {}
            Discipline::Contiguous1d if class.range() > k => {
                return Err(Error::RangeExceedsField {
                    range: class.range(),
                    positions,
                })
            }
            Discipline::Contiguous2d if 2 * class.range() + 1 > k => {
                return Err(Error::RangeExceedsField {
                    range: class.range(),
                    positions,
                })
            }
            _ => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas: Vec<f64> = model.classes().iter().map(|c| c.alpha()).collect();
    let mut connections = Vec::with_capacity(n);
    let mut class_of = Vec::with_capacity(n);
    for _ in 0..n {
        let l = if alphas.len() == 1 { 0 } else { pick(&alphas, rng.random()) };
        let class = &model.classes()[l];
        let conn = match model.discipline() {
            Discipline::Arbitrary => (0..class.arity()).map(|_| rng.random_range(0..k)).collect(),
            Discipline::Contiguous1d => {
                let start = rng.random_range(0..k);
                (0..class.arity()).map(|u| (start + u) % k).collect()
            }
            Discipline::Contiguous2d => {
                let (row, col) = (rng.random_range(0..k), rng.random_range(0..k));
                class.stencil().expect("2D classes carry a stencil").positions(row, col, k)
            }
        };
        connections.push(conn);
        class_of.push(l);
    }
    let mut net = SensorNetwork::with_classes(model.clone(), k, connections, class_of)?;
    net.seed = Some(seed);
    Ok(net)
}

/// Inverse-CDF draw from a pmf given a uniform `u ∈ [0, 1)`.
pub(crate) fn pick(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn check_vector(net: &SensorNetwork, v: &[u8]) -> Result<()> {
    if v.len() != net.positions() {
        return Err(Error::InvalidArgument(format!(
            "target vector has {} positions, the network has {}",
            v.len(),
            net.positions()
        )));
    }
    let q = net.model.alphabet();
    if let Some((position, &s)) = v.iter().enumerate().find(|(_, &s)| s as usize >= q) {
        return Err(Error::AlphabetViolation {
            symbol: s as usize,
            position,
        });
    }
    Ok(())
}

/// Ideal sensor outputs (output-symbol indices).
pub fn encode(net: &SensorNetwork, v: &[u8]) -> Result<Vec<usize>> {
    check_vector(net, v)?;
    let mut buf = Vec::new();
    Ok(net
        .connections
        .iter()
        .enumerate()
        .map(|(l, conn)| {
            buf.clear();
            buf.extend(conn.iter().map(|&p| v[p]));
            net.class(l).psi().apply(&buf)
        })
        .collect())
}

/// Pass ideal outputs through every sensor's channel.
pub fn observe(net: &SensorNetwork, x: &[usize], seed: u64) -> Result<Vec<usize>> {
    if x.len() != net.n() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: net.n(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .enumerate()
        .map(|(l, &xl)| {
            let rows = net.class(l).noise().rows();
            let row = rows.get(xl).ok_or(Error::AlphabetViolation {
                symbol: xl,
                position: l,
            })?;
            Ok(pick(row, rng.random()))
        })
        .collect()
}

/// Target vector drawn uniformly or from the model prior.
pub fn draw_targets(model: &ModelSpec, positions: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = model.alphabet();
    match model.prior() {
        Some(pv) => (0..positions).map(|_| pick(pv, rng.random()) as u8).collect(),
        None => (0..positions).map(|_| rng.random_range(0..q) as u8).collect(),
    }
}
