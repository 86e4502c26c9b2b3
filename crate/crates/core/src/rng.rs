//! Reproducible random streams.
//!
//! Per-vertex uniforms are addressed by coordinates: the ChaCha8 keystream
//! for `(seed, stream)` is read at a word position derived from the vertex
//! coordinates, so `u_x` does not depend on the box size or on the order in
//! which vertices are visited. Nested boxes anchored at the origin therefore
//! see the same uniforms on their common vertices.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{Configuration, Geometry};

/// Stream tags, kept in the top byte of the ChaCha stream id.
pub mod purpose {
    pub const SITES: u8 = 0;
    pub const DYNAMICS: u8 = 1;
    pub const SEARCH: u8 = 2;
    pub const AUX: u8 = 3;
}

pub fn stream_id(replica: u64, purpose: u8) -> u64 {
    (replica & ((1 << 56) - 1)) | ((purpose as u64) << 56)
}

/// Sequential generator for `(seed, replica, purpose)`.
pub fn stream(seed: u64, replica: u64, purpose: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(replica, purpose));
    rng
}

/// Packs coordinates into a 64-bit key, `64 / d` bits per axis with the
/// last coordinate least significant.
pub fn coord_key(x: &[usize]) -> u64 {
    let d = x.len();
    let bits = 64 / d as u32;
    let mut key = 0u64;
    for &xi in x {
        key = if bits == 64 { xi as u64 } else { (key << bits) | xi as u64 };
    }
    key
}

#[inline]
fn unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniforms in `[0, 1)` for every vertex of `g`, keyed by the coordinates
/// `origin + x`.
pub fn vertex_uniforms_at(g: &Geometry, seed: u64, replica: u64, origin: &[usize]) -> Vec<f64> {
    let mut rng = stream(seed, replica, purpose::SITES);
    let n = g.volume();
    let row = *g.dims().last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut x = vec![0usize; g.dim()];
    for start in (0..n).step_by(row) {
        g.coords_into(start, &mut x);
        for (xi, oi) in x.iter_mut().zip(origin) {
            *xi += oi;
        }
        rng.set_word_pos(2 * coord_key(&x) as u128);
        for _ in 0..row {
            out.push(unit(rng.next_u64()));
        }
    }
    out
}

pub fn vertex_uniforms(g: &Geometry, seed: u64, replica: u64) -> Vec<f64> {
    vertex_uniforms_at(g, seed, replica, &vec![0; g.dim()])
}

/// Vertex `x` is empty iff `u[x] < q`.
pub fn threshold_configuration(g: Arc<Geometry>, u: &[f64], q: f64) -> Configuration {
    let mut c = Configuration::occupied(g);
    for (v, &ux) in u.iter().enumerate() {
        if ux < q {
            c.set_empty(v);
        }
    }
    c
}

/// A q-random configuration for replica `replica`.
pub fn random_configuration_replica(g: Arc<Geometry>, q: f64, seed: u64, replica: u64) -> Configuration {
    let u = vertex_uniforms(&g, seed, replica);
    threshold_configuration(g, &u, q)
}

/// Each vertex independently empty with probability `q`.
pub fn random_configuration(g: Arc<Geometry>, q: f64, seed: u64) -> Configuration {
    random_configuration_replica(g, q, seed, 0)
}
