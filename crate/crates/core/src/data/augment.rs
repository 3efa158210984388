use rand::Rng;

use crate::model::Patch;

/// Horizontal flip followed by a counter-clockwise rotation of
/// `quarter_turns × 90°`.
pub fn transform(p: &Patch, flip: bool, quarter_turns: u8) -> Patch {
    let n = p.size();
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            // invert the rotation to find the source pixel, then the flip
            let (mut sr, mut sc) = (r, c);
            for _ in 0..quarter_turns % 4 {
                (sr, sc) = (sc, n - 1 - sr);
            }
            if flip {
                sc = n - 1 - sc;
            }
            out.push(p.at(sr, sc));
        }
    }
    Patch::new(n, out, p.point_id).expect("same size and range")
}

/// Flip with probability 0.5 and a uniform rotation from {0°, 90°, 180°, 270°}.
pub fn augment<R: Rng + ?Sized>(p: &Patch, rng: &mut R) -> Patch {
    let flip = rng.random_bool(0.5);
    let turns = rng.random_range(0..4u8);
    transform(p, flip, turns)
}
