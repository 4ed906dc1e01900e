//! The 3 × 3 worked example: two hand-written channels over a nine-vertex
//! grid whose vertices carry the letters a..i.

use crate::complex::{bifiltration_from_channels, Bifiltration, Simplex, TriangleRule};
use crate::error::Result;
use crate::img::GrayImage;

/// First channel, top row first.
pub const PHI1: [[f64; 3]; 3] = [[7.0, 5.0, 3.0], [8.0, 6.0, 9.0], [1.0, 4.0, 2.0]];
/// Second channel, top row first.
pub const PHI2: [[f64; 3]; 3] = [[3.0, 2.0, 7.0], [4.0, 9.0, 8.0], [5.0, 6.0, 1.0]];

/// Letters by vertex id: `a b c` on the bottom row, `g h i` on the top.
pub const LETTERS: [char; 9] = ['g', 'h', 'i', 'd', 'e', 'f', 'a', 'b', 'c'];

pub fn channels() -> (GrayImage, GrayImage) {
    (
        GrayImage::from_rows(&PHI1).expect("fixture channel"),
        GrayImage::from_rows(&PHI2).expect("fixture channel"),
    )
}

pub fn fixture_bifiltration(rule: TriangleRule) -> Result<Bifiltration> {
    let (a, b) = channels();
    bifiltration_from_channels(&a, &b, rule)
}

pub fn vertex_of(letter: char) -> Option<u32> {
    LETTERS.iter().position(|&c| c == letter).map(|i| i as u32)
}

/// Letters of a simplex in alphabetical order, e.g. `ab`.
pub fn simplex_label(s: &Simplex) -> String {
    let mut letters: Vec<char> = s.vertices().iter().map(|&v| LETTERS[v as usize]).collect();
    letters.sort_unstable();
    letters.into_iter().collect()
}

/// Labels of the simplices in the sublevel set at `grade`, sorted by
/// dimension then alphabetically.
pub fn sublevel_labels(b: &Bifiltration, grade: [f64; 2]) -> Vec<String> {
    let complex = b.complex();
    let mut labels: Vec<(usize, String)> = b
        .sublevel(grade)
        .into_iter()
        .map(|id| (complex.dim_of(id), simplex_label(&complex.simplex(id))))
        .collect();
    labels.sort();
    labels.into_iter().map(|(_, l)| l).collect()
}
