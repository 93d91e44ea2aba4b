#![allow(dead_code)]

use logodet_core::dataset::FixtureSpec;
use logodet_core::Image;

/// The corpus used by the end-to-end checks: 4 classes, 5 train and 5 test
/// images each, 10 no-logo test images.
pub fn e2e_fixture_spec(seed: u64) -> FixtureSpec {
    FixtureSpec {
        classes: 4,
        train_per_class: 5,
        val_per_class: 0,
        test_per_class: 5,
        val_no_logo: 0,
        test_no_logo: 10,
        width: 64,
        height: 64,
        logo_side: (24, 32),
        seed,
    }
}

pub fn half_split() -> Image {
    Image::from_fn(4, 4, |x, _| if x < 2 { [0; 3] } else { [255; 3] })
}

pub const QUADRANT_COLORS: [[u8; 3]; 4] = [[200, 30, 30], [30, 200, 30], [30, 30, 200], [220, 220, 40]];

/// 8x8 image with four flat quadrants.
pub fn quadrants() -> Image {
    Image::from_fn(8, 8, |x, y| QUADRANT_COLORS[usize::from(y >= 4) * 2 + usize::from(x >= 4)])
}

/// A handful of small images with flat regions, gradients and noise.
pub fn fixture_suite() -> Vec<Image> {
    let mut v = vec![half_split(), quadrants(), Image::filled(16, 16, [77, 77, 77])];
    v.push(Image::from_fn(24, 20, |x, y| [(x * 10) as u8, (y * 12) as u8, 90]));
    v.push(Image::from_fn(32, 32, |x, y| {
        let h = (x.wrapping_mul(2654435761) ^ y.wrapping_mul(40503)) % 97;
        if (8..20).contains(&x) && (10..26).contains(&y) {
            [210, 40, 40]
        } else {
            [100 + h as u8, 110 + h as u8, 105]
        }
    }));
    v.push(Image::from_fn(40, 24, |x, y| {
        if (x / 8 + y / 8) % 2 == 0 { [250, 250, 250] } else { [5, 5, 5] }
    }));
    v
}

/// Exact-colour 8-connected components, by flood fill.
pub fn color_components(img: &Image) -> Vec<u32> {
    let (w, h) = (img.width(), img.height());
    let mut labels = vec![u32::MAX; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if labels[start] != u32::MAX {
            continue;
        }
        let color = img.pixels()[start];
        let mut stack = vec![start];
        labels[start] = next;
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == u32::MAX && img.pixels()[j] == color {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// True when every label forms a single 8-connected component.
pub fn labels_connected(width: usize, height: usize, labels: &[u32]) -> bool {
    let n = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut seen = vec![false; labels.len()];
    let mut components = vec![0usize; n];
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        let l = labels[start];
        components[l as usize] += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if !seen[j] && labels[j] == l {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    components.iter().all(|&c| c == 1)
}
