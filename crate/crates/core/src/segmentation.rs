//! Graph-based over-segmentation (Felzenszwalb-Huttenlocher) on an 8-connected
//! pixel grid.

use serde::{Deserialize, Serialize};

use crate::imagecore::{gaussian_smooth_planes, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    /// Merge threshold scale; larger values favour larger segments.
    pub scale_k: f64,
    pub min_size: usize,
    pub sigma: f64,
}

impl SegmentationParams {
    pub fn new(scale_k: f64, min_size: usize, sigma: f64) -> Self {
        assert!(scale_k > 0.0, "scale_k must be positive");
        assert!(min_size >= 1, "min_size must be at least 1");
        assert!(sigma >= 0.0, "sigma must be non-negative");
        Self {
            scale_k,
            min_size,
            sigma,
        }
    }
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self::new(100.0, 20, 0.8)
    }
}

/// Dense per-pixel segment ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentLabeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    segment_count: usize,
}

impl SegmentLabeling {
    /// Relabels arbitrary ids densely in raster order of first appearance.
    pub fn from_raw(width: usize, height: usize, raw: &[u32]) -> Self {
        assert_eq!(raw.len(), width * height);
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = map.len() as u32;
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self {
            width,
            height,
            labels,
            segment_count: map.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Colour-mapped rendering for debugging.
    pub fn render(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| {
            palette_color(self.label(x, y))
        })
    }
}

/// Fixed pseudo-random colour per segment id.
pub fn palette_color(id: u32) -> [u8; 3] {
    // splitmix64 finaliser
    let mut z = u64::from(id).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    [z as u8, (z >> 8) as u8, (z >> 16) as u8]
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Joins two roots; the merged internal difference is `weight`.
    fn join(&mut self, a: u32, b: u32, weight: f64) -> u32 {
        let (a, b) = if self.rank[a as usize] < self.rank[b as usize] {
            (b, a)
        } else {
            (a, b)
        };
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        self.internal[a as usize] = weight;
        if self.rank[a as usize] == self.rank[b as usize] {
            self.rank[a as usize] += 1;
        }
        a
    }

    fn size(&self, root: u32) -> usize {
        self.size[root as usize] as usize
    }
}

#[derive(Clone, Copy)]
struct Edge {
    weight: f64,
    a: u32,
    b: u32,
}

fn build_edges(img: &Image, sigma: f64) -> Vec<Edge> {
    let (w, h) = (img.width(), img.height());
    let planes = gaussian_smooth_planes(img, sigma);
    let dist = |i: usize, j: usize| -> f64 {
        planes
            .iter()
            .map(|p| {
                let d = f64::from(p.values()[i] - p.values()[j]);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut push = |j: usize| {
                edges.push(Edge {
                    weight: dist(i, j),
                    a: i as u32,
                    b: j as u32,
                })
            };
            if x + 1 < w {
                push(i + 1);
            }
            if y + 1 < h {
                push(i + w);
                if x + 1 < w {
                    push(i + w + 1);
                }
                if x > 0 {
                    push(i + w - 1);
                }
            }
        }
    }
    // always a < b, so (weight, a, b) is a total order
    edges.sort_by(|e, f| {
        e.weight
            .total_cmp(&f.weight)
            .then(e.a.cmp(&f.a))
            .then(e.b.cmp(&f.b))
    });
    edges
}

/// Segments `img` into 8-connected regions.
///
/// Edges are visited in ascending (weight, source, target) order and two
/// components merge when the edge weight does not exceed either component's
/// internal difference plus `scale_k / size`. A second pass over the same edge
/// order absorbs components smaller than `min_size` through their cheapest
/// boundary edge.
pub fn segment_graph(img: &Image, params: &SegmentationParams) -> SegmentLabeling {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let edges = build_edges(img, params.sigma);
    let mut set = DisjointSet::new(n);
    for e in &edges {
        let ra = set.find(e.a);
        let rb = set.find(e.b);
        if ra == rb {
            continue;
        }
        let ta = set.internal[ra as usize] + params.scale_k / set.size(ra) as f64;
        let tb = set.internal[rb as usize] + params.scale_k / set.size(rb) as f64;
        if e.weight <= ta.min(tb) {
            set.join(ra, rb, e.weight);
        }
    }
    if params.min_size > 1 {
        for e in &edges {
            let ra = set.find(e.a);
            let rb = set.find(e.b);
            if ra != rb && (set.size(ra) < params.min_size || set.size(rb) < params.min_size) {
                set.join(ra, rb, e.weight);
            }
        }
    }
    let raw: Vec<u32> = (0..n as u32).map(|i| set.find(i)).collect();
    SegmentLabeling::from_raw(w, h, &raw)
}

/// Pixel count of every segment, indexed by id.
pub fn segment_sizes(labeling: &SegmentLabeling) -> Vec<usize> {
    let mut sizes = vec![0; labeling.segment_count()];
    for &l in labeling.labels() {
        sizes[l as usize] += 1;
    }
    sizes
}
