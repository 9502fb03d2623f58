//! Binary mask morphology: hole filling, largest 8-connected component,
//! Chebyshev dilation and 4-neighbour contours.
//!
//! Holes are background regions not 4-connected to the raster border;
//! foreground components use 8-connectivity. All operations work inside the
//! mask bounding box (plus a margin) so cost scales with the instance, not the scene.

use std::collections::VecDeque;

use crate::interchange::{BBox, BinaryMask};

/// Boundary pixels of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    /// Row-major order.
    pub pixels: Vec<(u32, u32)>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn to_mask(&self, width: u32, height: u32) -> BinaryMask {
        BinaryMask::from_pixels(width, height, self.pixels.iter().copied())
            .expect("contour of a non-empty mask is non-empty")
    }
}

/// Local window over a mask: the bbox grown by `pad` on each side, where
/// cells outside the raster read as off.
struct Window {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
}

impl Window {
    fn around(b: BBox, pad: u32) -> Self {
        let pad = pad as i64;
        Self {
            x0: b.x_min as i64 - pad,
            y0: b.y_min as i64 - pad,
            w: (b.width() as i64 + 2 * pad) as usize,
            h: (b.height() as i64 + 2 * pad) as usize,
        }
    }

    fn load(&self, mask: &BinaryMask) -> Vec<bool> {
        let mut cells = Vec::with_capacity(self.w * self.h);
        for j in 0..self.h {
            for i in 0..self.w {
                cells.push(mask.get_signed(self.x0 + i as i64, self.y0 + j as i64));
            }
        }
        cells
    }

    fn store(&self, cells: &[bool], width: u32, height: u32) -> BinaryMask {
        let mut bits = vec![false; width as usize * height as usize];
        for j in 0..self.h {
            let y = self.y0 + j as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            for i in 0..self.w {
                let x = self.x0 + i as i64;
                if x < 0 || x >= width as i64 {
                    continue;
                }
                if cells[j * self.w + i] {
                    bits[y as usize * width as usize + x as usize] = true;
                }
            }
        }
        BinaryMask::new(width, height, bits).expect("morphology preserves non-emptiness")
    }
}

/// Turns on every background pixel that cannot reach the raster border
/// through 4-connected background.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    // A one-cell ring around the bbox is background connected to the border.
    let win = Window::around(mask.bbox(), 1);
    let cells = win.load(mask);
    let (w, h) = (win.w, win.h);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w {
        for j in [0, h - 1] {
            outside[j * w + i] = true;
            queue.push_back((i, j));
        }
    }
    for j in 1..h - 1 {
        for i in [0, w - 1] {
            outside[j * w + i] = true;
            queue.push_back((i, j));
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let mut visit = |ni: usize, nj: usize| {
            let k = nj * w + ni;
            if !cells[k] && !outside[k] {
                outside[k] = true;
                queue.push_back((ni, nj));
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i + 1 < w {
            visit(i + 1, j);
        }
        if j > 0 {
            visit(i, j - 1);
        }
        if j + 1 < h {
            visit(i, j + 1);
        }
    }
    let filled: Vec<bool> = outside.iter().map(|&o| !o).collect();
    win.store(&filled, mask.width(), mask.height())
}

/// 8-connected component labels over `cells` (0 = background), with the
/// pixel count of each label. Labels are assigned in row-major order of
/// each component's first pixel.
fn label_components(cells: &[bool], w: usize, h: usize) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !cells[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = label;
        stack.push(start);
        while let Some(k) = stack.pop() {
            size += 1;
            let (i, j) = ((k % w) as i64, (k / w) as i64);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                        continue;
                    }
                    let nk = nj as usize * w + ni as usize;
                    if cells[nk] && labels[nk] == 0 {
                        labels[nk] = label;
                        stack.push(nk);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest 8-connected component. Equal sizes are resolved in
/// favour of the component whose topmost-leftmost pixel comes first in
/// (y, x) order.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let win = Window::around(mask.bbox(), 0);
    let cells = win.load(mask);
    let (labels, sizes) = label_components(&cells, win.w, win.h);
    // Labels are numbered in row-major discovery order, so the first maximum
    // is also the tie-break winner.
    let mut best = 1usize;
    for (label, &size) in sizes.iter().enumerate().skip(1) {
        if size > sizes[best] {
            best = label;
        }
    }
    let kept: Vec<bool> = labels.iter().map(|&l| l as usize == best).collect();
    win.store(&kept, mask.width(), mask.height())
}

/// Number of 8-connected foreground components.
pub fn component_count(mask: &BinaryMask) -> usize {
    let win = Window::around(mask.bbox(), 0);
    let cells = win.load(mask);
    label_components(&cells, win.w, win.h).1.len() - 1
}

/// Sliding-window OR along one axis using running counts.
fn max_filter_1d(src: &[bool], dst: &mut [bool], radius: usize) {
    let n = src.len();
    let mut count = 0usize;
    // window for index i is [i - radius, i + radius]
    for &v in src.iter().take(radius.min(n)) {
        count += v as usize;
    }
    for i in 0..n {
        if i + radius < n {
            count += src[i + radius] as usize;
        }
        if i > radius {
            count -= src[i - radius - 1] as usize;
        }
        dst[i] = count > 0;
    }
}

/// Chebyshev dilation: a pixel is on iff some source on-pixel lies within
/// `radius` in both axes. Radius 0 returns an identical mask.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let win = Window::around(mask.bbox(), radius);
    let cells = win.load(mask);
    let r = radius as usize;
    let (w, h) = (win.w, win.h);
    let mut horiz = vec![false; w * h];
    for j in 0..h {
        max_filter_1d(
            &cells[j * w..(j + 1) * w],
            &mut horiz[j * w..(j + 1) * w],
            r,
        );
    }
    let mut out = vec![false; w * h];
    let mut col = vec![false; h];
    let mut col_out = vec![false; h];
    for i in 0..w {
        for j in 0..h {
            col[j] = horiz[j * w + i];
        }
        max_filter_1d(&col, &mut col_out, r);
        for j in 0..h {
            out[j * w + i] = col_out[j];
        }
    }
    win.store(&out, mask.width(), mask.height())
}

/// On-pixels with at least one 4-neighbour that is off or outside the raster.
pub fn contour(mask: &BinaryMask) -> Contour {
    let pixels = mask
        .pixels()
        .filter(|&(x, y)| {
            let (x, y) = (x as i64, y as i64);
            !mask.get_signed(x - 1, y)
                || !mask.get_signed(x + 1, y)
                || !mask.get_signed(x, y - 1)
                || !mask.get_signed(x, y + 1)
        })
        .collect();
    Contour { pixels }
}

/// Which post-processing step runs first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PostprocessOrder {
    #[default]
    FillThenLargest,
    LargestThenFill,
}

/// Segmentation post-processing: hole infilling and largest-component preservation.
pub fn postprocess(mask: &BinaryMask, order: PostprocessOrder) -> BinaryMask {
    match order {
        PostprocessOrder::FillThenLargest => largest_component(&fill_holes(mask)),
        PostprocessOrder::LargestThenFill => fill_holes(&largest_component(mask)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        BinaryMask::from_fn(w, h, |x, y| rows[y as usize].as_bytes()[x as usize] == b'#').unwrap()
    }

    #[test]
    fn fill_ring() {
        let ring = mask(&["#####", "#...#", "#...#", "#...#", "#####"]);
        assert_eq!(fill_holes(&ring).area(), 25);
    }

    #[test]
    fn fill_two_single_pixel_holes() {
        let m = mask(&[
            ".......", ".#####.", ".#.###.", ".#####.", ".###.#.", ".#####.", ".......",
        ]);
        let filled = fill_holes(&m);
        assert_eq!(filled.area(), m.area() + 2);
        assert!(filled.get(2, 2) && filled.get(4, 4));
        assert!(!filled.get(0, 0));
    }

    #[test]
    fn fill_no_holes_identity_and_notch_kept() {
        // background reaching the border through a notch is not a hole
        let m = mask(&["#####", "#...#", "#...#", "#...#", "##.##"]);
        assert_eq!(fill_holes(&m), m);
    }

    #[test]
    fn diagonal_gap_is_still_a_hole() {
        // background only 8-connected to the outside counts as a hole
        let m = mask(&[".#.", "#.#", ".#."]);
        assert!(fill_holes(&m).get(1, 1));
    }

    #[test]
    fn largest_component_sizes() {
        let m = mask(&["#####.", "#####.", "......", "...###"]);
        let out = largest_component(&m);
        assert_eq!(out.area(), 10);
        assert!(!out.get(3, 3));
    }

    #[test]
    fn largest_component_tie_break() {
        let m = mask(&["...##", "...##", "##...", "##..."]);
        let out = largest_component(&m);
        assert_eq!(out.area(), 4);
        // topmost-leftmost pixel (3,0) beats (0,2) because y is smaller
        assert!(out.get(3, 0));
        assert!(!out.get(0, 2));
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let m = mask(&["#..", ".#.", "..#"]);
        assert_eq!(component_count(&m), 1);
        assert_eq!(largest_component(&m), m);
    }

    #[test]
    fn dilate_center_pixel() {
        let m = BinaryMask::from_pixels(5, 5, [(2, 2)]).unwrap();
        assert_eq!(dilate(&m, 0), m);
        let d = dilate(&m, 1);
        assert_eq!(d.area(), 9);
        assert_eq!(d.bbox().to_array(), [1, 1, 3, 3]);
    }

    #[test]
    fn dilate_clips_at_border() {
        let m = BinaryMask::from_pixels(4, 4, [(0, 0)]).unwrap();
        assert_eq!(dilate(&m, 2).area(), 9);
    }

    #[test]
    fn contour_cases() {
        let one = BinaryMask::from_pixels(1, 1, [(0, 0)]).unwrap();
        assert_eq!(contour(&one).pixels, vec![(0, 0)]);
        let block =
            BinaryMask::from_fn(6, 6, |x, y| (1..5).contains(&x) && (1..5).contains(&y)).unwrap();
        assert_eq!(contour(&block).len(), 12);
        let ring = mask(&["#####", "#...#", "#...#", "#...#", "#####"]);
        assert_eq!(contour(&ring).len(), ring.area());
    }

    #[test]
    fn postprocess_orders() {
        let m = mask(&["###...", "#.#...", "###.##", "......"]);
        let a = postprocess(&m, PostprocessOrder::FillThenLargest);
        assert_eq!(a.area(), 9);
        let b = postprocess(&m, PostprocessOrder::LargestThenFill);
        assert_eq!(a, b);
    }
}
