use std::cmp::Ordering;
use std::collections::BinaryHeap;

use image::Rgb;

use crate::camera::{Mask, RgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flag {
    Known,
    Band,
    Inside,
}

/// Min-heap entry ordered by arrival time, then row, then column.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Front {
    t: f64,
    y: usize,
    x: usize,
}

impl Eq for Front {}

impl Ord for Front {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then(other.y.cmp(&self.y))
            .then(other.x.cmp(&self.x))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Grid {
    w: usize,
    h: usize,
    flag: Vec<Flag>,
    t: Vec<f64>,
    color: Vec<[f64; 3]>,
}

impl Grid {
    fn at(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h)
            .then(|| y as usize * self.w + x as usize)
    }

    fn known(&self, x: i64, y: i64) -> Option<f64> {
        self.at(x, y).filter(|&i| self.flag[i] != Flag::Inside).map(|i| self.t[i])
    }

    /// Eikonal update from one vertical and one horizontal neighbour.
    fn solve(&self, a: Option<f64>, b: Option<f64>) -> f64 {
        match (a, b) {
            (Some(t1), Some(t2)) => {
                let d = t1 - t2;
                if d.abs() >= 1.0 {
                    return 1.0 + t1.min(t2);
                }
                let r = (2.0 - d * d).sqrt();
                (t1 + t2 + r) / 2.0
            }
            (Some(t), None) | (None, Some(t)) => 1.0 + t,
            (None, None) => f64::INFINITY,
        }
    }

    fn arrival(&self, x: i64, y: i64) -> f64 {
        let up = self.known(x, y - 1);
        let down = self.known(x, y + 1);
        let left = self.known(x - 1, y);
        let right = self.known(x + 1, y);
        [
            self.solve(up, left),
            self.solve(up, right),
            self.solve(down, left),
            self.solve(down, right),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    fn gradient(&self, x: i64, y: i64, t: f64) -> (f64, f64) {
        let axis = |prev: Option<f64>, next: Option<f64>| match (prev, next) {
            (Some(a), Some(b)) => (b - a) / 2.0,
            (Some(a), None) => t - a,
            (None, Some(b)) => b - t,
            (None, None) => 0.0,
        };
        (
            axis(self.known(x - 1, y), self.known(x + 1, y)),
            axis(self.known(x, y - 1), self.known(x, y + 1)),
        )
    }

    /// Normalized weighted average of the known pixels within `radius`,
    /// weighted by direction, distance and level-set agreement.
    fn fill(&self, x: i64, y: i64, t: f64, radius: i64) -> [f64; 3] {
        let (gx, gy) = self.gradient(x, y, t);
        let mut sum = [0.0; 3];
        let mut total = 0.0;
        for yy in y - radius..=y + radius {
            for xx in x - radius..=x + radius {
                let Some(i) = self.at(xx, yy) else { continue };
                if self.flag[i] == Flag::Inside || (xx, yy) == (x, y) {
                    continue;
                }
                let (rx, ry) = ((x - xx) as f64, (y - yy) as f64);
                let d2 = rx * rx + ry * ry;
                if d2 > (radius * radius) as f64 {
                    continue;
                }
                let len = d2.sqrt();
                let mut dir = (rx * gx + ry * gy) / len;
                if dir.abs() <= 0.01 {
                    dir = 1e-6;
                }
                let dst = 1.0 / d2;
                let lev = 1.0 / (1.0 + (self.t[i] - t).abs());
                let weight = (dir * dst * lev).abs();
                for c in 0..3 {
                    sum[c] += weight * self.color[i][c];
                }
                total += weight;
            }
        }
        if total > 0.0 {
            sum.map(|s| s / total)
        } else {
            [0.0; 3]
        }
    }
}

/// Fast-marching inpainting of the masked pixels. Pixels are filled in
/// order of increasing arrival time from the mask boundary (ties broken by
/// row, then column); pixels outside the mask are returned unchanged.
pub fn inpaint_fmm(rgb: &RgbImage, mask: &Mask, radius: u32) -> Result<RgbImage> {
    if rgb.dimensions() != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch(format!(
            "image {:?} vs mask {:?}",
            rgb.dimensions(),
            (mask.width(), mask.height())
        )));
    }
    if mask.is_empty() {
        return Ok(rgb.clone());
    }
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut grid = Grid {
        w,
        h,
        flag: mask
            .as_slice()
            .iter()
            .map(|&m| if m { Flag::Inside } else { Flag::Known })
            .collect(),
        t: vec![0.0; w * h],
        color: rgb.pixels().map(|p| p.0.map(f64::from)).collect(),
    };
    let mut heap = BinaryHeap::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if grid.flag[i] == Flag::Inside {
                grid.t[i] = f64::INFINITY;
                continue;
            }
            let touches = [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)].iter().any(|&(dx, dy)| {
                grid.at(x as i64 + dx, y as i64 + dy)
                    .is_some_and(|j| grid.flag[j] == Flag::Inside)
            });
            if touches {
                grid.flag[i] = Flag::Band;
                heap.push(Front { t: 0.0, y, x });
            }
        }
    }
    let radius = radius.max(1) as i64;
    while let Some(Front { t, y, x }) = heap.pop() {
        let i = y * w + x;
        if grid.flag[i] == Flag::Known || t > grid.t[i] {
            continue;
        }
        grid.flag[i] = Flag::Known;
        for (dx, dy) in [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            let Some(j) = grid.at(nx, ny) else { continue };
            match grid.flag[j] {
                Flag::Known => {}
                Flag::Inside => {
                    let tj = grid.arrival(nx, ny);
                    grid.t[j] = tj;
                    grid.color[j] = grid.fill(nx, ny, tj, radius);
                    grid.flag[j] = Flag::Band;
                    heap.push(Front { t: tj, y: ny as usize, x: nx as usize });
                }
                Flag::Band => {
                    let tj = grid.arrival(nx, ny);
                    if tj < grid.t[j] {
                        grid.t[j] = tj;
                        heap.push(Front { t: tj, y: ny as usize, x: nx as usize });
                    }
                }
            }
        }
    }
    let mut out = rgb.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if mask.get(x, y) {
            let c = grid.color[y as usize * w + x as usize];
            *px = Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    Ok(out)
}
