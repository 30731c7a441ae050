//! Uniform bucket grid for nearest and radius queries over planner nodes.

use crate::worldmap::Pose;

#[derive(Debug, Clone)]
pub(crate) struct SpatialIndex {
    min: (f64, f64),
    bucket: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl SpatialIndex {
    pub fn new(bounds: (f64, f64, f64, f64), bucket: f64) -> Self {
        let (x0, y0, x1, y1) = bounds;
        let nx = (((x1 - x0) / bucket).ceil() as usize).max(1);
        let ny = (((y1 - y0) / bucket).ceil() as usize).max(1);
        Self {
            min: (x0, y0),
            bucket,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        }
    }

    fn bucket_of(&self, p: &Pose) -> (usize, usize) {
        let bx = ((p.x - self.min.0) / self.bucket)
            .floor()
            .clamp(0.0, (self.nx - 1) as f64);
        let by = ((p.y - self.min.1) / self.bucket)
            .floor()
            .clamp(0.0, (self.ny - 1) as f64);
        (bx as usize, by as usize)
    }

    pub fn insert(&mut self, id: u32, p: &Pose) {
        let (bx, by) = self.bucket_of(p);
        self.buckets[by * self.nx + bx].push(id);
    }

    /// Ids within `radius` of `p` that pass `keep`, ascending.
    pub fn near(
        &self,
        p: &Pose,
        radius: f64,
        pos: impl Fn(u32) -> Pose,
        keep: impl Fn(u32) -> bool,
    ) -> Vec<u32> {
        let span = (radius / self.bucket).ceil() as i64;
        let (bx, by) = self.bucket_of(p);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for yy in (by as i64 - span).max(0)..=(by as i64 + span).min(self.ny as i64 - 1) {
            for xx in (bx as i64 - span).max(0)..=(bx as i64 + span).min(self.nx as i64 - 1) {
                for &id in &self.buckets[yy as usize * self.nx + xx as usize] {
                    if !keep(id) {
                        continue;
                    }
                    let q = pos(id);
                    let (dx, dy) = (q.x - p.x, q.y - p.y);
                    if dx * dx + dy * dy <= r2 {
                        out.push(id);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Closest id passing `keep`; the lower id wins exact ties.
    pub fn nearest(
        &self,
        p: &Pose,
        pos: impl Fn(u32) -> Pose,
        keep: impl Fn(u32) -> bool,
    ) -> Option<u32> {
        let (bx, by) = self.bucket_of(p);
        let (bx, by) = (bx as i64, by as i64);
        let max_ring = self.nx.max(self.ny) as i64;
        let mut best: Option<(f64, u32)> = None;
        for ring in 0..=max_ring {
            if let Some((d2, _)) = best {
                // Everything in this ring or beyond is at least (ring - 1) buckets away.
                let bound = (ring - 1).max(0) as f64 * self.bucket;
                if bound * bound > d2 {
                    break;
                }
            }
            for yy in by - ring..=by + ring {
                if yy < 0 || yy >= self.ny as i64 {
                    continue;
                }
                let on_edge_row = yy == by - ring || yy == by + ring;
                let xs: Box<dyn Iterator<Item = i64>> = if on_edge_row {
                    Box::new(bx - ring..=bx + ring)
                } else {
                    Box::new(
                        [bx - ring, bx + ring]
                            .into_iter()
                            .take(if ring == 0 { 1 } else { 2 }),
                    )
                };
                for xx in xs {
                    if xx < 0 || xx >= self.nx as i64 {
                        continue;
                    }
                    for &id in &self.buckets[yy as usize * self.nx + xx as usize] {
                        if !keep(id) {
                            continue;
                        }
                        let q = pos(id);
                        let d2 = (q.x - p.x).powi(2) + (q.y - p.y).powi(2);
                        let better = match best {
                            None => true,
                            Some((bd, bid)) => d2 < bd || (d2 == bd && id < bid),
                        };
                        if better {
                            best = Some((d2, id));
                        }
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }
}
