use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grid identifier, `y * width + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridId(pub usize);

/// Number of slots in a 3x3 neighborhood.
pub const SLOTS: usize = 9;
/// Local index of the center (stay) slot.
pub const STAY: usize = 4;

/// Offset `(dx, dy)` of a local slot in NW, N, NE, W, C, E, SW, S, SE order.
/// North is `y - 1`.
pub fn slot_offset(slot: usize) -> (i64, i64) {
    debug_assert!(slot < SLOTS);
    ((slot % 3) as i64 - 1, (slot / 3) as i64 - 1)
}

/// Local slot for an offset within the 3x3 neighborhood.
pub fn offset_slot(dx: i64, dy: i64) -> Option<usize> {
    if (-1..=1).contains(&dx) && (-1..=1).contains(&dy) {
        Some(((dy + 1) * 3 + dx + 1) as usize)
    } else {
        None
    }
}

/// Which of the nine local slots exist on the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotMask(pub [bool; SLOTS]);

impl SlotMask {
    pub const ALL: SlotMask = SlotMask([true; SLOTS]);

    pub fn is_valid(&self, slot: usize) -> bool {
        slot < SLOTS && self.0[slot]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn valid_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..SLOTS).filter(move |&k| self.0[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    width: usize,
    height: usize,
    cell_edge_km: f64,
}

impl GridMap {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::with_cell_edge(width, height, 1.2)
    }

    pub fn with_cell_edge(width: usize, height: usize, cell_edge_km: f64) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidMap(format!(
                "map must be at least 3x3, got {width}x{height}"
            )));
        }
        if !(cell_edge_km.is_finite() && cell_edge_km > 0.0) {
            return Err(Error::InvalidMap(format!("cell edge {cell_edge_km} km")));
        }
        Ok(Self {
            width,
            height,
            cell_edge_km,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_edge_km(&self) -> f64 {
        self.cell_edge_km
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> impl Iterator<Item = GridId> {
        (0..self.len()).map(GridId)
    }

    pub fn coords(&self, g: GridId) -> (usize, usize) {
        debug_assert!(g.0 < self.len());
        (g.0 % self.width, g.0 / self.width)
    }

    pub fn id(&self, x: usize, y: usize) -> Option<GridId> {
        (x < self.width && y < self.height).then(|| GridId(y * self.width + x))
    }

    fn id_signed(&self, x: i64, y: i64) -> Option<GridId> {
        if x < 0 || y < 0 {
            return None;
        }
        self.id(x as usize, y as usize)
    }

    /// Center cell; for even dimensions the middle pair is resolved toward the origin.
    pub fn center(&self) -> GridId {
        GridId(((self.height - 1) / 2) * self.width + (self.width - 1) / 2)
    }

    pub fn manhattan(&self, a: GridId, b: GridId) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    pub fn chebyshev(&self, a: GridId, b: GridId) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx).max(ay.abs_diff(by))
    }

    /// The 3x3 neighborhood of `g` in fixed local order; `None` marks off-map slots.
    pub fn neighborhood9(&self, g: GridId) -> [Option<GridId>; SLOTS] {
        let (x, y) = self.coords(g);
        let mut out = [None; SLOTS];
        for (slot, cell) in out.iter_mut().enumerate() {
            let (dx, dy) = slot_offset(slot);
            *cell = self.id_signed(x as i64 + dx, y as i64 + dy);
        }
        out
    }

    pub fn mask(&self, g: GridId) -> SlotMask {
        let n = self.neighborhood9(g);
        SlotMask(n.map(|c| c.is_some()))
    }

    /// Grid reached from `g` through local `slot`, if on the map.
    pub fn neighbor(&self, g: GridId, slot: usize) -> Option<GridId> {
        if slot >= SLOTS {
            return None;
        }
        let (x, y) = self.coords(g);
        let (dx, dy) = slot_offset(slot);
        self.id_signed(x as i64 + dx, y as i64 + dy)
    }

    /// Local slot of `target` as seen from `from`, if they are Chebyshev-adjacent.
    pub fn slot_of(&self, from: GridId, target: GridId) -> Option<usize> {
        let (fx, fy) = self.coords(from);
        let (tx, ty) = self.coords(target);
        offset_slot(tx as i64 - fx as i64, ty as i64 - fy as i64)
    }

    /// Next grid on the Manhattan path from `from` to `to` (x first, then y).
    pub fn step_toward(&self, from: GridId, to: GridId) -> GridId {
        let (fx, fy) = self.coords(from);
        let (tx, ty) = self.coords(to);
        if fx != tx {
            let nx = if tx > fx { fx + 1 } else { fx - 1 };
            GridId(fy * self.width + nx)
        } else if fy != ty {
            let ny = if ty > fy { fy + 1 } else { fy - 1 };
            GridId(ny * self.width + fx)
        } else {
            from
        }
    }

    /// All grids ordered by rings of Chebyshev distance around the center,
    /// clockwise within each ring starting due north.
    pub fn radial_order(&self) -> Vec<GridId> {
        let (cx, cy) = self.coords(self.center());
        let (cx, cy) = (cx as i64, cy as i64);
        let max_ring = [cx, cy, self.width as i64 - 1 - cx, self.height as i64 - 1 - cy]
            .into_iter()
            .max()
            .unwrap_or(0);
        let mut out = vec![self.center()];
        for d in 1..=max_ring {
            for (dx, dy) in ring_walk(d) {
                if let Some(g) = self.id_signed(cx + dx, cy + dy) {
                    out.push(g);
                }
            }
        }
        out
    }
}

/// Offsets on the ring at Chebyshev distance `d`, clockwise from due north.
fn ring_walk(d: i64) -> Vec<(i64, i64)> {
    let mut cells = Vec::with_capacity((8 * d) as usize);
    // top edge, east half
    for dx in 0..=d {
        cells.push((dx, -d));
    }
    // right edge, downward
    for dy in (-d + 1)..=d {
        cells.push((d, dy));
    }
    // bottom edge, westward
    for dx in (-d..d).rev() {
        cells.push((dx, d));
    }
    // left edge, upward
    for dy in ((-d)..d).rev() {
        cells.push((-d, dy));
    }
    // top edge, west half
    for dx in (-d + 1)..0 {
        cells.push((dx, -d));
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_order_3x3_matches_ring_rule() {
        let map = GridMap::new(3, 3).unwrap();
        let ids: Vec<usize> = map.radial_order().into_iter().map(|g| g.0).collect();
        assert_eq!(ids, vec![4, 1, 2, 5, 8, 7, 6, 3, 0]);
    }

    #[test]
    fn narrow_maps_are_rejected() {
        assert!(GridMap::new(1, 5).is_err());
        assert!(GridMap::new(5, 2).is_err());
    }

    #[test]
    fn radial_order_5x5_starts_at_center() {
        let map = GridMap::new(5, 5).unwrap();
        let order = map.radial_order();
        assert_eq!(order[0], GridId(12));
        assert_eq!(order.len(), 25);
        let mut sorted: Vec<usize> = order.iter().map(|g| g.0).collect();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 25);
    }

    #[test]
    fn ring_walk_is_complete() {
        for d in 1..5 {
            let w = ring_walk(d);
            assert_eq!(w.len(), (8 * d) as usize);
            let mut u = w.clone();
            u.sort_unstable();
            u.dedup();
            assert_eq!(u.len(), w.len());
            assert!(w.iter().all(|&(x, y)| x.abs().max(y.abs()) == d));
        }
    }

    #[test]
    fn even_map_center_rounds_toward_origin() {
        let map = GridMap::new(4, 6).unwrap();
        assert_eq!(map.coords(map.center()), (1, 2));
    }

    #[test]
    fn corner_neighborhood_has_four_valid_slots() {
        let map = GridMap::new(3, 3).unwrap();
        let n = map.neighborhood9(GridId(0));
        assert_eq!(n.iter().filter(|c| c.is_some()).count(), 4);
        assert_eq!(n[STAY], Some(GridId(0)));
        assert_eq!(n[5], Some(GridId(1)));
        assert_eq!(n[8], Some(GridId(4)));
    }

    #[test]
    fn step_toward_moves_one_cell() {
        let map = GridMap::new(5, 5).unwrap();
        let a = map.id(0, 0).unwrap();
        let b = map.id(2, 1).unwrap();
        let s = map.step_toward(a, b);
        assert_eq!(map.manhattan(s, b), 2);
        assert_eq!(map.step_toward(b, b), b);
    }

    #[test]
    fn slot_round_trip() {
        let map = GridMap::new(5, 5).unwrap();
        let c = map.id(2, 2).unwrap();
        for slot in 0..SLOTS {
            let n = map.neighbor(c, slot).unwrap();
            assert_eq!(map.slot_of(c, n), Some(slot));
        }
    }
}
