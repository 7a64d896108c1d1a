//! Top-down trajectory renders: a binary PPM image and a plain-text view.

use crate::environment::EpisodeLog;
use crate::geometry::WorldPoint;
use crate::scene::{Color, SceneMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub pixels_per_metre: u32,
    /// Side of one character cell of the text view, in metres.
    pub text_cell: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            pixels_per_metre: 20,
            text_cell: 0.5,
        }
    }
}

type Rgb = [u8; 3];

const GROUND: Rgb = [128, 128, 128];
const PATH: Rgb = [250, 200, 40];
const START: Rgb = [40, 200, 70];
const END: Rgb = [220, 60, 40];
const STAR: Rgb = [230, 40, 220];
const HIGHLIGHT: Rgb = [255, 40, 40];

fn paint(color: Color) -> Rgb {
    match color {
        Color::Blue => [40, 80, 200],
        Color::Black => [20, 20, 20],
        Color::White => [235, 235, 235],
    }
}

/// Row-major RGB raster, row 0 at the far (max y) edge of the map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Positions visited by the agent, starting at the start pose. Consecutive
/// duplicates (turns, stays) are dropped.
pub fn path_points(log: &EpisodeLog) -> Vec<WorldPoint> {
    let mut pts = vec![log.start_pose.position()];
    for s in &log.steps {
        let p = s.pose.position();
        if *pts.last().expect("non-empty") != p {
            pts.push(p);
        }
    }
    pts
}

fn commit_point(log: &EpisodeLog) -> Option<WorldPoint> {
    log.outcome.and_then(|o| o.commit).map(|c| c.point)
}

struct Canvas {
    image: Image,
    scale: f64,
    depth: f64,
}

impl Canvas {
    fn pixel(&self, p: &WorldPoint) -> (i64, i64) {
        let x = (p.x * self.scale).floor() as i64;
        let y = ((self.depth - p.y) * self.scale).floor() as i64;
        (x, y)
    }

    fn disc(&mut self, centre: &WorldPoint, radius: f64, c: Rgb) {
        let (cx, cy) = self.pixel(centre);
        let r = (radius * self.scale).ceil() as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (cx + dx, cy + dy);
                // test the pixel centre against the true footprint
                let wx = (x as f64 + 0.5) / self.scale;
                let wy = self.depth - (y as f64 + 0.5) / self.scale;
                if WorldPoint::new(wx, wy).distance(centre) <= radius {
                    self.image.put(x, y, c);
                }
            }
        }
    }

    fn ring(&mut self, centre: &WorldPoint, radius: f64, width: f64, c: Rgb) {
        let (cx, cy) = self.pixel(centre);
        let r = ((radius + width) * self.scale).ceil() as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (cx + dx, cy + dy);
                let wx = (x as f64 + 0.5) / self.scale;
                let wy = self.depth - (y as f64 + 0.5) / self.scale;
                let d = WorldPoint::new(wx, wy).distance(centre);
                if d > radius && d <= radius + width {
                    self.image.put(x, y, c);
                }
            }
        }
    }

    fn square(&mut self, centre: &WorldPoint, half: i64, c: Rgb) {
        let (cx, cy) = self.pixel(centre);
        for dy in -half..=half {
            for dx in -half..=half {
                self.image.put(cx + dx, cy + dy, c);
            }
        }
    }

    fn star(&mut self, centre: &WorldPoint, arm: i64, c: Rgb) {
        let (cx, cy) = self.pixel(centre);
        for k in -arm..=arm {
            self.image.put(cx + k, cy, c);
            self.image.put(cx, cy + k, c);
            self.image.put(cx + k, cy + k, c);
            self.image.put(cx + k, cy - k, c);
        }
    }

    fn line(&mut self, a: &WorldPoint, b: &WorldPoint, c: Rgb) {
        let (x0, y0) = self.pixel(a);
        let (x1, y1) = self.pixel(b);
        let n = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let x = (x0 as f64 + t * (x1 - x0) as f64).round() as i64;
            let y = (y0 as f64 + t * (y1 - y0) as f64).round() as i64;
            self.image.put(x, y, c);
        }
    }
}

/// Map with cars, the target ringed, the walked path, start and end markers
/// and a star at the committed point.
pub fn render_image(map: &SceneMap, log: &EpisodeLog, cfg: &RenderConfig) -> Image {
    let scale = cfg.pixels_per_metre.max(1) as f64;
    let width = (map.width * scale).ceil() as usize;
    let height = (map.depth * scale).ceil() as usize;
    let mut canvas = Canvas {
        image: Image::new(width, height, GROUND),
        scale,
        depth: map.depth,
    };
    for o in &map.objects {
        canvas.disc(&o.position, o.footprint_radius, paint(o.color));
        if o.is_target {
            canvas.ring(&o.position, o.footprint_radius, 2.0 / scale, HIGHLIGHT);
        }
    }
    let pts = path_points(log);
    for w in pts.windows(2) {
        canvas.line(&w[0], &w[1], PATH);
    }
    let marker = (scale / 5.0).round().max(1.0) as i64;
    let end = *pts.last().expect("non-empty");
    if end != pts[0] {
        canvas.square(&end, marker, END);
    }
    canvas.square(&pts[0], marker, START);
    if let Some(p) = commit_point(log) {
        canvas.star(&p, 2 * marker, STAR);
    }
    canvas.image
}

/// Character view: `.` ground, `o` car, `T` target, `+` path, `S` start,
/// `E` end, `*` committed point. Later marks overwrite earlier ones.
pub fn render_text(map: &SceneMap, log: &EpisodeLog, cfg: &RenderConfig) -> String {
    let cell = if cfg.text_cell > 0.0 { cfg.text_cell } else { 0.5 };
    let cols = (map.width / cell).ceil() as usize;
    let rows = (map.depth / cell).ceil() as usize;
    let mut grid = vec![vec!['.'; cols]; rows];
    let at = |p: &WorldPoint| -> Option<(usize, usize)> {
        let c = (p.x / cell).floor();
        let r = ((map.depth - p.y) / cell).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < cols && (r as usize) < rows).then(|| (r as usize, c as usize))
    };
    for (r, row) in grid.iter_mut().enumerate() {
        for (c, ch) in row.iter_mut().enumerate() {
            let p = WorldPoint::new((c as f64 + 0.5) * cell, map.depth - (r as f64 + 0.5) * cell);
            if let Some(o) = map.objects.iter().find(|o| o.position.distance(&p) <= o.footprint_radius) {
                *ch = if o.is_target { 'T' } else { 'o' };
            }
        }
    }
    let pts = path_points(log);
    for w in pts.windows(2) {
        let n = ((w[0].distance(&w[1]) / cell) * 4.0).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let p = WorldPoint::new(w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y));
            if let Some((r, c)) = at(&p) {
                grid[r][c] = '+';
            }
        }
    }
    let end = *pts.last().expect("non-empty");
    if end != pts[0] {
        if let Some((r, c)) = at(&end) {
            grid[r][c] = 'E';
        }
    }
    if let Some((r, c)) = at(&pts[0]) {
        grid[r][c] = 'S';
    }
    if let Some((r, c)) = commit_point(log).as_ref().and_then(at) {
        grid[r][c] = '*';
    }
    let mut out = String::with_capacity(rows * (cols + 1));
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    out
}
