//! Point-sampled grayscale rasterizer for the two camera views.

use image::GrayImage;
use rand::Rng as _;

use crate::geom::Pose2;
use crate::seed;
use crate::sim::config::DomainConfig;
use crate::sim::contact::{peg_quad, socket_blocks, Quad};

pub const IMAGE_SIZE: u32 = 32;
/// Side of the square world window seen by the front camera, mm.
pub const FRONT_WINDOW: f64 = 64.0;
/// Centre of the front window in world coordinates.
pub const FRONT_CENTER: [f64; 2] = [0.0, 16.0];
/// Side of the square window seen by the wrist camera, mm.
pub const WRIST_WINDOW: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Front,
    Wrist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Background,
    Socket,
    Peg,
}

/// Labelled convex shapes to rasterize, drawn in order (later wins).
#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub shapes: Vec<(Label, Quad)>,
}

impl Scene {
    pub fn empty() -> Self {
        Scene::default()
    }

    pub fn from_state(cfg: &DomainConfig, ee: &Pose2) -> Self {
        let mut shapes: Vec<(Label, Quad)> =
            socket_blocks(cfg, &cfg.socket_pose_true).into_iter().map(|q| (Label::Socket, q)).collect();
        shapes.push((Label::Peg, peg_quad(cfg, ee)));
        Scene { shapes }
    }
}

/// Appearance controlled by the render seed: four distinct gray levels and
/// a vertical stripe texture on the background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Palette {
    pub background: [u8; 2],
    pub socket: u8,
    pub peg: u8,
    pub stripe_period: f64,
    pub stripe_phase: f64,
}

impl Palette {
    pub fn from_seed(render_seed: u64) -> Self {
        let mut rng = seed::stream(render_seed, "palette", 0);
        let b0: u8 = rng.random_range(10..60);
        let b1: u8 = b0 + rng.random_range(15..40);
        let socket: u8 = rng.random_range(110..170);
        let peg: u8 = rng.random_range(200..=250);
        let stripe_period = rng.random_range(3.0..9.0);
        let stripe_phase = rng.random_range(0.0..stripe_period);
        Palette { background: [b0, b1], socket, peg, stripe_period, stripe_phase }
    }

    fn shade(&self, label: Label, world: [f64; 2]) -> u8 {
        match label {
            Label::Peg => self.peg,
            Label::Socket => self.socket,
            Label::Background => {
                let k = ((world[0] + self.stripe_phase) / self.stripe_period).floor() as i64;
                self.background[k.rem_euclid(2) as usize]
            }
        }
    }
}

/// Camera frame and window size for a view.
pub fn view_frame(view: View, ee: &Pose2) -> (Pose2, f64) {
    match view {
        View::Front => (Pose2::new(FRONT_CENTER[0], FRONT_CENTER[1], 0.0), FRONT_WINDOW),
        View::Wrist => (*ee, WRIST_WINDOW),
    }
}

/// World point sampled by the centre of pixel `(col, row)`; row 0 is the top.
pub fn pixel_center(frame: &Pose2, window: f64, col: u32, row: u32) -> [f64; 2] {
    let n = IMAGE_SIZE as f64;
    let u = ((col as f64 + 0.5) / n - 0.5) * window;
    let v = (0.5 - (row as f64 + 0.5) / n) * window;
    frame.transform_point([u, v])
}

fn inside(q: &Quad, p: [f64; 2]) -> bool {
    (0..4).all(|i| {
        let a = q[i];
        let b = q[(i + 1) % 4];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

/// Per-pixel labels in row-major order.
pub fn render_labels(scene: &Scene, frame: &Pose2, window: f64) -> Vec<Label> {
    let mut out = Vec::with_capacity((IMAGE_SIZE * IMAGE_SIZE) as usize);
    for row in 0..IMAGE_SIZE {
        for col in 0..IMAGE_SIZE {
            let p = pixel_center(frame, window, col, row);
            let label = scene
                .shapes
                .iter()
                .rev()
                .find(|(_, q)| inside(q, p))
                .map_or(Label::Background, |(l, _)| *l);
            out.push(label);
        }
    }
    out
}

pub fn render_scene(scene: &Scene, frame: &Pose2, window: f64, palette: &Palette) -> GrayImage {
    let labels = render_labels(scene, frame, window);
    GrayImage::from_fn(IMAGE_SIZE, IMAGE_SIZE, |col, row| {
        let label = labels[(row * IMAGE_SIZE + col) as usize];
        image::Luma([palette.shade(label, pixel_center(frame, window, col, row))])
    })
}

/// Renders one camera view of the peg at `ee` and the true socket.
pub fn render(cfg: &DomainConfig, ee: &Pose2, view: View) -> GrayImage {
    let (frame, window) = view_frame(view, ee);
    render_scene(&Scene::from_state(cfg, ee), &frame, window, &Palette::from_seed(cfg.render_seed))
}

/// Pixel intensity in `[0, 1]`.
pub fn intensity(img: &GrayImage, col: u32, row: u32) -> f64 {
    img.get_pixel(col, row).0[0] as f64 / 255.0
}

/// Writes a binary portable graymap.
pub fn save_pgm(img: &GrayImage, path: &std::path::Path) -> crate::error::Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8)?;
    Ok(())
}
