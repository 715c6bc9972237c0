//! Anti-aliased disc rendering of particle systems, and outer-product
//! observations of game states.

use super::{PhaseState, SystemKind, SystemSpec};
use crate::error::{Error, Result};

/// Supersampling grid per pixel side.
const SUBSAMPLES: usize = 4;
/// Saturation of colour-mode hues.
const SATURATION: f64 = 0.8;

/// Row-major `H x W x C` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn black(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }
}

/// A filled disc in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub colour: [f64; 3],
}

/// Axis-aligned world window mapped onto the canvas, `y` pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Draw wrapped copies of discs that cross the window edge.
    pub periodic: bool,
}

impl View {
    pub fn centred(half_extent: f64) -> Self {
        View {
            x_min: -half_extent,
            x_max: half_extent,
            y_min: -half_extent,
            y_max: half_extent,
            periodic: false,
        }
    }
}

/// Composites `discs` in order over a black canvas.
pub fn render_discs(discs: &[Disc], view: View, height: usize, width: usize, channels: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("image resolution must be non-zero"));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::invalid(format!("{channels} channels; expected 1 or 3")));
    }
    let mut img = Image::black(height, width, channels);
    let sx = (view.x_max - view.x_min) / width as f64;
    let sy = (view.y_max - view.y_min) / height as f64;
    let (lx, ly) = (view.x_max - view.x_min, view.y_max - view.y_min);
    let shifts: &[f64] = if view.periodic { &[-1.0, 0.0, 1.0] } else { &[0.0] };

    for disc in discs {
        let value: Vec<f64> = if channels == 3 {
            disc.colour.to_vec()
        } else {
            vec![disc.colour.iter().sum::<f64>() / 3.0]
        };
        let r2 = disc.radius * disc.radius;
        for &ox in shifts {
            for &oy in shifts {
                let (cx, cy) = (disc.x + ox * lx, disc.y + oy * ly);
                let col_lo = ((cx - disc.radius - view.x_min) / sx).floor().max(0.0) as usize;
                let col_hi = (((cx + disc.radius - view.x_min) / sx).ceil().max(0.0) as usize).min(width);
                let row_lo = ((view.y_max - cy - disc.radius) / sy).floor().max(0.0) as usize;
                let row_hi = (((view.y_max - cy + disc.radius) / sy).ceil().max(0.0) as usize).min(height);
                for row in row_lo..row_hi {
                    for col in col_lo..col_hi {
                        let mut hits = 0;
                        for i in 0..SUBSAMPLES {
                            let y = view.y_max - (row as f64 + (i as f64 + 0.5) / SUBSAMPLES as f64) * sy;
                            for j in 0..SUBSAMPLES {
                                let x = view.x_min + (col as f64 + (j as f64 + 0.5) / SUBSAMPLES as f64) * sx;
                                if (x - cx).powi(2) + (y - cy).powi(2) <= r2 {
                                    hits += 1;
                                }
                            }
                        }
                        if hits == 0 {
                            continue;
                        }
                        let cover = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
                        let base = (row * width + col) * channels;
                        for (k, v) in value.iter().enumerate() {
                            let px = &mut img.data[base + k];
                            *px = cover * v + (1.0 - cover) * *px;
                        }
                    }
                }
            }
        }
    }
    Ok(img)
}

/// HSV to RGB with value 1.
pub fn hue_to_rgb(hue: f64, saturation: f64) -> [f64; 3] {
    let h = hue.rem_euclid(1.0) * 6.0;
    let sector = h.floor() as usize % 6;
    let f = h - h.floor();
    let (p, q, t) = (1.0 - saturation, 1.0 - saturation * f, 1.0 - saturation * (1.0 - f));
    match sector {
        0 => [1.0, t, p],
        1 => [q, 1.0, p],
        2 => [p, 1.0, t],
        3 => [p, q, 1.0],
        4 => [t, p, 1.0],
        _ => [1.0, p, q],
    }
}

/// Base disc radius per unit square-root mass.
fn radius_scale(spec: &SystemSpec) -> f64 {
    match spec.kind {
        SystemKind::TwoBody => 0.35,
        SystemKind::LennardJones => 0.5 * spec.param("sigma"),
        _ => 0.45,
    }
}

/// Channel count of rendered observations.
pub fn channels(spec: &SystemSpec) -> usize {
    if spec.kind.is_game() {
        1
    } else if spec.colour_mode || spec.kind == SystemKind::LennardJones {
        3
    } else {
        1
    }
}

/// Particle positions and masses in world coordinates.
fn particles(spec: &SystemSpec, s: &PhaseState) -> Result<Vec<(f64, f64, f64)>> {
    let q = &s.q;
    let (ox, oy) = if spec.colour_mode {
        (spec.param("offset_x"), spec.param("offset_y"))
    } else {
        (0.0, 0.0)
    };
    let par = |n: &str| spec.param(n);
    Ok(match spec.kind {
        SystemKind::MassSpring => vec![(q[0] + ox, oy, par("m"))],
        SystemKind::Pendulum => {
            let l = par("l");
            vec![(l * q[0].sin() + ox, -l * q[0].cos() + oy, par("m"))]
        }
        SystemKind::DoublePendulum => {
            let (l1, l2) = (par("l1"), par("l2"));
            let (x1, y1) = (l1 * q[0].sin(), -l1 * q[0].cos());
            let (x2, y2) = (x1 + l2 * q[1].sin(), y1 - l2 * q[1].cos());
            vec![(x1 + ox, y1 + oy, par("m1")), (x2 + ox, y2 + oy, par("m2"))]
        }
        SystemKind::TwoBody => vec![(q[0] + ox, q[1] + oy, par("m1")), (q[2] + ox, q[3] + oy, par("m2"))],
        SystemKind::LennardJones => {
            let m = par("m");
            q.chunks(2).map(|c| (c[0], c[1], m)).collect()
        }
        other => return Err(Error::Unsupported(format!("{other} has no particles to draw"))),
    })
}

fn view(spec: &SystemSpec) -> View {
    match spec.kind {
        SystemKind::MassSpring | SystemKind::Pendulum => View::centred(1.6),
        SystemKind::DoublePendulum => View::centred(2.6),
        SystemKind::TwoBody => View::centred(2.8),
        _ => {
            let l = spec.param("box_length");
            View {
                x_min: 0.0,
                x_max: l,
                y_min: 0.0,
                y_max: l,
                periodic: true,
            }
        }
    }
}

/// Observation of state `s`.
///
/// Particle systems are drawn as discs with area proportional to mass;
/// cyclic games yield the `n x n` outer product `x ⊗ y` regardless of
/// `resolution`.
pub fn render(spec: &SystemSpec, s: &PhaseState, resolution: (usize, usize)) -> Result<Image> {
    let (h, w) = resolution;
    if h == 0 || w == 0 {
        return Err(Error::invalid("image resolution must be non-zero"));
    }
    spec.check_state(s)?;
    if spec.kind.is_game() {
        let n = s.q.len() / 2;
        let (x, y) = s.q.split_at(n);
        let data = x.iter().flat_map(|xi| y.iter().map(move |yj| xi * yj)).collect();
        return Ok(Image {
            height: n,
            width: n,
            channels: 1,
            data,
        });
    }
    let points = particles(spec, s)?;
    let count = points.len() as f64;
    let base_hue = if spec.colour_mode { spec.param("hue") } else { 0.0 };
    let coloured = channels(spec) == 3;
    let scale = radius_scale(spec);
    let discs: Vec<Disc> = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y, m))| Disc {
            x,
            y,
            radius: scale * m.sqrt(),
            colour: if coloured {
                hue_to_rgb(base_hue + i as f64 / count, SATURATION)
            } else {
                [1.0; 3]
            },
        })
        .collect();
    render_discs(&discs, view(spec), h, w, channels(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit_area(img: &Image) -> f64 {
        img.data.iter().sum()
    }

    #[test]
    fn empty_scene_is_black() {
        let img = render_discs(&[], View::centred(1.0), 8, 6, 3).unwrap();
        assert_eq!(img.shape(), (8, 6, 3));
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_resolution_rejected() {
        let spec = SystemSpec::new(SystemKind::MassSpring);
        let s = PhaseState::new(vec![0.0], vec![0.0]);
        assert!(render(&spec, &s, (0, 32)).is_err());
    }

    #[test]
    fn game_outer_product() {
        let spec = SystemSpec::new(SystemKind::MatchingPennies);
        let s = PhaseState::new(vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 4]);
        let img = render(&spec, &s, (32, 32)).unwrap();
        assert_eq!(img.shape(), (2, 2, 1));
        assert_eq!(img.data, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn doubling_mass_doubles_area() {
        let light = SystemSpec::new(SystemKind::MassSpring).with_param("m", 0.4);
        let heavy = SystemSpec::new(SystemKind::MassSpring).with_param("m", 0.8);
        let s = PhaseState::new(vec![0.1], vec![0.0]);
        let a = lit_area(&render(&light, &s, (64, 64)).unwrap());
        let b = lit_area(&render(&heavy, &s, (64, 64)).unwrap());
        assert!((b / a - 2.0).abs() < 0.2, "ratio {}", b / a);
    }

    #[test]
    fn values_in_unit_range_and_deterministic() {
        let spec = SystemSpec::new(SystemKind::DoublePendulum).with_colour(true).with_param("hue", 0.3);
        let s = PhaseState::new(vec![0.4, 2.5], vec![0.0, 0.0]);
        let a = render(&spec, &s, (32, 32)).unwrap();
        let b = render(&spec, &s, (32, 32)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.channels, 3);
        assert!(a.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(lit_area(&a) > 0.0);
    }

    #[test]
    fn periodic_copies_wrap() {
        let disc = Disc {
            x: 0.0,
            y: 5.0,
            radius: 1.0,
            colour: [1.0; 3],
        };
        let view = View {
            x_min: 0.0,
            x_max: 10.0,
            y_min: 0.0,
            y_max: 10.0,
            periodic: true,
        };
        let img = render_discs(&[disc], view, 20, 20, 1).unwrap();
        assert!(img.get(10, 0, 0) > 0.0 && img.get(10, 19, 0) > 0.0);
    }

    #[test]
    fn hues() {
        assert_eq!(hue_to_rgb(0.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(hue_to_rgb(1.0 / 3.0, 1.0), [0.0, 1.0, 0.0]);
    }
}
