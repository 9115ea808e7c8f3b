//! Procedural scenes for the toy world: one shape on a plain background.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::vocab::{self, COLORS, CONTEXTS, DEFAULT_BACKGROUND, DESCRIPTORS, SHAPES};
use crate::encoder::default_paraphrases;
use crate::image::Image;
use crate::rng::{derive_seed, stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

impl Shape {
    pub fn word(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }

    pub fn from_word(word: &str) -> Option<Shape> {
        match word {
            "square" => Some(Shape::Square),
            "circle" => Some(Shape::Circle),
            "triangle" => Some(Shape::Triangle),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    Solid([u8; 3]),
    /// Left half / right half.
    TwoTone([u8; 3], [u8; 3]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub shape: Shape,
    pub fill: Fill,
    pub background: [u8; 3],
    pub cx: f64,
    pub cy: f64,
    pub half_size: f64,
}

pub fn render(scene: &Scene, side: u32) -> Image {
    let scale = side as f64 / 16.0;
    let (cx, cy, h) = (scene.cx * scale, scene.cy * scale, scene.half_size * scale);
    Image::from_fn(side, side, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let (dx, dy) = (px - cx, py - cy);
        let inside = match scene.shape {
            Shape::Square => dx.abs() <= h && dy.abs() <= h,
            Shape::Circle => dx * dx + dy * dy <= h * h,
            Shape::Triangle => dy.abs() <= h && dx.abs() <= (dy + h) / 2.0,
        };
        if !inside {
            return scene.background;
        }
        match scene.fill {
            Fill::Solid(c) => c,
            Fill::TwoTone(left, right) => {
                if dx < 0.0 {
                    left
                } else {
                    right
                }
            }
        }
    })
}

fn random_placement(rng: &mut StreamRng) -> (f64, f64, f64) {
    let half_size = rng.random_range(3.0..5.0);
    let cx = rng.random_range(6.0..10.0);
    let cy = rng.random_range(6.0..10.0);
    (cx, cy, half_size)
}

fn random_background(rng: &mut StreamRng) -> [u8; 3] {
    if rng.random_bool(0.5) {
        DEFAULT_BACKGROUND
    } else {
        CONTEXTS.choose(rng).expect("non-empty").1
    }
}

pub fn random_scene(rng: &mut StreamRng, shape: Shape, fill: Fill) -> Scene {
    let (cx, cy, half_size) = random_placement(rng);
    Scene { shape, fill, background: random_background(rng), cx, cy, half_size }
}

/// A personalised concept: a parent shape with a distinctive fill.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyConcept {
    pub id: String,
    pub parent: Shape,
    pub fill: Fill,
    /// Fixed backdrop of the concept's photos; `None` draws a random one per image.
    pub background: Option<[u8; 3]>,
}

impl ToyConcept {
    /// Squares split into a teal left half and an orange right half.
    pub fn two_tone_square() -> Self {
        Self {
            id: "two-tone-square".into(),
            parent: Shape::Square,
            fill: Fill::TwoTone(vocab::color("teal").unwrap(), vocab::color("orange").unwrap()),
            background: Some(DEFAULT_BACKGROUND),
        }
    }

    pub fn images(&self, n: usize, seed: u64, side: u32) -> Vec<Image> {
        (0..n)
            .map(|i| {
                let mut rng = stream(derive_seed(seed, 0xC0C0, i as u64));
                let mut scene = random_scene(&mut rng, self.parent, self.fill);
                if let Some(bg) = self.background {
                    scene.background = bg;
                }
                render(&scene, side)
            })
            .collect()
    }
}

/// Plain parent-class images in random palette colours.
pub fn parent_images(shape: Shape, n: usize, seed: u64, side: u32) -> Vec<Image> {
    (0..n)
        .map(|i| {
            let mut rng = stream(derive_seed(seed, 0xBA5E, i as u64));
            let color = COLORS.choose(&mut rng).expect("non-empty").1;
            render(&random_scene(&mut rng, shape, Fill::Solid(color)), side)
        })
        .collect()
}

/// A random caption and the scene it describes, for fitting the toy generator.
pub fn captioned_scene(rng: &mut StreamRng) -> (String, Scene) {
    let templates = default_paraphrases();
    let template = templates.choose(rng).expect("non-empty").clone();
    let shape = *[Shape::Square, Shape::Circle, Shape::Triangle].choose(rng).expect("non-empty");
    debug_assert!(SHAPES.contains(&shape.word()));
    let roll: f64 = rng.random();
    let (slot, fill) = if roll < 0.7 {
        let (word, c) = *COLORS.choose(rng).expect("non-empty");
        (word.to_string(), Fill::Solid(c))
    } else {
        let slot = if roll < 0.85 { DESCRIPTORS.choose(rng).expect("non-empty").to_string() } else { String::new() };
        (slot, Fill::Solid(COLORS.choose(rng).expect("non-empty").1))
    };
    let mut caption = template.replace("{*}", &slot).replace("{c}", shape.word());
    let (cx, cy, half_size) = random_placement(rng);
    let background = if rng.random_bool(0.5) {
        let (phrase, bg) = *CONTEXTS.choose(rng).expect("non-empty");
        caption.push(' ');
        caption.push_str(phrase);
        bg
    } else {
        DEFAULT_BACKGROUND
    };
    let caption = caption.split_whitespace().collect::<Vec<_>>().join(" ");
    (caption, Scene { shape, fill, background, cx, cy, half_size })
}
