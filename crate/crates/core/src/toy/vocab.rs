//! Word lists of the toy world.

pub const FILLER_WORDS: &[&str] = &[
    "a",
    "an",
    "the",
    "of",
    "photo",
    "image",
    "rendering",
    "cropped",
    "close",
    "up",
    "picture",
    "with",
    "and",
    "on",
    "in",
    "at",
    "against",
    "my",
    "this",
    "one",
    "-",
    ",",
    ".",
];

/// Sub-word pieces used to segment words that are not in the vocabulary.
pub const PIECES: &[&str] = &["ish", "er", "est", "y", "s", "ed", "ly"];

pub const SHAPES: &[&str] = &["square", "circle", "triangle"];

pub const OTHER_NOUNS: &[&str] = &["teapot", "dress", "mug", "toy", "object"];

/// Colour attributes with their rendered RGB value.
pub const COLORS: &[(&str, [u8; 3])] = &[
    ("red", [220, 40, 40]),
    ("blue", [40, 70, 220]),
    ("green", [40, 170, 60]),
    ("yellow", [230, 210, 50]),
    ("black", [25, 25, 25]),
    ("white", [245, 245, 245]),
    ("pink", [240, 130, 180]),
    ("purple", [130, 60, 170]),
    ("orange", [240, 140, 30]),
    ("gray", [128, 128, 128]),
    ("brown", [130, 80, 40]),
    ("teal", [0, 150, 150]),
];

/// Non-colour attributes; they appear in captions but do not change the render.
pub const DESCRIPTORS: &[&str] = &[
    "dark", "bright", "old", "worn", "new", "shiny", "matte", "ceramic", "metal", "wooden", "glass", "striped",
    "dotted", "small", "large", "plain", "tiny", "soft",
];

/// Context phrases with their rendered background colour.
pub const CONTEXTS: &[(&str, [u8; 3])] = &[
    ("on a table", [150, 100, 60]),
    ("on a beach", [225, 200, 150]),
    ("on a sink", [200, 205, 210]),
    ("on the grass", [70, 140, 60]),
    ("in the snow", [250, 250, 252]),
    ("on a street", [90, 90, 95]),
    ("against a wall", [180, 70, 55]),
    ("at night", [15, 20, 50]),
];

pub const DEFAULT_BACKGROUND: [u8; 3] = [205, 205, 195];

pub fn context_nouns() -> impl Iterator<Item = &'static str> {
    ["table", "beach", "sink", "grass", "snow", "street", "wall", "night"].into_iter()
}

/// Full toy vocabulary, in a fixed order (ids are positions).
pub fn vocabulary() -> Vec<&'static str> {
    let mut words: Vec<&'static str> = Vec::new();
    words.extend(FILLER_WORDS);
    words.extend(PIECES);
    words.extend(SHAPES);
    words.extend(OTHER_NOUNS);
    words.extend(COLORS.iter().map(|(w, _)| *w));
    words.extend(DESCRIPTORS);
    words.extend(context_nouns());
    words
}

/// Candidate attributes for subspace construction.
pub fn attribute_candidates() -> Vec<String> {
    COLORS.iter().map(|(w, _)| w.to_string()).chain(DESCRIPTORS.iter().map(|w| w.to_string())).collect()
}

pub fn color(name: &str) -> Option<[u8; 3]> {
    COLORS.iter().find(|(w, _)| *w == name).map(|(_, c)| *c)
}

pub fn context_background(phrase: &str) -> Option<[u8; 3]> {
    CONTEXTS.iter().find(|(p, _)| *p == phrase).map(|(_, c)| *c)
}
