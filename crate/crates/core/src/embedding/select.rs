use crate::encoder::{encode_plain_text, normalize, ImageEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::Vector;

/// Default number of attributes kept for the subspace.
pub const DEFAULT_TOP_N: usize = 100;

/// Ranks candidate attributes by cosine similarity between their text
/// feature and the mean of the unit-normalized concept image features, and
/// keeps the best `top_n`. Ties break lexicographically.
pub fn select_attributes(
    candidates: &[String],
    concept_images: &[Image],
    top_n: usize,
    text: &dyn TextEncoder,
    image: &dyn ImageEncoder,
) -> Result<Vec<String>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if concept_images.is_empty() {
        return Err(Error::NoImages);
    }
    let mut mean = Vector::zeros(image.dim());
    for img in concept_images {
        mean += normalize(&image.encode_image(img)?)?;
    }
    mean /= concept_images.len() as f64;
    let mean = normalize(&mean)?;

    let mut scored = candidates
        .iter()
        .map(|c| Ok((normalize(&encode_plain_text(text, c)?.values)?.dot(&mean), c.clone())))
        .collect::<Result<Vec<(f64, String)>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(top_n).map(|(_, c)| c).collect())
}
