use std::fs;

use image::{ImageBuffer as RawImage, Luma, Rgb};
use mixsr::image::{load_image, save_image};
use mixsr::manifest::{build_manifest, Origin, Split};
use mixsr::{Error, ImageBuffer};

#[test]
fn eight_bit_value_maps_to_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.png");
    RawImage::from_pixel(3, 2, Rgb([128u8, 0, 255])).save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.dims(), (2, 3));
    assert_eq!(img.get(1, 2, 0), 128.0 / 255.0);
    assert_eq!(img.get(0, 0, 1), 0.0);
    assert_eq!(img.get(0, 0, 2), 1.0);
}

#[test]
fn sixteen_bit_is_read_at_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deep.png");
    RawImage::from_pixel(2, 2, Rgb([1u16, 32768, 65535])).save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.get(0, 0, 0), 1.0 / 65535.0);
    assert_eq!(img.get(1, 1, 1), 32768.0 / 65535.0);
    assert_eq!(img.get(1, 0, 2), 1.0);
}

#[test]
fn quantized_images_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.png");
    let img = ImageBuffer::from_fn(7, 5, |y, x, c| ((y * 31 + x * 7 + c * 101) % 256) as f32 / 255.0);
    save_image(&img, &path).unwrap();
    let back = load_image(&path).unwrap();
    assert_eq!(back, img);
    save_image(&back, &path).unwrap();
    assert_eq!(load_image(&path).unwrap(), img);
}

#[test]
fn save_rounds_to_nearest_level() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.png");
    let img = ImageBuffer::filled(2, 2, 0.5);
    save_image(&img, &path).unwrap();
    assert_eq!(load_image(&path).unwrap().get(0, 0, 0), 128.0 / 255.0);
}

#[test]
fn grayscale_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.png");
    RawImage::from_pixel(2, 2, Luma([10u8])).save(&path).unwrap();
    assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat { .. })));
}

#[test]
fn non_png_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("notes.png");
    fs::write(&path, "plain text, not an image").unwrap();
    assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat { .. })));
}

#[test]
fn truncated_png_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.png");
    RawImage::from_pixel(16, 16, Rgb([1u8, 2, 3])).save(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_image(&path), Err(Error::CorruptFile { .. })));
}

#[test]
fn missing_file_is_reported_as_not_found() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_image(dir.path().join("nope.png")), Err(Error::FileNotFound(_))));
}

#[test]
fn manifest_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (hr, lr) = (dir.path().join("hr"), dir.path().join("lr"));
    for name in ["b.png", "a.png", "c.png"] {
        save_image(&ImageBuffer::filled(4, 4, 0.2), hr.join(name)).unwrap();
        save_image(&ImageBuffer::filled(4, 4, 0.1), lr.join(name)).unwrap();
    }
    let manifest = build_manifest(&hr, Some(&lr), Split::Train, Origin::Observed).unwrap();
    let names: Vec<_> = manifest.records().iter().map(|r| r.image_id()).collect();
    assert_eq!(names, ["a", "b", "c"]);
    let path = dir.path().join("m.tsv");
    manifest.write(&path).unwrap();
    assert_eq!(mixsr::DatasetManifest::read(&path).unwrap(), manifest);
    manifest.check_paths().unwrap();
}
