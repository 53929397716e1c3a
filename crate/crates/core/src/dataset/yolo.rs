use std::fmt::Write;

use super::{BoundingBox, ClassRegistry, GroundTruthBox, ImageRecord};
use crate::format::{
    content_lines, parse_class_id, parse_decimal, ParseError, ParseErrorKind, Shortest,
};

/// Parses one YOLO label file (`class_id cx cy w h` per line).
pub fn parse_yolo_label_file(
    image_id: &str,
    text: &str,
    registry: &ClassRegistry,
) -> Result<ImageRecord, ParseError> {
    let boxes = content_lines(text)
        .map(|(line, fields)| {
            parse_label_line(&fields, registry.len()).map_err(|kind| ParseError::new(line, kind))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ImageRecord::new(image_id, boxes))
}

fn parse_label_line(fields: &[&str], num_classes: usize) -> Result<GroundTruthBox, ParseErrorKind> {
    if fields.len() != 5 {
        return Err(ParseErrorKind::WrongFieldCount {
            expected: 5,
            found: fields.len(),
        });
    }
    let class_id = parse_class_id(fields[0], num_classes)?;
    let bbox = parse_box(&fields[1..])?;
    Ok(GroundTruthBox { class_id, bbox })
}

/// Parses four `cx cy w h` tokens into a validated box.
pub(crate) fn parse_box(tokens: &[&str]) -> Result<BoundingBox, ParseErrorKind> {
    let mut v = [0.0; 4];
    for (slot, token) in v.iter_mut().zip(tokens) {
        *slot = parse_decimal(token)?;
    }
    BoundingBox::new(v[0], v[1], v[2], v[3]).ok_or(ParseErrorKind::BoxOutOfRange)
}

pub(crate) fn write_box(out: &mut String, b: &BoundingBox) {
    let _ = write!(
        out,
        "{} {} {} {}",
        Shortest(b.cx),
        Shortest(b.cy),
        Shortest(b.w),
        Shortest(b.h)
    );
}

/// Serializes a record back to label-file text, one LF-terminated line per box.
pub fn serialize_yolo_label(record: &ImageRecord) -> String {
    let mut out = String::new();
    for b in &record.boxes {
        let _ = write!(out, "{} ", b.class_id);
        write_box(&mut out, &b.bbox);
        out.push('\n');
    }
    out
}
