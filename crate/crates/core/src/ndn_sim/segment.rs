use crate::naming::{Component, Name};

use super::{DataPacket, SimError};

pub const SEG: &str = "seg";
pub const DEFAULT_MAX_SEGMENT: usize = 8800;

/// One slice of a segmented payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: Name,
    pub index: u64,
    pub payload: Vec<u8>,
}

impl Segment {
    /// Reads the `seg=k` annotation of a packet name; the name up to that
    /// annotation is the object's base name.
    pub fn from_packet(packet: &DataPacket) -> Result<Self, SimError> {
        Ok(Segment {
            index: segment_index(&packet.name)?,
            name: packet.name.clone(),
            payload: packet.payload.clone(),
        })
    }

    pub fn base_name(&self) -> Name {
        base_name(&self.name).unwrap_or_else(|| self.name.clone())
    }
}

pub fn segment_name(base: &Name, index: u64) -> Name {
    base.child(Component::annotation(SEG, index.to_string()))
}

pub fn segment_index(name: &Name) -> Result<u64, SimError> {
    name.annotation(SEG)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SimError::NotSegmented(name.clone()))
}

/// The components preceding the `seg` annotation.
pub fn base_name(name: &Name) -> Option<Name> {
    let at = name.annotation_position(SEG)?;
    Some(Name::new(name.components()[..at].to_vec()).expect("prefix of a valid name"))
}

/// Splits `payload` into `max_segment`-sized slices named `name/seg=k`.
/// An empty payload yields one empty slice.
pub fn segment(name: &Name, payload: &[u8], max_segment: usize) -> Vec<Segment> {
    assert!(max_segment >= 1, "max_segment must be at least 1");
    if payload.is_empty() {
        return vec![Segment { name: segment_name(name, 0), index: 0, payload: Vec::new() }];
    }
    payload
        .chunks(max_segment)
        .zip(0u64..)
        .map(|(chunk, k)| Segment { name: segment_name(name, k), index: k, payload: chunk.to_vec() })
        .collect()
}

/// Concatenates segments of one object in index order.
pub fn reassemble(segments: &[Segment]) -> Result<Vec<u8>, SimError> {
    let mut sorted: Vec<&Segment> = segments.iter().collect();
    sorted.sort_by_key(|s| s.index);
    let base = sorted.first().ok_or(SimError::MissingSegment(0))?.base_name();
    let mut out = Vec::new();
    for (expected, s) in (0u64..).zip(&sorted) {
        if s.index != expected {
            return Err(if s.index < expected {
                SimError::DuplicateSegment(s.index)
            } else {
                SimError::MissingSegment(expected)
            });
        }
        if s.base_name() != base {
            return Err(SimError::MixedObjects(s.name.clone()));
        }
        out.extend_from_slice(&s.payload);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name;

    fn counts(len: usize) -> usize {
        segment(&name!("/o"), &vec![0; len], DEFAULT_MAX_SEGMENT).len()
    }

    #[test]
    fn boundary_counts() {
        assert_eq!(counts(17000), 2);
        assert_eq!(counts(8800), 1);
        assert_eq!(counts(8801), 2);
        assert_eq!(counts(0), 1);
        assert_eq!(counts(17600), 2);
        assert_eq!(counts(17601), 3);
    }

    #[test]
    fn names_carry_index() {
        let segs = segment(&name!("/o/file"), &[1, 2, 3], 2);
        assert_eq!(segs[1].name.to_string(), "/o/file/seg=1");
        assert_eq!(segs[1].payload, vec![3]);
        assert_eq!(segs[1].base_name(), name!("/o/file"));
    }

    #[test]
    fn missing_middle_segment() {
        let mut segs = segment(&name!("/o"), &[0; 30], 10);
        segs.remove(1);
        assert_eq!(reassemble(&segs), Err(SimError::MissingSegment(1)));
    }

    #[test]
    fn single_empty_segment() {
        assert_eq!(reassemble(&segment(&name!("/o"), &[], 10)), Ok(vec![]));
        assert_eq!(reassemble(&[]), Err(SimError::MissingSegment(0)));
    }

    #[test]
    fn order_independent_and_object_checked() {
        let mut segs = segment(&name!("/o"), b"abcdef", 2);
        segs.reverse();
        assert_eq!(reassemble(&segs).unwrap(), b"abcdef");
        segs[0].name = segment_name(&name!("/other"), 2);
        assert!(matches!(reassemble(&segs), Err(SimError::MixedObjects(_))));
    }

    #[test]
    fn annotations_after_seg_are_ignored_for_base() {
        let n: Name = name!("/o/seg=3/epoch=4");
        assert_eq!(segment_index(&n), Ok(3));
        assert_eq!(base_name(&n), Some(name!("/o")));
    }
}
