//! HTTP/2 frame codec (RFC 7540 §4.1).
//!
//! Frames have a fixed 9-byte header:
//!
//! ```text
//! +-----------------------------------------------+
//! |                 Length (24)                   |
//! +---------------+---------------+---------------+
//! |   Type (8)    |   Flags (8)   |
//! +-+-------------+---------------+---------------+
//! |R|                 Stream Identifier (31)      |
//! +=+=============================================+
//! |                   Frame Payload (0...)      ...
//! +-----------------------------------------------+
//! ```
//!
//! Only the subset needed for replay with Server Push is modeled; unknown
//! frame types are carried through with an opaque payload.

use thiserror::Error;

/// Default SETTINGS_MAX_FRAME_SIZE (RFC 7540 §6.5.2).
pub const DEFAULT_MAX_FRAME_SIZE: usize = 16_384;

/// END_STREAM flag bit on DATA and HEADERS.
pub const FLAG_END_STREAM: u8 = 0x1;
/// END_HEADERS flag bit on HEADERS and PUSH_PROMISE.
pub const FLAG_END_HEADERS: u8 = 0x4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Data,
    Headers,
    Priority,
    RstStream,
    Settings,
    PushPromise,
    Goaway,
    WindowUpdate,
    /// Extension frame; preserved as opaque bytes.
    Unknown(u8),
}

impl FrameType {
    pub fn code(self) -> u8 {
        match self {
            FrameType::Data => 0x0,
            FrameType::Headers => 0x1,
            FrameType::Priority => 0x2,
            FrameType::RstStream => 0x3,
            FrameType::Settings => 0x4,
            FrameType::PushPromise => 0x5,
            FrameType::Goaway => 0x7,
            FrameType::WindowUpdate => 0x8,
            FrameType::Unknown(code) => code,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            0x0 => FrameType::Data,
            0x1 => FrameType::Headers,
            0x2 => FrameType::Priority,
            0x3 => FrameType::RstStream,
            0x4 => FrameType::Settings,
            0x5 => FrameType::PushPromise,
            0x7 => FrameType::Goaway,
            0x8 => FrameType::WindowUpdate,
            other => FrameType::Unknown(other),
        }
    }

    /// Frame types that live on stream 0 (connection scope).
    fn connection_scoped_only(self) -> bool {
        matches!(self, FrameType::Settings | FrameType::Goaway)
    }

    /// Frame types that must carry a non-zero stream id.
    fn stream_scoped_only(self) -> bool {
        matches!(
            self,
            FrameType::Data
                | FrameType::Headers
                | FrameType::Priority
                | FrameType::RstStream
                | FrameType::PushPromise
        )
    }
}

/// A single HTTP/2 frame in decoded form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub flags: u8,
    /// 31-bit stream identifier; 0 is the connection scope.
    pub stream_id: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, flags: u8, stream_id: u32, payload: Vec<u8>) -> Self {
        Frame {
            frame_type,
            flags,
            stream_id,
            payload,
        }
    }

    /// SETTINGS frame carrying one (identifier, value) parameter (§6.5.1).
    pub fn settings(id: u16, value: u32) -> Self {
        let mut payload = Vec::with_capacity(6);
        payload.extend_from_slice(&id.to_be_bytes());
        payload.extend_from_slice(&value.to_be_bytes());
        Frame::new(FrameType::Settings, 0, 0, payload)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("payload of {len} bytes exceeds max frame size {max}")]
    FrameTooLarge { len: usize, max: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("need {0} more bytes")]
    NeedMoreBytes(usize),
}

/// Encode a frame into its wire representation.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    encode_frame_with_max(frame, DEFAULT_MAX_FRAME_SIZE)
}

/// Encode with an explicitly negotiated max frame size.
pub fn encode_frame_with_max(frame: &Frame, max_frame_size: usize) -> Result<Vec<u8>, FrameError> {
    if frame.payload.len() > max_frame_size {
        return Err(FrameError::FrameTooLarge {
            len: frame.payload.len(),
            max: max_frame_size,
        });
    }
    if frame.stream_id > 0x7fff_ffff {
        return Err(FrameError::ProtocolViolation(format!(
            "stream id {} exceeds 31 bits",
            frame.stream_id
        )));
    }
    if frame.stream_id == 0 && frame.frame_type.stream_scoped_only() {
        return Err(FrameError::ProtocolViolation(format!(
            "{:?} frame requires a non-zero stream id",
            frame.frame_type
        )));
    }
    if frame.stream_id != 0 && frame.frame_type.connection_scoped_only() {
        return Err(FrameError::ProtocolViolation(format!(
            "{:?} frame must be on stream 0",
            frame.frame_type
        )));
    }

    let len = frame.payload.len() as u32;
    let mut out = Vec::with_capacity(9 + frame.payload.len());
    out.extend_from_slice(&len.to_be_bytes()[1..]); // 24-bit length
    out.push(frame.frame_type.code());
    out.push(frame.flags);
    out.extend_from_slice(&(frame.stream_id & 0x7fff_ffff).to_be_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

/// Decode one frame from the front of `bytes`, returning the remainder.
///
/// Incomplete input yields `NeedMoreBytes(n)` with the number of missing
/// bytes, so a caller can feed a stream incrementally.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, &[u8]), FrameError> {
    if bytes.len() < 9 {
        return Err(FrameError::NeedMoreBytes(9 - bytes.len()));
    }
    let length = u32::from_be_bytes([0, bytes[0], bytes[1], bytes[2]]) as usize;
    let total = 9 + length;
    if bytes.len() < total {
        return Err(FrameError::NeedMoreBytes(total - bytes.len()));
    }
    let frame_type = FrameType::from_code(bytes[3]);
    let flags = bytes[4];
    let stream_id = u32::from_be_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) & 0x7fff_ffff;
    let payload = bytes[9..total].to_vec();
    Ok((
        Frame {
            frame_type,
            flags,
            stream_id,
            payload,
        },
        &bytes[total..],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn settings_disable_push_wire_bytes() {
        // SETTINGS { ENABLE_PUSH (0x2) = 0 } on stream 0.
        let frame = Frame::settings(0x2, 0);
        let wire = encode_frame(&frame).unwrap();
        let expected: Vec<u8> = vec![
            0x00, 0x00, 0x06, // length 6
            0x04, // SETTINGS
            0x00, // flags
            0x00, 0x00, 0x00, 0x00, // stream 0
            0x00, 0x02, // identifier
            0x00, 0x00, 0x00, 0x00, // value
        ];
        assert_eq!(wire, expected);
    }

    #[test]
    fn empty_data_frame_with_end_stream() {
        let frame = Frame::new(FrameType::Data, FLAG_END_STREAM, 1, vec![]);
        let wire = encode_frame(&frame).unwrap();
        assert_eq!(
            wire,
            vec![0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01]
        );
    }

    #[test]
    fn decode_inverts_encode() {
        let frame = Frame::settings(0x2, 0);
        let wire = encode_frame(&frame).unwrap();
        let (decoded, rest) = decode_frame(&wire).unwrap();
        assert_eq!(decoded, frame);
        assert!(rest.is_empty());
    }

    #[test]
    fn short_header_reports_missing_count() {
        assert_eq!(decode_frame(&[0u8; 5]), Err(FrameError::NeedMoreBytes(4)));
    }

    #[test]
    fn truncated_payload_reports_missing_count() {
        let frame = Frame::new(FrameType::Data, 0, 1, vec![1, 2, 3, 4]);
        let wire = encode_frame(&frame).unwrap();
        assert_eq!(
            decode_frame(&wire[..wire.len() - 3]),
            Err(FrameError::NeedMoreBytes(3))
        );
    }

    #[test]
    fn concatenated_frames_split_cleanly() {
        let a = Frame::new(FrameType::Data, 0, 1, vec![0xaa; 7]);
        let b = Frame::new(FrameType::Headers, FLAG_END_HEADERS, 3, vec![0xbb; 3]);
        let mut wire = encode_frame(&a).unwrap();
        let wire_b = encode_frame(&b).unwrap();
        wire.extend_from_slice(&wire_b);

        let (first, rest) = decode_frame(&wire).unwrap();
        assert_eq!(first, a);
        assert_eq!(rest, &wire_b[..]);
        let (second, rest) = decode_frame(rest).unwrap();
        assert_eq!(second, b);
        assert!(rest.is_empty());
    }

    #[test]
    fn unknown_frame_type_is_opaque() {
        let wire = vec![
            0x00, 0x00, 0x02, 0x0b, 0x00, 0x00, 0x00, 0x00, 0x05, 0xde, 0xad,
        ];
        let (frame, _) = decode_frame(&wire).unwrap();
        assert_eq!(frame.frame_type, FrameType::Unknown(0x0b));
        assert_eq!(frame.payload, vec![0xde, 0xad]);
    }

    #[test]
    fn oversize_payload_rejected() {
        let frame = Frame::new(FrameType::Data, 0, 1, vec![0; DEFAULT_MAX_FRAME_SIZE + 1]);
        assert!(matches!(
            encode_frame(&frame),
            Err(FrameError::FrameTooLarge { .. })
        ));
    }

    #[test]
    fn stream_id_rules_enforced() {
        let data_on_zero = Frame::new(FrameType::Data, 0, 0, vec![1]);
        assert!(matches!(
            encode_frame(&data_on_zero),
            Err(FrameError::ProtocolViolation(_))
        ));
        let settings_on_stream = Frame::new(FrameType::Settings, 0, 1, vec![]);
        assert!(matches!(
            encode_frame(&settings_on_stream),
            Err(FrameError::ProtocolViolation(_))
        ));
        // WINDOW_UPDATE is valid on both scopes.
        for id in [0u32, 1] {
            let wu = Frame::new(FrameType::WindowUpdate, 0, id, vec![0, 0, 0, 1]);
            assert!(encode_frame(&wu).is_ok());
        }
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        (
            prop_oneof![
                Just(FrameType::Data),
                Just(FrameType::Headers),
                Just(FrameType::Priority),
                Just(FrameType::RstStream),
                Just(FrameType::PushPromise),
                Just(FrameType::Unknown(0x42)),
            ],
            any::<u8>(),
            1u32..=0x7fff_ffff,
            proptest::collection::vec(any::<u8>(), 0..256),
        )
            .prop_map(|(frame_type, flags, stream_id, payload)| Frame {
                frame_type,
                flags,
                stream_id,
                payload,
            })
    }

    proptest! {
        #[test]
        fn round_trip_identity(frame in arb_frame()) {
            let wire = encode_frame(&frame).unwrap();
            let (decoded, rest) = decode_frame(&wire).unwrap();
            prop_assert_eq!(decoded, frame);
            prop_assert!(rest.is_empty());
        }

        // Framing is self-delimiting: an arbitrary split point never changes
        // the decoded sequence.
        #[test]
        fn incremental_feed_matches_whole(a in arb_frame(), b in arb_frame(), split in 0usize..64) {
            let mut wire = encode_frame(&a).unwrap();
            wire.extend_from_slice(&encode_frame(&b).unwrap());
            let split = split.min(wire.len());

            let mut buf = wire[..split].to_vec();
            let mut decoded = Vec::new();
            let mut fed = split;
            loop {
                match decode_frame(&buf) {
                    Ok((frame, rest)) => {
                        let consumed = buf.len() - rest.len();
                        decoded.push(frame);
                        buf.drain(..consumed);
                        if decoded.len() == 2 {
                            break;
                        }
                    }
                    Err(FrameError::NeedMoreBytes(n)) => {
                        let take = n.min(wire.len() - fed);
                        buf.extend_from_slice(&wire[fed..fed + take]);
                        fed += take;
                    }
                    Err(e) => panic!("unexpected {e}"),
                }
            }
            prop_assert_eq!(decoded, vec![a, b]);
        }
    }
}
