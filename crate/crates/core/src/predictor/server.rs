//! Serves an in-process predictor over the wire protocol.
//!
//! Used to exercise the client and the `verify-protocol` handshake without a
//! real model runtime.

use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};

use super::wire::{
    ProtocolError, RequestFrame, ResponseFrame, STATUS_MALFORMED, STATUS_PREDICTOR_FAILURE,
    STATUS_UNSUPPORTED_VERSION,
};
use super::NoisePredictor;
use crate::schedule::NoiseSchedule;

/// Answers requests on one connection until the peer hangs up.
///
/// Malformed frames get a status response; since the stream cannot be
/// resynchronized after a framing error, the connection is then closed.
pub fn serve_connection(
    stream: TcpStream,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let request = match RequestFrame::read_from(&mut reader) {
            Ok(r) => r,
            Err(ProtocolError::Truncated) => return Ok(()),
            Err(ProtocolError::UnsupportedVersion(_)) => {
                return ResponseFrame::error(STATUS_UNSUPPORTED_VERSION).write_to(&mut writer);
            }
            Err(ProtocolError::Io(e)) => return Err(e),
            Err(_) => return ResponseFrame::error(STATUS_MALFORMED).write_to(&mut writer),
        };
        let response = match request.to_batch() {
            Ok(batch) => match predictor.predict_batch(&batch, request.t as usize, schedule) {
                Ok(out) if !out.is_empty() => ResponseFrame::from_batch(&out)
                    .unwrap_or_else(|| ResponseFrame::error(STATUS_PREDICTOR_FAILURE)),
                _ => ResponseFrame::error(STATUS_PREDICTOR_FAILURE),
            },
            Err(_) => ResponseFrame::error(STATUS_MALFORMED),
        };
        response.write_to(&mut writer)?;
    }
}

/// Accepts connections forever, serving each in turn.
pub fn serve(
    listener: TcpListener,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let _ = serve_connection(stream?, predictor, schedule);
    }
    Ok(())
}
