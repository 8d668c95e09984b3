use std::fmt;
use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use super::wire::{ProtocolError, RequestFrame, ResponseFrame, STATUS_OK};
use super::NoisePredictor;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::schedule::NoiseSchedule;

/// Client for a remote noise predictor speaking the wire protocol over TCP.
///
/// One request is in flight per connection: calls from several threads are
/// serialized on an internal lock. Open several clients for parallelism.
pub struct ExternalPredictor {
    endpoint: String,
    conn: Mutex<Connection>,
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl ExternalPredictor {
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self> {
        let addr = endpoint
            .to_socket_addrs()
            .map_err(ProtocolError::from)?
            .next()
            .ok_or_else(|| Error::Predictor(format!("endpoint {endpoint} resolves to nothing")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(ProtocolError::from)?;
        stream.set_read_timeout(Some(timeout)).map_err(ProtocolError::from)?;
        stream.set_write_timeout(Some(timeout)).map_err(ProtocolError::from)?;
        stream.set_nodelay(true).map_err(ProtocolError::from)?;
        let reader = BufReader::new(stream.try_clone().map_err(ProtocolError::from)?);
        Ok(Self {
            endpoint: endpoint.to_string(),
            conn: Mutex::new(Connection {
                reader,
                writer: BufWriter::new(stream),
            }),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one batch and validates the reply: status, shape and finiteness.
    pub fn roundtrip(&self, batch: &[ImageTensor], t: usize) -> Result<Vec<ImageTensor>> {
        let request = RequestFrame::from_batch(t, batch)
            .ok_or_else(|| Error::Predictor("batch is empty, ragged or too large for the wire".into()))?;
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        request.write_to(&mut conn.writer).map_err(ProtocolError::from)?;
        let response = ResponseFrame::read_from(&mut conn.reader)?;
        drop(conn);
        if response.status != STATUS_OK {
            return Err(ProtocolError::RemoteStatus(response.status).into());
        }
        if response.dims != request.dims {
            return Err(ProtocolError::ShapeMismatch {
                expected: format!("{:?}", request.dims),
                actual: format!("{:?}", response.dims),
            }
            .into());
        }
        Ok(response.to_batch()?)
    }
}

impl NoisePredictor for ExternalPredictor {
    fn predict(&self, x_t: &ImageTensor, t: usize, schedule: &NoiseSchedule) -> Result<ImageTensor> {
        let mut out = self.predict_batch(std::slice::from_ref(x_t), t, schedule)?;
        Ok(out.remove(0))
    }

    fn predict_batch(
        &self,
        batch: &[ImageTensor],
        t: usize,
        schedule: &NoiseSchedule,
    ) -> Result<Vec<ImageTensor>> {
        schedule.check_step(t)?;
        self.roundtrip(batch, t)
    }
}
